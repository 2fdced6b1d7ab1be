"""Pipeline stages and the end-to-end runner.

Each stage is a standalone function reading only documented artifacts of
earlier stages from the output directory, so the CLI can run any stage
in isolation (including in a separate process) and a single-shot run is
byte-identical to a stage-by-stage one.

Stage order: candidates -> sample-tuples -> train-encoder -> score
(joint scores, hierarchy aggregation, rank ensembling) -> self-train ->
predict -> evaluate.
"""

from __future__ import annotations

import json
import logging
import os
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import candidates as cand
from . import citegraph, encoder, metrics, ranker, selftrain
from .config import PipelineConfig
from .corpus import build_vocabulary, corpus_stats, load_corpus, load_labels

log = logging.getLogger(__name__)

ARTIFACTS = {
    "ingest": "ingest.json",
    "candidates": "candidates.jsonl",
    "tuples": "tuples.jsonl",
    "encoder": "encoder.npz",
    "loss_trace": "loss_trace.json",
    "scores": "scores.jsonl",
    "score_stats": "score_stats.json",
    "classifier": "classifier.npz",
    "predictions": "predictions.jsonl",
    "metrics": "metrics.json",
}


def _path(cfg: PipelineConfig, key: str) -> str:
    os.makedirs(cfg.output_dir, exist_ok=True)
    return os.path.join(cfg.output_dir, ARTIFACTS[key])


def _load_inputs(cfg: PipelineConfig):
    corpus = load_corpus(cfg.corpus_path, cfg.min_paragraph_words)
    labels = load_labels(cfg.labels_path)
    return corpus, labels


def stage_ingest(cfg: PipelineConfig) -> dict:
    corpus, labels = _load_inputs(cfg)
    stats = corpus_stats(corpus)
    stats["n_labels"] = len(labels)
    with open(_path(cfg, "ingest"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
    log.info("ingested %d papers, %d labels", stats["n_papers"], len(labels))
    return stats


def stage_candidates(cfg: PipelineConfig) -> dict[str, list[str]]:
    corpus, labels = _load_inputs(cfg)
    index = cand.build_name_index(labels)
    out = {p.id: cand.retrieve_candidates(p, index, full_text=cfg.match_full_text)
           for p in corpus}
    cand.write_candidates(out, _path(cfg, "candidates"))
    stats = cand.candidate_stats(out)
    log.info("retrieval: mean %.2f candidates/paper, %d empty",
             stats.mean_candidates, stats.n_empty)
    return out


def stage_sample_tuples(cfg: PipelineConfig) -> list[citegraph.ContrastiveTuple]:
    corpus, _ = _load_inputs(cfg)
    graph = citegraph.build_graph(corpus)
    tuples = citegraph.sample_tuples(graph, corpus, citegraph.MetaPath.parse(cfg.meta_path),
                                     cfg.tuple_count, seed=cfg.stage_seed("sample-tuples"))
    citegraph.write_tuples(tuples, _path(cfg, "tuples"))
    return tuples


def stage_train_encoder(cfg: PipelineConfig) -> encoder.ScorerModel:
    corpus, _ = _load_inputs(cfg)
    tuples = citegraph.read_tuples(_path(cfg, "tuples"))
    model = encoder.init_model(cfg.hash_dim, cfg.embed_dim, seed=cfg.stage_seed("init-model"))
    train_cfg = encoder.TrainConfig(
        batch_size=cfg.batch_size, learning_rate=cfg.learning_rate,
        warmup_steps=cfg.warmup_steps, weight_decay=cfg.weight_decay,
        epsilon=cfg.epsilon, beta1=cfg.beta1, beta2=cfg.beta2,
        total_steps=cfg.train_steps, epochs=cfg.train_epochs,
        seed=cfg.stage_seed("train-encoder"))
    model, losses = encoder.train(model, tuples, corpus, train_cfg)
    encoder.save_model(model, _path(cfg, "encoder"), train_config=train_cfg)
    with open(_path(cfg, "loss_trace"), "w", encoding="utf-8") as fh:
        json.dump({"losses": losses.tolist()}, fh)
    log.info("trained scorer: first-batch loss %.4f, final %.4f", losses[0], losses[-1])
    return model


def stage_score(cfg: PipelineConfig) -> dict[str, list[ranker.CandidateScore]]:
    corpus, labels = _load_inputs(cfg)
    cands = cand.read_candidates(_path(cfg, "candidates"))
    model = encoder.load_model(_path(cfg, "encoder"))
    overrides = (encoder.load_embedding_overrides(cfg.embeddings_path, model.embed_dim)
                 if cfg.embeddings_path else {})
    labels_by_id = {l.id: l for l in labels}
    model.counters.reset()

    label_embs: dict[str, np.ndarray] = {}
    if cfg.use_hierarchy:
        for label in labels:
            ov = overrides.get(label.id)
            label_embs[label.id] = ov if ov is not None else encoder.bi_embed(model, label.text)

    def score_paper(paper) -> list[ranker.CandidateScore]:
        cand_ids = cands.get(paper.id, [])
        score_x = ranker.score_cross(model, paper, labels_by_id, cand_ids, overrides)
        if cfg.use_hierarchy:
            leaf_embs = []
            for i, leaf in enumerate(paper.paragraphs):
                ov = overrides.get(f"{paper.id}#{i}")
                leaf_embs.append(ov if ov is not None else encoder.bi_embed(model, leaf.text))
            fallback = None
            if paper.is_empty:
                ov = overrides.get(paper.id)
                fallback = ov if ov is not None else encoder.bi_embed(model, paper.title_abstract)
            agg = ranker.aggregate_hierarchy(paper, leaf_embs, fallback=fallback)
            score_b = ranker.score_bi(agg.root, label_embs, cand_ids)
        else:
            score_b = dict(score_x)  # degenerate ensemble: joint scores only
        return ranker.mrr_combine(score_b, score_x)

    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            rows = list(pool.map(score_paper, corpus))
        scored = {p.id: r for p, r in zip(corpus, rows)}
    else:
        scored = {p.id: score_paper(p) for p in corpus}

    ranker.write_scores(scored, _path(cfg, "scores"))
    stats = {
        "bi_embed_calls": model.counters.bi_embed,
        "cross_score_calls": model.counters.cross_score,
        "sum_candidates": sum(len(c) for c in cands.values()),
        "sum_paragraphs": sum(len(p.paragraphs) for p in corpus),
        "n_labels": len(labels),
        "n_empty_papers": sum(p.is_empty for p in corpus),
    }
    with open(_path(cfg, "score_stats"), "w", encoding="utf-8") as fh:
        json.dump(stats, fh, indent=2, sort_keys=True)
    return scored


def stage_self_train(cfg: PipelineConfig) -> selftrain.LabelTreeClassifier:
    corpus, labels = _load_inputs(cfg)
    scored = ranker.read_scores(_path(cfg, "scores"))
    vocab = build_vocabulary(corpus, cfg.min_df)
    X = selftrain.build_tfidf_matrix(corpus, vocab)
    pseudo = selftrain.pseudo_labels(scored, cfg.pseudo_top_n)
    clf_cfg = selftrain.ClassifierConfig(
        n_trees=cfg.n_trees, max_leaf=cfg.max_leaf, beam_width=cfg.beam_width,
        epochs=cfg.classifier_epochs, learning_rate=cfg.classifier_lr,
        l2=cfg.classifier_l2, seed=cfg.stage_seed("self-train"))
    clf = selftrain.train_classifier(X, [p.id for p in corpus], pseudo,
                                     [l.id for l in labels], clf_cfg,
                                     threads=cfg.threads)
    selftrain.save_classifier(clf, _path(cfg, "classifier"))
    return clf


def stage_predict(cfg: PipelineConfig) -> dict[str, list[str]]:
    corpus, labels = _load_inputs(cfg)
    scored = ranker.read_scores(_path(cfg, "scores"))
    label_ids = [l.id for l in labels]

    rankings: dict[str, list[str]] = {}
    top_scores: dict[str, list[float]] = {}
    if cfg.use_selftrain:
        clf = selftrain.load_classifier(_path(cfg, "classifier"))
        vocab = build_vocabulary(corpus, cfg.min_df)

        def predict_paper(paper):
            probs = selftrain.predict_proba(clf, selftrain.tfidf_vector(paper, vocab))
            rows = scored.get(paper.id, [])
            ranking = selftrain.final_ranking(rows, probs, label_ids, cfg.pseudo_top_n)
            pinned = min(cfg.pseudo_top_n, len(rows))
            scores = [rows[i].mrr if i < pinned else probs.get(lid, 0.0)
                      for i, lid in enumerate(ranking[:cfg.top_k])]
            return ranking, scores

        if cfg.threads > 1:
            with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
                results = list(pool.map(predict_paper, corpus))
        else:
            results = [predict_paper(p) for p in corpus]
        for paper, (ranking, scores) in zip(corpus, results):
            rankings[paper.id] = ranking
            top_scores[paper.id] = scores
    else:
        for paper in corpus:
            rows = scored.get(paper.id, [])
            rankings[paper.id] = [r.label_id for r in rows]
            top_scores[paper.id] = [r.mrr for r in rows[:cfg.top_k]]

    limit = cfg.ranking_limit
    with open(_path(cfg, "predictions"), "w", encoding="utf-8") as fh:
        for pid in rankings:
            fh.write(json.dumps({
                "paper_id": pid,
                "ranking": rankings[pid][:limit] if limit else rankings[pid],
                "top_k_scores": top_scores[pid],
            }) + "\n")
    return rankings


def read_predictions(path) -> dict[str, list[str]]:
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                rec = json.loads(line)
                out[rec["paper_id"]] = list(rec["ranking"])
    return out


def stage_evaluate(cfg: PipelineConfig) -> metrics.MetricsReport | None:
    corpus, _ = _load_inputs(cfg)
    rankings = read_predictions(_path(cfg, "predictions"))
    gold = {p.id: set(p.gold_labels) for p in corpus if p.gold_labels is not None}
    if not any(gold.values()):
        log.warning("no ground-truth labels in the corpus; skipping evaluation")
        return None
    mean_c = None
    cand_path = _path(cfg, "candidates")
    if os.path.exists(cand_path):
        mean_c = cand.candidate_stats(cand.read_candidates(cand_path)).mean_candidates
    report = metrics.evaluate(rankings, gold, precision_ks=tuple(cfg.precision_ks),
                              ndcg_ks=tuple(cfg.ndcg_ks), a=cfg.propensity_a,
                              b=cfg.propensity_b, mean_candidates=mean_c)
    with open(_path(cfg, "metrics"), "w", encoding="utf-8") as fh:
        fh.write(report.to_json() + "\n")
    print(report.to_json())
    return report


STAGES = [
    ("ingest", stage_ingest),
    ("candidates", stage_candidates),
    ("sample-tuples", stage_sample_tuples),
    ("train-encoder", stage_train_encoder),
    ("score", stage_score),
    ("self-train", stage_self_train),
    ("predict", stage_predict),
    ("evaluate", stage_evaluate),
]


def run_pipeline(cfg: PipelineConfig):
    """Run every stage in order; returns (rankings, metrics report or None)."""
    rankings = None
    report = None
    for name, fn in STAGES:
        if name == "self-train" and not cfg.use_selftrain:
            continue
        log.info("stage %s", name)
        result = fn(cfg)
        if name == "predict":
            rankings = result
        elif name == "evaluate":
            report = result
    return rankings, report
