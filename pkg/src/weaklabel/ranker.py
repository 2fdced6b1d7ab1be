"""Hierarchy aggregation, candidate scoring and reciprocal-rank ensembling.

Each internal tree node's embedding is the plain mean of its children's
embeddings, bottom-up; the root embedding represents the whole document.
Candidates are scored two ways (cosine against the root embedding, and a
joint score over title+abstract and label text) and the two rankings are
combined by summing reciprocal ranks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .corpus import HierarchyNode, Paper, Label
from . import encoder


@dataclass
class AggregatedEmbeddings:
    by_node: dict[HierarchyNode, np.ndarray]
    root: np.ndarray  # the document embedding


def aggregate_hierarchy(paper: Paper, leaf_embeddings,
                        fallback: np.ndarray | None = None) -> AggregatedEmbeddings:
    """Bottom-up mean aggregation over the document tree.

    ``leaf_embeddings`` align with ``paper.paragraphs`` order. Documents
    with no paragraphs take ``fallback`` (their title+abstract embedding)
    as the root.
    """
    leaves = paper.paragraphs
    if len(leaves) != len(leaf_embeddings):
        raise ValueError("leaf embedding count does not match paragraph count")
    if not leaves:
        if fallback is None:
            raise ValueError(f"paper {paper.id!r} is empty and no fallback was given")
        return AggregatedEmbeddings(by_node={}, root=np.asarray(fallback, dtype=np.float64))

    by_leaf = {id(node): np.asarray(e, dtype=np.float64)
               for node, e in zip(leaves, leaf_embeddings)}
    by_node: dict[HierarchyNode, np.ndarray] = {}

    def visit(node: HierarchyNode) -> np.ndarray:
        if node.kind == "paragraph":
            emb = by_leaf[id(node)]
        else:
            emb = sum(visit(c) for c in node.children) / len(node.children)
        by_node[node] = emb
        return emb

    root = visit(paper.hierarchy)
    return AggregatedEmbeddings(by_node=by_node, root=root)


def cosine(u: np.ndarray, v: np.ndarray) -> float:
    nu = float(np.linalg.norm(u))
    nv = float(np.linalg.norm(v))
    if nu == 0.0 or nv == 0.0:
        return 0.0
    return float(u @ v) / (nu * nv)


def score_bi(root_embedding: np.ndarray, label_embeddings: dict[str, np.ndarray],
             candidate_ids) -> dict[str, float]:
    """Cosine between the aggregated document embedding and each candidate."""
    return {lid: cosine(root_embedding, label_embeddings[lid]) for lid in candidate_ids}


def score_cross(model: encoder.ScorerModel, paper: Paper, labels_by_id: dict[str, Label],
                candidate_ids, overrides: dict[str, np.ndarray] | None = None) -> dict[str, float]:
    """Joint title+abstract vs label-text score for each candidate.

    Texts are re-encoded on every call (the joint path cannot reuse
    precomputed embeddings); ``overrides`` substitutes external
    embeddings keyed by paper or label id.
    """
    out: dict[str, float] = {}
    if overrides is None:
        overrides = {}
    u_over = overrides.get(paper.id)
    for lid in candidate_ids:
        v_over = overrides.get(lid)
        if u_over is not None or v_over is not None:
            u = u_over if u_over is not None else encoder._embed_features(
                model, model.featurizer.featurize(paper.title_abstract))
            v = v_over if v_over is not None else encoder._embed_features(
                model, model.featurizer.featurize(labels_by_id[lid].text))
            out[lid] = encoder.cross_score_pair(model, u, v)
        else:
            out[lid] = encoder.cross_score(model, paper.title_abstract,
                                           labels_by_id[lid].text)
    return out


@dataclass(frozen=True)
class CandidateScore:
    label_id: str
    score_b: float
    score_x: float
    rank_b: int
    rank_x: int
    mrr: float


def _ranks(scores: dict[str, float]) -> dict[str, int]:
    # descending score, ties broken by ascending label id; 1-based positions
    ordered = sorted(scores, key=lambda lid: (-scores[lid], lid))
    return {lid: i + 1 for i, lid in enumerate(ordered)}


def mrr_combine(score_b: dict[str, float], score_x: dict[str, float]) -> list[CandidateScore]:
    """Sum of reciprocal ranks under the two scorers, sorted descending."""
    if set(score_b) != set(score_x):
        raise ValueError("the two score maps must cover the same candidates")
    if not score_b:
        return []
    r_b = _ranks(score_b)
    r_x = _ranks(score_x)
    rows = [CandidateScore(label_id=lid, score_b=score_b[lid], score_x=score_x[lid],
                           rank_b=r_b[lid], rank_x=r_x[lid],
                           mrr=1.0 / r_b[lid] + 1.0 / r_x[lid])
            for lid in score_b]
    rows.sort(key=lambda r: (-r.mrr, r.label_id))
    return rows


def write_scores(scored: dict[str, list[CandidateScore]], path):
    with open(path, "w", encoding="utf-8") as fh:
        for pid, rows in scored.items():
            fh.write(json.dumps({
                "paper_id": pid,
                "candidates": [{"label_id": r.label_id, "score_b": r.score_b,
                                "score_x": r.score_x, "rank_b": r.rank_b,
                                "rank_x": r.rank_x, "mrr": r.mrr} for r in rows],
            }) + "\n")


def read_scores(path) -> dict[str, list[CandidateScore]]:
    out: dict[str, list[CandidateScore]] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            rec = json.loads(line)
            out[rec["paper_id"]] = [CandidateScore(
                label_id=c["label_id"], score_b=c["score_b"], score_x=c["score_x"],
                rank_b=c["rank_b"], rank_x=c["rank_x"], mrr=c["mrr"])
                for c in rec["candidates"]]
    return out
