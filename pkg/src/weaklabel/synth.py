"""Synthetic planted-label corpora for end-to-end verification.

Every generated document carries a known set of relevant labels whose
names are injected verbatim into known regions: a configurable fraction
appears only in body paragraphs (never in the title or abstract), the
rest in the title/abstract. Documents sharing a label also share that
label's topic words and are linked by citation edges with a configured
probability, so retrieval, contrastive training and self-training all
have exactly checkable behavior.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np


@dataclass
class SyntheticSpec:
    n_papers: int = 500
    n_labels: int = 50
    labels_per_paper: int = 3
    fulltext_only_fraction: float = 1.0 / 3.0
    vocab_size: int = 300  # filler word pool
    seed: int = 1
    edge_prob: float = 0.08  # citation probability between same-label papers
    topic_words_per_label: int = 6
    synonym_every: int = 5  # every k-th label gets a second name
    title_inject_prob: float = 0.25

    def validate(self):
        if self.labels_per_paper > self.n_labels:
            raise ValueError("labels_per_paper exceeds the label count")
        if not (0.0 <= self.fulltext_only_fraction <= 1.0):
            raise ValueError("fulltext_only_fraction must lie in [0, 1]")
        if min(self.n_papers, self.n_labels, self.labels_per_paper,
               self.vocab_size) < 1:
            raise ValueError("counts must be positive")


def _words(prefix: str, n: int) -> list[str]:
    return [f"{prefix}{i:04d}" for i in range(n)]


def generate_synthetic(spec: SyntheticSpec):
    """Build corpus, label and manifest records (deterministic per seed).

    Returns ``(paper_records, label_records, manifest_records)`` where the
    manifest lists, per paper, which relevant labels were injected into
    the title/abstract and which only into body paragraphs.
    """
    spec.validate()
    rng = np.random.default_rng(spec.seed)

    filler = _words("lorem", spec.vocab_size)
    name_pool = _words("term", 3 * spec.n_labels)
    topic_pool = _words("topic", spec.n_labels * spec.topic_words_per_label)

    labels = []
    label_names: list[list[str]] = []
    label_topics: list[list[str]] = []
    w = 0
    for j in range(spec.n_labels):
        names = [f"{name_pool[w]} {name_pool[w + 1]}"]
        w += 2
        if spec.synonym_every and j % spec.synonym_every == 0:
            names.append(name_pool[w])
            w += 1
        topics = topic_pool[j * spec.topic_words_per_label:(j + 1) * spec.topic_words_per_label]
        desc_words = topics[:4] + [filler[rng.integers(len(filler))] for _ in range(4)]
        labels.append({"id": f"L{j:04d}", "names": names,
                       "description": " ".join(desc_words)})
        label_names.append(names)
        label_topics.append(topics)

    def sentence(topics: list[str], n: int) -> list[str]:
        out = []
        for _ in range(n):
            if topics and rng.random() < 0.4:
                out.append(topics[rng.integers(len(topics))])
            else:
                out.append(filler[rng.integers(len(filler))])
        return out

    def assemble(base: list[str], injections: list[tuple[int, list[str]]]) -> list[str]:
        # positions refer to the base list, so injected phrases never split
        # one another; same-position phrases keep draw order
        at: dict[int, list[list[str]]] = {}
        for pos, toks in injections:
            at.setdefault(pos, []).append(toks)
        out: list[str] = []
        for i in range(len(base) + 1):
            for toks in at.get(i, ()):
                out.extend(toks)
            if i < len(base):
                out.append(base[i])
        return out

    n_fulltext = int(round(spec.labels_per_paper * spec.fulltext_only_fraction))
    papers = []
    manifest = []
    paper_label_idx: list[list[int]] = []
    for i in range(spec.n_papers):
        mine = sorted(int(x) for x in rng.choice(spec.n_labels, size=spec.labels_per_paper,
                                                 replace=False))
        paper_label_idx.append(mine)
        ft_pick = set(int(x) for x in rng.choice(len(mine), size=n_fulltext, replace=False)) \
            if n_fulltext else set()
        fulltext_labels = [mine[k] for k in sorted(ft_pick)]
        abstract_labels = [l for l in mine if l not in set(fulltext_labels)]
        topics = [t for l in mine for t in label_topics[l]]

        title_base = sentence(topics, int(rng.integers(4, 8)))
        abstract_base = sentence(topics, int(rng.integers(25, 35)))
        title_inj: list[tuple[int, list[str]]] = []
        abstract_inj: list[tuple[int, list[str]]] = []
        for l in abstract_labels:
            name = label_names[l][int(rng.integers(len(label_names[l])))]
            if rng.random() < spec.title_inject_prob:
                title_inj.append((int(rng.integers(len(title_base) + 1)), name.split()))
            else:
                abstract_inj.append((int(rng.integers(len(abstract_base) + 1)), name.split()))
        title_words = assemble(title_base, title_inj)
        abstract_words = assemble(abstract_base, abstract_inj)

        sections = []
        for _ in range(2):
            paragraphs = []
            for _ in range(int(rng.integers(2, 4))):
                para = sentence(topics, int(rng.integers(14, 24)))
                paragraphs.append(para)
            sec = {"name": sentence(topics, 2), "paragraphs": paragraphs}
            sections.append(sec)
        # plant full-text-only names into body paragraphs, twice each
        flat = [p for sec in sections for p in sec["paragraphs"]]
        body_inj: list[list[tuple[int, list[str]]]] = [[] for _ in flat]
        for l in fulltext_labels:
            name = label_names[l][int(rng.integers(len(label_names[l])))]
            for _ in range(2):
                k = int(rng.integers(len(flat)))
                body_inj[k].append((int(rng.integers(len(flat[k]) + 1)), name.split()))
        for k, para in enumerate(flat):
            para[:] = assemble(para, body_inj[k])

        papers.append({
            "id": f"P{i:05d}",
            "title": " ".join(title_words),
            "abstract": " ".join(abstract_words),
            "sections": [{"name": " ".join(sec["name"]),
                          "paragraphs": [" ".join(p) for p in sec["paragraphs"]]}
                         for sec in sections],
            "bib_refs": [],
            "labels": [f"L{j:04d}" for j in mine],
        })
        manifest.append({
            "paper_id": f"P{i:05d}",
            "abstract_labels": [f"L{j:04d}" for j in abstract_labels],
            "fulltext_labels": [f"L{j:04d}" for j in fulltext_labels],
        })

    # citation edges between documents sharing at least one label
    by_label: dict[int, list[int]] = {}
    for i, mine in enumerate(paper_label_idx):
        for l in mine:
            by_label.setdefault(l, []).append(i)
    for i, mine in enumerate(paper_label_idx):
        related = sorted({j for l in mine for j in by_label[l] if j != i})
        if not related:
            continue
        mask = rng.random(len(related)) < spec.edge_prob
        papers[i]["bib_refs"] = [f"P{j:05d}" for j, m in zip(related, mask) if m]

    return papers, labels, manifest


def write_jsonl(records, path):
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec) + "\n")


def write_synthetic(spec: SyntheticSpec, corpus_path, labels_path, manifest_path=None):
    papers, labels, manifest = generate_synthetic(spec)
    write_jsonl(papers, corpus_path)
    write_jsonl(labels, labels_path)
    if manifest_path is not None:
        write_jsonl(manifest, manifest_path)
    return papers, labels, manifest
