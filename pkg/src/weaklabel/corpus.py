"""Corpus ingestion: documents, in-document hierarchy trees, labels, vocabulary.

The corpus file is JSON Lines, one document per line:

    {"id": ..., "title": ..., "abstract": ...,
     "sections": [{"name": ..., "paragraphs": [...], "subsections": [...]}],
     "bib_refs": [...], "labels": [...]}

The label file is JSON Lines with ``id``, ``names`` (non-empty array,
first entry canonical) and ``description``.
"""

from __future__ import annotations

import json
import logging
import re
from collections import Counter
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

DEFAULT_MIN_PARAGRAPH_WORDS = 10
DEFAULT_MIN_DF = 5

# Lowercase, then split on anything that is not a Unicode letter or digit.
_TOKEN_RE = re.compile(r"[^\W_]+", re.UNICODE)


class CorpusError(ValueError):
    """Raised on malformed corpus or label files."""


def tokenize(text: str) -> list[str]:
    """Deterministic tokenization: lowercase, alphanumeric runs only."""
    return _TOKEN_RE.findall(text.lower())


@dataclass(eq=False)
class HierarchyNode:
    """One node of a document's section/paragraph tree.

    ``children`` is empty iff ``kind == "paragraph"``; ``text`` is nonempty
    only on paragraph leaves.
    """

    kind: str  # "paper" | "section" | "subsection" | "paragraph"
    children: list["HierarchyNode"] = field(default_factory=list)
    text: str = ""
    is_abstract: bool = False

    def iter_paragraphs(self):
        """Yield paragraph leaves in document order."""
        stack = [self]
        out = []
        while stack:
            node = stack.pop()
            if node.kind == "paragraph":
                out.append(node)
            else:
                stack.extend(reversed(node.children))
        return iter(out)


@dataclass(eq=False)
class Paper:
    """A document with its title/abstract, hierarchy tree and references."""

    id: str
    title: str
    abstract: str
    hierarchy: HierarchyNode
    bib_refs: frozenset[str] = frozenset()
    gold_labels: frozenset[str] | None = None

    def __post_init__(self):
        self._paragraphs = list(self.hierarchy.iter_paragraphs())

    @property
    def paragraphs(self) -> list[HierarchyNode]:
        """All paragraph leaves, the title+abstract group included."""
        return self._paragraphs

    @property
    def is_empty(self) -> bool:
        return not self._paragraphs

    @property
    def title_abstract(self) -> str:
        return f"{self.title} {self.abstract}".strip()

    def full_text_tokens(self) -> list[str]:
        """Tokens of title + abstract + every body paragraph."""
        toks = tokenize(self.title) + tokenize(self.abstract)
        for leaf in self._paragraphs:
            if not leaf.is_abstract:
                toks.extend(tokenize(leaf.text))
        return toks


@dataclass(frozen=True)
class Label:
    """A label with one or more names (first canonical) and a description."""

    id: str
    names: tuple[str, ...]
    description: str

    @property
    def canonical_name(self) -> str:
        return self.names[0]

    @property
    def text(self) -> str:
        """Canonical name followed by the description."""
        return f"{self.names[0]} {self.description}".strip()

    def name_token_sequences(self) -> list[tuple[str, ...]]:
        return [tuple(tokenize(name)) for name in self.names]


@dataclass
class Vocabulary:
    """Retained words with stable indices and document frequencies."""

    word_index: dict[str, int]
    doc_freq: np.ndarray  # aligned with word_index values
    n_docs: int

    def __len__(self) -> int:
        return len(self.word_index)

    def df(self, word: str) -> int:
        return int(self.doc_freq[self.word_index[word]])


def _build_section_node(sec: dict, min_words: int, kind: str) -> HierarchyNode | None:
    node = HierarchyNode(kind=kind)
    for para in sec.get("paragraphs", []):
        if not isinstance(para, str):
            raise CorpusError("paragraph entries must be strings")
        if len(tokenize(para)) >= min_words:
            node.children.append(HierarchyNode(kind="paragraph", text=para))
    for sub in sec.get("subsections", []):
        child = _build_section_node(sub, min_words, kind="subsection")
        if child is not None:
            node.children.append(child)
    # prune internal nodes left childless by the paragraph filter
    if not node.children:
        return None
    return node


def _build_paper(record: dict, min_words: int) -> Paper:
    pid = record["id"]
    title = record.get("title", "")
    abstract = record.get("abstract", "")
    root = HierarchyNode(kind="paper")

    # The title+abstract group sits directly under the root so that
    # bottom-up aggregation sees it as one child of the whole document.
    ta_text = f"{title} {abstract}".strip()
    if len(tokenize(ta_text)) >= min_words:
        root.children.append(
            HierarchyNode(kind="paragraph", text=ta_text, is_abstract=True)
        )

    for sec in record.get("sections", []):
        node = _build_section_node(sec, min_words, kind="section")
        if node is not None:
            root.children.append(node)

    labels = record.get("labels")
    return Paper(
        id=pid,
        title=title,
        abstract=abstract,
        hierarchy=root,
        bib_refs=frozenset(str(r) for r in record.get("bib_refs", []) if str(r) != ""),
        gold_labels=frozenset(str(l) for l in labels) if labels is not None else None,
    )


def load_corpus(path, min_paragraph_words: int = DEFAULT_MIN_PARAGRAPH_WORDS) -> list[Paper]:
    """Load a JSON Lines corpus, dropping paragraphs under the word threshold.

    Documents whose every paragraph is filtered out are retained and flagged
    empty (``Paper.is_empty``); they still carry their title and abstract.
    """
    if min_paragraph_words < 1:
        raise ValueError("min_paragraph_words must be positive")
    papers: list[Paper] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                if not isinstance(record, dict) or "id" not in record or not str(record["id"]):
                    raise CorpusError("record must be an object with a nonempty 'id'")
                record["id"] = str(record["id"])
                paper = _build_paper(record, min_paragraph_words)
            except CorpusError as exc:
                raise CorpusError(f"{path}: line {lineno}: {exc}") from None
            except (json.JSONDecodeError, TypeError, KeyError, AttributeError) as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed record ({exc})") from None
            if paper.id in seen:
                raise CorpusError(f"{path}: line {lineno}: duplicate paper id {paper.id!r}")
            seen.add(paper.id)
            papers.append(paper)
    n_empty = sum(p.is_empty for p in papers)
    if n_empty:
        log.warning("%d of %d papers have no surviving paragraphs", n_empty, len(papers))
    return papers


def load_labels(path) -> list[Label]:
    """Load the label space from a JSON Lines file."""
    labels: list[Label] = []
    seen: set[str] = set()
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                lid = str(record["id"])
                names = tuple(str(n) for n in record["names"])
                desc = str(record.get("description", ""))
            except (json.JSONDecodeError, TypeError, KeyError) as exc:
                raise CorpusError(f"{path}: line {lineno}: malformed record ({exc})") from None
            if not lid:
                raise CorpusError(f"{path}: line {lineno}: empty label id")
            if lid in seen:
                raise CorpusError(f"{path}: line {lineno}: duplicate label id {lid!r}")
            if not names:
                raise CorpusError(f"{path}: line {lineno}: label {lid!r} has zero names")
            for name in names:
                if not tokenize(name):
                    raise CorpusError(
                        f"{path}: line {lineno}: label {lid!r} name {name!r} "
                        "normalizes to the empty sequence"
                    )
            seen.add(lid)
            labels.append(Label(id=lid, names=names, description=desc))
    if not labels:
        log.warning("label file %s is empty", path)
    return labels


def build_vocabulary(corpus: list[Paper], min_df: int = DEFAULT_MIN_DF) -> Vocabulary:
    """Index every word appearing in at least ``min_df`` documents."""
    if not corpus:
        raise ValueError("cannot build a vocabulary over an empty corpus")
    if min_df < 1:
        raise ValueError("min_df must be positive")
    df: Counter[str] = Counter()
    for paper in corpus:
        df.update(set(paper.full_text_tokens()))
    kept = sorted(w for w, c in df.items() if c >= min_df)
    if not kept:
        log.warning("vocabulary is empty at min_df=%d", min_df)
    word_index = {w: i for i, w in enumerate(kept)}
    freq = np.array([df[w] for w in kept], dtype=np.int64)
    return Vocabulary(word_index=word_index, doc_freq=freq, n_docs=len(corpus))


def corpus_stats(corpus: list[Paper]) -> dict:
    """Aggregate statistics reported after loading."""
    n = len(corpus)
    n_paragraphs = sum(len(p.paragraphs) for p in corpus)
    n_words = sum(len(p.full_text_tokens()) for p in corpus)
    return {
        "n_papers": n,
        "n_paragraphs": n_paragraphs,
        "paragraphs_per_paper": n_paragraphs / n if n else 0.0,
        "words_per_paper": n_words / n if n else 0.0,
        "n_empty_papers": sum(p.is_empty for p in corpus),
    }
