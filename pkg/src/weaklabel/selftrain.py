"""Self-training: tf-idf features, pseudo labels, label-tree classifier.

Confident candidate predictions (top-N by the combined reciprocal-rank
score) become pseudo labels for training an ensemble of balanced binary
label trees with logistic routing and one-vs-all leaf classifiers,
predicted via per-level beam search. The classifier reranks every label
outside the pinned top-N, so documents can receive labels that the
name-matching retrieval stage could never surface.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .corpus import Paper, Vocabulary
from .encoder import SparseVec
from .ranker import CandidateScore

CLASSIFIER_VERSION = 1


# ---------------------------------------------------------------------------
# features
# ---------------------------------------------------------------------------


def tfidf_vector(paper: Paper, vocab: Vocabulary) -> SparseVec:
    """tf(w, d) * ln(|D| / df(w)) over the document's full text.

    Words outside the vocabulary, and words present in every document
    (zero idf), contribute no entries.
    """
    counts: dict[int, int] = {}
    for tok in paper.full_text_tokens():
        j = vocab.word_index.get(tok)
        if j is not None:
            counts[j] = counts.get(j, 0) + 1
    if not counts:
        return SparseVec(np.empty(0, dtype=np.int64), np.empty(0), len(vocab))
    idx = np.array(sorted(counts), dtype=np.int64)
    idf = np.log(vocab.n_docs / vocab.doc_freq[idx])
    val = np.array([counts[j] for j in idx], dtype=np.float64) * idf
    keep = val != 0.0
    return SparseVec(idx[keep], val[keep], len(vocab))


@dataclass
class CsrMatrix:
    data: np.ndarray
    indices: np.ndarray
    indptr: np.ndarray
    n_rows: int
    n_cols: int

    def row(self, i: int) -> SparseVec:
        lo, hi = self.indptr[i], self.indptr[i + 1]
        return SparseVec(self.indices[lo:hi], self.data[lo:hi], self.n_cols)


def build_tfidf_matrix(corpus: list[Paper], vocab: Vocabulary) -> CsrMatrix:
    data, indices, indptr = [], [], [0]
    for paper in corpus:
        sv = tfidf_vector(paper, vocab)
        data.append(sv.values)
        indices.append(sv.indices)
        indptr.append(indptr[-1] + sv.nnz)
    return CsrMatrix(
        data=np.concatenate(data) if data else np.empty(0),
        indices=np.concatenate(indices) if indices else np.empty(0, dtype=np.int64),
        indptr=np.array(indptr, dtype=np.int64),
        n_rows=len(corpus), n_cols=len(vocab),
    )


def _take_rows(X: CsrMatrix, rows: np.ndarray) -> CsrMatrix:
    lengths = X.indptr[rows + 1] - X.indptr[rows]
    indptr = np.zeros(rows.size + 1, dtype=np.int64)
    np.cumsum(lengths, out=indptr[1:])
    data = np.empty(int(indptr[-1]))
    indices = np.empty(int(indptr[-1]), dtype=np.int64)
    for k, r in enumerate(rows):
        lo, hi = X.indptr[r], X.indptr[r + 1]
        data[indptr[k]:indptr[k + 1]] = X.data[lo:hi]
        indices[indptr[k]:indptr[k + 1]] = X.indices[lo:hi]
    return CsrMatrix(data, indices, indptr, rows.size, X.n_cols)


def _normalize_rows(X: CsrMatrix) -> CsrMatrix:
    data = X.data.copy()
    for i in range(X.n_rows):
        lo, hi = X.indptr[i], X.indptr[i + 1]
        norm = math.sqrt(float(data[lo:hi] @ data[lo:hi]))
        if norm > 0.0:
            data[lo:hi] /= norm
    return CsrMatrix(data, X.indices, X.indptr, X.n_rows, X.n_cols)


# ---------------------------------------------------------------------------
# pseudo labels
# ---------------------------------------------------------------------------


def pseudo_labels(scored: dict[str, list[CandidateScore]], n: int) -> dict[str, tuple[str, ...]]:
    """Top-n candidates per document by combined rank score, all of them
    when fewer than n were retrieved; empty candidate sets yield ()."""
    if n < 1:
        raise ValueError("n must be positive")
    return {pid: tuple(r.label_id for r in rows[:n]) for pid, rows in scored.items()}


# ---------------------------------------------------------------------------
# label tree
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class TreeNode:
    index: int = -1  # preorder position, used as a deterministic tie-break
    label_ids: tuple[str, ...] | None = None  # set on leaves only
    children: list["TreeNode"] = field(default_factory=list)
    # routing classifiers, one (weights, bias) per child
    child_weights: np.ndarray | None = None
    child_bias: np.ndarray | None = None
    # one-vs-all classifiers aligned with label_ids
    leaf_weights: np.ndarray | None = None
    leaf_bias: np.ndarray | None = None

    @property
    def is_leaf(self) -> bool:
        return self.label_ids is not None

    def label_set(self) -> frozenset[str]:
        if self.is_leaf:
            return frozenset(self.label_ids)
        out: set[str] = set()
        for c in self.children:
            out |= c.label_set()
        return frozenset(out)

    def leaves(self):
        if self.is_leaf:
            yield self
        else:
            for c in self.children:
                yield from c.leaves()


def _balanced_split(feats: np.ndarray, rng: np.random.Generator,
                    max_iter: int = 50) -> np.ndarray:
    """Two-way spherical clustering with split sizes differing by <= 1."""
    n = feats.shape[0]
    seeds = rng.choice(n, size=2, replace=False)
    centroids = feats[seeds].copy()
    left = np.zeros(n, dtype=bool)
    n_left = (n + 1) // 2
    for _ in range(max_iter):
        gap = feats @ centroids[0] - feats @ centroids[1]
        order = np.argsort(-gap, kind="stable")
        new_left = np.zeros(n, dtype=bool)
        new_left[order[:n_left]] = True
        if (new_left == left).all():
            break
        left = new_left
        for side, mask in ((0, left), (1, ~left)):
            c = feats[mask].mean(axis=0)
            norm = np.linalg.norm(c)
            centroids[side] = c / norm if norm > 0 else c
    return left


def build_label_tree(features: np.ndarray, label_ids: list[str], max_leaf: int,
                     seed: int) -> TreeNode:
    """Recursive balanced two-way clustering of labels down to leaf size.

    ``features`` rows align with ``label_ids``; all-zero rows (labels
    with no pseudo-positive documents) are pooled into one dedicated leaf.
    """
    if max_leaf < 1:
        raise ValueError("max_leaf must be positive")
    norms = np.linalg.norm(features, axis=1)
    featured = [i for i in range(len(label_ids)) if norms[i] > 0]
    unfeatured = [i for i in range(len(label_ids)) if norms[i] == 0]
    rng = np.random.default_rng(seed)

    if not featured:
        root = TreeNode(label_ids=tuple(label_ids[i] for i in unfeatured))
        root.index = 0
        return root

    unit = features[featured] / norms[featured, None]

    def recurse(rows: np.ndarray) -> TreeNode:
        if rows.size <= max_leaf:
            return TreeNode(label_ids=tuple(label_ids[featured[i]] for i in rows))
        left = _balanced_split(unit[rows], rng)
        return TreeNode(children=[recurse(rows[left]), recurse(rows[~left])])

    root = recurse(np.arange(len(featured)))
    if unfeatured:
        pooled = TreeNode(label_ids=tuple(label_ids[i] for i in unfeatured))
        root = TreeNode(children=[root, pooled])

    for i, node in enumerate(_preorder(root)):
        node.index = i
    return root


def _preorder(root: TreeNode) -> list[TreeNode]:
    out, stack = [], [root]
    while stack:
        node = stack.pop()
        out.append(node)
        stack.extend(reversed(node.children))
    return out


@dataclass
class ClassifierConfig:
    n_trees: int = 3
    max_leaf: int = 100
    beam_width: int = 10
    epochs: int = 20
    learning_rate: float = 2.0
    l2: float = 1e-4
    seed: int = 0


def _fit_logistic(X: CsrMatrix, y: np.ndarray, cfg: ClassifierConfig):
    w = np.zeros(X.n_cols, dtype=np.float64)
    b = kernels.logistic_epochs(X.data, X.indices, X.indptr, y, w, 0.0,
                                cfg.epochs, cfg.learning_rate, cfg.l2)
    return w, float(b)


def train_tree(tree: TreeNode, X: CsrMatrix, label_sets: list[frozenset[str]],
               cfg: ClassifierConfig) -> TreeNode:
    """Fit routing and leaf classifiers on (normalized) document rows.

    ``label_sets[i]`` holds row i's pseudo labels. Documents descend
    toward every child whose subtree contains one of their labels; leaf
    classifiers are one-vs-all among the documents that reach the leaf.
    """
    if X.n_rows == 0:
        raise ValueError("no training documents")

    def fit(node: TreeNode, rows: np.ndarray):
        sub = _take_rows(X, rows)
        if node.is_leaf:
            node.leaf_weights = np.zeros((len(node.label_ids), X.n_cols))
            node.leaf_bias = np.zeros(len(node.label_ids))
            for j, lid in enumerate(node.label_ids):
                y = np.array([1.0 if lid in label_sets[r] else 0.0 for r in rows])
                node.leaf_weights[j], node.leaf_bias[j] = _fit_logistic(sub, y, cfg)
            return
        node.child_weights = np.zeros((len(node.children), X.n_cols))
        node.child_bias = np.zeros(len(node.children))
        for j, child in enumerate(node.children):
            member = child.label_set()
            y = np.array([1.0 if label_sets[r] & member else 0.0 for r in rows])
            node.child_weights[j], node.child_bias[j] = _fit_logistic(sub, y, cfg)
            fit(child, rows[y == 1.0])

    all_rows = np.array([i for i in range(X.n_rows) if label_sets[i]], dtype=np.int64)
    if all_rows.size == 0:
        raise ValueError("no training documents carry pseudo labels")
    fit(tree, all_rows)
    return tree


@dataclass
class LabelTreeClassifier:
    label_ids: tuple[str, ...]
    trees: list[TreeNode]
    beam_width: int
    n_features: int


def train_classifier(X: CsrMatrix, paper_ids: list[str],
                     pseudo: dict[str, tuple[str, ...]], label_ids: list[str],
                     cfg: ClassifierConfig, threads: int = 1) -> LabelTreeClassifier:
    """Build and fit the tree ensemble from pseudo-labeled documents.

    Tree topologies differ only by clustering seed. Label features for
    tree building are the mean raw tf-idf of each label's pseudo-positive
    documents.
    """
    label_sets = [frozenset(pseudo.get(pid, ())) for pid in paper_ids]
    pos_rows: dict[str, list[int]] = {lid: [] for lid in label_ids}
    for i, labels in enumerate(label_sets):
        for lid in labels:
            pos_rows[lid].append(i)

    feats = np.zeros((len(label_ids), X.n_cols))
    for j, lid in enumerate(label_ids):
        rows = pos_rows[lid]
        if rows:
            acc = np.zeros(X.n_cols)
            for r in rows:
                sv = X.row(r)
                acc[sv.indices] += sv.values
            feats[j] = acc / len(rows)

    Xn = _normalize_rows(X)

    def one_tree(t: int) -> TreeNode:
        tree = build_label_tree(feats, label_ids, cfg.max_leaf, seed=cfg.seed + t)
        return train_tree(tree, Xn, label_sets, cfg)

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trees = list(pool.map(one_tree, range(cfg.n_trees)))
    else:
        trees = [one_tree(t) for t in range(cfg.n_trees)]
    return LabelTreeClassifier(label_ids=tuple(label_ids), trees=trees,
                               beam_width=cfg.beam_width, n_features=X.n_cols)


def _sigmoid(z: float) -> float:
    if z >= 0:
        return 1.0 / (1.0 + math.exp(-z))
    ez = math.exp(z)
    return ez / (1.0 + ez)


def _dot(sv: SparseVec, w: np.ndarray, b: float) -> float:
    if sv.nnz == 0:
        return b
    return float(w[sv.indices] @ sv.values) + b


def predict_proba(clf: LabelTreeClassifier, x: SparseVec,
                  beam_width: int | None = None) -> dict[str, float]:
    """Beam-search label probabilities, averaged over the tree ensemble.

    The input is L2-normalized to match training scaling. Per level, the
    top ``beam_width`` nodes by path probability survive; labels in leaves
    never reached contribute 0 and are omitted from the output.
    """
    beam = clf.beam_width if beam_width is None else beam_width
    norm = math.sqrt(float(x.values @ x.values)) if x.nnz else 0.0
    xn = SparseVec(x.indices, x.values / norm, x.dim) if norm > 0 else x

    acc: dict[str, float] = {}
    for tree in clf.trees:
        frontier: list[tuple[float, TreeNode]] = [(1.0, tree)]
        while frontier:
            frontier.sort(key=lambda item: (-item[0], item[1].index))
            frontier = frontier[:beam]
            nxt: list[tuple[float, TreeNode]] = []
            for p, node in frontier:
                if node.is_leaf:
                    for j, lid in enumerate(node.label_ids):
                        s = p * _sigmoid(_dot(xn, node.leaf_weights[j], node.leaf_bias[j]))
                        acc[lid] = acc.get(lid, 0.0) + s
                else:
                    for j, child in enumerate(node.children):
                        q = p * _sigmoid(_dot(xn, node.child_weights[j], node.child_bias[j]))
                        nxt.append((q, child))
            frontier = nxt
    return {lid: v / len(clf.trees) for lid, v in acc.items()}


# ---------------------------------------------------------------------------
# final merge
# ---------------------------------------------------------------------------


def final_ranking(rows: list[CandidateScore], probabilities: dict[str, float],
                  label_ids, n: int) -> list[str]:
    """Pin the top-n combined-rank candidates, rerank the rest by classifier
    probability (ties by label id). Returns a permutation of the label space."""
    pinned = [r.label_id for r in rows[:n]]
    pinned_set = set(pinned)
    rest = sorted((lid for lid in label_ids if lid not in pinned_set),
                  key=lambda lid: (-probabilities.get(lid, 0.0), lid))
    return pinned + rest


# ---------------------------------------------------------------------------
# persistence
# ---------------------------------------------------------------------------


def save_classifier(clf: LabelTreeClassifier, path):
    nodes = []
    weights, biases = [], []

    def serialize(node: TreeNode) -> int:
        slot = len(nodes)
        rec: dict = {"index": node.index}
        nodes.append(rec)
        if node.is_leaf:
            rec["labels"] = list(node.label_ids)
            rec["clf"] = len(weights)
            for j in range(len(node.label_ids)):
                weights.append(node.leaf_weights[j])
                biases.append(node.leaf_bias[j])
        else:
            rec["clf"] = len(weights)
            for j in range(len(node.children)):
                weights.append(node.child_weights[j])
                biases.append(node.child_bias[j])
            rec["children"] = [serialize(c) for c in node.children]
        return slot

    roots = [serialize(t) for t in clf.trees]
    meta = {
        "version": CLASSIFIER_VERSION,
        "label_ids": list(clf.label_ids),
        "beam_width": clf.beam_width,
        "n_features": clf.n_features,
        "roots": roots,
        "nodes": nodes,
    }
    np.savez_compressed(
        path,
        weights=np.vstack(weights) if weights else np.zeros((0, clf.n_features)),
        biases=np.array(biases),
        meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8),
    )


def load_classifier(path) -> LabelTreeClassifier:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != CLASSIFIER_VERSION:
            raise ValueError(f"unsupported classifier version {meta.get('version')!r}")
        weights = data["weights"]
        biases = data["biases"]

        def restore(slot: int) -> TreeNode:
            rec = meta["nodes"][slot]
            if "labels" in rec:
                k = len(rec["labels"])
                node = TreeNode(index=rec["index"], label_ids=tuple(rec["labels"]))
                node.leaf_weights = weights[rec["clf"]:rec["clf"] + k].copy()
                node.leaf_bias = biases[rec["clf"]:rec["clf"] + k].copy()
                return node
            node = TreeNode(index=rec["index"])
            node.children = [restore(c) for c in rec["children"]]
            k = len(node.children)
            node.child_weights = weights[rec["clf"]:rec["clf"] + k].copy()
            node.child_bias = biases[rec["clf"]:rec["clf"] + k].copy()
            return node

        trees = [restore(r) for r in meta["roots"]]
        return LabelTreeClassifier(label_ids=tuple(meta["label_ids"]), trees=trees,
                                   beam_width=meta["beam_width"],
                                   n_features=meta["n_features"])
