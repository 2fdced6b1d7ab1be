"""Trainable text scorer: hashed features, projection, pair scoring head.

Texts are mapped to sparse signed-hash vectors over word unigrams and
bigrams, projected to a low-dimensional embedding, and scored either
independently (``bi_embed`` + cosine) or jointly through a pair feature
map ``psi(u, v) = [u * v ; |u - v|]`` and a linear head ``w``.

The head and projection are trained with a pairwise contrastive
objective: given an anchor paragraph, a paragraph from a related
document and one from an unrelated document,

    loss = -log( exp(s_pos) / (exp(s_pos) + exp(s_neg)) )

with ``s_* = w . psi(embed(anchor), embed(other))``.
"""

from __future__ import annotations

import json
import math
import threading
from dataclasses import asdict, dataclass, field
from hashlib import blake2b

import numpy as np

from . import kernels
from .corpus import tokenize

DEFAULT_HASH_DIM = 2048
DEFAULT_EMBED_DIM = 256
DEFAULT_MAX_TOKENS = 256

CHECKPOINT_VERSION = 1


@dataclass
class SparseVec:
    """Sparse real vector: sorted unique indices with nonzero values."""

    indices: np.ndarray  # int64
    values: np.ndarray  # float64
    dim: int

    def to_dense(self) -> np.ndarray:
        out = np.zeros(self.dim, dtype=np.float64)
        out[self.indices] = self.values
        return out

    @property
    def nnz(self) -> int:
        return int(self.indices.size)


class BaseFeaturizer:
    """Deterministic tf-weighted signed-hash features over 1/2-grams.

    The hash is keyed by ``hash_seed`` so feature spaces are reproducible
    across processes. Output vectors are L2-normalized; empty text maps
    to the zero vector.
    """

    def __init__(self, dim: int = DEFAULT_HASH_DIM, hash_seed: int = 0,
                 max_tokens: int = DEFAULT_MAX_TOKENS):
        self.dim = dim
        self.hash_seed = hash_seed
        self.max_tokens = max_tokens
        self._key = int(hash_seed).to_bytes(8, "little", signed=True)

    def _hash(self, gram: str) -> int:
        digest = blake2b(gram.encode("utf-8"), digest_size=8, key=self._key).digest()
        return int.from_bytes(digest, "little")

    def featurize(self, text: str) -> SparseVec:
        tokens = tokenize(text)[: self.max_tokens]
        if not tokens:
            return SparseVec(np.empty(0, dtype=np.int64), np.empty(0), self.dim)
        buckets: dict[int, float] = {}
        grams = tokens + [f"{a}\x1f{b}" for a, b in zip(tokens, tokens[1:])]
        for gram in grams:
            h = self._hash(gram)
            sign = 1.0 if h & (1 << 63) else -1.0
            b = h % self.dim
            buckets[b] = buckets.get(b, 0.0) + sign
        idx = np.array(sorted(b for b, v in buckets.items() if v != 0.0), dtype=np.int64)
        val = np.array([buckets[b] for b in idx], dtype=np.float64)
        norm = math.sqrt(float(val @ val))
        if norm > 0.0:
            val /= norm
        return SparseVec(idx, val, self.dim)


class CallCounters:
    """Inference-call accounting for complexity checks (thread-safe)."""

    def __init__(self):
        self._lock = threading.Lock()
        self.bi_embed = 0
        self.cross_score = 0

    def add_bi(self):
        with self._lock:
            self.bi_embed += 1

    def add_cross(self):
        with self._lock:
            self.cross_score += 1

    def reset(self):
        with self._lock:
            self.bi_embed = 0
            self.cross_score = 0


@dataclass
class ScorerModel:
    featurizer: BaseFeaturizer
    proj: np.ndarray  # (hash_dim, embed_dim)
    w: np.ndarray  # (2 * embed_dim,)
    counters: CallCounters = field(default_factory=CallCounters)

    @property
    def hash_dim(self) -> int:
        return self.proj.shape[0]

    @property
    def embed_dim(self) -> int:
        return self.proj.shape[1]


def init_model(hash_dim: int = DEFAULT_HASH_DIM, embed_dim: int = DEFAULT_EMBED_DIM,
               seed: int = 0, hash_seed: int | None = None) -> ScorerModel:
    """Seeded init: uniform projection scaled by 1/sqrt(hash_dim), zero head.

    A zero head makes every initial score 0, so the first training batch
    has mean loss exactly ln 2.
    """
    rng = np.random.default_rng(seed)
    proj = rng.uniform(-1.0, 1.0, size=(hash_dim, embed_dim)) / math.sqrt(hash_dim)
    w = np.zeros(2 * embed_dim, dtype=np.float64)
    feat = BaseFeaturizer(dim=hash_dim, hash_seed=seed if hash_seed is None else hash_seed)
    return ScorerModel(featurizer=feat, proj=proj, w=w)


def _embed_features(model: ScorerModel, sv: SparseVec) -> np.ndarray:
    r = kernels.project_rows(model.proj, sv.indices, sv.values)
    norm = math.sqrt(float(r @ r))
    if norm == 0.0:
        return np.zeros(model.embed_dim, dtype=np.float64)
    return r / norm


def bi_embed(model: ScorerModel, text: str) -> np.ndarray:
    """Unit-norm embedding of one text (zero vector for empty text)."""
    model.counters.add_bi()
    return _embed_features(model, model.featurizer.featurize(text))


def pair_features(u: np.ndarray, v: np.ndarray) -> np.ndarray:
    """psi(u, v) = [u * v ; |u - v|], symmetric in its arguments."""
    return np.concatenate([u * v, np.abs(u - v)])


def cross_score_pair(model: ScorerModel, u: np.ndarray, v: np.ndarray) -> float:
    model.counters.add_cross()
    return float(model.w @ pair_features(u, v))


def cross_score(model: ScorerModel, s: str, t: str) -> float:
    """Joint score of a text pair; both texts are encoded per call."""
    u = _embed_features(model, model.featurizer.featurize(s))
    v = _embed_features(model, model.featurizer.featurize(t))
    return cross_score_pair(model, u, v)


def contrastive_loss(s_pos: float, s_neg: float) -> float:
    """-log(exp(s_pos) / (exp(s_pos) + exp(s_neg))), overflow-safe."""
    return float(np.logaddexp(0.0, s_neg - s_pos))


def _normalize_backprop(grad_u, u, norm):
    if norm == 0.0:
        return np.zeros_like(grad_u)
    return (grad_u - float(grad_u @ u) * u) / norm


def _tuple_loss_grad(model: ScorerModel, f_a: SparseVec, f_p: SparseVec,
                     f_n: SparseVec, grad_proj: np.ndarray, grad_w: np.ndarray) -> float:
    """Accumulate the analytic gradient of one tuple's loss; returns the loss."""
    e = model.embed_dim
    w1, w2 = model.w[:e], model.w[e:]

    embs = []
    for sv in (f_a, f_p, f_n):
        r = kernels.project_rows(model.proj, sv.indices, sv.values)
        norm = math.sqrt(float(r @ r))
        u = r / norm if norm > 0.0 else np.zeros(e)
        embs.append((u, norm))
    u_a, u_p, u_n = (u for u, _ in embs)

    psi_pos = pair_features(u_a, u_p)
    psi_neg = pair_features(u_a, u_n)
    s_pos = float(model.w @ psi_pos)
    s_neg = float(model.w @ psi_neg)
    loss = contrastive_loss(s_pos, s_neg)

    # d loss / d s_pos = -g, d loss / d s_neg = +g
    delta = s_neg - s_pos
    if delta >= 0.0:
        g = 1.0 / (1.0 + math.exp(-delta))
    else:
        ez = math.exp(delta)
        g = ez / (1.0 + ez)

    grad_w += g * (psi_neg - psi_pos)

    sgn_p = np.sign(u_a - u_p)
    sgn_n = np.sign(u_a - u_n)
    grad_ua = g * ((w1 * u_n + w2 * sgn_n) - (w1 * u_p + w2 * sgn_p))
    grad_up = -g * (w1 * u_a - w2 * sgn_p)
    grad_un = g * (w1 * u_a - w2 * sgn_n)

    for sv, grad_u, (u, norm) in ((f_a, grad_ua, embs[0]),
                                  (f_p, grad_up, embs[1]),
                                  (f_n, grad_un, embs[2])):
        grad_r = _normalize_backprop(grad_u, u, norm)
        kernels.scatter_add_outer(grad_proj, sv.indices, sv.values, grad_r)
    return loss


def loss_gradient(model: ScorerModel, anchor_text: str, pos_text: str,
                  neg_text: str) -> tuple[np.ndarray, np.ndarray, float]:
    """Analytic gradient of the tuple loss w.r.t. (proj, w)."""
    feat = model.featurizer
    grad_proj = np.zeros_like(model.proj)
    grad_w = np.zeros_like(model.w)
    loss = _tuple_loss_grad(model, feat.featurize(anchor_text),
                            feat.featurize(pos_text), feat.featurize(neg_text),
                            grad_proj, grad_w)
    return grad_proj, grad_w, loss


@dataclass
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 1e-2
    warmup_steps: int = 100
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    total_steps: int | None = None
    epochs: int = 3
    seed: int = 0

    def resolve_total_steps(self, n_tuples: int) -> int:
        if self.total_steps is not None:
            return self.total_steps
        return self.epochs * math.ceil(n_tuples / self.batch_size)


def _schedule(t: int, warmup: int, total: int) -> float:
    # linear warmup to 1 at `warmup`, then linear decay to 0 at `total`
    if warmup > 0 and t <= warmup:
        return t / warmup
    if total <= warmup:
        return 1.0
    return max(0.0, (total - t) / (total - warmup))


class TrainingDiverged(RuntimeError):
    pass


def train(model: ScorerModel, tuples, corpus, config: TrainConfig | None = None):
    """Seeded mini-batch AdamW training on contrastive tuples.

    ``tuples`` carry (paper id, paragraph index) references resolved
    against ``corpus``. Returns ``(model, per-step mean losses)``; the
    model is updated in place.
    """
    if config is None:
        config = TrainConfig()
    if not tuples:
        raise ValueError("cannot train on an empty tuple sequence")

    by_id = {p.id: p for p in corpus}
    feat_cache: dict[tuple[str, int], SparseVec] = {}

    def features(ref) -> SparseVec:
        key = (ref[0], ref[1])
        sv = feat_cache.get(key)
        if sv is None:
            sv = model.featurizer.featurize(by_id[ref[0]].paragraphs[ref[1]].text)
            feat_cache[key] = sv
        return sv

    rng = np.random.default_rng(config.seed)
    total = config.resolve_total_steps(len(tuples))
    n = len(tuples)

    m_proj = np.zeros_like(model.proj)
    v_proj = np.zeros_like(model.proj)
    m_w = np.zeros_like(model.w)
    v_w = np.zeros_like(model.w)
    grad_proj = np.zeros_like(model.proj)
    grad_w = np.zeros_like(model.w)

    losses = np.empty(total, dtype=np.float64)
    order = rng.permutation(n)
    cursor = 0
    for t in range(1, total + 1):
        if cursor + config.batch_size > n:
            order = rng.permutation(n)
            cursor = 0
        batch = order[cursor:cursor + config.batch_size]
        cursor += config.batch_size

        grad_proj[:] = 0.0
        grad_w[:] = 0.0
        batch_loss = 0.0
        for i in batch:
            tup = tuples[i]
            batch_loss += _tuple_loss_grad(model, features(tup.anchor),
                                           features(tup.positive),
                                           features(tup.negative),
                                           grad_proj, grad_w)
        k = float(len(batch))
        batch_loss /= k
        if not math.isfinite(batch_loss):
            raise TrainingDiverged(f"non-finite loss at step {t}")
        losses[t - 1] = batch_loss
        grad_proj /= k
        grad_w /= k

        sched = _schedule(t, config.warmup_steps, total)
        lr_t = sched * config.learning_rate
        wd_t = sched * config.weight_decay
        kernels.adamw_step(model.proj, grad_proj, m_proj, v_proj, t,
                           lr_t, config.beta1, config.beta2, config.epsilon, wd_t)
        kernels.adamw_step(model.w, grad_w, m_w, v_w, t,
                           lr_t, config.beta1, config.beta2, config.epsilon, wd_t)
        if t % 100 == 0 and not (np.isfinite(model.w).all() and np.isfinite(model.proj).all()):
            raise TrainingDiverged(f"non-finite parameter at step {t}")

    if not (np.isfinite(model.w).all() and np.isfinite(model.proj).all()):
        raise TrainingDiverged(f"non-finite parameter at step {total}")
    return model, losses


def save_model(model: ScorerModel, path, train_config: "TrainConfig | None" = None):
    meta = {
        "version": CHECKPOINT_VERSION,
        "hash_dim": model.hash_dim,
        "embed_dim": model.embed_dim,
        "hash_seed": model.featurizer.hash_seed,
        "max_tokens": model.featurizer.max_tokens,
    }
    if train_config is not None:
        meta["train"] = asdict(train_config)
    np.savez(path, proj=model.proj, w=model.w,
             meta=np.frombuffer(json.dumps(meta).encode("utf-8"), dtype=np.uint8))


def load_model(path) -> ScorerModel:
    with np.load(path) as data:
        meta = json.loads(bytes(data["meta"]).decode("utf-8"))
        if meta.get("version") != CHECKPOINT_VERSION:
            raise ValueError(f"unsupported checkpoint version {meta.get('version')!r}")
        feat = BaseFeaturizer(dim=meta["hash_dim"], hash_seed=meta["hash_seed"],
                              max_tokens=meta["max_tokens"])
        return ScorerModel(featurizer=feat, proj=data["proj"].copy(), w=data["w"].copy())


def load_embedding_overrides(path, embed_dim: int | None = None) -> dict[str, np.ndarray]:
    """Load externally computed embeddings, keyed by id.

    Accepts JSON Lines (``{"id": ..., "embedding": [...]}``) or TSV
    (``id<TAB>v1 v2 ...``). Vectors are L2-normalized on load. Paragraph
    leaves are keyed ``<paper_id>#<leaf_index>``, labels and papers by
    their plain ids.
    """
    out: dict[str, np.ndarray] = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            if line.lstrip().startswith("{"):
                rec = json.loads(line)
                key, vec = str(rec["id"]), np.asarray(rec["embedding"], dtype=np.float64)
            else:
                key, _, rest = line.partition("\t")
                if not rest:
                    raise ValueError(f"{path}: line {lineno}: expected id<TAB>values")
                vec = np.array(rest.split(), dtype=np.float64)
            if embed_dim is not None and vec.shape[0] != embed_dim:
                raise ValueError(
                    f"{path}: line {lineno}: embedding dim {vec.shape[0]} != {embed_dim}")
            norm = np.linalg.norm(vec)
            out[key] = vec / norm if norm > 0 else vec
    return out
