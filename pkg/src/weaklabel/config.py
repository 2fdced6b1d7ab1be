"""Pipeline configuration: one structured config, flag overrides, seed fanout."""

from __future__ import annotations

import json
from dataclasses import dataclass, fields
from hashlib import blake2b

from .citegraph import MetaPath


class ConfigError(ValueError):
    pass


@dataclass
class PipelineConfig:
    # inputs / outputs
    corpus_path: str = ""
    labels_path: str = ""
    output_dir: str = "out"
    embeddings_path: str | None = None  # optional external-embedding file

    # corpus
    min_paragraph_words: int = 10
    min_df: int = 5

    # retrieval
    match_full_text: bool = False

    # citation graph / tuple sampling
    meta_path: str = "P->P<-P"
    tuple_count: int = 4000

    # scorer
    hash_dim: int = 2048
    embed_dim: int = 256
    batch_size: int = 8
    learning_rate: float = 1e-2
    warmup_steps: int = 100
    weight_decay: float = 0.01
    epsilon: float = 1e-8
    beta1: float = 0.9
    beta2: float = 0.999
    train_steps: int | None = None  # default: train_epochs passes
    train_epochs: int = 3

    # self-training
    pseudo_top_n: int = 5
    n_trees: int = 3
    max_leaf: int = 100
    beam_width: int = 10
    classifier_epochs: int = 20
    classifier_lr: float = 2.0
    classifier_l2: float = 1e-4

    # evaluation
    precision_ks: tuple[int, ...] = (1, 3, 5)
    ndcg_ks: tuple[int, ...] = (3, 5)
    propensity_a: float = 0.55
    propensity_b: float = 1.5
    top_k: int = 5
    ranking_limit: int | None = None  # cap stored rankings; None keeps all labels

    # execution
    seed: int = 7
    threads: int = 1
    use_hierarchy: bool = True  # ablation: False scores title+abstract only
    use_selftrain: bool = True  # ablation: False stops at the rank ensemble

    def validate(self):
        positive = ["min_paragraph_words", "min_df", "tuple_count", "hash_dim",
                    "embed_dim", "batch_size", "train_epochs",
                    "pseudo_top_n", "n_trees", "max_leaf", "beam_width",
                    "classifier_epochs", "top_k", "threads"]
        for name in positive:
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if self.warmup_steps < 0:
            raise ConfigError("warmup_steps must be nonnegative")
        for name in ["learning_rate", "classifier_lr"]:
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive")
        for name in ["weight_decay", "classifier_l2", "epsilon"]:
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be nonnegative")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ConfigError("moment decay rates must lie in [0, 1)")
        if self.train_steps is not None and self.train_steps < 1:
            raise ConfigError("train_steps must be positive when set")
        if any(k < 1 for k in tuple(self.precision_ks) + tuple(self.ndcg_ks)):
            raise ConfigError("metric k values must be positive")
        try:
            MetaPath.parse(self.meta_path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        return self

    def stage_seed(self, stage: str) -> int:
        """Derive a per-stage seed from the root seed: 63-bit keyed hash of
        the stage name, so any stage reruns identically in isolation."""
        digest = blake2b(stage.encode("utf-8"), digest_size=8,
                         key=int(self.seed).to_bytes(8, "little", signed=True)).digest()
        return int.from_bytes(digest, "little") >> 1


_FIELD_TYPES = {f.name: f for f in fields(PipelineConfig)}


def make_config(file_path=None, overrides: dict | None = None) -> PipelineConfig:
    """Config file values first, explicit overrides on top."""
    values: dict = {}
    if file_path:
        with open(file_path, "r", encoding="utf-8") as fh:
            values.update(json.load(fh))
    if overrides:
        values.update({k: v for k, v in overrides.items() if v is not None})
    unknown = set(values) - set(_FIELD_TYPES)
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key in ("precision_ks", "ndcg_ks"):
        if key in values:
            values[key] = tuple(values[key])
    return PipelineConfig(**values).validate()
