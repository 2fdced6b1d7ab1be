"""Weakly supervised multi-label tagging of full-text, citation-linked corpora."""

__version__ = "0.1.0"

from .config import PipelineConfig, make_config
from .corpus import Label, Paper, Vocabulary, load_corpus, load_labels, build_vocabulary
from .pipeline import run_pipeline

__all__ = [
    "PipelineConfig",
    "make_config",
    "Label",
    "Paper",
    "Vocabulary",
    "load_corpus",
    "load_labels",
    "build_vocabulary",
    "run_pipeline",
    "__version__",
]
