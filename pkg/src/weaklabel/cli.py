"""Command-line entry point.

Subcommands mirror the pipeline stages (``ingest``, ``candidates``,
``sample-tuples``, ``train-encoder``, ``score``, ``self-train``,
``predict``, ``evaluate``), plus ``run-all`` for the whole pipeline and
``synth`` for generating a planted-label test corpus. Configuration
comes from an optional JSON file (``--config``) with flag overrides on
top; exit status is nonzero on failure, with the failing stage named.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys

from . import pipeline
from .config import ConfigError, make_config
from .synth import SyntheticSpec, write_synthetic

log = logging.getLogger(__name__)

_STAGE_BY_COMMAND = dict(pipeline.STAGES)


def _add_config_flags(parser: argparse.ArgumentParser):
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--corpus", dest="corpus_path", help="corpus JSONL")
    parser.add_argument("--labels", dest="labels_path", help="label JSONL")
    parser.add_argument("--output-dir", dest="output_dir")
    parser.add_argument("--embeddings", dest="embeddings_path",
                        help="external embedding file (TSV or JSONL)")
    parser.add_argument("--seed", type=int, dest="seed")
    parser.add_argument("--threads", type=int, dest="threads")
    parser.add_argument("--meta-path", dest="meta_path", help="e.g. 'P->P' or 'P->P<-P'")
    parser.add_argument("--tuple-count", type=int, dest="tuple_count")
    parser.add_argument("--train-steps", type=int, dest="train_steps")
    parser.add_argument("--train-epochs", type=int, dest="train_epochs")
    parser.add_argument("--hash-dim", type=int, dest="hash_dim")
    parser.add_argument("--embed-dim", type=int, dest="embed_dim")
    parser.add_argument("--learning-rate", type=float, dest="learning_rate")
    parser.add_argument("--pseudo-top-n", type=int, dest="pseudo_top_n")
    parser.add_argument("--trees", type=int, dest="n_trees")
    parser.add_argument("--max-leaf", type=int, dest="max_leaf")
    parser.add_argument("--beam-width", type=int, dest="beam_width")
    parser.add_argument("--min-df", type=int, dest="min_df")
    parser.add_argument("--min-paragraph-words", type=int, dest="min_paragraph_words")
    parser.add_argument("--top-k", type=int, dest="top_k")
    parser.add_argument("--full-text-match", action="store_const", const=True,
                        dest="match_full_text",
                        help="match label names over full text, not title+abstract")
    parser.add_argument("--no-hierarchy", action="store_const", const=False,
                        dest="use_hierarchy",
                        help="ablation: score title+abstract only")
    parser.add_argument("--no-selftrain", action="store_const", const=False,
                        dest="use_selftrain",
                        help="ablation: stop at the rank-ensemble prediction")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="weaklabel",
                                     description=__doc__.split("\n\n")[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    for name, _ in pipeline.STAGES:
        p = sub.add_parser(name, help=f"run the {name} stage")
        _add_config_flags(p)
    p = sub.add_parser("run-all", help="run every stage in order")
    _add_config_flags(p)

    p = sub.add_parser("synth", help="generate a planted-label corpus")
    p.add_argument("--papers", type=int, default=500)
    p.add_argument("--label-count", type=int, default=50)
    p.add_argument("--labels-per-paper", type=int, default=3)
    p.add_argument("--fulltext-fraction", type=float, default=1.0 / 3.0)
    p.add_argument("--vocab-size", type=int, default=300)
    p.add_argument("--edge-prob", type=float, default=0.08)
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--out-dir", default=".")
    return parser


def _run_synth(args) -> int:
    spec = SyntheticSpec(n_papers=args.papers, n_labels=args.label_count,
                         labels_per_paper=args.labels_per_paper,
                         fulltext_only_fraction=args.fulltext_fraction,
                         vocab_size=args.vocab_size, seed=args.seed,
                         edge_prob=args.edge_prob)
    os.makedirs(args.out_dir, exist_ok=True)
    corpus_path = os.path.join(args.out_dir, "corpus.jsonl")
    labels_path = os.path.join(args.out_dir, "labels.jsonl")
    manifest_path = os.path.join(args.out_dir, "synth_manifest.jsonl")
    write_synthetic(spec, corpus_path, labels_path, manifest_path)
    print(f"wrote {corpus_path}, {labels_path}, {manifest_path}")
    return 0


_CONFIG_KEYS = [
    "corpus_path", "labels_path", "output_dir", "embeddings_path", "seed",
    "threads", "meta_path", "tuple_count", "train_steps", "train_epochs",
    "hash_dim", "embed_dim", "learning_rate", "pseudo_top_n", "n_trees",
    "max_leaf", "beam_width", "min_df", "min_paragraph_words", "top_k",
    "match_full_text", "use_hierarchy", "use_selftrain",
]


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "synth":
        return _run_synth(args)

    try:
        cfg = make_config(args.config,
                          {k: getattr(args, k, None) for k in _CONFIG_KEYS})
    except (ConfigError, OSError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2

    if args.command == "run-all":
        stages = [(n, f) for n, f in pipeline.STAGES
                  if not (n == "self-train" and not cfg.use_selftrain)]
    else:
        stages = [(args.command, _STAGE_BY_COMMAND[args.command])]

    for name, fn in stages:
        try:
            fn(cfg)
        except Exception as exc:
            print(f"stage {name} failed: {exc}", file=sys.stderr)
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
