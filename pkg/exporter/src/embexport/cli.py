"""``embexport export`` command-line entry point."""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .corpusio import CorpusFormatError
from .export import EPOCHS_GRID, LEARNING_RATE_GRID, ExportConfig, ExportError, run


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="embexport",
        description="Export per-layer first-token embeddings to a binary store.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    p = sub.add_parser("export", help="embed a corpus with a transformer encoder")
    p.add_argument("--model", required=True, help="model name or local path")
    p.add_argument("--corpus", required=True, help="transcript JSONL")
    p.add_argument("--out", required=True, help="output store file")
    p.add_argument("--fine-tune", action="store_true", help="fine-tune on the AD labels first")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--batch-size", type=int, default=16)
    p.add_argument(
        "--epochs-grid",
        default=",".join(str(e) for e in EPOCHS_GRID),
        help="comma-separated epoch counts for the fine-tuning grid",
    )
    p.add_argument(
        "--lrs",
        default=",".join(str(lr) for lr in LEARNING_RATE_GRID),
        help="comma-separated learning rates for the fine-tuning grid",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if not Path(args.corpus).is_file():
        print(f"error: corpus not found: {args.corpus}", file=sys.stderr)
        return 1
    try:
        config = ExportConfig(
            model=args.model,
            corpus=args.corpus,
            out=args.out,
            fine_tune=args.fine_tune,
            epochs_grid=tuple(int(e) for e in args.epochs_grid.split(",")),
            learning_rates=tuple(float(lr) for lr in args.lrs.split(",")),
            seed=args.seed,
            batch_size=args.batch_size,
        )
        result = run(config)
    except (ExportError, CorpusFormatError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.out}: {result.n_layers} layers x {result.n_rows} rows x "
        f"{result.dim} dims ({len(result.truncated_ids)} truncated)"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
