"""Command-line entry point for the place-recognition pipeline."""

from __future__ import annotations

import argparse
import sys

from .ingest import ParseError
from .pipeline import COMMANDS, run_pipeline


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="seqplace",
        description="Sequence-based place recognition: embed scans, build and enhance "
                    "difference matrices, run forward/backward sequence search, and "
                    "evaluate against ground-truth poses.",
    )
    parser.add_argument("--config", required=True, help="path to the JSON run config")
    parser.add_argument("--command", required=True, choices=COMMANDS,
                        help="pipeline stage to run")
    parser.add_argument("--threads", type=int, default=None,
                        help="worker cap (default: available cores); never changes results")
    parser.add_argument("--out", default="out", help="output directory")
    args = parser.parse_args(argv)

    try:
        run_pipeline(args.config, args.command, args.out, args.threads)
    except (ParseError, ValueError, OSError, KeyError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
