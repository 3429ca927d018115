"""Command-line entry point: dataset in, CEMB file out."""

import argparse
import sys
from pathlib import Path

from . import __version__
from .export import DEFAULT_MAX_LEN, ExportError, ExportJob, export


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cembexport",
        description="Export transformer token embeddings for a comment dataset.",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("dataset", help="dataset file (one JSON object per line)")
    parser.add_argument("model_id", help="pretrained encoder name or local path")
    parser.add_argument("output", help="CEMB file to write")
    parser.add_argument(
        "--max-len", type=int, default=DEFAULT_MAX_LEN, dest="max_len",
        help=f"token sequence cap (default {DEFAULT_MAX_LEN})",
    )
    parser.add_argument(
        "--batch-size", type=int, default=8, dest="batch_size",
        help="texts per inference batch (default 8)",
    )
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        job = ExportJob(
            dataset=Path(args.dataset),
            model_id=args.model_id,
            output=Path(args.output),
            max_len=args.max_len,
            batch_size=args.batch_size,
        )
        summary = export(job)
    except (ExportError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"wrote {args.output}: {summary.texts} texts, dim {summary.dim}, "
        f"{summary.file_size} bytes"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
