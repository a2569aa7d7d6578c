"""Command-line figure generation."""

from __future__ import annotations

import argparse
import sys


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathforge-figures",
        description="Render experiment figures from harness CSV output.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("curves", help="per-scenario learning curves with CI bands")
    p.add_argument("--in", dest="source", required=True,
                   help="aggregate curve CSV, or a directory of them")
    p.add_argument("--out", required=True, help="output image path")

    p = sub.add_parser("pretrain", help="pre-training reward-vs-steps curve")
    p.add_argument("--in", dest="source", required=True, help="per-run curve CSV")
    p.add_argument("--out", required=True, help="output image path")
    p.add_argument("--window", type=int, default=20, help="smoothing window")

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    from .plots import FigureError, plot_learning_curves, plot_pretrain_curve

    try:
        if args.command == "curves":
            plot_learning_curves(args.source, args.out)
        else:
            plot_pretrain_curve(args.source, args.out, window=args.window)
    except (FigureError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    print(args.out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
