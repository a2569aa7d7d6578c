"""Command-line entry points.

Subcommands mirror the experiment lifecycle: pretrain on the chain
collection, finetune or run baselines on the target corpus, then
summarize results or bootstrap ad-hoc sample sets.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path


def _pin_threads() -> None:
    # single-threaded BLAS keeps runs deterministic and avoids oversubscription
    for var in ("OPENBLAS_NUM_THREADS", "OMP_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, "1")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pathforge",
        description="Pre-train, fine-tune, and evaluate adaptive-learning recommenders.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p):
        p.add_argument("--seeds", default="0", help='e.g. "0", "0..9", "1,4,7"')
        p.add_argument("--out", default=None, help="data root (default: PATHFORGE_DATA_DIR)")
        p.add_argument("--force", action="store_true", help="rerun completed runs")
        p.add_argument("--parallel", type=int, default=1, metavar="N")
        p.add_argument("--config", default=None, help="JSON file with spec overrides")

    p = sub.add_parser("pretrain", help="two-stage pre-training on the chain corpora")
    p.add_argument("--variant", default="full",
                   choices=["full", "expert_only", "feedback_prediction"])
    add_common(p)

    for name, help_text in (
        ("finetune", "adaptive sessions with a learned recommender"),
        ("baseline", "adaptive sessions with a reference policy"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--policy", required=True,
                       help="gnn | gnn-scratch | cmab | ppo-mlp | random | oracle")
        p.add_argument("--scenario", default="none", help="none | decexp | uniform")
        p.add_argument("--checkpoint", default=None)
        p.add_argument("--corpus", default="grid", help='"grid" or a corpus JSON path')
        add_common(p)

    p = sub.add_parser("study", help="build the full run table (pretrains, "
                       "fine-tunes, baselines, all scenarios)")
    p.add_argument("--seeds", default="0..9", help='e.g. "0", "0..9", "1,4,7"')
    p.add_argument("--out", default=None, help="data root (default: PATHFORGE_DATA_DIR)")
    p.add_argument("--force", action="store_true", help="rerun completed runs")
    p.add_argument("--parallel", type=int, default=1, metavar="N")

    p = sub.add_parser("summarize", help="final returns per policy and scenario")
    p.add_argument("--out", default=None, help="data root (default: PATHFORGE_DATA_DIR)")
    p.add_argument("--epochs", action="store_true",
                   help="also print per-epoch eval aggregates")
    p.add_argument("--export", default=None, metavar="CSV",
                   help="write per-epoch aggregates (with CI columns) to a CSV")

    p = sub.add_parser("bootstrap", help="studentized bootstrap CI for given samples")
    p.add_argument("values", nargs="+", type=float)
    p.add_argument("--resamples", type=int, default=10000)
    p.add_argument("--level", type=float, default=0.95)
    p.add_argument("--seed", type=int, default=0)

    return parser


def main(argv=None) -> int:
    _pin_threads()
    args = build_parser().parse_args(argv)

    # numpy import must come after thread pinning
    import numpy as np

    from .harness import (
        ConfigError,
        ExperimentSpec,
        checkpoint_key,
        epoch_aggregate,
        parse_seeds,
        run_many,
        summarize,
    )
    from .stats import bootstrap_ci

    try:
        if args.command == "bootstrap":
            mean, lo, hi = bootstrap_ci(
                args.values,
                resamples=args.resamples,
                level=args.level,
                rng=np.random.default_rng(args.seed),
            )
            print(f"mean={mean!r} ci_lo={lo!r} ci_hi={hi!r}")
            return 0

        if args.command == "summarize":
            root = Path(args.out) if args.out else None
            for key, row in summarize(root).items():
                print(
                    f"{key}: mean={row['mean']:.2f} sd={row['sd']:.2f} "
                    f"ci=({row['ci_lo']:.2f}, {row['ci_hi']:.2f}) n={row['n']}"
                )
            if args.epochs:
                for row in epoch_aggregate(root):
                    print(
                        f"{row['policy']}/{row['scenario']} epoch={row['epoch']} "
                        f"mean={row['mean_return']:.2f} "
                        f"ci=({row['ci_lo']:.2f}, {row['ci_hi']:.2f}) "
                        f"n={row['n_seeds']}"
                    )
            if args.export:
                from .harness import export_epoch_curves

                n = export_epoch_curves(args.export, root)
                print(f"wrote {n} aggregate rows to {args.export}")
            return 0

        def log(res):
            run_id, seed, final, ran = res
            status = "ran" if ran else "cached"
            suffix = "" if final is None else f" final={final:.2f}"
            print(f"{run_id} seed={seed} {status}{suffix}")

        if args.command == "study":
            from .experiments import build_study

            build_study(
                seeds=parse_seeds(args.seeds),
                root=Path(args.out) if args.out else None,
                force=args.force,
                parallel=args.parallel,
                log=log,
            )
            return 0

        overrides = {}
        if args.config:
            with open(args.config) as fh:
                overrides = json.load(fh)
        seeds = parse_seeds(args.seeds)
        root = Path(args.out) if args.out else None
        if args.command == "pretrain":
            spec = ExperimentSpec(
                command="pretrain",
                variant=overrides.get("variant", args.variant),
            )
        else:
            checkpoint = overrides.get("checkpoint", args.checkpoint)
            spec = ExperimentSpec(
                command=args.command,
                policy=overrides.get("policy", args.policy),
                scenario=overrides.get("scenario", args.scenario),
                checkpoint=checkpoint_key(checkpoint, root) if checkpoint else None,
                corpus=overrides.get("corpus", args.corpus),
            )

        run_many(
            [(spec, s) for s in seeds],
            root=root,
            force=args.force,
            parallel=args.parallel,
            log=log,
        )
        return 0
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
