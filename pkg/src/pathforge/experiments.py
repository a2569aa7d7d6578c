"""The full study as a run table.

Three pre-trainings (the full two-stage model and both supervised-only
variants), fine-tunes of each against the grid corpus, the scratch model,
and the bandit/random baselines across all three prior-knowledge
scenarios. Building the table is idempotent: completed runs are reused.
"""

from __future__ import annotations

from pathlib import Path

from .harness import (
    ExperimentSpec,
    checkpoint_key,
    data_dir,
    ensure_run,
    run_dir,
    run_many,
)
from .pipelines import PRETRAIN_VARIANTS

SEEDS = tuple(range(10))
SCENARIOS = ("none", "decexp", "uniform")


def pretrain_spec(variant: str) -> ExperimentSpec:
    return ExperimentSpec(command="pretrain", variant=variant)


def checkpoint_path(variant: str, root: Path | None = None, seed: int = 0) -> Path:
    return run_dir(pretrain_spec(variant), seed, root) / "checkpoint.bin"


def pretrain_jobs(seed: int = 0) -> list[tuple[ExperimentSpec, int]]:
    return [(pretrain_spec(v), seed) for v in PRETRAIN_VARIANTS]


def session_specs(root: Path | None = None) -> list[ExperimentSpec]:
    """Every fine-tune and baseline config in the study, one per arm."""
    specs = []
    full_ck = checkpoint_key(checkpoint_path("full", root), root)
    for scenario in SCENARIOS:
        specs.append(
            ExperimentSpec(
                command="finetune",
                policy="gnn",
                scenario=scenario,
                checkpoint=full_ck,
            )
        )
        specs.append(
            ExperimentSpec(command="finetune", policy="gnn-scratch", scenario=scenario)
        )
        for policy in ("cmab", "ppo-mlp", "oracle"):
            specs.append(
                ExperimentSpec(command="baseline", policy=policy, scenario=scenario)
            )
    specs.append(ExperimentSpec(command="baseline", policy="random", scenario="none"))
    # The alternative pre-trainings are only compared in the scenario the
    # comparison figure uses.
    for variant in ("expert_only", "feedback_prediction"):
        specs.append(
            ExperimentSpec(
                command="finetune",
                policy="gnn",
                scenario="none",
                checkpoint=checkpoint_key(checkpoint_path(variant, root), root),
                label=f"gnn-{variant}",
            )
        )
    return specs


def session_jobs(
    seeds=SEEDS, root: Path | None = None
) -> list[tuple[ExperimentSpec, int]]:
    return [(spec, seed) for spec in session_specs(root) for seed in seeds]


def spec_for(label: str, scenario: str, root: Path | None = None) -> ExperimentSpec:
    for spec in session_specs(root):
        if (spec.label or spec.policy) == label and spec.scenario == scenario:
            return spec
    raise KeyError(f"no study arm {label!r} in scenario {scenario!r}")


def build_study(
    seeds=SEEDS,
    root: Path | None = None,
    force: bool = False,
    parallel: int = 1,
    log=None,
) -> list:
    """Run (or reuse) the whole table. Pre-trainings must finish first:
    the fine-tune specs point at their checkpoint files."""
    root = root or data_dir()
    results = run_many(pretrain_jobs(), root, force, parallel=1, log=log)
    results += run_many(session_jobs(seeds, root), root, force, parallel, log=log)
    return results


def study_records(seeds=SEEDS, root: Path | None = None) -> dict:
    """Records of every study run, keyed by (label, scenario, seed) for
    sessions and ("pretrain", variant) for pre-trainings. Missing runs
    raise, so callers can rely on a complete table."""
    root = root or data_dir()
    out = {}
    for spec, seed in pretrain_jobs():
        record, _ = ensure_run(spec, seed, root)
        out[("pretrain", spec.variant)] = record
    for spec, seed in session_jobs(seeds, root):
        record, _ = ensure_run(spec, seed, root)
        out[(spec.label or spec.policy, spec.scenario, seed)] = record
    return out
