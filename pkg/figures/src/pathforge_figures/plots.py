"""Figure rendering from experiment CSV files.

This package deliberately knows nothing about how the numbers were
produced: the aggregate curve CSV (scenario, policy, epoch, mean, CI
bounds, seed count) and the per-run curve CSV (run id, seed, epoch,
split, mean return, episode count) are the whole interface. Bands are
drawn from the CI columns verbatim; nothing is recomputed here.
"""

from __future__ import annotations

import csv
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

AGGREGATE_HEADER = [
    "scenario", "policy", "epoch", "mean_return", "ci_lo", "ci_hi", "n_seeds",
]
RUN_HEADER = ["run_id", "seed", "epoch", "split", "mean_return", "n_episodes"]

SCENARIO_ORDER = ["none", "decexp", "uniform"]
SCENARIO_TITLES = {
    "none": "no prior knowledge",
    "decexp": "decreasing-exponential prior",
    "uniform": "uniform prior",
}
POLICY_ORDER = ["gnn", "gnn-scratch", "cmab", "ppo-mlp", "random", "oracle"]
STUDENTS_PER_EPOCH = 5


class FigureError(ValueError):
    pass


def _read_rows(path: Path, header: list[str]) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != header:
            raise FigureError(
                f"{path}: expected columns {','.join(header)}, "
                f"got {','.join(reader.fieldnames or [])}"
            )
        return list(reader)


def _float(row: dict, column: str, path: Path, line: int) -> float:
    try:
        return float(row[column])
    except ValueError:
        raise FigureError(
            f"{path} row {line}: column {column} is not a number: {row[column]!r}"
        ) from None


def load_curveset(source) -> dict[str, dict[str, list[tuple[int, float, float, float]]]]:
    """scenario -> policy -> [(epoch, mean, ci_lo, ci_hi)], validated.

    Source may be one aggregate CSV or a directory of them."""
    source = Path(source)
    paths = sorted(source.glob("*.csv")) if source.is_dir() else [source]
    if not paths:
        raise FigureError(f"{source}: no CSV files found")
    curves: dict[str, dict[str, list[tuple[int, float, float, float]]]] = {}
    for path in paths:
        for i, row in enumerate(_read_rows(path, AGGREGATE_HEADER), start=2):
            epoch = int(_float(row, "epoch", path, i))
            mean = _float(row, "mean_return", path, i)
            lo = _float(row, "ci_lo", path, i)
            hi = _float(row, "ci_hi", path, i)
            if not lo <= mean <= hi:
                raise FigureError(
                    f"{path} row {i}: ci_lo <= mean_return <= ci_hi violated "
                    f"({lo!r}, {mean!r}, {hi!r})"
                )
            series = curves.setdefault(row["scenario"], {}).setdefault(
                row["policy"], []
            )
            if series and epoch <= series[-1][0]:
                raise FigureError(
                    f"{path} row {i}: epoch {epoch} not increasing for "
                    f"{row['policy']}/{row['scenario']}"
                )
            series.append((epoch, mean, lo, hi))
    return curves


def _ordered(keys, preference) -> list[str]:
    known = [k for k in preference if k in keys]
    return known + sorted(k for k in keys if k not in preference)


def plot_learning_curves(source, out_path=None):
    """One panel per scenario (fixed order), one line plus CI band per
    policy, x-axis in students seen (5 per epoch). Returns the figure."""
    curves = load_curveset(source)
    scenarios = _ordered(curves, SCENARIO_ORDER)
    fig, axes = plt.subplots(
        1, len(scenarios), figsize=(4.2 * len(scenarios), 3.4), squeeze=False,
        sharey=True,
    )
    for ax, scenario in zip(axes[0], scenarios):
        for policy in _ordered(curves[scenario], POLICY_ORDER):
            pts = curves[scenario][policy]
            students = [e * STUDENTS_PER_EPOCH for e, _, _, _ in pts]
            means = [m for _, m, _, _ in pts]
            los = [lo for _, _, lo, _ in pts]
            his = [hi for _, _, _, hi in pts]
            line, = ax.plot(students, means, label=policy, marker="o", markersize=3)
            ax.fill_between(students, los, his, alpha=0.2, color=line.get_color())
        ax.set_title(SCENARIO_TITLES.get(scenario, scenario))
        ax.set_xlabel("students")
    axes[0][0].set_ylabel("mean episodic return")
    axes[0][-1].legend(loc="best", fontsize=8)
    fig.tight_layout()
    if out_path is not None:
        fig.savefig(out_path, dpi=150)
    return fig


def smooth(values, window: int) -> list[float]:
    """Trailing moving average; window=1 is the identity."""
    if window < 1:
        raise FigureError(f"smoothing window must be >= 1, got {window}")
    out = []
    acc = 0.0
    for i, v in enumerate(values):
        acc += v
        if i >= window:
            acc -= values[i - window]
        out.append(acc / min(i + 1, window))
    return out


def plot_pretrain_curve(csv_path, out_path=None, window: int = 20):
    """Collected reward against environment steps for one pre-training run
    (the per-run curve schema with the step count in the epoch column)."""
    csv_path = Path(csv_path)
    rows = _read_rows(csv_path, RUN_HEADER)
    steps, rewards = [], []
    for i, row in enumerate(rows, start=2):
        if row["split"] != "train":
            continue
        steps.append(int(_float(row, "epoch", csv_path, i)))
        rewards.append(_float(row, "mean_return", csv_path, i))
    if not steps:
        raise FigureError(f"{csv_path}: no train rows to plot")
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    ax.plot(steps, rewards, alpha=0.35, label="per collect")
    ax.plot(steps, smooth(rewards, window), label=f"smoothed (w={window})")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("mean episodic reward")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    if out_path is not None:
        fig.savefig(out_path, dpi=150)
    return fig
