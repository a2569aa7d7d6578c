"""Run orchestration and persistence.

A run is one (experiment config, seed) unit of work. Configs hash to a
stable id; results live under runs/<config-hash>/<seed>/ so reruns are
idempotent unless forced. The curve CSV schema is the contract consumed
by the summary commands and by external plotting.
"""

from __future__ import annotations

import csv
import hashlib
import json
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass
from multiprocessing import get_context
from pathlib import Path

import numpy as np

from .corpus import Corpus, build_grid_corpus, load_corpus
from .embeddings import SyntheticStore
from .env import Scenario
from .pipelines import (
    EMBED_DIM,
    POLICY_KINDS,
    PRETRAIN_VARIANTS,
    PretrainConfig,
    SessionConfig,
    pretrain,
    run_adaptive_session,
)
from .stats import bootstrap_ci, paired_one_sided_p, summarize_final_returns

CURVE_HEADER = ["run_id", "seed", "epoch", "split", "mean_return", "n_episodes"]


class ConfigError(ValueError):
    pass


def data_dir() -> Path:
    return Path(os.environ.get("PATHFORGE_DATA_DIR", ".pathforge_data"))


def checkpoint_key(path: str | Path, root: Path | None = None) -> str:
    """Canonical spelling of a checkpoint path for config hashing. Files
    under the data root are keyed relative to it so a run's identity does
    not depend on where the root is mounted or how its path was spelled;
    paths outside the root are kept verbatim."""
    base = (root or data_dir()).resolve()
    target = Path(path).resolve()
    if target.is_relative_to(base):
        return target.relative_to(base).as_posix()
    return str(path)


def resolve_checkpoint(key: str, root: Path | None = None) -> Path:
    """Map a stored checkpoint key back to a file: relative keys are looked
    up under the data root first, then as given."""
    path = Path(key)
    if path.is_absolute():
        return path
    under_root = (root or data_dir()) / path
    return under_root if under_root.exists() else path


@dataclass(frozen=True)
class ExperimentSpec:
    """Everything that identifies a run except the seed."""

    command: str  # pretrain | finetune | baseline
    policy: str | None = None
    scenario: str | None = None
    variant: str | None = None
    checkpoint: str | None = None
    corpus: str = "grid"  # "grid" or a corpus JSON path
    # Distinguishes runs that share a policy, e.g. gnn fine-tunes started
    # from different pre-training checkpoints; aggregation groups by it.
    label: str | None = None

    def __post_init__(self):
        if self.command == "pretrain":
            if (self.variant or "full") not in PRETRAIN_VARIANTS:
                raise ConfigError(f"unknown pretrain variant {self.variant!r}")
        elif self.command in ("finetune", "baseline"):
            if self.policy not in POLICY_KINDS:
                raise ConfigError(
                    f"unknown policy {self.policy!r}; valid: {', '.join(POLICY_KINDS)}"
                )
            try:
                Scenario(self.scenario)
            except ValueError:
                raise ConfigError(
                    f"unknown scenario {self.scenario!r}; valid: "
                    f"{', '.join(s.value for s in Scenario)}"
                ) from None
            if self.policy == "gnn" and not self.checkpoint:
                raise ConfigError("policy 'gnn' requires --checkpoint")
        else:
            raise ConfigError(f"unknown command {self.command!r}")

    def canonical(self) -> dict:
        out = {k: v for k, v in asdict(self).items() if v is not None}
        if self.command == "pretrain":
            out.setdefault("variant", "full")
            out.pop("corpus", None)
        return out

    @property
    def config_hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:12]

    @property
    def run_id(self) -> str:
        tag = self.label or self.variant or self.policy or "full"
        parts = [self.command, tag]
        if self.scenario:
            parts.append(self.scenario)
        parts.append(self.config_hash)
        return "-".join(parts)


def run_dir(spec: ExperimentSpec, seed: int, root: Path | None = None) -> Path:
    return (root or data_dir()) / "runs" / spec.config_hash / str(seed)


def write_curve(path: Path, run_id: str, seed: int, rows) -> None:
    """Rows: (epoch, split, mean_return, n_episodes). Floats are written
    with shortest round-trip repr so identical runs are identical bytes."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(CURVE_HEADER)
        for epoch, split, mean, n in rows:
            writer.writerow([run_id, seed, epoch, split, repr(float(mean)), n])


def read_curve(path: Path) -> list[dict]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != CURVE_HEADER:
            raise ConfigError(f"{path}: expected header {','.join(CURVE_HEADER)}")
        return [row for row in reader]


def _load_target_corpus(spec: ExperimentSpec) -> Corpus:
    if spec.corpus == "grid":
        return build_grid_corpus(SyntheticStore(EMBED_DIM))
    return load_corpus(spec.corpus)


def execute_run(spec: ExperimentSpec, seed: int, root: Path | None = None) -> dict:
    """Run one unit of work and persist its artifacts. The record file is
    written last and marks completion."""
    out = run_dir(spec, seed, root)
    out.mkdir(parents=True, exist_ok=True)
    started = time.time()

    if spec.command == "pretrain":
        cfg = PretrainConfig(variant=spec.variant or "full")
        model, curve, record = pretrain(seed, cfg)
        model.save(out / "checkpoint.bin")
        rows = [(steps, "train", mean, n) for steps, mean, n in curve]
        write_curve(out / "curve.csv", spec.run_id, seed, rows)
    else:
        checkpoint = None
        if spec.checkpoint:
            checkpoint = resolve_checkpoint(spec.checkpoint, root)
            if not checkpoint.exists():
                raise ConfigError(f"checkpoint not found: {spec.checkpoint}")
        corpus = _load_target_corpus(spec)
        cfg = SessionConfig(scenario=Scenario(spec.scenario))
        rows, record = run_adaptive_session(
            spec.policy, corpus, seed, cfg,
            checkpoint=str(checkpoint) if checkpoint else None,
        )
        write_curve(out / "curve.csv", spec.run_id, seed, rows)

    record.update(
        {
            "run_id": spec.run_id,
            "label": spec.label or spec.policy or spec.variant or "full",
            "config": spec.canonical(),
            "config_hash": spec.config_hash,
            "seed": seed,
            "started": started,
            "elapsed_s": round(time.time() - started, 3),
        }
    )
    with open(out / "record.json", "w") as fh:
        json.dump(record, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return record


def ensure_run(
    spec: ExperimentSpec, seed: int, root: Path | None = None, force: bool = False
) -> tuple[dict, bool]:
    """Idempotent execute: (record, ran). A completed run is recognised by
    its record file and reused unless force is set."""
    marker = run_dir(spec, seed, root) / "record.json"
    if marker.exists() and not force:
        with open(marker) as fh:
            return json.load(fh), False
    return execute_run(spec, seed, root), True


def _job(args):
    spec, seed, root, force = args
    record, ran = ensure_run(spec, seed, Path(root) if root else None, force)
    return spec.run_id, seed, record.get("final_return"), ran


def run_many(
    jobs: list[tuple[ExperimentSpec, int]],
    root: Path | None = None,
    force: bool = False,
    parallel: int = 1,
    log=None,
) -> list:
    """Run a batch of (spec, seed) units, optionally across processes."""
    packed = [(spec, seed, str(root) if root else None, force) for spec, seed in jobs]
    results = []
    if parallel <= 1:
        for item in packed:
            results.append(_job(item))
            if log:
                log(results[-1])
        return results
    with ProcessPoolExecutor(
        max_workers=parallel, mp_context=get_context("spawn")
    ) as pool:
        for res in pool.map(_job, packed):
            results.append(res)
            if log:
                log(res)
    return results


def parse_seeds(text: str) -> list[int]:
    """Seed list syntax: "7", "0..9" (inclusive), or "1,4,7"."""
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..")
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    if not out:
        raise ConfigError(f"no seeds in {text!r}")
    if len(set(out)) != len(out):
        raise ConfigError(f"duplicate seeds in {text!r}")
    return out


def collect_records(root: Path | None = None) -> list[dict]:
    base = (root or data_dir()) / "runs"
    records = []
    for marker in sorted(base.glob("*/*/record.json")):
        with open(marker) as fh:
            records.append(json.load(fh))
    return records


def summarize(root: Path | None = None) -> dict:
    """Final returns grouped by policy and scenario, with bootstrap CIs."""
    records = [r for r in collect_records(root) if "final_return" in r]
    if not records:
        raise ConfigError("no completed session runs found")
    groups: dict[str, list[float]] = {}
    for r in records:
        key = f"{r.get('label') or r['policy']}/{r['scenario']}"
        groups.setdefault(key, []).append(r["final_return"])
    return summarize_final_returns(groups)


AGGREGATE_HEADER = [
    "scenario", "policy", "epoch", "mean_return", "ci_lo", "ci_hi", "n_seeds",
]


def epoch_aggregate(root: Path | None = None, split: str = "eval") -> list[dict]:
    """Across-seed mean and bootstrap CI per (scenario, policy, epoch); the
    single source of the numbers any curve plot may draw."""
    base = (root or data_dir()) / "runs"
    groups: dict[tuple[str, str], dict[int, list[float]]] = {}
    for marker in sorted(base.glob("*/*/record.json")):
        with open(marker) as fh:
            record = json.load(fh)
        if "policy" not in record:
            continue
        key = (record["scenario"], record.get("label") or record["policy"])
        per_epoch = groups.setdefault(key, {})
        for row in read_curve(marker.parent / "curve.csv"):
            if row["split"] == split:
                per_epoch.setdefault(int(row["epoch"]), []).append(
                    float(row["mean_return"])
                )
    out = []
    for (scenario, policy), epochs in sorted(groups.items()):
        for epoch in sorted(epochs):
            vals = epochs[epoch]
            mean, lo, hi = bootstrap_ci(vals, rng=np.random.default_rng(0))
            out.append(
                {
                    "scenario": scenario,
                    "policy": policy,
                    "epoch": epoch,
                    "mean_return": mean,
                    "ci_lo": lo,
                    "ci_hi": hi,
                    "n_seeds": len(vals),
                }
            )
    return out


def export_epoch_curves(path, root: Path | None = None, split: str = "eval") -> int:
    """Write the aggregate view as CSV; returns the number of rows."""
    rows = epoch_aggregate(root, split)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(AGGREGATE_HEADER)
        for r in rows:
            writer.writerow(
                [
                    r["scenario"], r["policy"], r["epoch"],
                    repr(float(r["mean_return"])),
                    repr(float(r["ci_lo"])), repr(float(r["ci_hi"])),
                    r["n_seeds"],
                ]
            )
    return len(rows)
