"""Statistical reporting: studentized bootstrap intervals and the paired
comparison used for the headline transfer claim."""

from __future__ import annotations

import numpy as np
from scipy import stats as sstats


def bootstrap_ci(
    samples,
    resamples: int = 10000,
    level: float = 0.95,
    rng: np.random.Generator | None = None,
) -> tuple[float, float, float]:
    """Studentized bootstrap interval for the mean.

    Resample the data, form the pivot t* = (mean* - mean) / se* for each
    resample, and invert its empirical quantiles around the observed mean:
    (mean - t_hi * se, mean - t_lo * se). Degenerate inputs (fewer than two
    samples, or zero variance) collapse to a point interval."""
    x = np.asarray(samples, dtype=float)
    if x.ndim != 1:
        raise ValueError("samples must be one-dimensional")
    n = x.size
    mean = float(x.mean()) if n else float("nan")
    if n < 2 or float(x.std(ddof=1)) == 0.0:
        return mean, mean, mean
    if rng is None:
        rng = np.random.default_rng(0)

    se = x.std(ddof=1) / np.sqrt(n)
    idx = rng.integers(0, n, size=(resamples, n))
    boot = x[idx]
    boot_mean = boot.mean(axis=1)
    boot_se = boot.std(axis=1, ddof=1) / np.sqrt(n)
    # a resample of n identical values has se* = 0; its pivot carries no
    # information, so it is dropped rather than divided through
    ok = boot_se > 0.0
    t = (boot_mean[ok] - mean) / boot_se[ok]
    if t.size == 0:
        return mean, mean, mean
    alpha = 1.0 - level
    t_lo, t_hi = np.quantile(t, [alpha / 2, 1.0 - alpha / 2])
    return mean, float(mean - t_hi * se), float(mean - t_lo * se)


def paired_one_sided_p(greater, lesser) -> float:
    """p-value for mean(greater) > mean(lesser) on paired samples.

    A constant nonzero difference is certain evidence in its direction, so
    it maps to p = 0 or 1 rather than the t-test's undefined statistic."""
    a = np.asarray(greater, dtype=float)
    b = np.asarray(lesser, dtype=float)
    if a.shape != b.shape or a.ndim != 1 or a.size < 2:
        raise ValueError("need two paired one-dimensional samples, n >= 2")
    diff = a - b
    if float(diff.std(ddof=1)) == 0.0:
        if diff[0] > 0:
            return 0.0
        return 1.0 if diff[0] < 0 else 0.5
    return float(sstats.ttest_rel(a, b, alternative="greater").pvalue)


def summarize_final_returns(finals: dict[str, list[float]], rng_seed: int = 0):
    """Per-group mean, sd, and bootstrap CI over final returns."""
    out = {}
    for key in sorted(finals):
        x = np.asarray(finals[key], dtype=float)
        mean, lo, hi = bootstrap_ci(x, rng=np.random.default_rng(rng_seed))
        out[key] = {
            "n": int(x.size),
            "mean": float(x.mean()),
            "sd": float(x.std(ddof=1)) if x.size > 1 else 0.0,
            "ci_lo": lo,
            "ci_hi": hi,
        }
    return out
