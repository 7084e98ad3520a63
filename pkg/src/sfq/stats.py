"""Bootstrap confidence intervals, Cohen's d and per-policy summaries.

Bootstrap details, fixed so outputs are bit-stable:

* samples are sorted ascending first (result is permutation invariant);
* resample ``b`` position ``i`` picks index ``floor(u * n)``, with ``u`` the
  53-bit uniform from substream ``(seed, b)`` at counter ``i``;
* a mean is ``x[0] + fsum(x - x[0]) / n`` over the sorted sample;
* quantiles interpolate linearly between order statistics at
  ``h = (B - 1) * q`` ("type 7").
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import seeds

CHUNK = 512


class StatsError(ValueError):
    pass


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    level: float
    resamples: int


@dataclass(frozen=True)
class PolicySummary:
    policy_id: str
    mean_sfq: float
    ci_lower: float
    ci_upper: float
    effect_vs_baseline: float
    run_sd: float
    n_runs: int


def shifted_mean(sorted_x: np.ndarray) -> float:
    shift = float(sorted_x[0])
    return shift + math.fsum((sorted_x - shift).tolist()) / len(sorted_x)


def quantile_type7(sorted_vals: Sequence[float], q: float) -> float:
    h = (len(sorted_vals) - 1) * q
    lo = math.floor(h)
    hi = min(lo + 1, len(sorted_vals) - 1)
    a, b = sorted_vals[lo], sorted_vals[hi]
    return a + (h - lo) * (b - a)


def bootstrap_means(samples: Sequence[float], resamples: int, seed: int) -> np.ndarray:
    """Means of ``resamples`` percentile-bootstrap resamples (unsorted, by resample index)."""
    x = np.sort(np.asarray(samples, dtype=np.float64))
    n = len(x)
    shift = float(x[0])
    dev = x - shift
    positions = np.arange(n, dtype=np.uint64)[None, :]
    out = np.empty(resamples)
    for start in range(0, resamples, CHUNK):
        b = np.arange(start, min(start + CHUNK, resamples), dtype=np.uint64)
        keys = seeds.stream_keys(seed, b)[:, None]
        idx = seeds.uniform_index(keys, positions, n)
        for row, picks in enumerate(dev[idx].tolist()):
            out[start + row] = shift + math.fsum(picks) / n
    return out


def bootstrap_ci(samples: Sequence[float], level: float = 0.95, resamples: int = 10_000,
                 seed: int = 0) -> ConfidenceInterval:
    if len(samples) < 2:
        raise StatsError("bootstrap needs at least 2 samples")
    if not 0.0 < level < 1.0:
        raise StatsError(f"level must be in (0, 1), got {level}")
    if resamples < 1:
        raise StatsError("resamples must be >= 1")
    means = sorted(bootstrap_means(samples, resamples, seed).tolist())
    lower = quantile_type7(means, (1.0 - level) / 2.0)
    upper = quantile_type7(means, (1.0 + level) / 2.0)
    return ConfidenceInterval(lower, upper, level, resamples)


def _mean_var(x: Sequence[float]) -> tuple[float, float, int]:
    x = [float(v) for v in x]
    n = len(x)
    m = math.fsum(x) / n
    return m, math.fsum((v - m) ** 2 for v in x) / (n - 1), n


def cohens_d(treatment: Sequence[float], control: Sequence[float]) -> float:
    """Standardized mean difference with pooled (n-1) standard deviation."""
    if len(treatment) < 2 or len(control) < 2:
        raise StatsError("cohens_d needs at least 2 values per group")
    m1, v1, n1 = _mean_var(treatment)
    m0, v0, n0 = _mean_var(control)
    pooled = ((n1 - 1) * v1 + (n0 - 1) * v0) / (n1 + n0 - 2)
    if pooled <= 0.0:
        raise StatsError("zero pooled variance: effect size undefined")
    return (m1 - m0) / math.sqrt(pooled)


def summarize(runs: Mapping[str, Sequence], baseline_id: str, level: float = 0.95,
              resamples: int = 10_000, seed: int = 0,
              order: Sequence[str] | None = None) -> list[PolicySummary]:
    """Table-1 style summary.  ``runs`` values are RunResults or plain SFQ floats.

    Every policy is bootstrapped with the same ``seed`` so identical run sets
    give identical intervals.
    """
    if baseline_id not in runs:
        raise StatsError(f"baseline policy {baseline_id!r} not in runs")
    values = {pid: [getattr(r, "sfq", r) for r in rs] for pid, rs in runs.items()}
    base = values[baseline_id]
    out = []
    for pid in (order or list(runs)):
        v = values[pid]
        if len(v) < 2:
            raise StatsError(f"policy {pid!r} has fewer than 2 runs")
        mean = shifted_mean(np.sort(np.asarray(v, dtype=np.float64)))
        ci = bootstrap_ci(v, level, resamples, seed)
        effect = 0.0 if pid == baseline_id else cohens_d(v, base)
        _, var, n = _mean_var(v)
        out.append(PolicySummary(pid, mean, ci.lower, ci.upper, effect, math.sqrt(var), n))
    return out


SUMMARY_HEADER = ("policy", "mean", "ci_lower", "ci_upper", "effect_d")


def summary_to_csv(summaries: Sequence[PolicySummary], decimals: int | None = None) -> str:
    """Machine output (``decimals=None``: shortest round-trip repr) or a rounded report view."""
    fmt = repr if decimals is None else (lambda x: f"{x:.{decimals}f}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for s in summaries:
        w.writerow([s.policy_id, fmt(s.mean_sfq), fmt(s.ci_lower), fmt(s.ci_upper),
                    fmt(s.effect_vs_baseline)])
    return buf.getvalue()
