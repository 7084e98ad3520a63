"""Weight sensitivity: Dirichlet rank stability and one-way tornado analysis.

Both analyses work on policy-level mean normalized components.  Scores are
evaluated with the same left-to-right arithmetic as ``compute_sfq`` so the
vectorized paths agree bit-for-bit with scalar evaluation.
"""
from __future__ import annotations

import csv
import io
import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from . import seeds
from .metric import NormalizedComponents, WeightVector

COMPONENT_LABELS = ("latency", "failure", "prompts", "helpdesk", "residual_risk")


@dataclass(frozen=True)
class WeightSample:
    draw_index: int
    weights: tuple[float, ...]

    def vector(self) -> WeightVector:
        return WeightVector(*self.weights)


@dataclass(frozen=True)
class RankStabilityReport:
    draws: int
    preserved_fraction: float
    pair_preservation: dict[tuple[str, str], float]
    reference_order: tuple[str, ...]
    preserved: np.ndarray  # (draws, pairs) bool, pairs in pair_preservation order


@dataclass(frozen=True)
class TornadoEntry:
    component: str
    policy: str
    sfq_low: float
    sfq_high: float
    swing: float
    rank_changes: int


@dataclass(frozen=True)
class TornadoReport:
    entries: tuple[TornadoEntry, ...]  # grouped by component, components by max swing desc
    max_swing: dict[str, float]
    rank_changes: dict[str, int]

    @property
    def component_order(self) -> tuple[str, ...]:
        return tuple(self.max_swing)


def normalize_exponentials(raw: np.ndarray) -> np.ndarray:
    """Rows of positive draws scaled to unit sum (left-to-right row sum)."""
    raw = np.atleast_2d(np.asarray(raw, dtype=np.float64))
    total = raw[:, 0].copy()
    for k in range(1, raw.shape[1]):
        total = total + raw[:, k]
    return raw / total[:, None]


def weight_matrix(count: int, dimension: int, seed: int) -> np.ndarray:
    """Dirichlet(1, ..., 1) draws; row ``i`` uses substream ``(seed, i)``, counters 0..dimension-1."""
    keys = seeds.stream_keys(seed, np.arange(count, dtype=np.uint64))[:, None]
    exp = seeds.standard_exponential(keys, np.arange(dimension, dtype=np.uint64)[None, :])
    return normalize_exponentials(exp)


def sample_weights(count: int, dimension: int = 5, seed: int = 0) -> list[WeightSample]:
    """Dirichlet(1, ..., 1) weight samples, one substream per draw."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if dimension < 2:
        raise ValueError("dimension must be >= 2")
    w = weight_matrix(count, dimension, seed)
    return [WeightSample(i, tuple(row)) for i, row in enumerate(w.tolist())]


def _as_matrix(draws) -> np.ndarray:
    if isinstance(draws, np.ndarray):
        return draws
    return np.array([d.weights if isinstance(d, WeightSample) else d.as_tuple()
                     for d in draws])


def _scores(W: np.ndarray, eff: np.ndarray) -> np.ndarray:
    """SFQ per (draw, policy), same operation order as compute_sfq."""
    s = W[:, 0:1] * eff[None, :, 0]
    for k in range(1, 5):
        s = s + W[:, k:k + 1] * eff[None, :, k]
    return s


def _effective(mean_components: Mapping[str, NormalizedComponents]) -> tuple[list[str], np.ndarray]:
    ids = list(mean_components)
    eff = np.array([[c.l_hat, c.f_hat, c.p_hat, c.h_hat, c.r_hat] for c in mean_components.values()])
    eff[:, 4] = 1.0 - eff[:, 4]
    return ids, eff


def rank_stability(mean_components: Mapping[str, NormalizedComponents],
                   draws: Sequence[WeightSample] | np.ndarray) -> RankStabilityReport:
    """Fraction of unordered policy pairs whose SFQ ordering matches the equal-weight one."""
    if len(mean_components) < 2:
        raise ValueError("rank stability needs at least 2 policies")
    ids, eff = _effective(mean_components)
    W = _as_matrix(draws)
    ref = _scores(np.full((1, 5), 0.2), eff)[0]
    scores = _scores(W, eff)
    pairs = list(itertools.combinations(range(len(ids)), 2))
    preserved = np.empty((len(W), len(pairs)), dtype=bool)
    for j, (a, b) in enumerate(pairs):
        preserved[:, j] = np.sign(scores[:, a] - scores[:, b]) == np.sign(ref[a] - ref[b])
    per_pair = {(ids[a], ids[b]): float(preserved[:, j].mean()) for j, (a, b) in enumerate(pairs)}
    order = tuple(ids[i] for i in sorted(range(len(ids)), key=lambda i: (ref[i], ids[i])))
    # exact count ratio; equals the mean of the per-pair fractions
    fraction = int(preserved.sum()) / preserved.size
    return RankStabilityReport(len(W), fraction, per_pair, order, preserved)


def observed_ranges(mean_components: Mapping[str, NormalizedComponents]) -> dict[str, tuple[float, float]]:
    """Cross-policy min/max of each mean normalized component (``residual_risk`` on r_hat)."""
    ids, eff = _effective(mean_components)
    raw = eff.copy()
    raw[:, 4] = np.array([c.r_hat for c in mean_components.values()])
    return {lab: (float(raw[:, k].min()), float(raw[:, k].max()))
            for k, lab in enumerate(COMPONENT_LABELS)}


def _ranks(scores: np.ndarray) -> np.ndarray:
    # rank 0 = lowest SFQ; ties share the lower rank
    return np.array([int(np.sum(scores < s)) for s in scores])


def tornado(mean_components: Mapping[str, NormalizedComponents], weights: WeightVector,
            ranges: Mapping[str, tuple[float, float]] | None = None) -> TornadoReport:
    """One-way perturbation of each component over ``ranges`` (normalized units).

    For the risk component the range is on r_hat; its low-SFQ end is the high
    end of r_hat.  Swing is ``|sfq_high - sfq_low|``.
    """
    if ranges is None:
        ranges = observed_ranges(mean_components)
    for lab in COMPONENT_LABELS:
        lo, hi = ranges[lab]
        if not 0.0 <= lo <= hi <= 1.0:
            raise ValueError(f"range for {lab} must satisfy 0 <= lo <= hi <= 1, got ({lo}, {hi})")
    ids, eff = _effective(mean_components)
    W = np.array([weights.as_tuple()])
    ref_ranks = _ranks(_scores(W, eff)[0])

    groups = []
    for k, lab in enumerate(COMPONENT_LABELS):
        lo, hi = ranges[lab]
        ends = (1.0 - hi, 1.0 - lo) if k == 4 else (lo, hi)
        entries = []
        changes = 0
        for p, pid in enumerate(ids):
            sfq_end = []
            moved = 0
            for v in ends:
                trial = eff.copy()
                trial[p, k] = v
                scores = _scores(W, trial)[0]
                sfq_end.append(float(scores[p]))
                moved += int(_ranks(scores)[p] != ref_ranks[p])
            low, high = sfq_end
            changes += moved
            entries.append(TornadoEntry(lab, pid, low, high, abs(high - low), moved))
        groups.append((max(e.swing for e in entries), k, lab, entries, changes))
    groups.sort(key=lambda g: (-g[0], g[1]))
    return TornadoReport(
        entries=tuple(e for g in groups for e in g[3]),
        max_swing={g[2]: g[0] for g in groups},
        rank_changes={g[2]: g[4] for g in groups},
    )


def rank_stability_to_csv(report: RankStabilityReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("draw_index", "pair", "preserved"))
    pairs = [f"{a}|{b}" for a, b in report.pair_preservation]
    for i, row in enumerate(report.preserved.tolist()):
        for pair, ok in zip(pairs, row):
            w.writerow((i, pair, int(ok)))
    return buf.getvalue()


def tornado_to_csv(report: TornadoReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("component", "policy", "sfq_low", "sfq_high", "swing"))
    for e in report.entries:
        w.writerow((e.component, e.policy, repr(e.sfq_low), repr(e.sfq_high), repr(e.swing)))
    return buf.getvalue()
