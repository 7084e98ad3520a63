"""Normalization, the Security Friction Quotient, and the residual-risk index.

All functions here are pure.  The score of a policy is

    SFQ = w_l*l_hat + w_f*f_hat + w_p*p_hat + w_h*h_hat + w_r*(1 - r_hat)

with every hat in [0, 1] and the weights on the unit simplex.  Note the last
term: as written, a *larger* residual risk lowers the score.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, fields
from typing import Mapping, Sequence

COMPONENTS = ("latency_s", "failure_pct", "prompts_per_user_week", "tickets_per_100_week")
SCENARIO_IDS = ("spray", "theft", "travel", "legacy", "aitm")
WEIGHT_TOL = 1e-9


class ValidationError(ValueError):
    """Invalid domain value.  ``field`` is the dotted path of the offender."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass(frozen=True)
class RawComponents:
    latency_s: float
    failure_pct: float
    prompts_per_user_week: float
    tickets_per_100_week: float
    risk_index: float

    def __post_init__(self):
        if not self.latency_s > 0:
            raise ValidationError("latency_s", f"must be > 0, got {self.latency_s}")
        for name in ("failure_pct", "prompts_per_user_week", "tickets_per_100_week"):
            if not getattr(self, name) >= 0:
                raise ValidationError(name, f"must be >= 0, got {getattr(self, name)}")
        if not 0.0 <= self.risk_index <= 1.0:
            raise ValidationError("risk_index", f"must be in [0, 1], got {self.risk_index}")


@dataclass(frozen=True)
class NormalizationBounds:
    """Clamp ranges (lo, hi) in physical units for the four friction components."""

    latency_s: tuple[float, float] = (0.2, 10.0)
    failure_pct: tuple[float, float] = (0.0, 20.0)
    prompts_per_user_week: tuple[float, float] = (0.0, 3.0)
    tickets_per_100_week: tuple[float, float] = (0.0, 20.0)

    def __post_init__(self):
        for name in COMPONENTS:
            lo, hi = getattr(self, name)
            if not lo < hi:
                raise ValidationError(f"bounds.{name}", f"need lo < hi, got ({lo}, {hi})")
            object.__setattr__(self, name, (float(lo), float(hi)))

    def pair(self, name: str) -> tuple[float, float]:
        return getattr(self, name)

    @classmethod
    def empirical(cls, corpus: Sequence[RawComponents]) -> "NormalizationBounds":
        """Bounds equal to the observed min/max of each component over ``corpus``."""
        if not corpus:
            raise ValueError("empirical bounds need a non-empty corpus")
        kwargs = {}
        for name in COMPONENTS:
            vals = [getattr(r, name) for r in corpus]
            kwargs[name] = (min(vals), max(vals))
        return cls(**kwargs)


@dataclass(frozen=True)
class NormalizedComponents:
    l_hat: float
    f_hat: float
    p_hat: float
    h_hat: float
    r_hat: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not 0.0 <= v <= 1.0:
                raise ValidationError(f.name, f"must be in [0, 1], got {v}")

    def effective(self) -> tuple[float, float, float, float, float]:
        """Score-increasing orientation: (l_hat, f_hat, p_hat, h_hat, 1 - r_hat)."""
        return (self.l_hat, self.f_hat, self.p_hat, self.h_hat, 1.0 - self.r_hat)


@dataclass(frozen=True)
class WeightVector:
    w_l: float = 0.2
    w_f: float = 0.2
    w_p: float = 0.2
    w_h: float = 0.2
    w_r: float = 0.2

    def __post_init__(self):
        vals = self.as_tuple()
        for f, v in zip(fields(self), vals):
            if not (v >= 0 and math.isfinite(v)):
                raise ValidationError(f"weights.{f.name}", f"must be a finite value >= 0, got {v}")
        total = sum(vals)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError("weights", f"weights sum {total:g} ≠ 1")
        if total != 1.0:
            for f, v in zip(fields(self), vals):
                object.__setattr__(self, f.name, v / total)

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.w_l, self.w_f, self.w_p, self.w_h, self.w_r)

    @classmethod
    def equal(cls) -> "WeightVector":
        return cls()


@dataclass(frozen=True)
class ScenarioSet:
    ids: tuple[str, ...] = SCENARIO_IDS
    prevalence: tuple[float, ...] = (0.30, 0.25, 0.15, 0.15, 0.15)

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(self.ids))
        object.__setattr__(self, "prevalence", tuple(float(p) for p in self.prevalence))
        if len(set(self.ids)) != len(self.ids):
            raise ValidationError("scenarios.ids", "scenario ids must be unique")
        if len(self.ids) != len(self.prevalence):
            raise ValidationError("scenarios.prevalence", "one prevalence per scenario id required")
        if any(not p >= 0 for p in self.prevalence):
            raise ValidationError("scenarios.prevalence", "prevalences must be >= 0")
        total = sum(self.prevalence)
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError("scenarios.prevalence", f"prevalences sum {total:g} ≠ 1")


def normalize_component(x: float, lo: float, hi: float) -> float:
    """Clamp ``x`` to [lo, hi] and rescale to [0, 1]."""
    if not lo < hi:
        raise ValueError(f"invalid bounds: need lo < hi, got ({lo}, {hi})")
    return (min(max(x, lo), hi) - lo) / (hi - lo)


def normalize(raw: RawComponents, bounds: NormalizationBounds) -> NormalizedComponents:
    return NormalizedComponents(
        l_hat=normalize_component(raw.latency_s, *bounds.latency_s),
        f_hat=normalize_component(raw.failure_pct, *bounds.failure_pct),
        p_hat=normalize_component(raw.prompts_per_user_week, *bounds.prompts_per_user_week),
        h_hat=normalize_component(raw.tickets_per_100_week, *bounds.tickets_per_100_week),
        r_hat=raw.risk_index,
    )


def compute_sfq(norm: NormalizedComponents, w: WeightVector) -> float:
    return (w.w_l * norm.l_hat + w.w_f * norm.f_hat + w.w_p * norm.p_hat
            + w.w_h * norm.h_hat + w.w_r * (1.0 - norm.r_hat))


def risk_index(scenarios: ScenarioSet, eff: Mapping[str, float]) -> float:
    """Prevalence-weighted residual compromise probability, sum(pi_s * (1 - E_s))."""
    if set(eff) != set(scenarios.ids):
        raise ValueError(
            f"effectiveness scenarios {sorted(eff)} do not match scenario set {sorted(scenarios.ids)}")
    total = 0.0
    for sid, pi in zip(scenarios.ids, scenarios.prevalence):
        total += pi * (1.0 - eff[sid])
    # rounding can leave the sum a hair outside [0, 1]
    return min(max(total, 0.0), 1.0)
