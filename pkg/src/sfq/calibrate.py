"""Fit per-policy deltas, effectiveness and the noise multiplier to target means.

Deterministic coordinate descent with first-improvement acceptance.  The
noise draws are fixed by ``config.master_seed`` (common random numbers), so
the objective is a deterministic function of the parameters.

Coordinates are visited per policy in config order as
``delta.latency_s, delta.failure_pct, delta.prompts_per_user_week,
delta.tickets_per_100_week, effectiveness.<scenario>...`` and finally the
global ``run_noise_multiplier``.  Each step is tried upwards, then downwards;
the step halves after a sweep with no accepted move.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable, Mapping

import numpy as np

from .catalog import EffectivenessVector, SimulationConfig, validate
from .metric import COMPONENTS, risk_index
from .simulate import component_draws, raw_friction

MEAN_TOL = 0.005
SD_REL_TOL = 0.15
MAX_MULTIPLIER = 100.0
MULTIPLIER = "run_noise_multiplier"


class CalibrationError(ValueError):
    """Targets not reached within tolerance.  ``result`` holds the best fit found."""

    def __init__(self, message: str, result: "FitResult"):
        super().__init__(message)
        self.result = result


@dataclass(frozen=True)
class FitResult:
    config: SimulationConfig
    means: dict[str, float]
    run_sd: float
    residuals: dict[str, float]
    sd_ratio: float | None
    converged: bool
    evaluations: int


def _round9(x: float) -> float:
    return float(format(x, ".9g"))


def default_parameters(config: SimulationConfig) -> tuple[str, ...]:
    return (tuple(f"delta.{c}" for c in COMPONENTS)
            + tuple(f"effectiveness.{s}" for s in config.scenarios.ids)
            + (MULTIPLIER,))


class _Model:
    """Vectorized SFQ evaluation over cached noise draws."""

    def __init__(self, config: SimulationConfig):
        if config.normalization != "fixed":
            raise ValueError("calibration requires fixed normalization bounds")
        self.config = config
        n = config.runs_per_policy
        self.z = [component_draws(config, i, np.arange(n)) for i in range(len(config.policies))]
        self.lo = np.array([config.bounds.pair(c)[0] for c in COMPONENTS])
        self.hi = np.array([config.bounds.pair(c)[1] for c in COMPONENTS])
        self.evaluations = 0

    def sfq(self, config: SimulationConfig, index: int) -> np.ndarray:
        self.evaluations += 1
        policy = config.policies[index]
        raw = raw_friction(config, policy, self.z[index])
        hat = (raw - self.lo) / (self.hi - self.lo)
        r = risk_index(config.scenarios, policy.effectiveness)
        w = config.weights
        return (w.w_l * hat[:, 0] + w.w_f * hat[:, 1] + w.w_p * hat[:, 2]
                + w.w_h * hat[:, 3] + w.w_r * (1.0 - r))


def _get(config: SimulationConfig, index: int, name: str) -> float:
    if name == MULTIPLIER:
        return config.noise.run_noise_multiplier
    kind, key = name.split(".", 1)
    policy = config.policies[index]
    return getattr(policy.delta, key) if kind == "delta" else policy.effectiveness[key]


def _set(config: SimulationConfig, index: int, name: str, value: float) -> SimulationConfig:
    if name == MULTIPLIER:
        return replace(config, noise=replace(config.noise, run_noise_multiplier=value))
    kind, key = name.split(".", 1)
    policy = config.policies[index]
    if kind == "delta":
        policy = replace(policy, delta=replace(policy.delta, **{key: value}))
    else:
        eff = dict(policy.effectiveness)
        eff[key] = value
        policy = replace(policy, effectiveness=EffectivenessVector(eff))
    policies = list(config.policies)
    policies[index] = policy
    return replace(config, policies=tuple(policies))


def _limits(config: SimulationConfig, name: str) -> tuple[float, float, float]:
    """(lower, upper, unit step scale) for a parameter."""
    if name == MULTIPLIER:
        return 0.0, MAX_MULTIPLIER, 1.0
    kind, key = name.split(".", 1)
    if kind == "delta":
        lo, hi = config.bounds.pair(key)
        base = config.baseline.component(key)
        return lo - base, hi - base, hi - lo
    return 0.0, 1.0, 1.0


def fit(config: SimulationConfig, targets: Mapping[str, float],
        target_run_sd: float | None = None, parameters: Iterable[str] | None = None,
        pin_baseline: bool = True, initial_step: float = 0.005, min_step: float = 1e-7, stop_mean: float = 1e-4,
        stop_sd: float = 0.005, max_sweeps: int = 2000) -> FitResult:
    """Run the coordinate descent and return the best configuration found.

    With ``pin_baseline`` the reference policy keeps its deltas; only its
    effectiveness values move.
    """
    ids = config.policy_ids
    missing = [p for p in ids if p not in targets]
    if missing:
        raise ValueError(f"targets missing for policies: {missing}")
    unknown = [p for p in targets if p not in ids]
    if unknown:
        raise ValueError(f"targets for unknown policies: {unknown}")
    for pid, t in targets.items():
        if not 0.0 <= t <= 1.0:
            raise ValueError(f"target for {pid} must be in [0, 1], got {t}")
    if target_run_sd is not None and not target_run_sd >= 0:
        raise ValueError("target_run_sd must be >= 0")

    names = tuple(default_parameters(config) if parameters is None else parameters)
    allowed = set(default_parameters(config))
    for name in names:
        if name not in allowed:
            raise ValueError(f"unknown calibration parameter {name!r}")
    per_policy = [n for n in names if n != MULTIPLIER]
    fit_multiplier = MULTIPLIER in names and target_run_sd is not None
    base_index = config.policy_index(config.baseline_policy)

    model = _Model(config)
    tgt = np.array([targets[p] for p in ids])
    stats = [_moments(model.sfq(config, i)) for i in range(len(ids))]

    def objective(st) -> float:
        means = np.array([m for m, _ in st])
        err = float(np.sum((means - tgt) ** 2))
        if target_run_sd is not None:
            err += _log_ratio(_pooled(st), target_run_sd) ** 2
        return err

    def done(st) -> bool:
        means = np.array([m for m, _ in st])
        if np.max(np.abs(means - tgt)) > stop_mean:
            return False
        return target_run_sd is None or abs(_log_ratio(_pooled(st), target_run_sd)) <= stop_sd

    best = objective(stats)
    step = initial_step
    sweeps = 0
    while step >= min_step and sweeps < max_sweeps and not done(stats):
        sweeps += 1
        improved = False
        for i in range(len(ids)):
            for name in per_policy:
                if pin_baseline and i == base_index and name.startswith("delta."):
                    continue
                lo, hi, scale = _limits(config, name)
                current = _get(config, i, name)
                for sign in (1.0, -1.0):
                    value = min(max(current + sign * step * scale, lo), hi)
                    if value == current:
                        continue
                    trial = _set(config, i, name, value)
                    trial_stats = list(stats)
                    trial_stats[i] = _moments(model.sfq(trial, i))
                    obj = objective(trial_stats)
                    if obj < best:
                        config, stats, best, improved = trial, trial_stats, obj, True
                        break
        if fit_multiplier:
            lo, hi, _ = _limits(config, MULTIPLIER)
            current = config.noise.run_noise_multiplier
            for sign in (1.0, -1.0):
                value = min(max(current * math.exp(sign * step * 5.0), lo), hi)
                if current == 0.0:
                    value = step if sign > 0 else 0.0
                if value == current:
                    continue
                trial = _set(config, 0, MULTIPLIER, value)
                trial_stats = [_moments(model.sfq(trial, i)) for i in range(len(ids))]
                obj = objective(trial_stats)
                if obj < best:
                    config, stats, best, improved = trial, trial_stats, obj, True
                    break
        if not improved:
            step *= 0.5

    if sweeps:
        config = _canonical(config, names)
        stats = [_moments(model.sfq(config, i)) for i in range(len(ids))]
    config = validate(config)

    means = {p: float(m) for p, (m, _) in zip(ids, stats)}
    residuals = {p: means[p] - targets[p] for p in ids}
    run_sd = _pooled(stats)
    ratio = None if target_run_sd is None or target_run_sd == 0 else run_sd / target_run_sd
    ok = all(abs(r) <= MEAN_TOL for r in residuals.values())
    if target_run_sd is not None:
        ok = ok and abs(run_sd - target_run_sd) <= SD_REL_TOL * target_run_sd
    return FitResult(config, means, run_sd, residuals, ratio, ok, model.evaluations)


def evaluate(config: SimulationConfig) -> tuple[dict[str, float], float]:
    """Simulated mean SFQ per policy and the pooled per-run sd, without fitting."""
    model = _Model(config)
    stats = [_moments(model.sfq(config, i)) for i in range(len(config.policies))]
    return {p: m for p, (m, _) in zip(config.policy_ids, stats)}, _pooled(stats)


def fit_to_targets(config: SimulationConfig, targets: Mapping[str, float],
                   target_run_sd: float | None = None, **kwargs) -> SimulationConfig:
    """Calibrated config, or :class:`CalibrationError` carrying the best residuals."""
    result = fit(config, targets, target_run_sd, **kwargs)
    if not result.converged:
        worst = max(result.residuals.items(), key=lambda kv: abs(kv[1]))
        raise CalibrationError(
            f"targets not reached: worst mean residual {worst[0]}={worst[1]:+.4f}"
            + (f", run sd ratio {result.sd_ratio:.3f}" if result.sd_ratio is not None else ""),
            result)
    return result.config


def _moments(x: np.ndarray) -> tuple[float, float]:
    return float(np.mean(x)), float(np.var(x, ddof=1))


def _pooled(stats) -> float:
    return math.sqrt(sum(v for _, v in stats) / len(stats))


def _log_ratio(sd: float, target: float) -> float:
    if target == 0.0:
        return 0.0 if sd == 0.0 else sd
    if sd == 0.0:
        return -50.0
    return math.log(sd / target)


def _canonical(config: SimulationConfig, names) -> SimulationConfig:
    """Round fitted parameters to 9 significant digits (serialization-exact)."""
    for i in range(len(config.policies)):
        for name in names:
            if name == MULTIPLIER:
                continue
            lo, hi, _ = _limits(config, name)
            config = _set(config, i, name, min(max(_round9(_get(config, i, name)), lo), hi))
    m = config.noise.run_noise_multiplier
    return _set(config, 0, MULTIPLIER, _round9(m))
