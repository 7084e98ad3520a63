"""Synthetic authentication traces and the seeded Monte Carlo driver.

Two fidelity modes:

* ``aggregate`` (default): each run draws the four friction components
  directly as ``clamp(baseline + delta + noise)`` with Gaussian noise.
* ``trace``: each run generates event-level sign-ins for the whole cohort and
  aggregates them.  Slow at full scale; used to check that the configured
  baselines are self-consistent.

Seed plan.  Aggregate noise for component ``c`` of run ``r`` of the policy at
position ``p`` in the config is the first draw of substream
``(master_seed, p, r, c)`` (components 0..3 = L, F, P, H).  A trace-mode run
uses ``numpy.random.default_rng(stream_key(master_seed, p, r, 4))``.
"""
from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import seeds
from .catalog import PolicyDefinition, SimulationConfig
from .metric import (
    COMPONENTS,
    NormalizationBounds,
    NormalizedComponents,
    RawComponents,
    compute_sfq,
    normalize,
    risk_index,
)

TRACE_STREAM = 4
EVENT_BUDGET = 50_000_000


@dataclass(frozen=True)
class RunResult:
    policy_id: str
    raw: RawComponents
    normalized: NormalizedComponents
    sfq: float
    run_index: int
    seed: int


@dataclass(frozen=True)
class CohortTrace:
    """Event-level data for one run.

    ``latencies`` holds every sign-in latency, grouped by user-week in
    row-major ``(user, week)`` order; ``signin_count`` gives the group sizes.
    """

    signin_count: np.ndarray  # (users, weeks)
    latencies: np.ndarray  # (sum(signin_count),)
    failure_count: np.ndarray  # (users, weeks)
    prompt_count: np.ndarray  # (users, weeks)
    tickets: np.ndarray  # (weeks,) cohort-level

    @property
    def users(self) -> int:
        return self.signin_count.shape[0]

    @property
    def weeks(self) -> int:
        return self.signin_count.shape[1]


def _clamp(x, lo, hi):
    return np.minimum(np.maximum(x, lo), hi)


def _centre(config: SimulationConfig, policy: PolicyDefinition) -> np.ndarray:
    base = config.baseline
    return np.array([base.component(c) + getattr(policy.delta, c) for c in COMPONENTS])


def component_draws(config: SimulationConfig, policy_index: int, run_indices) -> np.ndarray:
    """Standard-normal noise draws, shape ``(len(run_indices), 4)``."""
    runs = np.asarray(run_indices, dtype=np.uint64)[:, None]
    comps = np.arange(4, dtype=np.uint64)[None, :]
    keys = seeds.stream_keys(config.master_seed, policy_index, runs, comps)
    return seeds.standard_normal(keys, 0)


def raw_friction(config: SimulationConfig, policy: PolicyDefinition, z: np.ndarray) -> np.ndarray:
    """Clamped physical components for noise draws ``z`` (shape ``(n, 4)``)."""
    centre = _centre(config, policy)
    sig = np.array(config.noise.sigmas())
    lo = np.array([config.bounds.pair(c)[0] for c in COMPONENTS])
    hi = np.array([config.bounds.pair(c)[1] for c in COMPONENTS])
    return _clamp(centre + sig * z, lo, hi)


def _assemble(policy_id, values, risk, run_index, seed, bounds, weights) -> RunResult:
    raw = RawComponents(*(float(v) for v in values), risk_index=risk)
    norm = normalize(raw, bounds)
    return RunResult(policy_id, raw, norm, compute_sfq(norm, weights), run_index, seed)


def simulate_run_aggregate(config: SimulationConfig, policy: PolicyDefinition,
                           run_index: int) -> RunResult:
    """One aggregate-mode run with fixed normalization bounds."""
    p = config.policy_index(policy.id)
    values = raw_friction(config, policy, component_draws(config, p, [run_index]))[0]
    risk = risk_index(config.scenarios, policy.effectiveness)
    return _assemble(policy.id, values, risk, run_index,
                     seeds.stream_key(config.master_seed, p, run_index),
                     config.bounds, config.weights)


def simulate_cohort_trace(config: SimulationConfig, policy: PolicyDefinition,
                          seed: int) -> CohortTrace:
    b = config.baseline
    expected_events = b.cohort_size * b.horizon_weeks * b.signin_rate
    if expected_events > EVENT_BUDGET:
        raise ValueError(
            f"trace of ~{expected_events:.3g} sign-ins exceeds the event budget {EVENT_BUDGET:.3g}")
    bounds = config.bounds
    d = policy.delta
    median = float(_clamp(b.latency_s + d.latency_s, *bounds.latency_s))
    fail_pct = float(_clamp(b.failure_pct + d.failure_pct, *bounds.failure_pct))
    prompts = float(_clamp(b.prompts_per_user_week + d.prompts_per_user_week,
                           *bounds.prompts_per_user_week))
    tickets = float(_clamp(b.tickets_per_100_week + d.tickets_per_100_week,
                           *bounds.tickets_per_100_week))

    rng = np.random.default_rng(seed)
    shape = (b.cohort_size, b.horizon_weeks)
    signins = rng.poisson(b.signin_rate, size=shape)
    # latency delta moves the median: shift the log-location
    latencies = rng.lognormal(math.log(median), b.lognormal_sigma, size=int(signins.sum()))
    failures = rng.binomial(signins, fail_pct / 100.0)
    prompt_count = rng.poisson(prompts, size=shape)
    weekly_tickets = rng.poisson(tickets * b.cohort_size / 100.0, size=b.horizon_weeks)
    return CohortTrace(signins, latencies, failures, prompt_count, weekly_tickets)


def aggregate_trace(trace: CohortTrace, risk_index: float = 0.0) -> RawComponents:
    """Reduce a trace to the four friction components; ``risk_index`` is passed through."""
    total = int(trace.signin_count.sum())
    if total == 0:
        raise ValueError("empty trace: no sign-ins")
    user_weeks = trace.users * trace.weeks
    return RawComponents(
        latency_s=float(np.median(trace.latencies)),
        failure_pct=100.0 * float(trace.failure_count.sum()) / total,
        prompts_per_user_week=float(trace.prompt_count.sum()) / user_weeks,
        tickets_per_100_week=100.0 * float(trace.tickets.sum()) / user_weeks,
        risk_index=risk_index,
    )


def _policy_raw(config: SimulationConfig, index: int, mode: str):
    policy = config.policies[index]
    n = config.runs_per_policy
    if mode == "aggregate":
        values = raw_friction(config, policy, component_draws(config, index, np.arange(n)))
    elif mode == "trace":
        rows = []
        for r in range(n):
            trace = simulate_cohort_trace(
                config, policy, seeds.stream_key(config.master_seed, index, r, TRACE_STREAM))
            raw = aggregate_trace(trace)
            rows.append([raw.latency_s, raw.failure_pct, raw.prompts_per_user_week,
                         raw.tickets_per_100_week])
        values = _clamp(np.array(rows),
                        [config.bounds.pair(c)[0] for c in COMPONENTS],
                        [config.bounds.pair(c)[1] for c in COMPONENTS])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return values


def run_monte_carlo(config: SimulationConfig, mode: str = "aggregate",
                    workers: int = 1) -> dict[str, list[RunResult]]:
    """``runs_per_policy`` results per policy, keyed in config policy order.

    Output is identical for any ``workers``; every draw is addressed by its
    (policy, run, component) substream.
    """
    indices = range(len(config.policies))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            raws = list(pool.map(lambda i: _policy_raw(config, i, mode), indices))
    else:
        raws = [_policy_raw(config, i, mode) for i in indices]

    bounds = config.bounds
    if config.normalization == "empirical":
        stacked = np.vstack(raws)
        lo, hi = stacked.min(axis=0), stacked.max(axis=0)
        bounds = NormalizationBounds(**{
            c: (float(lo[k]), float(hi[k])) for k, c in enumerate(COMPONENTS)})

    out: dict[str, list[RunResult]] = {}
    for i, policy in enumerate(config.policies):
        risk = risk_index(config.scenarios, policy.effectiveness)
        keys = seeds.stream_keys(config.master_seed, i, np.arange(config.runs_per_policy))
        out[policy.id] = [
            _assemble(policy.id, raws[i][r], risk, r, int(keys[r]), bounds, config.weights)
            for r in range(config.runs_per_policy)
        ]
    return out


def effective_bounds(runs: dict[str, list[RunResult]], config: SimulationConfig) -> NormalizationBounds:
    if config.normalization == "fixed":
        return config.bounds
    allraw = [r.raw for rs in runs.values() for r in rs]
    return NormalizationBounds.empirical(allraw)


RUNS_HEADER = ("policy_id", "run_index", "latency_s", "failure_pct", "prompts", "tickets",
               "risk", "sfq")


def fmt9(x: float) -> str:
    return format(float(x), ".9g")


def runs_to_csv(runs: dict[str, list[RunResult]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_HEADER)
    for pid in sorted(runs):
        for r in sorted(runs[pid], key=lambda x: x.run_index):
            raw = r.raw
            w.writerow([pid, r.run_index, fmt9(raw.latency_s), fmt9(raw.failure_pct),
                        fmt9(raw.prompts_per_user_week), fmt9(raw.tickets_per_100_week),
                        fmt9(raw.risk_index), fmt9(r.sfq)])
    return buf.getvalue()


def mean_components(runs: dict[str, list[RunResult]]) -> dict[str, NormalizedComponents]:
    """Per-policy means of the normalized components over each run set."""
    out = {}
    for pid, rs in runs.items():
        cols = zip(*((r.normalized.l_hat, r.normalized.f_hat, r.normalized.p_hat,
                      r.normalized.h_hat, r.normalized.r_hat) for r in rs))
        means = [math.fsum(c) / len(rs) for c in cols]
        out[pid] = NormalizedComponents(*(min(max(m, 0.0), 1.0) for m in means))
    return out
