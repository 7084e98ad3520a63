import math
from dataclasses import replace

import numpy as np
import pytest

from sfq.catalog import PolicyDelta, validate
from sfq.seeds import stream_key
from sfq.metric import NormalizationBounds, compute_sfq, normalize, risk_index
from sfq.simulate import (
    EVENT_BUDGET,
    RUNS_HEADER,
    TRACE_STREAM,
    CohortTrace,
    aggregate_trace,
    run_monte_carlo,
    runs_to_csv,
    simulate_cohort_trace,
    simulate_run_aggregate,
)


def quiet(cfg, **kw):
    return validate(replace(cfg, noise=replace(cfg.noise, run_noise_multiplier=0.0), **kw))


def with_delta(cfg, index, **delta):
    pols = list(cfg.policies)
    pols[index] = replace(pols[index], delta=PolicyDelta(**delta))
    return validate(replace(cfg, policies=tuple(pols)))


def small_trace_config(cfg, **baseline):
    return validate(replace(cfg, baseline=replace(cfg.baseline, cohort_size=100,
                                                  horizon_weeks=4, **baseline)))


class TestAggregateRun:
    def test_zero_noise_baseline(self, catalog):
        cfg = quiet(catalog)
        pol = cfg.policies[0]
        r = simulate_run_aggregate(cfg, pol, 0)
        assert r.raw.latency_s == pytest.approx(math.exp(-0.2), abs=1e-15)
        assert round(r.raw.latency_s, 4) == 0.8187
        assert (r.raw.failure_pct, r.raw.prompts_per_user_week, r.raw.tickets_per_100_week) == (
            2.0, 0.30, 12.8)
        assert r.raw.risk_index == risk_index(cfg.scenarios, pol.effectiveness)

    def test_additive_shift(self, catalog):
        cfg = with_delta(quiet(catalog), 0, failure_pct=-1.5)
        assert simulate_run_aggregate(cfg, cfg.policies[0], 3).raw.failure_pct == pytest.approx(0.5)

    def test_clamped_shift(self, catalog):
        cfg = with_delta(quiet(catalog), 0, failure_pct=-3.0)
        assert simulate_run_aggregate(cfg, cfg.policies[0], 3).raw.failure_pct == 0.0

    def test_matches_batch(self, catalog):
        cfg = replace(catalog, runs_per_policy=50)
        batch = run_monte_carlo(cfg)
        for i, pol in enumerate(cfg.policies):
            for r in (0, 17, 49):
                assert simulate_run_aggregate(cfg, pol, r) == batch[pol.id][r]


class TestMonteCarlo:
    def test_single_run_zero_noise(self, catalog):
        cfg = quiet(catalog)
        cfg = validate(replace(cfg, runs_per_policy=2))
        runs = run_monte_carlo(cfg)
        for pol in cfg.policies:
            r = runs[pol.id][0]
            expected = cfg.baseline.failure_pct + pol.delta.failure_pct
            assert r.raw.failure_pct == pytest.approx(expected, abs=1e-12)
            assert runs[pol.id][0].sfq == runs[pol.id][1].sfq

    def test_counts_and_order(self, builtin_runs, catalog):
        assert list(builtin_runs) == list(catalog.policy_ids)
        for rs in builtin_runs.values():
            assert len(rs) == catalog.runs_per_policy
            assert [r.run_index for r in rs] == list(range(len(rs)))

    def test_deterministic_and_parallel_free(self, catalog):
        cfg = replace(catalog, runs_per_policy=300)
        a = runs_to_csv(run_monte_carlo(cfg))
        b = runs_to_csv(run_monte_carlo(cfg, workers=4))
        assert a == b == runs_to_csv(run_monte_carlo(cfg))

    def test_seed_changes_output(self, catalog):
        cfg = replace(catalog, runs_per_policy=20)
        assert runs_to_csv(run_monte_carlo(cfg)) != runs_to_csv(
            run_monte_carlo(replace(cfg, master_seed=1)))

    def test_clamp_respect_and_consistency(self, builtin_runs, catalog):
        b = catalog.bounds
        for rs in builtin_runs.values():
            for r in rs:
                assert b.latency_s[0] <= r.raw.latency_s <= b.latency_s[1]
                assert b.failure_pct[0] <= r.raw.failure_pct <= b.failure_pct[1]
                assert b.prompts_per_user_week[0] <= r.raw.prompts_per_user_week <= b.prompts_per_user_week[1]
                assert b.tickets_per_100_week[0] <= r.raw.tickets_per_100_week <= b.tickets_per_100_week[1]
                assert 0.0 <= r.raw.risk_index <= 1.0
                assert normalize(r.raw, b) == r.normalized
                assert compute_sfq(normalize(r.raw, b), catalog.weights) == r.sfq

    def test_failure_mean_sanity(self, catalog):
        cfg = validate(replace(catalog, noise=replace(catalog.noise, run_noise_multiplier=1.0),
                               policies=tuple(replace(p, delta=PolicyDelta()) for p in catalog.policies)))
        runs = run_monte_carlo(cfg)
        for rs in runs.values():
            mean = np.mean([r.raw.failure_pct for r in rs])
            assert abs(mean - 2.0) <= 3 * 0.10 / math.sqrt(2000)

    def test_empirical_normalization(self, catalog):
        cfg = validate(replace(catalog, runs_per_policy=200, normalization="empirical"))
        runs = run_monte_carlo(cfg)
        allraw = [r.raw for rs in runs.values() for r in rs]
        bounds = NormalizationBounds.empirical(allraw)
        hats = [r.normalized.l_hat for rs in runs.values() for r in rs]
        assert min(hats) == 0.0 and max(hats) == 1.0
        r = runs[cfg.policy_ids[2]][5]
        assert r.normalized == normalize(r.raw, bounds)

    def test_csv_format(self, catalog):
        cfg = replace(catalog, runs_per_policy=3)
        text = runs_to_csv(run_monte_carlo(cfg))
        lines = text.split("\n")
        assert lines[0] == ",".join(RUNS_HEADER)
        assert lines[-1] == ""
        rows = [ln.split(",") for ln in lines[1:-1]]
        assert len(rows) == 15
        assert [(r[0], int(r[1])) for r in rows] == sorted((r[0], int(r[1])) for r in rows)
        assert all(len(f.replace("-", "").replace(".", "").lstrip("0")) <= 9
                   for r in rows for f in r[2:] if "e" not in f)


class TestTrace:
    def test_statistics(self, catalog):
        # 36 traces of 100 users x 4 weeks = 14,400 user-weeks
        cfg = small_trace_config(catalog)
        traces = [simulate_cohort_trace(cfg, cfg.policies[0], stream_key(cfg.master_seed, 0, r, TRACE_STREAM))
                  for r in range(36)]
        signins = np.concatenate([t.signin_count.ravel() for t in traces])
        assert 13.8 <= signins.mean() <= 14.2
        assert 0.80 <= np.median(np.concatenate([t.latencies for t in traces])) <= 0.84
        for trace in traces:
            assert np.all(trace.latencies > 0)
            assert np.all(trace.failure_count <= trace.signin_count)
            assert trace.latencies.size == trace.signin_count.sum()

    def test_zero_failure_rate(self, catalog):
        cfg = small_trace_config(catalog, failure_pct=0.0)
        trace = simulate_cohort_trace(cfg, cfg.policies[0], 1)
        assert trace.failure_count.sum() == 0

    def test_full_scale_aggregate_near_baselines(self, catalog):
        trace = simulate_cohort_trace(catalog, catalog.policies[0], 2024)
        raw = aggregate_trace(trace)
        assert raw.latency_s == pytest.approx(math.exp(-0.2), rel=0.02)
        assert raw.failure_pct == pytest.approx(2.0, rel=0.02)
        assert raw.prompts_per_user_week == pytest.approx(0.30, rel=0.02)
        assert raw.tickets_per_100_week == pytest.approx(12.8, rel=0.02)

    def test_aggregate_definitions(self):
        trace = CohortTrace(np.array([[3]]), np.array([1.0, 2.0, 3.0]), np.array([[0]]),
                            np.array([[0]]), np.array([0]))
        raw = aggregate_trace(trace, risk_index=0.4)
        assert (raw.latency_s, raw.failure_pct, raw.risk_index) == (2.0, 0.0, 0.4)
        users = 100
        trace = CohortTrace(np.ones((users, 1), dtype=int), np.ones(users),
                            np.zeros((users, 1), dtype=int),
                            np.array([[1]] * 30 + [[0]] * 70), np.array([5]))
        raw = aggregate_trace(trace)
        assert raw.prompts_per_user_week == pytest.approx(0.30)
        assert raw.tickets_per_100_week == pytest.approx(5.0)

    def test_empty_trace(self):
        trace = CohortTrace(np.zeros((2, 1), dtype=int), np.array([]), np.zeros((2, 1), dtype=int),
                            np.zeros((2, 1), dtype=int), np.array([0]))
        with pytest.raises(ValueError):
            aggregate_trace(trace)

    def test_event_budget(self, catalog):
        cfg = validate(replace(catalog, baseline=replace(catalog.baseline, cohort_size=10**6)))
        assert cfg.baseline.cohort_size * 12 * 14 > EVENT_BUDGET
        with pytest.raises(ValueError, match="budget"):
            simulate_cohort_trace(cfg, cfg.policies[0], 0)

    def test_trace_mode_monte_carlo(self, catalog):
        cfg = validate(replace(small_trace_config(catalog), runs_per_policy=3))
        runs = run_monte_carlo(cfg, mode="trace")
        again = run_monte_carlo(cfg, mode="trace", workers=3)
        assert runs_to_csv(runs) == runs_to_csv(again)
        shifted = [r.raw.tickets_per_100_week for r in runs["combined_controls"]]
        assert np.mean(shifted) > np.mean([r.raw.tickets_per_100_week for r in runs["baseline"]])
