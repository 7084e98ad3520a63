"""Command-line entry point.

    sfq simulate     --config PATH --seed U64 --mode aggregate|trace --runs N --out DIR
    sfq score        --failure F --prompts P --tickets H (--risk R | --policy ID) [--latency L]
    sfq sensitivity  --config PATH --draws N --seed U64 --out DIR
    sfq calibrate    --config PATH --targets PATH --out PATH

Exit codes: 0 success, 1 input/validation error, 2 usage error,
3 calibration tolerance miss (the best-effort config is still written).
"""
from __future__ import annotations

import argparse
import csv
import json
import math
import sys
from dataclasses import replace
from datetime import datetime, timezone
from pathlib import Path

from . import __version__
from .calibrate import fit
from .catalog import (
    ConfigError,
    SimulationConfig,
    config_hash,
    load_config,
    save_config,
    tomllib,
    validate,
)
from .metric import (
    NormalizationBounds,
    NormalizedComponents,
    RawComponents,
    ValidationError,
    WeightVector,
    compute_sfq,
    normalize,
    risk_index,
)
from .sensitivity import (
    rank_stability,
    rank_stability_to_csv,
    sample_weights,
    tornado,
    tornado_to_csv,
)
from .simulate import mean_components, run_monte_carlo, runs_to_csv
from .stats import StatsError, summarize, summary_to_csv


# median sign-in latency used when `score` gets no --latency (published rounded value)
DEFAULT_SCORE_LATENCY = 0.82


class InputError(Exception):
    pass


def _u64(text: str) -> int:
    try:
        v = int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be a 64-bit unsigned integer")
    return v


def _positive_int(text: str) -> int:
    try:
        v = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {text!r}") from None
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _load(path: str | None) -> SimulationConfig:
    try:
        return load_config(None if path is None else Path(path))
    except (ConfigError, ValidationError) as exc:
        raise InputError(str(exc)) from None
    except OSError as exc:
        raise InputError(f"cannot read config: {exc}") from None


def _write(out: Path, name: str, text: str, written: list[str]) -> None:
    (out / name).write_bytes(text.encode("utf-8"))
    written.append(name)


def _manifest(out: Path, cfg: SimulationConfig, written: list[str], command: str) -> None:
    manifest = {
        "command": command,
        "config_hash": config_hash(cfg),
        "master_seed": cfg.master_seed,
        "tool_version": __version__,
        "timestamp": datetime.now(timezone.utc).isoformat(timespec="seconds"),
        "artifacts": sorted(written + ["manifest.json"]),
    }
    (out / "manifest.json").write_bytes(
        (json.dumps(manifest, indent=2, sort_keys=True) + "\n").encode("utf-8"))


def _effective_config(args) -> SimulationConfig:
    cfg = _load(args.config)
    changes = {}
    if args.seed is not None:
        changes["master_seed"] = args.seed
    if getattr(args, "runs", None) is not None:
        changes["runs_per_policy"] = args.runs
    try:
        return validate(replace(cfg, **changes)) if changes else cfg
    except ValidationError as exc:
        raise InputError(str(exc)) from None


def _report_table(summaries, cfg: SimulationConfig) -> str:
    names = {p.id: p.display_name for p in cfg.policies}
    width = max(len(n) for n in names.values())
    lines = [f"{'Policy':<{width}}  Mean   CI lower  CI upper  Effect (d)"]
    for s in summaries:
        lines.append(f"{names[s.policy_id]:<{width}}  {s.mean_sfq:.3f}  {s.ci_lower:.3f}     "
                     f"{s.ci_upper:.3f}     {s.effect_vs_baseline:.3f}")
    return "\n".join(lines)


def cmd_simulate(args) -> int:
    cfg = _effective_config(args)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    runs = run_monte_carlo(cfg, mode=args.mode, workers=args.workers)
    summaries = summarize(runs, cfg.baseline_policy, 0.95, cfg.bootstrap_resamples,
                          cfg.master_seed, order=cfg.policy_ids)
    written: list[str] = []
    _write(out, "runs.csv", runs_to_csv(runs), written)
    _write(out, "summary.csv", summary_to_csv(summaries), written)
    table = _report_table(summaries, cfg)
    _write(out, "summary_report.txt", table + "\n", written)
    if not args.no_figures:
        from .plotting import plot_policy_means
        plot_policy_means(summaries, {p.id: p.display_name for p in cfg.policies},
                          out / "sfq_by_policy.png")
        written.append("sfq_by_policy.png")
    _manifest(out, cfg, written, "simulate")
    print(table)
    return 0


def _means_from_runs_csv(path: Path, cfg: SimulationConfig) -> dict[str, NormalizedComponents]:
    rows: dict[str, list[RawComponents]] = {}
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            for row in csv.DictReader(fh):
                rows.setdefault(row["policy_id"], []).append(RawComponents(
                    float(row["latency_s"]), float(row["failure_pct"]), float(row["prompts"]),
                    float(row["tickets"]), float(row["risk"])))
    except (OSError, KeyError, ValueError) as exc:
        raise InputError(f"cannot read runs file {path}: {exc}") from None
    bounds = cfg.bounds
    if cfg.normalization == "empirical":
        bounds = NormalizationBounds.empirical([r for rs in rows.values() for r in rs])
    out = {}
    order = [p for p in cfg.policy_ids if p in rows] + [p for p in rows if p not in cfg.policy_ids]
    for pid in order:
        norms = [normalize(r, bounds) for r in rows[pid]]
        cols = zip(*((n.l_hat, n.f_hat, n.p_hat, n.h_hat, n.r_hat) for n in norms))
        out[pid] = NormalizedComponents(*(min(max(math.fsum(c) / len(norms), 0.0), 1.0)
                                          for c in cols))
    return out


def cmd_sensitivity(args) -> int:
    cfg = _effective_config(args)
    if args.runs_csv:
        means = _means_from_runs_csv(Path(args.runs_csv), cfg)
    else:
        means = mean_components(run_monte_carlo(cfg, workers=args.workers))
    if len(means) < 2:
        raise InputError("sensitivity analysis needs at least 2 policies")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    seed = cfg.master_seed if args.seed is None else args.seed
    draws = sample_weights(args.draws, 5, seed)
    stability = rank_stability(means, draws)
    torn = tornado(means, cfg.weights)
    top = next(iter(torn.max_swing))
    summary = (f"draws: {stability.draws}\n"
               f"preserved fraction: {stability.preserved_fraction:.3f}\n"
               f"reference order (low to high SFQ): {', '.join(stability.reference_order)}\n"
               f"top-swing component: {top} ({torn.max_swing[top]:.4f})\n"
               f"component order by swing: {', '.join(torn.component_order)}\n")
    written: list[str] = []
    _write(out, "rank_stability.csv", rank_stability_to_csv(stability), written)
    _write(out, "tornado.csv", tornado_to_csv(torn), written)
    _write(out, "sensitivity_summary.txt", summary, written)
    if not args.no_figures:
        from .plotting import plot_rank_stability, plot_tornado
        plot_rank_stability(stability, out / "rank_stability.png")
        plot_tornado(torn, out / "tornado.png")
        written += ["rank_stability.png", "tornado.png"]
    _manifest(out, cfg, written, "sensitivity")
    print(summary, end="")
    return 0


def _parse_weights(text: str) -> WeightVector:
    try:
        vals = [float(x) for x in text.split(",")]
    except ValueError:
        raise InputError(f"weights must be 5 comma-separated numbers, got {text!r}") from None
    if len(vals) != 5:
        raise InputError(f"weights must be 5 comma-separated numbers, got {text!r}")
    try:
        return WeightVector(*vals)
    except ValidationError as exc:
        raise InputError(str(exc)) from None


def cmd_score(args) -> int:
    cfg = _load(args.config)
    weights = _parse_weights(args.weights) if args.weights else cfg.weights
    if args.risk is not None:
        risk = args.risk
    elif args.policy is not None:
        try:
            risk = risk_index(cfg.scenarios, cfg.policy(args.policy).effectiveness)
        except KeyError:
            raise InputError(f"unknown policy {args.policy!r}") from None
    else:
        raise InputError("--risk is required unless --policy is given")
    try:
        raw = RawComponents(args.latency, args.failure, args.prompts, args.tickets, risk)
        norm = normalize(raw, cfg.bounds)
    except ValidationError as exc:
        raise InputError(str(exc)) from None
    sfq = compute_sfq(norm, weights)
    print(f"sfq {sfq:.6f}")
    for name in ("l_hat", "f_hat", "p_hat", "h_hat", "r_hat"):
        print(f"{name} {getattr(norm, name):.6f}")
    return 0


def _read_targets(path: Path) -> tuple[dict[str, float], float | None]:
    """Targets file: optional top-level ``run_sd`` and a ``[means]`` table of policy -> mean."""
    try:
        doc = tomllib.loads(path.read_text(encoding="utf-8"))
    except (OSError, tomllib.TOMLDecodeError) as exc:
        raise InputError(f"cannot read targets: {exc}") from None
    unknown = set(doc) - {"means", "run_sd"}
    if unknown or not isinstance(doc.get("means"), dict):
        raise InputError("targets file needs a [means] table and optionally run_sd")
    means = {}
    for pid, v in doc["means"].items():
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0.0 <= v <= 1.0:
            raise InputError(f"target for {pid} must be a number in [0, 1], got {v!r}")
        means[pid] = float(v)
    sd = doc.get("run_sd")
    if sd is not None and (isinstance(sd, bool) or not isinstance(sd, (int, float)) or sd < 0):
        raise InputError(f"run_sd must be a number >= 0, got {sd!r}")
    return means, None if sd is None else float(sd)


def cmd_calibrate(args) -> int:
    cfg = _effective_config(args)
    means, sd = _read_targets(Path(args.targets))
    try:
        result = fit(cfg, means, sd)
    except ValueError as exc:
        raise InputError(str(exc)) from None
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_config(result.config, out)
    for pid in result.config.policy_ids:
        print(f"{pid} target {means[pid]:.4f} simulated {result.means[pid]:.4f} "
              f"residual {result.residuals[pid]:+.6f}")
    if sd is not None:
        print(f"run_sd target {sd:.4f} simulated {result.run_sd:.4f}")
    if not result.converged:
        print("calibration missed tolerance; best-effort config written", file=sys.stderr)
        return 3
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sfq", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"sfq {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, runs=True):
        p.add_argument("--config", help="TOML config (default: built-in catalog)")
        p.add_argument("--seed", type=_u64, help="override the master seed")
        if runs:
            p.add_argument("--runs", type=_positive_int, help="override runs per policy")

    p = sub.add_parser("simulate", help="Monte Carlo runs and Table-1 style summary")
    common(p)
    p.add_argument("--mode", choices=("aggregate", "trace"), default="aggregate")
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("score", help="score observed aggregate components")
    p.add_argument("--config", help="config supplying bounds, weights and policies")
    p.add_argument("--latency", type=float, default=DEFAULT_SCORE_LATENCY,
                   help=f"median sign-in latency in s (default {DEFAULT_SCORE_LATENCY})")
    p.add_argument("--failure", type=float, required=True, help="failure rate, percent")
    p.add_argument("--prompts", type=float, required=True, help="MFA prompts per user per week")
    p.add_argument("--tickets", type=float, required=True, help="tickets per 100 users per week")
    p.add_argument("--risk", type=float, help="residual risk index in [0, 1]")
    p.add_argument("--policy", help="take the risk index from this catalog policy")
    p.add_argument("--weights", help="five comma-separated weights w_l,w_f,w_p,w_h,w_r")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("sensitivity", help="Dirichlet rank stability and tornado analysis")
    common(p)
    p.add_argument("--draws", type=_positive_int, default=10_000)
    p.add_argument("--runs-csv", help="reuse a runs.csv instead of simulating")
    p.add_argument("--out", default="out")
    p.add_argument("--workers", type=_positive_int, default=1)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_sensitivity)

    p = sub.add_parser("calibrate", help="fit the catalog to target means")
    common(p)
    p.add_argument("--targets", required=True, help="TOML targets file")
    p.add_argument("--out", required=True, help="path of the fitted config")
    p.set_defaults(func=cmd_calibrate)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (InputError, StatsError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
