"""Static figures for the report path (PNG, Agg backend)."""
from __future__ import annotations

from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

from .sensitivity import RankStabilityReport, TornadoReport  # noqa: E402
from .stats import PolicySummary  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "axes.titlesize": 10,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "savefig.dpi": 150,
}
# PNG metadata without a version string keeps files stable across matplotlib releases
_META = {"Software": None}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, metadata=_META)
    plt.close(fig)
    return path


def plot_policy_means(summaries: Sequence[PolicySummary], names: Mapping[str, str],
                      path) -> Path:
    """Mean SFQ per policy with bootstrap CI error bars."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(6.0, 3.2))
        labels = [names.get(s.policy_id, s.policy_id) for s in summaries]
        means = [s.mean_sfq for s in summaries]
        err = [[s.mean_sfq - s.ci_lower for s in summaries],
               [s.ci_upper - s.mean_sfq for s in summaries]]
        ax.barh(labels, means, xerr=err, color="#4c72b0", capsize=3)
        ax.invert_yaxis()
        ax.set_xlabel("mean SFQ (95% CI)")
        ax.set_xlim(0, max(1e-9, max(means)) * 1.15)
        return _save(fig, Path(path))


def plot_rank_stability(report: RankStabilityReport, path) -> Path:
    """Per-pair preservation fractions."""
    with plt.rc_context(STYLE):
        pairs = list(report.pair_preservation)
        vals = [report.pair_preservation[p] for p in pairs]
        fig, ax = plt.subplots(figsize=(6.0, 0.35 * len(pairs) + 1.2))
        ax.barh([f"{a} vs {b}" for a, b in pairs], vals, color="#55a868")
        ax.axvline(report.preserved_fraction, color="k", lw=0.8, ls="--")
        ax.invert_yaxis()
        ax.set_xlim(0, 1)
        ax.set_xlabel(f"ordering preserved ({report.draws} draws, "
                      f"overall {report.preserved_fraction:.3f})")
        return _save(fig, Path(path))


def plot_tornado(report: TornadoReport, path) -> Path:
    """Max SFQ swing per component, largest first."""
    with plt.rc_context(STYLE):
        comps = list(report.max_swing)
        fig, ax = plt.subplots(figsize=(5.0, 2.8))
        ax.barh(comps, [report.max_swing[c] for c in comps], color="#c44e52")
        ax.invert_yaxis()
        ax.set_xlabel("max SFQ swing across policies")
        return _save(fig, Path(path))
