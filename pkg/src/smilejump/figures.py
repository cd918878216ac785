"""Report figures rendered next to the delimited output.

Three families, all PNG via the Agg backend with metadata suppressed so
repeated runs are byte-identical:
    loadings_<tau>.png      parallel-coordinate plot of the rotated loadings
    explained_variance.png  per-maturity explained-variance bars
    distributions_<tau>.png first-hour day mean / variance distributions for
                            jump mornings vs no-jump days (hist + ECDF)
"""

from __future__ import annotations

from pathlib import Path
from typing import Mapping

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .jumps import DayPartition
from .smilepca import PcaModel, ScorePanel
from .study import TestReport, day_summaries, trim

__all__ = ["render_report_figures"]

_SAVE_OPTS = {"dpi": 120, "metadata": {"Software": None}}
_PC_COLORS = ("tab:blue", "tab:red", "tab:orange")


def _style() -> None:
    plt.rcParams.update({
        "figure.figsize": (8, 4.5),
        "axes.grid": True,
        "grid.linestyle": ":",
        "font.size": 9,
        "svg.hashsalt": "smilejump",
    })


def _tau_name(tau: float) -> str:
    return repr(float(tau))


def _loadings_figure(path: Path, model: PcaModel, centers: np.ndarray) -> None:
    fig, ax = plt.subplots()
    for j in range(model.n_components):
        ax.plot(centers, model.loadings[:, j], marker="o", ms=3,
                color=_PC_COLORS[j % len(_PC_COLORS)], label=f"PC{j + 1}")
    ax.axvline(0.95, color="red", ls=":", lw=1)
    ax.axvline(1.05, color="red", ls=":", lw=1)
    ax.axhline(0.0, color="black", lw=0.6)
    ax.set_xlabel("moneyness K/S")
    ax.set_ylabel("rotated loading")
    ax.set_title(f"Rotated component loadings, tau = {model.tau:g}y "
                 "(OTM puts | ATM | OTM calls)")
    ax.legend(loc="best")
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def _explained_figure(path: Path, models: Mapping[float, PcaModel]) -> None:
    taus = sorted(models)
    k = max(models[t].n_components for t in taus)
    width = 0.8 / (k + 1)
    fig, ax = plt.subplots()
    x = np.arange(len(taus))
    for j in range(k):
        vals = [100.0 * models[t].explained_fractions[j] for t in taus]
        ax.bar(x + j * width, vals, width, label=f"PC{j + 1}",
               color=_PC_COLORS[j % len(_PC_COLORS)])
    totals = [100.0 * models[t].total_explained for t in taus]
    ax.bar(x + k * width, totals, width, label="total", color="0.6")
    ax.set_xticks(x + 0.4 - width / 2)
    ax.set_xticklabels([f"{t:g}y" for t in taus])
    ax.set_ylabel("% variance explained")
    ax.set_title("Explained variance by component and maturity")
    ax.legend(loc="best")
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def _distributions_figure(
    path: Path,
    panel: ScorePanel,
    partition: DayPartition,
    tau: float,
    trim_lo: float,
    trim_hi: float,
    min_minutes: int,
) -> None:
    summary = day_summaries({tau: panel}, partition, min_minutes=min_minutes)
    pcs = sorted({s.pc for s in summary.summaries})
    fig, axes = plt.subplots(len(pcs), 2, figsize=(9, 2.6 * len(pcs)), squeeze=False)
    for row, pc in enumerate(pcs):
        for col, attr in enumerate(("mu", "nu")):
            ax = axes[row][col]
            for group, color, label in ((1, "tab:red", "jump mornings"), (0, "tab:blue", "no-jump days")):
                vals = np.asarray([
                    getattr(s, attr) for s in summary.summaries
                    if s.pc == pc and s.group == group
                ])
                if len(vals) == 0:
                    continue
                vals = trim(vals, trim_lo, trim_hi).values
                ax.hist(vals, bins=30, density=True, alpha=0.35, color=color)
                xs = np.sort(vals)
                ax2 = ax.twinx()
                ax2.step(xs, np.arange(1, len(xs) + 1) / len(xs), where="post",
                         color=color, lw=1.2, label=label)
                ax2.set_ylim(0, 1.05)
                ax2.set_yticks([])
            ax.set_title(f"PC{pc} {'day mean' if attr == 'mu' else 'day variance'}")
    fig.suptitle(f"First-hour score distributions, tau = {tau:g}y (hist + ECDF)")
    fig.tight_layout()
    fig.savefig(path, **_SAVE_OPTS)
    plt.close(fig)


def render_report_figures(
    outdir: Path,
    models: Mapping[float, PcaModel],
    panels: Mapping[float, ScorePanel],
    report: TestReport,
    partition: DayPartition,
    config,
) -> list[Path]:
    """Render every report figure into outdir; returns the written paths."""
    _style()
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    written = []
    centers = config.grid.centers
    for tau in sorted(models):
        p = outdir / f"loadings_{_tau_name(tau)}.png"
        _loadings_figure(p, models[tau], centers)
        written.append(p)
    p = outdir / "explained_variance.png"
    _explained_figure(p, models)
    written.append(p)
    for tau in sorted(panels):
        p = outdir / f"distributions_{_tau_name(tau)}.png"
        _distributions_figure(p, panels[tau], partition, tau,
                              config.trim_lo, config.trim_hi, config.min_minutes)
        written.append(p)
    return written
