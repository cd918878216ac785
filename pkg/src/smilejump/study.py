"""First-hour study: per-day score summaries, quantile trimming, the
KS / Welch-U comparison of jump mornings against jump-free days, and the
qualitative summary grid.

For every (maturity, component) the day-level mean samples M1, M0 and
variance samples Sigma1, Sigma0 are trimmed independently at the 2% / 98%
empirical quantiles and compared with both tests; each cell reports the
(H0, H0s, H0g) p-value triple.  For tests called as test(M1, M0):
H0s columns carry the p-value of the "F_M1 < F_M0" alternative for KS and
of the "mean rank of M1 < mean rank of M0" alternative for Welch-U, H0g
the mirror images, matching the reporting convention of the tables this
pipeline reproduces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from datetime import date
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .jumps import DayPartition
from .smilepca import ScorePanel
from .stattests import KsResult, WelchUResult, ks_two_sample, welch_u
from .timegrid import MORNING_END

__all__ = [
    "DayScoreSummary",
    "DaySummaries",
    "TrimEntry",
    "CellTests",
    "TestReport",
    "day_summaries",
    "trim",
    "run_study",
    "grid_symbol",
]

MIN_TRIM_SIZE = 50
DEFAULT_MIN_MINUTES = 45

STATISTICS = ("M", "Sigma")
TESTS = ("ks", "welch")


@dataclass(frozen=True)
class DayScoreSummary:
    """Mean and unbiased variance of one day's first-hour scores, one PC."""

    day: date
    group: int          # 1 = jump morning, 0 = no-jump day
    pc: int             # 1-based component index
    tau: float
    mu: float
    nu: float


class DaySummaries(NamedTuple):
    summaries: list[DayScoreSummary]
    skipped_days: dict[date, int]   # day -> first-hour minutes available


@dataclass(frozen=True)
class TrimEntry:
    values: np.ndarray
    lo_bound: float
    hi_bound: float
    n_before: int
    n_after: int


@dataclass(frozen=True)
class CellTests:
    tau: float
    pc: int
    statistic: str                  # "M" or "Sigma"
    sign: int
    n1: int
    n0: int
    trim1: tuple[int, int]          # (before, after) jump-group trimming
    trim0: tuple[int, int]
    ks: KsResult | None
    welch: WelchUResult | None
    insufficient: bool = False
    symbols: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class TestReport:
    taus: tuple[float, ...]
    pcs: tuple[int, ...]
    cells: dict[tuple[float, int, str], CellTests]
    signs: dict[tuple[float, int], int]
    level: float
    cell_level: float
    n_jump_days: int
    n_nojump_days: int
    skipped_days: dict[date, int] = field(default_factory=dict)
    component_labels: dict[float, tuple[str, ...]] = field(default_factory=dict)
    explained: dict[float, tuple[float, ...]] = field(default_factory=dict)

    def symbol(self, tau: float, pc: int, statistic: str, test: str) -> str:
        return self.cells[(tau, pc, statistic)].symbols[test]

    def all_equal(self) -> bool:
        return all(sym == "=" for cell in self.cells.values() for sym in cell.symbols.values())

    # -- serialization ------------------------------------------------------

    def csv_header(self) -> list[str]:
        cols = ["test", "statistic", "maturity"]
        for pc in self.pcs:
            cols += [f"pc{pc}_sign", f"pc{pc}_h0", f"pc{pc}_h0s", f"pc{pc}_h0g"]
        return cols

    def csv_rows(self) -> list[list[str]]:
        rows = []
        for test in TESTS:
            for statistic in STATISTICS:
                for tau in self.taus:
                    row = [test, statistic, repr(tau)]
                    for pc in self.pcs:
                        cell = self.cells[(tau, pc, statistic)]
                        row.append("pos" if cell.sign > 0 else "neg")
                        if cell.insufficient:
                            row += ["NA", "NA", "NA"]
                        elif test == "ks":
                            row += [repr(cell.ks.p_two_sided), repr(cell.ks.p_less), repr(cell.ks.p_greater)]
                        else:
                            row += [repr(cell.welch.p_two_sided), repr(cell.welch.p_less), repr(cell.welch.p_greater)]
                    rows.append(row)
        return rows

    def to_json_dict(self) -> dict:
        cells = {}
        for (tau, pc, statistic), cell in sorted(self.cells.items()):
            entry = {
                "tau": tau,
                "pc": pc,
                "statistic": statistic,
                "sign": cell.sign,
                "n_jump": cell.n1,
                "n_nojump": cell.n0,
                "trim_jump": list(cell.trim1),
                "trim_nojump": list(cell.trim0),
                "insufficient": cell.insufficient,
                "symbols": cell.symbols,
            }
            if cell.ks is not None:
                entry["ks"] = {
                    "d": cell.ks.d, "d_plus": cell.ks.d_plus, "d_minus": cell.ks.d_minus,
                    "h0": cell.ks.p_two_sided, "h0s": cell.ks.p_less, "h0g": cell.ks.p_greater,
                }
            if cell.welch is not None:
                entry["welch"] = {
                    "t": cell.welch.t_statistic, "df": cell.welch.satterthwaite_df,
                    "h0": cell.welch.p_two_sided, "h0s": cell.welch.p_less,
                    "h0g": cell.welch.p_greater,
                }
            cells[f"tau={tau}/pc={pc}/{statistic}"] = entry
        return {
            "level": self.level,
            "cell_level": self.cell_level,
            "group_sizes": {"jump_mornings": self.n_jump_days, "nojump_days": self.n_nojump_days},
            "skipped_days": {d.isoformat(): n for d, n in sorted(self.skipped_days.items())},
            "component_labels": {repr(t): list(v) for t, v in sorted(self.component_labels.items())},
            "explained_fractions": {repr(t): list(v) for t, v in sorted(self.explained.items())},
            "cells": cells,
        }


def day_summaries(
    panels: Mapping[float, ScorePanel] | ScorePanel,
    partition: DayPartition,
    min_minutes: int = DEFAULT_MIN_MINUTES,
    morning_end: int = MORNING_END,
) -> DaySummaries:
    """First-hour mean and variance per (day, component, maturity).

    Only days in the partition's two groups are summarized; days with fewer
    than min_minutes first-hour score rows are skipped and reported.
    """
    if isinstance(panels, ScorePanel):
        panels = {panels.tau: panels}
    groups = {d: 1 for d in partition.jump_days}
    groups.update({d: 0 for d in partition.nojump_days})

    out: list[DayScoreSummary] = []
    skipped: dict[date, int] = {}
    for tau in sorted(panels):
        panel = panels[tau]
        if not panel.deseasonalized:
            raise ValueError("day_summaries expects deseasonalized scores")
        n = len(panel.rows)
        minutes = np.fromiter((m for _, m in panel.rows), dtype=int, count=n)
        ordinals = np.fromiter((d.toordinal() for d, _ in panel.rows), dtype=int, count=n)
        counts_by_day: dict[date, int] = {}
        blocks: dict[date, np.ndarray] = {}
        sel = np.flatnonzero(minutes <= morning_end)
        if len(sel):
            sel = sel[np.argsort(ordinals[sel], kind="stable")]
            day_ord = ordinals[sel]
            starts = np.concatenate([[0], np.flatnonzero(np.diff(day_ord)) + 1])
            ends = np.concatenate([starts[1:], [len(sel)]])
            for s, e in zip(starts, ends):
                d = date.fromordinal(int(day_ord[s]))
                if d in groups:
                    counts_by_day[d] = int(e - s)
                    blocks[d] = panel.scores[sel[s:e]]
        for d in sorted(groups):
            if counts_by_day.get(d, 0) < min_minutes:
                skipped[d] = max(skipped.get(d, 0), counts_by_day.get(d, 0))
                continue
            block = blocks[d]
            mus = block.mean(axis=0)
            nus = block.var(axis=0, ddof=1)
            for j in range(block.shape[1]):
                out.append(DayScoreSummary(day=d, group=groups[d], pc=j + 1, tau=tau,
                                           mu=float(mus[j]), nu=float(nus[j])))
    return DaySummaries(out, skipped)


def trim(values, lo: float = 0.02, hi: float = 0.98, min_size: int = MIN_TRIM_SIZE) -> TrimEntry:
    """Drop observations strictly outside the [lo, hi] empirical quantiles.

    Quantiles use linear interpolation between order statistics; values equal
    to a bound are retained.  Vectors shorter than min_size are passed
    through untrimmed.
    """
    v = np.asarray(values, dtype=float)
    if v.ndim != 1:
        raise ValueError("trim expects a 1-d vector")
    if len(v) < min_size:
        return TrimEntry(v.copy(), -math.inf, math.inf, len(v), len(v))
    lo_b, hi_b = np.quantile(v, [lo, hi])
    kept = v[(v >= lo_b) & (v <= hi_b)]
    return TrimEntry(kept, float(lo_b), float(hi_b), len(v), len(kept))


def grid_symbol(p_two: float, p_plus_dir: float, p_minus_dir: float, sign: int, level: float) -> str:
    """Mechanical +/=/- encoding of one cell.

    '+' needs the two-sided null rejected together with the one-sided
    alternative associated with upward smile impact (under a positive
    loading sign); a negative loading sign mirrors the reading.
    """
    if p_two < level and p_plus_dir < level:
        base = 1
    elif p_two < level and p_minus_dir < level:
        base = -1
    else:
        base = 0
    base *= 1 if sign >= 0 else -1
    return {1: "+", -1: "-", 0: "="}[base]


def run_study(
    summaries: Sequence[DayScoreSummary],
    signs: Mapping[tuple[float, int], int],
    level: float = 0.05,
    familywise: bool = False,
    trim_lo: float = 0.02,
    trim_hi: float = 0.98,
    skipped_days: dict[date, int] | None = None,
    component_labels: Mapping[float, tuple[str, ...]] | None = None,
    explained: Mapping[float, tuple[float, ...]] | None = None,
) -> TestReport:
    """Trim the four day-level vectors per cell and run both test batteries.

    With familywise=True the grid symbols are derived at level / n_cells
    (Bonferroni across the whole grid) so an all-'=' verdict controls the
    grid-wide false-positive rate at `level`; the reported p-values are
    always raw.
    """
    taus = tuple(sorted({s.tau for s in summaries}))
    pcs = tuple(sorted({s.pc for s in summaries}))
    if not taus or not pcs:
        raise ValueError("no summaries to study")

    buckets: dict[tuple[float, int, str, int], list[tuple[date, float]]] = {}
    jump_days, nojump_days = set(), set()
    for s in summaries:
        (jump_days if s.group == 1 else nojump_days).add(s.day)
        buckets.setdefault((s.tau, s.pc, "M", s.group), []).append((s.day, s.mu))
        buckets.setdefault((s.tau, s.pc, "Sigma", s.group), []).append((s.day, s.nu))

    n_cells = len(taus) * len(pcs) * len(STATISTICS) * len(TESTS)
    cell_level = level / n_cells if familywise else level

    cells: dict[tuple[float, int, str], CellTests] = {}
    for tau in taus:
        for pc in pcs:
            sign = int(signs.get((tau, pc), 1))
            for statistic in STATISTICS:
                g1 = sorted(buckets.get((tau, pc, statistic, 1), []))
                g0 = sorted(buckets.get((tau, pc, statistic, 0), []))
                v1 = np.asarray([v for _, v in g1])
                v0 = np.asarray([v for _, v in g0])
                if len(v1) == 0 or len(v0) == 0:
                    cells[(tau, pc, statistic)] = CellTests(
                        tau, pc, statistic, sign, len(v1), len(v0),
                        (len(v1), len(v1)), (len(v0), len(v0)),
                        ks=None, welch=None, insufficient=True,
                        symbols={t: "NA" for t in TESTS},
                    )
                    continue
                t1 = trim(v1, trim_lo, trim_hi)
                t0 = trim(v0, trim_lo, trim_hi)
                ks = ks_two_sample(t1.values, t0.values)
                wu = welch_u(t1.values, t0.values)
                symbols = {
                    # KS: upward impact shows as F_M1 < F_M0, i.e. p_less
                    "ks": grid_symbol(ks.p_two_sided, ks.p_less, ks.p_greater, sign, cell_level),
                    # Welch: upward impact shows as mean rank M1 > M0, i.e. p_greater
                    "welch": grid_symbol(wu.p_two_sided, wu.p_greater, wu.p_less, sign, cell_level),
                }
                cells[(tau, pc, statistic)] = CellTests(
                    tau, pc, statistic, sign,
                    t1.n_after, t0.n_after,
                    (t1.n_before, t1.n_after), (t0.n_before, t0.n_after),
                    ks=ks, welch=wu, symbols=symbols,
                )

    return TestReport(
        taus=taus,
        pcs=pcs,
        cells=cells,
        signs={(t, p): int(signs.get((t, p), 1)) for t in taus for p in pcs},
        level=level,
        cell_level=cell_level,
        n_jump_days=len(jump_days),
        n_nojump_days=len(nojump_days),
        skipped_days=dict(skipped_days or {}),
        component_labels=dict(component_labels or {}),
        explained=dict(explained or {}),
    )
