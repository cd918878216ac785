"""Nonparametric jump detection on the minute-level underlying price.

Returns sampled every few minutes are scaled by a local bipower-variation
volatility estimate; the resulting statistic is compared against a
Gumbel-calibrated threshold so that, per trading day, the familywise chance
of flagging a jump-free day is approximately the significance level.

Overnight returns never enter the statistic: returns are formed within
sessions only, and the rolling bipower window runs over the concatenated
intraday returns (it spans several sessions for the default window sizes,
but never contains an overnight return).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from datetime import date, datetime
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from .timegrid import MORNING_END, combine

__all__ = [
    "PriceSeries",
    "SampledReturns",
    "JumpTest",
    "JumpEvent",
    "DayPartition",
    "InsufficientData",
    "ZeroVolAnomaly",
    "BipowerSigma",
    "log_returns",
    "bipower_sigma",
    "lm_statistic",
    "threshold",
    "threshold_constants",
    "detect_jumps",
    "detection_coverage",
    "classify_mornings",
    "DEFAULT_WINDOW_K",
]

log = logging.getLogger(__name__)

# Window lengths (observations) for the local volatility estimate, by return
# sampling in minutes; taken from the usual recommendation for these
# frequencies.
DEFAULT_WINDOW_K = {5: 270, 15: 156}


class InsufficientData(ValueError):
    """Not enough observations to run the requested computation."""


class ZeroVolAnomaly(RuntimeError):
    """Nonzero return over a window with zero bipower volatility."""


@dataclass(frozen=True)
class PriceSeries:
    """Minute-level log prices grouped by trading day.

    `minutes` holds the session minute index of every observation and
    `day_start` the offset of each day's first observation (with a final
    sentinel equal to the series length).  Storing prices and forming
    returns as log(P_i / P_{i-1}) keeps detection exactly invariant under
    power-of-two rescalings of the price level.
    """

    days: tuple[date, ...]
    minutes: np.ndarray
    prices: np.ndarray
    day_start: np.ndarray

    @classmethod
    def from_days(cls, days: Sequence[date], minutes_per_day: Sequence[np.ndarray],
                  prices_per_day: Sequence[np.ndarray]) -> "PriceSeries":
        if not days:
            raise InsufficientData("empty price series")
        if not all(days[i] < days[i + 1] for i in range(len(days) - 1)):
            raise ValueError("days must be strictly increasing")
        starts = [0]
        for m in minutes_per_day:
            m = np.asarray(m)
            if len(m) and not (np.diff(m) > 0).all():
                raise ValueError("minute indices must be strictly increasing within a day")
            starts.append(starts[-1] + len(m))
        p = np.concatenate([np.asarray(x, dtype=float) for x in prices_per_day])
        if not np.isfinite(p).all() or (p <= 0.0).any():
            raise ValueError("prices must be finite and positive")
        return cls(
            days=tuple(days),
            minutes=np.concatenate([np.asarray(m, dtype=int) for m in minutes_per_day]),
            prices=p,
            day_start=np.asarray(starts, dtype=int),
        )

    def day_slice(self, d: int) -> slice:
        return slice(int(self.day_start[d]), int(self.day_start[d + 1]))

    @property
    def n_days(self) -> int:
        return len(self.days)


@dataclass(frozen=True)
class SampledReturns:
    """Within-day log returns at a fixed sampling spacing, all days stacked."""

    sampling_minutes: int
    days: tuple[date, ...]
    day_index: np.ndarray
    end_minute: np.ndarray
    values: np.ndarray

    def per_day_counts(self) -> np.ndarray:
        counts = np.zeros(len(self.days), dtype=int)
        np.add.at(counts, self.day_index, 1)
        return counts


@dataclass(frozen=True)
class JumpTest:
    """Configuration of one detection run."""

    alpha: float = 0.01
    sampling_minutes: int = 5
    window_k: int | None = None

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must be in (0, 1), got {self.alpha}")
        if self.window_k is None:
            object.__setattr__(self, "window_k", DEFAULT_WINDOW_K.get(self.sampling_minutes, 270))
        if self.window_k < 3:
            raise ValueError(f"window_k must be >= 3, got {self.window_k}")


@dataclass(frozen=True)
class JumpEvent:
    timestamp: datetime
    l_statistic: float
    ret: float
    local_sigma: float
    direction: int
    beta_star: float


@dataclass(frozen=True)
class DayPartition:
    """Study groups: mornings with detected jumps vs fully jump-free days."""

    jump_days: tuple[date, ...]
    nojump_days: tuple[date, ...]
    excluded: dict[date, str] = field(default_factory=dict)


class BipowerSigma(NamedTuple):
    value: float
    degenerate: bool


def log_returns(series: PriceSeries, sampling_minutes: int) -> SampledReturns:
    """Sampled within-day log returns; the overnight return is never formed."""
    if sampling_minutes < 1:
        raise ValueError("sampling_minutes must be >= 1")
    day_idx, end_min, vals = [], [], []
    for d in range(series.n_days):
        sl = series.day_slice(d)
        mins = series.minutes[sl]
        px = series.prices[sl]
        on_grid = mins % sampling_minutes == 0
        mg, pg = mins[on_grid], px[on_grid]
        if len(pg) >= 2:
            r = np.log(pg[1:] / pg[:-1])
            day_idx.append(np.full(len(r), d, dtype=int))
            end_min.append(mg[1:])
            vals.append(r)
    if not vals:
        raise InsufficientData("no sampled returns in scope")
    return SampledReturns(
        sampling_minutes=sampling_minutes,
        days=series.days,
        day_index=np.concatenate(day_idx),
        end_minute=np.concatenate(end_min),
        values=np.concatenate(vals),
    )


def bipower_sigma(returns: np.ndarray, i: int, window_k: int) -> BipowerSigma:
    """Local volatility from the K-2 adjacent absolute-return products
    immediately before return i (return i itself is excluded)."""
    returns = np.asarray(returns, dtype=float)
    if i < window_k - 1:
        raise InsufficientData(f"index {i} has fewer than window_k-1={window_k - 1} prior returns")
    if i >= len(returns):
        raise IndexError(i)
    window = returns[i - window_k + 1:i]
    prods = np.abs(window[1:] * window[:-1])
    var = float(prods.sum()) / (window_k - 2)
    if np.count_nonzero(prods) < 2:
        return BipowerSigma(math.sqrt(var), True)
    return BipowerSigma(math.sqrt(var), False)


def lm_statistic(returns: np.ndarray, i: int, window_k: int) -> float:
    """Return i scaled by its local bipower volatility."""
    sig = bipower_sigma(returns, i, window_k)
    r = float(np.asarray(returns, dtype=float)[i])
    if sig.value == 0.0:
        if r == 0.0:
            return 0.0
        raise ZeroVolAnomaly(f"nonzero return {r} over zero-volatility window at index {i}")
    return r / sig.value


def threshold_constants(n: int) -> tuple[float, float]:
    """Location/scale pair (C_n, S_n) of the max-statistic calibration."""
    if n < 10:
        raise InsufficientData(f"threshold needs n >= 10, got {n}")
    c = math.sqrt(2.0 / math.pi)
    root = math.sqrt(2.0 * math.log(n))
    c_n = root / c - (math.log(math.pi) + math.log(math.log(n))) / (2.0 * c * root)
    s_n = 1.0 / (c * root)
    return c_n, s_n


def threshold(n: int, alpha: float) -> float:
    """Detection threshold for the max of n scaled returns at level alpha."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"alpha must be in (0, 1), got {alpha}")
    c_n, s_n = threshold_constants(n)
    return -math.log(-math.log(1.0 - alpha)) * s_n + c_n


def _rolling_bipower(values: np.ndarray, window_k: int) -> np.ndarray:
    """sigma^2 for every index (nan where the window is incomplete)."""
    n = len(values)
    out = np.full(n, np.nan)
    w = window_k - 2
    if n < window_k:
        return out
    prods = np.abs(values[1:] * values[:-1])
    cs = np.concatenate([[0.0], np.cumsum(prods)])
    idx = np.arange(window_k - 1, n)
    out[idx] = (cs[idx - 1] - cs[idx - 1 - w]) / w
    return out


def detect_jumps(series: PriceSeries, test: JumpTest) -> list[JumpEvent]:
    """All returns whose |statistic| exceeds the day's threshold, in time order.

    The threshold is calibrated per day against the number of statistics
    evaluated that day, so the familywise false-detection rate is controlled
    day by day.
    """
    sampled = log_returns(series, test.sampling_minutes)
    r = sampled.values
    if len(r) < test.window_k + 1:
        raise InsufficientData(
            f"{len(r)} sampled returns < window_k+1 = {test.window_k + 1}"
        )
    sig2 = _rolling_bipower(r, test.window_k)
    valid = ~np.isnan(sig2)

    l_stat = np.full(len(r), np.nan)
    zero_vol = valid & (sig2 == 0.0)
    normal = valid & (sig2 > 0.0)
    l_stat[normal] = r[normal] / np.sqrt(sig2[normal])
    l_stat[zero_vol & (r == 0.0)] = 0.0
    anomalies = zero_vol & (r != 0.0)
    if anomalies.any():
        log.warning("%d zero-volatility anomalies treated as jump candidates", anomalies.sum())
        l_stat[anomalies] = np.inf * np.sign(r[anomalies])

    n_stats = np.zeros(len(sampled.days), dtype=int)
    np.add.at(n_stats, sampled.day_index[valid], 1)
    beta = np.full(len(sampled.days), np.inf)
    for d, n_d in enumerate(n_stats):
        if n_d >= 10:
            beta[d] = threshold(int(n_d), test.alpha)

    hits = valid & (np.abs(l_stat) > beta[sampled.day_index])
    events = []
    for i in np.flatnonzero(hits):
        d = int(sampled.day_index[i])
        sig = math.sqrt(sig2[i]) if np.isfinite(sig2[i]) else 0.0
        events.append(
            JumpEvent(
                timestamp=combine(sampled.days[d], int(sampled.end_minute[i])),
                l_statistic=float(l_stat[i]),
                ret=float(r[i]),
                local_sigma=sig,
                direction=int(np.sign(r[i])) or 0,
                beta_star=float(beta[d]),
            )
        )
    return events


def detection_coverage(series: PriceSeries, test: JumpTest) -> dict[date, tuple[int, int]]:
    """Per day: (statistics evaluated, returns sampled).  Days where these
    differ lack local-volatility history and cannot be certified jump-free."""
    sampled = log_returns(series, test.sampling_minutes)
    sig2 = _rolling_bipower(sampled.values, test.window_k)
    valid = ~np.isnan(sig2)
    evaluated = np.zeros(len(sampled.days), dtype=int)
    np.add.at(evaluated, sampled.day_index[valid], 1)
    expected = sampled.per_day_counts()
    return {d: (int(evaluated[i]), int(expected[i])) for i, d in enumerate(sampled.days)}


def classify_mornings(
    events_by_sampling: Mapping[int, Sequence[JumpEvent]],
    calendar: Sequence[date],
    primary_sampling: int,
    incomplete_days: set[date] | frozenset[date] = frozenset(),
) -> DayPartition:
    """Partition the calendar into jump-morning and no-jump days.

    A day is a jump morning when the primary sampling detects at least one
    event no later than 10:30.  A day is a no-jump day only when no sampling
    window detects anything all day.  Everything else (late-only jumps,
    off-primary detections, days without full detection coverage) is
    excluded from both groups.
    """
    if primary_sampling not in events_by_sampling:
        raise KeyError(f"no events provided for primary sampling {primary_sampling}")
    morning_primary: set[date] = set()
    any_event: set[date] = set()
    for sampling, events in events_by_sampling.items():
        for ev in events:
            d = ev.timestamp.date()
            any_event.add(d)
            if sampling == primary_sampling:
                idx = (ev.timestamp.hour * 60 + ev.timestamp.minute) - (9 * 60 + 31)
                if idx <= MORNING_END:
                    morning_primary.add(d)

    jump, nojump, excluded = [], [], {}
    for d in calendar:
        if d in incomplete_days:
            excluded[d] = "incomplete detection coverage"
        elif d in morning_primary:
            jump.append(d)
        elif d in any_event:
            excluded[d] = "jumps only outside the morning window or off-primary sampling"
        else:
            nojump.append(d)
    return DayPartition(jump_days=tuple(jump), nojump_days=tuple(nojump), excluded=excluded)
