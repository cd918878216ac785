"""Synthetic markets with known ground truth.

The underlying follows a jump-diffusion on the session minute grid; option
chains are struck on a fixed moneyness grid and priced off a quadratic
smile a + b(m-1) + c(m-1)^2 per maturity whose coefficients follow a
within-day random walk.  On mornings that truly contain a price jump the
walk's innovations can be shifted and inflated, which is the controllable
"jump effect" every end-to-end check measures against.

Everything is reproducible: each (seed, stream, day) triple keys its own
generator, so markets are bit-identical across runs and independent of
evaluation order.
"""

from __future__ import annotations

import datetime as dt
import math
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .jumps import PriceSeries
from .pricing import OptionQuote, bs_price_arrays
from .smilepca import DeltaIvPanel
from .timegrid import MINUTES_PER_DAY, MORNING_END, combine

__all__ = [
    "MarketSpec",
    "ChainDay",
    "SyntheticMarket",
    "gen_underlying",
    "gen_chain",
    "make_market",
    "gen_factor_panel",
    "trading_days",
    "MINUTE_VOL_FACTOR",
]

TRADING_DAYS_PER_YEAR = 252
MINUTE_VOL_FACTOR = math.sqrt(TRADING_DAYS_PER_YEAR * MINUTES_PER_DAY)

_STREAM_UNDERLYING = 0
_STREAM_CHAIN = 1
_STREAM_JUMPTIMES = 2


def trading_days(start: dt.date, n: int) -> tuple[dt.date, ...]:
    """n consecutive weekdays starting at (or after) start."""
    out = []
    d = start
    while len(out) < n:
        if d.weekday() < 5:
            out.append(d)
        d += dt.timedelta(days=1)
    return tuple(out)


def _rng(seed: int, stream: int, day: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence((seed, stream, day)))


@dataclass(frozen=True)
class MarketSpec:
    """Everything needed to generate one market, bit-reproducibly."""

    days: int
    seed: int = 0
    minutes_per_day: int = MINUTES_PER_DAY
    annual_vol: float = 0.20
    spot0: float = 100.0
    rate: float = 0.0
    start: dt.date = dt.date(2006, 1, 2)

    # Poisson jump arrivals (per day); sizes are lognormal in price space,
    # i.e. the log-jump is normal(jump_log_mean, jump_log_std).
    jump_intensity: float = 0.0
    jump_log_mean: float = 0.0
    jump_log_std: float = 0.002
    # Deterministic jump schedule (day_index, minute_index, size_in_minute_sigmas);
    # used by the verification harness for exact group sizes.
    forced_jumps: tuple[tuple[int, int, float], ...] = ()

    # Quadratic smile bases per maturity and the per-minute innovation scale
    # of (level, skew, curvature).  Maturities move on a common shock stream
    # (scaled by maturity_scales, decorrelated by maturity_shock_corr < 1) so
    # findings are consistent across slices without being duplicates.  The
    # default stds put roughly 9:3:1 of the change variance on the
    # level/skew/curvature patterns over the ten analysis bins.
    maturities: tuple[float, ...] = (0.25, 0.5, 0.75)
    smile_base: tuple[tuple[float, float, float], ...] = (
        (0.22, -0.10, 0.30),
        (0.21, -0.08, 0.22),
        (0.20, -0.07, 0.18),
    )
    smile_change_stds: tuple[float, float, float] = (4e-4, 1.5e-3, 4e-3)
    maturity_scales: tuple[float, ...] = (1.0, 0.85, 0.7)
    maturity_shock_corr: float = 0.9

    # Jump-day effect on first-hour smile changes: jump_effect_level is the
    # day-level mean shift in units of the no-jump day-mean's standard
    # deviation; jump_effect_var adds that fraction of extra innovation
    # variance during the window.
    jump_effect_level: float = 0.0
    jump_effect_var: float = 0.0

    # Chain geometry: strikes at fixed moneyness each minute.
    chain_lo: float = 0.75
    chain_hi: float = 1.35
    chain_step: float = 0.05
    half_spread_frac: float = 0.0005

    def __post_init__(self):
        if self.minutes_per_day != MINUTES_PER_DAY:
            raise ValueError(f"minutes_per_day must be {MINUTES_PER_DAY}")
        if self.annual_vol < 0.0 or self.jump_intensity < 0.0:
            raise ValueError("annual_vol and jump_intensity must be >= 0")
        if len(self.smile_base) != len(self.maturities) or len(self.maturity_scales) != len(self.maturities):
            raise ValueError("smile_base and maturity_scales must match maturities")

    @property
    def minute_sigma(self) -> float:
        return self.annual_vol / MINUTE_VOL_FACTOR

    @property
    def chain_moneyness(self) -> np.ndarray:
        n = int(round((self.chain_hi - self.chain_lo) / self.chain_step)) + 1
        return self.chain_lo + self.chain_step * np.arange(n)


@dataclass(frozen=True)
class ChainDay:
    """One day's option chain as flat arrays (one element per quote)."""

    day: dt.date
    expiries: tuple[dt.date, ...]
    minute: np.ndarray
    tau_index: np.ndarray
    strike: np.ndarray
    is_call: np.ndarray
    bid: np.ndarray
    ask: np.ndarray
    spot: np.ndarray
    true_iv: np.ndarray

    def __len__(self) -> int:
        return len(self.strike)


@dataclass(frozen=True)
class SyntheticMarket:
    spec: MarketSpec
    series: PriceSeries
    true_jumps: tuple[tuple[dt.date, int, float], ...]  # (day, minute, log size)
    jump_morning_days: tuple[dt.date, ...]

    def chain_days(self) -> Iterator[ChainDay]:
        return gen_chain(self.spec, self.series, self.jump_morning_days)

    def quotes(self) -> Iterator[OptionQuote]:
        for cd in self.chain_days():
            for i in range(len(cd)):
                k = int(cd.tau_index[i])
                yield OptionQuote(
                    timestamp=combine(cd.day, int(cd.minute[i])),
                    expiry=cd.expiries[k],
                    strike=float(cd.strike[i]),
                    right="C" if cd.is_call[i] else "P",
                    bid=float(cd.bid[i]),
                    ask=float(cd.ask[i]),
                    spot=float(cd.spot[i]),
                )


def _jump_schedule(spec: MarketSpec) -> dict[int, list[tuple[int, float]]]:
    """day_index -> [(minute, log_size)] from the Poisson and forced parts."""
    sched: dict[int, list[tuple[int, float]]] = {}
    if spec.jump_intensity > 0.0:
        for d in range(spec.days):
            rng = _rng(spec.seed, _STREAM_JUMPTIMES, d)
            count = rng.poisson(spec.jump_intensity)
            for _ in range(count):
                minute = int(rng.integers(1, spec.minutes_per_day))
                size = float(rng.normal(spec.jump_log_mean, spec.jump_log_std))
                sched.setdefault(d, []).append((minute, size))
    for d, minute, size_sig in spec.forced_jumps:
        if not 1 <= minute < spec.minutes_per_day:
            raise ValueError(f"forced jump minute {minute} outside [1, {spec.minutes_per_day})")
        sched.setdefault(int(d), []).append((int(minute), float(size_sig) * spec.minute_sigma))
    for entries in sched.values():
        entries.sort()
    return sched


def gen_underlying(spec: MarketSpec) -> tuple[PriceSeries, tuple[tuple[dt.date, int, float], ...]]:
    """Jump-diffusion log prices on the session grid plus the true jump list."""
    days = trading_days(spec.start, spec.days)
    sched = _jump_schedule(spec)
    sig = spec.minute_sigma
    minutes = np.arange(spec.minutes_per_day)
    prices, true_jumps = [], []
    last = math.log(spec.spot0)
    for d in range(spec.days):
        rng = _rng(spec.seed, _STREAM_UNDERLYING, d)
        inc = sig * rng.standard_normal(spec.minutes_per_day)
        for minute, size in sched.get(d, ()):
            inc[minute] += size
            true_jumps.append((days[d], minute, size))
        lp = last + np.cumsum(inc)
        last = float(lp[-1])
        prices.append(np.exp(lp))
    series = PriceSeries.from_days(days, [minutes] * spec.days, prices)
    return series, tuple(true_jumps)


def _morning_jump_days(days: Sequence[dt.date], true_jumps) -> tuple[dt.date, ...]:
    out = {d for d, minute, _ in true_jumps if minute <= MORNING_END}
    return tuple(sorted(out & set(days)))


def gen_chain(
    spec: MarketSpec,
    series: PriceSeries,
    jump_morning_days: Sequence[dt.date] = (),
) -> Iterator[ChainDay]:
    """Per-day option chains priced off the evolving quadratic smiles."""
    m_grid = spec.chain_moneyness
    n_m = len(m_grid)
    n_tau = len(spec.maturities)
    stds = np.asarray(spec.smile_change_stds)
    # per-minute innovation mean that produces the requested day-level shift
    shift = spec.jump_effect_level * stds / math.sqrt(MORNING_END)
    vol_mult = math.sqrt(1.0 + spec.jump_effect_var)
    jump_set = set(jump_morning_days)

    minutes = np.arange(spec.minutes_per_day)
    minute_col = np.repeat(minutes, n_m * n_tau)
    tau_col = np.tile(np.repeat(np.arange(n_tau), n_m), spec.minutes_per_day)
    m_col = np.tile(m_grid, n_tau * spec.minutes_per_day)
    is_call = m_col >= 1.0
    taus_actual = np.empty(n_tau)

    for d in range(series.n_days):
        day = series.days[d]
        expiries = tuple(day + dt.timedelta(days=round(t * 365)) for t in spec.maturities)
        for k in range(n_tau):
            taus_actual[k] = (expiries[k] - day).days / 365.0

        rng = _rng(spec.seed, _STREAM_CHAIN, d)
        rho = spec.maturity_shock_corr
        z_common = rng.standard_normal((spec.minutes_per_day, 1, 3))
        z_idio = rng.standard_normal((spec.minutes_per_day, n_tau, 3))
        z = rho * z_common + math.sqrt(max(0.0, 1.0 - rho * rho)) * z_idio
        eta = z * stds
        if day in jump_set:
            window = slice(1, MORNING_END + 1)
            eta[window] = z[window] * (stds * vol_mult) + shift
        eta[0] = 0.0  # day opens on the base smile
        cum = np.cumsum(eta, axis=0)   # (minutes, n_tau, 3)

        spot = series.prices[series.day_slice(d)]
        # state per (minute, maturity): base + scaled shocks
        abc = np.empty((spec.minutes_per_day, n_tau, 3))
        for k in range(n_tau):
            abc[:, k, :] = np.asarray(spec.smile_base[k]) + spec.maturity_scales[k] * cum[:, k, :]

        dm = m_col.reshape(spec.minutes_per_day, n_tau, n_m) - 1.0
        iv = (
            abc[:, :, 0:1]
            + abc[:, :, 1:2] * dm
            + abc[:, :, 2:3] * dm ** 2
        ).reshape(-1)
        iv = np.maximum(iv, 0.01)

        spot_col = np.repeat(spot, n_m * n_tau)
        strike = m_col * spot_col
        tau_actual_col = taus_actual[tau_col]
        price = bs_price_arrays(spot_col, strike, spec.rate, tau_actual_col, iv, is_call)
        half = spec.half_spread_frac * price
        yield ChainDay(
            day=day,
            expiries=expiries,
            minute=minute_col,
            tau_index=tau_col,
            strike=strike,
            is_call=is_call,
            bid=price - half,
            ask=price + half,
            spot=spot_col,
            true_iv=iv,
        )


def make_market(spec: MarketSpec) -> SyntheticMarket:
    series, true_jumps = gen_underlying(spec)
    return SyntheticMarket(
        spec=spec,
        series=series,
        true_jumps=true_jumps,
        jump_morning_days=_morning_jump_days(series.days, true_jumps),
    )


def gen_factor_panel(
    n_rows: int,
    variances: Sequence[float] = (9.0, 3.0, 1.0),
    noise_frac: float = 0.15,
    n_cols: int = 10,
    seed: int = 0,
) -> tuple[DeltaIvPanel, float]:
    """Gaussian k-factor panel with iid noise and its design explained-variance.

    Noise variance per column is noise_frac * sum(variances) / n_cols, so the
    population fraction of variance captured by the top k components is
    (sum(var) + k * nv) / (sum(var) + n_cols * nv), returned alongside.
    """
    variances = np.asarray(variances, dtype=float)
    k = len(variances)
    rng = np.random.default_rng(seed)
    q, _ = np.linalg.qr(rng.standard_normal((n_cols, k)))
    f = rng.standard_normal((n_rows, k)) * np.sqrt(variances)
    nv = noise_frac * variances.sum() / n_cols
    x = f @ q.T + math.sqrt(nv) * rng.standard_normal((n_rows, n_cols))
    total = variances.sum() + n_cols * nv
    design = float((variances.sum() + k * nv) / total)
    base = dt.date(2006, 1, 2)
    rows = tuple((base, i + 1) for i in range(n_rows))
    return DeltaIvPanel(tau=0.25, rows=rows, values=x), design
