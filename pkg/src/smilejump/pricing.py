"""Black-Scholes pricing and implied-volatility inversion for European options.

Conventions used throughout the package:
    - prices are mid quotes, (bid + ask) / 2
    - rates are annualized with continuous compounding
    - volatilities are annualized
    - no dividend yield (SPX dividends are a documented simplification)

All functions are pure and safe to call concurrently.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from datetime import date, datetime

import numpy as np
from scipy.special import ndtr

__all__ = [
    "OptionQuote",
    "ImpliedVol",
    "PricingDomainError",
    "ArbitrageViolation",
    "NotConverged",
    "bs_price",
    "bs_vega",
    "bs_price_arrays",
    "bs_vega_arrays",
    "implied_vol",
    "implied_vol_arrays",
    "price_bounds",
]

SIGMA_LO = 1e-6
SIGMA_HI = 5.0
PRICE_TOL_FACTOR = 1e-8   # absolute price tolerance = factor * spot
SIGMA_ATOL = 1e-10        # terminal Newton step size
MAX_ITER = 100


class PricingDomainError(ValueError):
    """Inputs outside the pricing domain (non-finite, non-positive, bad right)."""


class ArbitrageViolation(ValueError):
    """Target price at or outside the no-arbitrage bounds; quote unusable."""


class NotConverged(RuntimeError):
    """Root finder exhausted its budget; carries the last bracket."""

    def __init__(self, message: str, bracket: tuple[float, float]):
        super().__init__(f"{message} (last bracket [{bracket[0]:g}, {bracket[1]:g}])")
        self.bracket = bracket


@dataclass(frozen=True)
class OptionQuote:
    """One observed option quote with its contemporaneous spot."""

    timestamp: datetime
    expiry: date
    strike: float
    right: str          # "C" or "P"
    bid: float
    ask: float
    spot: float

    @property
    def mid(self) -> float:
        return 0.5 * (self.bid + self.ask)

    def validate(self) -> None:
        if self.right not in ("C", "P"):
            raise PricingDomainError(f"right must be 'C' or 'P', got {self.right!r}")
        if not (self.ask >= self.bid >= 0.0):
            raise PricingDomainError(f"need ask >= bid >= 0, got bid={self.bid}, ask={self.ask}")
        if self.strike <= 0.0 or self.spot <= 0.0:
            raise PricingDomainError("strike and spot must be positive")


@dataclass(frozen=True)
class ImpliedVol:
    """Result of an implied-volatility inversion."""

    value: float
    converged: bool
    iterations: int


def _is_call(right: str) -> bool:
    if right in ("C", "call"):
        return True
    if right in ("P", "put"):
        return False
    raise PricingDomainError(f"right must be 'C' or 'P', got {right!r}")


def _check_domain(spot, strike, rate, tau, sigma) -> None:
    vals = (spot, strike, rate, tau, sigma)
    if not all(math.isfinite(v) for v in vals):
        raise PricingDomainError(f"non-finite pricing input: {vals}")
    if spot <= 0.0 or strike <= 0.0:
        raise PricingDomainError("spot and strike must be positive")
    if tau <= 0.0:
        raise PricingDomainError(f"tau must be positive, got {tau}")
    if sigma <= 0.0:
        raise PricingDomainError(f"sigma must be positive, got {sigma}")


def price_bounds(spot: float, strike: float, rate: float, tau: float, right: str) -> tuple[float, float]:
    """No-arbitrage (lower, upper) price bounds for a European option."""
    disc_k = strike * math.exp(-rate * tau)
    if _is_call(right):
        return max(spot - disc_k, 0.0), spot
    return max(disc_k - spot, 0.0), disc_k


def bs_price(spot: float, strike: float, rate: float, tau: float, sigma: float, right: str) -> float:
    """Black-Scholes price of a European call or put.

    Monotone increasing in sigma; the sigma -> 0 limit is the discounted
    intrinsic value.
    """
    _check_domain(spot, strike, rate, tau, sigma)
    call = _is_call(right)
    srt = sigma * math.sqrt(tau)
    disc_k = strike * math.exp(-rate * tau)
    if srt < 1e-14:
        intrinsic = spot - disc_k
        return max(intrinsic, 0.0) if call else max(-intrinsic, 0.0)
    d1 = (math.log(spot / strike) + rate * tau) / srt + 0.5 * srt
    d2 = d1 - srt
    if call:
        price = spot * ndtr(d1) - disc_k * ndtr(d2)
    else:
        price = disc_k * ndtr(-d2) - spot * ndtr(-d1)
    return float(max(price, 0.0))


def bs_vega(spot: float, strike: float, rate: float, tau: float, sigma: float, right: str = "C") -> float:
    """dPrice/dSigma; identical for calls and puts."""
    _check_domain(spot, strike, rate, tau, sigma)
    _is_call(right)
    srt = sigma * math.sqrt(tau)
    d1 = (math.log(spot / strike) + rate * tau) / srt + 0.5 * srt
    return spot * math.sqrt(tau) * math.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)


def implied_vol(
    target_price: float,
    spot: float,
    strike: float,
    rate: float,
    tau: float,
    right: str,
    max_iter: int = MAX_ITER,
) -> ImpliedVol:
    """Invert bs_price for sigma with a bracketed, vega-accelerated search.

    The target must lie strictly inside the no-arbitrage bounds; the root is
    searched in [SIGMA_LO, SIGMA_HI].  Newton steps are taken whenever they
    stay inside the current bracket, otherwise the bracket is bisected, so
    convergence is guaranteed for this monotone objective.

    Raises ArbitrageViolation when the target is at or outside the bounds and
    NotConverged when the root is not bracketed by [SIGMA_LO, SIGMA_HI] or the
    iteration budget is exhausted.
    """
    _check_domain(spot, strike, rate, tau, 1.0)
    if not math.isfinite(target_price):
        raise PricingDomainError(f"non-finite target price {target_price}")
    lo_bound, hi_bound = price_bounds(spot, strike, rate, tau, right)
    if not (lo_bound < target_price < hi_bound):
        raise ArbitrageViolation(
            f"price {target_price} outside open bounds ({lo_bound}, {hi_bound})"
        )
    price_tol = PRICE_TOL_FACTOR * spot

    lo, hi = SIGMA_LO, SIGMA_HI
    f_lo = bs_price(spot, strike, rate, tau, lo, right) - target_price
    if f_lo > 0.0:
        raise NotConverged("root below sigma bracket", (0.0, lo))
    f_hi = bs_price(spot, strike, rate, tau, hi, right) - target_price
    if f_hi < 0.0:
        raise NotConverged("root above sigma bracket", (hi, math.inf))

    sigma = min(max(0.2, lo), hi)
    for it in range(1, max_iter + 1):
        f = bs_price(spot, strike, rate, tau, sigma, right) - target_price
        if f > 0.0:
            hi = sigma
        elif f < 0.0:
            lo = sigma
        else:
            return ImpliedVol(float(sigma), True, it)

        vega = bs_vega(spot, strike, rate, tau, sigma)
        if vega > 0.0 and math.isfinite(vega):
            step = f / vega
            nxt = sigma - step
        else:
            nxt = math.nan
        if not (lo < nxt < hi):
            nxt = 0.5 * (lo + hi)
        step_size = abs(nxt - sigma)
        sigma = nxt
        if step_size <= SIGMA_ATOL * max(1.0, sigma) and abs(f) <= price_tol:
            return ImpliedVol(float(sigma), True, it)
        if hi - lo <= SIGMA_ATOL:
            return ImpliedVol(float(sigma), True, it)
    raise NotConverged(f"no convergence in {max_iter} iterations", (lo, hi))


# ---------------------------------------------------------------------------
# Vectorized variants used by the chain generator and the pipeline hot path.
# They implement the same math as the scalar functions on float64 arrays.
# ---------------------------------------------------------------------------

def bs_price_arrays(spot, strike, rate, tau, sigma, is_call) -> np.ndarray:
    spot = np.asarray(spot, dtype=float)
    strike = np.asarray(strike, dtype=float)
    rate = np.asarray(rate, dtype=float)
    tau = np.asarray(tau, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    is_call = np.asarray(is_call, dtype=bool)

    srt = sigma * np.sqrt(tau)
    disc_k = strike * np.exp(-rate * tau)
    with np.errstate(divide="ignore", invalid="ignore"):
        d1 = (np.log(spot / strike) + rate * tau) / srt + 0.5 * srt
        d2 = d1 - srt
        call = spot * ndtr(d1) - disc_k * ndtr(d2)
        put = disc_k * ndtr(-d2) - spot * ndtr(-d1)
    intrinsic_c = np.maximum(spot - disc_k, 0.0)
    intrinsic_p = np.maximum(disc_k - spot, 0.0)
    tiny = srt < 1e-14
    call = np.where(tiny, intrinsic_c, call)
    put = np.where(tiny, intrinsic_p, put)
    return np.maximum(np.where(is_call, call, put), 0.0)


def bs_vega_arrays(spot, strike, rate, tau, sigma) -> np.ndarray:
    spot = np.asarray(spot, dtype=float)
    srt = sigma * np.sqrt(tau)
    d1 = (np.log(spot / strike) + rate * tau) / srt + 0.5 * srt
    return spot * np.sqrt(tau) * np.exp(-0.5 * d1 * d1) / math.sqrt(2.0 * math.pi)


def implied_vol_arrays(
    target, spot, strike, rate, tau, is_call, max_iter: int = MAX_ITER
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized inversion: returns (sigma, ok).

    Elements whose target violates the open no-arbitrage bounds, or whose
    root escapes [SIGMA_LO, SIGMA_HI], come back with ok=False and sigma=nan.
    """
    target = np.asarray(target, dtype=float)
    spot = np.broadcast_to(np.asarray(spot, dtype=float), target.shape).copy()
    strike = np.broadcast_to(np.asarray(strike, dtype=float), target.shape).copy()
    rate = np.broadcast_to(np.asarray(rate, dtype=float), target.shape).copy()
    tau = np.broadcast_to(np.asarray(tau, dtype=float), target.shape).copy()
    is_call = np.broadcast_to(np.asarray(is_call, dtype=bool), target.shape).copy()

    disc_k = strike * np.exp(-rate * tau)
    lo_bound = np.where(is_call, np.maximum(spot - disc_k, 0.0), np.maximum(disc_k - spot, 0.0))
    hi_bound = np.where(is_call, spot, disc_k)
    ok = (target > lo_bound) & (target < hi_bound) & np.isfinite(target)

    flat_ok = np.flatnonzero(ok.ravel())
    sigma_full = np.full(target.size, np.nan)
    ok_full = np.zeros(target.size, dtype=bool)
    if len(flat_ok):
        t_ = target.ravel()[flat_ok]
        sp = spot.ravel()[flat_ok]
        st = strike.ravel()[flat_ok]
        ra = rate.ravel()[flat_ok]
        ta = tau.ravel()[flat_ok]
        ic = is_call.ravel()[flat_ok]
        n = len(flat_ok)

        # price and vega share log(spot/strike) + r*tau, sqrt(tau) and the
        # discounted strike across iterations; precompute them once
        sqrt_ta = np.sqrt(ta)
        lfr = np.log(sp / st) + ra * ta
        dk = st * np.exp(-ra * ta)
        put_shift = np.where(ic, 0.0, dk - sp)
        inv_sqrt2pi = 1.0 / math.sqrt(2.0 * math.pi)

        def price_vega(sig, idx):
            srt = sig * sqrt_ta[idx]
            d1 = lfr[idx] / srt + 0.5 * srt
            price = sp[idx] * ndtr(d1) - dk[idx] * ndtr(d1 - srt) + put_shift[idx]
            vega = sp[idx] * sqrt_ta[idx] * np.exp(-0.5 * d1 * d1) * inv_sqrt2pi
            return price, vega

        lo = np.full(n, SIGMA_LO)
        hi = np.full(n, SIGMA_HI)
        all_idx = np.arange(n)
        f_lo, _ = price_vega(lo, all_idx)
        f_hi, _ = price_vega(hi, all_idx)
        bracketed = (f_lo - t_ <= 0.0) & (f_hi - t_ >= 0.0)

        sigma = np.full(n, 0.2)
        solved = np.zeros(n, dtype=bool)
        price_tol = PRICE_TOL_FACTOR * sp
        live = np.flatnonzero(bracketed)
        # the live set shrinks fast, so each pass works on a compressed view
        for _ in range(max_iter):
            if live.size == 0:
                break
            s = sigma[live]
            lo_l, hi_l = lo[live], hi[live]
            price, vega = price_vega(s, live)
            f = price - t_[live]
            hi_l = np.where(f > 0.0, s, hi_l)
            lo_l = np.where(f < 0.0, s, lo_l)
            with np.errstate(divide="ignore", invalid="ignore"):
                newton = s - f / vega
            bad = ~np.isfinite(newton) | (newton <= lo_l) | (newton >= hi_l)
            nxt = np.where(bad, 0.5 * (lo_l + hi_l), newton)
            step = np.abs(nxt - s)
            sigma[live] = nxt
            lo[live] = lo_l
            hi[live] = hi_l
            done = (
                (step <= SIGMA_ATOL * np.maximum(1.0, nxt)) & (np.abs(f) <= price_tol[live])
            ) | (hi_l - lo_l <= SIGMA_ATOL)
            solved[live[done]] = True
            live = live[~done]
        sigma_full[flat_ok] = np.where(solved, sigma, np.nan)
        ok_full[flat_ok] = solved
    return sigma_full.reshape(target.shape), ok_full.reshape(target.shape)
