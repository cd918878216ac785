"""Pricing and implied-vol tests.

The ATM golden value is pinned from a lognormal-payoff quadrature oracle
(test_quadrature_oracle recomputes it independently of the closed form).
"""

import math

import numpy as np
import pytest
from scipy.integrate import quad

from smilejump.pricing import (
    ArbitrageViolation,
    NotConverged,
    OptionQuote,
    PricingDomainError,
    bs_price,
    bs_price_arrays,
    bs_vega,
    implied_vol,
    implied_vol_arrays,
    price_bounds,
)

# S=100, K=100, r=0, tau=1, sigma=0.2; frozen from the quadrature oracle below
ATM_CALL_GOLDEN = 7.965567455405804


def lognormal_call_quadrature(spot, strike, rate, tau, sigma):
    """Risk-neutral expectation of the call payoff by direct integration."""
    mu = math.log(spot) + (rate - 0.5 * sigma * sigma) * tau
    sd = sigma * math.sqrt(tau)

    def integrand(z):
        s_t = math.exp(mu + sd * z)
        return max(s_t - strike, 0.0) * math.exp(-0.5 * z * z) / math.sqrt(2 * math.pi)

    val, err = quad(integrand, -12.0, 12.0, limit=200, epsabs=1e-12, epsrel=1e-12)
    assert err < 1e-9
    return math.exp(-rate * tau) * val


class TestBsPrice:
    def test_quadrature_oracle(self):
        oracle = lognormal_call_quadrature(100.0, 100.0, 0.0, 1.0, 0.2)
        assert oracle == pytest.approx(ATM_CALL_GOLDEN, abs=1e-9)
        assert bs_price(100.0, 100.0, 0.0, 1.0, 0.2, "C") == pytest.approx(ATM_CALL_GOLDEN, abs=1e-9)

    def test_quadrature_oracle_off_atm(self):
        for strike, sigma, tau in ((90.0, 0.3, 0.5), (120.0, 0.15, 0.75)):
            oracle = lognormal_call_quadrature(100.0, strike, 0.0, tau, sigma)
            assert bs_price(100.0, strike, 0.0, tau, sigma, "C") == pytest.approx(oracle, abs=1e-9)

    def test_sigma_to_zero_is_discounted_intrinsic(self):
        assert bs_price(100.0, 90.0, 0.0, 1.0, 1e-12, "C") == pytest.approx(10.0, abs=1e-9)

    def test_tiny_strike_put_worthless(self):
        assert bs_price(100.0, 1e-12, 0.0, 1.0, 0.2, "P") == pytest.approx(0.0, abs=1e-12)

    def test_put_call_parity(self):
        for strike in (80.0, 100.0, 130.0):
            for rate in (0.0, 0.05):
                c = bs_price(100.0, strike, rate, 0.5, 0.25, "C")
                p = bs_price(100.0, strike, rate, 0.5, 0.25, "P")
                assert c - p == pytest.approx(100.0 - strike * math.exp(-rate * 0.5), abs=1e-10)

    def test_monotone_in_sigma(self):
        sigmas = np.linspace(0.01, 2.0, 80)
        prices = [bs_price(100.0, 110.0, 0.02, 0.5, s, "C") for s in sigmas]
        assert all(b >= a for a, b in zip(prices, prices[1:]))

    def test_monotone_in_spot_for_calls_and_strike_for_puts(self):
        spots = np.linspace(80.0, 130.0, 40)
        calls = [bs_price(s, 100.0, 0.0, 0.5, 0.2, "C") for s in spots]
        assert all(b >= a for a, b in zip(calls, calls[1:]))
        strikes = np.linspace(80.0, 130.0, 40)
        puts = [bs_price(100.0, k, 0.0, 0.5, 0.2, "P") for k in strikes]
        assert all(b >= a for a, b in zip(puts, puts[1:]))

    def test_within_bounds(self):
        rng = np.random.default_rng(5)
        for _ in range(300):
            strike = rng.uniform(70, 140)
            rate = rng.uniform(0.0, 0.08)
            tau = rng.uniform(0.05, 1.5)
            sigma = rng.uniform(0.02, 1.5)
            right = "C" if rng.random() < 0.5 else "P"
            lo, hi = price_bounds(100.0, strike, rate, tau, right)
            p = bs_price(100.0, strike, rate, tau, sigma, right)
            assert lo - 1e-12 <= p <= hi + 1e-12

    def test_domain_errors(self):
        with pytest.raises(PricingDomainError):
            bs_price(float("nan"), 100.0, 0.0, 1.0, 0.2, "C")
        with pytest.raises(PricingDomainError):
            bs_price(100.0, 100.0, 0.0, -1.0, 0.2, "C")
        with pytest.raises(PricingDomainError):
            bs_price(100.0, 100.0, 0.0, 1.0, 0.2, "X")


class TestBsVega:
    def test_matches_central_finite_difference(self):
        h = 1e-6
        for strike, tau, sigma in ((90.0, 0.25, 0.2), (100.0, 1.0, 0.4), (125.0, 0.75, 0.12)):
            fd = (bs_price(100.0, strike, 0.01, tau, sigma + h, "C")
                  - bs_price(100.0, strike, 0.01, tau, sigma - h, "C")) / (2 * h)
            vega = bs_vega(100.0, strike, 0.01, tau, sigma)
            assert abs(vega - fd) / fd <= 1e-6

    def test_vanishes_for_huge_sigma(self):
        assert bs_vega(100.0, 100.0, 0.0, 1.0, 60.0) < 1e-10 * 100.0

    def test_call_put_identical(self):
        assert bs_vega(100.0, 95.0, 0.03, 0.5, 0.3, "C") == bs_vega(100.0, 95.0, 0.03, 0.5, 0.3, "P")

    def test_positive(self):
        assert bs_vega(100.0, 100.0, 0.0, 0.25, 0.05) > 0.0


class TestImpliedVol:
    def test_round_trip_grid(self):
        for m in np.linspace(0.8, 1.3, 11):
            for tau in (0.25, 0.5, 0.75):
                for rate in (0.0, 0.05):
                    for sigma in (0.08, 0.2, 0.6):
                        right = "P" if m < 1.0 else "C"
                        price = bs_price(100.0, 100.0 * m, rate, tau, sigma, right)
                        res = implied_vol(price, 100.0, 100.0 * m, rate, tau, right)
                        assert res.converged
                        assert res.value == pytest.approx(sigma, abs=1e-8)

    def test_price_residual_within_tolerance(self):
        price = bs_price(100.0, 105.0, 0.02, 0.5, 0.33, "C")
        res = implied_vol(price, 100.0, 105.0, 0.02, 0.5, "C")
        assert abs(bs_price(100.0, 105.0, 0.02, 0.5, res.value, "C") - price) <= 1e-8 * 100.0

    def test_below_intrinsic_is_arbitrage(self):
        lo, _ = price_bounds(100.0, 90.0, 0.03, 0.5, "C")
        with pytest.raises(ArbitrageViolation):
            implied_vol(lo - 1e-9, 100.0, 90.0, 0.03, 0.5, "C")

    def test_above_upper_bound_is_arbitrage(self):
        with pytest.raises(ArbitrageViolation):
            implied_vol(101.0, 100.0, 90.0, 0.0, 0.5, "C")

    def test_root_below_bracket_reports_not_converged(self):
        # a target only just above the bound corresponds to sigma < 1e-6
        lo, _ = price_bounds(100.0, 90.0, 0.0, 0.5, "C")
        tiny = bs_price(100.0, 90.0, 0.0, 0.5, 1e-8, "C")
        if tiny > lo:
            with pytest.raises(NotConverged):
                implied_vol(tiny, 100.0, 90.0, 0.0, 0.5, "C")

    def test_monotone_in_target(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            strike = rng.uniform(80, 130)
            tau = rng.uniform(0.1, 1.0)
            rate = rng.uniform(0.0, 0.05)
            right = "C" if rng.random() < 0.5 else "P"
            s1, s2 = sorted(rng.uniform(0.05, 0.9, size=2))
            if s2 - s1 < 1e-4:
                continue
            p1 = bs_price(100.0, strike, rate, tau, s1, right)
            p2 = bs_price(100.0, strike, rate, tau, s2, right)
            lo, hi = price_bounds(100.0, strike, rate, tau, right)
            if not (lo + 1e-12 < p1 and p2 < hi - 1e-12):
                continue  # deep case saturated at a bound: inversion undefined
            r1 = implied_vol(p1, 100.0, strike, rate, tau, right)
            r2 = implied_vol(p2, 100.0, strike, rate, tau, right)
            assert p1 < p2
            assert r1.value < r2.value

    def test_deterministic(self):
        price = bs_price(100.0, 92.0, 0.01, 0.75, 0.27, "P")
        a = implied_vol(price, 100.0, 92.0, 0.01, 0.75, "P")
        b = implied_vol(price, 100.0, 92.0, 0.01, 0.75, "P")
        assert a == b


class TestVectorized:
    def test_matches_scalar(self):
        rng = np.random.default_rng(3)
        strike = rng.uniform(80, 130, size=200)
        tau = rng.uniform(0.1, 1.0, size=200)
        sigma = rng.uniform(0.05, 0.8, size=200)
        is_call = rng.random(200) < 0.5
        price = bs_price_arrays(100.0, strike, 0.01, tau, sigma, is_call)
        for i in range(0, 200, 17):
            scalar = bs_price(100.0, strike[i], 0.01, tau[i], sigma[i], "C" if is_call[i] else "P")
            assert price[i] == pytest.approx(scalar, abs=1e-12)
        sol, ok = implied_vol_arrays(price, 100.0, strike, 0.01, tau, is_call)
        assert ok.all()
        assert np.abs(sol - sigma).max() <= 1e-7

    def test_flags_bad_targets(self):
        strike = np.array([90.0, 100.0])
        target = np.array([5.0, 120.0])  # first below intrinsic, second above spot
        sol, ok = implied_vol_arrays(target, 100.0, strike, 0.0, 0.5, np.array([True, True]))
        assert not ok.any()
        assert np.isnan(sol).all()


class TestOptionQuote:
    def test_mid_and_validation(self):
        import datetime as dt

        q = OptionQuote(dt.datetime(2006, 1, 3, 9, 31), dt.date(2006, 4, 3),
                        100.0, "C", 1.0, 1.2, 100.0)
        assert q.mid == pytest.approx(1.1)
        q.validate()
        bad = OptionQuote(dt.datetime(2006, 1, 3, 9, 31), dt.date(2006, 4, 3),
                          100.0, "C", 1.5, 1.2, 100.0)
        with pytest.raises(PricingDomainError):
            bad.validate()
