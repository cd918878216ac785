"""Jump detection tests: returns construction, bipower scaling, threshold
calibration and the day classification rules.

The Monte-Carlo size check documents that the day-level familywise
false-detection rate stays at or below the nominal level; the extreme-value
threshold is conservative at intraday sample sizes (about half the nominal
level for 80 statistics per day), which the acceptance suite measures
against the idealized two-sided band.
"""

import datetime as dt
import math

import numpy as np
import pytest

from smilejump.jumps import (
    DayPartition,
    InsufficientData,
    JumpEvent,
    JumpTest,
    PriceSeries,
    ZeroVolAnomaly,
    _rolling_bipower,
    bipower_sigma,
    classify_mornings,
    detect_jumps,
    detection_coverage,
    lm_statistic,
    log_returns,
    threshold,
)
from smilejump.synth import MarketSpec, gen_underlying
from smilejump.timegrid import MINUTES_PER_DAY, combine


def flat_series(n_days=6, price=100.0):
    days = [dt.date(2006, 1, 2) + dt.timedelta(days=i) for i in range(n_days)]
    minutes = np.arange(MINUTES_PER_DAY)
    return PriceSeries.from_days(days, [minutes] * n_days,
                                 [np.full(MINUTES_PER_DAY, price)] * n_days)


class TestLogReturns:
    def test_constant_prices_zero_returns(self):
        r = log_returns(flat_series(), 5)
        assert np.all(r.values == 0.0)
        assert len(r.values) == 6 * 80

    def test_doubling_step(self):
        series = flat_series(1)
        prices = series.prices.copy()
        prices[5:] *= 2.0
        series = PriceSeries(series.days, series.minutes, prices, series.day_start)
        r = log_returns(series, 5)
        assert r.values[0] == pytest.approx(math.log(2.0))
        assert np.allclose(r.values[1:], 0.0)

    def test_returns_never_span_days(self):
        spec = MarketSpec(days=3, seed=1)
        series, _ = gen_underlying(spec)
        r = log_returns(series, 5)
        # 81 sampled observations -> 80 returns per day, endpoints at 5..400
        assert np.all(np.bincount(r.day_index) == 80)
        assert r.end_minute.min() == 5

    def test_intraday_telescoping(self):
        spec = MarketSpec(days=2, seed=3)
        series, _ = gen_underlying(spec)
        r = log_returns(series, 1)
        for d in range(2):
            sl = series.day_slice(d)
            total = math.log(series.prices[sl][-1] / series.prices[sl][0])
            assert r.values[r.day_index == d].sum() == pytest.approx(total, abs=1e-12)

    def test_sampling_grid(self):
        spec = MarketSpec(days=1, seed=0)
        series, _ = gen_underlying(spec)
        r = log_returns(series, 15)
        assert len(r.values) == 26
        assert r.end_minute[0] == 15


class TestBipower:
    def test_constant_magnitude_window(self):
        returns = np.array([0.01, -0.01] * 200)
        sig = bipower_sigma(returns, 300, window_k=100)
        assert sig.value == pytest.approx(0.01, rel=1e-12)
        assert not sig.degenerate

    def test_zero_window_flagged(self):
        returns = np.zeros(100)
        sig = bipower_sigma(returns, 80, window_k=50)
        assert sig.value == 0.0
        assert sig.degenerate

    def test_excludes_current_return(self):
        returns = np.full(100, 0.01)
        returns[80] = 5.0
        sig = bipower_sigma(returns, 80, window_k=50)
        assert sig.value == pytest.approx(0.01, rel=1e-12)

    def test_insufficient_history(self):
        with pytest.raises(InsufficientData):
            bipower_sigma(np.ones(100), 10, window_k=50)

    def test_monte_carlo_mean_matches_two_over_pi(self):
        rng = np.random.default_rng(42)
        s = 1.3e-3
        returns = s * rng.standard_normal(100_000)
        sig2 = _rolling_bipower(returns, 270)
        est = np.nanmean(sig2)
        expected = (2.0 / math.pi) * s * s
        assert abs(est / expected - 1.0) <= 0.02

    def test_rolling_matches_scalar(self):
        rng = np.random.default_rng(0)
        returns = rng.standard_normal(400)
        sig2 = _rolling_bipower(returns, 100)
        for i in (99, 150, 399):
            assert math.sqrt(sig2[i]) == pytest.approx(bipower_sigma(returns, i, 100).value, rel=1e-12)


class TestLmStatistic:
    def test_zero_return_zero_statistic(self):
        returns = np.array([0.01, -0.01] * 100 + [0.0])
        assert lm_statistic(returns, 200, 100) == 0.0

    def test_unit_ratio(self):
        returns = np.array([0.01, -0.01] * 100)
        returns = np.append(returns, 0.01)
        assert lm_statistic(returns, 200, 100) == pytest.approx(1.0, rel=1e-12)

    def test_zero_vol_anomaly(self):
        returns = np.zeros(200)
        returns[150] = 0.05
        with pytest.raises(ZeroVolAnomaly):
            lm_statistic(returns, 150, 100)

    def test_null_distribution_close_to_normal(self):
        # after the sqrt(2/pi) convention correction, c * L is ~ N(0, 1)
        rng = np.random.default_rng(2026)
        returns = rng.standard_normal(100_000)
        sig2 = _rolling_bipower(returns, 270)
        valid = ~np.isnan(sig2)
        scaled = math.sqrt(2.0 / math.pi) * returns[valid] / np.sqrt(sig2[valid])
        from scipy.stats import norm

        xs = np.sort(scaled)
        ecdf = np.arange(1, len(xs) + 1) / len(xs)
        ks = np.abs(ecdf - norm.cdf(xs)).max()
        assert ks <= 0.02


class TestThreshold:
    def test_increasing_in_n(self):
        values = [threshold(n, 0.01) for n in (100, 1000, 10_000, 100_000, 1_000_000)]
        assert all(a < b for a, b in zip(values, values[1:]))

    def test_decreasing_in_alpha(self):
        values = [threshold(1000, a) for a in (0.001, 0.01, 0.05, 0.2)]
        assert all(a > b for a, b in zip(values, values[1:]))

    def test_known_value(self):
        # n = 80, alpha = 0.01 with c = sqrt(2/pi):
        # C_n = 3.155266..., S_n = 0.423356..., quantile = 4.600149...
        assert threshold(80, 0.01) == pytest.approx(5.1027646889, abs=1e-9)

    def test_minimum_n(self):
        with pytest.raises(InsufficientData):
            threshold(5, 0.01)

    def test_familywise_size_controlled(self):
        # jump-free day-level false-detection frequency never exceeds alpha
        # (and is conservative: the Gumbel limit overshoots at n = 80/day)
        rng = np.random.default_rng(99)
        n_days, rpd = 4000, 80
        days = [dt.date(2006, 1, 2) + dt.timedelta(days=i) for i in range(n_days)]
        minutes = np.arange(0, 405, 5)
        sig = 0.2 / math.sqrt(252 * 405)
        increments = math.sqrt(5.0) * sig * rng.standard_normal((n_days, 81))
        prices = 100.0 * np.exp(np.cumsum(increments.ravel()).reshape(n_days, 81))
        series = PriceSeries.from_days(days, [minutes] * n_days, list(prices))
        test = JumpTest(alpha=0.01, sampling_minutes=5)
        events = detect_jumps(series, test)
        covered = {d for d, (a, b) in detection_coverage(series, test).items() if a == b}
        hit_days = {e.timestamp.date() for e in events} & covered
        freq = len(hit_days) / len(covered)
        se = math.sqrt(0.01 * 0.99 / len(covered))
        assert 0.0005 < freq <= 0.01 + 2 * se


class TestDetect:
    def test_constant_series_empty(self):
        assert detect_jumps(flat_series(), JumpTest(alpha=0.01, sampling_minutes=5)) == []

    def test_insufficient_data(self):
        with pytest.raises(InsufficientData):
            detect_jumps(flat_series(n_days=2), JumpTest(alpha=0.01, sampling_minutes=5))

    def test_injected_jump_detected_at_correct_minute(self):
        hits = 0
        n_rep = 300
        for rep in range(n_rep):
            spec = MarketSpec(days=5, seed=10_000 + rep,
                              forced_jumps=((4, 100, 10.0 * math.sqrt(5.0)),))
            series, _ = gen_underlying(spec)
            events = detect_jumps(series, JumpTest(alpha=0.01, sampling_minutes=5))
            want = combine(series.days[4], 100)
            hits += any(e.timestamp == want for e in events)
        assert hits / n_rep >= 0.98

    def test_scale_invariance_exact(self):
        spec = MarketSpec(days=8, seed=5, forced_jumps=((6, 50, 12.0),))
        series, _ = gen_underlying(spec)
        test = JumpTest(alpha=0.01, sampling_minutes=5)
        base = detect_jumps(series, test)
        scaled = PriceSeries(series.days, series.minutes, series.prices * 2.0 ** 7,
                             series.day_start)
        other = detect_jumps(scaled, test)
        assert [(e.timestamp, e.l_statistic, e.ret, e.local_sigma) for e in base] == \
               [(e.timestamp, e.l_statistic, e.ret, e.local_sigma) for e in other]
        assert len(base) >= 1

    def test_monotone_in_alpha(self):
        spec = MarketSpec(days=20, seed=8, jump_intensity=1.0, jump_log_std=0.004)
        series, _ = gen_underlying(spec)
        t1 = detect_jumps(series, JumpTest(alpha=0.001, sampling_minutes=5))
        t2 = detect_jumps(series, JumpTest(alpha=0.05, sampling_minutes=5))
        stamps1 = {e.timestamp for e in t1}
        stamps2 = {e.timestamp for e in t2}
        assert stamps1 <= stamps2

    def test_events_time_ordered(self):
        spec = MarketSpec(days=12, seed=2, forced_jumps=((6, 50, 12.0), (9, 200, 12.0)))
        series, _ = gen_underlying(spec)
        events = detect_jumps(series, JumpTest(alpha=0.01, sampling_minutes=5))
        stamps = [e.timestamp for e in events]
        assert stamps == sorted(stamps)
        assert all(abs(e.l_statistic) > e.beta_star for e in events)


def _event(day, minute):
    return JumpEvent(timestamp=combine(day, minute), l_statistic=8.0, ret=0.001,
                     local_sigma=0.0001, direction=1, beta_star=5.0)


class TestClassify:
    DAYS = tuple(dt.date(2006, 1, 2) + dt.timedelta(days=i) for i in range(4))

    def test_morning_event_is_jump_day(self):
        d = self.DAYS
        part = classify_mornings({5: [_event(d[0], 14)], 15: []}, d, 5)
        assert part.jump_days == (d[0],)
        assert set(part.nojump_days) == set(d[1:])

    def test_late_only_event_excluded(self):
        d = self.DAYS
        part = classify_mornings({5: [_event(d[1], 120)], 15: []}, d, 5)
        assert d[1] in part.excluded
        assert d[1] not in part.jump_days and d[1] not in part.nojump_days

    def test_boundary_minutes(self):
        d = self.DAYS
        part = classify_mornings({5: [_event(d[0], 59), _event(d[1], 60)], 15: []}, d, 5)
        assert part.jump_days == (d[0],)   # 10:30 is still morning
        assert d[1] in part.excluded       # 10:31 is not

    def test_off_primary_sampling_event_blocks_nojump(self):
        d = self.DAYS
        part = classify_mornings({5: [], 15: [_event(d[2], 30)]}, d, 5)
        assert d[2] in part.excluded
        assert d[2] not in part.nojump_days

    def test_incomplete_days_excluded(self):
        d = self.DAYS
        part = classify_mornings({5: [], 15: []}, d, 5, incomplete_days={d[0]})
        assert part.excluded[d[0]].startswith("incomplete")
        assert set(part.nojump_days) == set(d[1:])

    def test_groups_disjoint_and_exhaustive(self):
        d = self.DAYS
        part = classify_mornings(
            {5: [_event(d[0], 10), _event(d[1], 200)], 15: [_event(d[2], 40)]}, d, 5
        )
        labelled = set(part.jump_days) | set(part.nojump_days) | set(part.excluded)
        assert labelled == set(d)
        assert not (set(part.jump_days) & set(part.nojump_days))

    def test_missing_primary_raises(self):
        with pytest.raises(KeyError):
            classify_mornings({15: []}, self.DAYS, 5)
