"""Two-sample tests: Kolmogorov-Smirnov (two-sided and both one-sided
variants) and the Welch-U test, i.e. Welch's unequal-variance t applied to
midranks of the pooled sample.

Hypothesis naming matches the study's reporting convention for a call like
test(x=jump_sample, y=nojump_sample):
    p_two_sided : H0  F_x = F_y        (KS)   /  mean_x = mean_y  (Welch)
    p_less      : alternative F_x < F_y (x stochastically larger) /
                  alternative mean_x < mean_y
    p_greater   : alternative F_x > F_y (x stochastically smaller) /
                  alternative mean_x > mean_y
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import stdtr
from scipy.stats import rankdata

__all__ = [
    "Sample",
    "KsResult",
    "WelchUResult",
    "DegenerateTies",
    "SmallSampleWarning",
    "midranks",
    "kolmogorov_sf",
    "ks_two_sample",
    "welch_u",
    "welch_u_permutation_pvalues",
]

MIN_SAMPLE = 5


class DegenerateTies(RuntimeError):
    """Every pooled value identical; the rank statistic carries no signal."""


class SmallSampleWarning(UserWarning):
    pass


@dataclass(frozen=True)
class Sample:
    """A labelled vector of finite observations (label 1 = jump group)."""

    values: np.ndarray
    label: int = 0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1 or len(v) == 0:
            raise ValueError("sample must be a non-empty 1-d vector")
        if not np.isfinite(v).all():
            raise ValueError("sample contains non-finite values")
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return len(self.values)


@dataclass(frozen=True)
class KsResult:
    d: float
    d_plus: float
    d_minus: float
    p_two_sided: float
    p_greater: float
    p_less: float
    n: int
    m: int


@dataclass(frozen=True)
class WelchUResult:
    t_statistic: float
    satterthwaite_df: float
    p_two_sided: float
    p_greater: float
    p_less: float
    rank_mean_x: float
    rank_mean_y: float
    degenerate: bool = False


def _as_values(sample) -> np.ndarray:
    if isinstance(sample, Sample):
        return sample.values
    v = np.asarray(sample, dtype=float)
    if v.ndim != 1 or len(v) == 0:
        raise ValueError("sample must be a non-empty 1-d vector")
    if not np.isfinite(v).all():
        raise ValueError("sample contains non-finite values")
    return v


def midranks(values) -> np.ndarray:
    """Ranks of the merged vector with ties averaged over their positions."""
    v = _as_values(values)
    return rankdata(v, method="average")


def kolmogorov_sf(lam: float) -> float:
    """Asymptotic Kolmogorov survival function 2 sum (-1)^(k-1) exp(-2 k^2 lam^2)."""
    if lam <= 0.0:
        return 1.0
    if lam < 0.04:
        return 1.0
    total, sign = 0.0, 1.0
    for k in range(1, 200):
        term = math.exp(-2.0 * k * k * lam * lam)
        total += sign * term
        if term < 1e-18:
            break
        sign = -sign
    return min(max(2.0 * total, 0.0), 1.0)


def ks_two_sample(x, y) -> KsResult:
    """Two-sample KS distances and asymptotic p-values.

    d_plus is the supremum of ECDF(x) - ECDF(y) (evidence that x is
    stochastically smaller), d_minus the reverse.  ECDFs are right-continuous
    on the merged sorted support, which is what makes ties well-defined.
    """
    xv = np.sort(_as_values(x))
    yv = np.sort(_as_values(y))
    n, m = len(xv), len(yv)
    if min(n, m) < MIN_SAMPLE:
        warnings.warn(f"KS on tiny samples n={n}, m={m}", SmallSampleWarning, stacklevel=2)
    support = np.concatenate([xv, yv])
    support.sort()
    cdf_x = np.searchsorted(xv, support, side="right") / n
    cdf_y = np.searchsorted(yv, support, side="right") / m
    diff = cdf_x - cdf_y
    d_plus = float(max(0.0, np.max(diff)))
    d_minus = float(max(0.0, np.max(-diff)))
    d = max(d_plus, d_minus)
    factor = n * m / (n + m)
    p_two = kolmogorov_sf(math.sqrt(factor) * d)
    p_greater = min(1.0, math.exp(-2.0 * factor * d_plus * d_plus))
    p_less = min(1.0, math.exp(-2.0 * factor * d_minus * d_minus))
    return KsResult(d, d_plus, d_minus, p_two, p_greater, p_less, n, m)


def _welch_from_ranks(rx: np.ndarray, ry: np.ndarray) -> tuple[float, float]:
    n, m = len(rx), len(ry)
    vx = rx.var(ddof=1)
    vy = ry.var(ddof=1)
    se2 = vx / n + vy / m
    t = (rx.mean() - ry.mean()) / math.sqrt(se2)
    df = se2 ** 2 / ((vx / n) ** 2 / (n - 1) + (vy / m) ** 2 / (m - 1))
    return t, df


def welch_u(x, y) -> WelchUResult:
    """Welch's t on midranks of the pooled sample, with Satterthwaite df.

    Exactly invariant under strictly increasing transforms of the pooled
    values, since only the ranks enter.  A fully tied pool has no usable
    signal and comes back degenerate with all p-values 1.
    """
    xv = _as_values(x)
    yv = _as_values(y)
    n, m = len(xv), len(yv)
    if min(n, m) < MIN_SAMPLE:
        warnings.warn(f"Welch-U on tiny samples n={n}, m={m}", SmallSampleWarning, stacklevel=2)
    ranks = midranks(np.concatenate([xv, yv]))
    rx, ry = ranks[:n], ranks[n:]
    if rx.var(ddof=1) == 0.0 and ry.var(ddof=1) == 0.0:
        return WelchUResult(0.0, float(n + m - 2), 1.0, 1.0, 1.0,
                            float(rx.mean()), float(ry.mean()), degenerate=True)
    t, df = _welch_from_ranks(rx, ry)
    p_two = 2.0 * float(stdtr(df, -abs(t)))
    p_greater = float(stdtr(df, -t))
    p_less = float(stdtr(df, t))
    return WelchUResult(float(t), float(df), min(p_two, 1.0), p_greater, p_less,
                        float(rx.mean()), float(ry.mean()))


def welch_u_permutation_pvalues(
    x,
    y,
    n_resamples: int = 100_000,
    seed: int = 0,
    enumerate_limit: int = 200_000,
) -> tuple[float, float, float]:
    """Permutation reference distribution for the rank-Welch statistic.

    Group assignments are resampled (exhaustively when the number of
    splittings is at most enumerate_limit, otherwise by seeded Monte Carlo)
    and p-values are the exceedance frequencies of |t|, t and -t.  Used as
    the small-sample oracle for welch_u.
    """
    xv = _as_values(x)
    yv = _as_values(y)
    n, m = len(xv), len(yv)
    ranks = midranks(np.concatenate([xv, yv]))
    t_obs, _ = _welch_from_ranks(ranks[:n], ranks[n:])

    total = math.comb(n + m, n)
    if total <= enumerate_limit:
        from itertools import combinations

        idx_all = np.arange(n + m)
        stats = np.empty(total)
        for i, combo in enumerate(combinations(range(n + m), n)):
            sel = np.zeros(n + m, dtype=bool)
            sel[list(combo)] = True
            stats[i] = _welch_from_ranks(ranks[sel], ranks[~sel])[0]
    else:
        rng = np.random.default_rng(seed)
        tot = ranks.sum()
        tot2 = (ranks ** 2).sum()
        stats = np.empty(n_resamples)
        done = 0
        block = 20_000
        while done < n_resamples:
            b = min(block, n_resamples - done)
            pick = np.argsort(rng.random((b, n + m)), axis=1)[:, :n]
            g = ranks[pick]
            s1 = g.sum(axis=1)
            ss1 = (g ** 2).sum(axis=1)
            m1 = s1 / n
            m0 = (tot - s1) / m
            v1 = (ss1 - n * m1 ** 2) / (n - 1)
            v0 = ((tot2 - ss1) - m * m0 ** 2) / (m - 1)
            stats[done:done + b] = (m1 - m0) / np.sqrt(v1 / n + v0 / m)
            done += b
    eps = 1e-12
    p_two = float(np.mean(np.abs(stats) >= abs(t_obs) - eps))
    p_greater = float(np.mean(stats >= t_obs - eps))
    p_less = float(np.mean(stats <= t_obs + eps))
    return p_two, p_greater, p_less
