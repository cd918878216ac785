"""Per-minute implied-volatility surfaces over (moneyness, maturity).

A smoothing thin-plate spline is fitted to the minute's scattered IV
observations and fixed-maturity smiles are read off on the moneyness bin
grid.  The kernel is phi(r) = r^2 log r on coordinates where the maturity
axis is rescaled so the data's moneyness and maturity ranges have equal
spread; unscaled maturity in years would make the kernel nearly
one-dimensional.

Queries outside the convex hull of the fitting points (plus a configurable
margin) are refused rather than extrapolated.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import date

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial import ConvexHull

__all__ = [
    "IvPoint",
    "MoneynessGrid",
    "SmileSample",
    "SmileBlock",
    "TpsSurface",
    "DegenerateGeometry",
    "IllConditioned",
    "ExtrapolationRefused",
    "SliceUnavailable",
    "fit_tps",
    "eval_surface",
    "extract_smile",
    "SmileGridExtractor",
]

CONDITION_LIMIT = 1e12
HULL_SLACK = 1e-9   # numerical slack so boundary points count as inside


class DegenerateGeometry(ValueError):
    """Fitting points are collinear (or too few) in the (m, tau) plane."""


class IllConditioned(RuntimeError):
    """The spline system's condition estimate exceeds the safe limit."""


class ExtrapolationRefused(ValueError):
    """Query point outside the allowed evaluation domain."""


class SliceUnavailable(RuntimeError):
    """A smile slice could not be extracted for this (minute, tau)."""


@dataclass(frozen=True)
class IvPoint:
    moneyness: float
    tau: float
    iv: float


@dataclass(frozen=True)
class MoneynessGrid:
    """Moneyness bins; IVs are sampled at bin centers."""

    lo: float = 0.8
    hi: float = 1.3
    width: float = 0.05

    @property
    def n_bins(self) -> int:
        n = (self.hi - self.lo) / self.width
        if abs(n - round(n)) > 1e-9:
            raise ValueError(f"bin width {self.width} does not tile [{self.lo}, {self.hi}]")
        return int(round(n))

    @property
    def centers(self) -> np.ndarray:
        # rounded so 0.8 + 0.05 * (k + 1/2) prints as 0.825, 0.875, ...
        return np.round(self.lo + self.width * (np.arange(self.n_bins) + 0.5), 12)


@dataclass(frozen=True)
class SmileSample:
    """Interpolated IVs at the moneyness bin centers for one (minute, tau)."""

    day: date | None
    minute: int | None
    tau: float
    iv_bins: tuple[float, ...]


@dataclass(frozen=True)
class SmileBlock:
    """All of one day's smiles for one maturity: minute rows by bin columns."""

    day: date | None
    tau: float
    minutes: np.ndarray
    values: np.ndarray

    def __len__(self) -> int:
        return len(self.minutes)

    def samples(self):
        for i, minute in enumerate(self.minutes):
            yield SmileSample(day=self.day, minute=int(minute), tau=self.tau,
                              iv_bins=tuple(self.values[i].tolist()))


@dataclass
class TpsSurface:
    centers: np.ndarray        # (n, 2) original (m, tau) locations, sorted
    weights: np.ndarray        # (n,) kernel weights
    affine: tuple[float, float, float]   # a0 + a_m * m + a_tau * tau
    lam: float
    tau_scale: float           # internal coordinate is (m, tau * tau_scale)
    _hull_eq: np.ndarray | None = field(default=None, repr=False)

    def side_condition_residual(self) -> float:
        """Worst violation of sum(w) = sum(w m) = sum(w tau) = 0, relative to
        the weight mass (with a unit floor so tiny-weight fits stay finite)."""
        w = self.weights
        out = 0.0
        for feat in (np.ones(len(w)), self.centers[:, 0], self.centers[:, 1]):
            scale = max(1.0, float(np.sum(np.abs(w * feat))))
            out = max(out, abs(float(np.sum(w * feat))) / scale)
        return out


def _kernel(d2: np.ndarray) -> np.ndarray:
    # r^2 log r written as 0.5 * d2 * log(d2), with the removable 0 at r = 0
    with np.errstate(divide="ignore", invalid="ignore"):
        out = 0.5 * d2 * np.log(d2)
    return np.where(d2 > 0.0, out, 0.0)


def _canonical_order(m: np.ndarray, t: np.ndarray) -> tuple[np.ndarray, bool]:
    """Lexicographic point order and whether duplicates are present."""
    order = np.lexsort((t, m))
    ms, ts = m[order], t[order]
    dup = bool(((np.diff(ms) == 0.0) & (np.diff(ts) == 0.0)).any()) if len(ms) > 1 else False
    return order, dup


def _dedupe_and_sort(m: np.ndarray, t: np.ndarray, v: np.ndarray):
    """Average duplicate (m, tau) locations, then order lexicographically."""
    order, dup = _canonical_order(m, t)
    m, t, v = m[order], t[order], v[order]
    if not dup:
        return m, t, v
    same = (np.diff(m) == 0.0) & (np.diff(t) == 0.0)
    starts = np.concatenate([[0], np.flatnonzero(~same) + 1])
    counts = np.diff(np.concatenate([starts, [len(m)]]))
    sums = np.add.reduceat(v, starts)
    return m[starts], t[starts], sums / counts


def _geometry(m: np.ndarray, t: np.ndarray):
    """Scaled coordinates and the bordered TPS system for one point set."""
    n = len(m)
    if n < 3:
        raise DegenerateGeometry(f"need at least 3 points, got {n}")
    p = np.column_stack([np.ones(n), m, t])
    if np.linalg.matrix_rank(p) < 3:
        raise DegenerateGeometry("points are collinear in the (m, tau) plane")
    m_spread = float(np.ptp(m))
    t_spread = float(np.ptp(t))
    tau_scale = m_spread / t_spread if t_spread > 0.0 and m_spread > 0.0 else 1.0
    ts = t * tau_scale
    xy = np.column_stack([m, ts])
    d2 = ((xy[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
    k = _kernel(d2)
    pm = np.column_stack([np.ones(n), m, ts])
    return tau_scale, xy, k, pm


def _factor(k: np.ndarray, pm: np.ndarray, lam: float):
    """Factor the penalized system via the Schur complement on the affine part.

    Solving M w + P a = y, P^T w = 0 with M = K + lam I through
    a = (P^T M^-1 P)^-1 P^T M^-1 y keeps the numerics clean for every lam:
    M tends to lam I in the heavy-smoothing limit and the reduced 3x3 system
    then reproduces the least-squares plane.
    """
    n = len(k)
    m_mat = k + lam * np.eye(n)
    cond = np.linalg.cond(m_mat)
    if not np.isfinite(cond) or cond > CONDITION_LIMIT:
        raise IllConditioned(f"condition estimate {cond:.3e} exceeds {CONDITION_LIMIT:.0e}")
    try:
        lu = lu_factor(m_mat)
    except ValueError as exc:
        raise IllConditioned(str(exc)) from exc
    minv_p = lu_solve(lu, pm)
    schur = pm.T @ minv_p
    s_cond = np.linalg.cond(schur)
    if not np.isfinite(s_cond) or s_cond > CONDITION_LIMIT:
        raise IllConditioned(f"reduced-system condition {s_cond:.3e} exceeds {CONDITION_LIMIT:.0e}")
    return lu, minv_p, schur


def _solve(lu, minv_p, schur, pm: np.ndarray, y: np.ndarray):
    minv_y = lu_solve(lu, y)
    a = np.linalg.solve(schur, pm.T @ minv_y)
    w = minv_y - minv_p @ a
    return w, a


def fit_tps(points, lam: float = 0.0) -> TpsSurface:
    """Fit a (smoothing) thin-plate spline through scattered IV points.

    lam = 0 interpolates exactly; lam > 0 trades fit for smoothness; in the
    large-lam limit the surface tends to the least-squares affine fit.
    Duplicate locations are averaged before fitting and the points are put
    in a canonical order, so the result is invariant to input permutation.
    """
    if lam < 0.0:
        raise ValueError(f"lam must be >= 0, got {lam}")
    m = np.asarray([p.moneyness for p in points], dtype=float)
    t = np.asarray([p.tau for p in points], dtype=float)
    v = np.asarray([p.iv for p in points], dtype=float)
    if not (np.isfinite(m).all() and np.isfinite(t).all() and np.isfinite(v).all()):
        raise ValueError("non-finite fitting point")
    m, t, v = _dedupe_and_sort(m, t, v)
    tau_scale, xy, k, pm = _geometry(m, t)
    lu, minv_p, schur = _factor(k, pm, lam)
    w, a = _solve(lu, minv_p, schur, pm, v)
    a0, a_m, a_ts = a
    return TpsSurface(
        centers=np.column_stack([m, t]),
        weights=w,
        affine=(float(a0), float(a_m), float(a_ts * tau_scale)),
        lam=lam,
        tau_scale=tau_scale,
    )


def _hull_equations(surface: TpsSurface) -> np.ndarray:
    if surface._hull_eq is None:
        pts = np.column_stack(
            [surface.centers[:, 0], surface.centers[:, 1] * surface.tau_scale]
        )
        surface._hull_eq = ConvexHull(pts).equations
    return surface._hull_eq


def _inside_hull(surface: TpsSurface, m, ts, margin: float) -> np.ndarray:
    eq = _hull_equations(surface)
    q = np.column_stack([np.atleast_1d(m), np.atleast_1d(ts)])
    val = q @ eq[:, :2].T + eq[:, 2]
    return (val <= margin + HULL_SLACK).all(axis=1)


def _eval_scaled(surface: TpsSurface, m: np.ndarray, ts: np.ndarray) -> np.ndarray:
    a0, a_m, a_t = surface.affine
    cx = surface.centers[:, 0]
    cy = surface.centers[:, 1] * surface.tau_scale
    d2 = (m[:, None] - cx[None, :]) ** 2 + (ts[:, None] - cy[None, :]) ** 2
    out = a0 + a_m * m + (a_t / surface.tau_scale) * ts
    out = out + _kernel(d2) @ surface.weights
    return out


def eval_surface(surface: TpsSurface, m: float, tau: float, margin: float = 0.0) -> float:
    """Evaluate the fitted surface at one (m, tau); refuses extrapolation."""
    ts = tau * surface.tau_scale
    if not _inside_hull(surface, m, ts, margin)[0]:
        raise ExtrapolationRefused(f"({m}, {tau}) outside fitted domain (margin {margin})")
    return float(_eval_scaled(surface, np.asarray([m], dtype=float), np.asarray([ts], dtype=float))[0])


def extract_smile(
    surface: TpsSurface,
    tau: float,
    grid: MoneynessGrid,
    day: date | None = None,
    minute: int | None = None,
    margin: float = 0.0,
) -> SmileSample:
    """Read the fixed-maturity smile off the surface at the grid bin centers."""
    centers = grid.centers
    ts = np.full(len(centers), tau * surface.tau_scale)
    inside = _inside_hull(surface, centers, ts, margin)
    if not inside.all():
        bad = centers[~inside]
        raise SliceUnavailable(f"bins {np.round(bad, 4).tolist()} unevaluable at tau={tau}")
    vals = _eval_scaled(surface, centers.astype(float), ts)
    return SmileSample(day=day, minute=minute, tau=tau, iv_bins=tuple(float(x) for x in vals))


class SmileGridExtractor:
    """Smile extraction with a cache over repeated point geometries.

    Extraction is linear in the observed IVs once the point locations, the
    smoothing parameter and the query grid are fixed, so for every distinct
    geometry the (bins x points) operator is built once and reused.  Results
    match fit_tps + extract_smile on the same inputs; this is purely a fast
    path for markets whose strikes sit on a stable moneyness grid.
    """

    def __init__(self, grid: MoneynessGrid, taus, lam: float, margin: float = 0.0,
                 cache_size: int = 512):
        self.grid = grid
        self.taus = tuple(float(t) for t in taus)
        self.lam = float(lam)
        self.margin = float(margin)
        self.cache_size = cache_size
        self._cache: dict[bytes, tuple] = {}

    def _operator(self, m: np.ndarray, t: np.ndarray):
        # exact-bytes key: geometries differing even in the last ulp build
        # their own operators, so results never depend on cache-fill order
        key = np.concatenate([m, t]).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            return hit
        tau_scale, xy, k, pm = _geometry(m, t)
        lu, minv_p, schur = _factor(k, pm, self.lam)

        centers = self.grid.centers
        nq = len(centers)
        hull_eq = ConvexHull(xy).equations
        q_kernel, q_poly, avail = [], [], {}
        for tau in self.taus:
            qs = np.column_stack([centers, np.full(nq, tau * tau_scale)])
            val = qs @ hull_eq[:, :2].T + hull_eq[:, 2]
            avail[tau] = bool((val <= self.margin + HULL_SLACK).all())
            d2 = ((qs[:, None, :] - xy[None, :, :]) ** 2).sum(axis=2)
            q_kernel.append(_kernel(d2))
            q_poly.append(np.column_stack([np.ones(nq), qs]))
        qk = np.vstack(q_kernel)
        qp = np.vstack(q_poly)

        # values = Qk w + Qp a, both linear in y via the Schur reduction
        n = len(m)
        minv = lu_solve(lu, np.eye(n))
        a_op = np.linalg.solve(schur, minv_p.T)     # (3, n): y -> a
        w_op = minv - minv_p @ a_op                 # (n, n): y -> w
        op = qk @ w_op + qp @ a_op
        entry = (op, avail)
        if len(self._cache) >= self.cache_size:
            self._cache.pop(next(iter(self._cache)))
        self._cache[key] = entry
        return entry

    def extract(self, m, t, iv, day: date | None = None, minute: int | None = None) -> dict[float, SmileSample]:
        """Smiles for every requested tau; raises SliceUnavailable per miss.

        Returns {tau: SmileSample} for the taus whose bins are all inside the
        hull; taus that are not evaluable are simply absent.
        """
        m = np.asarray(m, dtype=float)
        t = np.asarray(t, dtype=float)
        iv = np.asarray(iv, dtype=float)
        m, t, iv = _dedupe_and_sort(m, t, iv)
        op, avail = self._operator(m, t)
        vals = op @ iv
        nq = self.grid.n_bins
        out = {}
        for i, tau in enumerate(self.taus):
            if avail[tau]:
                block = vals[i * nq:(i + 1) * nq]
                out[tau] = SmileSample(day=day, minute=minute, tau=tau,
                                       iv_bins=tuple(block.tolist()))
        return out

    def batch(self, m, t, iv_matrix) -> dict[float, np.ndarray]:
        """Extract many smiles sharing one geometry in a single solve.

        iv_matrix is (n_observations, n_points) with columns aligned to the
        unsorted (m, t); rows usually are the minutes of one day.  Duplicate
        point locations are not supported here (callers fall back to
        extract).  Returns {tau: (n_observations, n_bins)} for the
        evaluable taus; identical values to extract, row by row.
        """
        m = np.asarray(m, dtype=float)
        t = np.asarray(t, dtype=float)
        order, dup = _canonical_order(m, t)
        if dup:
            raise ValueError("batch extraction requires duplicate-free locations")
        op, avail = self._operator(m[order], t[order])
        vals = op @ np.asarray(iv_matrix, dtype=float)[:, order].T
        nq = self.grid.n_bins
        return {
            tau: vals[i * nq:(i + 1) * nq].T.copy()
            for i, tau in enumerate(self.taus)
            if avail[tau]
        }
