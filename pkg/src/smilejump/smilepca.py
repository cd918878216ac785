"""Smile characterization: minute-over-minute IV change panels, PCA with
varimax rotation, score computation and intraday deseasonalization.

One model is fitted per maturity slice, pooled over every (day, minute)
observation, so jump-day and no-jump-day scores live in a common basis.
PCA runs on the covariance matrix: the moneyness-bin columns share units.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass
from datetime import date
from typing import NamedTuple, Sequence

import numpy as np

from .surface import SmileSample

__all__ = [
    "DeltaIvPanel",
    "PcaModel",
    "ScorePanel",
    "EmptyPanel",
    "SchemaError",
    "InsufficientRowsWarning",
    "build_panel",
    "fit_pca",
    "varimax",
    "varimax_criterion",
    "VarimaxInfo",
    "compute_scores",
    "deseasonalize",
    "component_regions",
]

log = logging.getLogger(__name__)


class EmptyPanel(ValueError):
    """No usable change rows could be formed."""


class SchemaError(ValueError):
    """Panel and model column layouts do not match."""


class InsufficientRowsWarning(UserWarning):
    pass


@dataclass(frozen=True)
class DeltaIvPanel:
    """IV changes between consecutive minutes of the same session.

    rows[i] identifies observation i as (day, minute); values[i, j] is the
    change of bin j's IV from minute-1 to minute.
    """

    tau: float
    rows: tuple[tuple[date, int], ...]
    values: np.ndarray
    bin_centers: tuple[float, ...] | None = None

    @property
    def n_rows(self) -> int:
        return self.values.shape[0]

    @property
    def n_cols(self) -> int:
        return self.values.shape[1]


@dataclass(frozen=True)
class PcaModel:
    """Varimax-rotated loadings plus the pre-rotation decomposition."""

    tau: float
    loadings: np.ndarray            # (p, k) rotated, sign-normalized
    loadings_unrotated: np.ndarray  # (p, k) eigenvector basis, sign-normalized
    eigenvalues: np.ndarray         # (k,) pre-rotation component variances
    explained_fractions: np.ndarray  # (k,) eigenvalue / total variance
    total_explained: float
    column_means: np.ndarray        # (p,)

    @property
    def n_components(self) -> int:
        return self.loadings.shape[1]

    def loading_signs(self) -> tuple[int, ...]:
        """Dominant direction of each rotated component (+1 or -1)."""
        sums = self.loadings.sum(axis=0)
        return tuple(1 if s >= 0.0 else -1 for s in sums)


@dataclass(frozen=True)
class ScorePanel:
    """Component scores aligned row-for-row with the source panel."""

    tau: float
    rows: tuple[tuple[date, int], ...]
    scores: np.ndarray
    deseasonalized: bool = False
    unadjusted_minutes: tuple[int, ...] = ()


class VarimaxInfo(NamedTuple):
    criterion_path: tuple[float, ...]
    sweeps: int
    converged: bool


def build_panel(smiles: Sequence[SmileSample], tau: float) -> DeltaIvPanel:
    """Difference consecutive-minute smiles within each day.

    A change row exists exactly where minute t and t-1 both have a smile in
    the same session; day boundaries never produce a row.
    """
    per_day: dict[date, dict[int, np.ndarray]] = {}
    n_bins = None
    for s in smiles:
        if s.day is None or s.minute is None:
            raise ValueError("panel smiles need day and minute metadata")
        if n_bins is None:
            n_bins = len(s.iv_bins)
        elif len(s.iv_bins) != n_bins:
            raise SchemaError("inconsistent bin counts across smiles")
        per_day.setdefault(s.day, {})[s.minute] = np.asarray(s.iv_bins, dtype=float)

    rows, values = [], []
    for day in sorted(per_day):
        minutes = per_day[day]
        for minute in sorted(minutes):
            prev = minutes.get(minute - 1)
            if prev is not None:
                rows.append((day, minute))
                values.append(minutes[minute] - prev)
    if not rows:
        raise EmptyPanel(f"no consecutive-minute smile pairs for tau={tau}")
    return DeltaIvPanel(tau=tau, rows=tuple(rows), values=np.vstack(values))


def _normalize_signs(loadings: np.ndarray) -> np.ndarray:
    """Flip columns so each column's largest-|entry| is positive."""
    out = loadings.copy()
    for j in range(out.shape[1]):
        k = int(np.argmax(np.abs(out[:, j])))
        if out[k, j] < 0.0:
            out[:, j] = -out[:, j]
    return out


def varimax_criterion(loadings: np.ndarray) -> float:
    """Sum over columns of the variance of squared loadings."""
    sq = np.asarray(loadings, dtype=float) ** 2
    return float(np.sum(sq.var(axis=0)))


def varimax(
    loadings: np.ndarray,
    tol: float = 1e-8,
    max_sweeps: int = 200,
    return_info: bool = False,
):
    """Orthogonal varimax rotation by pairwise column rotations.

    Every pairwise rotation maximizes the criterion exactly for its pair, so
    the criterion is non-decreasing; sweeps stop once the largest rotation
    angle in a sweep falls below tol.  Columns stay orthonormal and come
    back sign-normalized.
    """
    b = np.array(loadings, dtype=float)
    p, k = b.shape
    gram = b.T @ b
    if not np.allclose(gram, np.eye(k), atol=1e-8):
        raise ValueError("varimax expects orthonormal columns")
    path = [varimax_criterion(b)]
    converged = False
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        max_theta = 0.0
        for i in range(k - 1):
            for j in range(i + 1, k):
                u = b[:, i] ** 2 - b[:, j] ** 2
                v = 2.0 * b[:, i] * b[:, j]
                num = 2.0 * (u @ v - u.sum() * v.sum() / p)
                den = (u @ u - v @ v) - (u.sum() ** 2 - v.sum() ** 2) / p
                theta = 0.25 * np.arctan2(num, den)
                if abs(theta) > max_theta:
                    max_theta = abs(theta)
                c, s = np.cos(theta), np.sin(theta)
                bi = c * b[:, i] + s * b[:, j]
                bj = -s * b[:, i] + c * b[:, j]
                b[:, i], b[:, j] = bi, bj
        path.append(varimax_criterion(b))
        if max_theta < tol:
            converged = True
            break
    b = _normalize_signs(b)
    if return_info:
        return b, VarimaxInfo(tuple(path), sweeps, converged)
    return b


def fit_pca(panel: DeltaIvPanel, k: int = 3, rotate: bool = True) -> PcaModel:
    """Principal components of the column-centered change panel.

    The pre-rotation components are the top-k eigenvectors of the sample
    covariance (computed through an SVD of the centered data); explained
    fractions are eigenvalues over total variance.  Loadings beyond the
    numerical rank of the covariance are refused.
    """
    x = panel.values
    n, p = x.shape
    if n <= p:
        raise EmptyPanel(f"{n} rows cannot support a {p}-column PCA")
    if n < 10 * p:
        warnings.warn(f"only {n} rows for {p} columns", InsufficientRowsWarning, stacklevel=2)
    means = x.mean(axis=0)
    xc = x - means
    _, svals, vt = np.linalg.svd(xc, full_matrices=False)
    eig = svals ** 2 / (n - 1)
    rank = int(np.sum(svals > svals[0] * 1e-12)) if svals[0] > 0 else 0
    if k > rank:
        raise EmptyPanel(f"requested {k} components but covariance rank is {rank}")
    total = float(eig.sum())
    loadings0 = _normalize_signs(vt[:k].T)
    rotated = varimax(loadings0) if rotate else loadings0
    fractions = eig[:k] / total
    return PcaModel(
        tau=panel.tau,
        loadings=rotated,
        loadings_unrotated=loadings0,
        eigenvalues=eig[:k].copy(),
        explained_fractions=fractions,
        total_explained=float(fractions.sum()),
        column_means=means,
    )


def compute_scores(panel: DeltaIvPanel, model: PcaModel) -> ScorePanel:
    """Project rows on the model: S = (X - column_means) B."""
    if panel.values.shape[1] != model.loadings.shape[0]:
        raise SchemaError(
            f"panel has {panel.values.shape[1]} columns, model expects {model.loadings.shape[0]}"
        )
    scores = (panel.values - model.column_means) @ model.loadings
    return ScorePanel(tau=panel.tau, rows=panel.rows, scores=scores)


def deseasonalize(panel: ScorePanel, min_days: int = 2) -> ScorePanel:
    """Remove the per-minute cross-day mean from every score column.

    Minute-of-day cells backed by fewer than min_days days are left
    unadjusted and reported in unadjusted_minutes.
    """
    minutes = np.fromiter((m for _, m in panel.rows), dtype=int, count=len(panel.rows))
    scores = panel.scores.copy()
    order = np.argsort(minutes, kind="stable")
    sorted_minutes = minutes[order]
    starts = np.concatenate([[0], np.flatnonzero(np.diff(sorted_minutes)) + 1])
    counts = np.diff(np.concatenate([starts, [len(order)]]))
    means = np.add.reduceat(scores[order], starts, axis=0) / counts[:, None]
    adjust = counts >= min_days
    means[~adjust] = 0.0
    scores[order] -= np.repeat(means, counts, axis=0)
    unadjusted = [int(m) for m in sorted_minutes[starts][~adjust]]
    if unadjusted:
        log.info("deseasonalize: %d minute cells left unadjusted", len(unadjusted))
    return ScorePanel(
        tau=panel.tau,
        rows=panel.rows,
        scores=scores,
        deseasonalized=True,
        unadjusted_minutes=tuple(unadjusted),
    )


def component_regions(model: PcaModel, bin_centers: Sequence[float]) -> tuple[str, ...]:
    """Label each rotated component by where its |loadings| concentrate.

    Regions follow the moneyness reading of the smile: below 0.95 is the
    OTM-put side, above 1.05 the OTM-call side, in between at-the-money.
    """
    centers = np.asarray(bin_centers, dtype=float)
    labels = []
    masks = {
        "otm_put": centers < 0.95,
        "atm": (centers >= 0.95) & (centers <= 1.05),
        "otm_call": centers > 1.05,
    }
    for j in range(model.n_components):
        weight = model.loadings[:, j] ** 2
        best = max(masks, key=lambda r: float(weight[masks[r]].sum()) if masks[r].any() else -1.0)
        labels.append(best)
    return tuple(labels)
