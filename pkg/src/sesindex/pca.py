"""Correlation-matrix principal component analysis.

Eigenvectors come from ``numpy.linalg.eigh``; everything on top of it (sign
canonicalization, tie ordering, scoring, component selection) lives here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import PcaError

PSD_TOL = 1e-8


@dataclass(frozen=True)
class CorrelationMatrix:
    variable_names: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.values, dtype=float)
        k = len(self.variable_names)
        if c.shape != (k, k):
            raise PcaError(f"correlation matrix shape {c.shape} does not match {k} names")
        if not np.allclose(c, c.T, atol=1e-12, rtol=0):
            raise PcaError("correlation matrix is not symmetric")
        if not np.allclose(np.diag(c), 1.0, atol=1e-12, rtol=0):
            raise PcaError("correlation matrix diagonal is not 1")
        if np.abs(c).max() > 1.0 + 1e-12:
            raise PcaError("correlation entries outside [-1, 1]")
        object.__setattr__(self, "values", c)


@dataclass(frozen=True)
class PcaResult:
    """Eigen-decomposition of a correlation matrix plus unit scores.

    ``loadings[:, j]`` is the unit-norm eigenvector of component ``j``;
    ``scores`` is standardized data times loadings.
    """

    variable_names: tuple[str, ...]
    eigenvalues: np.ndarray
    loadings: np.ndarray
    explained_fraction: np.ndarray
    scores: np.ndarray

    @property
    def n_variables(self) -> int:
        return len(self.variable_names)


def standardize(data) -> np.ndarray:
    """Column z-scores using the sample standard deviation (ddof=1)."""
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    mean = x.mean(axis=0)
    std = x.std(axis=0, ddof=1)
    return (x - mean) / std


def correlation(table, names=None) -> CorrelationMatrix:
    """Pearson correlation matrix of the columns of ``table`` (units x variables)."""
    x = np.asarray(table, dtype=float)
    if x.ndim != 2:
        raise PcaError("correlation needs a 2-D table")
    n, k = x.shape
    names = tuple(names) if names is not None else tuple(f"v{i}" for i in range(k))
    if len(names) != k:
        raise PcaError("names do not match column count")
    if n < 3:
        raise PcaError(f"correlation needs at least 3 units, got {n}")
    if not np.all(np.isfinite(x)):
        raise PcaError("table contains non-finite values")
    constant = [names[j] for j in range(k) if np.ptp(x[:, j]) == 0]
    if constant:
        raise PcaError(f"constant column(s) cannot be correlated: {', '.join(constant)}")
    z = standardize(x)
    c = (z.T @ z) / (n - 1)
    c = (c + c.T) / 2.0
    np.fill_diagonal(c, 1.0)
    np.clip(c, -1.0, 1.0, out=c)
    return CorrelationMatrix(names, c)


TIE_TOL = 1e-12


def anchor_index(vec: np.ndarray) -> int:
    """Index of the largest |entry|; near-ties go to the lowest index."""
    mags = np.abs(vec)
    return int(np.nonzero(mags >= mags.max() - TIE_TOL)[0][0])


def _canonical_sign(vec: np.ndarray) -> np.ndarray:
    return -vec if vec[anchor_index(vec)] < 0 else vec


def eigen(corr: CorrelationMatrix) -> tuple[np.ndarray, np.ndarray]:
    """Descending eigenvalues and sign-canonical unit eigenvectors."""
    c = corr.values
    try:
        vals, vecs = np.linalg.eigh(c)
    except np.linalg.LinAlgError as exc:
        raise PcaError(f"eigen-solver failed: {exc}") from exc
    if vals.min() < -PSD_TOL * max(1.0, c.shape[0]):
        raise PcaError(f"correlation matrix is not positive semidefinite (min eigenvalue {vals.min():.3g})")
    vals = np.where(vals < 0, 0.0, vals)
    vecs = np.column_stack([_canonical_sign(vecs[:, j]) for j in range(vecs.shape[1])])

    # descending; tied eigenvalues ordered by their loading's anchor index
    anchors = [anchor_index(vecs[:, j]) for j in range(vecs.shape[1])]
    scale = max(1.0, float(vals.max()))
    order = np.argsort(-vals, kind="stable")
    # neighbours agreeing to 1e-10 relative count as tied
    grouped = []
    i = 0
    while i < len(order):
        block = [order[i]]
        while i + 1 < len(order) and abs(vals[order[i + 1]] - vals[block[0]]) <= 1e-10 * scale:
            i += 1
            block.append(order[i])
        grouped.extend(sorted(block, key=lambda j: (anchors[j], j)))
        i += 1
    idx = np.array(grouped)
    return vals[idx], vecs[:, idx]


def run_pca(corr: CorrelationMatrix, standardized_data) -> PcaResult:
    vals, vecs = eigen(corr)
    z = np.asarray(standardized_data, dtype=float)
    if z.ndim == 1:
        z = z[:, None]
    if z.shape[1] != vals.size:
        raise PcaError(f"data has {z.shape[1]} columns, correlation has {vals.size}")
    total = vals.sum()
    return PcaResult(
        variable_names=corr.variable_names,
        eigenvalues=vals,
        loadings=vecs,
        explained_fraction=vals / total,
        scores=z @ vecs,
    )


def pca(table, names=None) -> PcaResult:
    """Correlation and PCA of a units x variables table in one call."""
    corr = correlation(table, names)
    return run_pca(corr, standardize(table))


def select_components(result: PcaResult, threshold: float = 0.75) -> int:
    """Smallest component count whose cumulative explained share reaches ``threshold``."""
    if not 0 < threshold <= 1:
        raise PcaError(f"threshold must be in (0, 1], got {threshold}")
    cumulative = np.cumsum(result.explained_fraction)
    # slack absorbs rounding in cumulative sums that should land exactly on the threshold
    hits = np.nonzero(cumulative >= threshold - 1e-12)[0]
    return int(hits[0]) + 1 if hits.size else result.n_variables
