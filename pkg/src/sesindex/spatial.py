"""Spatial validation harness.

Queen contiguity weights, Moran's I with permutation inference, simple OLS and
geographically weighted regression (adaptive bi-square kernel with a fixed
neighbour count), compared by AICc.
"""

from __future__ import annotations

import json
import math
import re
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, NamedTuple

import numpy as np
import pandas as pd
from scipy import sparse
from scipy.spatial import cKDTree

from .errors import SesIndexWarning, SpatialError

ALTERNATIVES = ("directed", "greater", "less", "two-sided")
KERNELS = ("adaptive_bisquare", "uniform")


# --- weights ----------------------------------------------------------------


@dataclass
class SpatialWeights:
    """Binary neighbour structure over ``unit_ids`` (no self-neighbours)."""

    unit_ids: list[str]
    neighbors: list[list[int]]

    def __post_init__(self):
        if len(self.neighbors) != len(self.unit_ids):
            raise SpatialError("neighbors list does not match unit count")
        self.neighbors = [sorted(set(nb)) for nb in self.neighbors]
        for i, nb in enumerate(self.neighbors):
            if i in nb:
                raise SpatialError(f"unit {self.unit_ids[i]!r} lists itself as a neighbour")

    @property
    def n(self) -> int:
        return len(self.unit_ids)

    @property
    def degrees(self) -> list[int]:
        return [len(nb) for nb in self.neighbors]

    @property
    def isolated(self) -> list[str]:
        return [u for u, nb in zip(self.unit_ids, self.neighbors) if not nb]

    def is_symmetric(self) -> bool:
        return all(i in self.neighbors[j] for i, nb in enumerate(self.neighbors) for j in nb)

    def sparse(self, row_standardize: bool = False) -> sparse.csr_matrix:
        rows = [i for i, nb in enumerate(self.neighbors) for _ in nb]
        cols = [j for nb in self.neighbors for j in nb]
        data = np.ones(len(rows))
        if row_standardize:
            deg = np.array(self.degrees, dtype=float)
            data = data / deg[rows]
        return sparse.csr_matrix((data, (rows, cols)), shape=(self.n, self.n))

    def subset(self, keep: list[int]) -> "SpatialWeights":
        pos = {old: new for new, old in enumerate(keep)}
        return SpatialWeights([self.unit_ids[i] for i in keep],
                              [[pos[j] for j in self.neighbors[i] if j in pos] for i in keep])

    def reorder(self, unit_ids) -> "SpatialWeights":
        """Same relation expressed over ``unit_ids`` (must be the same set)."""
        unit_ids = [str(u) for u in unit_ids]
        if set(unit_ids) != set(self.unit_ids) or len(unit_ids) != self.n:
            missing = sorted(set(unit_ids) - set(self.unit_ids))
            extra = sorted(set(self.unit_ids) - set(unit_ids))
            raise SpatialError(f"weights cover different units: missing {missing}, extra {extra}")
        old = {u: i for i, u in enumerate(self.unit_ids)}
        new = {u: i for i, u in enumerate(unit_ids)}
        return SpatialWeights(unit_ids, [[new[self.unit_ids[j]] for j in self.neighbors[old[u]]]
                                         for u in unit_ids])


def polygon_rings(geometry) -> list[np.ndarray]:
    """All rings of a Polygon/MultiPolygon (GeoJSON dict or nested lists)."""
    if isinstance(geometry, Mapping):
        gtype = geometry.get("type")
        coords = geometry.get("coordinates")
        if gtype == "Polygon":
            polys = [coords]
        elif gtype == "MultiPolygon":
            polys = coords
        else:
            raise SpatialError(f"unsupported geometry type {gtype!r}")
    else:
        coords = geometry
        # a bare ring is a list of points; a polygon is a list of rings
        depth = 0
        probe = coords
        while isinstance(probe, (list, tuple)) and probe:
            probe = probe[0]
            depth += 1
        polys = {2: [[coords]], 3: [coords], 4: coords}.get(depth)
        if polys is None:
            raise SpatialError("cannot interpret geometry coordinates")
    rings = [np.asarray(r, dtype=float)[:, :2] for poly in (polys or []) for r in poly if len(r)]
    return rings


def queen_contiguity(polygons: Mapping[str, object], precision: float = 1e-6) -> SpatialWeights:
    """Units are neighbours iff their boundaries share a vertex.

    Vertex coordinates are snapped to a grid of ``precision`` before matching.
    """
    unit_ids = [str(u) for u in polygons]
    owners: dict[tuple[int, int], set[int]] = {}
    for i, uid in enumerate(unit_ids):
        rings = polygon_rings(polygons[uid]) if polygons[uid] is not None else []
        if not rings:
            raise SpatialError(f"unit {uid!r} has empty geometry")
        for ring in rings:
            keys = np.round(ring / precision).astype(np.int64)
            for key in map(tuple, keys):
                owners.setdefault(key, set()).add(i)
    neighbors: list[set[int]] = [set() for _ in unit_ids]
    for units in owners.values():
        if len(units) > 1:
            for i in units:
                neighbors[i] |= units - {i}
    w = SpatialWeights(unit_ids, [sorted(nb) for nb in neighbors])
    if w.isolated:
        warnings.warn(f"isolated units (no queen neighbours): {', '.join(w.isolated)}",
                      SesIndexWarning, stacklevel=2)
    return w


def read_geojson(path, id_field: str = "unit_id") -> dict[str, dict]:
    """Geometries of a FeatureCollection keyed by the ``id_field`` property."""
    path = Path(path)
    if not path.exists():
        raise SpatialError(f"geometry file not found: {path}")
    doc = json.loads(path.read_text("utf-8"))
    if doc.get("type") != "FeatureCollection":
        raise SpatialError(f"{path}: not a GeoJSON FeatureCollection")
    out: dict[str, dict] = {}
    for feat in doc.get("features", []):
        props = feat.get("properties") or {}
        if id_field not in props:
            raise SpatialError(f"{path}: feature without {id_field!r} property")
        out[str(props[id_field])] = feat.get("geometry")
    return out


def read_adjacency(path) -> SpatialWeights:
    """Parse ``unit_id: nb1 nb2 ...`` lines (commas or spaces); symmetrized."""
    path = Path(path)
    if not path.exists():
        raise SpatialError(f"adjacency file not found: {path}")
    lists: dict[str, list[str]] = {}
    for lineno, line in enumerate(path.read_text("utf-8").splitlines(), 1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        if ":" not in line:
            raise SpatialError(f"{path}:{lineno}: expected 'unit_id: neighbours'")
        head, tail = line.split(":", 1)
        lists[head.strip()] = [t for t in re.split(r"[,\s]+", tail.strip()) if t]
    ids = list(lists)
    for nbs in list(lists.values()):
        for nb in nbs:
            if nb not in lists:
                lists[nb] = []
                ids.append(nb)
    pos = {u: i for i, u in enumerate(ids)}
    neighbors: list[set[int]] = [set() for _ in ids]
    for u, nbs in lists.items():
        for nb in nbs:
            if nb != u:
                neighbors[pos[u]].add(pos[nb])
                neighbors[pos[nb]].add(pos[u])
    return SpatialWeights(ids, [sorted(s) for s in neighbors])


def ring_centroid(geometry) -> tuple[float, float]:
    """Area-weighted centroid of a polygon's outer rings (holes ignored)."""
    if isinstance(geometry, Mapping):
        polys = [geometry["coordinates"]] if geometry["type"] == "Polygon" else geometry["coordinates"]
        rings = [np.asarray(p[0], dtype=float)[:, :2] for p in polys]
    else:
        rings = polygon_rings(geometry)[:1]
    area_sum, cx, cy = 0.0, 0.0, 0.0
    for r in rings:
        x, y = r[:, 0], r[:, 1]
        x1, y1 = np.roll(x, -1), np.roll(y, -1)
        cross = x * y1 - x1 * y
        a = cross.sum() / 2.0
        if a == 0:
            continue
        cx += ((x + x1) * cross).sum() / 6.0
        cy += ((y + y1) * cross).sum() / 6.0
        area_sum += a
    if area_sum == 0:
        pts = np.vstack(rings)
        return float(pts[:, 0].mean()), float(pts[:, 1].mean())
    return float(cx / area_sum), float(cy / area_sum)


# --- Moran's I --------------------------------------------------------------


class MoranResult(NamedTuple):
    I: float
    p: float


def _moran_core(z: np.ndarray, w: sparse.csr_matrix) -> float:
    return float(z.size / w.sum() * (z @ (w @ z)) / (z @ z))


def morans_i(values, weights: SpatialWeights, permutations: int = 999, seed: int | None = None,
             alternative: str = "directed") -> MoranResult:
    """Global Moran's I with a permutation pseudo p-value.

    With binary weights ``w``, ``I = n / S0 * sum_ij w_ij z_i z_j / sum_i z_i**2``
    where ``z`` are deviations from the mean and ``S0 = sum_ij w_ij``.
    The pseudo p-value is ``(R + 1) / (M + 1)`` with ``R`` the number of the
    ``M`` seeded permutations at least as extreme as the observed value.
    ``alternative="directed"`` counts extremes on the observed side of zero;
    ``"two-sided"`` doubles that (capped at 1). Isolated units are excluded.
    """
    x = np.asarray(values, dtype=float)
    if x.shape != (weights.n,):
        raise SpatialError(f"{x.size} values for {weights.n} weighted units")
    if alternative not in ALTERNATIVES:
        raise SpatialError(f"unknown alternative {alternative!r}")
    if weights.isolated:
        warnings.warn(f"Moran's I excludes isolated units: {', '.join(weights.isolated)}",
                      SesIndexWarning, stacklevel=2)
        keep = [i for i, nb in enumerate(weights.neighbors) if nb]
        weights = weights.subset(keep)
        x = x[keep]
    if weights.n < 4:
        raise SpatialError(f"Moran's I needs at least 4 connected units, got {weights.n}")
    z = x - x.mean()
    if not np.any(z != 0) or z @ z == 0:
        raise SpatialError("Moran's I is undefined for a constant field")
    w = weights.sparse()
    observed = _moran_core(z, w)
    if permutations <= 0:
        return MoranResult(observed, float("nan"))
    if seed is None:
        raise SpatialError("a seed is required for permutation inference")

    rng = np.random.default_rng(seed)
    perms = rng.permuted(np.tile(z, (permutations, 1)), axis=1).T  # n x M
    cross = np.einsum("ij,ij->j", perms, w @ perms)
    sims = z.size / w.sum() * cross / (z @ z)
    if alternative == "greater" or (alternative in ("directed", "two-sided") and observed >= 0):
        extreme = int(np.sum(sims >= observed))
    else:
        extreme = int(np.sum(sims <= observed))
    p = (extreme + 1) / (permutations + 1)
    if alternative == "two-sided":
        p = min(1.0, 2 * p)
    return MoranResult(observed, p)


# --- regression -------------------------------------------------------------


@dataclass(frozen=True)
class GwrConfig:
    neighbors: int
    kernel: str = "adaptive_bisquare"
    jitter_seed: int = 0

    def __post_init__(self):
        if self.kernel not in KERNELS:
            raise SpatialError(f"unknown kernel {self.kernel!r}")
        # two local parameters: intercept and slope
        if self.neighbors < 3:
            raise SpatialError(f"neighbour count must be at least 3, got {self.neighbors}")


@dataclass
class SpatialFit:
    label: str
    model: str
    observed: np.ndarray
    coefficients: np.ndarray
    fitted: np.ndarray
    residuals: np.ndarray
    standardized_residuals: np.ndarray
    hat_trace: float
    rss: float
    r2: float
    r2_global_adjusted: float
    aicc: float
    moran_i: float = float("nan")
    moran_p: float = float("nan")
    std_errors: np.ndarray | None = None
    bandwidths: np.ndarray | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.observed.size


@dataclass
class FailedFit:
    """Placeholder row for a model that could not be estimated."""

    label: str
    model: str
    reason: str


def gaussian_aicc(rss: float, n: int, trace: float) -> float:
    """``2n ln(sigma) + n ln(2 pi) + n (n + tr) / (n - 2 - tr)`` with ``sigma**2 = RSS / n``."""
    if n - 2 - trace <= 0:
        raise SpatialError(f"model too flexible for AICc: n - 2 - tr(S) = {n - 2 - trace:.4g}")
    with np.errstate(divide="ignore"):
        log_sigma = 0.5 * math.log(rss / n) if rss > 0 else -math.inf
    return 2 * n * log_sigma + n * math.log(2 * math.pi) + n * (n + trace) / (n - 2 - trace)


def _standardize_residuals(resid: np.ndarray) -> np.ndarray:
    sd = resid.std(ddof=1)
    return resid / sd if sd > 0 else np.zeros_like(resid)


def _attach_moran(fit: SpatialFit, weights: SpatialWeights | None, permutations: int,
                  seed: int | None, alternative: str) -> SpatialFit:
    if weights is None:
        return fit
    # residuals at rounding level carry the data's spatial pattern, not the model's
    floor = 1e-10 * max(float(np.std(fit.observed)), np.finfo(float).tiny)
    if not float(np.std(fit.residuals)) > floor:
        msg = f"{fit.label or fit.model}: residual variance at rounding level, Moran's I undefined"
        warnings.warn(msg, SesIndexWarning, stacklevel=3)
        fit.notes.append(msg)
        return fit
    res = morans_i(fit.standardized_residuals, weights, permutations, seed, alternative)
    fit.moran_i, fit.moran_p = res.I, res.p
    return fit


def _check_xy(y, x) -> tuple[np.ndarray, np.ndarray]:
    y = np.asarray(y, dtype=float)
    x = np.asarray(x, dtype=float)
    if y.shape != x.shape or y.ndim != 1:
        raise SpatialError("y and x must be 1-D arrays of equal length")
    if not (np.all(np.isfinite(y)) and np.all(np.isfinite(x))):
        raise SpatialError("y and x must be finite")
    return y, x


def ols_simple(y, x, weights: SpatialWeights | None = None, permutations: int = 999,
               seed: int | None = None, label: str = "", alternative: str = "directed") -> SpatialFit:
    """Least-squares line ``y = a + b x`` with AICc, adjusted R² and residual Moran's I."""
    y, x = _check_xy(y, x)
    n = y.size
    if n < 3:
        raise SpatialError(f"OLS needs at least 3 observations, got {n}")
    xc = x - x.mean()
    sxx = xc @ xc
    if not np.ptp(x) > 0:
        raise SpatialError("constant predictor")
    slope = (xc @ (y - y.mean())) / sxx
    intercept = y.mean() - slope * x.mean()
    fitted = intercept + slope * x
    resid = y - fitted
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    p = 2
    s2 = rss / (n - p) if n > p else float("nan")
    se = np.sqrt(s2 * np.array([1.0 / n + x.mean() ** 2 / sxx, 1.0 / sxx]))
    fit = SpatialFit(
        label=label, model="ols", observed=y, coefficients=np.array([intercept, slope]),
        fitted=fitted, residuals=resid, standardized_residuals=_standardize_residuals(resid),
        hat_trace=float(p), rss=rss, r2=r2,
        r2_global_adjusted=1.0 - (1.0 - r2) * (n - 1) / (n - p),
        aicc=gaussian_aicc(rss, n, p), std_errors=se,
    )
    return _attach_moran(fit, weights, permutations, seed, alternative)


def jitter_duplicates(coords: np.ndarray, seed: int = 0) -> np.ndarray:
    """Move repeated points by 1e-9 of the bounding-box diagonal, deterministically."""
    coords = np.asarray(coords, dtype=float).copy()
    _, counts = np.unique(coords, axis=0, return_counts=True)
    if np.all(counts == 1):
        return coords
    seen = set()
    dup = []
    for i, row in enumerate(map(tuple, coords)):
        if row in seen:
            dup.append(i)
        seen.add(row)
    diag = float(np.hypot(*np.ptp(coords, axis=0))) or 1.0
    rng = np.random.default_rng(seed)
    angles = rng.uniform(0, 2 * np.pi, size=len(dup))
    radius = 1e-9 * diag * (1 + np.arange(len(dup)))
    coords[dup, 0] += radius * np.cos(angles)
    coords[dup, 1] += radius * np.sin(angles)
    warnings.warn(f"{len(dup)} duplicate coordinate(s) jittered for GWR", SesIndexWarning, stacklevel=2)
    return coords


def gwr_fit(y, x, coordinates, config: GwrConfig, weights: SpatialWeights | None = None,
            permutations: int = 999, seed: int | None = None, label: str = "",
            unit_ids=None, alternative: str = "directed") -> SpatialFit:
    """Geographically weighted simple regression.

    For each unit the bandwidth is the distance to its ``k``-th nearest other
    unit and observation weights are ``(1 - (d/h)**2)**2`` inside it, so each
    local fit rests on the unit itself plus its ``k - 1`` nearest neighbours.
    The ``uniform`` kernel (weight 1 on the ``k`` nearest units including
    itself) exists for diagnostics; with ``k = n`` it reproduces OLS.
    """
    y, x = _check_xy(y, x)
    n = y.size
    k = config.neighbors
    coords = np.asarray(coordinates, dtype=float)
    if coords.shape != (n, 2):
        raise SpatialError(f"coordinates must be an ({n}, 2) array")
    if config.kernel == "adaptive_bisquare" and not n > k:
        raise SpatialError(f"adaptive kernel needs more units than neighbours (n={n}, k={k})")
    if k > n:
        raise SpatialError(f"neighbour count {k} exceeds unit count {n}")
    coords = jitter_duplicates(coords, config.jitter_seed)
    ids = list(unit_ids) if unit_ids is not None else [str(i) for i in range(n)]

    tree = cKDTree(coords)
    if config.kernel == "adaptive_bisquare":
        dist, idx = tree.query(coords, k=k + 1)
        bandwidth = dist[:, k]
        dist, idx = dist[:, :k], idx[:, :k]
        w = (1.0 - (dist / bandwidth[:, None]) ** 2) ** 2
        w[dist >= bandwidth[:, None]] = 0.0
    else:
        dist, idx = tree.query(coords, k=k)
        dist, idx = dist.reshape(n, k), idx.reshape(n, k)
        bandwidth = dist[:, -1]
        w = np.ones_like(dist)

    # weighted simple regression per unit, in centred form
    xl, yl = x[idx], y[idx]
    sw = w.sum(axis=1)
    xbar = (w * xl).sum(axis=1) / sw
    ybar = (w * yl).sum(axis=1) / sw
    dx = xl - xbar[:, None]
    sxx = (w * dx * dx).sum(axis=1)
    distinct = np.array([np.ptp(xl[i][w[i] > 0]) > 0 for i in range(n)])
    scale = np.maximum(np.abs(xl).max(axis=1), 1.0)
    singular = ~distinct | (sxx <= 1e-12 * scale**2 * sw)
    if singular.any():
        bad = [ids[i] for i in np.nonzero(singular)[0]]
        raise SpatialError(f"local design singular (no variation in x) at unit(s): {', '.join(bad)}")
    slope = (w * dx * (yl - ybar[:, None])).sum(axis=1) / sxx
    intercept = ybar - slope * xbar
    fitted = intercept + slope * x
    resid = y - fitted

    self_w = np.where(idx == np.arange(n)[:, None], w, 0.0).sum(axis=1)
    hat = self_w * (1.0 / sw + (x - xbar) ** 2 / sxx)
    trace = float(hat.sum())
    rss = float(resid @ resid)
    tss = float(((y - y.mean()) ** 2).sum())
    r2 = 1.0 - rss / tss if tss > 0 else 1.0
    aicc = gaussian_aicc(rss, n, trace)
    fit = SpatialFit(
        label=label, model="gwr", observed=y, coefficients=np.column_stack([intercept, slope]),
        fitted=fitted, residuals=resid, standardized_residuals=_standardize_residuals(resid),
        hat_trace=trace, rss=rss, r2=r2,
        r2_global_adjusted=1.0 - (1.0 - r2) * (n - 1) / (n - trace),
        aicc=aicc, bandwidths=bandwidth,
    )
    return _attach_moran(fit, weights, permutations, seed, alternative)


# --- comparison -------------------------------------------------------------


REPORT_COLUMNS = ["indicator", "model", "r2_adj", "aicc", "moran_i", "moran_p", "best", "spatial_dependence"]


def compare_models(fits, alpha: float = 0.05) -> pd.DataFrame:
    """Rank fits by AICc (ascending) as a comparison table (indicator, adjusted R², AICc, Moran's I, p).

    ``best`` marks the lowest AICc with ``*``; ``spatial_dependence`` marks
    residual Moran p-values below ``alpha`` with ``#``. Failed fits trail the
    ranking with empty statistics.
    """
    fits = list(fits)
    ok = [f for f in fits if isinstance(f, SpatialFit)]
    failed = [f for f in fits if isinstance(f, FailedFit)]
    if not ok and not failed:
        raise SpatialError("no fits to compare")
    for f in ok[1:]:
        if f.observed.shape != ok[0].observed.shape or not np.array_equal(f.observed, ok[0].observed):
            raise SpatialError("fits were computed on different outcome vectors")
    ranked = sorted(ok, key=lambda f: f.aicc)
    rows = []
    for rank, f in enumerate(ranked):
        rows.append({
            "indicator": f.label, "model": f.model, "r2_adj": f.r2_global_adjusted,
            "aicc": f.aicc, "moran_i": f.moran_i, "moran_p": f.moran_p,
            "best": "*" if rank == 0 else "",
            "spatial_dependence": "#" if (not math.isnan(f.moran_p) and f.moran_p < alpha) else "",
        })
    for f in failed:
        rows.append({"indicator": f.label, "model": f.model, "r2_adj": float("nan"),
                     "aicc": float("nan"), "moran_i": float("nan"), "moran_p": float("nan"),
                     "best": "", "spatial_dependence": ""})
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)
