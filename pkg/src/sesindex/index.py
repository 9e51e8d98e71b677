"""Composite index construction by successive PCA.

The pipeline:

1. shift every value by a constant (keeps zeros away from numerical trouble;
   correlations are unaffected);
2. per dimension, PCA keeping enough components to explain ``variance_threshold``
   of the variance, and take the top-|loading| variable of each kept component;
3. PCA over the stage-1 picks, keep variables whose |loading| on the first
   component is strictly above the mean |loading|;
4. PCA over the survivors; the first component, oriented to correlate
   positively with an income variable, is the index;
5. min-max map the scores to [-1, +1].

Each dimension with a surviving variable is then represented by the variable
most correlated with the index.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, asdict
from typing import Mapping

import numpy as np
import pandas as pd

from .catalog import VariableCatalog
from .errors import IndexBuildError, PcaError, SesIndexWarning
from .ingest import AreaTable
from .pca import PcaResult, TIE_TOL, correlation, pca, select_components

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class PipelineConfig:
    shift_constant: float = 10.0
    variance_threshold: float = 0.75
    orientation_variable: str | None = None

    def __post_init__(self):
        if not 0 < self.variance_threshold <= 1:
            raise IndexBuildError(f"variance_threshold must be in (0, 1], got {self.variance_threshold}")

    def resolve_orientation(self, catalog: VariableCatalog) -> str:
        """Named orientation variable, or the income dimension's weighted-mean variable."""
        if self.orientation_variable is not None:
            try:
                catalog.variable(self.orientation_variable)
            except KeyError:
                raise IndexBuildError(
                    f"orientation variable {self.orientation_variable!r} not in catalog") from None
            return self.orientation_variable
        try:
            income = catalog.dimension("income")
        except KeyError:
            raise IndexBuildError("no 'income' dimension; set orientation_variable") from None
        for var in income.variables:
            if var.kind == "weighted_mean":
                return var.name
        raise IndexBuildError("income dimension has no weighted_mean variable; set orientation_variable")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class FinalComponent:
    variables: list[str]
    raw_scores: np.ndarray
    loadings: dict[str, float]
    pca: PcaResult
    flipped: bool


@dataclass
class IndexResult:
    unit_ids: list[str]
    scores: np.ndarray
    raw_first_component: np.ndarray
    stage1_selected: dict[str, list[str]]
    stage2_selected: list[str]
    final_loadings: dict[str, float]
    dimension_representatives: dict[str, tuple[str, float]]
    dimension_scores: dict[str, np.ndarray]
    dimension_raw: dict[str, np.ndarray]
    inactive_dimensions: list[str]
    cronbach_alpha: float
    orientation_variable: str
    config: PipelineConfig
    diagnostics: dict[str, PcaResult] = field(default_factory=dict)
    excluded_constant: list[str] = field(default_factory=list)
    notes: list[str] = field(default_factory=list)

    @property
    def active_dimensions(self) -> list[str]:
        return list(self.dimension_representatives)

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"unit_id": self.unit_ids, "geoses": self.scores})
        for dim in self.active_dimensions:
            frame[dim] = self.dimension_scores[dim]
        for dim in self.active_dimensions:
            frame[f"{dim}_raw"] = self.dimension_raw[dim]
        return frame


def preprocess(table: AreaTable, config: PipelineConfig) -> AreaTable:
    """Copy of ``table`` with ``shift_constant`` added to every cell."""
    shifted = {k: v + config.shift_constant for k, v in table.columns.items()}
    out = table.with_columns(shifted)
    out.audit.append(f"shift: +{config.shift_constant!r} on every cell")
    return out


def _warn(message: str, notes: list[str] | None = None) -> None:
    if notes is not None:
        notes.append(message)
    warnings.warn(message, SesIndexWarning, stacklevel=3)


def top_loading_variable(loadings: np.ndarray, names) -> str:
    """Variable with the largest |loading|; near-ties resolve to the earliest name."""
    mags = np.abs(loadings)
    return names[int(np.nonzero(mags >= mags.max() - TIE_TOL)[0][0])]


def stage1_dimension_selection(table: AreaTable, catalog: VariableCatalog, config: PipelineConfig,
                               diagnostics: dict | None = None,
                               notes: list[str] | None = None) -> dict[str, list[str]]:
    selected: dict[str, list[str]] = {}
    for dim in catalog.dimensions:
        present = [n for n in dim.variable_names if n in table.columns]
        usable = [n for n in present if np.ptp(table.columns[n]) > 0]
        dropped = [n for n in present if n not in usable]
        if dropped:
            _warn(f"dimension {dim.name!r}: constant variable(s) excluded: {', '.join(dropped)}", notes)
        if not usable:
            raise IndexBuildError(f"dimension {dim.name!r} has no non-constant variable")
        try:
            res = pca(table.matrix(usable), usable)
        except PcaError as exc:
            raise IndexBuildError(f"dimension {dim.name!r}: {exc}") from exc
        m = select_components(res, config.variance_threshold)
        picks = {top_loading_variable(res.loadings[:, j], usable) for j in range(m)}
        selected[dim.name] = [n for n in usable if n in picks]
        if diagnostics is not None:
            diagnostics[f"stage1:{dim.name}"] = res
        log.debug("stage1 %s: m=%d picks=%s", dim.name, m, selected[dim.name])
    return selected


def above_mean(magnitudes, notes: list[str] | None = None) -> np.ndarray:
    """Mask of entries strictly above the mean; all-True fallback when none are."""
    mags = np.abs(np.asarray(magnitudes, dtype=float))
    keep = mags > mags.mean()
    if not keep.any():
        _warn("no loading strictly above the mean magnitude; keeping every variable", notes)
        keep = np.ones_like(keep)
    return keep


def stage2_above_mean_selection(table: AreaTable, variables, diagnostics: dict | None = None,
                                notes: list[str] | None = None) -> list[str]:
    variables = list(variables)
    if len(variables) < 2:
        raise IndexBuildError(f"stage 2 needs at least 2 variables, got {len(variables)}")
    try:
        res = pca(table.matrix(variables), variables)
    except PcaError as exc:
        raise IndexBuildError(f"stage 2: {exc}") from exc
    if diagnostics is not None:
        diagnostics["stage2"] = res
    keep = above_mean(res.loadings[:, 0], notes)
    return [v for v, k in zip(variables, keep) if k]


def pearson(a, b) -> float:
    a = np.asarray(a, dtype=float) - np.mean(a)
    b = np.asarray(b, dtype=float) - np.mean(b)
    return float(a @ b / np.sqrt((a @ a) * (b @ b)))


def stage3_final_index(table: AreaTable, variables, orientation: np.ndarray,
                       diagnostics: dict | None = None) -> FinalComponent:
    """First principal component of ``variables``, signed to correlate with ``orientation``."""
    variables = list(variables)
    if not variables:
        raise IndexBuildError("stage 3 needs at least one variable")
    try:
        res = pca(table.matrix(variables), variables)
    except PcaError as exc:
        raise IndexBuildError(f"stage 3: {exc}") from exc
    if diagnostics is not None:
        diagnostics["stage3"] = res
    raw = res.scores[:, 0].copy()
    load = res.loadings[:, 0].copy()
    if np.ptp(orientation) == 0:
        raise IndexBuildError("orientation variable is constant")
    flipped = pearson(raw, orientation) < 0
    if flipped:
        raw, load = -raw, -load
    return FinalComponent(variables, raw, dict(zip(variables, load.tolist())), res, flipped)


def standardize_scores(raw) -> np.ndarray:
    """Affine map of ``raw`` onto [-1, +1]: minimum to -1, maximum to +1."""
    x = np.asarray(raw, dtype=float)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise IndexBuildError("index scores are constant; standardization undefined")
    return 2.0 * (x - lo) / (hi - lo) - 1.0


def decompose_dimensions(scores, table: AreaTable, catalog: VariableCatalog, final_variables):
    """Representative variable and [-1, +1] sub-score for each active dimension.

    Returns ``(representatives, scaled, raw, inactive)``; ``representatives``
    maps dimension to ``(variable, correlation with the index)``.
    """
    final = set(final_variables)
    reps: dict[str, tuple[str, float]] = {}
    scaled: dict[str, np.ndarray] = {}
    raw: dict[str, np.ndarray] = {}
    inactive: list[str] = []
    for dim in catalog.dimensions:
        members = [n for n in dim.variable_names if n in final]
        if not members:
            inactive.append(dim.name)
            continue
        corrs = [pearson(table.columns[n], scores) for n in members]
        best = top_loading_variable(np.array(corrs), members)
        reps[dim.name] = (best, corrs[members.index(best)])
        raw[dim.name] = table.columns[best].copy()
        scaled[dim.name] = standardize_scores(raw[dim.name])
    return reps, scaled, raw, inactive


def alpha_from_correlation(corr) -> float:
    """Standardized Cronbach alpha k*r / (1 + (k-1)*r) from a correlation matrix."""
    c = np.asarray(corr, dtype=float)
    k = c.shape[0]
    if k < 2:
        raise IndexBuildError("Cronbach alpha needs at least 2 variables")
    mean_r = (c.sum() - np.trace(c)) / (k * (k - 1))
    return float(k * mean_r / (1.0 + (k - 1) * mean_r))


def cronbach_alpha(data, signs=None) -> float:
    """Standardized alpha of the columns of ``data``.

    ``signs`` (e.g. the final loadings) flips columns with a negative entry so
    the mean inter-item correlation measures homogeneity, not polarity.
    """
    x = np.asarray(data, dtype=float)
    if x.ndim != 2 or x.shape[1] < 2:
        raise IndexBuildError("Cronbach alpha needs at least 2 variables")
    if signs is not None:
        x = x * np.where(np.asarray(signs, dtype=float) < 0, -1.0, 1.0)
    return alpha_from_correlation(correlation(x).values)


def build_index(table: AreaTable, catalog: VariableCatalog,
                config: PipelineConfig | None = None) -> IndexResult:
    """Run the full pipeline on an area table."""
    config = config or PipelineConfig()
    orient_name = config.resolve_orientation(catalog)
    if orient_name not in table.columns:
        raise IndexBuildError(f"orientation variable {orient_name!r} missing from table")
    notes: list[str] = []
    diagnostics: dict[str, PcaResult] = {}

    shifted = preprocess(table, config)
    stage1 = stage1_dimension_selection(shifted, catalog, config, diagnostics, notes)
    pooled = [n for n in catalog.variable_names if any(n in v for v in stage1.values())]
    stage2 = stage2_above_mean_selection(shifted, pooled, diagnostics, notes)
    final = stage3_final_index(shifted, stage2, shifted.columns[orient_name], diagnostics)
    scores = standardize_scores(final.raw_scores)
    reps, scaled, raw, inactive = decompose_dimensions(scores, table, catalog, stage2)

    if len(stage2) >= 2:
        alpha = cronbach_alpha(shifted.matrix(stage2), [final.loadings[v] for v in stage2])
    else:
        alpha = float("nan")
        _warn("single final variable; Cronbach alpha undefined", notes)

    excluded = [n for n in catalog.variable_names
                if n in table.columns and np.ptp(table.columns[n]) == 0]
    return IndexResult(
        unit_ids=list(table.unit_ids),
        scores=scores,
        raw_first_component=final.raw_scores,
        stage1_selected=stage1,
        stage2_selected=stage2,
        final_loadings=final.loadings,
        dimension_representatives=reps,
        dimension_scores=scaled,
        dimension_raw=raw,
        inactive_dimensions=inactive,
        cronbach_alpha=alpha,
        orientation_variable=orient_name,
        config=config,
        diagnostics=diagnostics,
        excluded_constant=excluded,
        notes=notes,
    )


def compare_with_reference(result: IndexResult, references: pd.DataFrame | Mapping[str, np.ndarray],
                           unit_ids=None) -> pd.DataFrame:
    """Pearson correlations among the index, dimension representatives and references.

    ``references`` is either a frame with a ``unit_id`` column or a mapping of
    arrays aligned to ``unit_ids`` (default: the result's own order).
    """
    if isinstance(references, pd.DataFrame):
        if "unit_id" not in references.columns:
            raise IndexBuildError("reference frame needs a unit_id column")
        ref = references.assign(unit_id=references["unit_id"].astype(str)).set_index("unit_id")
        ours, theirs = set(result.unit_ids), set(ref.index)
        if ours != theirs:
            raise IndexBuildError(
                "reference unit ids do not match the index: "
                f"missing {sorted(ours - theirs)}, extra {sorted(theirs - ours)}")
        ref = ref.loc[result.unit_ids]
        columns = {c: ref[c].to_numpy(dtype=float) for c in ref.columns}
    else:
        ids = list(unit_ids) if unit_ids is not None else result.unit_ids
        if ids != result.unit_ids:
            raise IndexBuildError("reference unit ids do not match the index order")
        columns = {k: np.asarray(v, dtype=float) for k, v in references.items()}
        for k, v in columns.items():
            if v.shape != (len(ids),):
                raise IndexBuildError(f"reference {k!r} has {v.size} values for {len(ids)} units")

    data = {"geoses": result.scores}
    for dim in result.active_dimensions:
        data[dim] = result.dimension_raw[dim]
    data.update(columns)
    names = list(data)
    corr = np.corrcoef(np.vstack([data[n] for n in names]))
    return pd.DataFrame(corr, index=names, columns=names)


def lower_triangle(matrix: pd.DataFrame, digits: int = 2) -> pd.DataFrame:
    """Lower-triangular display of a correlation matrix, blank above the diagonal."""
    out = matrix.copy().astype(object)
    k = len(matrix)
    for i in range(k):
        for j in range(k):
            out.iat[i, j] = "" if j > i else ("1" if i == j else f"{matrix.iat[i, j]:.{digits}f}")
    return out
