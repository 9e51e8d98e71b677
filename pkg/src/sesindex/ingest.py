"""Aggregation of weighted person/household records into per-unit variables.

Records are held as a :class:`pandas.DataFrame` with a ``unit_id`` column, a
``weight`` column and one column per attribute; an iterable of
:class:`MicroRecord` is accepted anywhere a frame is. Per-unit sums use
compensated summation, so the result does not depend on record order.

Which records count for a variable is described by a *recipe* (YAML), a
mapping from catalog variable names to conditions on record attributes.
Condition syntax::

    {attr: NAME, eq: V}        also ne, gt, ge, lt, le, in: [V, ...], notnull: true
    {all: [C, ...]}            conjunction
    {any: [C, ...]}            disjunction
    {not: C}                   negation

A comparison value may be ``{threshold: NAME, cut: lower|upper}``, which
refers to a region-wide cut point from the recipe's ``thresholds`` section.
A record whose attribute is missing never satisfies a comparison.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Iterable, Mapping

import numpy as np
import pandas as pd
import yaml

from .catalog import VariableCatalog
from .errors import ConfigError, IngestError, SesIndexWarning
from .export import format_number

MISSING_POLICIES = ("drop_unit", "impute_region_mean")
_COMPARATORS = ("eq", "ne", "gt", "ge", "lt", "le", "in")


@dataclass(frozen=True)
class MicroRecord:
    unit_id: str
    weight: float
    attributes: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if not str(self.unit_id):
            raise IngestError("record with empty unit_id")
        if not self.weight > 0:
            raise IngestError(f"record in unit {self.unit_id!r} has non-positive weight {self.weight}")


def records_frame(records) -> pd.DataFrame:
    """Coerce records (frame or iterable of MicroRecord) to a validated frame."""
    if isinstance(records, pd.DataFrame):
        frame = records
    else:
        rows = []
        for rec in records:
            row = dict(rec.attributes)
            row["unit_id"] = rec.unit_id
            row["weight"] = rec.weight
            rows.append(row)
        frame = pd.DataFrame(rows)
        if frame.empty:
            frame = pd.DataFrame({"unit_id": pd.Series([], dtype=str), "weight": pd.Series([], dtype=float)})
    for col in ("unit_id", "weight"):
        if col not in frame.columns:
            raise IngestError(f"records lack a {col!r} column")
    units = frame["unit_id"].astype(str)
    if (units == "").any():
        raise IngestError("record with empty unit_id")
    weights = pd.to_numeric(frame["weight"], errors="coerce").to_numpy(dtype=float)
    bad = ~(weights > 0)
    if bad.any():
        raise IngestError(f"{int(bad.sum())} record(s) with missing or non-positive weight")
    return frame.assign(unit_id=units, weight=weights)


def read_records(path, delimiter: str = ",", unit_column: str = "unit_id",
                 weight_column: str = "weight") -> pd.DataFrame:
    """Read one record universe from delimited text with a header row.

    Empty cells are missing. A column whose non-empty cells all parse as
    numbers becomes numeric; anything else stays text.
    """
    path = Path(path)
    if not path.exists():
        raise IngestError(f"record file not found: {path}")
    raw = pd.read_csv(path, sep=delimiter, dtype=str, keep_default_na=False)
    for col in (unit_column, weight_column):
        if col not in raw.columns:
            raise IngestError(f"{path}: missing required column {col!r}")
    out = {}
    for col in raw.columns:
        text = raw[col].str.strip()
        empty = text == ""
        if col == unit_column:
            out["unit_id"] = text
            continue
        numeric = pd.to_numeric(text.where(~empty), errors="coerce")
        if numeric.isna().sum() == empty.sum():
            out["weight" if col == weight_column else col] = numeric.astype(float)
        else:
            out[col] = text.where(~empty, None)
    return records_frame(pd.DataFrame(out))


# --- conditions -------------------------------------------------------------


class Condition:
    """Parsed boolean condition on record attributes."""

    def __init__(self, rule: Mapping):
        if not isinstance(rule, Mapping):
            raise ConfigError(f"condition must be a mapping, got {rule!r}")
        self.rule = dict(rule)
        keys = set(self.rule)
        if keys == {"all"} or keys == {"any"}:
            op = next(iter(keys))
            parts = self.rule[op]
            if not isinstance(parts, list) or not parts:
                raise ConfigError(f"{op!r} needs a non-empty list")
            self.op = op
            self.children = [Condition(p) for p in parts]
        elif keys == {"not"}:
            self.op = "not"
            self.children = [Condition(self.rule["not"])]
        elif "attr" in keys:
            rest = keys - {"attr"}
            if len(rest) != 1 or not rest <= set(_COMPARATORS) | {"notnull"}:
                raise ConfigError(f"condition on {self.rule['attr']!r} needs exactly one comparator")
            self.op = rest.pop()
            self.attr = str(self.rule["attr"])
            self.value = self.rule[self.op]
            self.children = []
        else:
            raise ConfigError(f"unrecognized condition {self.rule!r}")

    def attributes(self) -> list[str]:
        if self.children:
            seen: list[str] = []
            for child in self.children:
                for name in child.attributes():
                    if name not in seen:
                        seen.append(name)
            return seen
        return [self.attr]

    def thresholds(self) -> set[str]:
        if self.children:
            return set().union(*(c.thresholds() for c in self.children))
        if isinstance(self.value, Mapping) and "threshold" in self.value:
            return {str(self.value["threshold"])}
        return set()

    def _resolve(self, value, cuts: Mapping[str, tuple[float, float]]):
        if isinstance(value, Mapping):
            name = value.get("threshold")
            if name not in cuts:
                raise ConfigError(f"unknown threshold {name!r}")
            cut = value.get("cut")
            if cut not in ("lower", "upper"):
                raise ConfigError(f"threshold cut must be 'lower' or 'upper', got {cut!r}")
            return cuts[name][0 if cut == "lower" else 1]
        return value

    def mask(self, frame: pd.DataFrame, cuts: Mapping[str, tuple[float, float]] | None = None) -> np.ndarray:
        cuts = cuts or {}
        n = len(frame)
        if self.op == "all":
            out = np.ones(n, dtype=bool)
            for child in self.children:
                out &= child.mask(frame, cuts)
            return out
        if self.op == "any":
            out = np.zeros(n, dtype=bool)
            for child in self.children:
                out |= child.mask(frame, cuts)
            return out
        if self.op == "not":
            # negation stays false on missing attributes
            present = np.ones(n, dtype=bool)
            for name in self.attributes():
                present &= _present(frame, name)
            return present & ~self.children[0].mask(frame, cuts)

        if self.attr not in frame.columns:
            return np.zeros(n, dtype=bool)
        col = frame[self.attr]
        present = col.notna().to_numpy()
        if self.op == "notnull":
            return present if self.value else ~present
        value = self._resolve(self.value, cuts)
        if self.op == "in":
            hit = col.isin(list(value)).to_numpy()
        elif self.op in ("eq", "ne"):
            hit = (col == value).to_numpy(dtype=bool)
            if self.op == "ne":
                hit = ~hit
        else:
            numeric = pd.to_numeric(col, errors="coerce").to_numpy(dtype=float)
            with np.errstate(invalid="ignore"):
                hit = {
                    "gt": numeric > value,
                    "ge": numeric >= value,
                    "lt": numeric < value,
                    "le": numeric <= value,
                }[self.op]
        return present & np.asarray(hit, dtype=bool)


def _present(frame: pd.DataFrame, name: str) -> np.ndarray:
    if name not in frame.columns:
        return np.zeros(len(frame), dtype=bool)
    return frame[name].notna().to_numpy()


def as_condition(cond) -> Condition:
    return cond if isinstance(cond, Condition) else Condition(cond)


def respondents(cond: Condition) -> Condition:
    """Records answering every attribute the condition reads."""
    return Condition({"all": [{"attr": a, "notnull": True} for a in cond.attributes()]})


# --- per-unit reductions ----------------------------------------------------


def _unit_sums(units: np.ndarray, values: np.ndarray, order: list[str]) -> np.ndarray:
    """Compensated per-unit sums, aligned to ``order``."""
    position = {u: i for i, u in enumerate(order)}
    buckets: list[list[float]] = [[] for _ in order]
    for unit, value in zip(units, values):
        if value != 0.0:
            buckets[position[unit]].append(value)
    return np.array([math.fsum(b) for b in buckets], dtype=float)


def _units(frame: pd.DataFrame) -> list[str]:
    return sorted(frame["unit_id"].unique().tolist())


def aggregate_percentage(records, predicate, denominator=None) -> pd.Series:
    """Weighted percentage of denominator-matching records that match ``predicate``.

    ``denominator`` defaults to respondents of every attribute the predicate
    reads. Units with zero denominator weight come back as NaN.
    """
    frame = records_frame(records)
    return _percentage(frame, as_condition(predicate), denominator, {})[0]


def _percentage(frame, predicate: Condition, denominator, cuts):
    denom = respondents(predicate) if denominator is None else as_condition(denominator)
    order = _units(frame)
    units = frame["unit_id"].to_numpy()
    w = frame["weight"].to_numpy(dtype=float)
    in_denom = denom.mask(frame, cuts)
    hit = in_denom & predicate.mask(frame, cuts)
    den = _unit_sums(units, np.where(in_denom, w, 0.0), order)
    num = _unit_sums(units, np.where(hit, w, 0.0), order)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(den > 0, 100.0 * (num / den), np.nan)
    return pd.Series(value, index=order, dtype=float), pd.Series(den, index=order)


def aggregate_weighted_mean(records, attribute: str) -> pd.Series:
    """Per-unit weighted mean of a numeric attribute over non-missing records."""
    frame = records_frame(records)
    return _weighted_mean(frame, attribute)[0]


def _weighted_mean(frame, attribute: str):
    order = _units(frame)
    if attribute not in frame.columns:
        raise IngestError(f"records have no attribute {attribute!r}")
    units = frame["unit_id"].to_numpy()
    w = frame["weight"].to_numpy(dtype=float)
    x = pd.to_numeric(frame[attribute], errors="coerce").to_numpy(dtype=float)
    ok = ~np.isnan(x)
    den = _unit_sums(units, np.where(ok, w, 0.0), order)
    num = _unit_sums(units, np.where(ok, w * np.where(ok, x, 0.0), 0.0), order)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(den > 0, num / den, np.nan)
    return pd.Series(value, index=order, dtype=float), pd.Series(den, index=order)


def compute_ice(records, top, bottom, universe) -> pd.Series:
    """Index of concentration at the extremes, (top - bottom) / universe, weighted."""
    frame = records_frame(records)
    return _ice(frame, as_condition(top), as_condition(bottom), as_condition(universe), {})[0]


def _ice(frame, top: Condition, bottom: Condition, universe: Condition, cuts):
    order = _units(frame)
    units = frame["unit_id"].to_numpy()
    w = frame["weight"].to_numpy(dtype=float)
    in_u = universe.mask(frame, cuts)
    t = in_u & top.mask(frame, cuts)
    b = in_u & bottom.mask(frame, cuts)
    if (t & b).any():
        raise ConfigError("ICE top and bottom conditions overlap")
    den = _unit_sums(units, np.where(in_u, w, 0.0), order)
    # a single fsum over +w and -w keeps the difference exact
    diff = _unit_sums(units, np.where(t, w, 0.0) - np.where(b, w, 0.0), order)
    with np.errstate(invalid="ignore", divide="ignore"):
        value = np.where(den > 0, diff / den, np.nan)
    return pd.Series(value, index=order, dtype=float), pd.Series(den, index=order)


def weighted_quantile(values, weights, q):
    """Weighted quantile matching numpy's ``linear`` method under integer weights.

    A record of weight ``w`` is treated as ``w`` copies of its value: the
    target position is ``q * (W - 1)`` on the expanded sorted sample of total
    weight ``W``, and the answer interpolates linearly between the values
    occupying the two bracketing positions. With integer weights this is
    exactly ``np.quantile(np.repeat(values, weights), q)``.
    """
    x = np.asarray(values, dtype=float)
    w = np.asarray(weights, dtype=float)
    if x.size == 0:
        raise IngestError("weighted quantile of empty data")
    order = np.argsort(x, kind="stable")
    x, w = x[order], w[order]
    cum = np.cumsum(w)
    total = cum[-1]

    def at(pos):
        # value occupying expanded position pos (0-based)
        i = int(np.searchsorted(cum, pos, side="right"))
        return x[min(i, x.size - 1)]

    qs = np.atleast_1d(np.asarray(q, dtype=float))
    out = []
    for qq in qs:
        h = qq * max(total - 1.0, 0.0)
        lo = math.floor(h)
        frac = h - lo
        a = at(lo)
        out.append(a if frac == 0 else a + frac * (at(lo + 1) - a))
    return out[0] if np.ndim(q) == 0 else np.array(out)


def derive_ice_thresholds(records, attribute: str, lower_pct: float = 20,
                          upper_pct: float = 80) -> tuple[float, float]:
    """Region-wide weighted percentile cut points of a numeric attribute."""
    frame = records_frame(records)
    if attribute not in frame.columns:
        raise IngestError(f"records have no attribute {attribute!r}")
    x = pd.to_numeric(frame[attribute], errors="coerce").to_numpy(dtype=float)
    ok = ~np.isnan(x)
    if not ok.any():
        raise IngestError(f"attribute {attribute!r} has no values")
    lo, hi = weighted_quantile(x[ok], frame["weight"].to_numpy(dtype=float)[ok],
                               [lower_pct / 100.0, upper_pct / 100.0])
    if lo == hi:
        warnings.warn(f"degenerate distribution of {attribute!r}: both cuts equal {lo}",
                      SesIndexWarning, stacklevel=2)
    return float(lo), float(hi)


# --- recipes ----------------------------------------------------------------


_RECIPE_KEYS = {
    "percentage": {"universe", "predicate", "denominator"},
    "weighted_mean": {"universe", "attribute"},
    "ice_ratio": {"universe", "top", "bottom", "respondents"},
}


@dataclass
class Recipe:
    """How each catalog variable is computed from record attributes."""

    variables: dict[str, dict]
    thresholds: dict[str, dict]

    @classmethod
    def from_dict(cls, doc: Mapping) -> "Recipe":
        unknown = set(doc) - {"variables", "thresholds"}
        if unknown:
            raise ConfigError(f"recipe: unknown field(s) {sorted(unknown)}")
        thresholds = {}
        for name, rule in (doc.get("thresholds") or {}).items():
            extra = set(rule) - {"universe", "attribute", "lower_pct", "upper_pct", "fixed"}
            if extra:
                raise ConfigError(f"threshold {name!r}: unknown field(s) {sorted(extra)}")
            thresholds[name] = dict(rule)
        return cls(dict(doc.get("variables") or {}), thresholds)

    def check(self, catalog: VariableCatalog) -> None:
        for var in catalog:
            rule = self.variables.get(var.name)
            if rule is None:
                raise ConfigError(f"recipe has no entry for {var.name!r}")
            allowed = _RECIPE_KEYS[var.kind]
            extra = set(rule) - allowed
            if extra:
                raise ConfigError(f"recipe {var.name!r} ({var.kind}): unexpected field(s) {sorted(extra)}")
            need = allowed - {"denominator", "respondents"}
            if not need <= set(rule):
                raise ConfigError(f"recipe {var.name!r}: missing field(s) {sorted(need - set(rule))}")
            for key in ("predicate", "denominator", "top", "bottom", "respondents"):
                if key in rule:
                    for t in Condition(rule[key]).thresholds():
                        if t not in self.thresholds:
                            raise ConfigError(f"recipe {var.name!r} uses undefined threshold {t!r}")


def load_recipe(source=None) -> Recipe:
    if source is None:
        text = resources.files("sesindex").joinpath("data/recipe.yaml").read_text("utf-8")
    else:
        path = Path(source)
        if not path.exists():
            raise ConfigError(f"recipe file not found: {path}")
        text = path.read_text("utf-8")
    return Recipe.from_dict(yaml.safe_load(text))


# --- area table -------------------------------------------------------------


@dataclass
class AreaTable:
    """Per-unit variable values, aligned to ``unit_ids``."""

    unit_ids: list[str]
    coordinates: np.ndarray
    columns: dict[str, np.ndarray]
    population: dict[str, np.ndarray] = field(default_factory=dict)
    audit: list[str] = field(default_factory=list)

    def __post_init__(self):
        n = len(self.unit_ids)
        self.coordinates = np.asarray(self.coordinates, dtype=float).reshape(n, 2)
        self.columns = {k: np.asarray(v, dtype=float) for k, v in self.columns.items()}
        for name, col in self.columns.items():
            if col.shape != (n,):
                raise IngestError(f"column {name!r} has length {col.size}, expected {n}")
        if len(set(self.unit_ids)) != n:
            raise IngestError("duplicate unit ids in area table")

    @property
    def n_units(self) -> int:
        return len(self.unit_ids)

    @property
    def names(self) -> list[str]:
        return list(self.columns)

    def matrix(self, names=None) -> np.ndarray:
        names = self.names if names is None else list(names)
        return np.column_stack([self.columns[n] for n in names]) if names else np.empty((self.n_units, 0))

    def with_columns(self, columns: Mapping[str, np.ndarray]) -> "AreaTable":
        return AreaTable(list(self.unit_ids), self.coordinates.copy(), dict(columns),
                         dict(self.population), list(self.audit))

    def check(self, catalog: VariableCatalog) -> None:
        """Raise if any catalog column is absent, non-finite or out of its kind's range."""
        for var in catalog:
            if var.name not in self.columns:
                raise IngestError(f"area table lacks column {var.name!r}")
            col = self.columns[var.name]
            if not np.all(np.isfinite(col)):
                raise IngestError(f"column {var.name!r} has missing values")
            if var.kind == "percentage" and (col.min() < 0 or col.max() > 100):
                raise IngestError(f"percentage column {var.name!r} outside [0, 100]")
            if var.kind == "ice_ratio" and (col.min() < -1 or col.max() > 1):
                raise IngestError(f"ICE column {var.name!r} outside [-1, 1]")

    def to_frame(self) -> pd.DataFrame:
        frame = pd.DataFrame({"unit_id": self.unit_ids,
                              "x": self.coordinates[:, 0], "y": self.coordinates[:, 1]})
        for name, col in self.columns.items():
            frame[name] = col
        return frame

    def to_csv(self, path, delimiter: str = ",") -> None:
        header = ["unit_id", "x", "y", *self.columns]
        lines = [delimiter.join(header)]
        for i, uid in enumerate(self.unit_ids):
            cells = [uid, format_number(self.coordinates[i, 0]), format_number(self.coordinates[i, 1])]
            cells += [format_number(col[i]) for col in self.columns.values()]
            lines.append(delimiter.join(cells))
        Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path, catalog: VariableCatalog | None = None, coordinates=None,
                 delimiter: str = ",") -> "AreaTable":
        """Read an exported table; coordinates come from x/y columns or ``coordinates``."""
        path = Path(path)
        if not path.exists():
            raise IngestError(f"area table not found: {path}")
        frame = pd.read_csv(path, sep=delimiter, dtype={"unit_id": str})
        if "unit_id" not in frame.columns:
            raise IngestError(f"{path}: missing 'unit_id' column")
        ids = frame["unit_id"].astype(str).tolist()
        names = catalog.variable_names if catalog is not None else [
            c for c in frame.columns if c not in ("unit_id", "x", "y")]
        missing = [n for n in names if n not in frame.columns]
        if missing:
            raise IngestError(f"{path}: missing variable column(s) {missing}")
        if coordinates is not None:
            coords = _align_coordinates(ids, coordinates)
        elif {"x", "y"} <= set(frame.columns):
            coords = frame[["x", "y"]].to_numpy(dtype=float)
        else:
            raise IngestError(f"{path}: no coordinates (x/y columns or coordinates file)")
        cols = {n: frame[n].to_numpy(dtype=float) for n in names}
        table = cls(ids, coords, cols)
        if catalog is not None:
            table.check(catalog)
        return table


def read_coordinates(path, delimiter: str = ",") -> dict[str, tuple[float, float]]:
    path = Path(path)
    if not path.exists():
        raise IngestError(f"coordinates file not found: {path}")
    frame = pd.read_csv(path, sep=delimiter, dtype={"unit_id": str})
    for col in ("unit_id", "x", "y"):
        if col not in frame.columns:
            raise IngestError(f"{path}: missing column {col!r}")
    return {str(u): (float(x), float(y)) for u, x, y in zip(frame["unit_id"], frame["x"], frame["y"])}


def _align_coordinates(unit_ids, coordinates: Mapping[str, tuple[float, float]]) -> np.ndarray:
    missing = [u for u in unit_ids if u not in coordinates]
    if missing:
        raise IngestError(f"units without coordinates: {', '.join(missing)}")
    return np.array([coordinates[u] for u in unit_ids], dtype=float)


def resolve_thresholds(recipe: Recipe, universes: Mapping[str, pd.DataFrame]) -> dict[str, tuple[float, float]]:
    cuts = {}
    for name, rule in recipe.thresholds.items():
        if "fixed" in rule:
            lo, hi = rule["fixed"]
            cuts[name] = (float(lo), float(hi))
            continue
        frame = universes.get(rule.get("universe", "persons"))
        if frame is None:
            raise ConfigError(f"threshold {name!r}: universe {rule.get('universe')!r} not supplied")
        cuts[name] = derive_ice_thresholds(frame, rule["attribute"],
                                           rule.get("lower_pct", 20), rule.get("upper_pct", 80))
    return cuts


def build_area_table(records: Mapping[str, Any], catalog: VariableCatalog,
                     coordinates: Mapping[str, tuple[float, float]],
                     recipe: Recipe | None = None,
                     missing_policy: str = "drop_unit") -> AreaTable:
    """Aggregate every catalog variable into an :class:`AreaTable`.

    ``records`` maps a universe name (e.g. ``persons``, ``households``) to
    that universe's records. Units with an empty denominator for some
    variable are dropped or imputed with the mean over the other units,
    depending on ``missing_policy``; each event is recorded in ``audit``.
    """
    if missing_policy not in MISSING_POLICIES:
        raise ConfigError(f"unknown missing policy {missing_policy!r}")
    recipe = recipe or load_recipe()
    recipe.check(catalog)
    universes = {k: records_frame(v) for k, v in records.items()}
    all_units = sorted(set().union(*(set(f["unit_id"]) for f in universes.values())))
    missing = [u for u in all_units if u not in coordinates]
    if missing:
        raise IngestError(f"units without coordinates: {', '.join(missing)}")
    cuts = resolve_thresholds(recipe, universes)

    values, population = {}, {}
    for var in catalog:
        rule = recipe.variables[var.name]
        frame = universes.get(rule["universe"])
        if frame is None:
            raise ConfigError(f"{var.name}: universe {rule['universe']!r} not supplied")
        if var.kind == "percentage":
            val, den = _percentage(frame, Condition(rule["predicate"]), rule.get("denominator"), cuts)
        elif var.kind == "weighted_mean":
            val, den = _weighted_mean(frame, rule["attribute"])
        else:
            top, bottom = Condition(rule["top"]), Condition(rule["bottom"])
            universe = (Condition(rule["respondents"]) if "respondents" in rule else
                        respondents(Condition({"all": [top.rule, bottom.rule]})))
            val, den = _ice(frame, top, bottom, universe, cuts)
        values[var.name] = val.reindex(all_units)
        population[var.name] = den.reindex(all_units).fillna(0.0)

    data = pd.DataFrame(values, index=all_units)
    audit: list[str] = []
    if missing_policy == "drop_unit":
        keep = []
        for unit in all_units:
            gaps = [n for n in catalog.variable_names if np.isnan(data.at[unit, n])]
            if gaps:
                audit.append(f"drop_unit: {unit} has no respondents for {', '.join(gaps)}")
            else:
                keep.append(unit)
        if not keep:
            raise IngestError("every unit was dropped for missing data")
    else:
        keep = all_units
        for name in catalog.variable_names:
            col = data[name]
            if col.isna().all():
                raise IngestError(f"variable {name!r} has no respondents in any unit")
            if col.isna().any():
                fill = math.fsum(col.dropna()) / col.notna().sum()
                for unit in col.index[col.isna()]:
                    audit.append(f"impute_region_mean: {unit} {name} := {fill!r}")
                data[name] = col.fillna(fill)
    if audit:
        for line in audit:
            warnings.warn(line, SesIndexWarning, stacklevel=2)

    table = AreaTable(
        keep,
        _align_coordinates(keep, coordinates),
        {n: data.loc[keep, n].to_numpy(dtype=float) for n in catalog.variable_names},
        {n: population[n].loc[keep].to_numpy(dtype=float) for n in catalog.variable_names},
        audit,
    )
    table.check(catalog)
    return table
