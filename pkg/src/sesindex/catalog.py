"""Dimension/variable schema driving aggregation and the index pipeline.

The catalog is plain data. A bundled default ships with the package and any
other census edition can be described by a YAML file with the same schema
(see ``data/catalog.yaml`` for the annotated format).
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Iterator

import yaml

from .errors import CatalogError

KINDS = ("percentage", "weighted_mean", "ice_ratio")
POLARITIES = ("favorable", "unfavorable", "neutral")

_CATALOG_KEYS = {"dimensions"}
_DIMENSION_KEYS = {"name", "label", "segregation", "variables"}
_VARIABLE_KEYS = {"name", "kind", "description", "polarity_hint"}


@dataclass(frozen=True)
class VariableDef:
    name: str
    dimension: str
    kind: str
    description: str = ""
    polarity_hint: str = "neutral"


@dataclass(frozen=True)
class Dimension:
    name: str
    variables: tuple[VariableDef, ...]
    label: str = ""
    segregation: bool = False

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]


@dataclass(frozen=True)
class VariableCatalog:
    """Ordered dimensions, each holding an ordered tuple of variables."""

    dimensions: tuple[Dimension, ...]

    def __iter__(self) -> Iterator[VariableDef]:
        for dim in self.dimensions:
            yield from dim.variables

    def __len__(self) -> int:
        return sum(len(d.variables) for d in self.dimensions)

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self]

    @property
    def dimension_names(self) -> list[str]:
        return [d.name for d in self.dimensions]

    def dimension(self, name: str) -> Dimension:
        for dim in self.dimensions:
            if dim.name == name:
                return dim
        raise KeyError(name)

    def variable(self, name: str) -> VariableDef:
        for var in self:
            if var.name == name:
                return var
        raise KeyError(name)

    def position(self, name: str) -> int:
        """Catalog-order position of a variable; the global tie-break key."""
        return self.variable_names.index(name)

    def to_dict(self) -> dict:
        dims = []
        for dim in self.dimensions:
            entry: dict = {"name": dim.name}
            if dim.label:
                entry["label"] = dim.label
            if dim.segregation:
                entry["segregation"] = True
            entry["variables"] = [
                {
                    "name": v.name,
                    "kind": v.kind,
                    "description": v.description,
                    "polarity_hint": v.polarity_hint,
                }
                for v in dim.variables
            ]
            dims.append(entry)
        return {"dimensions": dims}

    def dumps(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False, allow_unicode=True, width=120)

    def sha256(self) -> str:
        return hashlib.sha256(self.dumps().encode("utf-8")).hexdigest()


def _check_keys(obj: dict, allowed: set[str], where: str) -> None:
    unknown = set(obj) - allowed
    if unknown:
        raise CatalogError(f"{where}: unknown field(s) {sorted(unknown)}")


def catalog_from_dict(doc: dict) -> VariableCatalog:
    if not isinstance(doc, dict):
        raise CatalogError("catalog document must be a mapping")
    _check_keys(doc, _CATALOG_KEYS, "catalog")
    raw_dims = doc.get("dimensions")
    if not raw_dims:
        raise CatalogError("catalog has no dimensions")

    seen_vars: set[str] = set()
    seen_dims: set[str] = set()
    dims = []
    for raw in raw_dims:
        if not isinstance(raw, dict) or "name" not in raw:
            raise CatalogError("every dimension needs a name")
        _check_keys(raw, _DIMENSION_KEYS, f"dimension {raw['name']!r}")
        dname = str(raw["name"])
        if dname in seen_dims:
            raise CatalogError(f"duplicate dimension name {dname!r}")
        seen_dims.add(dname)
        segregation = bool(raw.get("segregation", False))
        raw_vars = raw.get("variables") or []
        if not raw_vars:
            raise CatalogError(f"dimension {dname!r} is empty")

        variables = []
        for rv in raw_vars:
            if not isinstance(rv, dict) or "name" not in rv:
                raise CatalogError(f"dimension {dname!r}: every variable needs a name")
            _check_keys(rv, _VARIABLE_KEYS, f"variable {rv['name']!r}")
            vname = str(rv["name"])
            if vname in seen_vars:
                raise CatalogError(f"duplicate variable name {vname!r}")
            seen_vars.add(vname)
            kind = rv.get("kind", "percentage")
            if kind not in KINDS:
                raise CatalogError(f"variable {vname!r}: unknown kind {kind!r}")
            if kind == "ice_ratio" and not segregation:
                raise CatalogError(
                    f"variable {vname!r}: ice_ratio only allowed in a segregation dimension"
                )
            polarity = rv.get("polarity_hint", "neutral")
            if polarity not in POLARITIES:
                raise CatalogError(f"variable {vname!r}: unknown polarity_hint {polarity!r}")
            variables.append(
                VariableDef(vname, dname, kind, str(rv.get("description", "")), polarity)
            )
        dims.append(Dimension(dname, tuple(variables), str(raw.get("label", "")), segregation))
    return VariableCatalog(tuple(dims))


def load_catalog(source: str | Path | None = None) -> VariableCatalog:
    """Load a catalog from a YAML path or YAML text; ``None`` gives the bundled default."""
    if source is None:
        text = resources.files("sesindex").joinpath("data/catalog.yaml").read_text("utf-8")
    elif isinstance(source, Path) or (isinstance(source, str) and "\n" not in source):
        path = Path(source)
        if not path.exists():
            raise CatalogError(f"catalog file not found: {path}")
        text = path.read_text("utf-8")
    else:
        text = source
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise CatalogError(f"catalog does not parse: {exc}") from exc
    return catalog_from_dict(doc)


def default_catalog() -> VariableCatalog:
    return load_catalog(None)
