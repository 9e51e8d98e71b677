"""Seeded synthetic inputs: area tables, microdata, grid geometry, outcomes.

Every generator is driven by one latent socioeconomic field over the units;
variables load on it with the sign of their polarity hint. Mobility variables
carry no latent signal unless asked to, so they tend to drop out of the index.
"""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from .catalog import VariableCatalog, default_catalog
from .ingest import AreaTable


def grid_polygons(nx: int, ny: int, size: float = 1.0, prefix: str = "U") -> dict[str, dict]:
    """Unit squares on an ``nx`` x ``ny`` grid, row-major ids ``U001``, ``U002``..."""
    width = len(str(nx * ny))
    out = {}
    for r in range(ny):
        for c in range(nx):
            x0, y0 = c * size, r * size
            ring = [[x0, y0], [x0 + size, y0], [x0 + size, y0 + size], [x0, y0 + size], [x0, y0]]
            out[f"{prefix}{r * nx + c + 1:0{max(width, 3)}d}"] = {"type": "Polygon", "coordinates": [ring]}
    return out


def polygons_geojson(polygons: dict[str, dict], id_field: str = "unit_id") -> dict:
    return {
        "type": "FeatureCollection",
        "features": [{"type": "Feature", "properties": {id_field: uid}, "geometry": geom}
                     for uid, geom in polygons.items()],
    }


def latent_field(coords: np.ndarray, rng: np.random.Generator, smooth: float = 0.7) -> np.ndarray:
    """Standardized field: a smooth spatial trend plus independent noise."""
    c = (coords - coords.mean(axis=0)) / (coords.std(axis=0) + 1e-12)
    trend = np.sin(1.3 * c[:, 0] + rng.uniform(0, np.pi)) + np.cos(0.9 * c[:, 1] + rng.uniform(0, np.pi))
    trend = (trend - trend.mean()) / (trend.std() + 1e-12)
    f = smooth * trend + np.sqrt(1 - smooth**2) * rng.standard_normal(len(c))
    return (f - f.mean()) / f.std()


def synthetic_area_table(n_units: int = 200, seed: int = 0, catalog: VariableCatalog | None = None,
                         coordinates: np.ndarray | None = None, unit_ids=None,
                         mobility_signal: float = 0.0, signal: tuple[float, float] = (0.55, 0.95)) -> AreaTable:
    """Aggregated-looking table honouring each kind's range."""
    catalog = catalog or default_catalog()
    rng = np.random.default_rng(seed)
    if coordinates is None:
        coordinates = rng.uniform(0, 100, size=(n_units, 2))
    coordinates = np.asarray(coordinates, dtype=float)
    n = len(coordinates)
    ids = list(unit_ids) if unit_ids is not None else [f"A{i + 1:04d}" for i in range(n)]
    f = latent_field(coordinates, rng)

    columns = {}
    for dim in catalog.dimensions:
        g = rng.standard_normal(n)  # dimension-specific factor
        for var in dim.variables:
            if dim.name == "mobility":
                s = mobility_signal
            else:
                s = rng.uniform(*signal)
            sign = {"favorable": 1.0, "unfavorable": -1.0}.get(var.polarity_hint, rng.choice([-1.0, 1.0]))
            t = rng.uniform(0.0, 0.6) * np.sqrt(max(0.0, 1 - s**2))
            e = np.sqrt(max(1e-6, 1 - s**2 - t**2))
            latent = sign * s * f + t * g + e * rng.standard_normal(n)
            if var.kind == "percentage":
                col = 100.0 / (1.0 + np.exp(-(rng.uniform(-2, 2) + rng.uniform(0.6, 1.4) * latent)))
            elif var.kind == "weighted_mean":
                col = rng.uniform(500, 2000) * np.exp(0.5 * latent)
            else:
                col = np.tanh(rng.uniform(-0.5, 0.5) + 0.8 * latent)
            columns[var.name] = col
    return AreaTable(ids, coordinates, columns)


def synthetic_outcome(index_scores, coordinates, seed: int = 0, noise: float = 0.05) -> np.ndarray:
    """Relative-risk-like outcome falling with the index, slope varying in space."""
    rng = np.random.default_rng(seed)
    coords = np.asarray(coordinates, dtype=float)
    c = (coords - coords.mean(axis=0)) / (coords.std(axis=0) + 1e-12)
    slope = -0.3 - 0.1 * np.tanh(c[:, 0])
    return 1.0 + slope * np.asarray(index_scores) + noise * rng.standard_normal(len(coords))


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def synthetic_microdata(unit_ids, coordinates, persons_per_unit: int = 300,
                        households_per_unit: int = 120, seed: int = 0) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Person and household records matching the attribute names of the bundled recipe."""
    rng = np.random.default_rng(seed)
    coords = np.asarray(coordinates, dtype=float)
    f = latent_field(coords, rng) if len(coords) > 2 else np.linspace(-1, 1, len(coords))
    persons, households = [], []
    for uid, fu in zip(unit_ids, f):
        m = persons_per_unit
        instr = np.clip(np.round(2.3 + 0.8 * fu + rng.normal(0, 1.0, m)), 1, 4).astype(int)
        course = np.where(instr == 4, rng.choice(["graduation", "masters", "doctorate"], m, p=[0.8, 0.14, 0.06]),
                          "none")
        income = np.round(np.exp(7.2 + 0.6 * fu + rng.normal(0, 0.9, m)), 2)
        income = np.where(rng.random(m) < 0.05, np.nan, income)
        income_pc = np.round(np.exp(6.3 + 0.6 * fu + rng.normal(0, 0.8, m)), 2)
        race = rng.choice(["white", "black", "brown", "yellow", "indigenous"], m,
                          p=_race_probs(fu))
        worker = rng.random(m) < 0.55
        commute = np.where(worker, rng.choice([1, 2, 3, 4, 5], m, p=[0.15, 0.45, 0.25, 0.12, 0.03]), np.nan)
        work_muni = np.where(worker, np.where(rng.random(m) < 0.2, "other", "same"), None)
        returns = np.where(worker, (rng.random(m) < 0.9).astype(float), np.nan)
        persons.append(pd.DataFrame({
            "unit_id": uid,
            "weight": np.round(rng.uniform(5, 20, m), 4),
            "age": rng.integers(0, 95, m),
            "instruction": instr,
            "course": course,
            "income": income,
            "income_pc": income_pc,
            "race": race,
            "work_municipality": work_muni,
            "returns_daily": returns,
            "commute": commute,
            "bolsa": (rng.random(m) < _sigmoid(-1.5 - 1.2 * fu)).astype(int),
            "other_programs": (rng.random(m) < _sigmoid(-2.5 - 0.5 * fu)).astype(int),
        }))
        h = households_per_unit

        def has(base, slope):
            return (rng.random(h) < _sigmoid(base + slope * fu)).astype(int)

        tenure = np.where(rng.random(h) < 0.3, "rented", "owned")
        rent = np.where(tenure == "rented", np.round(np.exp(6.3 + 0.6 * fu + rng.normal(0, 0.6, h)), 2), np.nan)
        households.append(pd.DataFrame({
            "unit_id": uid,
            "weight": np.round(rng.uniform(5, 20, h), 4),
            "walls": np.where(rng.random(h) < _sigmoid(-1.5 - 0.8 * fu), "unplastered_masonry", "plastered_masonry"),
            "sewer": has(0.5, 1.0), "water": has(1.5, 0.8), "garbage": has(1.8, 0.8),
            "energy": has(3.0, 0.5), "tv": has(2.5, 0.6), "washer": has(0.0, 1.0),
            "fridge": has(2.0, 0.8), "cellphone": has(1.5, 0.6), "computer_internet": has(-0.8, 1.2),
            "motorcycle": has(-1.5, -0.2), "car": has(-0.3, 1.0), "adequate": has(0.8, 1.0),
            "tenure": tenure, "rent": rent,
            "bathrooms": rng.poisson(np.exp(0.2 + 0.4 * fu), h) + 1,
            "density": np.round(np.exp(-0.3 - 0.2 * fu + rng.normal(0, 0.3, h)), 4),
            "household_income": np.round(np.exp(7.8 + 0.6 * fu + rng.normal(0, 0.8, h)), 2),
        }))
    return pd.concat(persons, ignore_index=True), pd.concat(households, ignore_index=True)


def _race_probs(fu: float) -> list[float]:
    white = float(_sigmoid(0.4 * fu))
    rest = 1 - white
    return [white, 0.2 * rest, 0.7 * rest, 0.05 * rest, 0.05 * rest]


def _write_csv(frame: pd.DataFrame, path: Path) -> None:
    frame.to_csv(path, index=False, float_format="%.15g", lineterminator="\n")


def write_micro_fixture(outdir, n_units: int = 3, seed: int = 7) -> Path:
    """Microdata fixture: units in a row of squares, persons/households files, config."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    polys = grid_polygons(n_units, 1)
    ids = list(polys)
    coords = np.array([[i + 0.5, 0.5] for i in range(n_units)])
    persons, households = synthetic_microdata(ids, coords, seed=seed)
    _write_csv(persons, outdir / "persons.csv")
    _write_csv(households, outdir / "households.csv")
    _write_csv(pd.DataFrame({"unit_id": ids, "x": coords[:, 0], "y": coords[:, 1]}), outdir / "coordinates.csv")
    (outdir / "geometry.geojson").write_text(_json(polygons_geojson(polys)), encoding="utf-8")
    config = {
        "persons": "persons.csv",
        "households": "households.csv",
        "coordinates": "coordinates.csv",
        "geometry": "geometry.geojson",
        "scale": "intramunicipal",
        "output_dir": "out",
        "seed": seed,
    }
    (outdir / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return outdir / "config.yaml"


def write_grid_fixture(outdir, nx: int = 12, ny: int = 12, seed: int = 11,
                       mobility_signal: float = 0.0) -> Path:
    """Area-table fixture on a grid with geometry, outcome and reference columns."""
    from .index import build_index

    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    polys = grid_polygons(nx, ny)
    ids = list(polys)
    coords = np.array([[(i % nx) + 0.5, (i // nx) + 0.5] for i in range(len(ids))])
    table = synthetic_area_table(seed=seed, coordinates=coords, unit_ids=ids, mobility_signal=mobility_signal)
    table.to_csv(outdir / "area_table.csv")
    _write_csv(pd.DataFrame({"unit_id": ids, "x": coords[:, 0], "y": coords[:, 1]}), outdir / "coordinates.csv")
    (outdir / "geometry.geojson").write_text(_json(polygons_geojson(polys)), encoding="utf-8")

    result = build_index(table, default_catalog())
    outcome = synthetic_outcome(result.scores, coords, seed=seed)
    _write_csv(pd.DataFrame({"unit_id": ids, "relative_risk": outcome}), outdir / "outcome.csv")
    rng = np.random.default_rng(seed + 1)
    ref = 0.6 + 0.15 * result.scores + 0.03 * rng.standard_normal(len(ids))
    _write_csv(pd.DataFrame({"unit_id": ids, "reference_index": ref}), outdir / "references.csv")
    config = {
        "area_table": "area_table.csv",
        "coordinates": "coordinates.csv",
        "geometry": "geometry.geojson",
        "outcome": "outcome.csv",
        "references": "references.csv",
        "scale": "intramunicipal",
        "gwr_neighbors": 30,
        "permutations": 999,
        "seed": seed,
        "output_dir": "out",
    }
    (outdir / "config.yaml").write_text(yaml.safe_dump(config, sort_keys=False), encoding="utf-8")
    return outdir / "config.yaml"


def _json(doc) -> str:
    return json.dumps(doc, sort_keys=True)
