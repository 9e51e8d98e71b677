"""Command-line interface.

Subcommands: build-index, validate, render-map, dump-diagnostics, make-fixture.
A YAML run config supplies defaults (paths relative to the config file);
flags override it.

Exit codes: 0 success, 1 unexpected error, 2 configuration, 3 catalog,
4 input data, 5 PCA, 6 index construction, 7 spatial, 8 report.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
import time
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .catalog import load_catalog
from .errors import ConfigError, ReportError, SesIndexError, SpatialError
from .export import (export_dimensions, format_number, read_index_export, read_outcome, write_frame,
                     write_index_export, write_rows)
from .index import PipelineConfig, build_index, compare_with_reference
from .ingest import MISSING_POLICIES, AreaTable, build_area_table, load_recipe, read_coordinates, read_records
from .report import DEFAULT_PALETTE, render_map
from .spatial import (FailedFit, GwrConfig, compare_models, gwr_fit, ols_simple, queen_contiguity,
                      read_adjacency, read_geojson, ring_centroid)

log = logging.getLogger("sesindex")

SCALES = ("national", "state", "intramunicipal")
DEFAULT_NEIGHBORS = {"national": 53, "state": 53, "intramunicipal": 30}
_PATH_KEYS = ("catalog", "area_table", "persons", "households", "recipe", "coordinates",
              "outcome", "geometry", "adjacency", "references")


@dataclass
class RunConfig:
    catalog: Path | None = None
    area_table: Path | None = None
    persons: Path | None = None
    households: Path | None = None
    recipe: Path | None = None
    delimiter: str = ","
    coordinates: Path | None = None
    scale: str = "national"
    pipeline: PipelineConfig = field(default_factory=PipelineConfig)
    missing_policy: str = "drop_unit"
    gwr_neighbors: int | None = None
    permutations: int = 999
    seed: int | None = None
    output_dir: Path = Path("out")
    outcome: Path | None = None
    outcome_column: str | None = None
    geometry: Path | None = None
    adjacency: Path | None = None
    references: Path | None = None
    id_field: str = "unit_id"
    palette: str = DEFAULT_PALETTE
    title: str = "Socioeconomic index"
    base_dir: Path = Path(".")

    @property
    def neighbors(self) -> int:
        return self.gwr_neighbors if self.gwr_neighbors is not None else DEFAULT_NEIGHBORS[self.scale]

    def check(self, need: tuple[str, ...] = ()) -> None:
        if self.scale not in SCALES:
            raise ConfigError(f"scale must be one of {SCALES}, got {self.scale!r}")
        if self.missing_policy not in MISSING_POLICIES:
            raise ConfigError(f"missing_policy must be one of {MISSING_POLICIES}")
        for key in _PATH_KEYS:
            value = getattr(self, key)
            if value is not None and not Path(value).exists():
                raise ConfigError(f"{key}: path does not exist: {value}")
        for key in need:
            if getattr(self, key) is None:
                raise ConfigError(f"{key} is required for this command")

    def snapshot(self) -> dict:
        """Config as plain data, paths relative to the config directory."""
        out = {}
        for f in fields(self):
            if f.name in ("base_dir", "output_dir"):
                continue
            value = getattr(self, f.name)
            if isinstance(value, PipelineConfig):
                value = value.to_dict()
            elif isinstance(value, Path):
                try:
                    value = os.path.relpath(value, self.base_dir)
                except ValueError:
                    value = str(value)
                value = value.replace(os.sep, "/")
            out[f.name] = value
        out["gwr_neighbors"] = self.neighbors
        return out


def load_config(path: str | None, overrides: dict) -> RunConfig:
    doc: dict = {}
    base = Path(".")
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        doc = yaml.safe_load(p.read_text("utf-8")) or {}
        base = p.parent
        if not isinstance(doc, dict):
            raise ConfigError("config file must be a mapping")
    known = {f.name for f in fields(RunConfig)} - {"base_dir"}
    unknown = set(doc) - known
    if unknown:
        raise ConfigError(f"unknown config key(s): {sorted(unknown)}")

    pipe = dict(doc.pop("pipeline", None) or {})
    for key in ("shift_constant", "variance_threshold", "orientation_variable"):
        if overrides.get(key) is not None:
            pipe[key] = overrides.pop(key)
        else:
            overrides.pop(key, None)
    try:
        pipeline = PipelineConfig(**pipe)
    except TypeError as exc:
        raise ConfigError(f"pipeline: {exc}") from exc

    flags = {k: v for k, v in overrides.items() if v is not None}
    values = {**doc, **flags}
    for key in (*_PATH_KEYS, "output_dir"):
        if key in flags:
            values[key] = Path(flags[key])  # flag paths are relative to the cwd
        elif doc.get(key) is not None:
            value = Path(doc[key])
            values[key] = value if value.is_absolute() else base / value
    cfg = RunConfig(**values, pipeline=pipeline, base_dir=base)
    if cfg.seed is not None:
        cfg.seed = int(cfg.seed)
    return cfg


def _sha256(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _timestamp() -> str:
    epoch = os.environ.get("SOURCE_DATE_EPOCH")
    t = float(epoch) if epoch is not None else time.time()
    return time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime(t))


def _input_hashes(cfg: RunConfig) -> dict:
    out = {}
    for key in _PATH_KEYS:
        value = getattr(cfg, key)
        if value is not None:
            out[key] = _sha256(value)
    return out


def _load_table(cfg: RunConfig, catalog) -> AreaTable:
    coords = read_coordinates(cfg.coordinates, cfg.delimiter) if cfg.coordinates else None
    if cfg.area_table is not None:
        return AreaTable.from_csv(cfg.area_table, catalog, coords, cfg.delimiter)
    if cfg.persons is None and cfg.households is None:
        raise ConfigError("either area_table or persons/households microdata is required")
    if coords is None:
        raise ConfigError("microdata input needs a coordinates file")
    records = {}
    if cfg.persons is not None:
        records["persons"] = read_records(cfg.persons, cfg.delimiter)
    if cfg.households is not None:
        records["households"] = read_records(cfg.households, cfg.delimiter)
    recipe = load_recipe(cfg.recipe)
    return build_area_table(records, catalog, coords, recipe, cfg.missing_policy)


def _diagnostic_rows(result):
    eig_rows, load_rows = [], []
    for stage, res in result.diagnostics.items():
        for j, (ev, frac) in enumerate(zip(res.eigenvalues, res.explained_fraction)):
            eig_rows.append([stage, str(j + 1), ev, frac])
            for name, value in zip(res.variable_names, res.loadings[:, j]):
                load_rows.append([stage, str(j + 1), name, value])
    return eig_rows, load_rows


def _write_diagnostics(result, outdir: Path) -> None:
    eig_rows, load_rows = _diagnostic_rows(result)
    write_rows(outdir / "eigenvalues.csv", ["stage", "component", "eigenvalue", "explained_fraction"], eig_rows)
    write_rows(outdir / "loadings.csv", ["stage", "component", "variable", "loading"], load_rows)


def _run_pipeline(cfg: RunConfig):
    catalog = load_catalog(cfg.catalog)
    table = _load_table(cfg, catalog)
    return catalog, table, build_index(table, catalog, cfg.pipeline)


def cmd_build_index(cfg: RunConfig, diagnostics: bool = False) -> int:
    cfg.check()
    started = _timestamp()
    catalog, table, result = _run_pipeline(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)

    table.to_csv(out / "area_table.csv", cfg.delimiter)
    if table.audit:
        (out / "audit.txt").write_text("\n".join(table.audit) + "\n", encoding="utf-8")
    write_index_export(out / "index_scores.csv", result, catalog.sha256(), cfg.pipeline.to_dict())
    if diagnostics:
        _write_diagnostics(result, out)
    if cfg.references is not None:
        refs = pd.read_csv(cfg.references, dtype={"unit_id": str})
        matrix = compare_with_reference(result, refs)
        write_frame(out / "reference_correlations.csv", matrix.reset_index(names="indicator"))

    manifest = {
        "tool": "sesindex",
        "version": __version__,
        "config": cfg.snapshot(),
        "catalog_sha256": catalog.sha256(),
        "inputs_sha256": _input_hashes(cfg),
        "units": len(result.unit_ids),
        "stages": {
            "stage1_selected": result.stage1_selected,
            "stage2_selected": result.stage2_selected,
            "final_loadings": result.final_loadings,
            "eigenvalues": {k: v.eigenvalues.tolist() for k, v in result.diagnostics.items()},
            "orientation_variable": result.orientation_variable,
            "cronbach_alpha": result.cronbach_alpha,
            "dimension_representatives": {d: {"variable": v, "correlation": r}
                                          for d, (v, r) in result.dimension_representatives.items()},
            "inactive_dimensions": result.inactive_dimensions,
            "excluded_constant": result.excluded_constant,
        },
        "notes": result.notes + table.audit,
        "timestamps": {"started": started, "finished": _timestamp()},
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    print(f"index built for {len(result.unit_ids)} units; alpha={result.cronbach_alpha:.3f}; "
          f"active dimensions: {', '.join(result.active_dimensions)}; "
          f"inactive: {', '.join(result.inactive_dimensions) or 'none'}")
    return 0


def cmd_dump_diagnostics(cfg: RunConfig) -> int:
    cfg.check()
    _, _, result = _run_pipeline(cfg)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_diagnostics(result, out)
    print(f"wrote {out / 'eigenvalues.csv'} and {out / 'loadings.csv'}")
    return 0


def _geometry(cfg: RunConfig):
    if cfg.geometry is not None:
        return read_geojson(cfg.geometry, cfg.id_field)
    return None


def _align(series: pd.Series, ids: list[str], what: str) -> np.ndarray:
    ours, theirs = set(ids), set(series.index)
    if ours != theirs:
        raise ReportError(f"{what} unit ids differ from the index: missing {sorted(ours - theirs)}, "
                          f"extra {sorted(theirs - ours)}")
    return series.loc[ids].to_numpy(dtype=float)


def validation_fits(index: pd.DataFrame, y: np.ndarray, coords: np.ndarray, weights, cfg: RunConfig):
    """OLS and GWR fits of ``y`` on the index and each dimension column."""
    ids = index["unit_id"].tolist()
    indicators = ["geoses"] + export_dimensions(index)
    gwr_cfg = GwrConfig(cfg.neighbors)
    if not len(ids) > gwr_cfg.neighbors:
        raise ConfigError(f"gwr_neighbors={gwr_cfg.neighbors} needs more than {len(ids)} units")
    ols_fits, gwr_fits = [], []
    for name in indicators:
        x = index[name].to_numpy(dtype=float)
        ols_fits.append(ols_simple(y, x, weights, cfg.permutations, cfg.seed, label=name))
        try:
            gwr_fits.append(gwr_fit(y, x, coords, gwr_cfg, weights, cfg.permutations, cfg.seed,
                                    label=name, unit_ids=ids))
        except SpatialError as exc:
            log.warning("GWR for %s failed: %s", name, exc)
            gwr_fits.append(FailedFit(name, "gwr", str(exc)))
    return ols_fits, gwr_fits


def _report_rows(frame: pd.DataFrame):
    for rec in frame.itertuples(index=False):
        yield [rec.indicator, rec.r2_adj, rec.aicc, rec.moran_i, rec.moran_p, rec.best, rec.spatial_dependence]


REPORT_HEADER = ["indicator", "r2_adj", "aicc", "moran_i", "moran_p", "best", "spatial_dependence"]


def cmd_validate(cfg: RunConfig, index_path: Path | None = None) -> int:
    cfg.check(need=("outcome",))
    if cfg.geometry is None and cfg.adjacency is None:
        raise ConfigError("validate needs geometry (GeoJSON) or an adjacency file")
    if cfg.permutations > 0 and cfg.seed is None:
        raise ConfigError("seed is mandatory when permutations > 0")
    out = Path(cfg.output_dir)
    index_path = Path(index_path) if index_path else out / "index_scores.csv"
    _, index = read_index_export(index_path)
    ids = index["unit_id"].tolist()
    y = _align(read_outcome(cfg.outcome, cfg.outcome_column, cfg.delimiter), ids, "outcome")

    geoms = _geometry(cfg)
    if cfg.adjacency is not None:
        weights = read_adjacency(cfg.adjacency)
    else:
        weights = queen_contiguity({u: geoms[u] for u in ids if u in geoms})
    weights = weights.reorder(ids)
    if cfg.coordinates is not None:
        c = read_coordinates(cfg.coordinates, cfg.delimiter)
        missing = [u for u in ids if u not in c]
        if missing:
            raise ReportError(f"units without coordinates: {', '.join(missing)}")
        coords = np.array([c[u] for u in ids])
    elif geoms is not None:
        coords = np.array([ring_centroid(geoms[u]) for u in ids])
    else:
        raise ConfigError("validate needs coordinates or polygon geometry for GWR")

    ols_fits, gwr_fits = validation_fits(index, y, coords, weights, cfg)
    out.mkdir(parents=True, exist_ok=True)
    gwr_table = compare_models(gwr_fits)
    ols_table = compare_models(ols_fits)
    write_rows(out / "validation.csv", REPORT_HEADER, _report_rows(gwr_table),
               {"model": "gwr adaptive_bisquare", "neighbors": str(cfg.neighbors),
                "permutations": str(cfg.permutations), "seed": str(cfg.seed)})
    write_rows(out / "validation_ols.csv", REPORT_HEADER, _report_rows(ols_table),
               {"model": "ols", "permutations": str(cfg.permutations), "seed": str(cfg.seed)})

    local_rows = []
    for fit in gwr_fits:
        if isinstance(fit, FailedFit):
            continue
        for i, uid in enumerate(ids):
            local_rows.append([uid, fit.label, fit.coefficients[i, 0], fit.coefficients[i, 1],
                               fit.fitted[i], fit.residuals[i], fit.standardized_residuals[i]])
    write_rows(out / "local_fits.csv",
               ["unit_id", "indicator", "intercept", "slope", "fitted", "residual", "std_residual"], local_rows)
    if geoms is not None:
        _write_local_geojson(out / "local_fits.geojson", geoms, ids, gwr_fits, cfg.id_field)

    with pd.option_context("display.width", 120):
        print(gwr_table.drop(columns=["model"]).to_string(index=False))
    return 0


def _write_local_geojson(path: Path, geoms, ids, fits, id_field: str) -> None:
    feats = []
    for i, uid in enumerate(ids):
        props = {id_field: uid}
        for fit in fits:
            if isinstance(fit, FailedFit):
                continue
            props[f"{fit.label}_intercept"] = format_number(fit.coefficients[i, 0])
            props[f"{fit.label}_slope"] = format_number(fit.coefficients[i, 1])
            props[f"{fit.label}_fitted"] = format_number(fit.fitted[i])
        feats.append({"type": "Feature", "properties": props, "geometry": geoms.get(uid)})
    doc = {"type": "FeatureCollection", "features": feats}
    path.write_text(json.dumps(doc, sort_keys=True) + "\n", encoding="utf-8")


def cmd_render_map(cfg: RunConfig, index_path: Path | None = None, output: Path | None = None) -> int:
    cfg.check(need=("geometry",))
    out = Path(cfg.output_dir)
    index_path = Path(index_path) if index_path else out / "index_scores.csv"
    text, _ = read_index_export(index_path)
    output = Path(output) if output else out / "map.html"
    output.parent.mkdir(parents=True, exist_ok=True)
    missing = render_map(text, read_geojson(cfg.geometry, cfg.id_field), output, cfg.title, cfg.palette)
    print(f"wrote {output}" + (f" ({len(missing)} unit(s) without geometry)" if missing else ""))
    return 0


def cmd_make_fixture(outdir: Path, kind: str, units: int, seed: int | None) -> int:
    from .synthetic import write_grid_fixture, write_micro_fixture

    if kind == "micro":
        path = write_micro_fixture(outdir, n_units=units or 3, seed=7 if seed is None else seed)
    else:
        side = units or 12
        path = write_grid_fixture(outdir, side, side, seed=11 if seed is None else seed)
    print(f"wrote fixture config {path}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sesindex", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    def run_args(p):
        p.add_argument("--config", help="YAML run config")
        p.add_argument("--catalog", help="variable catalog YAML (default: bundled)")
        p.add_argument("--area-table", dest="area_table")
        p.add_argument("--persons")
        p.add_argument("--households")
        p.add_argument("--recipe", help="aggregation recipe YAML (default: bundled)")
        p.add_argument("--delimiter")
        p.add_argument("--coordinates", help="unit_id,x,y file")
        p.add_argument("--scale", choices=SCALES)
        p.add_argument("--shift-constant", dest="shift_constant", type=float)
        p.add_argument("--variance-threshold", dest="variance_threshold", type=float)
        p.add_argument("--orientation-variable", dest="orientation_variable")
        p.add_argument("--missing-policy", dest="missing_policy", choices=MISSING_POLICIES)
        p.add_argument("--gwr-neighbors", dest="gwr_neighbors", type=int)
        p.add_argument("--permutations", type=int)
        p.add_argument("--seed", type=int)
        p.add_argument("--output-dir", dest="output_dir")
        p.add_argument("--outcome")
        p.add_argument("--outcome-column", dest="outcome_column")
        p.add_argument("--geometry", help="GeoJSON FeatureCollection")
        p.add_argument("--adjacency", help="'unit_id: neighbours' text file")
        p.add_argument("--references")
        p.add_argument("--id-field", dest="id_field")
        p.add_argument("--palette")
        p.add_argument("--title")

    p = sub.add_parser("build-index", help="aggregate inputs and build the index")
    run_args(p)
    p.add_argument("--diagnostics", action="store_true", help="also write eigenvalues/loadings")
    p = sub.add_parser("validate", help="OLS/GWR validation against an outcome")
    run_args(p)
    p.add_argument("--index", dest="index_path", help="index export (default: <output-dir>/index_scores.csv)")
    p = sub.add_parser("render-map", help="standalone HTML map of an index export")
    run_args(p)
    p.add_argument("--index", dest="index_path")
    p.add_argument("--output", dest="map_output")
    p = sub.add_parser("dump-diagnostics", help="write eigenvalues and loadings of every PCA stage")
    run_args(p)
    p = sub.add_parser("make-fixture", help="write a synthetic input fixture")
    p.add_argument("outdir")
    p.add_argument("--kind", choices=("micro", "grid"), default="grid")
    p.add_argument("--units", type=int, default=0, help="micro: unit count; grid: side length")
    p.add_argument("--seed", type=int)
    return parser


_CONFIG_FLAGS = {"catalog", "area_table", "persons", "households", "recipe", "delimiter", "coordinates",
                 "scale", "shift_constant", "variance_threshold", "orientation_variable", "missing_policy",
                 "gwr_neighbors", "permutations", "seed", "output_dir", "outcome", "outcome_column",
                 "geometry", "adjacency", "references", "id_field", "palette", "title"}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "make-fixture":
            return cmd_make_fixture(Path(args.outdir), args.kind, args.units, args.seed)
        overrides = {k: v for k, v in vars(args).items() if k in _CONFIG_FLAGS}
        cfg = load_config(args.config, overrides)
        if args.command == "build-index":
            return cmd_build_index(cfg, args.diagnostics)
        if args.command == "validate":
            return cmd_validate(cfg, args.index_path)
        if args.command == "render-map":
            return cmd_render_map(cfg, args.index_path, args.map_output)
        return cmd_dump_diagnostics(cfg)
    except SesIndexError as exc:
        module = type(exc).__name__.replace("Error", "").lower() or "error"
        print(f"error [{module}]: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    raise SystemExit(main())
