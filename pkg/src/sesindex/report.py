"""Standalone HTML choropleth of an index export.

The page is a single file: geometry is drawn as inline SVG, one layer for the
index plus one per active dimension, and every number shown comes verbatim
from the export file's text cells.
"""

from __future__ import annotations

import html
import json
import sys
from importlib import resources
from pathlib import Path
from string import Template
from typing import Mapping

import numpy as np
import pandas as pd

from .errors import ReportError
from .export import export_dimensions
from .spatial import polygon_rings

# low, mid, high stops of symmetric diverging scales over [-1, +1]
PALETTES = {
    "RdBu": ("#b2182b", "#f7f7f7", "#2166ac"),
    "PuOr": ("#b35806", "#f7f7f7", "#542788"),
    "BrBG": ("#8c510a", "#f5f5f5", "#01665e"),
    "RdYlGn": ("#d73027", "#ffffbf", "#1a9850"),
}
DEFAULT_PALETTE = "RdBu"
WIDTH = 800


def _rgb(hexcode: str) -> np.ndarray:
    return np.array([int(hexcode[i:i + 2], 16) for i in (1, 3, 5)], dtype=float)


def diverging_color(value: float, palette: str = DEFAULT_PALETTE) -> str:
    """Colour for ``value`` in [-1, +1], linear through the mid stop at 0."""
    try:
        low, mid, high = (_rgb(c) for c in PALETTES[palette])
    except KeyError:
        raise ReportError(f"unknown palette {palette!r}; choose from {sorted(PALETTES)}") from None
    v = float(np.clip(value, -1.0, 1.0))
    rgb = mid + (high - mid) * v if v >= 0 else mid + (low - mid) * (-v)
    return "#" + "".join(f"{int(round(c)):02x}" for c in rgb)


class _Projector:
    def __init__(self, geometries: Mapping[str, object]):
        pts = np.vstack([r for g in geometries.values() for r in polygon_rings(g)])
        self.xmin, self.ymin = pts.min(axis=0)
        xmax, ymax = pts.max(axis=0)
        span = max(xmax - self.xmin, ymax - self.ymin) or 1.0
        self.scale = WIDTH / span
        self.height = max(1.0, (ymax - self.ymin) * self.scale)
        self.width = max(1.0, (xmax - self.xmin) * self.scale)
        self.ymax = ymax

    def path(self, geometry) -> str:
        parts = []
        for ring in polygon_rings(geometry):
            xs = (ring[:, 0] - self.xmin) * self.scale
            ys = (self.ymax - ring[:, 1]) * self.scale
            pts = " L".join(f"{x:.2f} {y:.2f}" for x, y in zip(xs, ys))
            parts.append(f"M{pts} Z")
        return " ".join(parts)


def render_map(export: pd.DataFrame, geometries: Mapping[str, object], output,
               title: str = "Socioeconomic index", palette: str = DEFAULT_PALETTE,
               labels: Mapping[str, str] | None = None) -> list[str]:
    """Write the HTML map and return unit ids that had no geometry.

    ``export`` is the index export read as text (see
    :func:`sesindex.export.read_index_export`); its cells are embedded
    unchanged so the page and the file always agree.
    """
    if palette not in PALETTES:
        raise ReportError(f"unknown palette {palette!r}; choose from {sorted(PALETTES)}")
    layers = ["geoses"] + export_dimensions(export)
    labels = {"geoses": "Index", **{d: d.capitalize() for d in layers[1:]}, **(labels or {})}
    geometries = {str(k): v for k, v in geometries.items() if v is not None}
    if not geometries:
        raise ReportError("no geometry to draw")
    ids = export["unit_id"].astype(str).tolist()
    missing = [u for u in ids if u not in geometries]
    if missing:
        print(f"warning: units without geometry: {', '.join(missing)}", file=sys.stderr)
    proj = _Projector(geometries)
    paths = {uid: proj.path(geom) for uid, geom in geometries.items()}
    rows = {u: i for i, u in enumerate(ids)}

    groups = []
    for k, name in enumerate(layers):
        cells = export[name].tolist()
        items = []
        for uid, d in paths.items():
            if uid in rows and cells[rows[uid]] != "":
                text = cells[rows[uid]]
                fill = diverging_color(float(text), palette)
                items.append(f'<path class="unit" data-unit="{html.escape(uid)}" data-value="{text}" '
                             f'fill="{fill}" d="{d}"><title>{html.escape(uid)}: {text}</title></path>')
            else:
                items.append(f'<path class="nodata" data-unit="{html.escape(uid)}" d="{d}"/>')
        active = " active" if k == 0 else ""
        groups.append(f'<g class="layer{active}" data-layer="{name}" id="layer-{name}">\n'
                      + "\n".join(items) + "\n</g>")

    controls = "\n".join(
        f'<label><input type="radio" name="layer" value="{name}"{" checked" if k == 0 else ""}> '
        f'{html.escape(labels[name])}</label><br>'
        for k, name in enumerate(layers))
    warn_html = ""
    if missing:
        warn_html = ('<div id="warnings"><strong>Units without geometry:</strong> '
                     + html.escape(", ".join(missing)) + "</div>")
    data = {
        "layers": layers,
        "labels": {n: labels[n] for n in layers},
        "units": {u: {n: export[n].iloc[rows[u]] for n in layers} for u in ids},
    }
    payload = json.dumps(data, sort_keys=True, ensure_ascii=False).replace("</", "<\\/")
    low, mid, high = PALETTES[palette]
    template = Template(resources.files("sesindex").joinpath("data/map_template.html").read_text("utf-8"))
    page = template.substitute(
        title=html.escape(title),
        gradient=f"{low}, {mid}, {high}",
        viewbox=f"0 0 {proj.width:.2f} {proj.height:.2f}",
        width=f"{proj.width:.0f}", height=f"{proj.height:.0f}",
        layers="\n".join(groups), controls=controls, warnings=warn_html, data=payload,
    )
    Path(output).write_text(page, encoding="utf-8")
    return missing
