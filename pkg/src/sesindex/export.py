"""Delimited-text exports and their readers.

Numbers are written with 15 significant digits and a '.' decimal point
regardless of locale. Non-finite values are written as empty cells.
"""

from __future__ import annotations

import json
import math
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import ReportError

PRECISION = 15


def format_number(value) -> str:
    if value is None:
        return ""
    v = float(value)
    if math.isnan(v):
        return ""
    if math.isinf(v):
        return "-inf" if v < 0 else "inf"
    text = f"{v:.{PRECISION}g}"
    return "0" if text == "-0" else text


def write_rows(path, header: list[str], rows, provenance: dict | None = None,
               delimiter: str = ",") -> None:
    """Write rows of cells; floats are formatted, strings pass through."""
    lines = []
    if provenance:
        for key, value in provenance.items():
            text = value if isinstance(value, str) else json.dumps(value, sort_keys=True)
            lines.append(f"# {key}: {text}")
    lines.append(delimiter.join(header))
    for row in rows:
        cells = [c if isinstance(c, str) else format_number(c) for c in row]
        lines.append(delimiter.join(cells))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def write_frame(path, frame: pd.DataFrame, provenance: dict | None = None, delimiter: str = ",") -> None:
    write_rows(path, list(frame.columns), frame.itertuples(index=False, name=None), provenance, delimiter)


def write_index_export(path, result, catalog_sha: str, config: dict) -> pd.DataFrame:
    """Scores file: unit_id, geoses, scaled dimension columns, raw representative columns."""
    frame = result.to_frame()
    provenance = {
        "catalog_sha256": catalog_sha,
        "config": config,
        "representatives": {d: v for d, (v, _) in result.dimension_representatives.items()},
        "inactive_dimensions": result.inactive_dimensions,
    }
    write_frame(path, frame, provenance)
    return frame


def read_text_table(path, delimiter: str = ",") -> tuple[pd.DataFrame, list[str]]:
    """Read a delimited export, returning the frame with cells kept as text.

    The second value holds the ``#`` provenance lines.
    """
    path = Path(path)
    if not path.exists():
        raise ReportError(f"file not found: {path}")
    lines = path.read_text("utf-8").splitlines()
    header_lines = [ln for ln in lines if ln.startswith("#")]
    body = [ln for ln in lines if not ln.startswith("#") and ln.strip()]
    if not body:
        raise ReportError(f"{path}: no header row")
    cols = body[0].split(delimiter)
    rows = [ln.split(delimiter) for ln in body[1:]]
    for i, r in enumerate(rows):
        if len(r) != len(cols):
            raise ReportError(f"{path}: row {i + 2} has {len(r)} cells, expected {len(cols)}")
    return pd.DataFrame(rows, columns=cols, dtype=str), header_lines


def read_index_export(path) -> tuple[pd.DataFrame, pd.DataFrame]:
    """Index export as (text frame, numeric frame), both keyed by row order."""
    text, _ = read_text_table(path)
    if "unit_id" not in text.columns or "geoses" not in text.columns:
        raise ReportError(f"{path}: not an index export (needs unit_id and geoses)")
    numeric = text.copy()
    for col in numeric.columns:
        if col != "unit_id":
            numeric[col] = pd.to_numeric(numeric[col].replace("", np.nan), errors="raise")
    return text, numeric


def export_dimensions(frame: pd.DataFrame) -> list[str]:
    """Scaled dimension columns of an index export, in file order."""
    return [c for c in frame.columns
            if c not in ("unit_id", "geoses") and not c.endswith("_raw")]


def read_outcome(path, column: str | None = None, delimiter: str = ",") -> pd.Series:
    """Outcome file ``unit_id,<value>`` as a float Series indexed by unit id."""
    path = Path(path)
    if not path.exists():
        raise ReportError(f"outcome file not found: {path}")
    frame = pd.read_csv(path, sep=delimiter, dtype={"unit_id": str}, comment="#")
    if "unit_id" not in frame.columns:
        raise ReportError(f"{path}: missing unit_id column")
    value_cols = [c for c in frame.columns if c != "unit_id"]
    col = column or (value_cols[0] if value_cols else None)
    if col not in frame.columns:
        raise ReportError(f"{path}: outcome column {col!r} not found")
    return pd.Series(frame[col].to_numpy(dtype=float), index=frame["unit_id"].astype(str), name=col)
