"""RFC 4180 CSV output with a stable float format."""

from __future__ import annotations

import csv
import io
from pathlib import Path

import numpy as np


def _cell(value):
    if isinstance(value, (bool, np.bool_)):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if value is None:
        return ""
    return str(value)


def format_rows(rows) -> str:
    columns = []
    for row in rows:
        for key in row:
            if key not in columns:
                columns.append(key)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\r\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_cell(row.get(c)) for c in columns])
    return buf.getvalue()


def write_rows(path, rows):
    path = Path(path)
    if path.parent and not path.parent.exists():
        path.parent.mkdir(parents=True)
    path.write_text(format_rows(rows), encoding="utf-8", newline="")


def raw_path(path) -> Path:
    """Per-trial companion file: ``results.csv`` -> ``results_trials.csv``."""
    path = Path(path)
    return path.with_name(f"{path.stem}_trials{path.suffix or '.csv'}")
