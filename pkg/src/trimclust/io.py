"""CSV ingestion and result writers.

Dialect: comma-separated, '.' decimal separator, optional header row
auto-detected by a non-numeric first line.  Malformed input is reported
with 1-based row and column numbers.
"""

from __future__ import annotations

import csv
import json

import numpy as np


class DataFormatError(ValueError):
    """Malformed CSV input (non-numeric cell or ragged rows)."""


def _try_float(cell: str) -> float | None:
    try:
        return float(cell)
    except ValueError:
        return None


def load_data_csv(path) -> tuple[np.ndarray, list[str] | None]:
    """Read a numeric matrix, returning (values, column_names_or_None)."""
    with open(path, newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and any(c.strip() for c in row)]
    if not rows:
        raise DataFormatError(f"{path}: no data rows")
    names = None
    start = 0
    if any(_try_float(cell.strip()) is None for cell in rows[0]):
        names = [cell.strip() for cell in rows[0]]
        start = 1
        if len(rows) == 1:
            raise DataFormatError(f"{path}: header but no data rows")
    width = len(rows[start])
    out = np.empty((len(rows) - start, width))
    for r, row in enumerate(rows[start:], start=start + 1):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: row {r} has {len(row)} cells, expected {width}"
            )
        for c, cell in enumerate(row, start=1):
            value = _try_float(cell.strip())
            if value is None or not np.isfinite(value):
                raise DataFormatError(
                    f"{path}: non-numeric cell at row {r}, column {c}: {cell!r}"
                )
            out[r - start - 1, c - 1] = value
    return out, names


def load_labels_csv(path) -> np.ndarray:
    """Read a single column (or single row) of integer labels."""
    values, _ = load_data_csv(path)
    flat = values.ravel()
    if values.ndim == 2 and 1 not in values.shape and values.size != max(values.shape):
        raise DataFormatError(f"{path}: expected a single column of labels")
    labels = flat.astype(int)
    if np.any(labels != flat):
        raise DataFormatError(f"{path}: labels must be integers")
    return labels


def save_matrix_csv(path, values: np.ndarray, names: list[str] | None = None) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        if names is not None:
            writer.writerow(names)
        for row in np.atleast_2d(values):
            writer.writerow([f"{v:.12g}" for v in row])


def save_labels_csv(path, labels: np.ndarray) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["label"])
        for v in labels:
            writer.writerow([int(v)])


def save_json(path, payload: dict) -> None:
    with open(path, "w") as fh:
        json.dump(payload, fh, indent=2)
        fh.write("\n")
