"""CSV ingestion of price/return tables and plot-ready density exports."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from .divergence import GridMismatchError
from .spectra import ReturnPanel, SpectralDensity

__all__ = [
    "DENSITY_COLUMNS",
    "DataFormatError",
    "DatedPanel",
    "export_densities",
    "load_prices_to_returns",
    "load_table",
    "read_densities",
]

DENSITY_COLUMNS = ("bin_left", "bin_right", "rho_real", "rho_model", "rho_mp")
MISSING_POLICIES = ("drop-series", "drop-dates")
INPUT_KINDS = ("price", "return")
_MISSING_TOKENS = {"", "na", "nan", "null", "none", "#n/a"}


class DataFormatError(ValueError):
    """Bad input table; ``row`` and ``column`` are 1-based file positions when known."""

    def __init__(self, message: str, path: str | Path, row: int | None = None, column: int | None = None) -> None:
        where = f"{path}"
        if row is not None:
            where += f", row {row}"
        if column is not None:
            where += f", column {column}"
        super().__init__(f"{where}: {message}")
        self.path = str(path)
        self.row = row
        self.column = column


@dataclass(frozen=True)
class DatedPanel:
    panel: ReturnPanel
    dates: tuple[str, ...]


def _parse_cell(text: str, path, row: int, column: int) -> float:
    token = text.strip()
    if token.lower() in _MISSING_TOKENS:
        return math.nan
    try:
        value = float(token)
    except ValueError:
        raise DataFormatError(f"cannot parse {text!r} as a number", path, row, column) from None
    if not math.isfinite(value):
        raise DataFormatError(f"non-finite value {text!r}", path, row, column)
    return value


def _read_matrix(path: str | Path) -> tuple[list[str], list[str], NDArray[np.float64]]:
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise DataFormatError(f"cannot read file ({exc.strerror})", path) from exc
    rows = [r for r in rows if any(cell.strip() for cell in r)]
    if not rows:
        raise DataFormatError("file is empty", path)
    header = [h.strip() for h in rows[0]]
    if len(header) < 2:
        raise DataFormatError("need a date column and at least one series column", path, 1)
    ids = header[1:]
    dates, data = [], []
    for i, raw in enumerate(rows[1:], start=2):
        if len(raw) != len(header):
            raise DataFormatError(f"expected {len(header)} cells, found {len(raw)}", path, i)
        dates.append(raw[0].strip())
        data.append([_parse_cell(cell, path, i, j) for j, cell in enumerate(raw[1:], start=2)])
    return ids, dates, np.array(data, dtype=np.float64).reshape(len(dates), len(ids))


def load_table(
    path: str | Path,
    input_kind: str = "price",
    missing: str = "drop-series",
) -> DatedPanel:
    """Read a dates x series CSV into an N x T return panel.

    Prices become simple returns ``(S_t - S_{t-1}) / S_{t-1}``; each return is
    labelled with the later date.  Missing cells drop their whole series
    (``drop-series``) or their whole date (``drop-dates``) before returns
    are formed.
    """
    if input_kind not in INPUT_KINDS:
        raise ValueError(f"input_kind must be one of {INPUT_KINDS}")
    if missing not in MISSING_POLICIES:
        raise ValueError(f"missing must be one of {MISSING_POLICIES}")
    ids, dates, x = _read_matrix(path)
    holes = np.isnan(x)
    if missing == "drop-series":
        keep = ~holes.any(axis=0)
        x, ids = x[:, keep], [s for s, k in zip(ids, keep) if k]
    else:
        keep = ~holes.any(axis=1)
        x, dates = x[keep], [d for d, k in zip(dates, keep) if k]
    if not ids:
        raise DataFormatError("no series left after dropping missing data", path)

    if input_kind == "price":
        if x.shape[0] < 3:
            raise DataFormatError(f"need at least 3 price rows, have {x.shape[0]}", path)
        bad = np.argwhere(x[:-1] == 0)
        if bad.size:
            r, c = bad[0]
            raise DataFormatError("zero price, return undefined", path, None, int(c) + 2)
        x = np.diff(x, axis=0) / x[:-1]
        dates = dates[1:]
    if x.shape[0] < 2:
        raise DataFormatError(f"fewer than 2 usable dates ({x.shape[0]})", path)
    if len(ids) < 2:
        raise DataFormatError("need at least 2 usable series", path)
    return DatedPanel(ReturnPanel(x.T, tuple(ids)), tuple(dates))


def load_prices_to_returns(path: str | Path, input_kind: str = "price", missing: str = "drop-series") -> ReturnPanel:
    return load_table(path, input_kind, missing).panel


def export_densities(
    real: SpectralDensity,
    model: SpectralDensity,
    mp: SpectralDensity,
    path: str | Path,
) -> Path:
    """Write the three densities side by side, 12 significant digits."""
    edges = real.bin_edges
    for other in (model, mp):
        if not np.array_equal(other.bin_edges, edges):
            raise GridMismatchError("densities must share one grid")
    if edges.size < 2:
        raise ValueError("empty grid")
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(DENSITY_COLUMNS)
            for row in zip(edges[:-1], edges[1:], real.masses, model.masses, mp.masses):
                writer.writerow([format(float(v), ".12g") for v in row])
    except OSError as exc:
        raise OSError(exc.errno, f"cannot write densities: {exc.strerror}", str(path)) from exc
    return path


def read_densities(path: str | Path) -> dict[str, NDArray[np.float64]]:
    """Inverse of :func:`export_densities`; returns ``bin_edges`` plus the mass columns."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if tuple(header) != DENSITY_COLUMNS:
            raise DataFormatError(f"unexpected header {header}", path, 1)
        data = np.array([[float(v) for v in row] for row in reader], dtype=np.float64)
    if data.size == 0:
        raise DataFormatError("no density rows", path)
    return {
        "bin_edges": np.append(data[:, 0], data[-1, 1]),
        "rho_real": data[:, 2],
        "rho_model": data[:, 3],
        "rho_mp": data[:, 4],
    }
