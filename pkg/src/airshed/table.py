"""Region x pollutant feature table: null removal, z-scoring, CSV I/O.

NULL cells are held as NaN in ``cells``.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import (
    EmptyResult,
    HeaderMismatch,
    NonNumericField,
    NullCellsPresent,
    RaggedRow,
    TooFewRows,
)
from .raster import POLLUTANTS


@dataclass(frozen=True, eq=False)
class FeatureTable:
    row_names: tuple
    columns: tuple
    cells: np.ndarray
    standardized: bool = False
    column_stats: np.ndarray | None = None  # shape (ncols, 2): mean, population std
    warnings: tuple = field(default=())

    def __post_init__(self):
        cells = np.array(self.cells, dtype=np.float64).reshape(len(self.row_names), len(self.columns))
        cells.flags.writeable = False
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "row_names", tuple(self.row_names))
        object.__setattr__(self, "columns", tuple(self.columns))
        object.__setattr__(self, "warnings", tuple(self.warnings))
        if len(set(self.row_names)) != len(self.row_names):
            raise ValueError("row names must be unique")
        if np.isinf(cells).any():
            raise NonNumericField("infinite cell value")
        if self.standardized:
            if np.isnan(cells).any():
                raise NullCellsPresent("standardized table contains NULL cells")
            if self.column_stats is None:
                raise ValueError("standardized table needs column_stats")
        if self.column_stats is not None:
            stats = np.array(self.column_stats, dtype=np.float64).reshape(len(self.columns), 2)
            if (stats[:, 1] < 0).any():
                raise ValueError("column standard deviations must be non-negative")
            stats.flags.writeable = False
            object.__setattr__(self, "column_stats", stats)

    @property
    def shape(self) -> tuple[int, int]:
        return self.cells.shape

    def null_mask(self) -> np.ndarray:
        return np.isnan(self.cells)

    def row(self, name: str) -> np.ndarray:
        return self.cells[self.row_names.index(name)]

    def subset(self, rows: Sequence[int]) -> "FeatureTable":
        rows = list(rows)
        return FeatureTable(
            [self.row_names[i] for i in rows],
            self.columns,
            self.cells[rows],
            self.standardized,
            self.column_stats,
            self.warnings,
        )


def drop_null_rows(table: FeatureTable) -> tuple[FeatureTable, list[str]]:
    """Keep only rows without NULL cells; return the table and the dropped names."""
    if table.standardized:
        raise ValueError("drop_null_rows applies to raw tables")
    has_null = table.null_mask().any(axis=1)
    dropped = [name for name, bad in zip(table.row_names, has_null) if bad]
    if has_null.all():
        raise EmptyResult("every row contains a NULL cell")
    return table.subset(np.flatnonzero(~has_null)), dropped


def standardize(table: FeatureTable) -> FeatureTable:
    """Z-score every column with the population standard deviation.

    Constant columns become zeros and are listed in ``warnings`` of the
    returned table.
    """
    n = len(table.row_names)
    if table.null_mask().any():
        raise NullCellsPresent("drop NULL rows before standardizing")
    if n < 2:
        raise TooFewRows(f"need at least 2 rows to standardize, got {n}")

    out = np.zeros_like(table.cells)
    stats = np.zeros((len(table.columns), 2))
    notes = []
    for j, column in enumerate(table.columns):
        x = table.cells[:, j]
        mean = math.fsum(x) / n
        centered = x - mean
        # second pass removes the rounding left in the first mean
        correction = math.fsum(centered) / n
        centered = centered - correction
        mean += correction
        sigma = math.sqrt(math.fsum(centered * centered) / n)
        stats[j] = (mean, sigma)
        if sigma == 0.0:
            notes.append(f"column {column} is constant; standardized to zeros")
            continue
        out[:, j] = centered / sigma
    return FeatureTable(table.row_names, table.columns, out, True, stats, notes)


# ---------------------------------------------------------------------------
# CSV


def _format(value: float) -> str:
    if math.isnan(value):
        return ""
    return format(value, ".12g")


def write_table(table: FeatureTable) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["region", *table.columns])
    for name, row in zip(table.row_names, table.cells):
        writer.writerow([name, *(_format(v) for v in row)])
    return buf.getvalue()


def read_table(stream, columns: Sequence[str] | None = POLLUTANTS) -> FeatureTable:
    """Parse a feature-table CSV; empty fields become NULL.

    ``columns`` fixes the expected pollutant header.  Pass ``None`` to accept
    any non-empty subset of the pollutants in canonical order.
    """
    text = stream if isinstance(stream, str) else stream.read()
    rows = list(csv.reader(io.StringIO(text)))
    while rows and not rows[-1]:
        rows.pop()
    if not rows:
        raise HeaderMismatch("empty table")
    header = [h.strip() for h in rows[0]]
    if header[:1] != ["region"]:
        raise HeaderMismatch(f"first column must be 'region', got {header[:1]}")
    found = tuple(header[1:])
    if columns is not None:
        if found != tuple(columns):
            raise HeaderMismatch(f"expected columns {list(columns)}, got {list(found)}")
    else:
        order = [p for p in POLLUTANTS if p in found]
        if not found or tuple(order) != found or len(set(found)) != len(found):
            raise HeaderMismatch(f"columns {list(found)} are not pollutants in canonical order")

    names = []
    cells = []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(header):
            raise RaggedRow(f"line {lineno}: {len(row)} fields, expected {len(header)}")
        names.append(row[0])
        values = []
        for field_text in row[1:]:
            field_text = field_text.strip()
            if field_text == "":
                values.append(math.nan)
                continue
            try:
                value = float(field_text)
            except ValueError:
                raise NonNumericField(f"line {lineno}: {field_text!r} is not a number") from None
            if not math.isfinite(value):
                raise NonNumericField(f"line {lineno}: {field_text!r} is not finite")
            values.append(value)
        cells.append(values)
    return FeatureTable(names, found, np.array(cells, dtype=np.float64).reshape(len(names), len(found)))
