"""Raster scenes: ESRI ASCII grid I/O, QA filtering and mean compositing.

A :class:`Grid` stores its cells bottom-up, so ``values[0, 0]`` is the
lower-left cell and ``values[i, j]`` sits at row ``i`` counted from the
south edge.  Missing cells are tracked by a boolean mask; the numeric value
stored under a masked cell is always ``0.0`` and carries no meaning.
"""
from __future__ import annotations

import datetime as dt
import io
import logging
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence, TextIO

import numpy as np

from .errors import (
    DimensionMismatch,
    EmptyInput,
    GeoreferenceMismatch,
    MalformedHeader,
    MissingQaBand,
    NonNumericCell,
)

log = logging.getLogger(__name__)

POLLUTANTS = ("NO2", "SO2", "CO", "AER_AI", "O3", "HCHO")

DEFAULT_NODATA = -9999.0

_HEADER_KEYS = ("ncols", "nrows", "xllcorner", "yllcorner", "cellsize", "nodata_value")
_REQUIRED_KEYS = _HEADER_KEYS[:5]

SCENE_FILENAME = re.compile(
    r"^(?P<pollutant>NO2|SO2|CO|AER_AI|O3|HCHO)_(?P<date>\d{4}-\d{2}-\d{2})(?P<qa>_qa)?\.asc$"
)


@dataclass(frozen=True, eq=False)
class Grid:
    """One georeferenced raster band.

    ``values`` and ``missing`` have shape ``(nrows, ncols)``.
    """

    ncols: int
    nrows: int
    x_origin: float
    y_origin: float
    cell_size: float
    values: np.ndarray
    missing: np.ndarray

    def __post_init__(self):
        if self.ncols < 1 or self.nrows < 1:
            raise DimensionMismatch(f"grid must be at least 1x1, got {self.ncols}x{self.nrows}")
        if not (self.cell_size > 0 and math.isfinite(self.cell_size)):
            raise DimensionMismatch(f"cell size must be positive, got {self.cell_size}")
        values = np.array(self.values, dtype=np.float64)
        missing = np.array(self.missing, dtype=bool)
        shape = (self.nrows, self.ncols)
        if values.shape != shape or missing.shape != shape:
            raise DimensionMismatch(
                f"expected {shape} cells, got values {values.shape} / mask {missing.shape}"
            )
        if not np.all(np.isfinite(values[~missing])):
            raise NonNumericCell("non-finite value stored as data")
        values[missing] = 0.0
        values.flags.writeable = False
        missing.flags.writeable = False
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "missing", missing)

    @classmethod
    def from_array(cls, data, x_origin=0.0, y_origin=0.0, cell_size=1.0, missing=None):
        """Build a grid from a bottom-up 2-D array; NaN cells become missing."""
        data = np.asarray(data, dtype=np.float64)
        if data.ndim != 2:
            raise DimensionMismatch("grid data must be 2-D")
        mask = ~np.isfinite(data) if missing is None else np.asarray(missing, dtype=bool)
        return cls(
            ncols=data.shape[1],
            nrows=data.shape[0],
            x_origin=float(x_origin),
            y_origin=float(y_origin),
            cell_size=float(cell_size),
            values=np.where(mask, 0.0, np.nan_to_num(data)),
            missing=mask,
        )

    @property
    def georef(self) -> tuple:
        return (self.ncols, self.nrows, self.x_origin, self.y_origin, self.cell_size)

    def same_georef(self, other: "Grid") -> bool:
        return self.georef == other.georef

    def as_masked(self) -> np.ndarray:
        """Values as a float array with NaN in missing cells (copy)."""
        out = self.values.copy()
        out[self.missing] = np.nan
        return out

    def to_list(self) -> list:
        """Row-major (bottom row first) cell list with ``None`` for missing cells."""
        return [
            None if m else float(v)
            for v, m in zip(self.values.ravel(), self.missing.ravel())
        ]

    def cell_centers(self) -> tuple[np.ndarray, np.ndarray]:
        """Longitude and latitude of every cell center, each shaped like ``values``."""
        xs = self.x_origin + (np.arange(self.ncols) + 0.5) * self.cell_size
        ys = self.y_origin + (np.arange(self.nrows) + 0.5) * self.cell_size
        return np.meshgrid(xs, ys)

    def __eq__(self, other):
        if not isinstance(other, Grid):
            return NotImplemented
        return (
            self.same_georef(other)
            and np.array_equal(self.missing, other.missing)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class Scene:
    pollutant: str
    timestamp: dt.date
    data: Grid
    qa: Grid | None = None

    def __post_init__(self):
        if self.pollutant not in POLLUTANTS:
            raise ValueError(f"unknown pollutant {self.pollutant!r}")
        if self.qa is not None:
            if not self.qa.same_georef(self.data):
                raise GeoreferenceMismatch(
                    f"{self.pollutant} {self.timestamp}: qa band georeference differs from data"
                )
            kept = self.qa.values[~self.qa.missing]
            if kept.size and (kept.min() < 0.0 or kept.max() > 1.0):
                raise ValueError(f"{self.pollutant} {self.timestamp}: qa values outside [0, 1]")


def _default_thresholds() -> dict:
    return {"NO2": 0.75, "SO2": 0.5, "CO": 0.5, "AER_AI": 0.8, "O3": None, "HCHO": 0.5}


@dataclass(frozen=True)
class QaPolicy:
    """Per-pollutant minimum qa value; ``None`` disables filtering."""

    thresholds: Mapping[str, float | None] = field(default_factory=_default_thresholds)

    def __post_init__(self):
        for pollutant, threshold in self.thresholds.items():
            if threshold is not None and not 0.0 <= threshold <= 1.0:
                raise ValueError(f"qa threshold for {pollutant} must lie in [0, 1]")

    def with_overrides(self, overrides: Mapping[str, float | None] | None) -> "QaPolicy":
        merged = dict(self.thresholds)
        merged.update(overrides or {})
        return QaPolicy(merged)

    def threshold(self, pollutant: str) -> float | None:
        return self.thresholds.get(pollutant)


# ---------------------------------------------------------------------------
# ASCII grid format


def _parse_number(token: str, what: str) -> float:
    try:
        value = float(token)
    except ValueError:
        raise NonNumericCell(f"{what}: {token!r} is not a number") from None
    if not math.isfinite(value):
        raise NonNumericCell(f"{what}: {token!r} is not finite")
    return value


def parse_grid(stream: TextIO | str) -> Grid:
    """Parse an ESRI ASCII grid.

    Header keys are case-insensitive and ``NODATA_value`` may be omitted
    (defaults to -9999).  The file lists the top row first; the returned grid
    is flipped so that row 0 is the southernmost.
    """
    text = stream if isinstance(stream, str) else stream.read()
    lines = text.splitlines()
    header: dict[str, str] = {}
    pos = 0
    while pos < len(lines):
        parts = lines[pos].split()
        if not parts:
            pos += 1
            continue
        key = parts[0].lower()
        if not key[0].isalpha():
            break
        if key not in _HEADER_KEYS:
            raise MalformedHeader(f"unknown header key {parts[0]!r}")
        if key in header:
            raise MalformedHeader(f"duplicate header key {parts[0]!r}")
        if len(parts) != 2:
            raise MalformedHeader(f"header line {pos + 1} must be '<key> <value>'")
        header[key] = parts[1]
        pos += 1
    for key in _REQUIRED_KEYS:
        if key not in header:
            raise MalformedHeader(f"missing header key {key!r}")

    try:
        ncols = int(header["ncols"])
        nrows = int(header["nrows"])
        x0 = float(header["xllcorner"])
        y0 = float(header["yllcorner"])
        cell = float(header["cellsize"])
        nodata = float(header.get("nodata_value", DEFAULT_NODATA))
    except ValueError as exc:
        raise MalformedHeader(f"bad header value: {exc}") from None
    if ncols < 1 or nrows < 1 or not cell > 0:
        raise MalformedHeader("ncols, nrows and cellsize must be positive")

    tokens = " ".join(lines[pos:]).split()
    if len(tokens) != ncols * nrows:
        raise DimensionMismatch(f"expected {ncols * nrows} cells, found {len(tokens)}")
    flat = np.array([_parse_number(t, f"cell {i}") for i, t in enumerate(tokens)], dtype=np.float64)
    top_down = flat.reshape(nrows, ncols)
    values = top_down[::-1].copy()
    missing = values == nodata
    return Grid(ncols, nrows, x0, y0, cell, values, missing)


def _fmt(value: float) -> str:
    return repr(float(value))


def serialize_grid(grid: Grid, nodata: float = DEFAULT_NODATA) -> str:
    """Render a grid as ESRI ASCII text (top row first, shortest lossless reals)."""
    if np.any(grid.values[~grid.missing] == nodata):
        raise ValueError(f"a data cell equals the NODATA value {nodata}")
    out = io.StringIO()
    out.write(f"ncols {grid.ncols}\n")
    out.write(f"nrows {grid.nrows}\n")
    out.write(f"xllcorner {_fmt(grid.x_origin)}\n")
    out.write(f"yllcorner {_fmt(grid.y_origin)}\n")
    out.write(f"cellsize {_fmt(grid.cell_size)}\n")
    out.write(f"NODATA_value {_fmt(nodata)}\n")
    for i in range(grid.nrows - 1, -1, -1):
        row = (
            _fmt(nodata) if grid.missing[i, j] else _fmt(grid.values[i, j])
            for j in range(grid.ncols)
        )
        out.write(" ".join(row))
        out.write("\n")
    return out.getvalue()


def read_grid(path) -> Grid:
    with open(path, encoding="utf-8") as fh:
        return parse_grid(fh)


def write_grid(path, grid: Grid) -> None:
    Path(path).write_text(serialize_grid(grid), encoding="utf-8")


# ---------------------------------------------------------------------------
# scenes


def qa_filter(scene: Scene, policy: QaPolicy | None = None) -> Grid:
    """Mask every cell whose qa value is missing or below the pollutant's threshold."""
    policy = policy or QaPolicy()
    threshold = policy.threshold(scene.pollutant)
    if threshold is None:
        return scene.data
    if scene.qa is None:
        raise MissingQaBand(f"{scene.pollutant} {scene.timestamp}: qa band required (threshold {threshold})")
    keep = ~scene.qa.missing & (scene.qa.values >= threshold)
    data = scene.data
    return Grid(
        data.ncols, data.nrows, data.x_origin, data.y_origin, data.cell_size,
        data.values, data.missing | ~keep,
    )


def composite_mean(grids: Sequence[Grid]) -> Grid:
    """Cell-wise mean of the non-missing values across ``grids``.

    Values are sorted per cell before accumulation, which makes the result
    independent of scene order, and the sum is taken relative to the cell's
    smallest value so that a cell holding the same value in every scene
    reproduces it exactly.
    """
    grids = list(grids)
    if not grids:
        raise EmptyInput("no scenes to composite")
    first = grids[0]
    for g in grids[1:]:
        if not g.same_georef(first):
            raise GeoreferenceMismatch(f"grid {g.georef} does not match {first.georef}")
    if len(grids) == 1:
        return first

    stack = np.stack([g.values for g in grids])
    mask = np.stack([g.missing for g in grids])
    stack = np.where(mask, np.inf, stack)
    stack.sort(axis=0)
    count = (~mask).sum(axis=0)
    empty = count == 0
    lowest = np.where(empty, 0.0, stack[0])
    offsets = np.where(np.isfinite(stack), stack - lowest, 0.0)
    total = np.zeros_like(lowest)
    for layer in offsets:
        total += layer
    mean = lowest + total / np.maximum(count, 1)
    return Grid(first.ncols, first.nrows, first.x_origin, first.y_origin, first.cell_size, mean, empty)


def scan_scene_dir(directory) -> list[Scene]:
    """Load every ``<pollutant>_<YYYY-MM-DD>[_qa].asc`` file in ``directory``.

    Scenes come back sorted by (pollutant order, date).  A qa file without a
    matching data file is an error; unrelated files are skipped.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise EmptyInput(f"scene directory {directory} does not exist")
    data_files: dict[tuple[str, str], Path] = {}
    qa_files: dict[tuple[str, str], Path] = {}
    for path in sorted(directory.iterdir()):
        m = SCENE_FILENAME.match(path.name)
        if m is None:
            if path.suffix == ".asc":
                log.warning("skipping %s: name does not follow <pollutant>_<date>[_qa].asc", path.name)
            continue
        key = (m["pollutant"], m["date"])
        (qa_files if m["qa"] else data_files)[key] = path
    orphans = sorted(set(qa_files) - set(data_files))
    if orphans:
        raise EmptyInput(f"qa band without data band: {orphans[0][0]}_{orphans[0][1]}")

    scenes = []
    order = {p: i for i, p in enumerate(POLLUTANTS)}
    for pollutant, date in sorted(data_files, key=lambda k: (order[k[0]], k[1])):
        try:
            stamp = dt.date.fromisoformat(date)
        except ValueError:
            raise MalformedHeader(f"bad date in file name {data_files[pollutant, date].name}") from None
        data = read_grid(data_files[pollutant, date])
        qa_path = qa_files.get((pollutant, date))
        qa = read_grid(qa_path) if qa_path else None
        scenes.append(Scene(pollutant, stamp, data, qa))
    return scenes


def composite_scenes(scenes: Iterable[Scene], policy: QaPolicy | None = None) -> dict[str, Grid]:
    """QA-filter each scene and composite per pollutant (canonical pollutant order)."""
    policy = policy or QaPolicy()
    grouped: dict[str, list[Grid]] = {}
    for scene in scenes:
        grouped.setdefault(scene.pollutant, []).append(qa_filter(scene, policy))
    return {p: composite_mean(grouped[p]) for p in POLLUTANTS if p in grouped}
