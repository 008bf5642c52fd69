"""Administrative boundaries and zonal means.

Polygons are handled in plain lon/lat coordinates as if they were planar,
which is adequate at district scale.  A grid cell belongs to a region when
its center does.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .errors import (
    DuplicateRegionName,
    GeoreferenceMismatch,
    InvalidRing,
    MissingNameProperty,
    NotAFeatureCollection,
    UnsupportedGeometryType,
)
from .raster import POLLUTANTS, Grid
from .table import FeatureTable


@dataclass(frozen=True, eq=False)
class Region:
    """A named (multi)polygon.

    ``polygons`` holds one entry per part; each part is a list of rings
    (outer ring first, then holes), each ring an ``(m, 2)`` array of
    ``(lon, lat)`` vertices with the first vertex repeated at the end.
    """

    name: str
    polygons: tuple

    def __post_init__(self):
        if not self.name:
            raise MissingNameProperty("region name must be non-empty")
        parts = []
        for polygon in self.polygons:
            rings = []
            for ring in polygon:
                arr = np.array(ring, dtype=np.float64).reshape(-1, 2)
                if len(arr) < 4 or not np.array_equal(arr[0], arr[-1]):
                    raise InvalidRing(f"{self.name}: ring must be closed with at least 4 vertices")
                if not np.all(np.isfinite(arr)):
                    raise InvalidRing(f"{self.name}: non-finite coordinate")
                arr.flags.writeable = False
                rings.append(arr)
            if not rings:
                raise InvalidRing(f"{self.name}: polygon without rings")
            parts.append(tuple(rings))
        object.__setattr__(self, "polygons", tuple(parts))

    @property
    def rings(self) -> tuple:
        """Alias for ``polygons``."""
        return self.polygons

    def bounds(self) -> tuple[float, float, float, float]:
        pts = np.concatenate([poly[0] for poly in self.polygons])
        return (pts[:, 0].min(), pts[:, 1].min(), pts[:, 0].max(), pts[:, 1].max())


def _close_ring(ring, name: str) -> list:
    ring = [tuple(float(c) for c in pt[:2]) for pt in ring]
    if ring and ring[0] != ring[-1]:
        warnings.warn(f"region {name!r}: ring not closed, closing it", stacklevel=3)
        ring.append(ring[0])
    return ring


def parse_regions(stream, name_property: str = "name") -> list[Region]:
    """Read a GeoJSON FeatureCollection of Polygon / MultiPolygon features."""
    text = stream if isinstance(stream, str) else stream.read()
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise NotAFeatureCollection(f"invalid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("type") != "FeatureCollection":
        raise NotAFeatureCollection("top-level object must be a FeatureCollection")
    features = doc.get("features")
    if not isinstance(features, list):
        raise NotAFeatureCollection("FeatureCollection has no features list")

    regions = []
    seen = set()
    for index, feature in enumerate(features):
        props = feature.get("properties") or {}
        name = props.get(name_property)
        if name is None or str(name) == "":
            raise MissingNameProperty(f"feature {index} has no {name_property!r} property")
        name = str(name)
        if name in seen:
            raise DuplicateRegionName(f"duplicate region name {name!r}")
        seen.add(name)

        geom = feature.get("geometry") or {}
        kind = geom.get("type")
        coords = geom.get("coordinates")
        if kind == "Polygon":
            parts = [coords]
        elif kind == "MultiPolygon":
            parts = coords
        else:
            raise UnsupportedGeometryType(f"feature {name!r}: geometry type {kind!r} is not a polygon")
        polygons = [[_close_ring(ring, name) for ring in part] for part in parts]
        regions.append(Region(name, tuple(polygons)))
    return regions


def _crossings(x: np.ndarray, y: np.ndarray, ring: np.ndarray) -> np.ndarray:
    """Parity of ray crossings to the east for each point.

    Edges are half-open in y (an edge spans ``min(y) <= py < max(y)``) and a
    point counts as crossing only when strictly west of the edge, so two
    polygons sharing an edge never both claim a point on it.
    """
    inside = np.zeros(x.shape, dtype=bool)
    xi, yi = ring[:-1, 0], ring[:-1, 1]
    xj, yj = ring[1:, 0], ring[1:, 1]
    for ax, ay, bx, by in zip(xi, yi, xj, yj):
        if ay == by:
            continue
        spans = (ay > y) != (by > y)
        if not spans.any():
            continue
        if ay > by:
            # interpolate from the lower end so a point level with it gets x exactly
            ax, ay, bx, by = bx, by, ax, ay
        x_cross = ax + (y - ay) * (bx - ax) / (by - ay)
        inside ^= spans & (x < x_cross)
    return inside


def points_in_region(x, y, region: Region) -> np.ndarray:
    """Vectorised :func:`point_in_region` for arrays of coordinates."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    result = np.zeros(x.shape, dtype=bool)
    for polygon in region.polygons:
        parity = np.zeros(x.shape, dtype=bool)
        for ring in polygon:
            parity ^= _crossings(x, y, ring)
        result |= parity
    return result


def point_in_region(p: tuple[float, float], region: Region) -> bool:
    """Even-odd test: inside an outer ring and outside its holes."""
    return bool(points_in_region(np.array([p[0]]), np.array([p[1]]), region)[0])


def region_mask(grid: Grid, region: Region) -> np.ndarray:
    """Boolean array marking cells whose center lies in ``region``."""
    cx, cy = grid.cell_centers()
    west, south, east, north = region.bounds()
    mask = np.zeros(cx.shape, dtype=bool)
    near = (cx >= west) & (cx <= east) & (cy >= south) & (cy <= north)
    if near.any():
        mask[near] = points_in_region(cx[near], cy[near], region)
    return mask


def masked_mean(values: np.ndarray) -> float | None:
    """Mean taken relative to the first value, exact for constant inputs."""
    if values.size == 0:
        return None
    ref = values[0]
    return float(ref + math.fsum(values - ref) / values.size)


def zonal_mean(grid: Grid, region: Region) -> float | None:
    """Mean of the non-missing cells centered in ``region``; ``None`` if there are none."""
    mask = region_mask(grid, region) & ~grid.missing
    return masked_mean(grid.values[mask])


def build_feature_table(composites: Mapping[str, Grid], regions: Sequence[Region]) -> FeatureTable:
    """Zonal means of every composite over every region.

    Columns follow the canonical pollutant order, restricted to the
    pollutants present in ``composites``.
    """
    columns = [p for p in POLLUTANTS if p in composites]
    unknown = set(composites) - set(POLLUTANTS)
    if unknown:
        raise ValueError(f"unknown pollutants {sorted(unknown)}")
    grids = [composites[p] for p in columns]
    for g in grids[1:]:
        if not g.same_georef(grids[0]):
            raise GeoreferenceMismatch("composites do not share one georeference")

    cells = np.full((len(regions), len(columns)), np.nan)
    for i, region in enumerate(regions):
        inside = region_mask(grids[0], region) if grids else None
        for j, grid in enumerate(grids):
            value = masked_mean(grid.values[inside & ~grid.missing])
            if value is not None:
                cells[i, j] = value
    return FeatureTable([r.name for r in regions], columns, cells)
