"""Coordinates, great-circle distance, the national analysis grid and
point-in-region lookup.

All grid work goes through one equirectangular projection with a fixed
standard parallel, so a cell index is a pure function of a coordinate and
the :class:`ProjectionParams` in force.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from functools import total_ordering
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from .errors import ParameterError, ValidationError

EARTH_RADIUS_M = 6_371_008.8


@dataclass(frozen=True, slots=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ParameterError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ParameterError(f"latitude {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon < 180.0:
            raise ParameterError(f"longitude {self.lon} outside [-180, 180)")


@dataclass(frozen=True)
class ProjectionParams:
    standard_parallel: float = 35.0
    earth_radius: float = EARTH_RADIUS_M
    cell_size: float = 100.0

    def __post_init__(self):
        if not self.cell_size > 0:
            raise ParameterError("cell_size must be positive")
        if not abs(self.standard_parallel) < 90:
            raise ParameterError("|standard_parallel| must be < 90")
        if not self.earth_radius > 0:
            raise ParameterError("earth_radius must be positive")

    @property
    def x_scale(self) -> float:
        """Metres of easting per radian of longitude."""
        return self.earth_radius * math.cos(math.radians(self.standard_parallel))

    @property
    def cell_area(self) -> float:
        return self.cell_size * self.cell_size


@total_ordering
@dataclass(frozen=True, slots=True)
class GridIndex:
    """Integer cell address; ``i`` counts east, ``j`` counts north.

    Cells order by row first (``j``) and then column (``i``).
    """

    i: int
    j: int

    def __iter__(self) -> Iterator[int]:
        yield self.i
        yield self.j

    def __lt__(self, other: "GridIndex") -> bool:
        if not isinstance(other, GridIndex):
            return NotImplemented
        return (self.j, self.i) < (other.j, other.i)

    def offset(self, di: int, dj: int) -> "GridIndex":
        return GridIndex(self.i + di, self.j + dj)


class GridPopulation(dict):
    """Mapping of :class:`GridIndex` to a non-negative user weight.

    Absent cells read as zero without being inserted.
    """

    def __missing__(self, key):
        return 0.0

    def __setitem__(self, key, value):
        if value < 0:
            raise ValidationError(f"negative population {value} for {key}")
        super().__setitem__(key, value)

    def total(self) -> float:
        return float(sum(self.values()))


class RegionLevel(str, enum.Enum):
    COUNTY = "county"
    CITY = "city"
    PROVINCE = "province"


@dataclass(eq=False)
class Region:
    """An administrative area made of one or more simple polygons.

    Each polygon is a sequence of closed rings of ``(lon, lat)`` vertices
    (GeoJSON axis order). Extra rings of a polygon act as holes under the
    even-odd rule.
    """

    region_id: str
    name: str
    level: RegionLevel
    polygons: list[list[np.ndarray]]
    tier: Optional[int] = None
    bbox: tuple[float, float, float, float] = field(init=False)

    def __post_init__(self):
        self.level = RegionLevel(self.level)
        if not self.polygons:
            raise ValidationError(f"region {self.region_id} has no polygons")
        polys = []
        for poly in self.polygons:
            rings = []
            for ring in poly:
                arr = np.asarray(ring, dtype=float)
                if arr.ndim != 2 or arr.shape[1] != 2 or len(arr) < 4:
                    raise ValidationError(
                        f"region {self.region_id}: ring needs >= 4 (lon, lat) vertices"
                    )
                if not np.array_equal(arr[0], arr[-1]):
                    raise ValidationError(f"region {self.region_id}: ring is not closed")
                rings.append(arr)
            polys.append(rings)
        self.polygons = polys
        allv = np.concatenate([r for p in polys for r in p])
        self.bbox = (
            float(allv[:, 0].min()),
            float(allv[:, 1].min()),
            float(allv[:, 0].max()),
            float(allv[:, 1].max()),
        )

    def contains(self, lat: np.ndarray, lon: np.ndarray) -> np.ndarray:
        """Boolean mask of points inside or on the boundary of this region."""
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        out = np.zeros(lat.shape, dtype=bool)
        x0, y0, x1, y1 = self.bbox
        cand = (lon >= x0) & (lon <= x1) & (lat >= y0) & (lat <= y1)
        if not cand.any():
            return out
        idx = np.flatnonzero(cand)
        px, py = lon[idx], lat[idx]
        hit = np.zeros(len(idx), dtype=bool)
        for poly in self.polygons:
            inside = np.zeros(len(idx), dtype=bool)
            edge = np.zeros(len(idx), dtype=bool)
            for ring in poly:
                inside ^= _even_odd(ring, px, py)
                edge |= _on_ring(ring, px, py)
            hit |= inside | edge
        out[idx] = hit
        return out


def _even_odd(ring: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    inside = np.zeros(px.shape, dtype=bool)
    xs, ys = ring[:, 0], ring[:, 1]
    for k in range(len(ring) - 1):
        xi, yi, xj, yj = xs[k], ys[k], xs[k + 1], ys[k + 1]
        crosses = (yi > py) != (yj > py)
        if not crosses.any():
            continue
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = (xj - xi) * (py - yi) / (yj - yi) + xi
        inside ^= crosses & (px < xint)
    return inside


def _on_ring(ring: np.ndarray, px: np.ndarray, py: np.ndarray) -> np.ndarray:
    on = np.zeros(px.shape, dtype=bool)
    xs, ys = ring[:, 0], ring[:, 1]
    for k in range(len(ring) - 1):
        xi, yi, xj, yj = xs[k], ys[k], xs[k + 1], ys[k + 1]
        cross = (xj - xi) * (py - yi) - (yj - yi) * (px - xi)
        on |= (
            (cross == 0)
            & (px >= min(xi, xj))
            & (px <= max(xi, xj))
            & (py >= min(yi, yj))
            & (py <= max(yi, yj))
        )
    return on


# -- distance ---------------------------------------------------------------


def haversine_distance(a: GeoPoint, b: GeoPoint, radius: float = EARTH_RADIUS_M) -> float:
    """Great-circle distance in metres on a sphere of ``radius``."""
    p1, p2 = math.radians(a.lat), math.radians(b.lat)
    dphi = p2 - p1
    dlmb = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(p1) * math.cos(p2) * math.sin(dlmb / 2) ** 2
    return 2 * radius * math.asin(math.sqrt(min(1.0, h)))


def haversine_m(lat1, lon1, lat2, lon2, radius: float = EARTH_RADIUS_M) -> np.ndarray:
    """Vectorised :func:`haversine_distance` over broadcastable degree arrays."""
    p1 = np.radians(lat1)
    p2 = np.radians(lat2)
    dphi = p2 - p1
    dlmb = np.radians(np.subtract(lon2, lon1))
    h = np.sin(dphi / 2) ** 2 + np.cos(p1) * np.cos(p2) * np.sin(dlmb / 2) ** 2
    return 2 * radius * np.arcsin(np.sqrt(np.minimum(1.0, h)))


# -- grid -------------------------------------------------------------------


def cell_of(p: GeoPoint, proj: ProjectionParams = ProjectionParams()) -> GridIndex:
    x = proj.x_scale * math.radians(p.lon)
    y = proj.earth_radius * math.radians(p.lat)
    return GridIndex(math.floor(x / proj.cell_size), math.floor(y / proj.cell_size))


def cells_of(lat, lon, proj: ProjectionParams = ProjectionParams()) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`cell_of`; returns ``(i, j)`` int64 arrays."""
    x = proj.x_scale * np.radians(lon)
    y = proj.earth_radius * np.radians(lat)
    return (
        np.floor(x / proj.cell_size).astype(np.int64),
        np.floor(y / proj.cell_size).astype(np.int64),
    )


def cell_corners(cell: GridIndex, proj: ProjectionParams = ProjectionParams()) -> list[tuple[float, float]]:
    """Closed ring of the cell's corners as ``(lon, lat)`` pairs, counter-clockwise."""
    s = proj.cell_size
    xs = (cell.i * s, (cell.i + 1) * s)
    ys = (cell.j * s, (cell.j + 1) * s)
    lon = [math.degrees(x / proj.x_scale) for x in xs]
    lat = [math.degrees(y / proj.earth_radius) for y in ys]
    return [
        (lon[0], lat[0]),
        (lon[1], lat[0]),
        (lon[1], lat[1]),
        (lon[0], lat[1]),
        (lon[0], lat[0]),
    ]


def cell_center(cell: GridIndex, proj: ProjectionParams = ProjectionParams()) -> GeoPoint:
    s = proj.cell_size
    lon = math.degrees((cell.i + 0.5) * s / proj.x_scale)
    lat = math.degrees((cell.j + 0.5) * s / proj.earth_radius)
    return GeoPoint(lat, lon)


def cell_window(center: GridIndex, k: int) -> list[GridIndex]:
    """The ``k`` x ``k`` block of cells centred on ``center``, in grid order."""
    if not isinstance(k, (int, np.integer)) or k < 1 or k % 2 == 0:
        raise ParameterError(f"window size must be a positive odd integer, got {k!r}")
    r = k // 2
    return [
        GridIndex(center.i + di, center.j + dj)
        for dj in range(-r, r + 1)
        for di in range(-r, r + 1)
    ]


# -- regions ----------------------------------------------------------------


def assign_region(p: GeoPoint, regions: Sequence[Region]) -> Optional[str]:
    """Region id containing ``p``; boundary points go to the lowest id."""
    idx = assign_regions(np.array([p.lat]), np.array([p.lon]), regions)[0]
    return None if idx < 0 else sorted(r.region_id for r in regions)[idx]


def assign_regions(lat, lon, regions: Sequence[Region]) -> np.ndarray:
    """Index into ``sorted(region_ids)`` for every point, ``-1`` when outside.

    Regions are probed in ascending id order and the first hit wins, which
    hands boundary points to the lowest id.
    """
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    out = np.full(lat.shape, -1, dtype=np.int64)
    for k, region in enumerate(sorted(regions, key=lambda r: r.region_id)):
        todo = np.flatnonzero(out < 0)
        if not len(todo):
            break
        hit = region.contains(lat[todo], lon[todo])
        out[todo[hit]] = k
    return out


def regions_from_geojson(doc: dict | str) -> list[Region]:
    if isinstance(doc, str):
        doc = json.loads(doc)
    if doc.get("type") != "FeatureCollection":
        raise ValidationError("region input must be a GeoJSON FeatureCollection")
    regions = []
    seen = set()
    for feat in doc.get("features", []):
        props = feat.get("properties") or {}
        geom = feat.get("geometry") or {}
        try:
            rid = str(props["region_id"])
            name = str(props.get("name", rid))
            level = RegionLevel(props["level"])
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad region properties {props!r}: {exc}") from None
        if rid in seen:
            raise ValidationError(f"duplicate region_id {rid}")
        seen.add(rid)
        if geom.get("type") == "Polygon":
            polys = [geom["coordinates"]]
        elif geom.get("type") == "MultiPolygon":
            polys = geom["coordinates"]
        else:
            raise ValidationError(f"region {rid}: unsupported geometry {geom.get('type')!r}")
        tier = props.get("tier")
        regions.append(
            Region(rid, name, level, [[r for r in poly] for poly in polys],
                   tier=None if tier is None else int(tier))
        )
    return regions


def regions_to_geojson(regions: Iterable[Region]) -> dict:
    features = []
    for r in sorted(regions, key=lambda r: r.region_id):
        props = {"region_id": r.region_id, "name": r.name, "level": r.level.value}
        if r.tier is not None:
            props["tier"] = r.tier
        coords = [[ring.tolist() for ring in poly] for poly in r.polygons]
        geom = (
            {"type": "Polygon", "coordinates": coords[0]}
            if len(coords) == 1
            else {"type": "MultiPolygon", "coordinates": coords}
        )
        features.append({"type": "Feature", "properties": props, "geometry": geom})
    return {"type": "FeatureCollection", "features": features}


def load_regions(path) -> list[Region]:
    with open(path, encoding="utf-8") as fh:
        return regions_from_geojson(json.load(fh))


def regions_at(regions: Iterable[Region], level: RegionLevel | str) -> list[Region]:
    level = RegionLevel(level)
    return sorted((r for r in regions if r.level == level), key=lambda r: r.region_id)
