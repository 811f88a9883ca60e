"""Raster and vector exports: dot-density PPM, vacancy GeoJSON, delimited tables."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError
from .geo import GeoPoint, ProjectionParams, cell_corners
from .vacancy import VacancyRecord, Verdict


@dataclass(frozen=True)
class RasterSpec:
    """Image frame over a lat/lon box; height follows the projected aspect ratio."""

    bbox: tuple  # (south-west GeoPoint, north-east GeoPoint)
    width_px: int
    scaling: str = "log"
    proj: ProjectionParams = field(default_factory=ProjectionParams)

    def __post_init__(self):
        lo, hi = self.bbox
        if not (hi.lat > lo.lat and hi.lon > lo.lon):
            raise ParameterError("raster bbox is degenerate")
        if not isinstance(self.width_px, (int, np.integer)) or self.width_px < 1:
            raise ParameterError("width_px must be an integer >= 1")
        if self.scaling != "log":
            raise ParameterError(f"unsupported scaling {self.scaling!r}")

    @property
    def height_px(self) -> int:
        lo, hi = self.bbox
        dx = self.proj.x_scale * math.radians(hi.lon - lo.lon)
        dy = self.proj.earth_radius * math.radians(hi.lat - lo.lat)
        return max(1, round(self.width_px * dy / dx))

    def pixel_counts(self, lat, lon) -> np.ndarray:
        """Points per pixel, row 0 at the north edge; points off the frame are dropped."""
        lo, hi = self.bbox
        w, h = self.width_px, self.height_px
        lat = np.asarray(lat, dtype=float)
        lon = np.asarray(lon, dtype=float)
        inside = (lat >= lo.lat) & (lat <= hi.lat) & (lon >= lo.lon) & (lon <= hi.lon)
        col = np.floor((lon[inside] - lo.lon) / (hi.lon - lo.lon) * w).astype(np.int64)
        row = np.floor((hi.lat - lat[inside]) / (hi.lat - lo.lat) * h).astype(np.int64)
        col = np.minimum(col, w - 1)
        row = np.minimum(row, h - 1)
        return np.bincount(row * w + col, minlength=w * h).reshape(h, w)


def lightness(counts: np.ndarray) -> np.ndarray:
    """``floor(255 * ln(1 + c) / ln(1 + c_max))`` per pixel; all zero when ``c_max`` is 0.

    Truncation puts a single point next to a nine-point pixel at 76.
    """
    counts = np.asarray(counts, dtype=float)
    cmax = counts.max() if counts.size else 0.0
    if cmax <= 0:
        return np.zeros(counts.shape, dtype=np.uint8)
    return np.floor(255.0 * np.log1p(counts) / math.log1p(cmax) + 1e-9).astype(np.uint8)


def _coords(points) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(points, tuple) and len(points) == 2 and not isinstance(points[0], GeoPoint):
        return np.asarray(points[0], dtype=float), np.asarray(points[1], dtype=float)
    points = list(points)
    return (np.array([p.lat for p in points], dtype=float),
            np.array([p.lon for p in points], dtype=float))


def dot_density_rgb(home_points, work_points, spec: RasterSpec) -> np.ndarray:
    """``(h, w, 3)`` uint8 image: homes in red, work places in blue."""
    red = lightness(spec.pixel_counts(*_coords(home_points)))
    blue = lightness(spec.pixel_counts(*_coords(work_points)))
    img = np.zeros(red.shape + (3,), dtype=np.uint8)
    img[..., 0] = red
    img[..., 2] = blue
    return img


def render_dot_density(home_points, work_points, spec: RasterSpec) -> bytes:
    """Binary PPM (P6). Point collections are GeoPoint iterables or ``(lat, lon)`` arrays."""
    img = dot_density_rgb(home_points, work_points, spec)
    h, w, _ = img.shape
    return f"P6\n{w} {h}\n255\n".encode("ascii") + img.tobytes()


def read_ppm(data: bytes) -> np.ndarray:
    magic, dims, maxval, body = data.split(b"\n", 3)
    if magic != b"P6" or maxval != b"255":
        raise ParameterError("not an 8-bit P6 image")
    w, h = (int(x) for x in dims.split())
    return np.frombuffer(body, dtype=np.uint8).reshape(h, w, 3)


def export_vacancy_geojson(records: Iterable[VacancyRecord],
                           proj: ProjectionParams = ProjectionParams()) -> str:
    """One cell polygon per distinct top cell of every Vacant record."""
    features = []
    vacant = sorted((r for r in records if r.verdict is Verdict.VACANT),
                    key=lambda r: (r.poi.name, r.center_cell))
    for r in vacant:
        for cell in sorted({c for c, _ in r.top_cells}):
            features.append({
                "type": "Feature",
                "properties": {"poi_name": r.poi.name, "top_sum": r.top_sum,
                               "verdict": r.verdict.value, "cell_i": cell.i, "cell_j": cell.j},
                "geometry": {"type": "Polygon",
                             "coordinates": [[list(c) for c in cell_corners(cell, proj)]]},
            })
    return json.dumps({"type": "FeatureCollection", "features": features},
                      ensure_ascii=False, separators=(",", ":"))


def export_table(rows: Iterable[Sequence], schema: Sequence[str]) -> str:
    """Header plus rows as RFC 4180 text with CRLF line breaks."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(schema)
    for row in rows:
        if len(row) != len(schema):
            raise ParameterError(f"row {row!r} does not match schema {list(schema)}")
        w.writerow(row)
    return buf.getvalue()


def parse_table(text: str) -> tuple[list[str], list[list[str]]]:
    rows = list(csv.reader(io.StringIO(text, newline="")))
    return (rows[0], rows[1:]) if rows else ([], [])
