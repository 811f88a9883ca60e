"""Vacant housing detection from binned home locations.

Every residential POI is judged by the people living around it: the
``window_k`` x ``window_k`` cells centred on the POI's cell are ranked by
home count and the ``top_k`` largest are summed. Too few people means a
site that is new or tiny (Excluded), a moderate number means Vacant,
anything at or above the upper threshold is Occupied.
"""

from __future__ import annotations

import csv
import enum
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ValidationError
from .geo import (
    GeoPoint,
    GridIndex,
    GridPopulation,
    ProjectionParams,
    Region,
    assign_regions,
    cell_of,
    cells_of,
    cell_window,
    haversine_m,
)
from .ingest import Poi, PoiCategory
from .locus import HomeWorkAssignment


class Verdict(str, enum.Enum):
    VACANT = "Vacant"
    OCCUPIED = "Occupied"
    EXCLUDED = "Excluded"


@dataclass(frozen=True)
class VacancyParams:
    window_k: int = 5
    top_k: int = 6
    upper_threshold: float = 300
    lower_threshold: float = 60
    villa_radius: float = 1000.0

    def __post_init__(self):
        if not isinstance(self.window_k, (int, np.integer)) or self.window_k < 1 or self.window_k % 2 == 0:
            raise ParameterError("window_k must be a positive odd integer")
        if not isinstance(self.top_k, (int, np.integer)) or not 1 <= self.top_k <= self.window_k ** 2:
            raise ParameterError("top_k must lie in [1, window_k**2]")
        if not 0 <= self.lower_threshold < self.upper_threshold:
            raise ParameterError("thresholds must satisfy 0 <= lower < upper")
        if self.villa_radius < 0:
            raise ParameterError("villa_radius must be >= 0")

    def verdict(self, top_sum: float) -> Verdict:
        if top_sum <= self.lower_threshold:
            return Verdict.EXCLUDED
        if top_sum < self.upper_threshold:
            return Verdict.VACANT
        return Verdict.OCCUPIED


@dataclass(frozen=True)
class CapacityParams:
    floor_area_ratio: float = 1.0
    living_area_per_capita: float = 30.0
    sampled_users: float = 7.7e8
    total_population: float = 1.36e9
    vacancy_fraction: float = 0.25

    def __post_init__(self):
        for name in ("floor_area_ratio", "living_area_per_capita", "sampled_users", "total_population"):
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive")
        if not 0 < self.vacancy_fraction < 1:
            raise ParameterError("vacancy_fraction must lie in (0, 1)")


@dataclass(frozen=True)
class VacancyRecord:
    poi: Poi
    center_cell: GridIndex
    top_cells: tuple  # ((GridIndex, count), ...), length top_k
    top_sum: float
    verdict: Verdict


@dataclass(frozen=True)
class ChenIndexInputs:
    supply_S: float
    demand_D: float
    existing_n: float

    def __post_init__(self):
        if not self.existing_n > 0:
            raise ParameterError("existing_n must be positive")


# -- POI filtering and binning ----------------------------------------------


def exclude_villa_adjacent(pois: Sequence[Poi], radius: float = 1000.0) -> list[Poi]:
    """Residential POIs farther than ``radius`` from every villa."""
    residential = [p for p in pois if p.category is PoiCategory.RESIDENTIAL]
    villas = [p for p in pois if p.category is PoiCategory.VILLA]
    if not villas or not residential:
        return residential
    vlat = np.array([v.location.lat for v in villas])
    vlon = np.array([v.location.lon for v in villas])
    keep = []
    for p in residential:
        d = haversine_m(p.location.lat, p.location.lon, vlat, vlon)
        if (d > radius).all():
            keep.append(p)
    return keep


def bin_home_arrays(lat, lon, weight=None, proj: ProjectionParams = ProjectionParams()) -> GridPopulation:
    """Add up ``weight`` (default 1) per grid cell; NaN coordinates are skipped."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    w = np.ones(lat.shape) if weight is None else np.asarray(weight, dtype=float)
    ok = ~(np.isnan(lat) | np.isnan(lon))
    i, j = cells_of(lat[ok], lon[ok], proj)
    keys = np.stack([j, i], axis=1)
    uniq, inv = np.unique(keys, axis=0, return_inverse=True)
    sums = np.bincount(inv.ravel(), weights=w[ok], minlength=len(uniq))
    grid = GridPopulation()
    for (jj, ii), s in zip(uniq.tolist(), sums.tolist()):
        grid[GridIndex(ii, jj)] = s
    return grid


def bin_homes(assignments: Iterable[HomeWorkAssignment],
              proj: ProjectionParams = ProjectionParams()) -> GridPopulation:
    lat, lon, w = [], [], []
    for a in assignments:
        for p, weight in a.homes:
            lat.append(p.lat)
            lon.append(p.lon)
            w.append(weight)
    return bin_home_arrays(lat, lon, w, proj)


def merge_grids(parts: Iterable[GridPopulation]) -> GridPopulation:
    out = GridPopulation()
    for part in parts:
        for cell, v in part.items():
            out[cell] = out[cell] + v
    return out


# -- assessment -------------------------------------------------------------


def assess_site(poi: Poi, grid: GridPopulation, params: VacancyParams = VacancyParams(),
                proj: ProjectionParams = ProjectionParams()) -> VacancyRecord:
    if poi.category is not PoiCategory.RESIDENTIAL:
        raise ValidationError(f"{poi.name}: only residential POIs are assessed")
    center = cell_of(poi.location, proj)
    window = cell_window(center, params.window_k)
    # cells are in grid order already, so a stable sort on -count breaks ties by GridIndex
    ranked = sorted(((c, grid[c]) for c in window), key=lambda cv: -cv[1])
    top = tuple(ranked[:params.top_k])
    total = float(sum(v for _, v in top))
    return VacancyRecord(poi, center, top, total, params.verdict(total))


def assess_sites(pois: Iterable[Poi], grid: GridPopulation, params: VacancyParams = VacancyParams(),
                 proj: ProjectionParams = ProjectionParams()) -> list[VacancyRecord]:
    return [assess_site(p, grid, params, proj) for p in pois]


def derive_suggested_threshold(cap: CapacityParams = CapacityParams(), cell_area: float = 10_000.0,
                               top_k: int = 6) -> dict:
    persons = math.floor(cap.floor_area_ratio * cell_area / cap.living_area_per_capita)
    users = math.floor(persons * cap.sampled_users / cap.total_population)
    suggested = round(cap.vacancy_fraction * users * top_k)
    return {"persons_per_cell": persons, "users_per_cell": users, "suggested_threshold": suggested}


# -- rankings and baselines -------------------------------------------------


def county_ranking(records: Sequence[VacancyRecord], regions: Sequence[Region], mode: str = "poi_count",
                   proj: ProjectionParams = ProjectionParams()) -> list[tuple[str, float]]:
    """Vacant POI count or vacant cell area per county, largest first.

    A POI belongs to the county containing its location; in ``cell_area``
    mode each county counts the union of its Vacant sites' top cells.
    """
    if mode not in ("poi_count", "cell_area"):
        raise ParameterError(f"unknown ranking mode {mode!r}")
    vacant = [r for r in records if r.verdict is Verdict.VACANT]
    if not vacant:
        return []
    ids = sorted(r.region_id for r in regions)
    idx = assign_regions([r.poi.location.lat for r in vacant],
                         [r.poi.location.lon for r in vacant], regions)
    per: dict[str, set | int] = {}
    for rec, k in zip(vacant, idx.tolist()):
        if k < 0:
            continue
        rid = ids[k]
        if mode == "poi_count":
            per[rid] = per.get(rid, 0) + 1
        else:
            per.setdefault(rid, set()).update(c for c, _ in rec.top_cells)
    if mode == "poi_count":
        values = {rid: float(n) for rid, n in per.items()}
    else:
        values = {rid: len(cells) * proj.cell_area for rid, cells in per.items()}
    return sorted(values.items(), key=lambda kv: (-kv[1], kv[0]))


def chen_index(x: ChenIndexInputs) -> float:
    """Five-year excess supply relative to the existing stock."""
    return (x.supply_S - x.demand_D) / x.existing_n


def density_ghost_flag(population: float, area_km2: float, standard: float = 10_000.0) -> bool:
    """True when density falls below half of ``standard`` people per km²."""
    if not area_km2 > 0:
        raise ParameterError("area must be positive")
    return population / area_km2 < standard / 2


# -- I/O --------------------------------------------------------------------

VACANCY_COLUMNS = ("poi_name", "lat", "lon", "center_i", "center_j", "top_sum", "verdict")
RANKING_COLUMNS = ("region_id", "name", "value")


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def write_vacancy(records: Iterable[VacancyRecord], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(VACANCY_COLUMNS)
        for r in records:
            w.writerow([r.poi.name, f"{r.poi.location.lat:.7f}", f"{r.poi.location.lon:.7f}",
                        r.center_cell.i, r.center_cell.j, _num(r.top_sum), r.verdict.value])


@dataclass(frozen=True)
class VacancyRow:
    """A vacancy table row as read back from disk."""

    name: str
    location: GeoPoint
    center_cell: GridIndex
    top_sum: float
    verdict: Verdict


def read_vacancy(path) -> list[VacancyRow]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            try:
                out.append(VacancyRow(
                    row["poi_name"], GeoPoint(float(row["lat"]), float(row["lon"])),
                    GridIndex(int(row["center_i"]), int(row["center_j"])),
                    float(row["top_sum"]), Verdict(row["verdict"])))
            except (KeyError, ValueError, TypeError) as exc:
                raise ValidationError(f"bad vacancy row {row!r}: {exc}") from exc
    return out


def write_ranking(ranking: Sequence[tuple[str, float]], regions: Sequence[Region], path) -> None:
    names = {r.region_id: r.name for r in regions}
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RANKING_COLUMNS)
        for rid, v in ranking:
            w.writerow([rid, names.get(rid, ""), _num(v)])

