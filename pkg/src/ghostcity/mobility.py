"""Home/work cross tabulation and inter-city migration.

A user's daily city is the city of the first fix of that local day that
falls inside a known region. Runs of equal daily cities are merged and
every change between consecutive runs is one migration, so cities passed
through during a travel day never produce an edge.
"""

from __future__ import annotations

import csv
import datetime as dt
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .dynamics import DaySeries
from .errors import ParameterError, ValidationError
from .geo import Region, assign_regions
from .ingest import PointTable, StudyWindow, day_to_date, local_day
from .locus import HomeWorkAssignment

OTHER = "Other"


@dataclass(frozen=True)
class CrosstabRow:
    home_bucket: str
    work_bucket: str
    proportion: float


@dataclass(frozen=True, order=True)
class DayCity:
    date: dt.date
    city: str


@dataclass(frozen=True, order=True)
class MigrationEdge:
    user_id: str
    from_city: str
    to_city: str
    arrival_date: dt.date

    def __post_init__(self):
        if self.from_city == self.to_city:
            raise ValidationError(f"{self.user_id}: edge from {self.from_city} to itself")


# -- cross tabulation -------------------------------------------------------


def homework_crosstab(assignments: Iterable[HomeWorkAssignment], regions: Sequence[Region],
                      focal: str, named: Sequence[str] = ()) -> list[CrosstabRow]:
    """Share of the focal population in each (home, work) bucket.

    The population is every user whose primary home or work place lies in
    ``focal``; places elsewhere fall into a ``named`` region or ``Other``.
    Rows with no users are omitted.
    """
    named = list(named)
    if focal in named:
        raise ParameterError("named regions must not include the focal region")
    ids = sorted(r.region_id for r in regions)
    for rid in [focal, *named]:
        if rid not in ids:
            raise ParameterError(f"unknown region {rid!r}")
    users = [a for a in assignments if a.work is not None]
    if not users:
        raise ValidationError("no users with both home and work")
    h = assign_regions([a.home.lat for a in users], [a.home.lon for a in users], regions)
    w = assign_regions([a.work.lat for a in users], [a.work.lon for a in users], regions)

    def bucket(k: int) -> str:
        rid = ids[k] if k >= 0 else None
        if rid == focal or rid in named:
            return rid
        return OTHER

    counts = Counter()
    for hk, wk in zip(h.tolist(), w.tolist()):
        hb, wb = bucket(hk), bucket(wk)
        if focal in (hb, wb):
            counts[hb, wb] += 1
    total = sum(counts.values())
    if not total:
        raise ValidationError(f"no user lives or works in {focal!r}")
    order = ([(focal, focal)] + [(focal, n) for n in named] + [(focal, OTHER)]
             + [(n, focal) for n in named] + [(OTHER, focal)])
    return [CrosstabRow(hb, wb, counts[hb, wb] / total) for hb, wb in order if counts[hb, wb]]


# -- daily cities and migration ---------------------------------------------


def _first_per_day(user, days, ts, region, first_mapped: bool):
    """Index of the earliest fix per (user, day); ties keep input order."""
    order = np.lexsort((np.arange(len(ts)), ts, days, user))
    if first_mapped:
        order = order[region[order] >= 0]
    u, d = user[order], days[order]
    head = np.ones(len(order), dtype=bool)
    head[1:] = (u[1:] != u[:-1]) | (d[1:] != d[:-1])
    first = order[head]
    return first[region[first] >= 0]


def day_city_sequence(points, regions: Sequence[Region], utc_offset_minutes: int = 480,
                      first_mapped: bool = True) -> list[DayCity]:
    """One user's daily cities; accepts a :class:`PointTable` or a list of points.

    With ``first_mapped`` false the day's very first fix decides and a day
    whose first fix is outside every region is dropped.
    """
    table = points if isinstance(points, PointTable) else PointTable.from_points(points)
    if len(np.unique(table.user)) > 1:
        raise ValidationError("points belong to more than one user")
    _, seqs = day_city_table(table, regions, utc_offset_minutes, first_mapped)
    return seqs[0] if seqs else []


def day_city_table(points: PointTable, regions: Sequence[Region], utc_offset_minutes: int = 480,
                   first_mapped: bool = True):
    """Daily cities for every user: ``(user_ids, [list of DayCity, ...])``."""
    ids = sorted(r.region_id for r in regions)
    region = assign_regions(points.lat, points.lon, regions)
    days = local_day(points.ts, utc_offset_minutes)
    first = _first_per_day(points.user, days, points.ts, region, first_mapped)
    users = points.user[first]
    out_users, seqs = [], []
    starts = np.flatnonzero(np.r_[True, users[1:] != users[:-1]]) if len(users) else []
    bounds = list(starts) + [len(users)]
    for a, b in zip(bounds[:-1], bounds[1:]):
        out_users.append(str(points.user_ids[users[a]]))
        seqs.append([DayCity(day_to_date(d), ids[r])
                     for d, r in zip(days[first[a:b]].tolist(), region[first[a:b]].tolist())])
    return out_users, seqs


def migration_edges(seq: Sequence[DayCity], user_id: str = "") -> list[MigrationEdge]:
    edges = []
    for prev, cur in zip(seq, seq[1:]):
        if cur.date <= prev.date:
            raise ValidationError("day-city sequence is not date ordered")
        if cur.city != prev.city:
            edges.append(MigrationEdge(user_id, prev.city, cur.city, cur.date))
    return edges


def extract_edges(points: PointTable, regions: Sequence[Region], utc_offset_minutes: int = 480,
                  first_mapped: bool = True) -> list[MigrationEdge]:
    """Migration edges of every user, ordered by (user_id, arrival_date)."""
    users, seqs = day_city_table(points, regions, utc_offset_minutes, first_mapped)
    edges = []
    for uid, seq in zip(users, seqs):
        edges.extend(migration_edges(seq, uid))
    return edges


def flow_series(edges: Iterable[MigrationEdge], region_id: str,
                window: Optional[StudyWindow] = None) -> tuple[DaySeries, DaySeries]:
    """Daily inflow and outflow of ``region_id`` by arrival date.

    Dates cover ``window`` when given, otherwise the span of all edges.
    """
    edges = list(edges)
    if window is not None:
        dates = window.dates()
    elif edges:
        lo = min(e.arrival_date for e in edges)
        hi = max(e.arrival_date for e in edges)
        dates = [lo + dt.timedelta(days=k) for k in range((hi - lo).days + 1)]
    else:
        dates = []
    pos = {d: k for k, d in enumerate(dates)}
    inflow = np.zeros(len(dates))
    outflow = np.zeros(len(dates))
    for e in edges:
        k = pos.get(e.arrival_date)
        if k is None:
            continue
        if e.to_city == region_id:
            inflow[k] += 1
        if e.from_city == region_id:
            outflow[k] += 1
    return DaySeries(dates, inflow), DaySeries(dates, outflow)


def top_partners(edges: Iterable[MigrationEdge], region_id: str, start: dt.date, end: dt.date,
                 direction: str = "in") -> list[tuple[str, float]]:
    """Partners' shares of the flow into (``in``) or out of (``out``) a region
    for arrivals in ``[start, end]``."""
    if direction not in ("in", "out"):
        raise ParameterError(f"direction must be 'in' or 'out', got {direction!r}")
    counts = Counter()
    for e in edges:
        if not start <= e.arrival_date <= end:
            continue
        if direction == "in" and e.to_city == region_id:
            counts[e.from_city] += 1
        elif direction == "out" and e.from_city == region_id:
            counts[e.to_city] += 1
    total = sum(counts.values())
    if not total:
        return []
    return sorted(((rid, n / total) for rid, n in counts.items()), key=lambda kv: (-kv[1], kv[0]))


# -- I/O --------------------------------------------------------------------

EDGE_COLUMNS = ("user_id", "from_region", "to_region", "arrival_date")
CROSSTAB_COLUMNS = ("home_bucket", "work_bucket", "proportion")


def write_edges(edges: Iterable[MigrationEdge], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(EDGE_COLUMNS)
        for e in edges:
            w.writerow((e.user_id, e.from_city, e.to_city, e.arrival_date.isoformat()))


def read_edges(path) -> list[MigrationEdge]:
    with open(path, encoding="utf-8", newline="") as fh:
        try:
            return [MigrationEdge(r["user_id"], r["from_region"], r["to_region"],
                                  dt.date.fromisoformat(r["arrival_date"]))
                    for r in csv.DictReader(fh)]
        except (KeyError, ValueError) as exc:
            raise ValidationError(f"bad edge file {path}: {exc}") from exc


def write_crosstab(rows: Iterable[CrosstabRow], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CROSSTAB_COLUMNS)
        for r in rows:
            w.writerow((r.home_bucket, r.work_bucket, repr(float(r.proportion))))
