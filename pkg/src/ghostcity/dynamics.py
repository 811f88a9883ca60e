"""Daily and hourly population series and the holiday tourism test.

Populations are distinct users, never fix counts: a user who pings fifty
times on a day counts once for that day.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import AlignmentError, ParameterError, ValidationError
from .geo import GridIndex, ProjectionParams, Region, cells_of
from .ingest import PointTable, StudyWindow, date_to_day, day_to_date, local_day, local_second_of_day

Membership = Union[None, np.ndarray, Callable[[PointTable], np.ndarray]]


@dataclass(frozen=True)
class DaySeries:
    dates: tuple
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "dates", tuple(self.dates))
        object.__setattr__(self, "values", values)
        if len(self.dates) != len(values):
            raise ValidationError("dates and values differ in length")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValidationError("series dates must be strictly increasing")
        if (values < 0).any():
            raise ValidationError("series values must be >= 0")

    def __len__(self) -> int:
        return len(self.dates)

    def __getitem__(self, d: dt.date) -> float:
        try:
            return float(self.values[self._index()[d]])
        except KeyError:
            raise AlignmentError(f"date {d} not in series") from None

    def _index(self) -> dict:
        return {d: k for k, d in enumerate(self.dates)}

    def items(self):
        return zip(self.dates, self.values.tolist())

    def __eq__(self, other):
        return (isinstance(other, DaySeries) and self.dates == other.dates
                and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class HourProfile:
    """Distinct users in each of the 168 hours of a week, Monday 00:00 first."""

    week_start: dt.date
    values: np.ndarray

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "values", values)
        if values.shape != (168,):
            raise ValidationError("an hour profile has exactly 168 values")
        if (values < 0).any():
            raise ValidationError("profile values must be >= 0")


@dataclass(frozen=True)
class HolidayPair:
    before_date: dt.date
    during_date: dt.date

    def __post_init__(self):
        if not self.before_date < self.during_date:
            raise ParameterError(f"holiday pair {self.before_date} / {self.during_date} is not increasing")


DEFAULT_HOLIDAYS = (
    HolidayPair(dt.date(2014, 9, 29), dt.date(2014, 10, 2)),    # National Day
    HolidayPair(dt.date(2014, 12, 30), dt.date(2015, 1, 2)),    # New Year
    HolidayPair(dt.date(2015, 4, 29), dt.date(2015, 5, 2)),     # Workers' Day
)


class TourismLabel(str, enum.Enum):
    TOURISM = "Tourism"
    NOT_TOURISM = "NotTourism"


# -- membership -------------------------------------------------------------


def _mask(points: PointTable, member: Membership) -> np.ndarray:
    if member is None:
        return np.ones(len(points), dtype=bool)
    if callable(member):
        member = member(points)
    member = np.asarray(member, dtype=bool)
    if member.shape != (len(points),):
        raise ValidationError("membership mask does not match the points")
    return member


def _cell_keys(i, j) -> np.ndarray:
    return (np.asarray(j, dtype=np.int64) << 32) + (np.asarray(i, dtype=np.int64) & 0xFFFFFFFF)


def cells_membership(cells: Iterable[GridIndex], proj: ProjectionParams = ProjectionParams()):
    """Membership predicate: the point lies in one of ``cells``."""
    wanted = np.unique(_cell_keys([c.i for c in cells], [c.j for c in cells]))

    def member(points: PointTable) -> np.ndarray:
        i, j = cells_of(points.lat, points.lon, proj)
        return np.isin(_cell_keys(i, j), wanted)
    return member


def region_membership(region: Region):
    return lambda points: region.contains(points.lat, points.lon)


# -- series -----------------------------------------------------------------


def _day_range(days: np.ndarray, window: Optional[StudyWindow]) -> tuple[int, int]:
    if window is not None:
        return window.first_day, window.last_day
    if not len(days):
        return 0, -1
    return int(days.min()), int(days.max())


def daily_population(points: PointTable, member: Membership = None,
                     window: Optional[StudyWindow] = None, utc_offset_minutes: int = 480) -> DaySeries:
    """Distinct users with at least one member fix, per local day.

    Days run over ``window`` when given, otherwise over the span of member
    fixes; days without any fix read zero.
    """
    if window is not None:
        utc_offset_minutes = window.utc_offset_minutes
    m = _mask(points, member)
    days = local_day(points.ts[m], utc_offset_minutes)
    users = points.user[m].astype(np.int64)
    first, last = _day_range(days, window)
    n = last - first + 1
    inside = (days >= first) & (days <= last)
    pairs = np.unique((days[inside] - first) * (len(points.user_ids) + 1) + users[inside])
    counts = np.bincount(pairs // (len(points.user_ids) + 1), minlength=max(n, 0))
    return DaySeries([day_to_date(first + k) for k in range(n)], counts[:n])


def site_daily_matrix(points: PointTable, site_cells: Sequence[Sequence[GridIndex]],
                      window: StudyWindow, proj: ProjectionParams = ProjectionParams()) -> np.ndarray:
    """Distinct users per (site, day) for many cell footprints at once.

    Row ``s`` equals ``daily_population(points, cells_membership(site_cells[s]),
    window).values``.
    """
    n_days = window.last_day - window.first_day + 1
    out = np.zeros((len(site_cells), n_days), dtype=np.int64)
    if not len(site_cells) or not len(points):
        return out
    site_keys = pd.DataFrame({
        "site": np.repeat(np.arange(len(site_cells)), [len(c) for c in site_cells]),
        "key": _cell_keys([c.i for s in site_cells for c in s], [c.j for s in site_cells for c in s]),
    }).drop_duplicates()
    i, j = cells_of(points.lat, points.lon, proj)
    keys = _cell_keys(i, j)
    m = np.isin(keys, site_keys["key"].to_numpy())
    day = local_day(points.ts[m], window.utc_offset_minutes) - window.first_day
    ok = (day >= 0) & (day < n_days)
    fixes = pd.DataFrame({"key": keys[m][ok], "day": day[ok], "user": points.user[m][ok]}).drop_duplicates()
    joined = fixes.merge(site_keys, on="key")[["site", "day", "user"]].drop_duplicates()
    counts = joined.groupby(["site", "day"]).size()
    s = counts.index.get_level_values(0).to_numpy()
    d = counts.index.get_level_values(1).to_numpy()
    out[s, d] = counts.to_numpy()
    return out


def national_share(region: DaySeries, national: DaySeries) -> DaySeries:
    idx = national._index()
    out = []
    for d, v in region.items():
        if d not in idx:
            raise AlignmentError(f"national series lacks {d}")
        n = national.values[idx[d]]
        if n == 0:
            raise ValidationError(f"national population is zero on {d}")
        out.append(v / n)
    return DaySeries(region.dates, out)


def normalize_minmax(s: DaySeries) -> DaySeries:
    if not len(s):
        raise ParameterError("cannot normalise an empty series")
    lo, hi = s.values.min(), s.values.max()
    if hi == lo:
        return DaySeries(s.dates, np.zeros(len(s)))
    return DaySeries(s.dates, (s.values - lo) / (hi - lo))


def hourly_profile(points: PointTable, member: Membership, week_start: dt.date,
                   window: Optional[StudyWindow] = None, utc_offset_minutes: int = 480) -> HourProfile:
    """Distinct users per local hour over the week starting ``week_start`` (a Monday)."""
    if week_start.weekday() != 0:
        raise ParameterError(f"{week_start} is not a Monday")
    if window is not None:
        if not (window.start_date <= week_start and week_start + dt.timedelta(days=6) <= window.end_date):
            raise ParameterError("the week must lie inside the study window")
        utc_offset_minutes = window.utc_offset_minutes
    m = _mask(points, member)
    ts = points.ts[m]
    slot = ((local_day(ts, utc_offset_minutes) - date_to_day(week_start)) * 24
            + local_second_of_day(ts, utc_offset_minutes) // 3600)
    ok = (slot >= 0) & (slot < 168)
    n_users = len(points.user_ids) + 1
    pairs = np.unique(slot[ok] * n_users + points.user[m][ok])
    return HourProfile(week_start, np.bincount(pairs // n_users, minlength=168)[:168])


# -- tourism ----------------------------------------------------------------


def positive_pairs(series: DaySeries, pairs: Sequence[HolidayPair]) -> int:
    return sum(series[p.during_date] > series[p.before_date] for p in pairs)


def classify_tourism(series: DaySeries, pairs: Sequence[HolidayPair] = DEFAULT_HOLIDAYS,
                     min_positive: int = 2) -> TourismLabel:
    """Tourism when the population strictly rises on at least ``min_positive`` holidays."""
    if min_positive < 1:
        raise ParameterError("min_positive must be >= 1")
    if positive_pairs(series, pairs) >= min_positive:
        return TourismLabel.TOURISM
    return TourismLabel.NOT_TOURISM


def pairs_in_window(pairs: Sequence[HolidayPair], window: StudyWindow) -> list[HolidayPair]:
    return [p for p in pairs
            if window.start_date <= p.before_date and p.during_date <= window.end_date]


# -- I/O --------------------------------------------------------------------


def _num(x: float) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


def write_series(s: DaySeries, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("date", "value"))
        for d, v in s.items():
            w.writerow((d.isoformat(), _num(v)))


def read_series(path) -> DaySeries:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.DictReader(fh))
    try:
        return DaySeries([dt.date.fromisoformat(r["date"]) for r in rows], [float(r["value"]) for r in rows])
    except (KeyError, ValueError) as exc:
        raise ValidationError(f"bad series file {path}: {exc}") from exc


def write_profile(p: HourProfile, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("hour_of_week", "value"))
        for h, v in enumerate(p.values.tolist()):
            w.writerow((h, _num(v)))
