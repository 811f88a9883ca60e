"""Reading positioning logs and POI catalogues, and local-time windowing.

Positioning logs are held column-wise in a :class:`PointTable`; the
single-record :class:`PositioningPoint` exists for small inputs and
tests. User ids are dictionary-encoded with the dictionary kept in sorted
order, so sorting by code is sorting by id.
"""

from __future__ import annotations

import csv
import datetime as dt
import enum
import io
import json
import math
import os
from collections import Counter
from dataclasses import dataclass
from typing import IO, Iterable, Iterator, Optional, Sequence, Union

import numpy as np
import pandas as pd

from .errors import ParameterError, ParseError
from .geo import GeoPoint

POINT_COLUMNS = ("user_id", "lat", "lon", "timestamp")
POI_COLUMNS = ("name", "lat", "lon", "category")
EPOCH = dt.date(1970, 1, 1)

Source = Union[str, os.PathLike, IO[bytes], IO[str]]


@dataclass(frozen=True, slots=True)
class PositioningPoint:
    user_id: str
    location: GeoPoint
    timestamp: int


class PoiCategory(str, enum.Enum):
    RESIDENTIAL = "residential"
    VILLA = "villa"
    OTHER = "other"

    @classmethod
    def parse(cls, text: str) -> "PoiCategory":
        try:
            return cls(text.strip().lower())
        except ValueError:
            return cls.OTHER


@dataclass(frozen=True, slots=True)
class Poi:
    name: str
    location: GeoPoint
    category: PoiCategory


@dataclass(frozen=True)
class StudyWindow:
    start_date: dt.date = dt.date(2014, 9, 8)
    end_date: dt.date = dt.date(2015, 4, 22)
    utc_offset_minutes: int = 480

    def __post_init__(self):
        if self.start_date > self.end_date:
            raise ParameterError("study window start is after its end")

    @property
    def first_day(self) -> int:
        return date_to_day(self.start_date)

    @property
    def last_day(self) -> int:
        return date_to_day(self.end_date)

    def contains(self, ts) -> np.ndarray:
        day = local_day(ts, self.utc_offset_minutes)
        return (day >= self.first_day) & (day <= self.last_day)

    def dates(self) -> list[dt.date]:
        return [day_to_date(d) for d in range(self.first_day, self.last_day + 1)]


# -- local time helpers ------------------------------------------------------


def local_day(ts, utc_offset_minutes: int = 480):
    """Days since 1970-01-01 in local civil time."""
    return np.floor_divide(np.asarray(ts, dtype=np.int64) + utc_offset_minutes * 60, 86400)


def local_second_of_day(ts, utc_offset_minutes: int = 480):
    return np.mod(np.asarray(ts, dtype=np.int64) + utc_offset_minutes * 60, 86400)


def day_to_date(day: int) -> dt.date:
    return EPOCH + dt.timedelta(days=int(day))


def date_to_day(d: dt.date) -> int:
    return (d - EPOCH).days


def local_timestamp(d: dt.date, seconds: float = 0, utc_offset_minutes: int = 480) -> int:
    """Epoch seconds of ``seconds`` past local midnight on ``d``."""
    return int(date_to_day(d) * 86400 + seconds - utc_offset_minutes * 60)


# -- the columnar point container -------------------------------------------


class PointTable:
    """Columnar positioning log.

    ``user`` holds int32 codes into ``user_ids``, an object array of
    distinct ids in ascending order.
    """

    __slots__ = ("user", "lat", "lon", "ts", "user_ids")

    def __init__(self, user, lat, lon, ts, user_ids):
        self.user = np.asarray(user, dtype=np.int32)
        self.lat = np.asarray(lat, dtype=np.float64)
        self.lon = np.asarray(lon, dtype=np.float64)
        self.ts = np.asarray(ts, dtype=np.int64)
        self.user_ids = np.asarray(user_ids, dtype=object)

    @classmethod
    def from_columns(cls, user_ids, lat, lon, ts) -> "PointTable":
        codes, uniques = pd.factorize(np.asarray(user_ids, dtype=object), sort=True)
        return cls(codes, lat, lon, ts, np.asarray(uniques, dtype=object))

    @classmethod
    def from_points(cls, points: Iterable[PositioningPoint]) -> "PointTable":
        points = list(points)
        return cls.from_columns(
            [p.user_id for p in points],
            [p.location.lat for p in points],
            [p.location.lon for p in points],
            [p.timestamp for p in points],
        )

    @classmethod
    def empty(cls) -> "PointTable":
        return cls([], [], [], [], [])

    def __len__(self) -> int:
        return len(self.ts)

    def __iter__(self) -> Iterator[PositioningPoint]:
        for u, la, lo, t in zip(self.user, self.lat, self.lon, self.ts):
            yield PositioningPoint(self.user_ids[u], GeoPoint(float(la), float(lo)), int(t))

    def take(self, index) -> "PointTable":
        """Rows selected by a boolean mask or integer index; keeps the dictionary."""
        return PointTable(self.user[index], self.lat[index], self.lon[index],
                          self.ts[index], self.user_ids)

    def compact(self) -> "PointTable":
        """Drop dictionary entries no longer referenced."""
        used, codes = np.unique(self.user, return_inverse=True)
        return PointTable(codes, self.lat, self.lon, self.ts, self.user_ids[used])

    def user_id_column(self) -> np.ndarray:
        return self.user_ids[self.user] if len(self) else np.empty(0, dtype=object)

    def sorted_by_user_time(self) -> "PointTable":
        """Stable sort on ``(user, timestamp)``; ties keep input order."""
        order = np.lexsort((self.ts, self.user))
        return self.take(order)

    def concat(self, other: "PointTable") -> "PointTable":
        ids = np.concatenate([self.user_id_column(), other.user_id_column()])
        return PointTable.from_columns(
            ids,
            np.concatenate([self.lat, other.lat]),
            np.concatenate([self.lon, other.lon]),
            np.concatenate([self.ts, other.ts]),
        )

    def equals(self, other: "PointTable") -> bool:
        return (
            len(self) == len(other)
            and np.array_equal(self.user_id_column(), other.user_id_column())
            and np.array_equal(self.lat, other.lat)
            and np.array_equal(self.lon, other.lon)
            and np.array_equal(self.ts, other.ts)
        )


class RejectionReport(Counter):
    """Per-error-class counts of skipped rows; reports add like counters."""

    @property
    def rejected(self) -> int:
        return sum(self.values())


# -- parsing ----------------------------------------------------------------


def _read_all(source: Source) -> bytes:
    if isinstance(source, (str, os.PathLike)):
        with open(source, "rb") as fh:
            return fh.read()
    data = source.read()
    return data.encode("utf-8") if isinstance(data, str) else data


def _is_number(text: str) -> bool:
    try:
        float(text)
    except ValueError:
        return False
    return True


def _first_row(data: bytes) -> list[str]:
    for line in io.StringIO(data.decode("utf-8", errors="replace")):
        if line.strip():
            return next(csv.reader([line]))
    return []


def parse_points(
    source: Source,
    fmt: str = "csv",
    window: Optional[StudyWindow] = None,
    strict: bool = False,
) -> tuple[PointTable, RejectionReport]:
    """Parse a positioning log.

    ``fmt`` is ``"csv"`` (``user_id,lat,lon,timestamp`` with an optional
    header) or ``"jsonl"`` (one object per line with the same keys).
    Malformed rows are skipped and tallied unless ``strict`` is set, in
    which case the first one raises :class:`ParseError`.
    """
    if fmt not in ("csv", "jsonl"):
        raise ParameterError(f"unknown point format {fmt!r}")
    data = _read_all(source)
    if fmt == "csv":
        fast = _parse_points_fast(data, window)
        if fast is not None:
            table, report = fast
            if not (strict and report):
                return table, report
        return _parse_points_slow(_csv_rows(data), window, strict)
    return _parse_points_slow(_jsonl_rows(data), window, strict)


def _parse_points_fast(data: bytes, window):
    row = _first_row(data)
    if not row:
        return PointTable.empty(), RejectionReport()
    header = len(row) > 1 and not _is_number(row[1])
    try:
        df = pd.read_csv(
            io.BytesIO(data),
            header=None,
            skiprows=1 if header else 0,
            names=list(POINT_COLUMNS),
            dtype={"user_id": "category", "lat": "float64", "lon": "float64",
                   "timestamp": "float64"},
            engine="c",
            skip_blank_lines=True,
            na_filter=True,
            keep_default_na=False,
            na_values=[""],
        )
    except (pd.errors.ParserError, ValueError, UnicodeDecodeError):
        return None
    if df.isna().to_numpy().any():
        return None
    lat = df["lat"].to_numpy()
    lon = df["lon"].to_numpy()
    tsf = df["timestamp"].to_numpy()
    if not np.isfinite(tsf).all() or np.abs(tsf).max(initial=0) > 2**62:
        return None
    ts = np.floor(tsf).astype(np.int64)
    cat = df["user_id"].cat
    users = np.asarray(cat.categories, dtype=object)
    if any(u.strip() == "" for u in users):
        return None
    codes = cat.codes.to_numpy()
    report = RejectionReport()
    ok = _coord_ok(lat, lon)
    if (~ok).any():
        report["out_of_range"] += int((~ok).sum())
    if window is not None:
        inw = window.contains(ts)
        bad = ok & ~inw
        if bad.any():
            report["out_of_window"] += int(bad.sum())
        ok &= inw
    order = np.argsort(users.astype(str), kind="stable")
    rank = np.empty(len(users), dtype=np.int32)
    rank[order] = np.arange(len(users), dtype=np.int32)
    table = PointTable(rank[codes], lat, lon, ts, users[order]).take(ok)
    return table.compact(), report


def _coord_ok(lat, lon):
    return (
        np.isfinite(lat) & np.isfinite(lon)
        & (lat >= -90) & (lat <= 90) & (lon >= -180) & (lon < 180)
    )


def _csv_rows(data: bytes):
    text = io.StringIO(data.decode("utf-8", errors="replace"), newline="")
    reader = csv.reader(text)
    first = True
    for row in reader:
        line = reader.line_num
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if first:
            first = False
            if len(row) > 1 and not _is_number(row[1]):
                continue
        if len(row) != 4:
            yield line, None, "field_count"
            continue
        yield line, row, None


def _jsonl_rows(data: bytes):
    for line, raw in enumerate(io.StringIO(data.decode("utf-8", errors="replace")), start=1):
        if not raw.strip():
            continue
        try:
            rec = json.loads(raw)
        except json.JSONDecodeError:
            yield line, None, "malformed_record"
            continue
        if not isinstance(rec, dict) or any(k not in rec for k in POINT_COLUMNS):
            yield line, None, "field_count"
            continue
        yield line, [rec[k] for k in POINT_COLUMNS], None


def _parse_points_slow(rows, window, strict):
    users, lats, lons, tss = [], [], [], []
    report = RejectionReport()
    for line, row, err in rows:
        if err is None:
            err, parsed = _check_point_row(row, window)
        if err is not None:
            if strict:
                raise ParseError(f"malformed point row ({err})", line)
            report[err] += 1
            continue
        u, la, lo, t = parsed
        users.append(u)
        lats.append(la)
        lons.append(lo)
        tss.append(t)
    return PointTable.from_columns(users, lats, lons, tss), report


def _check_point_row(row, window):
    user = str(row[0]).strip() if row[0] is not None else ""
    if not user:
        return "empty_user", None
    try:
        lat = float(row[1])
        lon = float(row[2])
        tsf = float(row[3])
    except (TypeError, ValueError):
        return "not_numeric", None
    if not math.isfinite(tsf):
        return "not_numeric", None
    if not (math.isfinite(lat) and math.isfinite(lon)
            and -90 <= lat <= 90 and -180 <= lon < 180):
        return "out_of_range", None
    ts = math.floor(tsf)
    if window is not None and not window.contains(ts):
        return "out_of_window", None
    return None, (user, lat, lon, ts)


def parse_pois(source: Source, strict: bool = False,
               report: Optional[RejectionReport] = None) -> list[Poi]:
    """Parse a ``name,lat,lon,category`` catalogue.

    Unknown categories fall back to ``other``; duplicates are kept.
    """
    data = _read_all(source)
    report = RejectionReport() if report is None else report
    text = io.StringIO(data.decode("utf-8", errors="replace"), newline="")
    reader = csv.reader(text)
    pois = []
    first = True
    for row in reader:
        if not row or (len(row) == 1 and not row[0].strip()):
            continue
        if first:
            first = False
            if len(row) > 1 and not _is_number(row[1]):
                continue
        err = None
        if len(row) != 4:
            err = "field_count"
        else:
            try:
                lat, lon = float(row[1]), float(row[2])
            except ValueError:
                err = "not_numeric"
            else:
                if not (math.isfinite(lat) and math.isfinite(lon)
                        and -90 <= lat <= 90 and -180 <= lon < 180):
                    err = "out_of_range"
        if err is not None:
            if strict:
                raise ParseError(f"malformed POI row ({err})", reader.line_num)
            report[err] += 1
            continue
        pois.append(Poi(row[0], GeoPoint(lat, lon), PoiCategory.parse(row[3])))
    return pois


# -- windows ----------------------------------------------------------------


def local_hour_mask(ts, hh_start: float, hh_end: float, utc_offset_minutes: int = 480) -> np.ndarray:
    """Mask of timestamps whose local time of day lies in ``[hh_start, hh_end)``.

    ``hh_start > hh_end`` wraps past midnight; ``hh_start == hh_end`` is empty.
    """
    if not (0 <= hh_start <= 24 and 0 <= hh_end <= 24):
        raise ParameterError(f"hour window ({hh_start}, {hh_end}) outside [0, 24]")
    sec = local_second_of_day(ts, utc_offset_minutes)
    lo, hi = hh_start * 3600, hh_end * 3600
    if lo <= hi:
        return (sec >= lo) & (sec < hi)
    return (sec >= lo) | (sec < hi)


def filter_local_hours(points, hh_start, hh_end, utc_offset_minutes: int = 480):
    """Keep points whose local hour falls in the window; accepts a
    :class:`PointTable` or a sequence of :class:`PositioningPoint`."""
    if isinstance(points, PointTable):
        return points.take(local_hour_mask(points.ts, hh_start, hh_end, utc_offset_minutes))
    points = list(points)
    mask = local_hour_mask([p.timestamp for p in points], hh_start, hh_end, utc_offset_minutes)
    return [p for p, keep in zip(points, mask) if keep]


# -- writing ----------------------------------------------------------------


def write_points_csv(table: PointTable, path) -> None:
    df = pd.DataFrame({
        "user_id": table.user_id_column(),
        "lat": table.lat,
        "lon": table.lon,
        "timestamp": table.ts,
    })
    df.to_csv(path, index=False, lineterminator="\n", float_format="%.7f")


def write_pois_csv(pois: Sequence[Poi], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(POI_COLUMNS)
        for p in pois:
            w.writerow([p.name, f"{p.location.lat:.7f}", f"{p.location.lon:.7f}", p.category.value])
