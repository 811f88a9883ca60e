"""Seeded synthetic worlds with known answers.

A world is a set of rectangular cities (split into county strips),
residential sites with planted resident counts, optional villas, commuter
groups, holiday tourists and multi-city travellers. Everything is drawn
from numpy's PCG64: the world seed feeds a ``SeedSequence`` whose spawned
children drive the groups in a fixed order (sites, villa decoys,
tourists, travellers), so a group's stream does not depend on how much
randomness other groups consumed.

Residents live uniformly inside a 3 x 2 cell block anchored on their
site's cell, so a site's top-6 window sum equals its resident count when
home inference is exact. Tourists and travellers only ping between 10:00
and 20:00, which keeps them out of the night-time home window.
"""

from __future__ import annotations

import datetime as dt
import json
import math
import os
import re
import sys
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .dynamics import DEFAULT_HOLIDAYS, HolidayPair
from .errors import ParameterError, ValidationError
from .geo import (
    EARTH_RADIUS_M,
    GeoPoint,
    ProjectionParams,
    Region,
    cell_of,
    haversine_m,
    regions_to_geojson,
)
from .ingest import (
    Poi,
    PoiCategory,
    PointTable,
    StudyWindow,
    date_to_day,
    day_to_date,
    write_pois_csv,
    write_points_csv,
)
from .locus import HomeWorkAssignment
from .mobility import CrosstabRow, MigrationEdge, homework_crosstab

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

LABELS = ("occupied", "vacant", "excluded_new")
VERDICT_OF_LABEL = {"occupied": "Occupied", "vacant": "Vacant", "excluded_new": "Excluded"}
DAYTIME = (10 * 3600, 20 * 3600)
WORK_SECONDS = (9 * 3600, 18 * 3600)
MIN_SITE_SEPARATION = 800.0


def slug(name: str) -> str:
    return re.sub(r"[^a-z0-9]+", "-", name.lower()).strip("-")


@dataclass(frozen=True)
class CitySpec:
    name: str
    bbox: tuple  # (south lat, west lon, north lat, east lon)
    counties: int = 1
    tier: Optional[int] = None

    def __post_init__(self):
        s, w, n, e = self.bbox
        if not (n > s and e > w):
            raise ValidationError(f"city {self.name}: degenerate bbox")
        if self.counties < 1:
            raise ValidationError(f"city {self.name}: counties must be >= 1")

    @property
    def region_id(self) -> str:
        return slug(self.name)

    def contains(self, lat, lon) -> bool:
        s, w, n, e = self.bbox
        return s <= lat <= n and w <= lon <= e


@dataclass(frozen=True)
class SiteSpec:
    name: str
    lat: float
    lon: float
    residents: int
    label: Optional[str] = None
    tourism: Optional[float] = None
    active_day_prob: Optional[float] = None

    def __post_init__(self):
        if self.residents < 0:
            raise ValidationError(f"site {self.name}: negative resident count")
        if self.label is not None and self.label not in LABELS:
            raise ValidationError(f"site {self.name}: unknown label {self.label!r}")
        if self.tourism is not None and not self.tourism >= 1:
            raise ValidationError(f"site {self.name}: tourism multiplier must be >= 1")
        if self.active_day_prob is not None and not 0 < self.active_day_prob <= 1:
            raise ValidationError(f"site {self.name}: active_day_prob must lie in (0, 1]")


@dataclass(frozen=True)
class VillaSpec:
    """A villa POI with a residential decoy ``decoy_offset`` metres north of it."""

    name: str
    lat: float
    lon: float
    decoy_residents: int = 0
    decoy_offset: float = 500.0


@dataclass(frozen=True)
class CommuterSpec:
    home: str
    work: str
    users: int


@dataclass(frozen=True)
class TravelerSpec:
    itinerary: tuple  # ((city name, days), ...)
    start: dt.date
    users: int


@dataclass(frozen=True)
class WorldSpec:
    seed: int
    cities: tuple
    sites: tuple = ()
    villas: tuple = ()
    commuters: tuple = ()
    travelers: tuple = ()
    gps_noise_sigma: float = 30.0
    pings_per_day_mean: float = 8.0
    active_day_prob: float = 1.0
    window: StudyWindow = field(default_factory=lambda: StudyWindow(end_date=dt.date(2015, 5, 3)))
    holidays: tuple = DEFAULT_HOLIDAYS
    lower_threshold: float = 60
    upper_threshold: float = 300
    villa_radius: float = 1000.0
    home_margin: float = 40.0
    proj: ProjectionParams = field(default_factory=ProjectionParams)

    def __post_init__(self):
        if self.gps_noise_sigma < 0:
            raise ValidationError("gps_noise_sigma must be >= 0")
        if not self.pings_per_day_mean >= 0:
            raise ValidationError("pings_per_day_mean must be >= 0")
        if not 0 < self.active_day_prob <= 1:
            raise ValidationError("active_day_prob must lie in (0, 1]")
        if not 0 <= self.home_margin < self.proj.cell_size:
            raise ValidationError("home_margin must lie in [0, cell_size)")
        names = [c.name for c in self.cities]
        if len(set(map(slug, names))) != len(names):
            raise ValidationError("city names must be distinct")
        all_sites = list(self.sites) + [s for s, _ in self.decoys()]
        site_names = [s.name for s in all_sites]
        if len(set(site_names)) != len(site_names):
            raise ValidationError("site names must be distinct")
        for s in all_sites:
            if self.city_of(s.lat, s.lon) is None:
                raise ValidationError(f"site {s.name} lies outside every city")
        if len(all_sites) > 1:
            lat = np.array([s.lat for s in all_sites])
            lon = np.array([s.lon for s in all_sites])
            d = haversine_m(lat[:, None], lon[:, None], lat[None, :], lon[None, :])
            np.fill_diagonal(d, np.inf)
            if d.min() < MIN_SITE_SEPARATION:
                raise ValidationError(f"sites must be at least {MIN_SITE_SEPARATION:.0f} m apart")
        for s in self.sites:
            if s.label is not None and s.label != self.label_for(s.residents):
                raise ValidationError(
                    f"site {s.name}: label {s.label} disagrees with {s.residents} residents")
        by_name = {s.name: s for s in self.sites}
        used = {}
        for c in self.commuters:
            if c.home not in by_name or c.work not in by_name:
                raise ValidationError(f"commuters reference unknown site {c.home} / {c.work}")
            used[c.home] = used.get(c.home, 0) + c.users
            h, w = by_name[c.home], by_name[c.work]
            if self.city_of(h.lat, h.lon) != self.city_of(w.lat, w.lon):
                raise ValidationError("commuters must live and work in the same city")
        for name, n in used.items():
            if n > by_name[name].residents:
                raise ValidationError(f"site {name}: more commuters than residents")
        for t in self.travelers:
            legs = list(t.itinerary)
            if not legs or t.users < 0:
                raise ValidationError("traveller groups need an itinerary and users >= 0")
            for k, (city, days) in enumerate(legs):
                if slug(city) not in map(slug, names):
                    raise ValidationError(f"itinerary city {city} is unknown")
                if days < (2 if k else 1):
                    raise ValidationError("itinerary legs after the first need >= 2 days")
                if k and slug(city) == slug(legs[k - 1][0]):
                    raise ValidationError("consecutive itinerary legs must change city")
            end = t.start + dt.timedelta(days=sum(d for _, d in legs) - 1)
            if t.start < self.window.start_date or end > self.window.end_date:
                raise ValidationError("itinerary falls outside the study window")

    def label_for(self, residents: float) -> str:
        if residents <= self.lower_threshold:
            return "excluded_new"
        if residents < self.upper_threshold:
            return "vacant"
        return "occupied"

    def city_of(self, lat, lon) -> Optional[CitySpec]:
        for c in self.cities:
            if c.contains(lat, lon):
                return c
        return None

    def decoys(self):
        """Residential decoy sites generated next to each villa."""
        out = []
        for v in self.villas:
            lat = v.lat + math.degrees(v.decoy_offset / EARTH_RADIUS_M)
            out.append((SiteSpec(f"{v.name} Residences", lat, v.lon, v.decoy_residents), v))
        return out

    def active_holidays(self) -> list[HolidayPair]:
        w = self.window
        return [p for p in self.holidays if w.start_date <= p.before_date and p.during_date <= w.end_date]


# -- ground truth -----------------------------------------------------------


@dataclass
class GroundTruth:
    verdicts: dict          # site name -> "Vacant" | "Occupied" | "Excluded"
    tourism: dict           # site name -> bool
    users: dict             # user id -> (home GeoPoint | None, work GeoPoint | None)
    edges: list             # [MigrationEdge]

    def assignments(self) -> list[HomeWorkAssignment]:
        return [HomeWorkAssignment(u, ((h, 1.0),), w)
                for u, (h, w) in sorted(self.users.items()) if h is not None]

    def to_json(self) -> str:
        def pt(p):
            return None if p is None else [p.lat, p.lon]
        doc = {
            "verdicts": dict(sorted(self.verdicts.items())),
            "tourism": dict(sorted(self.tourism.items())),
            "users": {u: {"home": pt(h), "work": pt(w)} for u, (h, w) in sorted(self.users.items())},
            "edges": [[e.user_id, e.from_city, e.to_city, e.arrival_date.isoformat()] for e in self.edges],
        }
        return json.dumps(doc, indent=1, sort_keys=False) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "GroundTruth":
        doc = json.loads(text)

        def pt(v):
            return None if v is None else GeoPoint(v[0], v[1])
        return cls(
            dict(doc["verdicts"]),
            {k: bool(v) for k, v in doc["tourism"].items()},
            {u: (pt(v["home"]), pt(v["work"])) for u, v in doc["users"].items()},
            [MigrationEdge(u, a, b, dt.date.fromisoformat(d)) for u, a, b, d in doc["edges"]],
        )


@dataclass
class World:
    points: PointTable
    pois: list
    regions: list
    truth: GroundTruth


# -- generation -------------------------------------------------------------


def build_regions(spec: WorldSpec) -> list[Region]:
    regions = []
    for c in spec.cities:
        s, w, n, e = c.bbox
        ring = [(w, s), (e, s), (e, n), (w, n), (w, s)]
        regions.append(Region(c.region_id, c.name, "city", [[ring]], c.tier))
        step = (e - w) / c.counties
        for k in range(c.counties):
            x0 = w + k * step
            x1 = e if k == c.counties - 1 else w + (k + 1) * step
            ring = [(x0, s), (x1, s), (x1, n), (x0, n), (x0, s)]
            regions.append(Region(f"{c.region_id}-{k + 1}", f"{c.name} {k + 1}", "county", [[ring]], c.tier))
    return regions


def _xy_to_latlon(x, y, proj):
    return np.degrees(y / proj.earth_radius), np.degrees(x / proj.x_scale)


def _block_points(rng, site: SiteSpec, n: int, spec: WorldSpec):
    """``n`` uniform points in the 3 x 2 cell block around the site's cell."""
    proj = spec.proj
    c = cell_of(GeoPoint(site.lat, site.lon), proj)
    s, m = proj.cell_size, spec.home_margin
    x = rng.uniform((c.i - 1) * s + m, (c.i + 2) * s - m, n)
    y = rng.uniform(c.j * s + m, (c.j + 2) * s - m, n)
    return _xy_to_latlon(x, y, proj)


def _jitter(rng, lat, lon, sigma):
    if sigma == 0:
        return lat, lon
    dy = rng.normal(0.0, sigma, len(lat))
    dx = rng.normal(0.0, sigma, len(lat))
    lat2 = lat + np.degrees(dy / EARTH_RADIUS_M)
    lon2 = lon + np.degrees(dx / (EARTH_RADIUS_M * np.cos(np.radians(lat))))
    return lat2, lon2


def _schedule(rng, n_users: int, n_days: int, prob: float, lam: float):
    """Active (user, day) cells and their ping counts: Poisson(lam), at least 1."""
    active = rng.random((n_users, n_days)) < prob
    idle = ~active.any(axis=1)
    if idle.any():
        active[np.flatnonzero(idle), rng.integers(0, n_days, idle.sum())] = True
    counts = np.maximum(1, rng.poisson(lam, (n_users, n_days))) * active
    flat = counts.ravel()
    cells = np.repeat(np.arange(flat.size), flat)
    return cells // n_days, cells % n_days


class _Sink:
    def __init__(self):
        self.parts = []

    def add(self, ids, lat, lon, ts):
        self.parts.append((np.asarray(ids, dtype=object), lat, lon, np.asarray(ts, dtype=np.int64)))

    def table(self) -> PointTable:
        if not self.parts:
            return PointTable.empty()
        ids, lat, lon, ts = (np.concatenate(p) for p in zip(*self.parts))
        t = PointTable.from_columns(ids, np.round(lat, 7), np.round(lon, 7), ts)
        return t.sorted_by_user_time()


def _seconds_to_ts(days, secs, window: StudyWindow):
    return (days.astype(np.int64) * 86400 + secs - window.utc_offset_minutes * 60)


def _residents(rng, site: SiteSpec, commute_to: list, spec: WorldSpec, sink: _Sink, users: dict):
    n = site.residents
    if n == 0:
        return
    w = spec.window
    n_days = w.last_day - w.first_day + 1
    hlat, hlon = _block_points(rng, site, n, spec)
    wlat, wlon = hlat.copy(), hlon.copy()
    commuter = np.zeros(n, dtype=bool)
    k = 0
    for work_site, count in commute_to:
        la, lo = _block_points(rng, work_site, count, spec)
        wlat[k:k + count], wlon[k:k + count] = la, lo
        commuter[k:k + count] = True
        k += count
    prob = site.active_day_prob if site.active_day_prob is not None else spec.active_day_prob
    u, d = _schedule(rng, n, n_days, prob, spec.pings_per_day_mean)
    secs = rng.integers(0, 86400, len(u))
    at_work = commuter[u] & (secs >= WORK_SECONDS[0]) & (secs < WORK_SECONDS[1])
    lat = np.where(at_work, wlat[u], hlat[u])
    lon = np.where(at_work, wlon[u], hlon[u])
    lat, lon = _jitter(rng, lat, lon, spec.gps_noise_sigma)
    ids = np.array([f"{slug(site.name)}-r{k:05d}" for k in range(n)], dtype=object)
    sink.add(ids[u], lat, lon, _seconds_to_ts(d + w.first_day, secs, w))
    for k in range(n):
        users[ids[k]] = (GeoPoint(float(hlat[k]), float(hlon[k])),
                         GeoPoint(float(wlat[k]), float(wlon[k])))


def _tourists(rng, site: SiteSpec, spec: WorldSpec, sink: _Sink, users: dict):
    prob = site.active_day_prob if site.active_day_prob is not None else spec.active_day_prob
    n = int(round((site.tourism - 1) * site.residents * prob))
    holidays = spec.active_holidays()
    if n == 0 or not holidays:
        return
    days = np.array([date_to_day(p.during_date) for p in holidays])
    u, di = _schedule(rng, n, len(days), 1.0, spec.pings_per_day_mean)
    secs = rng.integers(*DAYTIME, len(u))
    lat, lon = _block_points(rng, site, len(u), spec)
    lat, lon = _jitter(rng, lat, lon, spec.gps_noise_sigma)
    ids = np.array([f"{slug(site.name)}-t{k:05d}" for k in range(n)], dtype=object)
    sink.add(ids[u], lat, lon, _seconds_to_ts(days[di], secs, spec.window))
    for k in range(n):
        users[ids[k]] = (None, None)


def _stay_point(rng, city: CitySpec, sites: Sequence[SiteSpec]):
    s, w, n, e = city.bbox
    slat = np.array([x.lat for x in sites])
    slon = np.array([x.lon for x in sites])
    for _ in range(1000):
        lat = rng.uniform(s + 0.1 * (n - s), n - 0.1 * (n - s))
        lon = rng.uniform(w + 0.1 * (e - w), e - 0.1 * (e - w))
        if not len(slat) or haversine_m(lat, lon, slat, slon).min() >= 1000:
            return lat, lon
    raise ValidationError(f"no room for a traveller stay point in {city.name}")


def _travellers(rng, group: int, t: TravelerSpec, spec: WorldSpec, sink: _Sink, users: dict, edges: list):
    cities = {slug(c.name): c for c in spec.cities}
    all_sites = list(spec.sites) + [s for s, _ in spec.decoys()]
    legs = [(cities[slug(c)], days) for c, days in t.itinerary]
    w = spec.window
    for k in range(t.users):
        uid = f"trav{group:03d}-{k:05d}"
        users[uid] = (None, None)
        stays = [_stay_point(rng, c, all_sites) for c, _ in legs]
        day = date_to_day(t.start)
        ids, lat, lon, ts = [], [], [], []
        for leg, ((city, n_days), (slat, slon)) in enumerate(zip(legs, stays)):
            for offset in range(n_days):
                if leg and offset == 0:
                    # travel day: morning in the old city, a pass-by, evening in the new one
                    plat, plon = stays[leg - 1]
                    secs = sorted(rng.integers(*DAYTIME, 3).tolist())
                    route = [(plat, plon)]
                    others = [c for c in spec.cities
                              if c.region_id not in (city.region_id, legs[leg - 1][0].region_id)]
                    if others:
                        route.append(_stay_point(rng, others[int(rng.integers(len(others)))], all_sites))
                    else:
                        route.append((plat, plon))
                    route.append((slat, slon))
                    for (a, b), sec in zip(route, secs):
                        ids.append(uid)
                        lat.append(a)
                        lon.append(b)
                        ts.append(day * 86400 + sec - w.utc_offset_minutes * 60)
                    edges.append(MigrationEdge(uid, legs[leg - 1][0].region_id, city.region_id,
                                               day_to_date(day + 1)))
                else:
                    n = max(1, int(rng.poisson(spec.pings_per_day_mean)))
                    for sec in np.sort(rng.integers(*DAYTIME, n)).tolist():
                        ids.append(uid)
                        lat.append(slat)
                        lon.append(slon)
                        ts.append(day * 86400 + sec - w.utc_offset_minutes * 60)
                day += 1
        la, lo = _jitter(rng, np.array(lat), np.array(lon), spec.gps_noise_sigma)
        sink.add(ids, la, lo, ts)


def generate(spec: WorldSpec) -> World:
    """Draw a world; identical specs give identical worlds."""
    root = np.random.SeedSequence(spec.seed)
    decoys = spec.decoys()
    sites = list(spec.sites) + [s for s, _ in decoys]
    tourism_sites = [s for s in spec.sites if s.tourism]
    streams = iter(root.spawn(len(sites) + len(tourism_sites) + len(spec.travelers)))
    by_name = {s.name: s for s in spec.sites}
    commute = {}
    for c in spec.commuters:
        commute.setdefault(c.home, []).append((by_name[c.work], c.users))

    sink, users, edges = _Sink(), {}, []
    for site in sites:
        _residents(np.random.Generator(np.random.PCG64(next(streams))), site,
                   commute.get(site.name, []), spec, sink, users)
    for site in tourism_sites:
        _tourists(np.random.Generator(np.random.PCG64(next(streams))), site, spec, sink, users)
    for g, t in enumerate(spec.travelers):
        _travellers(np.random.Generator(np.random.PCG64(next(streams))), g, t, spec, sink, users, edges)

    pois = [Poi(s.name, GeoPoint(s.lat, s.lon), PoiCategory.RESIDENTIAL) for s in sites]
    pois += [Poi(v.name, GeoPoint(v.lat, v.lon), PoiCategory.VILLA) for v in spec.villas]

    verdicts, tourism = {}, {}
    vlat = np.array([v.lat for v in spec.villas])
    vlon = np.array([v.lon for v in spec.villas])
    for s in sites:
        if len(vlat) and (haversine_m(s.lat, s.lon, vlat, vlon) <= spec.villa_radius).any():
            continue
        verdicts[s.name] = VERDICT_OF_LABEL[spec.label_for(s.residents)]
        tourism[s.name] = bool(s.tourism and s.tourism > 1)
    edges.sort()
    truth = GroundTruth(verdicts, tourism, users, edges)
    return World(sink.table(), pois, build_regions(spec), truth)


def write_world(world: World, outdir) -> dict:
    os.makedirs(outdir, exist_ok=True)
    paths = {
        "points": os.path.join(outdir, "points.csv"),
        "pois": os.path.join(outdir, "pois.csv"),
        "regions": os.path.join(outdir, "regions.geojson"),
        "truth": os.path.join(outdir, "truth.json"),
    }
    write_points_csv(world.points, paths["points"])
    write_pois_csv(world.pois, paths["pois"])
    with open(paths["regions"], "w", encoding="utf-8") as fh:
        json.dump(regions_to_geojson(world.regions), fh, separators=(",", ":"))
        fh.write("\n")
    with open(paths["truth"], "w", encoding="utf-8") as fh:
        fh.write(world.truth.to_json())
    return paths


# -- spec files -------------------------------------------------------------


def _date(v) -> dt.date:
    return v if isinstance(v, dt.date) else dt.date.fromisoformat(str(v))


def world_spec_from_dict(doc: dict) -> WorldSpec:
    try:
        win = doc.get("window", {})
        window = StudyWindow(_date(win.get("start_date", "2014-09-08")),
                             _date(win.get("end_date", "2015-05-03")),
                             int(win.get("utc_offset_minutes", 480)))
        holidays = tuple(HolidayPair(_date(a), _date(b)) for a, b in doc["holidays"]) \
            if "holidays" in doc else DEFAULT_HOLIDAYS
        return WorldSpec(
            seed=int(doc["seed"]),
            cities=tuple(CitySpec(c["name"], tuple(c["bbox"]), int(c.get("counties", 1)), c.get("tier"))
                         for c in doc.get("cities", [])),
            sites=tuple(SiteSpec(s["name"], float(s["lat"]), float(s["lon"]), int(s["residents"]),
                                 s.get("label"), s.get("tourism"), s.get("active_day_prob"))
                        for s in doc.get("sites", [])),
            villas=tuple(VillaSpec(v["name"], float(v["lat"]), float(v["lon"]),
                                   int(v.get("decoy_residents", 0)), float(v.get("decoy_offset", 500.0)))
                         for v in doc.get("villas", [])),
            commuters=tuple(CommuterSpec(c["home"], c["work"], int(c["users"]))
                            for c in doc.get("commuters", [])),
            travelers=tuple(TravelerSpec(tuple((a, int(b)) for a, b in t["itinerary"]),
                                         _date(t["start"]), int(t["users"]))
                            for t in doc.get("travelers", [])),
            gps_noise_sigma=float(doc.get("gps_noise_sigma", 30.0)),
            pings_per_day_mean=float(doc.get("pings_per_day_mean", 8.0)),
            active_day_prob=float(doc.get("active_day_prob", 1.0)),
            window=window,
            holidays=holidays,
            lower_threshold=float(doc.get("lower_threshold", 60)),
            upper_threshold=float(doc.get("upper_threshold", 300)),
            villa_radius=float(doc.get("villa_radius", 1000.0)),
            home_margin=float(doc.get("home_margin", 40.0)),
        )
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"bad world spec: {exc!r}") from exc
    except ParameterError as exc:
        raise ValidationError(str(exc)) from exc


def load_world_spec(path) -> WorldSpec:
    with open(path, "rb") as fh:
        try:
            doc = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ValidationError(f"{path}: {exc}") from exc
    return world_spec_from_dict(doc)


# -- scoring ----------------------------------------------------------------


def _pr(pred: set, true: set) -> tuple[float, float]:
    tp = len(pred & true)
    precision = tp / len(pred) if pred else (1.0 if not true else 0.0)
    recall = tp / len(true) if true else 1.0
    return precision, recall


def crosstab_l1(found: Sequence[CrosstabRow], truth: Sequence[CrosstabRow]) -> float:
    a = {(r.home_bucket, r.work_bucket): r.proportion for r in found}
    b = {(r.home_bucket, r.work_bucket): r.proportion for r in truth}
    return float(sum(abs(a.get(k, 0.0) - b.get(k, 0.0)) for k in a.keys() | b.keys()))


def truth_crosstab(truth: GroundTruth, regions, focal: str, named=()) -> list[CrosstabRow]:
    return homework_crosstab(truth.assignments(), regions, focal, named)


def score(verdicts: dict, truth: GroundTruth, tourism: Optional[dict] = None,
          edges: Optional[Sequence[MigrationEdge]] = None,
          crosstab: Optional[Sequence[CrosstabRow]] = None,
          crosstab_truth: Optional[Sequence[CrosstabRow]] = None) -> dict:
    """Compare detected outputs with the planted truth.

    ``verdicts`` maps site name to a verdict string and must cover exactly
    the truth's sites. ``tourism`` maps classified site names to True when
    labelled Tourism.
    """
    found = {k: str(getattr(v, "value", v)) for k, v in verdicts.items()}
    if set(found) != set(truth.verdicts):
        missing = sorted(set(truth.verdicts) ^ set(found))
        raise ValidationError(f"site sets differ: {missing[:5]}")
    out = {}
    for label in ("Vacant", "Occupied", "Excluded"):
        pred = {k for k, v in found.items() if v == label}
        true = {k for k, v in truth.verdicts.items() if v == label}
        p, r = _pr(pred, true)
        out[f"{label.lower()}_precision"] = p
        out[f"{label.lower()}_recall"] = r
    if tourism is not None:
        pred = {k for k, v in tourism.items() if v}
        true = {k for k, v in truth.tourism.items() if v}
        out["tourism_precision"], out["tourism_recall"] = _pr(pred, true)
    if edges is not None:
        pred = {(e.user_id, e.from_city, e.to_city, e.arrival_date) for e in edges}
        true = {(e.user_id, e.from_city, e.to_city, e.arrival_date) for e in truth.edges}
        p, r = _pr(pred, true)
        out["edge_f1"] = 0.0 if p + r == 0 else 2 * p * r / (p + r)
    if crosstab is not None and crosstab_truth is not None:
        out["crosstab_l1"] = crosstab_l1(crosstab, crosstab_truth)
    return out
