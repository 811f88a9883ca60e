"""Pipeline configuration: a TOML file plus ``section.key=value`` overrides.

Every block mirrors one stage's parameter dataclass and defaults to the
reference values; relative input paths resolve against the config file's
directory.
"""

from __future__ import annotations

import datetime as dt
import os
import sys
from dataclasses import dataclass, field
from typing import Optional

from .dynamics import DEFAULT_HOLIDAYS, HolidayPair
from .errors import ParameterError
from .geo import ProjectionParams
from .ingest import StudyWindow
from .locus import DbscanParams, LocusRules
from .vacancy import CapacityParams, VacancyParams

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

SECTIONS = ("input", "output", "run", "window", "grid", "locus", "vacancy", "capacity",
            "tourism", "series", "crosstab", "migrate", "render")


@dataclass
class PipelineConfig:
    points: Optional[str] = None
    pois: Optional[str] = None
    regions: Optional[str] = None
    truth: Optional[str] = None
    points_format: str = "csv"
    outdir: str = "out"
    workers: int = 1
    strict: bool = False
    chunk_points: int = 1_000_000
    window: StudyWindow = field(default_factory=StudyWindow)
    proj: ProjectionParams = field(default_factory=ProjectionParams)
    dbscan: DbscanParams = field(default_factory=DbscanParams)
    rules: LocusRules = field(default_factory=LocusRules)
    vacancy: VacancyParams = field(default_factory=VacancyParams)
    capacity: CapacityParams = field(default_factory=CapacityParams)
    holidays: tuple = DEFAULT_HOLIDAYS
    min_positive: int = 2
    series_regions: tuple = ()
    week_start: dt.date = dt.date(2015, 3, 23)
    crosstab_focal: tuple = ()
    crosstab_named: tuple = ()
    migrate_level: str = "city"
    first_mapped: bool = True
    migrate_focal: tuple = ()
    partner_window: tuple = (dt.date(2014, 10, 1), dt.date(2014, 10, 7))
    render_width: int = 800
    render_region: Optional[str] = None

    def __post_init__(self):
        if self.workers < 1:
            raise ParameterError("run.workers must be >= 1")
        if self.chunk_points < 1:
            raise ParameterError("run.chunk_points must be >= 1")
        if self.min_positive < 1:
            raise ParameterError("tourism.min_positive must be >= 1")
        if self.points_format not in ("csv", "jsonl"):
            raise ParameterError("input.format must be csv or jsonl")
        if self.migrate_level not in ("city", "county", "province"):
            raise ParameterError("migrate.level must be city, county or province")
        if self.render_width < 1:
            raise ParameterError("render.width_px must be >= 1")
        if self.week_start.weekday() != 0:
            raise ParameterError("series.week_start must be a Monday")
        if self.partner_window[0] > self.partner_window[1]:
            raise ParameterError("migrate.partner_window is reversed")
        if self.vacancy.lower_threshold >= self.vacancy.upper_threshold:
            raise ParameterError("vacancy thresholds must satisfy lower < upper")

    def stage_dir(self, stage: str) -> str:
        path = os.path.join(self.outdir, stage)
        os.makedirs(path, exist_ok=True)
        return path


def parse_override(text: str) -> tuple[str, str, object]:
    """``section.key=value``; the value is read as TOML and falls back to a bare string."""
    if "=" not in text or "." not in text.split("=", 1)[0]:
        raise ParameterError(f"override {text!r} is not section.key=value")
    lhs, raw = text.split("=", 1)
    section, key = lhs.strip().split(".", 1)
    try:
        value = tomllib.loads(f"v = {raw.strip()}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw.strip()
    return section, key, value


def _date(v) -> dt.date:
    try:
        return v if isinstance(v, dt.date) else dt.date.fromisoformat(str(v))
    except ValueError as exc:
        raise ParameterError(f"bad date {v!r}") from exc


def _names(v) -> tuple:
    return (v,) if isinstance(v, str) else tuple(str(x) for x in v)


def _pair(v, name):
    if not isinstance(v, (list, tuple)) or len(v) != 2:
        raise ParameterError(f"{name} must be a two-element list")
    return tuple(v)


def load_config(path: Optional[str] = None, overrides=(), base_dir: Optional[str] = None) -> PipelineConfig:
    doc: dict = {}
    if path is not None:
        with open(path, "rb") as fh:
            try:
                doc = tomllib.load(fh)
            except tomllib.TOMLDecodeError as exc:
                raise ParameterError(f"{path}: {exc}") from exc
        base_dir = base_dir or os.path.dirname(os.path.abspath(path))
    base_dir = base_dir or os.getcwd()
    for text in overrides:
        section, key, value = parse_override(text)
        doc.setdefault(section, {})[key] = value
    return config_from_dict(doc, base_dir)


def config_from_dict(doc: dict, base_dir: str = ".") -> PipelineConfig:
    unknown = set(doc) - set(SECTIONS)
    if unknown:
        raise ParameterError(f"unknown config sections {sorted(unknown)}")
    sec = {name: dict(doc.get(name, {})) for name in SECTIONS}

    def take(section, key, default):
        return sec[section].pop(key, default)

    def path_of(v):
        return None if v is None else os.path.normpath(os.path.join(base_dir, str(v)))

    try:
        window = StudyWindow(_date(take("window", "start_date", "2014-09-08")),
                             _date(take("window", "end_date", "2015-04-22")),
                             int(take("window", "utc_offset_minutes", 480)))
        proj = ProjectionParams(float(take("grid", "standard_parallel", 35.0)),
                                float(take("grid", "earth_radius", ProjectionParams().earth_radius)),
                                float(take("grid", "cell_size", 100.0)))
        dbscan = DbscanParams(float(take("locus", "eps", 200.0)), int(take("locus", "min_pts", 2)))
        rules = LocusRules(_pair(take("locus", "home_hours", [21, 6]), "locus.home_hours"),
                           _pair(take("locus", "work_hours", [9, 18]), "locus.work_hours"),
                           float(take("locus", "dual_home_ratio", 0.6)),
                           float(take("locus", "dual_home_separation", 1000.0)),
                           window.utc_offset_minutes)
        vacancy = VacancyParams(int(take("vacancy", "window_k", 5)), int(take("vacancy", "top_k", 6)),
                                float(take("vacancy", "upper_threshold", 300)),
                                float(take("vacancy", "lower_threshold", 60)),
                                float(take("vacancy", "villa_radius", 1000.0)))
        capacity = CapacityParams(float(take("capacity", "floor_area_ratio", 1.0)),
                                  float(take("capacity", "living_area_per_capita", 30.0)),
                                  float(take("capacity", "sampled_users", 7.7e8)),
                                  float(take("capacity", "total_population", 1.36e9)),
                                  float(take("capacity", "vacancy_fraction", 0.25)))
        holidays = take("tourism", "holidays", None)
        holidays = DEFAULT_HOLIDAYS if holidays is None else tuple(
            HolidayPair(_date(a), _date(b)) for a, b in (_pair(h, "tourism.holidays") for h in holidays))
        cfg = PipelineConfig(
            points=path_of(take("input", "points", None)),
            pois=path_of(take("input", "pois", None)),
            regions=path_of(take("input", "regions", None)),
            truth=path_of(take("input", "truth", None)),
            points_format=str(take("input", "format", "csv")),
            outdir=path_of(take("output", "dir", "out")),
            workers=int(take("run", "workers", 1)),
            strict=bool(take("run", "strict", False)),
            chunk_points=int(take("run", "chunk_points", 1_000_000)),
            window=window, proj=proj, dbscan=dbscan, rules=rules, vacancy=vacancy, capacity=capacity,
            holidays=holidays,
            min_positive=int(take("tourism", "min_positive", 2)),
            series_regions=_names(take("series", "regions", ())),
            week_start=_date(take("series", "week_start", "2015-03-23")),
            crosstab_focal=_names(take("crosstab", "focal", ())),
            crosstab_named=_names(take("crosstab", "named", ())),
            migrate_level=str(take("migrate", "level", "city")),
            first_mapped=bool(take("migrate", "first_mapped", True)),
            migrate_focal=_names(take("migrate", "focal", ())),
            partner_window=tuple(_date(d) for d in _pair(
                take("migrate", "partner_window", ["2014-10-01", "2014-10-07"]), "migrate.partner_window")),
            render_width=int(take("render", "width_px", 800)),
            render_region=take("render", "region", None),
        )
    except (TypeError, ValueError) as exc:
        if isinstance(exc, ParameterError):
            raise
        raise ParameterError(str(exc)) from exc
    leftover = {f"{s}.{k}" for s, keys in sec.items() for k in keys}
    if leftover:
        raise ParameterError(f"unknown config keys {sorted(leftover)}")
    return cfg
