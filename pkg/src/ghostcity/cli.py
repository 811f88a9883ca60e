"""Command line entry point: one subcommand per stage plus ``pipeline``.

Every stage writes under ``<outdir>/<stage>/`` and reads what earlier
stages wrote there, so stages can be rerun and inspected one at a time.
Exit status: 0 success, 1 bad parameters or inputs, 2 I/O failure,
3 internal error; failures also print one JSON line on stderr.
"""

from __future__ import annotations

import argparse
import csv
import datetime as dt
import json
import os
import sys
from typing import Optional

import numpy as np

from . import plotting
from .config import PipelineConfig, load_config
from .dynamics import (
    classify_tourism,
    daily_population,
    hourly_profile,
    national_share,
    normalize_minmax,
    pairs_in_window,
    positive_pairs,
    region_membership,
    site_daily_matrix,
    write_profile,
    write_series,
    DaySeries,
)
from .errors import GhostCityError, ValidationError
from .geo import GeoPoint, cell_window, load_regions, regions_at
from .ingest import Poi, PoiCategory, parse_pois, parse_points
from .locus import infer_homework, read_homework, write_homework
from .mobility import (
    CrosstabRow,
    extract_edges,
    flow_series,
    homework_crosstab,
    read_edges,
    top_partners,
    write_crosstab,
    write_edges,
)
from .render import RasterSpec, dot_density_rgb, export_vacancy_geojson, render_dot_density
from .synthgen import GroundTruth, generate, load_world_spec, score, truth_crosstab, write_world
from .vacancy import (
    Verdict,
    assess_site,
    assess_sites,
    bin_homes,
    county_ranking,
    derive_suggested_threshold,
    exclude_villa_adjacent,
    read_vacancy,
    write_ranking,
    write_vacancy,
)

STAGES = ("locus", "vacancy", "classify", "series", "crosstab", "migrate", "render")


def _warn(msg: str) -> None:
    print(json.dumps({"status": "warning", "message": msg}), file=sys.stderr)


def _rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _num(x) -> str:
    x = float(x)
    return str(int(x)) if x.is_integer() else repr(x)


class Run:
    """Shared state for one invocation; input files are parsed at most once."""

    def __init__(self, cfg: PipelineConfig):
        self.cfg = cfg
        self._points = None
        self._regions = None

    def need(self, attr: str) -> str:
        path = getattr(self.cfg, attr)
        if path is None:
            raise ValidationError(f"input.{attr} is not configured")
        return path

    @property
    def points(self):
        if self._points is None:
            table, report = parse_points(self.need("points"), self.cfg.points_format,
                                         self.cfg.window, self.cfg.strict)
            self._points = table
            self.rejections = report
        return self._points

    @property
    def regions(self):
        if self._regions is None:
            self._regions = load_regions(self.need("regions"))
        return self._regions

    def stage_file(self, stage: str, name: str) -> str:
        return os.path.join(self.cfg.outdir, stage, name)

    def read_stage(self, stage: str, name: str) -> str:
        path = self.stage_file(stage, name)
        if not os.path.exists(path):
            raise FileNotFoundError(f"{path} is missing; run the {stage} stage first")
        return path


# -- stages -----------------------------------------------------------------


def stage_locus(run: Run) -> None:
    cfg = run.cfg
    out = cfg.stage_dir("locus")
    points = run.points
    assignments = infer_homework(points, cfg.dbscan, cfg.rules, cfg.workers, cfg.chunk_points)
    write_homework(assignments, os.path.join(out, "homework.csv"))
    _rows(os.path.join(out, "rejections.csv"), ("reason", "count"), sorted(run.rejections.items()))


def stage_vacancy(run: Run) -> None:
    cfg = run.cfg
    out = cfg.stage_dir("vacancy")
    homework = read_homework(run.read_stage("locus", "homework.csv"))
    grid = bin_homes(homework, cfg.proj)
    pois = parse_pois(run.need("pois"), strict=cfg.strict)
    sites = exclude_villa_adjacent(pois, cfg.vacancy.villa_radius)
    records = assess_sites(sites, grid, cfg.vacancy, cfg.proj)
    write_vacancy(records, os.path.join(out, "vacancy.csv"))
    cal = derive_suggested_threshold(cfg.capacity, cfg.proj.cell_area, cfg.vacancy.top_k)
    _rows(os.path.join(out, "calibration.csv"), ("quantity", "value"),
          [(k, v) for k, v in cal.items()] + [("operational_threshold", _num(cfg.vacancy.upper_threshold))])
    if cfg.regions is not None:
        counties = regions_at(run.regions, "county")
        names = {r.region_id: r.name for r in counties}
        for mode, label in (("poi_count", "vacant POIs"), ("cell_area", "vacant area (m²)")):
            ranking = county_ranking(records, counties, mode, cfg.proj)
            write_ranking(ranking, counties, os.path.join(out, f"ranking_{mode}.csv"))
            plotting.plot_ranking(ranking, names, os.path.join(out, f"ranking_{mode}.png"), label)


def _holiday_pairs(cfg: PipelineConfig):
    pairs = pairs_in_window(cfg.holidays, cfg.window)
    if len(pairs) < len(cfg.holidays):
        _warn(f"{len(cfg.holidays) - len(pairs)} holiday pair(s) fall outside the study window and are ignored")
    if not pairs:
        raise ValidationError("no holiday pair lies inside the study window")
    return pairs, min(cfg.min_positive, len(pairs))


def stage_classify(run: Run) -> None:
    cfg = run.cfg
    out = cfg.stage_dir("classify")
    vacant = [r for r in read_vacancy(run.read_stage("vacancy", "vacancy.csv")) if r.verdict is Verdict.VACANT]
    pairs, need = _holiday_pairs(cfg)
    cells = [cell_window(r.center_cell, cfg.vacancy.window_k) for r in vacant]
    matrix = site_daily_matrix(run.points, cells, cfg.window, cfg.proj)
    dates = cfg.window.dates()
    rows = []
    for r, counts in zip(vacant, matrix):
        s = DaySeries(dates, counts)
        rows.append((r.name, positive_pairs(s, pairs), len(pairs), classify_tourism(s, pairs, need).value))
    _rows(os.path.join(out, "tourism.csv"), ("poi_name", "positive_pairs", "pairs", "label"), rows)
    _rows(os.path.join(out, "site_daily.csv"), ["date"] + [r.name for r in vacant],
          [[d.isoformat()] + matrix[:, k].tolist() for k, d in enumerate(dates)])


def _series_regions(run: Run):
    ids = run.cfg.series_regions
    if ids:
        by_id = {r.region_id: r for r in run.regions}
        missing = [i for i in ids if i not in by_id]
        if missing:
            raise ValidationError(f"unknown series regions {missing}")
        return [by_id[i] for i in ids]
    return regions_at(run.regions, "city")


def stage_series(run: Run) -> None:
    cfg = run.cfg
    out = cfg.stage_dir("series")
    points = run.points
    national = daily_population(points, None, cfg.window)
    write_series(national, os.path.join(out, "national.csv"))
    week_ok = (cfg.window.start_date <= cfg.week_start
               and cfg.week_start + dt.timedelta(days=6) <= cfg.window.end_date)
    if not week_ok:
        _warn(f"week starting {cfg.week_start} is outside the study window; hourly profiles skipped")
    normed, profiles = {}, {}
    for region in _series_regions(run):
        member = region_membership(region)(points)
        daily = daily_population(points, member, cfg.window)
        share = national_share(daily, national)
        norm = normalize_minmax(share)
        rid = region.region_id
        write_series(daily, os.path.join(out, f"daily_{rid}.csv"))
        write_series(share, os.path.join(out, f"share_{rid}.csv"))
        write_series(norm, os.path.join(out, f"normalized_{rid}.csv"))
        normed[region.name] = norm
        if week_ok:
            prof = hourly_profile(points, member, cfg.week_start, cfg.window)
            write_profile(prof, os.path.join(out, f"hourly_{rid}.csv"))
            profiles[region.name] = prof
    plotting.plot_daily(normed, os.path.join(out, "daily.png"))
    if profiles:
        plotting.plot_hourly(profiles, os.path.join(out, "hourly.png"))


def stage_crosstab(run: Run) -> None:
    cfg = run.cfg
    out = cfg.stage_dir("crosstab")
    if not cfg.crosstab_focal:
        _warn("crosstab.focal is empty; nothing to tabulate")
        return
    homework = read_homework(run.read_stage("locus", "homework.csv"))
    counties = regions_at(run.regions, "county")
    for focal in cfg.crosstab_focal:
        named = [n for n in cfg.crosstab_named if n != focal]
        rows = homework_crosstab(homework, counties, focal, named)
        write_crosstab(rows, os.path.join(out, f"crosstab_{focal}.csv"))


def stage_migrate(run: Run) -> None:
    cfg = run.cfg
    out = cfg.stage_dir("migrate")
    regions = regions_at(run.regions, cfg.migrate_level)
    names = {r.region_id: r.name for r in regions}
    edges = extract_edges(run.points, regions, cfg.window.utc_offset_minutes, cfg.first_mapped)
    write_edges(edges, os.path.join(out, "edges.csv"))
    focal = cfg.migrate_focal or tuple(sorted(names))
    lo, hi = cfg.partner_window
    for rid in focal:
        if rid not in names:
            raise ValidationError(f"unknown migration region {rid!r}")
        inflow, outflow = flow_series(edges, rid, cfg.window)
        _rows(os.path.join(out, f"flows_{rid}.csv"), ("date", "inflow", "outflow"),
              [(d.isoformat(), _num(a), _num(b))
               for d, a, b in zip(inflow.dates, inflow.values, outflow.values)])
        plotting.plot_flows(inflow, outflow, os.path.join(out, f"flows_{rid}.png"), names[rid])
        for direction in ("in", "out"):
            partners = top_partners(edges, rid, lo, hi, direction)
            _rows(os.path.join(out, f"partners_{rid}_{direction}.csv"), ("region_id", "name", "proportion"),
                  [(p, names.get(p, ""), repr(float(v))) for p, v in partners])


def _render_bbox(run: Run, lat: np.ndarray, lon: np.ndarray):
    cfg = run.cfg
    if cfg.render_region is not None:
        match = [r for r in run.regions if r.region_id == cfg.render_region]
        if not match:
            raise ValidationError(f"unknown render region {cfg.render_region!r}")
        w, s, e, n = match[0].bbox
    elif len(lat):
        s, n, w, e = lat.min(), lat.max(), lon.min(), lon.max()
    else:
        s, n, w, e = 0.0, 1.0, 0.0, 1.0
    pad_y = max((n - s) * 0.02, 1e-3)
    pad_x = max((e - w) * 0.02, 1e-3)
    return GeoPoint(max(-90.0, s - pad_y), max(-180.0, w - pad_x)), GeoPoint(min(90.0, n + pad_y), min(179.999999, e + pad_x))


def stage_render(run: Run) -> None:
    cfg = run.cfg
    out = cfg.stage_dir("render")
    homework = read_homework(run.read_stage("locus", "homework.csv"))
    homes = np.array([[p.lat, p.lon] for a in homework for p, _ in a.homes]).reshape(-1, 2)
    works = np.array([[a.work.lat, a.work.lon] for a in homework if a.work is not None]).reshape(-1, 2)
    both = np.vstack([homes, works])
    spec = RasterSpec(_render_bbox(run, both[:, 0], both[:, 1]), cfg.render_width, proj=cfg.proj)
    home_xy, work_xy = (homes[:, 0], homes[:, 1]), (works[:, 0], works[:, 1])
    with open(os.path.join(out, "homework.ppm"), "wb") as fh:
        fh.write(render_dot_density(home_xy, work_xy, spec))
    plotting.save_rgb(dot_density_rgb(home_xy, work_xy, spec), os.path.join(out, "homework.png"))
    grid = bin_homes(homework, cfg.proj)
    vacant = [r for r in read_vacancy(run.read_stage("vacancy", "vacancy.csv")) if r.verdict is Verdict.VACANT]
    records = [assess_site(Poi(r.name, r.location, PoiCategory.RESIDENTIAL), grid, cfg.vacancy, cfg.proj)
               for r in vacant]
    with open(os.path.join(out, "vacancy.geojson"), "w", encoding="utf-8") as fh:
        fh.write(export_vacancy_geojson(records, cfg.proj))
        fh.write("\n")


def stage_score(run: Run) -> dict:
    cfg = run.cfg
    out = cfg.stage_dir("score")
    with open(run.need("truth"), encoding="utf-8") as fh:
        truth = GroundTruth.from_json(fh.read())
    verdicts = {r.name: r.verdict.value for r in read_vacancy(run.read_stage("vacancy", "vacancy.csv"))}
    tourism = edges = None
    tpath = run.stage_file("classify", "tourism.csv")
    if os.path.exists(tpath):
        with open(tpath, encoding="utf-8", newline="") as fh:
            tourism = {r["poi_name"]: r["label"] == "Tourism" for r in csv.DictReader(fh)}
    epath = run.stage_file("migrate", "edges.csv")
    if os.path.exists(epath):
        edges = read_edges(epath)
    metrics = score(verdicts, truth, tourism, edges)
    if cfg.regions is not None:
        counties = regions_at(run.regions, "county")
        for focal in cfg.crosstab_focal:
            cpath = run.stage_file("crosstab", f"crosstab_{focal}.csv")
            if not os.path.exists(cpath):
                continue
            with open(cpath, encoding="utf-8", newline="") as fh:
                found = [CrosstabRow(r["home_bucket"], r["work_bucket"], float(r["proportion"]))
                         for r in csv.DictReader(fh)]
            named = [n for n in cfg.crosstab_named if n != focal]
            expect = truth_crosstab(truth, counties, focal, named)
            metrics[f"crosstab_l1_{focal}"] = score(verdicts, truth, crosstab=found, crosstab_truth=expect)["crosstab_l1"]
    with open(os.path.join(out, "score.json"), "w", encoding="utf-8") as fh:
        json.dump(metrics, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return metrics


STAGE_FUNCS = {
    "locus": stage_locus,
    "vacancy": stage_vacancy,
    "classify": stage_classify,
    "series": stage_series,
    "crosstab": stage_crosstab,
    "migrate": stage_migrate,
    "render": stage_render,
}


def run_pipeline(cfg: PipelineConfig) -> Optional[dict]:
    run = Run(cfg)
    for name in STAGES:
        STAGE_FUNCS[name](run)
    if cfg.truth is not None:
        return stage_score(run)
    return None


# -- argument handling ------------------------------------------------------


def _common() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("-c", "--config", help="pipeline TOML file")
    p.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE",
                   help="override one config value (repeatable)")
    p.add_argument("--out", help="output directory (overrides output.dir)")
    p.add_argument("--workers", type=int, help="worker processes for home inference")
    p.add_argument("--strict", action="store_true", default=None, help="fail on the first malformed input row")
    return p


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="ghostcity", description="Vacancy, population dynamics and mobility from positioning logs.")
    sub = parser.add_subparsers(dest="command", required=True)
    common = _common()
    g = sub.add_parser("gen", help="generate a synthetic world")
    g.add_argument("world", help="world spec TOML")
    g.add_argument("--out", required=True, help="output directory; files go to <out>/gen/")
    g.add_argument("--seed", type=int, help="override the world seed")
    for name, text in (("locus", "infer home and work places"),
                       ("vacancy", "assess residential sites and rank counties"),
                       ("classify", "label vacant sites as tourism or not"),
                       ("series", "daily and hourly population series"),
                       ("crosstab", "home/work cross tabulation"),
                       ("migrate", "migration edges, flows and partners"),
                       ("render", "dot-density raster and vacancy GeoJSON"),
                       ("pipeline", "run every stage in order, then score if truth is configured"),
                       ("score", "compare stage outputs with ground truth")):
        sp = sub.add_parser(name, help=text, parents=[common])
        sp.add_argument("--seed", type=int, help=argparse.SUPPRESS)
    return parser


def _config(args) -> PipelineConfig:
    overrides = list(args.set)
    if args.out is not None:
        overrides.append(f"output.dir={json.dumps(os.path.abspath(args.out))}")
    if args.workers is not None:
        overrides.append(f"run.workers={args.workers}")
    if args.strict:
        overrides.append("run.strict=true")
    return load_config(args.config, overrides)


def _dispatch(args) -> int:
    if args.command == "gen":
        spec = load_world_spec(args.world)
        if args.seed is not None:
            from dataclasses import replace
            spec = replace(spec, seed=args.seed)
        paths = write_world(generate(spec), os.path.join(args.out, "gen"))
        print(json.dumps(paths, sort_keys=True))
        return 0
    cfg = _config(args)
    if args.command == "pipeline":
        metrics = run_pipeline(cfg)
        if metrics is not None:
            print(json.dumps(metrics, sort_keys=True))
        return 0
    run = Run(cfg)
    if args.command == "score":
        print(json.dumps(stage_score(run), sort_keys=True))
        return 0
    STAGE_FUNCS[args.command](run)
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        if isinstance(exc, GhostCityError):
            code, kind = exc.exit_code, exc.kind
        elif isinstance(exc, OSError):
            code, kind = 2, "io"
        else:
            code, kind = 3, "internal"
        print(json.dumps({"status": "error", "kind": kind, "exit": code,
                          "message": str(exc) or type(exc).__name__}), file=sys.stderr)
        return code


if __name__ == "__main__":
    sys.exit(main())
