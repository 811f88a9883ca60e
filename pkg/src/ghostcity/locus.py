"""Home and work inference by density clustering of time-windowed fixes.

The clustering engine works on many users at once. Points are bucketed
on a lat/lon grid a third of ``eps`` wide; a bucket that provably fits
inside one ``eps`` ball and holds ``min_pts`` points is all-core and
internally connected, so only sparse buckets and undecided bucket pairs
ever need point-to-point distances. The result is exact with respect to
the haversine predicate ``d <= eps``.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ParameterError, ValidationError
from .geo import EARTH_RADIUS_M, GeoPoint, haversine_m
from .ingest import PointTable, local_hour_mask

_K = 3  # buckets per eps along each axis
_PAIR_BATCH = 4_000_000
_SAFE = 1.0 - 1e-9


@dataclass(frozen=True)
class DbscanParams:
    eps: float = 200.0
    min_pts: int = 2

    def __post_init__(self):
        if not self.eps > 0:
            raise ParameterError("eps must be positive")
        if int(self.min_pts) != self.min_pts or self.min_pts < 1:
            raise ParameterError("min_pts must be an integer >= 1")


@dataclass(frozen=True)
class LocusRules:
    """Time windows and the dual-home rule used for home/work inference."""

    home_hours: tuple[float, float] = (21, 6)
    work_hours: tuple[float, float] = (9, 18)
    dual_home_ratio: float = 0.6
    dual_home_separation: float = 1000.0
    utc_offset_minutes: int = 480

    def __post_init__(self):
        for lo, hi in (self.home_hours, self.work_hours):
            if not (0 <= lo <= 24 and 0 <= hi <= 24):
                raise ParameterError("hour windows must lie in [0, 24]")
        if not 0 < self.dual_home_ratio <= 1:
            raise ParameterError("dual_home_ratio must be in (0, 1]")
        if self.dual_home_separation < 0:
            raise ParameterError("dual_home_separation must be >= 0")


@dataclass(frozen=True)
class Cluster:
    member_indices: frozenset
    centroid: GeoPoint
    first_timestamp: int


@dataclass(frozen=True)
class HomeWorkAssignment:
    user_id: str
    homes: tuple  # ((GeoPoint, weight), ...), one or two entries
    work: Optional[GeoPoint] = None

    def __post_init__(self):
        if not 1 <= len(self.homes) <= 2:
            raise ValidationError(f"{self.user_id}: expected 1 or 2 homes")

    @property
    def home(self) -> GeoPoint:
        return self.homes[0][0]


# -- clustering engine ------------------------------------------------------


def _cross(starts_a, counts_a, starts_b, counts_b):
    """Every (a, b) index pair for each block pair, blocks given by start/count."""
    sizes = counts_a * counts_b
    total = int(sizes.sum())
    if total == 0:
        e = np.empty(0, dtype=np.int64)
        return e, e
    blk = np.repeat(np.arange(len(sizes)), sizes)
    offs = np.arange(total, dtype=np.int64) - np.repeat(np.cumsum(sizes) - sizes, sizes)
    cb = counts_b[blk]
    return starts_a[blk] + offs // cb, starts_b[blk] + offs % cb


def _batches(sizes, budget=_PAIR_BATCH):
    """Split block indices into runs whose summed size stays near ``budget``."""
    if len(sizes) == 0:
        return
    cum = np.cumsum(sizes)
    start = 0
    while start < len(sizes):
        base = cum[start - 1] if start else 0
        stop = int(np.searchsorted(cum, base + budget, side="right"))
        stop = max(stop, start + 1)
        yield slice(start, stop)
        start = stop


class _Grid:
    """Bucket layout for one chunk of points (already in processing order)."""

    def __init__(self, group, phi, lam, eps, radius):
        self.eps = eps
        self.radius = radius
        aphi = np.abs(phi)
        same_sign = phi.min() >= 0 or phi.max() <= 0
        self.c_max = math.cos(float(aphi.min())) if same_sign else 1.0
        self.c_min = max(math.cos(float(aphi.max())), 0.0)
        s = math.sin(eps / (2 * radius))
        self.h = (eps / radius) / _K * (1 + 1e-9)
        if self.c_min > 0 and s / self.c_min < 1:
            wmax = 2 * math.asin(s / self.c_min)
        else:
            wmax = 2 * math.pi
        self.w = wmax / _K * (1 + 1e-9)

        cy = np.floor(phi / self.h).astype(np.int64)
        cx = np.floor(lam / self.w).astype(np.int64)
        cy -= cy.min() - _K
        cx -= cx.min() - _K
        self.ny = int(cy.max()) + _K + 1
        self.nx = int(cx.max()) + _K + 1
        key = (group * self.ny + cy) * self.nx + cx
        self.perm = np.argsort(key, kind="stable")
        skey = key[self.perm]
        self.keys, self.starts, self.counts = np.unique(
            skey, return_index=True, return_counts=True)
        self.cell = np.repeat(np.arange(len(self.keys)), self.counts)

    def upper_bound(self, dx, dy):
        """Largest possible distance between points of buckets ``(dx, dy)`` apart."""
        dphi = self.h * (abs(dy) + 1)
        dlam = min(self.w * (abs(dx) + 1), math.pi)
        hv = math.sin(dphi / 2) ** 2 + self.c_max ** 2 * math.sin(dlam / 2) ** 2
        return 2 * self.radius * math.asin(min(1.0, math.sqrt(hv)))

    def guaranteed(self, dx, dy):
        return self.upper_bound(dx, dy) <= self.eps * _SAFE

    def neighbours(self, cells, dx, dy):
        """Bucket index at offset ``(dx, dy)`` from each of ``cells`` (``-1`` if empty)."""
        target = self.keys[cells] + dy * self.nx + dx
        pos = np.searchsorted(self.keys, target)
        pos = np.minimum(pos, len(self.keys) - 1)
        hit = self.keys[pos] == target
        return np.where(hit, pos, -1)


def _offsets(forward=False):
    out = []
    for dy in range(-_K, _K + 1):
        for dx in range(-_K, _K + 1):
            if forward and not (dy > 0 or (dy == 0 and dx > 0)):
                continue
            out.append((dx, dy))
    return out


def _within(phi, lam, cphi, a, b, eps, radius):
    dphi = phi[b] - phi[a]
    dlam = lam[b] - lam[a]
    hv = np.sin(dphi / 2) ** 2 + cphi[a] * cphi[b] * np.sin(dlam / 2) ** 2
    d = 2 * radius * np.arcsin(np.sqrt(np.minimum(1.0, hv)))
    return d <= eps


def dbscan_labels(group, lat, lon, eps=200.0, min_pts=2, radius=EARTH_RADIUS_M) -> np.ndarray:
    """Cluster label per point, ``-1`` for noise.

    Points must be sorted by ``group`` and, within a group, by processing
    order; points in different groups never neighbour each other. Cluster
    ids increase with the position of each cluster's first core point, and
    a border point joins the lowest-numbered cluster that reaches it, which
    is what a sequential scan in this order produces.
    """
    n = len(lat)
    if n == 0:
        return np.empty(0, dtype=np.int64)
    group = np.asarray(group, dtype=np.int64)
    _, group = np.unique(group, return_inverse=True)
    phi_o = np.radians(np.asarray(lat, dtype=float))
    lam_o = np.radians(np.asarray(lon, dtype=float))
    grid = _Grid(group, phi_o, lam_o, eps, radius)
    perm = grid.perm
    phi, lam = phi_o[perm], lam_o[perm]
    cphi = np.cos(phi)
    starts, counts, cell = grid.starts, grid.counts, grid.cell

    dense_cell = (counts >= min_pts) & grid.guaranteed(0, 0)
    core = dense_cell[cell].copy()

    # sparse buckets: exact neighbour counts against everything nearby
    sparse_cells = np.flatnonzero(~dense_cell)
    pa_list, pb_list = [], []
    deg = np.zeros(n, dtype=np.int64)
    if len(sparse_cells):
        for dx, dy in _offsets():
            nb = grid.neighbours(sparse_cells, dx, dy)
            ok = nb >= 0
            if not ok.any():
                continue
            ca, cb = sparse_cells[ok], nb[ok]
            sizes = counts[ca] * counts[cb]
            for sl in _batches(sizes):
                a, b = _cross(starts[ca[sl]], counts[ca[sl]], starts[cb[sl]], counts[cb[sl]])
                keep = a != b
                a, b = a[keep], b[keep]
                hit = _within(phi, lam, cphi, a, b, eps, radius)
                a, b = a[hit], b[hit]
                deg += np.bincount(a, minlength=n)
                pa_list.append(a)
                pb_list.append(b)
    pa = np.concatenate(pa_list) if pa_list else np.empty(0, dtype=np.int64)
    pb = np.concatenate(pb_list) if pb_list else np.empty(0, dtype=np.int64)
    sparse_pt = ~dense_cell[cell]
    core[sparse_pt] = deg[sparse_pt] + 1 >= min_pts

    # connectivity among core points
    ea, eb = [], []
    dense_idx = np.flatnonzero(dense_cell)
    if len(dense_idx):
        # chain the members of each dense bucket
        m = np.flatnonzero(dense_cell[cell])
        nxt = m[1:]
        same = cell[m[:-1]] == cell[nxt]
        ea.append(m[:-1][same])
        eb.append(nxt[same])
    both = core[pa] & core[pb]
    ea.append(pa[both])
    eb.append(pb[both])

    pending = []
    if len(dense_idx):
        for dx, dy in _offsets(forward=True):
            nb = grid.neighbours(dense_idx, dx, dy)
            ok = nb >= 0
            if not ok.any():
                continue
            nb_ok = nb[ok]
            ok2 = dense_cell[nb_ok]
            ca, cb = dense_idx[ok][ok2], nb_ok[ok2]
            if not len(ca):
                continue
            if grid.guaranteed(dx, dy):
                ea.append(starts[ca])
                eb.append(starts[cb])
            else:
                pending.append((max(abs(dx), abs(dy)), ca, cb))

    def components(ea, eb):
        a = np.concatenate(ea) if ea else np.empty(0, dtype=np.int64)
        b = np.concatenate(eb) if eb else np.empty(0, dtype=np.int64)
        g = coo_matrix((np.ones(len(a), dtype=np.int8), (a, b)), shape=(n, n))
        return connected_components(g, directed=False)[1]

    comp = components(ea, eb)
    for ring in range(1, _K + 1):
        todo = [(ca, cb) for r, ca, cb in pending if r == ring]
        if not todo:
            continue
        ca = np.concatenate([t[0] for t in todo])
        cb = np.concatenate([t[1] for t in todo])
        live = comp[starts[ca]] != comp[starts[cb]]
        ca, cb = ca[live], cb[live]
        if not len(ca):
            continue
        sizes = counts[ca] * counts[cb]
        for sl in _batches(sizes):
            a, b = _cross(starts[ca[sl]], counts[ca[sl]], starts[cb[sl]], counts[cb[sl]])
            hit = _within(phi, lam, cphi, a, b, eps, radius)
            ea.append(a[hit])
            eb.append(b[hit])
        comp = components(ea, eb)

    # number clusters by first core point in processing order
    labels = np.full(n, -1, dtype=np.int64)
    core_idx = np.flatnonzero(core)
    if len(core_idx):
        rank = perm  # position in the caller's order
        first = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
        np.minimum.at(first, comp[core_idx], rank[core_idx])
        roots = np.flatnonzero(first < np.iinfo(np.int64).max)
        order = np.argsort(first[roots], kind="stable")
        cid = np.full(n, -1, dtype=np.int64)
        cid[roots[order]] = np.arange(len(roots))
        labels[core_idx] = cid[comp[core_idx]]
        border = ~core[pa] & core[pb]
        if border.any():
            best = np.full(n, np.iinfo(np.int64).max, dtype=np.int64)
            np.minimum.at(best, pa[border], labels[pb[border]])
            hit = best < np.iinfo(np.int64).max
            labels[hit] = best[hit]

    out = np.empty(n, dtype=np.int64)
    out[perm] = labels
    return out


def dbscan(points: Sequence[GeoPoint], params: DbscanParams = DbscanParams(),
           timestamps: Optional[Sequence[int]] = None,
           radius: float = EARTH_RADIUS_M) -> tuple[list[Cluster], set[int]]:
    """Density clustering of ``points`` with the haversine metric.

    Points are visited in ``(timestamp, input index)`` order (input order
    when no timestamps are given). Returns clusters in discovery order and
    the set of noise indices.
    """
    n = len(points)
    if n == 0:
        return [], set()
    lat = np.array([p.lat for p in points], dtype=float)
    lon = np.array([p.lon for p in points], dtype=float)
    ts = np.zeros(n, dtype=np.int64) if timestamps is None else np.asarray(timestamps, dtype=np.int64)
    order = np.lexsort((np.arange(n), ts))
    lab_sorted = dbscan_labels(np.zeros(n), lat[order], lon[order],
                               params.eps, params.min_pts, radius)
    labels = np.empty(n, dtype=np.int64)
    labels[order] = lab_sorted
    clusters = []
    for c in range(int(labels.max()) + 1 if (labels >= 0).any() else 0):
        idx = np.flatnonzero(labels == c)
        clusters.append(Cluster(
            frozenset(int(i) for i in idx),
            _centroid(lat[idx], lon[idx]),
            int(ts[idx].min()),
        ))
    return clusters, {int(i) for i in np.flatnonzero(labels < 0)}


def _centroid(lat, lon) -> GeoPoint:
    clat = min(max(float(lat.mean()), float(lat.min())), float(lat.max()))
    clon = min(max(float(lon.mean()), float(lon.min())), float(lon.max()))
    return GeoPoint(clat, clon)


# -- per-user location selection --------------------------------------------


def _chunk_bounds(user_sorted: np.ndarray, budget: int):
    """Split a user-sorted code array into chunks of whole users."""
    n = len(user_sorted)
    if n == 0:
        return []
    brk = np.flatnonzero(np.diff(user_sorted)) + 1
    starts = np.concatenate([[0], brk])
    bounds = []
    lo = 0
    while lo < n:
        hi_target = lo + budget
        if hi_target >= n:
            bounds.append((lo, n))
            break
        k = int(np.searchsorted(starts, hi_target, side="right")) - 1
        hi = int(starts[k])
        if hi <= lo:  # one user bigger than the budget
            k = int(np.searchsorted(starts, lo, side="right"))
            hi = int(starts[k]) if k < len(starts) else n
        bounds.append((lo, hi))
        lo = hi
    return bounds


def _locate_chunk(args):
    """Best (and optionally second) cluster per user for one chunk.

    Returns ``(users, lat1, lon1, lat2, lon2)``; the second location is NaN
    unless the dual rule accepts it.
    """
    user, lat, lon, ts, eps, min_pts, radius, dual = args
    labels = dbscan_labels(user, lat, lon, eps, min_pts, radius)
    keep = labels >= 0
    if not keep.any():
        e = np.empty(0)
        return np.empty(0, dtype=np.int64), e, e, e, e
    lab = labels[keep]
    ncl = int(lab.max()) + 1
    size = np.bincount(lab, minlength=ncl)
    slat = np.bincount(lab, weights=lat[keep], minlength=ncl)
    slon = np.bincount(lab, weights=lon[keep], minlength=ncl)
    big = np.iinfo(np.int64).max
    tmin = np.full(ncl, big, dtype=np.int64)
    tmax = np.full(ncl, -big, dtype=np.int64)
    np.minimum.at(tmin, lab, ts[keep])
    np.maximum.at(tmax, lab, ts[keep])
    latmin = np.full(ncl, np.inf)
    latmax = np.full(ncl, -np.inf)
    lonmin = np.full(ncl, np.inf)
    lonmax = np.full(ncl, -np.inf)
    np.minimum.at(latmin, lab, lat[keep])
    np.maximum.at(latmax, lab, lat[keep])
    np.minimum.at(lonmin, lab, lon[keep])
    np.maximum.at(lonmax, lab, lon[keep])
    clat = np.clip(slat / size, latmin, latmax)
    clon = np.clip(slon / size, lonmin, lonmax)
    cuser = np.zeros(ncl, dtype=np.int64)
    cuser[lab] = user[keep]
    span = tmax - tmin

    order = np.lexsort((clon, clat, -span, -size, cuser))
    u_sorted = cuser[order]
    first = np.concatenate([[True], u_sorted[1:] != u_sorted[:-1]])
    best = order[first]
    users = cuser[best]
    lat2 = np.full(len(best), np.nan)
    lon2 = np.full(len(best), np.nan)
    if dual is not None:
        ratio, sep = dual
        pos = np.flatnonzero(first)
        nxt = pos + 1
        has = nxt < len(order)
        has[has] &= u_sorted[nxt[has]] == u_sorted[pos[has]]
        k = np.flatnonzero(has)
        a, b = order[pos[k]], order[nxt[k]]
        d = haversine_m(clat[a], clon[a], clat[b], clon[b], radius)
        ok = (size[b] >= ratio * size[a]) & (d > sep)
        lat2[k[ok]] = clat[b[ok]]
        lon2[k[ok]] = clon[b[ok]]
    return users, clat[best], clon[best], lat2, lon2


def _locate(points: PointTable, hours, params: DbscanParams, offset_minutes, dual,
            workers=1, chunk_points=1_000_000, radius=EARTH_RADIUS_M):
    mask = local_hour_mask(points.ts, hours[0], hours[1], offset_minutes)
    sub = points.take(mask).sorted_by_user_time()
    tasks = [
        (sub.user[lo:hi].astype(np.int64), sub.lat[lo:hi], sub.lon[lo:hi], sub.ts[lo:hi],
         params.eps, params.min_pts, radius, dual)
        for lo, hi in _chunk_bounds(sub.user, chunk_points)
    ]
    if workers > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(_locate_chunk, tasks))
    else:
        parts = [_locate_chunk(t) for t in tasks]
    if not parts:
        e = np.empty(0)
        return np.empty(0, dtype=np.int64), e, e, e, e
    return tuple(np.concatenate([p[k] for p in parts]) for k in range(5))


def infer_homework(points: PointTable, params: DbscanParams = DbscanParams(),
                   rules: LocusRules = LocusRules(), workers: int = 1,
                   chunk_points: int = 1_000_000) -> list[HomeWorkAssignment]:
    """Home (one or two) and work location for every user with a home.

    Users whose home-hour fixes form no cluster are left out. Output is
    ordered by user id and does not depend on ``workers``.
    """
    hu, hlat, hlon, hlat2, hlon2 = _locate(
        points, rules.home_hours, params, rules.utc_offset_minutes,
        (rules.dual_home_ratio, rules.dual_home_separation), workers, chunk_points)
    wu, wlat, wlon, _, _ = _locate(
        points, rules.work_hours, params, rules.utc_offset_minutes, None, workers, chunk_points)
    work = {int(u): (a, b) for u, a, b in zip(wu, wlat, wlon)}
    out = []
    for u, a, b, a2, b2 in zip(hu, hlat, hlon, hlat2, hlon2):
        homes = [(GeoPoint(float(a), float(b)), 1.0)]
        if not math.isnan(a2):
            homes.append((GeoPoint(float(a2), float(b2)), 1.0))
        w = work.get(int(u))
        out.append(HomeWorkAssignment(
            str(points.user_ids[u]), tuple(homes),
            None if w is None else GeoPoint(float(w[0]), float(w[1]))))
    return out


def infer_home_locations(points: PointTable, params: DbscanParams = DbscanParams(),
                         rules: LocusRules = LocusRules(), workers: int = 1,
                         chunk_points: int = 1_000_000):
    """Columnar home inference: ``(user_codes, lat, lon, lat2, lon2)``.

    The fast path behind :func:`infer_homework` when work places are not
    needed; second-home columns are NaN for single-home users.
    """
    return _locate(points, rules.home_hours, params, rules.utc_offset_minutes,
                   (rules.dual_home_ratio, rules.dual_home_separation), workers, chunk_points)


def _single_user(points) -> PointTable:
    table = points if isinstance(points, PointTable) else PointTable.from_points(points)
    if len(np.unique(table.user)) > 1:
        raise ValidationError("points belong to more than one user")
    return table


def infer_home(points, params: DbscanParams = DbscanParams(),
               rules: LocusRules = LocusRules()) -> list[GeoPoint]:
    """One user's home location(s); an empty list means no home."""
    table = _single_user(points)
    if not len(table):
        return []
    _, lat, lon, lat2, lon2 = _locate(
        table, rules.home_hours, params, rules.utc_offset_minutes,
        (rules.dual_home_ratio, rules.dual_home_separation))
    if not len(lat):
        return []
    homes = [GeoPoint(float(lat[0]), float(lon[0]))]
    if not math.isnan(lat2[0]):
        homes.append(GeoPoint(float(lat2[0]), float(lon2[0])))
    return homes


def infer_work(points, params: DbscanParams = DbscanParams(),
               rules: LocusRules = LocusRules()) -> Optional[GeoPoint]:
    table = _single_user(points)
    if not len(table):
        return None
    _, lat, lon, _, _ = _locate(table, rules.work_hours, params, rules.utc_offset_minutes, None)
    if not len(lat):
        return None
    return GeoPoint(float(lat[0]), float(lon[0]))


# -- table I/O --------------------------------------------------------------

HOMEWORK_COLUMNS = ("user_id", "home_lat", "home_lon", "home_weight",
                    "home2_lat", "home2_lon", "home2_weight", "work_lat", "work_lon")


def _f(x) -> str:
    return repr(float(x))


def homework_rows(assignments: Iterable[HomeWorkAssignment]):
    for a in assignments:
        row = [a.user_id, _f(a.homes[0][0].lat), _f(a.homes[0][0].lon), _f(a.homes[0][1])]
        if len(a.homes) > 1:
            h2, w2 = a.homes[1]
            row += [_f(h2.lat), _f(h2.lon), _f(w2)]
        else:
            row += ["", "", ""]
        row += [_f(a.work.lat), _f(a.work.lon)] if a.work is not None else ["", ""]
        yield row


def write_homework(assignments: Iterable[HomeWorkAssignment], path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(HOMEWORK_COLUMNS)
        w.writerows(homework_rows(assignments))


def read_homework(path) -> list[HomeWorkAssignment]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for row in csv.DictReader(fh):
            homes = [(GeoPoint(float(row["home_lat"]), float(row["home_lon"])),
                      float(row["home_weight"]))]
            if row.get("home2_lat"):
                homes.append((GeoPoint(float(row["home2_lat"]), float(row["home2_lon"])),
                              float(row["home2_weight"])))
            work = None
            if row.get("work_lat"):
                work = GeoPoint(float(row["work_lat"]), float(row["work_lon"]))
            out.append(HomeWorkAssignment(row["user_id"], tuple(homes), work))
    return out
