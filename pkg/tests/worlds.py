"""Seeded world specs shared by the acceptance suite."""

import datetime as dt

import numpy as np

from ghostcity.ingest import StudyWindow
from ghostcity.synthgen import CitySpec, CommuterSpec, SiteSpec, WorldSpec

SPACING = 0.012  # degrees between neighbouring sites, ~1 km at 40 N


def lattice_city(name, lat0, lon0, rows, cols, counties=1):
    """A city box holding a rows x cols lattice of site slots."""
    bbox = (lat0, lon0, lat0 + (rows + 1) * SPACING, lon0 + (cols + 1) * SPACING)
    slots = [(lat0 + (r + 1) * SPACING, lon0 + (c + 1) * SPACING) for r in range(rows) for c in range(cols)]
    return CitySpec(name, bbox, counties), slots


def detection_world(seed=2015, n_vacant=50, n_occupied=150, n_excluded=20, n_tourism=20):
    """Mixed world for the vacancy and tourism criteria.

    Vacant sites are active every day so their daily counts stay flat away
    from holidays; occupied sites are large but only sporadically active.
    """
    rng = np.random.default_rng(seed)
    kinds = ["vacant"] * n_vacant + ["occupied"] * n_occupied + ["excluded_new"] * n_excluded
    kinds = [kinds[k] for k in rng.permutation(len(kinds))]
    cities, slots = [], []
    per_city = 60
    for c in range(-(-len(kinds) // per_city)):
        city, s = lattice_city(f"City {c + 1}", 30.0 + 0.5 * c, 110.0, 6, 10, counties=2)
        cities.append(city)
        slots += s
    tourism_left = n_tourism
    sites = []
    for k, kind in enumerate(kinds):
        lat, lon = slots[k]
        if kind == "vacant":
            residents = int(rng.integers(70, 201))
            mult = None
            if tourism_left:
                mult = float(rng.uniform(3, 5))
                tourism_left -= 1
            sites.append(SiteSpec(f"Site {k:03d}", lat, lon, residents, kind, mult, 1.0))
        elif kind == "occupied":
            sites.append(SiteSpec(f"Site {k:03d}", lat, lon, int(rng.integers(340, 421)), kind, None, 0.05))
        else:
            sites.append(SiteSpec(f"Site {k:03d}", lat, lon, int(rng.integers(5, 51)), kind, None, 1.0))
    return WorldSpec(seed=seed, cities=tuple(cities), sites=tuple(sites),
                     gps_noise_sigma=30.0, pings_per_day_mean=1.0)


def commuter_world(seed=44):
    """Three counties with planted home/work flows around a focal county."""
    city = CitySpec("Delta", (30.0, 110.0, 30.06, 110.3), counties=3)
    # counties split the box by longitude: 110.0-110.1, 110.1-110.2, 110.2-110.3
    sites = (SiteSpec("F1", 30.02, 110.03, 120), SiteSpec("F2", 30.04, 110.07, 80),
             SiteSpec("N1", 30.03, 110.15, 90), SiteSpec("O1", 30.03, 110.25, 60))
    commuters = (CommuterSpec("F1", "N1", 30), CommuterSpec("F1", "O1", 20),
                 CommuterSpec("N1", "F2", 25), CommuterSpec("O1", "F1", 15))
    return WorldSpec(seed=seed, cities=(city,), sites=sites, commuters=commuters,
                     window=StudyWindow(dt.date(2014, 10, 1), dt.date(2014, 11, 15)),
                     gps_noise_sigma=30.0, pings_per_day_mean=6.0,
                     lower_threshold=5, upper_threshold=300)
