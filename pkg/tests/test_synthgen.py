import datetime as dt
import json

import numpy as np
import pytest

from ghostcity.errors import ValidationError
from ghostcity.geo import GeoPoint, cell_of, haversine_m
from ghostcity.mobility import CrosstabRow, MigrationEdge
from ghostcity.synthgen import (
    CitySpec,
    CommuterSpec,
    GroundTruth,
    SiteSpec,
    TravelerSpec,
    VillaSpec,
    WorldSpec,
    crosstab_l1,
    generate,
    score,
    world_spec_from_dict,
)
from ghostcity.ingest import StudyWindow

CITY = CitySpec("Alpha", (39.80, 109.70, 39.90, 109.90), counties=2)
OTHER = CitySpec("Beta", (36.85, 121.45, 36.95, 121.60))
SHORT = StudyWindow(dt.date(2014, 9, 20), dt.date(2014, 10, 10))


def small(**kw):
    base = dict(seed=7, cities=(CITY, OTHER), window=SHORT, lower_threshold=5, upper_threshold=30,
                sites=(SiteSpec("A", 39.85, 109.75, 12), SiteSpec("B", 39.85, 109.85, 40),
                       SiteSpec("C", 39.82, 109.72, 3, tourism=3.0)),
                pings_per_day_mean=4)
    base.update(kw)
    return WorldSpec(**base)


class TestDeterminism:
    def test_same_seed_same_world(self):
        a, b = generate(small()), generate(small())
        assert a.points.equals(b.points)
        assert a.truth.to_json() == b.truth.to_json()

    def test_seed_changes_points(self):
        a, b = generate(small()), generate(small(seed=8))
        assert not a.points.equals(b.points)

    def test_adding_travellers_keeps_site_streams(self):
        spec = small()
        more = small(travelers=(TravelerSpec((("Alpha", 3), ("Beta", 3)), dt.date(2014, 9, 25), 2),))
        a, b = generate(spec), generate(more)
        keep = np.array([not u.startswith("trav") for u in b.points.user_id_column()])
        assert a.points.equals(b.points.take(np.flatnonzero(keep)).compact())


class TestConstruction:
    def test_labels_follow_resident_counts(self):
        truth = generate(small()).truth
        assert truth.verdicts == {"A": "Vacant", "B": "Occupied", "C": "Excluded"}
        assert truth.tourism == {"A": False, "B": False, "C": True}

    def test_resident_counts(self):
        w = generate(small())
        ids = w.points.user_id_column()
        assert len({u for u in ids if u.startswith("a-r")}) == 12
        assert len({u for u in ids if u.startswith("b-r")}) == 40
        # (3 - 1) * 3 tourists, pinging only on in-window holiday dates
        assert len({u for u in ids if u.startswith("c-t")}) == 6

    def test_noise_free_homes_sit_in_block(self):
        w = generate(small(gps_noise_sigma=0.0))
        ids = w.points.user_id_column()
        c = cell_of(GeoPoint(39.85, 109.75))
        m = np.array([u.startswith("a-r") for u in ids])
        for lat, lon in zip(w.points.lat[m], w.points.lon[m]):
            k = cell_of(GeoPoint(lat, lon))
            assert c.i - 1 <= k.i <= c.i + 1 and c.j <= k.j <= c.j + 1

    def test_points_inside_city_within_noise(self):
        sigma = 30.0
        w = generate(small(gps_noise_sigma=sigma))
        pad = 6 * sigma / 111_000 * 2
        s, west, n, e = CITY.bbox
        assert ((w.points.lat > s - pad) & (w.points.lat < n + pad)).all()
        assert ((w.points.lon > west - pad) & (w.points.lon < e + pad)).all()

    def test_points_sorted_and_in_window(self):
        w = generate(small())
        assert SHORT.contains(w.points.ts).all()
        key = np.lexsort((w.points.ts, w.points.user_id_column()))
        assert (key == np.arange(len(key))).all()

    def test_villa_decoy_excluded_from_truth(self):
        w = generate(small(villas=(VillaSpec("V", 36.90, 121.50, decoy_residents=9),)))
        names = {p.name for p in w.pois}
        assert {"V", "V Residences"} <= names
        assert "V Residences" not in w.truth.verdicts
        ids = w.points.user_id_column()
        assert len({u for u in ids if u.startswith("v-residences-r")}) == 9

    def test_commuters_work_at_target(self):
        spec = small(commuters=(CommuterSpec("B", "A", 5),))
        truth = generate(spec).truth
        moved = [u for u, (h, wk) in truth.users.items() if u.startswith("b-r") and h != wk]
        assert len(moved) == 5
        for u in moved:
            h, wk = truth.users[u]
            assert haversine_m(wk.lat, wk.lon, 39.85, 109.75) < 300

    def test_traveller_edges(self):
        t = TravelerSpec((("Alpha", 3), ("Beta", 4), ("Alpha", 2)), dt.date(2014, 9, 25), 2)
        edges = generate(small(travelers=(t,))).truth.edges
        assert len(edges) == 4
        e = [x for x in edges if x.user_id == "trav000-00000"]
        assert [(x.from_city, x.to_city, x.arrival_date) for x in e] == [
            ("alpha", "beta", dt.date(2014, 9, 29)),
            ("beta", "alpha", dt.date(2014, 10, 3)),
        ]

    def test_truth_json_round_trip(self):
        truth = generate(small(travelers=(TravelerSpec((("Alpha", 2), ("Beta", 2)), dt.date(2014, 9, 25), 1),))).truth
        back = GroundTruth.from_json(truth.to_json())
        assert back.to_json() == truth.to_json()


class TestValidation:
    def test_label_mismatch(self):
        with pytest.raises(ValidationError):
            small(sites=(SiteSpec("A", 39.85, 109.75, 12, label="occupied"),))

    def test_sites_too_close(self):
        with pytest.raises(ValidationError):
            small(sites=(SiteSpec("A", 39.85, 109.75, 12), SiteSpec("B", 39.851, 109.75, 12)))

    def test_site_outside_cities(self):
        with pytest.raises(ValidationError):
            small(sites=(SiteSpec("A", 10.0, 10.0, 12),))

    def test_cross_city_commute(self):
        with pytest.raises(ValidationError):
            small(sites=(SiteSpec("A", 39.85, 109.75, 12), SiteSpec("B", 36.90, 121.50, 40)),
                  commuters=(CommuterSpec("A", "B", 2),))

    def test_short_leg(self):
        with pytest.raises(ValidationError):
            small(travelers=(TravelerSpec((("Alpha", 2), ("Beta", 1)), dt.date(2014, 9, 25), 1),))

    def test_itinerary_outside_window(self):
        with pytest.raises(ValidationError):
            small(travelers=(TravelerSpec((("Alpha", 5), ("Beta", 5)), dt.date(2014, 10, 5), 1),))

    def test_dict_spec(self):
        spec = world_spec_from_dict({
            "seed": 3, "lower_threshold": 5, "upper_threshold": 30,
            "cities": [{"name": "Alpha", "bbox": list(CITY.bbox)}],
            "sites": [{"name": "A", "lat": 39.85, "lon": 109.75, "residents": 10}],
        })
        assert spec.label_for(10) == "vacant"
        with pytest.raises(ValidationError):
            world_spec_from_dict({"cities": []})


def truth_of(verdicts, tourism=None, edges=()):
    return GroundTruth(verdicts, tourism or {k: False for k in verdicts}, {}, list(edges))


class TestScore:
    def test_ten_of_eleven(self):
        truth = {f"s{k}": "Vacant" for k in range(10)}
        truth["x"] = "Occupied"
        found = dict(truth, x="Vacant")
        m = score(found, truth_of(truth))
        assert m["vacant_precision"] == pytest.approx(10 / 11)
        assert m["vacant_recall"] == 1.0
        assert m["occupied_recall"] == 0.0
        # no Occupied predictions while one exists: precision reads 0
        assert m["occupied_precision"] == 0.0

    def test_site_sets_must_match(self):
        with pytest.raises(ValidationError):
            score({"a": "Vacant"}, truth_of({"b": "Vacant"}))

    def test_tourism_and_edges(self):
        e1 = MigrationEdge("u", "a", "b", dt.date(2014, 10, 2))
        e2 = MigrationEdge("u", "b", "a", dt.date(2014, 10, 6))
        truth = truth_of({"s": "Vacant", "t": "Vacant"}, {"s": True, "t": False}, [e1, e2])
        m = score({"s": "Vacant", "t": "Vacant"}, truth, {"s": True, "t": True}, [e1])
        assert m["tourism_precision"] == 0.5 and m["tourism_recall"] == 1.0
        assert m["edge_f1"] == pytest.approx(2 * 1.0 * 0.5 / 1.5)

    def test_crosstab_l1(self):
        a = [CrosstabRow("x", "x", 0.75), CrosstabRow("x", "Other", 0.25)]
        b = [CrosstabRow("x", "x", 0.5), CrosstabRow("Other", "x", 0.5)]
        assert crosstab_l1(a, b) == pytest.approx(0.25 + 0.25 + 0.5)
        assert crosstab_l1(a, a) == 0.0

    def test_metrics_are_json(self):
        m = score({"s": "Excluded"}, truth_of({"s": "Excluded"}))
        assert json.loads(json.dumps(m)) == m
