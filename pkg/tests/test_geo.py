import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ghostcity.errors import ParameterError, ValidationError
from ghostcity.geo import (
    GeoPoint,
    GridIndex,
    GridPopulation,
    ProjectionParams,
    Region,
    assign_region,
    assign_regions,
    cell_center,
    cell_corners,
    cell_of,
    cell_window,
    cells_of,
    haversine_distance,
    haversine_m,
    regions_from_geojson,
    regions_to_geojson,
)
from oracles import random_simple_polygon, winding_number


def square(rid, x0, y0, x1, y1, level="county"):
    ring = [(x0, y0), (x1, y0), (x1, y1), (x0, y1), (x0, y0)]
    return Region(rid, rid.upper(), level, [[ring]])


class TestHaversine:
    def test_identity(self):
        p = GeoPoint(31.2, 121.5)
        assert haversine_distance(p, p) == 0.0

    def test_one_degree_of_longitude_on_equator(self):
        # closed form R * pi / 180 at the default mean radius
        d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 1))
        assert d == pytest.approx(111_195.08, abs=0.01)
        # the commonly quoted 111,194.93 m belongs to R = 6,371,000 m
        d = haversine_distance(GeoPoint(0, 0), GeoPoint(0, 1), radius=6_371_000.0)
        assert d == pytest.approx(111_194.93, abs=0.01)

    def test_short_meridian_arc(self):
        d = haversine_distance(GeoPoint(0, 0), GeoPoint(0.0018, 0))
        assert d == pytest.approx(200.15, abs=0.01)

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(1)
        lat = rng.uniform(18, 54, (2, 200))
        lon = rng.uniform(73, 135, (2, 200))
        vec = haversine_m(lat[0], lon[0], lat[1], lon[1])
        ref = [haversine_distance(GeoPoint(a, b), GeoPoint(c, d))
               for a, b, c, d in zip(lat[0], lon[0], lat[1], lon[1])]
        np.testing.assert_allclose(vec, ref, rtol=0, atol=1e-6)

    def test_symmetry_and_triangle_inequality(self):
        rng = np.random.default_rng(7)
        lat = rng.uniform(18, 54, (10_000, 3))
        lon = rng.uniform(73, 135, (10_000, 3))
        ab = haversine_m(lat[:, 0], lon[:, 0], lat[:, 1], lon[:, 1])
        ba = haversine_m(lat[:, 1], lon[:, 1], lat[:, 0], lon[:, 0])
        bc = haversine_m(lat[:, 1], lon[:, 1], lat[:, 2], lon[:, 2])
        ac = haversine_m(lat[:, 0], lon[:, 0], lat[:, 2], lon[:, 2])
        assert np.array_equal(ab, ba)
        assert (ac <= ab + bc + 1e-6).all()
        assert (ab >= 0).all()


class TestGeoPoint:
    @pytest.mark.parametrize("lat,lon", [(91, 0), (-90.5, 0), (0, 180), (0, -181), (math.nan, 0)])
    def test_rejects_invalid(self, lat, lon):
        with pytest.raises(ParameterError):
            GeoPoint(lat, lon)


class TestGrid:
    def test_origin(self):
        assert cell_of(GeoPoint(0, 0)) == GridIndex(0, 0)

    def test_just_north_of_first_row(self):
        assert cell_of(GeoPoint(0.0009, 0)) == GridIndex(0, 1)

    def test_negative_floor(self):
        assert cell_of(GeoPoint(-0.0009, 0)) == GridIndex(0, -2)

    def test_vectorised_matches_scalar(self):
        rng = np.random.default_rng(3)
        lat = rng.uniform(18, 54, 500)
        lon = rng.uniform(73, 135, 500)
        i, j = cells_of(lat, lon)
        for a, b, ii, jj in zip(lat, lon, i, j):
            assert cell_of(GeoPoint(a, b)) == GridIndex(int(ii), int(jj))

    @settings(max_examples=300)
    @given(st.integers(-60_000, 60_000), st.integers(-60_000, 60_000))
    def test_center_reprojects_to_same_cell(self, i, j):
        c = GridIndex(i, j)
        assert cell_of(cell_center(c)) == c

    def test_corners_bracket_the_cell(self):
        proj = ProjectionParams()
        c = GridIndex(101_000, 38_000)
        ring = cell_corners(c, proj)
        assert ring[0] == ring[-1] and len(ring) == 5
        lon0, lat0 = ring[0]
        lon2, lat2 = ring[2]
        inner = GeoPoint((lat0 + lat2) / 2, (lon0 + lon2) / 2)
        assert cell_of(inner, proj) == c

    def test_ordering_is_row_major(self):
        cells = [GridIndex(2, 0), GridIndex(0, 1), GridIndex(1, 0)]
        assert sorted(cells) == [GridIndex(1, 0), GridIndex(2, 0), GridIndex(0, 1)]

    def test_window_of_one(self):
        assert cell_window(GridIndex(10, 10), 1) == [GridIndex(10, 10)]

    def test_window_of_five(self):
        w = cell_window(GridIndex(10, 10), 5)
        assert len(w) == 25
        assert {c.i for c in w} == set(range(8, 13))
        assert {c.j for c in w} == set(range(8, 13))
        assert w == sorted(w)

    def test_window_of_three_at_origin(self):
        w = cell_window(GridIndex(0, 0), 3)
        assert set(w) == {GridIndex(i, j) for i in (-1, 0, 1) for j in (-1, 0, 1)}

    @pytest.mark.parametrize("k", [0, 2, 4, -1])
    def test_window_rejects_bad_k(self, k):
        with pytest.raises(ParameterError):
            cell_window(GridIndex(0, 0), k)

    @given(st.integers(-1000, 1000), st.integers(-1000, 1000), st.integers(0, 6))
    def test_window_contains_center_and_is_distinct(self, i, j, r):
        k = 2 * r + 1
        w = cell_window(GridIndex(i, j), k)
        assert GridIndex(i, j) in w
        assert len(set(w)) == k * k

    def test_projection_bounds(self):
        with pytest.raises(ParameterError):
            ProjectionParams(cell_size=0)
        with pytest.raises(ParameterError):
            ProjectionParams(standard_parallel=90)

    def test_population_defaults_to_zero(self):
        pop = GridPopulation()
        assert pop[GridIndex(5, 5)] == 0.0
        assert GridIndex(5, 5) not in pop
        with pytest.raises(ValidationError):
            pop[GridIndex(0, 0)] = -1


class TestRegions:
    def test_square_centroid(self):
        r = square("a", 0, 0, 1, 1)
        assert assign_region(GeoPoint(0.5, 0.5), [r]) == "a"

    def test_outside_all(self):
        r = square("a", 0, 0, 1, 1)
        assert assign_region(GeoPoint(5, 5), [r]) is None

    def test_shared_edge_goes_to_lowest_id(self):
        a = square("b", 0, 0, 1, 1)
        b = square("a", 1, 0, 2, 1)
        assert assign_region(GeoPoint(0.5, 1.0), [a, b]) == "a"
        assert assign_region(GeoPoint(0.5, 0.5), [a, b]) == "b"

    def test_concave_notch(self):
        # U shape: the notch between the arms is outside
        ring = [(0, 0), (3, 0), (3, 3), (2, 3), (2, 1), (1, 1), (1, 3), (0, 3), (0, 0)]
        r = Region("u", "U", "city", [[ring]])
        assert assign_region(GeoPoint(2.0, 1.5), [r]) is None
        assert assign_region(GeoPoint(2.0, 0.5), [r]) == "u"
        assert assign_region(GeoPoint(0.5, 2.5), [r]) == "u"

    def test_agrees_with_winding_number_oracle(self):
        rng = np.random.default_rng(11)
        for _ in range(1000):
            ring = random_simple_polygon(rng, 110.0, 30.0, 1.0, int(rng.integers(3, 12)))
            region = Region("r", "R", "county", [[ring]])
            px, py = rng.uniform(108.8, 111.2), rng.uniform(28.8, 31.2)
            expected = winding_number(px, py, ring) != 0
            got = bool(region.contains(np.array([py]), np.array([px]))[0])
            assert got == expected

    def test_hole_is_outside(self):
        outer = [(0, 0), (4, 0), (4, 4), (0, 4), (0, 0)]
        hole = [(1, 1), (3, 1), (3, 3), (1, 3), (1, 1)]
        r = Region("h", "H", "county", [[outer, hole]])
        mask = r.contains(np.array([2.0, 0.5]), np.array([2.0, 0.5]))
        assert mask.tolist() == [False, True]

    def test_vectorised_assignment(self):
        regions = [square("b", 1, 0, 2, 1), square("a", 0, 0, 1, 1)]
        idx = assign_regions([0.5, 0.5, 9.0], [0.5, 1.5, 9.0], regions)
        assert idx.tolist() == [0, 1, -1]

    def test_rejects_open_ring(self):
        with pytest.raises(ValidationError):
            Region("x", "X", "county", [[[(0, 0), (1, 0), (1, 1), (0, 1)]]])

    def test_geojson_round_trip(self):
        regions = [square("a", 0, 0, 1, 1), square("b", 1, 0, 2, 1, level="city")]
        regions[1].tier = 2
        doc = json.loads(json.dumps(regions_to_geojson(regions)))
        back = regions_from_geojson(doc)
        assert [(r.region_id, r.level.value, r.tier) for r in back] == [
            ("a", "county", None), ("b", "city", 2)]
        assert np.array_equal(back[0].polygons[0][0], regions[0].polygons[0][0])

    def test_multipolygon(self):
        doc = {"type": "FeatureCollection", "features": [{
            "type": "Feature",
            "properties": {"region_id": "m", "name": "M", "level": "city"},
            "geometry": {"type": "MultiPolygon", "coordinates": [
                [[[0, 0], [1, 0], [1, 1], [0, 1], [0, 0]]],
                [[[5, 5], [6, 5], [6, 6], [5, 6], [5, 5]]],
            ]},
        }]}
        (r,) = regions_from_geojson(doc)
        assert assign_region(GeoPoint(5.5, 5.5), [r]) == "m"
        assert assign_region(GeoPoint(3, 3), [r]) is None

    def test_rejects_bad_properties(self):
        doc = {"type": "FeatureCollection", "features": [{
            "type": "Feature", "properties": {"region_id": "x", "level": "planet"},
            "geometry": {"type": "Polygon", "coordinates": [[[0, 0], [1, 0], [1, 1], [0, 0]]]},
        }]}
        with pytest.raises(ValidationError):
            regions_from_geojson(doc)
