from __future__ import annotations

import itertools
import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import brute_force_path, great_circle_km
from travelsim.core import POI, GeoPoint
from travelsim.errors import ContractError
from travelsim.spatial import (
    COMPASS,
    choose_k,
    cluster_pois,
    compass_point,
    directions_distances,
    find_shortest_route,
    haversine,
    initial_bearing,
    kmeans_pp,
    local_search,
    nearest_neighbor_path,
    path_length,
    summarize,
    two_opt_improve,
)

lat = st.floats(-80, 80, allow_nan=False)
lon = st.floats(-179, 179, allow_nan=False)
points = st.builds(GeoPoint, lat, lon)
city_points = st.builds(GeoPoint, st.floats(39.8, 40.0), st.floats(116.2, 116.5))


def test_haversine_examples():
    origin = GeoPoint(0, 0)
    assert haversine(origin, origin) == 0.0
    # one degree of arc on a 6371 km sphere
    assert haversine(origin, GeoPoint(0, 1)) == pytest.approx(6371 * math.pi / 180, abs=1e-9)
    assert haversine(origin, GeoPoint(0, 1)) == pytest.approx(111.195, abs=0.01)
    assert haversine(origin, GeoPoint(1, 0)) == pytest.approx(haversine(origin, GeoPoint(0, 1)), abs=1e-9)


@settings(max_examples=300, deadline=None)
@given(points, points, points)
def test_haversine_metric_properties(a, b, c):
    ab = haversine(a, b)
    assert ab >= 0
    assert ab == pytest.approx(haversine(b, a), abs=1e-9)
    assert haversine(a, c) <= ab + haversine(b, c) + 1e-6
    # agrees with the law-of-cosines oracle away from tiny separations
    if ab > 1.0:
        assert ab == pytest.approx(great_circle_km((a.lat, a.lon), (b.lat, b.lon)), rel=1e-6)


def test_choose_k():
    assert choose_k(3, 20) == 3
    assert choose_k(5, 2) == 2
    assert choose_k(1, 1) == 1
    with pytest.raises(ContractError):
        choose_k(0, 3)


def pois_at(coords):
    return [POI(f"p{i}", f"P{i}", GeoPoint(la, lo)) for i, (la, lo) in enumerate(coords)]


def test_cluster_extremes():
    pois = pois_at([(39.9 + 0.01 * i, 116.4 + 0.013 * (i % 3)) for i in range(6)])
    one = cluster_pois(pois, 1, seed=3)
    assert len(one) == 1 and set(one[0].members) == {p.id for p in pois}
    assert one[0].centroid.lat == pytest.approx(np.mean([p.location.lat for p in pois]))
    singles = cluster_pois(pois, 6, seed=3)
    assert sorted(len(c.members) for c in singles) == [1] * 6
    with pytest.raises(ContractError):
        cluster_pois(pois, 7)
    with pytest.raises(ContractError):
        cluster_pois(pois, 0)


def best_two_partition(xy):
    """Exhaustive oracle: the 2-partition with the least within-cluster sum of squares."""
    n = len(xy)
    best, best_split = math.inf, None
    for mask in range(1, 2 ** (n - 1)):
        groups = [[xy[i] for i in range(n) if mask >> i & 1], [xy[i] for i in range(n) if not mask >> i & 1]]
        cost = sum(((np.array(g) - np.mean(g, axis=0)) ** 2).sum() for g in groups)
        if cost < best:
            best, best_split = cost, frozenset(i for i in range(n) if mask >> i & 1)
    return best_split


def test_two_far_groups_are_separated():
    rng = random.Random(5)
    # two groups ~60 km apart, each within ~1 km
    coords = [(39.90 + rng.uniform(0, 0.008), 116.40 + rng.uniform(0, 0.008)) for _ in range(4)]
    coords += [(40.45 + rng.uniform(0, 0.008), 116.40 + rng.uniform(0, 0.008)) for _ in range(4)]
    pois = pois_at(coords)
    clusters = cluster_pois(pois, 2, seed=11)
    found = {frozenset(int(m[1:]) for m in c.members) for c in clusters}
    oracle = best_two_partition(coords)
    assert found == {oracle, frozenset(range(8)) - oracle}
    assert found == {frozenset(range(4)), frozenset(range(4, 8))}


@settings(max_examples=200, deadline=None)
@given(st.lists(st.tuples(st.floats(39.8, 40.1), st.floats(116.2, 116.6)), min_size=2, max_size=25), st.integers(0, 10**6), st.data())
def test_kmeans_partition_and_monotone_wcss(coords, seed, data):
    k = data.draw(st.integers(1, len(coords)))
    result = kmeans_pp(coords, k, seed)
    assert len(result.labels) == len(coords)
    assert set(result.labels) == set(range(k))
    hist = result.wcss_history
    assert all(b <= a + 1e-9 * max(1.0, a) for a, b in zip(hist, hist[1:]))
    assert result.iterations <= 100
    # deterministic for a fixed seed
    assert kmeans_pp(coords, k, seed).labels == result.labels


def coords_map(pts):
    return {f"n{i}": p for i, p in enumerate(pts)}


def test_route_without_intermediates():
    c = {"s": GeoPoint(39.9, 116.3), "e": GeoPoint(39.95, 116.4)}
    r = find_shortest_route(c, "s", "e")
    assert r.path == ("s", "e")
    assert r.total_distance == haversine(c["s"], c["e"])


def test_route_collinear_points_in_order():
    c = {"s": GeoPoint(0, 0), "c": GeoPoint(0, 0.3), "a": GeoPoint(0, 0.1), "b": GeoPoint(0, 0.2), "e": GeoPoint(0, 0.4)}
    r = find_shortest_route(c, "s", "e")
    assert r.path == ("s", "a", "b", "c", "e")


def test_route_round_trip_and_errors():
    c = {"h": GeoPoint(39.9, 116.3), "a": GeoPoint(39.91, 116.31), "b": GeoPoint(39.92, 116.29)}
    r = find_shortest_route(c, "h", "h")
    assert r.path[0] == r.path[-1] == "h" and sorted(r.path[1:-1]) == ["a", "b"]
    with pytest.raises(ContractError):
        find_shortest_route(c, "h", "zz")


@settings(max_examples=200, deadline=None)
@given(st.lists(city_points, min_size=2, max_size=10, unique=True))
def test_route_properties(pts):
    c = coords_map(pts)
    names = list(c)
    start, end = names[0], names[-1]
    r = find_shortest_route(c, start, end)
    assert r.path[0] == start and r.path[-1] == end
    assert sorted(r.path) == sorted(names)
    assert len(r.step_distances) == len(r.path) - 1
    assert r.total_distance == pytest.approx(sum(r.step_distances), rel=1e-9)
    assert r.total_distance <= path_length(nearest_neighbor_path(c, start, end), c) + 1e-9
    others = names[1:-1]
    if len(others) < 6:
        d = lambda a, b: haversine(c[a], c[b])
        assert r.total_distance == pytest.approx(brute_force_path(d, start, end, others), abs=1e-9)


def test_two_opt_removes_a_crossing():
    # s -> (0,1) -> (1,0) -> (0,0)... laid out so that the given order crosses itself
    c = {
        "s": GeoPoint(0, 0),
        "a": GeoPoint(0.1, 0.1),
        "b": GeoPoint(0.0, 0.1),
        "c": GeoPoint(0.1, 0.2),
        "d": GeoPoint(0.0, 0.2),
        "e": GeoPoint(0.05, 0.3),
    }
    crossing = ["s", "a", "b", "c", "d", "e"]
    improved = two_opt_improve(crossing, c, "s", "e")
    assert path_length(improved, c) < path_length(crossing, c)
    d = lambda x, y: haversine(c[x], c[y])
    assert path_length(improved, c) == pytest.approx(brute_force_path(d, "s", "e", ["a", "b", "c", "d"]))
    assert two_opt_improve(improved, c, "s", "e") == improved


@settings(max_examples=200, deadline=None)
@given(st.lists(city_points, min_size=3, max_size=11, unique=True), st.randoms())
def test_local_search_never_lengthens(pts, rnd):
    c = coords_map(pts)
    names = list(c)
    middle = names[1:-1]
    rnd.shuffle(middle)
    path = [names[0], *middle, names[-1]]
    two = two_opt_improve(path, c, names[0], names[-1])
    both = local_search(path, c, names[0], names[-1])
    for out in (two, both):
        assert out[0] == names[0] and out[-1] == names[-1] and sorted(out) == sorted(names)
        assert path_length(out, c) <= path_length(path, c) + 1e-9
    # the combined search ends at a 2-opt fixpoint
    assert path_length(two_opt_improve(both, c, names[0], names[-1]), c) == pytest.approx(path_length(both, c))


def test_two_opt_rejects_wrong_endpoints():
    c = {"s": GeoPoint(0, 0), "e": GeoPoint(0, 1)}
    with pytest.raises(ContractError):
        two_opt_improve(["e", "s"], c, "s", "e")


@pytest.mark.parametrize(
    "target, bearing, label",
    [((10, 0), 0.0, "N"), ((0, 10), 90.0, "E"), ((-10, 0), 180.0, "S"), ((0, -10), 270.0, "W")],
)
def test_bearing_examples(target, bearing, label):
    [r] = directions_distances(GeoPoint(0, 0), [("t", GeoPoint(*target))])
    assert r.bearing_deg == pytest.approx(bearing, abs=1e-9)
    assert r.direction == label


def test_coincident_target_is_north_at_zero():
    [r] = directions_distances(GeoPoint(1, 1), [("same", GeoPoint(1, 1))])
    assert (r.direction, r.distance_km, r.bearing_deg) == ("N", 0.0, 0.0)


def test_compass_boundaries_round_half_up():
    assert compass_point(22.4999) == "N"
    assert compass_point(22.5) == "NE"
    assert compass_point(337.5) == "N"
    assert compass_point(359.999) == "N"
    assert COMPASS == ("N", "NE", "E", "SE", "S", "SW", "W", "NW")


@settings(max_examples=300, deadline=None)
@given(points, points)
def test_bearing_range_and_table(a, b):
    if a == b:
        return
    theta = initial_bearing(a, b)
    assert 0.0 <= theta < 360.0
    assert compass_point(theta) == COMPASS[int(math.floor(theta / 45 + 0.5)) % 8]


def test_summarize_clamps_k_and_routes_from_hotel(bundle):
    s = summarize(bundle.pois, "hotel-shichahai", 20, seed=0)
    attractions = [p for p in bundle.pois.values() if p.category == "attraction"]
    assert s.k == len(attractions) and "clamped" in s.note
    assert all(r.path[0] == r.path[-1] == "hotel-shichahai" for r in s.routes)
    members = list(itertools.chain.from_iterable(c.members for c in s.clusters))
    assert sorted(members) == sorted(p.id for p in attractions)
    s3 = summarize(bundle.pois, "hotel-shichahai", 3, seed=0)
    assert s3.k == 3 and s3.note is None and len(s3.bearings) == 3
