"""Geospatial preprocessing: clustering, intra-cluster routes, bearings."""
from __future__ import annotations

import itertools
import math
import random
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .core import POI, GeoPoint
from .errors import ContractError

EARTH_RADIUS_KM = 6371.0
COMPASS = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
BRUTE_FORCE_LIMIT = 6  # fewer intermediates than this are solved exactly


def haversine(a: GeoPoint, b: GeoPoint) -> float:
    """Great-circle distance in km."""
    phi1, phi2 = math.radians(a.lat), math.radians(b.lat)
    dphi = phi2 - phi1
    dlam = math.radians(b.lon - a.lon)
    h = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_KM * math.asin(min(1.0, math.sqrt(h)))


# --- clustering ---------------------------------------------------------------


@dataclass(frozen=True)
class Cluster:
    id: int
    members: tuple
    centroid: GeoPoint


@dataclass
class KMeansResult:
    labels: list[int]
    centroids: np.ndarray  # (k, 2) lat/lon degrees
    wcss_history: list[float]
    iterations: int


def choose_k(num_days: int, num_pois: int) -> int:
    if num_days < 1 or num_pois < 1:
        raise ContractError("num_days and num_pois must be >= 1")
    return max(1, min(num_days, num_pois))


def _project(coords: np.ndarray, lat0: float) -> np.ndarray:
    # equirectangular about a fixed reference latitude: linear in (lat, lon),
    # so the projected mean is the projection of the coordinate mean
    rad = np.radians(coords)
    return np.column_stack((rad[:, 1] * math.cos(math.radians(lat0)), rad[:, 0])) * EARTH_RADIUS_KM


def _sq_dists(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centers[None, :, :]
    return np.einsum("ijk,ijk->ij", diff, diff)


def kmeans_pp(coords: Sequence[tuple[float, float]], k: int, seed: int, max_iter: int = 100) -> KMeansResult:
    """k-means++ seeding followed by Lloyd iterations on (lat, lon) degrees."""
    pts = np.asarray(coords, dtype=float).reshape(-1, 2)
    n = len(pts)
    if not 1 <= k <= n:
        raise ContractError(f"k={k} outside [1, {n}]")
    rng = random.Random(seed)
    lat0 = float(pts[:, 0].mean())
    xy = _project(pts, lat0)

    chosen = [rng.randrange(n)]
    while len(chosen) < k:
        d2 = _sq_dists(xy, xy[chosen]).min(axis=1)
        weights = [0.0 if i in chosen else float(w) for i, w in enumerate(d2)]
        if sum(weights) > 0:
            chosen.append(rng.choices(range(n), weights=weights)[0])
        else:
            chosen.append(rng.choice([i for i in range(n) if i not in chosen]))
    centroids = pts[chosen].copy()

    labels = None
    history: list[float] = []
    iterations = 0
    for iterations in range(1, max_iter + 1):
        # argmin picks the lowest cluster id on ties
        new_labels = _sq_dists(xy, _project(centroids, lat0)).argmin(axis=1)
        history.append(_wcss(xy, new_labels, _project(centroids, lat0)))
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for c in range(k):
            members = pts[labels == c]
            if len(members):
                centroids[c] = members.mean(axis=0)
        history.append(_wcss(xy, labels, _project(centroids, lat0)))

    labels = _repair_empty(xy, labels.copy(), k)
    for c in range(k):
        centroids[c] = pts[labels == c].mean(axis=0)
    return KMeansResult([int(x) for x in labels], centroids, history, iterations)


def _wcss(xy: np.ndarray, labels: np.ndarray, centers_xy: np.ndarray) -> float:
    diff = xy - centers_xy[labels]
    return float(np.einsum("ij,ij->", diff, diff))


def _repair_empty(xy: np.ndarray, labels: np.ndarray, k: int) -> np.ndarray:
    # duplicates can leave a cluster empty; donate the last point of the
    # largest cluster so every cluster keeps at least one member
    for c in range(k):
        if np.any(labels == c):
            continue
        counts = np.bincount(labels, minlength=k)
        donor = int(counts.argmax())
        idx = int(np.flatnonzero(labels == donor)[-1])
        labels[idx] = c
    return labels


def cluster_pois(pois: Sequence[POI], k: int, seed: int = 0, max_iter: int = 100) -> list[Cluster]:
    if not 1 <= k <= len(pois):
        raise ContractError(f"k={k} outside [1, {len(pois)}]")
    result = kmeans_pp([(p.location.lat, p.location.lon) for p in pois], k, seed, max_iter)
    clusters = []
    for c in range(k):
        members = tuple(p.id for p, label in zip(pois, result.labels) if label == c)
        lat, lon = result.centroids[c]
        clusters.append(Cluster(c, members, GeoPoint(float(lat), float(lon))))
    return clusters


# --- intra-cluster routing ------------------------------------------------------


@dataclass(frozen=True)
class RouteResult:
    path: tuple
    total_distance: float
    step_distances: tuple

    def to_dict(self) -> dict:
        return {
            "path": list(self.path),
            "total_distance_km": self.total_distance,
            "step_distances_km": list(self.step_distances),
        }


def path_length(path: Sequence[str], coords: Mapping[str, GeoPoint]) -> float:
    return sum(haversine(coords[a], coords[b]) for a, b in zip(path, path[1:]))


def nearest_neighbor_path(coords: Mapping[str, GeoPoint], start: str, end: str) -> list[str]:
    """Greedy path from ``start`` through every other location, closing at ``end``."""
    remaining = [name for name in coords if name not in (start, end)]
    path = [start]
    while remaining:
        here = coords[path[-1]]
        nxt = min(remaining, key=lambda name: haversine(here, coords[name]))
        remaining.remove(nxt)
        path.append(nxt)
    path.append(end)
    return path


def _distance_table(path: Sequence[str], coords: Mapping[str, GeoPoint]):
    names = sorted(set(path))
    index = {name: i for i, name in enumerate(names)}
    dist = [[haversine(coords[a], coords[b]) for b in names] for a in names]
    return names, [index[name] for name in path], dist


def _two_opt(p: list[int], dist) -> bool:
    n = len(p)
    improved, changed = True, False
    while improved:
        improved = False
        for i in range(1, n - 2):
            for j in range(i + 1, n - 1):
                a, b, c, d = p[i - 1], p[i], p[j], p[j + 1]
                if dist[a][c] + dist[b][d] - dist[a][b] - dist[c][d] < -1e-12:
                    p[i : j + 1] = reversed(p[i : j + 1])
                    improved = changed = True
    return changed


def _or_opt(p: list[int], dist) -> bool:
    """Move one interior segment of 1-3 stops elsewhere (either orientation);
    first improvement, repeated until no move helps."""
    improved, changed = True, False
    while improved:
        improved = False
        n = len(p)
        for length in (1, 2, 3):
            for i in range(1, n - length):
                seg = p[i : i + length]
                prev, nxt = p[i - 1], p[i + length]
                gain = dist[prev][seg[0]] + dist[seg[-1]][nxt] - dist[prev][nxt]
                rest = p[:i] + p[i + length :]
                for j in range(1, len(rest)):
                    u, v = rest[j - 1], rest[j]
                    for cand in (seg, seg[::-1]):
                        cost = dist[u][cand[0]] + dist[cand[-1]][v] - dist[u][v]
                        if cost - gain < -1e-12:
                            p[:] = rest[:j] + cand + rest[j:]
                            improved = changed = True
                            break
                    if improved:
                        break
                if improved:
                    break
            if improved:
                break
    return changed


def two_opt_improve(path: Sequence[str], coords: Mapping[str, GeoPoint], start: str, end: str) -> list[str]:
    """First-improvement 2-opt over interior segments; endpoints never move."""
    path = list(path)
    if path[0] != start or path[-1] != end:
        raise ContractError("path must begin at start and end at end")
    names, p, dist = _distance_table(path, coords)
    _two_opt(p, dist)
    return [names[i] for i in p]


def local_search(path: Sequence[str], coords: Mapping[str, GeoPoint], start: str, end: str) -> list[str]:
    """2-opt, then alternate segment relocation (Or-opt) and 2-opt until neither improves.

    The result is a fixpoint of both move sets, so no single 2-opt reversal
    shortens it, and it is never longer than the input.
    """
    path = list(path)
    if path[0] != start or path[-1] != end:
        raise ContractError("path must begin at start and end at end")
    names, p, dist = _distance_table(path, coords)
    _two_opt(p, dist)
    while _or_opt(p, dist) and _two_opt(p, dist):
        pass
    return [names[i] for i in p]


def find_shortest_route(coords: Mapping[str, GeoPoint], start: str, end: str) -> RouteResult:
    """Shortest path from ``start`` to ``end`` visiting every other location once.

    ``start`` and ``end`` may name the same location for a round trip.
    """
    if start not in coords or end not in coords:
        raise ContractError(f"start {start!r} or end {end!r} not among the locations")
    others = [name for name in coords if name not in (start, end)]
    if len(others) < BRUTE_FORCE_LIMIT:
        best, best_len = None, math.inf
        for perm in itertools.permutations(others):
            candidate = [start, *perm, end]
            length = path_length(candidate, coords)
            if length < best_len:
                best, best_len = candidate, length
        path = best
    else:
        path = local_search(nearest_neighbor_path(coords, start, end), coords, start, end)
    steps = tuple(haversine(coords[a], coords[b]) for a, b in zip(path, path[1:]))
    return RouteResult(tuple(path), sum(steps), steps)


# --- inter-cluster bearings -------------------------------------------------------


@dataclass(frozen=True)
class BearingResult:
    target: str
    direction: str
    distance_km: float
    bearing_deg: float

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "direction": self.direction,
            "distance_km": self.distance_km,
            "bearing_deg": self.bearing_deg,
        }


def initial_bearing(start: GeoPoint, target: GeoPoint) -> float:
    """Forward azimuth in degrees, ``[0, 360)``, 0 = north, clockwise."""
    phi_s, phi_t = math.radians(start.lat), math.radians(target.lat)
    dlam = math.radians(target.lon - start.lon)
    theta = math.atan2(
        math.sin(dlam) * math.cos(phi_t),
        math.cos(phi_s) * math.sin(phi_t) - math.sin(phi_s) * math.cos(phi_t) * math.cos(dlam),
    )
    bearing = (math.degrees(theta) + 360.0) % 360.0
    return 0.0 if bearing >= 360.0 else bearing


def compass_point(bearing_deg: float) -> str:
    # half-up rounding: a bearing of exactly 22.5 maps to NE
    return COMPASS[int(math.floor(bearing_deg / 45.0 + 0.5)) % 8]


def directions_distances(start: GeoPoint, targets: Sequence[tuple[str, GeoPoint]]) -> list[BearingResult]:
    out = []
    for name, point in targets:
        if point == start:
            out.append(BearingResult(name, "N", 0.0, 0.0))
            continue
        bearing = initial_bearing(start, point)
        out.append(BearingResult(name, compass_point(bearing), haversine(start, point), bearing))
    return out


# --- preprocessing --------------------------------------------------------------------


@dataclass(frozen=True)
class SpatialSummary:
    hotel: str
    k_requested: int
    clusters: tuple
    routes: tuple
    bearings: tuple

    @property
    def k(self) -> int:
        return len(self.clusters)

    @property
    def note(self) -> str | None:
        if self.k != self.k_requested:
            return f"k clamped from {self.k_requested} to {self.k} ({sum(len(c.members) for c in self.clusters)} POIs)"
        return None

    def to_dict(self) -> dict:
        return {
            "hotel": self.hotel,
            "k": self.k,
            "k_requested": self.k_requested,
            "note": self.note,
            "clusters": [
                {"id": c.id, "members": list(c.members), "centroid": {"lat": c.centroid.lat, "lon": c.centroid.lon}}
                for c in self.clusters
            ],
            "routes": [r.to_dict() for r in self.routes],
            "bearings": [b.to_dict() for b in self.bearings],
        }


def summarize(pois: Mapping[str, POI], hotel: str, k: int, seed: int = 0) -> SpatialSummary:
    """Cluster the attractions, route each cluster as a round trip from the
    hotel, and locate every cluster centre relative to the hotel."""
    if hotel not in pois:
        raise ContractError(f"unknown hotel {hotel!r}")
    candidates = [p for p in pois.values() if p.category == "attraction"]
    if not candidates:
        candidates = [p for p in pois.values() if p.category not in ("hotel", "station")]
    if not candidates:
        raise ContractError("no POIs to cluster")
    if k < 1:
        raise ContractError("k must be >= 1")
    clusters = cluster_pois(candidates, choose_k(k, len(candidates)), seed)
    home = pois[hotel].location
    routes = []
    for c in clusters:
        coords = {hotel: home}
        coords.update((m, pois[m].location) for m in c.members)
        routes.append(find_shortest_route(coords, hotel, hotel))
    bearings = directions_distances(home, [(str(c.id + 1), c.centroid) for c in clusters])
    return SpatialSummary(hotel, k, tuple(clusters), tuple(routes), tuple(bearings))
