"""One test per acceptance criterion; a PASS/FAIL line per criterion is printed at the end.

Run standalone with ``python tests/test_acceptance.py``.
"""
from __future__ import annotations

import contextlib
import math
import random
import statistics
import subprocess
import sys
import time

import pytest

import test_metrics
import test_sandbox
import test_spatial
from conftest import ACCEPTANCE
from oracles import alignment_similarity, brute_force_path, held_karp_path
from travelsim.adapters import FixtureChatClient, bundled_fixture_path
from travelsim.cli import main as cli_main
from travelsim.core import GeoPoint, TrajectoryItem, extract_planned_trajectory, validate_plan
from travelsim.maop import MAX_ASPECTS, ContextDocument, assemble_context, decompose, plan_maop, route
from travelsim.metrics import DimScores, aggregate_dimensions, aggregate_per, cpl, reward, tpss, tpss_day
from travelsim.policies import EchoPolicy, ScriptedPolicy
from travelsim.sandbox import SimulationConfig, extract_simulated_trajectory, run_simulation, stamina_sequence
from travelsim.spatial import (
    directions_distances,
    find_shortest_route,
    haversine,
    nearest_neighbor_path,
    path_length,
    summarize,
)
from travelsim.stamina import stamina_state


@contextlib.contextmanager
def criterion(number: int, title: str):
    """Record PASS only if the block finishes; the block may fill ``detail``."""
    detail: list[str] = []
    ACCEPTANCE[number] = (title, False, "did not finish")
    try:
        yield detail
    except BaseException as exc:
        ACCEPTANCE[number] = (title, False, "; ".join(detail + [f"{type(exc).__name__}: {exc}"])[:300])
        raise
    ACCEPTANCE[number] = (title, True, "; ".join(detail))


def random_trajectory(rng, n):
    return [(rng.randrange(0, 1440), rng.choice("abcde")) for _ in range(n)]


def test_c01_tpss_matches_exhaustive_oracle():
    with criterion(1, "trajectory similarity equals exhaustive alignment oracle") as detail:
        rng = random.Random(1)
        t0 = time.perf_counter()
        worst = 0.0
        for _ in range(500):
            p = random_trajectory(rng, rng.randint(0, 6))
            s = random_trajectory(rng, rng.randint(0, 6))
            got = tpss_day([TrajectoryItem(*x) for x in p], [TrajectoryItem(*x) for x in s])
            worst = max(worst, abs(got - alignment_similarity(p, s)))
        elapsed = time.perf_counter() - t0
        detail.append(f"500 pairs, max |diff| {worst:.1e}, {elapsed:.2f}s")
        assert worst <= 1e-9
        assert elapsed < 5.0


def test_c02_tpss_worked_examples():
    with criterion(2, "trajectory similarity worked examples 87.5 / 100 / 50") as detail:
        planned = [TrajectoryItem(600, "a"), TrajectoryItem(720, "b")]
        shifted = [TrajectoryItem(660, "a"), TrajectoryItem(720, "b")]
        extras = [TrajectoryItem(600, "a"), TrajectoryItem(630, "x"), TrajectoryItem(680, "y"), TrajectoryItem(720, "b")]
        values = (tpss_day(planned, shifted), tpss_day(planned, planned), tpss_day(planned, extras))
        detail.append(" / ".join(f"{v:g}" for v in values))
        assert values == (87.5, 100.0, 50.0)


def random_instance(rng, n):
    pts = {f"p{i}": GeoPoint(39.85 + rng.random() * 0.15, 116.28 + rng.random() * 0.2) for i in range(n + 2)}
    names = list(pts)
    return pts, names[0], names[-1], names[1:-1]


def test_c03_route_search_quality():
    with criterion(3, "shortest route exact for 3-5 stops, within bounds for 7-9") as detail:
        rng = random.Random(3)
        t0 = time.perf_counter()
        for n in (3, 4, 5):
            for _ in range(100):
                pts, s, e, mid = random_instance(rng, n)
                d = lambda a, b: haversine(pts[a], pts[b])
                assert find_shortest_route(pts, s, e).total_distance == pytest.approx(brute_force_path(d, s, e, mid), abs=1e-9)
        for n in (7, 8, 9):
            ratios = []
            for k in range(100):
                pts, s, e, mid = random_instance(rng, n)
                d = lambda a, b: haversine(pts[a], pts[b])
                got = find_shortest_route(pts, s, e).total_distance
                best = held_karp_path(d, s, e, mid)
                if k < 3 and n == 7:
                    assert best == pytest.approx(brute_force_path(d, s, e, mid), abs=1e-9)
                assert got <= path_length(nearest_neighbor_path(pts, s, e), pts) + 1e-9
                ratios.append(got / best)
            detail.append(f"n={n} worst {max(ratios):.3f} mean {statistics.mean(ratios):.4f}")
            assert max(ratios) <= 1.15
            assert statistics.mean(ratios) <= 1.05
        elapsed = time.perf_counter() - t0
        detail.append(f"{elapsed:.1f}s")
        assert elapsed < 30.0


def destination(origin: GeoPoint, bearing_deg: float, km: float) -> GeoPoint:
    r = km / 6371.0
    la1, lo1, th = math.radians(origin.lat), math.radians(origin.lon), math.radians(bearing_deg)
    la2 = math.asin(math.sin(la1) * math.cos(r) + math.cos(la1) * math.sin(r) * math.cos(th))
    lo2 = lo1 + math.atan2(math.sin(th) * math.sin(r) * math.cos(la1), math.cos(r) - math.sin(la1) * math.sin(la2))
    return GeoPoint(math.degrees(la2), math.degrees(lo2))


def test_c04_bearing_table():
    with criterion(4, "compass labels, bearings and haversine reference distance") as detail:
        origin = GeoPoint(39.9, 116.4)
        labels = ("N", "NE", "E", "SE", "S", "SW", "W", "NW")
        worst = 0.0
        checked = 0
        for i, label in enumerate(labels):
            for offset in (-10.0, 0.0, 10.0):
                want = (i * 45 + offset) % 360
                [r] = directions_distances(origin, [("t", destination(origin, want, 10.0))])
                assert r.direction == label
                diff = abs((r.bearing_deg - want + 180) % 360 - 180)
                worst = max(worst, diff)
                checked += 1
        # worked by hand: from (0,0) to (1,1) the bearing is atan(cos 1 deg)
        [r] = directions_distances(GeoPoint(0, 0), [("t", GeoPoint(1, 1))])
        assert abs(r.bearing_deg - 44.9956) < 0.5 and r.direction == "NE"
        km = haversine(GeoPoint(0, 0), GeoPoint(0, 1))
        detail.append(f"{checked} targets, worst bearing error {worst:.2e} deg, 1 deg = {km:.3f} km")
        assert worst < 0.5
        assert abs(km - 111.195) <= 0.01


def test_c05_per_aggregation():
    with criterion(5, "personalization aggregation matches published values") as detail:
        a = aggregate_dimensions(DimScores(77.5, 86.4, 79.3, 76.4, 87.6))
        b = aggregate_dimensions(DimScores(69.2, 83.7, 73.4, 74.2, 74.5))
        detail.append(f"{a:.2f}, {b:.2f}")
        assert abs(a - 81.4) <= 0.05
        assert abs(b - 75.0) <= 0.05
        for s in (0.0, 50.0, 100.0):
            u = DimScores.uniform(s)
            out = aggregate_per(u, [u, u], [u, u])
            assert out == u and aggregate_dimensions(out) == s


def test_c06_reward():
    with criterion(6, "reward values and format penalty") as detail:
        cases = {(0.5, True): 0.0, (1.0, True): 1.0, (0.0, True): -1.0, (1.0, False): 0.0, (0.0, False): -2.0}
        for (p, ok), want in cases.items():
            assert reward(p, ok) == want
        rng = random.Random(6)
        for _ in range(1000):
            p = rng.random()
            assert reward(p, False) == reward(p, True) - 1.0
        detail.append("5 fixed cases, 1000 random penalty checks")


def test_c07_cpl_ladder():
    with criterion(7, "completeness ladder 0/25/50/75/100") as detail:
        scores = []
        for flags, want in test_metrics.LADDER:
            result = cpl(test_metrics.ladder_plan(**flags))
            assert result.score == want
            expected = {"terminal_anchoring": flags.get("terminal", True), "hotel_anchoring": flags.get("hotel", True),
                        "guidance_format": flags.get("guidance", True), "meals": flags.get("meals", True)}
            assert result.breakdown == expected
            scores.append(result.score)
        detail.append("/".join(f"{s:g}" for s in scores))


def test_c08_stamina_replay(bundle, plan, profile, decisions, golden):
    with criterion(8, "stamina case replay and state boundaries") as detail:
        trace = run_simulation(plan, profile, ScriptedPolicy(decisions), bundle.providers(), SimulationConfig(seed=0))
        seq = stamina_sequence(trace)
        assert profile.initial_stamina == 6.5 and seq[0] == 4.5
        assert seq == golden("beijing_stamina.json")["stamina"]
        bounds = {6.5: "Energetic", 6.0: "Good", 4.0: "Good", 3.99: "Slightly Tired", 1.99: "Very Tired"}
        for v, label in bounds.items():
            assert stamina_state(v) == label
        detail.append(f"6.5 -> {seq[0]} at arrival, {len(seq)} states match golden")


def test_c09_determinism(tmp_path, bundle, plan, profile):
    with criterion(9, "byte-identical traces and echo feasibility 100") as detail:
        decisions = bundled_fixture_path("beijing-mini") / "decisions.json"
        blobs = []
        for i in range(3):
            out = tmp_path / f"run{i}"
            assert cli_main(["simulate", "--seed", "7", "--decisions", str(decisions), "--out", str(out)]) == 0
            blobs.append((out / "trace.jsonl").read_bytes())
        assert blobs[0] == blobs[1] == blobs[2]
        providers = bundle.providers()
        trace = run_simulation(plan, profile, EchoPolicy(providers, profile.stamina_rule), providers, SimulationConfig(seed=7))
        fea = tpss(extract_planned_trajectory(plan, bundle.pois), extract_simulated_trajectory(trace, bundle.pois))
        detail.append(f"3 identical traces ({len(blobs[0])} bytes); echo feasibility {fea:g}")
        assert fea == 100.0


def test_c10_pipeline_contracts(bundle, profile):
    with criterion(10, "multi-aspect planning contracts") as detail:
        ctx = ContextDocument("p", "h", "", "", "")
        many = "```aspects\n" + "\n".join(f"{i}. topic {i} :: advice {i}" for i in range(1, 13)) + "\n```"
        rows = "```blueprint\n" + "\n".join(f"{i}. merged {i} :: do {i} <- [{i}]" for i in range(1, 13)) + "\n```"
        client = FixtureChatClient({"decompose:*": many, "route": rows})
        aspects = decompose(ctx, "r", 1, client)
        bp = route(aspects, MAX_ASPECTS, client)
        assert len(aspects) == 12 and len(bp) <= MAX_ASPECTS

        chat = bundle.chat_client()
        s = summarize(bundle.pois, "hotel-shichahai", 3, seed=0)
        ctx = assemble_context(profile, bundle.pois["hotel-shichahai"], bundle.posts, s.routes, s.bearings, bundle.pois)
        bp2 = route(decompose(ctx, "3 days in Beijing", 2, chat), MAX_ASPECTS, chat)
        plan, transcript = plan_maop(bp2, ctx, chat, pois=bundle.pois)
        assert transcript.planner_turns == len(bp2) + 1
        report = validate_plan(plan, None, bundle.pois)
        detail.append(f"12 aspects -> {len(bp)}; {len(bp2)} aspects, {transcript.planner_turns} planner turns; checks {report.failures or 'all pass'}")
        assert report.all_passed


PROPERTY_SUITES = [
    ("spatial", test_spatial.test_route_properties),
    ("spatial", test_spatial.test_haversine_metric_properties),
    ("spatial", test_spatial.test_kmeans_partition_and_monotone_wcss),
    ("metrics", test_metrics.test_tpss_properties),
    ("metrics", test_metrics.test_per_matches_scalar_oracle_and_is_linear),
    ("sandbox", test_sandbox.test_clock_outlay_and_accounting_invariants),
]


def test_c11_invariant_suites():
    with criterion(11, "property suites over at least 200 cases each") as detail:
        for area, suite in PROPERTY_SUITES:
            examples = suite._hypothesis_internal_use_settings.max_examples
            assert examples >= 200, f"{suite.__name__} runs only {examples} cases"
            suite()
            detail.append(f"{area}:{suite.__name__.removeprefix('test_')}x{examples}")


if __name__ == "__main__":
    # a fresh interpreter, so pytest sees hypothesis before anything imports it
    sys.exit(subprocess.call([sys.executable, "-m", "pytest", __file__, "-q", "-p", "no:cacheprovider"]))
