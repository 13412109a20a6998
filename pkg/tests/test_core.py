from __future__ import annotations

import copy
import json

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from travelsim.core import (
    POI,
    CriteriaConfig,
    GeoPoint,
    Plan,
    PlanEntry,
    TravelerProfile,
    collapse_visits,
    dump_plan,
    extract_planned_trajectory,
    format_time,
    load_pois,
    normalize_place,
    parse_plan,
    parse_time,
    serialize_plan,
    validate_plan,
)
from travelsim.errors import PlanParseError, PlanReferenceError


def doc(**over):
    base = {
        "city": "Testville",
        "days": 2,
        "hotel": "H",
        "origin_terminal": "T",
        "entries": [
            {"day": 1, "start_time": "09:00", "location": "T", "activity": "transit"},
            {"day": 1, "start_time": "10:00", "location": "A", "activity": "sightsee", "end_time": "11:00", "guidance": "look"},
            {"day": 1, "start_time": "12:00", "location": "H", "activity": "rest"},
            {"day": 2, "start_time": "09:00", "location": "H", "activity": "transit"},
            {"day": 2, "start_time": "10:00", "location": "T", "activity": "rest"},
        ],
    }
    base.update(over)
    return base


def test_time_round_trip():
    assert parse_time("00:00") == 0
    assert parse_time("23:59") == 1439
    assert parse_time(" 9:05 ") == 545
    assert format_time(545) == "09:05"
    for bad in ("24:00", "12:60", "noon", "1200"):
        with pytest.raises(ValueError):
            parse_time(bad)


def test_geopoint_rejects_out_of_range():
    with pytest.raises(ValueError):
        GeoPoint(91, 0)
    with pytest.raises(ValueError):
        GeoPoint(0, 181)
    with pytest.raises(ValueError):
        GeoPoint(float("nan"), 0)


def test_poi_accepts_flat_or_nested_coordinates():
    a = POI.from_dict({"id": "x", "name": "X", "lat": 1.0, "lon": 2.0})
    b = POI.from_dict({"id": "x", "name": "X", "location": {"lat": 1.0, "lon": 2.0}})
    assert a == b
    assert POI.from_dict(a.to_dict()) == a


def test_load_pois_rejects_duplicates():
    with pytest.raises(PlanParseError, match="duplicate"):
        load_pois([{"id": "a", "name": "A", "lat": 0, "lon": 0}, {"id": "a", "name": "B", "lat": 1, "lon": 1}])


def test_parse_plan_sorts_entries_and_round_trips():
    d = doc()
    d["entries"] = list(reversed(d["entries"]))
    plan = parse_plan(d)
    assert [(e.day, e.start_time) for e in plan.entries] == sorted((e.day, e.start_time) for e in plan.entries)
    assert parse_plan(dump_plan(plan)) == plan


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d.pop("city"), "city"),
        (lambda d: d.update(days="2"), "days"),
        (lambda d: d["entries"][1].update(activity="party"), "entries[1].activity"),
        (lambda d: d["entries"][1].update(start_time="25:00"), "entries[1].start_time"),
        (lambda d: d["entries"][1].update(end_time="09:30"), "entries[1].end_time"),
        (lambda d: d["entries"][0].pop("location"), "entries[0].location"),
        (lambda d: d.update(days=3), "days"),
    ],
)
def test_parse_plan_names_the_offending_field(mutate, field):
    d = doc()
    mutate(d)
    with pytest.raises(PlanParseError) as info:
        parse_plan(d)
    assert info.value.field == field


def test_parse_plan_checks_anchor_references():
    pois = load_pois(
        [
            {"id": "H", "name": "Hotel", "lat": 0, "lon": 0, "category": "hotel"},
            {"id": "T", "name": "Station", "lat": 0, "lon": 1, "category": "station"},
        ]
    )
    parse_plan(doc(), pois)
    with pytest.raises(PlanReferenceError, match="origin_terminal"):
        parse_plan(doc(origin_terminal="H"), pois)
    with pytest.raises(PlanReferenceError, match="hotel"):
        parse_plan(doc(hotel="nowhere"), pois)


def test_parse_plan_rejects_invalid_json_text():
    with pytest.raises(PlanParseError):
        parse_plan("{not json")


def test_validate_plan_checks():
    report = validate_plan(parse_plan(doc()))
    assert report.all_passed and report.failures == ()

    bad = doc()
    bad["entries"][-1]["location"] = "H"
    report = validate_plan(parse_plan(bad))
    assert not report.terminal_anchoring and report.hotel_anchoring

    three = doc(days=3)
    three["entries"] = three["entries"][:3] + [
        {"day": 2, "start_time": "09:00", "location": "A", "activity": "sightsee", "guidance": "g"},
        {"day": 2, "start_time": "18:00", "location": "H", "activity": "rest"},
        {"day": 3, "start_time": "09:00", "location": "T", "activity": "rest"},
    ]
    report = validate_plan(parse_plan(three))
    assert not report.hotel_anchoring
    assert any("day 2 begins" in f for f in report.failures)

    blank = doc()
    blank["entries"][1]["guidance"] = "   "
    assert not validate_plan(parse_plan(blank)).guidance_format
    strict = CriteriaConfig(guidance_pattern=r"^Tip:")
    assert not validate_plan(parse_plan(doc()), strict).guidance_format


def test_two_day_plan_has_no_middle_days_to_anchor():
    assert validate_plan(parse_plan(doc())).hotel_anchoring


def test_collapse_visits_keeps_first_arrival():
    t = collapse_visits(1, [(60, "A"), (90, "a "), (120, "B"), (130, "A")])
    assert [(i.time, i.location) for i in t.items] == [(60, "a"), (120, "b"), (130, "a")]


def test_planned_trajectory_uses_names_and_one_day_each():
    pois = {"A": POI("A", "Alpha Gate", GeoPoint(0, 0))}
    plan = parse_plan(doc())
    traj = extract_planned_trajectory(plan, pois)
    assert [t.day for t in traj] == [1, 2]
    assert traj[0].items[1].location == normalize_place("Alpha Gate")
    assert extract_planned_trajectory(Plan("x", 1, "H", "T")) == []


def test_profile_from_rule_key_and_validation():
    raw = {
        "id": "p",
        "group": [{"gender": "female", "age": 30}],
        "type_label": "single",
        "initial_stamina": 8.5,
        "stamina_rule": "single",
    }
    p = TravelerProfile.from_dict(raw)
    assert p.group_size == 1 and p.stamina_rule.sightseeing_per_hr == -1.0
    assert TravelerProfile.from_dict(json.loads(json.dumps(p.to_dict()))) == p
    with pytest.raises(PlanReferenceError):
        TravelerProfile.from_dict(dict(raw, stamina_rule="astronaut"))
    with pytest.raises(ValueError):
        TravelerProfile.from_dict(dict(raw, type_label="crowd"))
    with pytest.raises(ValueError):
        TravelerProfile.from_dict(dict(raw, group=[]))


times = st.integers(0, 1439).map(format_time)
entries = st.fixed_dictionaries(
    {
        "day": st.integers(1, 3),
        "start_time": times,
        "location": st.sampled_from(["H", "T", "A", "B", "Some Place"]),
        "activity": st.sampled_from(["transit", "rest", "dine", "sightsee"]),
        "guidance": st.text(max_size=20),
    }
)


@settings(max_examples=200, deadline=None)
@given(st.lists(entries, min_size=1, max_size=12))
def test_serialize_parse_round_trip(raw_entries):
    d = doc(days=max(e["day"] for e in raw_entries), entries=copy.deepcopy(raw_entries))
    plan = parse_plan(d)
    again = parse_plan(serialize_plan(plan))
    assert again == plan
    assert all(isinstance(e, PlanEntry) for e in again.entries)
