"""Domain types, plan documents, structural validation and trajectories."""
from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

from .errors import PlanParseError, PlanReferenceError
from .stamina import StaminaRule, load_rules

POI_CATEGORIES = ("attraction", "restaurant", "hotel", "station", "other")
PLAN_ACTIVITIES = ("transit", "rest", "dine", "sightsee")
TYPE_LABELS = ("single", "couple", "family", "group")
MINUTES_PER_DAY = 1440

_TIME_RE = re.compile(r"^\s*(\d{1,2}):(\d{2})\s*$")


def parse_time(text: str) -> int:
    """``"HH:MM"`` to minutes since midnight."""
    m = _TIME_RE.match(str(text))
    if not m:
        raise ValueError(f"not an HH:MM time: {text!r}")
    hh, mm = int(m.group(1)), int(m.group(2))
    if hh > 23 or mm > 59:
        raise ValueError(f"time out of range: {text!r}")
    return hh * 60 + mm


def format_time(minutes: int) -> str:
    return f"{minutes // 60:02d}:{minutes % 60:02d}"


def normalize_place(name: str) -> str:
    return " ".join(str(name).casefold().split())


@dataclass(frozen=True)
class GeoPoint:
    lat: float
    lon: float

    def __post_init__(self):
        if not (math.isfinite(self.lat) and math.isfinite(self.lon)):
            raise ValueError(f"non-finite coordinate ({self.lat}, {self.lon})")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"latitude {self.lat} out of range")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"longitude {self.lon} out of range")


@dataclass(frozen=True)
class POI:
    id: str
    name: str
    location: GeoPoint
    category: str = "attraction"
    blog_excerpt: str | None = None

    def __post_init__(self):
        if self.category not in POI_CATEGORIES:
            raise ValueError(f"unknown POI category {self.category!r}")

    def to_dict(self) -> dict:
        d = {
            "id": self.id,
            "name": self.name,
            "lat": self.location.lat,
            "lon": self.location.lon,
            "category": self.category,
        }
        if self.blog_excerpt is not None:
            d["blog_excerpt"] = self.blog_excerpt
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "POI":
        if "location" in d:
            lat, lon = d["location"]["lat"], d["location"]["lon"]
        else:
            lat, lon = d["lat"], d["lon"]
        return cls(
            id=str(d["id"]),
            name=str(d["name"]),
            location=GeoPoint(float(lat), float(lon)),
            category=d.get("category", "attraction"),
            blog_excerpt=d.get("blog_excerpt"),
        )


def load_pois(source) -> dict[str, POI]:
    """Read a POI dataset (JSON array) from a path or an already-parsed list."""
    if isinstance(source, (list, tuple)):
        records = source
    else:
        with open(source, encoding="utf-8") as fh:
            records = json.load(fh)
    pois: dict[str, POI] = {}
    for i, rec in enumerate(records):
        try:
            poi = POI.from_dict(rec)
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanParseError(f"pois[{i}]", str(exc)) from None
        if poi.id in pois:
            raise PlanParseError(f"pois[{i}].id", f"duplicate POI id {poi.id!r}")
        pois[poi.id] = poi
    return pois


@dataclass(frozen=True)
class TravelerProfile:
    id: str
    group: tuple
    type_label: str
    preferences: str
    budget: int
    initial_stamina: float
    stamina_rule: StaminaRule
    description: str = ""

    def __post_init__(self):
        if not self.group:
            raise ValueError("traveler group must not be empty")
        if self.type_label not in TYPE_LABELS:
            raise ValueError(f"unknown traveler type {self.type_label!r}")
        if not 0.0 < self.initial_stamina <= 10.0:
            raise ValueError(f"initial stamina {self.initial_stamina} outside (0, 10]")

    @property
    def group_size(self) -> int:
        return len(self.group)

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "group": [dict(m) for m in self.group],
            "type_label": self.type_label,
            "preferences": self.preferences,
            "budget": self.budget,
            "initial_stamina": self.initial_stamina,
            "stamina_rule": self.stamina_rule.to_dict(),
            "description": self.description,
        }

    @classmethod
    def from_dict(cls, d: Mapping, rules: Mapping[str, StaminaRule] | None = None) -> "TravelerProfile":
        rule = d["stamina_rule"]
        if isinstance(rule, str):
            rules = rules if rules is not None else load_rules()
            if rule not in rules:
                raise PlanReferenceError(f"unknown stamina rule {rule!r}")
            rule = rules[rule]
        elif not isinstance(rule, StaminaRule):
            rule = StaminaRule.from_dict(rule)
        return cls(
            id=str(d.get("id", "")),
            group=tuple({"gender": m["gender"], "age": int(m["age"])} for m in d["group"]),
            type_label=d["type_label"],
            preferences=d.get("preferences", ""),
            budget=int(d.get("budget", 0)),
            initial_stamina=float(d["initial_stamina"]),
            stamina_rule=rule,
            description=d.get("description", ""),
        )


@dataclass(frozen=True)
class PlanEntry:
    day: int
    start_time: int
    location: str
    activity: str
    end_time: int | None = None
    guidance: str = ""

    def __post_init__(self):
        if self.day < 1:
            raise ValueError(f"day must be >= 1, got {self.day}")
        if not 0 <= self.start_time < MINUTES_PER_DAY:
            raise ValueError(f"start_time {self.start_time} outside a day")
        if self.end_time is not None and not self.start_time <= self.end_time < MINUTES_PER_DAY:
            raise ValueError("end_time must not precede start_time")
        if self.activity not in PLAN_ACTIVITIES:
            raise ValueError(f"unknown activity {self.activity!r}")


@dataclass(frozen=True)
class Plan:
    city: str
    days: int
    hotel: str
    origin_terminal: str
    entries: tuple = ()
    traveler_ref: str = ""

    def day_entries(self, day: int) -> list[PlanEntry]:
        return [e for e in self.entries if e.day == day]


@dataclass(frozen=True)
class TrajectoryItem:
    time: int
    location: str


@dataclass(frozen=True)
class Trajectory:
    day: int
    items: tuple = field(default_factory=tuple)


def place_name(location: str, pois: Mapping[str, POI] | None = None) -> str:
    """Display name for a plan location that may be a POI id."""
    if pois and location in pois:
        return pois[location].name
    return location


def same_place(a: str, b: str, pois: Mapping[str, POI] | None = None) -> bool:
    return normalize_place(place_name(a, pois)) == normalize_place(place_name(b, pois))


def _require(doc: Mapping, key: str, where: str):
    if key not in doc:
        raise PlanParseError(f"{where}{key}", "missing required field")
    return doc[key]


def _as_int(value, name: str) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise PlanParseError(name, f"expected integer, got {value!r}")
    return value


def _as_str(value, name: str, allow_empty: bool = False) -> str:
    if not isinstance(value, str) or (not allow_empty and not value.strip()):
        raise PlanParseError(name, f"expected non-empty string, got {value!r}")
    return value


def _as_time(value, name: str) -> int:
    try:
        return parse_time(value)
    except ValueError as exc:
        raise PlanParseError(name, str(exc)) from None


def parse_plan(document, pois: Mapping[str, POI] | None = None) -> Plan:
    """Build a :class:`Plan` from a plan document (JSON text or parsed mapping).

    With ``pois`` given, the hotel and origin terminal must resolve to POIs of
    the matching category.
    """
    if isinstance(document, (str, bytes)):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise PlanParseError("document", f"invalid JSON: {exc}") from None
    if not isinstance(document, Mapping):
        raise PlanParseError("document", "plan document must be a JSON object")

    city = _as_str(_require(document, "city", ""), "city")
    days = _as_int(_require(document, "days", ""), "days")
    if days < 1:
        raise PlanParseError("days", "must be >= 1")
    hotel = _as_str(_require(document, "hotel", ""), "hotel")
    terminal = _as_str(_require(document, "origin_terminal", ""), "origin_terminal")
    traveler_ref = _as_str(document.get("traveler_ref", ""), "traveler_ref", allow_empty=True)
    raw_entries = _require(document, "entries", "")
    if not isinstance(raw_entries, list):
        raise PlanParseError("entries", "expected a list")

    entries = []
    for i, raw in enumerate(raw_entries):
        where = f"entries[{i}]."
        if not isinstance(raw, Mapping):
            raise PlanParseError(f"entries[{i}]", "expected an object")
        day = _as_int(_require(raw, "day", where), where + "day")
        if day < 1:
            raise PlanParseError(where + "day", "must be >= 1")
        start = _as_time(_require(raw, "start_time", where), where + "start_time")
        end = raw.get("end_time")
        if end is not None:
            end = _as_time(end, where + "end_time")
            if end < start:
                raise PlanParseError(where + "end_time", "end_time precedes start_time")
        location = _as_str(_require(raw, "location", where), where + "location")
        activity = _require(raw, "activity", where)
        if activity not in PLAN_ACTIVITIES:
            raise PlanParseError(where + "activity", f"unknown activity {activity!r}")
        guidance = _as_str(raw.get("guidance", ""), where + "guidance", allow_empty=True)
        entries.append(PlanEntry(day, start, location, activity, end, guidance))

    entries.sort(key=lambda e: (e.day, e.start_time))
    if entries and max(e.day for e in entries) != days:
        raise PlanParseError("days", f"days={days} but the last entry is on day {entries[-1].day}")

    if pois is not None:
        for key, value, category in (("hotel", hotel, "hotel"), ("origin_terminal", terminal, "station")):
            if value not in pois:
                raise PlanReferenceError(f"{key}: unknown POI id {value!r}")
            if pois[value].category != category:
                raise PlanReferenceError(f"{key}: POI {value!r} is a {pois[value].category}, not a {category}")

    return Plan(city, days, hotel, terminal, tuple(entries), traveler_ref)


def serialize_plan(plan: Plan) -> dict:
    entries = []
    for e in plan.entries:
        d = {"day": e.day, "start_time": format_time(e.start_time)}
        if e.end_time is not None:
            d["end_time"] = format_time(e.end_time)
        d["location"] = e.location
        d["activity"] = e.activity
        if e.guidance:
            d["guidance"] = e.guidance
        entries.append(d)
    return {
        "city": plan.city,
        "days": plan.days,
        "hotel": plan.hotel,
        "origin_terminal": plan.origin_terminal,
        "traveler_ref": plan.traveler_ref,
        "entries": entries,
    }


def dump_plan(plan: Plan) -> str:
    return json.dumps(serialize_plan(plan), indent=2, ensure_ascii=False) + "\n"


# --- structural validation --------------------------------------------------


@dataclass(frozen=True)
class CriteriaConfig:
    """Knobs for the structural checks.

    ``guidance_pattern`` is a regex every sightseeing guidance block must
    match (``re.search``); ``None`` only requires non-blank text.
    """

    guidance_pattern: str | None = None
    min_guidance_chars: int = 1


@dataclass(frozen=True)
class ValidationReport:
    terminal_anchoring: bool
    hotel_anchoring: bool
    guidance_format: bool
    failures: tuple = ()

    @property
    def checks(self) -> dict[str, bool]:
        return {
            "terminal_anchoring": self.terminal_anchoring,
            "hotel_anchoring": self.hotel_anchoring,
            "guidance_format": self.guidance_format,
        }

    @property
    def all_passed(self) -> bool:
        return all(self.checks.values())


def validate_plan(
    plan: Plan, config: CriteriaConfig | None = None, pois: Mapping[str, POI] | None = None
) -> ValidationReport:
    config = config or CriteriaConfig()
    failures = []

    terminal_ok = bool(plan.entries)
    if not plan.entries:
        failures.append("terminal_anchoring: plan has no entries")
    else:
        first, last = plan.entries[0], plan.entries[-1]
        if first.day != 1 or not same_place(first.location, plan.origin_terminal, pois):
            terminal_ok = False
            failures.append(f"terminal_anchoring: journey starts at {first.location!r}")
        if last.day != plan.days or not same_place(last.location, plan.origin_terminal, pois):
            terminal_ok = False
            failures.append(f"terminal_anchoring: journey ends at {last.location!r}")

    hotel_ok = True
    for day in range(2, plan.days):
        todays = plan.day_entries(day)
        if not todays:
            hotel_ok = False
            failures.append(f"hotel_anchoring: day {day} has no entries")
            continue
        for label, entry in (("begins", todays[0]), ("ends", todays[-1])):
            if not same_place(entry.location, plan.hotel, pois):
                hotel_ok = False
                failures.append(f"hotel_anchoring: day {day} {label} at {entry.location!r}")

    guidance_ok = True
    pattern = re.compile(config.guidance_pattern) if config.guidance_pattern else None
    for entry in plan.entries:
        if entry.activity != "sightsee":
            continue
        text = entry.guidance.strip()
        if len(text) < config.min_guidance_chars or (pattern is not None and not pattern.search(text)):
            guidance_ok = False
            failures.append(f"guidance_format: day {entry.day} {format_time(entry.start_time)} {entry.location!r}")

    return ValidationReport(terminal_ok, hotel_ok, guidance_ok, tuple(failures))


# --- trajectories -------------------------------------------------------------


def collapse_visits(day: int, pairs: Iterable[tuple[int, str]]) -> Trajectory:
    """Turn (time, place) pairs into a trajectory, merging consecutive repeats.

    A repeated place keeps the time it was first reached.
    """
    items: list[TrajectoryItem] = []
    for time, place in pairs:
        loc = normalize_place(place)
        if items and items[-1].location == loc:
            continue
        items.append(TrajectoryItem(time, loc))
    return Trajectory(day, tuple(items))


def extract_planned_trajectory(plan: Plan, pois: Mapping[str, POI] | None = None) -> list[Trajectory]:
    if not plan.entries:
        return []
    return [
        collapse_visits(day, ((e.start_time, place_name(e.location, pois)) for e in plan.day_entries(day)))
        for day in range(1, plan.days + 1)
    ]


def trajectories_to_json(trajectories: Sequence[Trajectory]) -> list[dict]:
    return [
        {"day": t.day, "items": [{"time": format_time(i.time), "location": i.location} for i in t.items]}
        for t in trajectories
    ]
