"""Event-driven travel simulation.

A traveler state is ``(day, time, location, stamina, outlay, event)``. The
policy picks one of four actions (transit, rest, dine, sightsee) or ends the
day; the engine consults the information providers, computes the event and
its consequences, and appends the new state to the trace. Stamina and outlay
are always recomputed by the engine; whatever the policy reports about them
is kept in the decision log only.
"""
from __future__ import annotations

import concurrent.futures
import hashlib
import json
import math
import re
from dataclasses import asdict, dataclass, field
from typing import Any, Mapping, Protocol, Sequence

from .core import (
    POI,
    Plan,
    Trajectory,
    TravelerProfile,
    collapse_visits,
    dump_plan,
    format_time,
    normalize_place,
    parse_time,
    place_name,
    same_place,
)
from .errors import (
    ContractError,
    DecisionParseError,
    ModeError,
    ProviderError,
    SimulationAborted,
    TravelsimError,
)
from .stamina import (
    StaminaRule,
    StaminaValue,
    activity_delta,
    apply_arrival_penalty,
    normalize_mode,
    overnight_recovery,
    stamina_state,
)

TRACE_SCHEMA = "travelsim.trace/1"
ACTION_KINDS = ("transit", "rest", "dine", "sightsee")
EVENT_KINDS = ACTION_KINDS + ("arrival", "day_end")
LAST_MINUTE = 1439
TAXI_SEATS = 4


# --- provider contracts ---------------------------------------------------------


@dataclass(frozen=True)
class TransitOption:
    mode: str
    duration_min: int
    cost: int
    description: str = ""

    @classmethod
    def from_dict(cls, d: Mapping) -> "TransitOption":
        return cls(normalize_mode(d["mode"]), int(d["duration_min"]), int(d["cost"]), d.get("description", ""))


@dataclass(frozen=True)
class Restaurant:
    name: str
    cost_estimate: int
    quality: float
    duration_min: int

    @classmethod
    def from_dict(cls, d: Mapping) -> "Restaurant":
        return cls(d["name"], int(d["cost_estimate"]), float(d.get("quality", 0.0)), int(d["duration_min"]))


@dataclass(frozen=True)
class Experience:
    narrative: str
    suggested_duration_min: int
    cost: int

    @classmethod
    def from_dict(cls, d: Mapping) -> "Experience":
        return cls(d["narrative"], int(d["suggested_duration_min"]), int(d.get("cost", 0)))


class TransitProvider(Protocol):
    def query(self, origin: str, destination: str, depart_time: int) -> list[TransitOption]: ...


class DiningProvider(Protocol):
    def nearby(self, location: str, time: int) -> list[Restaurant]: ...


class SightseeProvider(Protocol):
    def experience(self, poi: POI, profile: TravelerProfile, state: "TravelerState") -> Experience: ...


@dataclass
class Providers:
    transit: TransitProvider
    dining: DiningProvider
    sightsee: SightseeProvider
    pois: Mapping[str, POI] = field(default_factory=dict)

    def resolve(self, location: str) -> str:
        """Map a POI name (as an LLM might write it) back to its id."""
        if location in self.pois:
            return location
        wanted = normalize_place(location)
        for poi in self.pois.values():
            if normalize_place(poi.name) == wanted:
                return poi.id
        return location


# --- state, actions, events ---------------------------------------------------------


@dataclass(frozen=True)
class Event:
    kind: str
    day: int
    start: int
    end: int
    location: str
    cost: int = 0
    detail: str = ""
    destination: str | None = None
    mode: str | None = None
    clamped: bool = False

    def __post_init__(self):
        if self.kind not in EVENT_KINDS:
            raise ContractError(f"unknown event kind {self.kind!r}")
        if self.end < self.start:
            raise ContractError("event ends before it starts")
        if self.cost < 0:
            raise ContractError("negative event cost")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["start"], d["end"] = format_time(self.start), format_time(self.end)
        return d

    @classmethod
    def from_dict(cls, d: Mapping) -> "Event":
        d = dict(d)
        d["start"], d["end"] = parse_time(d["start"]), parse_time(d["end"])
        return cls(**d)


@dataclass(frozen=True)
class TravelerState:
    day: int
    time: int
    location: str
    stamina: StaminaValue
    outlay: int
    event: Event

    @property
    def clock(self) -> tuple[int, int]:
        return (self.day, self.time)

    def to_dict(self) -> dict:
        return {
            "day": self.day,
            "time": format_time(self.time),
            "location": self.location,
            "stamina": self.stamina.value,
            "stamina_cap": self.stamina.cap,
            "stamina_state": stamina_state(self.stamina.value),
            "outlay": self.outlay,
        }


@dataclass(frozen=True)
class Action:
    kind: str
    destination: str | None = None
    mode: str | None = None
    duration_min: int | None = None
    restaurant: str | None = None

    def __post_init__(self):
        if self.kind not in ACTION_KINDS:
            raise ContractError(f"unknown action kind {self.kind!r}")
        if self.kind == "transit" and (self.destination is None or self.mode is None):
            raise ContractError("transit needs a destination and a mode")
        if self.duration_min is not None and self.duration_min < 0:
            raise ContractError("negative duration")


DAY_END = "day_end"


@dataclass
class Trace:
    header: dict
    states: list = field(default_factory=list)
    decisions: list = field(default_factory=list)
    feedback: list = field(default_factory=list)
    flags: list = field(default_factory=list)
    truncated: bool = False
    aborted: str | None = None

    def to_jsonl(self) -> str:
        lines = [dict(self.header, record="header")]
        for i, state in enumerate(self.states):
            if i > 0:
                lines.append(dict(self.decisions[i - 1], record="decision", index=i))
            lines.append(dict(state.event.to_dict(), record="event", index=i))
            lines.append(dict(state.to_dict(), record="state", index=i))
        for fb in self.feedback:
            lines.append(dict(fb, record="feedback"))
        lines.append({"record": "footer", "truncated": self.truncated, "aborted": self.aborted, "flags": self.flags})
        return "".join(json.dumps(line, sort_keys=True, ensure_ascii=False) + "\n" for line in lines)

    @classmethod
    def from_jsonl(cls, text: str) -> "Trace":
        records = [json.loads(line) for line in text.splitlines() if line.strip()]
        if not records or records[0].get("record") != "header":
            raise TravelsimError("trace file lacks a header record")
        header = {k: v for k, v in records[0].items() if k != "record"}
        if header.get("schema") != TRACE_SCHEMA:
            raise TravelsimError(f"unsupported trace schema {header.get('schema')!r}")
        trace = cls(header)
        events: dict[int, Event] = {}
        for rec in records[1:]:
            kind = rec.pop("record")
            if kind == "event":
                i = rec.pop("index")
                events[i] = Event.from_dict(rec)
            elif kind == "state":
                i = rec["index"]
                trace.states.append(
                    TravelerState(
                        rec["day"],
                        parse_time(rec["time"]),
                        rec["location"],
                        StaminaValue(rec["stamina"], rec["stamina_cap"]),
                        rec["outlay"],
                        events[i],
                    )
                )
            elif kind == "decision":
                rec.pop("index")
                trace.decisions.append(rec)
            elif kind == "feedback":
                trace.feedback.append(rec)
            elif kind == "footer":
                trace.truncated = rec["truncated"]
                trace.aborted = rec["aborted"]
                trace.flags = list(rec["flags"])
        return trace


# --- decisions -------------------------------------------------------------------------

_JSON_OBJECT_RE = re.compile(r"\{[^{}]*\}", re.DOTALL)


def parse_decision_text(text: str) -> tuple[str, dict]:
    """Split a ReAct-style reply into (thought, decision record).

    The decision is the last JSON object in the text carrying a
    ``"decision"`` key; everything before it is the thought.
    """
    for match in reversed(list(_JSON_OBJECT_RE.finditer(text))):
        try:
            record = json.loads(match.group(0))
        except json.JSONDecodeError:
            continue
        if isinstance(record, dict) and "decision" in record:
            return text[: match.start()].strip(), record
    raise DecisionParseError("no decision object found in policy reply")


def _end_to_duration(record: Mapping, key: str, now: int) -> int | None:
    if record.get(key) in (None, ""):
        return None
    try:
        end = parse_time(record[key])
    except ValueError as exc:
        raise DecisionParseError(f"bad {key!r}: {exc}") from None
    if end < now:
        raise DecisionParseError(f"{key!r} {record[key]} is before the current time {format_time(now)}")
    return end - now


def decision_to_action(record: Mapping, state: TravelerState, providers: Providers | None = None) -> Action | str:
    """Translate a wire decision into an :class:`Action` (or ``DAY_END``)."""
    kind = str(record.get("decision", "")).strip().lower()
    if kind == DAY_END:
        return DAY_END
    if kind not in ACTION_KINDS:
        raise DecisionParseError(f"unknown decision {record.get('decision')!r}")
    if kind == "transit":
        dest = record.get("destination")
        mode = record.get("transport mode")
        if not dest or not mode:
            raise DecisionParseError("transit decision needs 'destination' and 'transport mode'")
        if providers is not None:
            dest = providers.resolve(dest)
        try:
            mode = normalize_mode(mode)
        except ModeError as exc:
            raise DecisionParseError(str(exc)) from None
        return Action("transit", destination=dest, mode=mode)
    duration = _end_to_duration(record, "end time", state.time)
    if kind == "rest" and duration is None:
        raise DecisionParseError("rest decision needs an 'end time'")
    return Action(kind, duration_min=duration, restaurant=record.get("restaurant"))


def make_decision(kind: str, state: TravelerState, **fields) -> dict:
    """Wire record in the traveler output format, with the state's numbers filled in."""
    record = {"decision": kind}
    record.update(fields)
    record.setdefault("remaining stamina", state.stamina.value)
    record.setdefault("total expense", state.outlay)
    return record


# --- transitions ---------------------------------------------------------------------------


def _is_attraction(location: str, providers: Providers | None) -> bool:
    return providers is not None and location in providers.pois and providers.pois[location].category == "attraction"


def transit_destinations(state: TravelerState, plan: Plan, providers: Providers | None = None) -> list[str]:
    """Plan places reachable from the current location, in plan order."""
    candidates = []
    for loc in (plan.origin_terminal, plan.hotel, *(e.location for e in plan.entries)):
        if not same_place(loc, state.location, providers.pois if providers else None) and loc not in candidates:
            candidates.append(loc)
    if providers is None:
        return candidates
    reachable = []
    for loc in candidates:
        try:
            if providers.transit.query(state.location, loc, state.time):
                reachable.append(loc)
        except ProviderError:
            continue
    return reachable


def legal_actions(state: TravelerState, plan: Plan, providers: Providers | None = None) -> frozenset:
    kinds = {"rest", "dine"}
    if _is_attraction(state.location, providers):
        kinds.add("sightsee")
    if transit_destinations(state, plan, providers):
        kinds.add("transit")
    return frozenset(kinds)


def group_transit_cost(option: TransitOption, group_size: int) -> int:
    # taxi fares are per vehicle, everything else per person
    if option.mode == "taxi":
        return option.cost * math.ceil(group_size / TAXI_SEATS)
    return option.cost * group_size


def _call_provider(fn, *args):
    try:
        return fn(*args)
    except ProviderError:
        raise
    except Exception as exc:  # providers are foreign code; surface any failure uniformly
        raise ProviderError(f"provider failed: {exc}") from exc


def _finish(state: TravelerState, kind: str, duration: int, **event_fields):
    end = state.time + duration
    clamped = end > LAST_MINUTE
    if clamped:
        end = LAST_MINUTE
    return Event(kind, state.day, state.time, end, state.location, clamped=clamped, **event_fields)


def step(
    state: TravelerState,
    action: Action,
    providers: Providers,
    rule: StaminaRule,
    profile: TravelerProfile | None = None,
) -> tuple[TravelerState, Event]:
    """Apply one action; returns the successor state and the event it produced."""
    group = profile.group_size if profile is not None else 1
    location = state.location

    if action.kind == "transit":
        if same_place(action.destination, state.location, providers.pois):
            raise ContractError(f"already at {action.destination!r}")
        rule.transit_rate(action.mode)  # forbidden modes fail before any query
        options = _call_provider(providers.transit.query, state.location, action.destination, state.time)
        if not options:
            raise ProviderError(f"no route from {state.location!r} to {action.destination!r}")
        matching = [o for o in options if o.mode == action.mode]
        if not matching:
            raise ContractError(f"mode {action.mode!r} not offered from {state.location!r} to {action.destination!r}")
        opt = matching[0]
        event = _finish(
            state,
            "transit",
            opt.duration_min,
            cost=group_transit_cost(opt, group),
            detail=opt.description,
            destination=action.destination,
            mode=opt.mode,
        )
        delta = activity_delta(rule, "transit", event.end - event.start, opt.mode)
        location = action.destination

    elif action.kind == "rest":
        if action.duration_min is None:
            raise ContractError("rest needs a duration")
        event = _finish(state, "rest", action.duration_min)
        delta = activity_delta(rule, "rest", event.end - event.start)

    elif action.kind == "dine":
        options = _call_provider(providers.dining.nearby, state.location, state.time)
        if not options:
            raise ProviderError(f"no restaurant near {state.location!r}")
        chosen = options[0]
        if action.restaurant:
            wanted = normalize_place(action.restaurant)
            chosen = next((r for r in options if normalize_place(r.name) == wanted), chosen)
        duration = action.duration_min if action.duration_min is not None else chosen.duration_min
        event = _finish(state, "dine", duration, cost=chosen.cost_estimate * group, detail=chosen.name)
        delta = activity_delta(rule, "dine", event.end - event.start)

    else:  # sightsee
        if not _is_attraction(state.location, providers):
            raise ContractError(f"nothing to see at {state.location!r}")
        exp = _call_provider(providers.sightsee.experience, providers.pois[state.location], profile, state)
        duration = action.duration_min if action.duration_min is not None else exp.suggested_duration_min
        event = _finish(state, "sightsee", duration, cost=exp.cost * group, detail=exp.narrative)
        delta = activity_delta(rule, "sightsee", event.end - event.start)

    new_state = TravelerState(
        state.day,
        event.end,
        location,
        state.stamina.shifted(delta),
        state.outlay + event.cost,
        event,
    )
    return new_state, event


# --- simulation driver ------------------------------------------------------------------------


@dataclass(frozen=True)
class SimulationConfig:
    seed: int = 0
    max_steps_per_day: int = 64
    decision_timeout_s: float | None = 120.0
    overnight_rest_hours: float = 8.0
    default_day_start: int = 8 * 60
    arrival_time: int | None = None


class TravelerPolicy(Protocol):
    def decide(self, history: Sequence[TravelerState], plan: Plan, options: Mapping[str, Any]):
        """Return a decision record, or ReAct text ending with one."""


def plan_digest(plan: Plan) -> str:
    return hashlib.sha256(dump_plan(plan).encode("utf-8")).hexdigest()


def _day_start(plan: Plan, day: int, config: SimulationConfig) -> int:
    entries = plan.day_entries(day)
    return entries[0].start_time if entries else config.default_day_start


def build_options(state: TravelerState, plan: Plan, providers: Providers) -> dict:
    """Information handed to the policy before each decision."""
    kinds = legal_actions(state, plan, providers)
    options: dict[str, Any] = {
        "legal_actions": sorted(kinds),
        "stamina_state": stamina_state(state.stamina.value),
        "destinations": transit_destinations(state, plan, providers) if "transit" in kinds else [],
    }
    upcoming = [
        e
        for e in plan.day_entries(state.day)
        if e.start_time >= state.time and not same_place(e.location, state.location, providers.pois)
    ]
    if upcoming and "transit" in kinds:
        nxt = upcoming[0].location
        try:
            routes = providers.transit.query(state.location, nxt, state.time)
        except ProviderError:
            routes = []
        options["next_planned_location"] = nxt
        options["transit_options"] = [asdict(o) for o in routes]
    return options


def _normalize_reply(reply) -> tuple[str | None, dict]:
    if isinstance(reply, str):
        return parse_decision_text(reply)
    if isinstance(reply, tuple) and len(reply) == 2:
        thought, record = reply
        return thought, dict(record)
    if isinstance(reply, Mapping):
        return None, dict(reply)
    raise DecisionParseError(f"policy returned {type(reply).__name__}, expected a decision")


def run_simulation(
    plan: Plan,
    profile: TravelerProfile,
    policy: TravelerPolicy,
    providers: Providers,
    config: SimulationConfig | None = None,
) -> Trace:
    """Let ``policy`` execute ``plan``; raises :class:`SimulationAborted` with the partial trace."""
    config = config or SimulationConfig()
    rule = profile.stamina_rule
    header = {
        "schema": TRACE_SCHEMA,
        "city": plan.city,
        "days": plan.days,
        "plan_sha256": plan_digest(plan),
        "profile": profile.id,
        "seed": config.seed,
        "max_steps_per_day": config.max_steps_per_day,
    }
    trace = Trace(header)

    start = config.arrival_time if config.arrival_time is not None else _day_start(plan, 1, config)
    arrival = Event("arrival", 1, start, start, plan.origin_terminal)
    state = TravelerState(
        1, start, plan.origin_terminal, apply_arrival_penalty(StaminaValue.full(profile.initial_stamina), rule), 0, arrival
    )
    trace.states.append(state)

    executor = concurrent.futures.ThreadPoolExecutor(max_workers=1) if config.decision_timeout_s else None
    seen: set[str] = set()
    try:
        for day in range(1, plan.days + 1):
            steps = 0
            while True:
                if steps >= config.max_steps_per_day:
                    trace.truncated = True
                    trace.flags.append(f"step_cap:day{day}")
                    trace.decisions.append({"source": "engine", "thought": None, "decision": {"decision": DAY_END}})
                    break
                options = build_options(state, plan, providers)
                history = tuple(trace.states)
                try:
                    if executor is None:
                        reply = policy.decide(history, plan, options)
                    else:
                        future = executor.submit(policy.decide, history, plan, options)
                        reply = future.result(timeout=config.decision_timeout_s)
                    thought, record = _normalize_reply(reply)
                    action = decision_to_action(record, state, providers)
                except concurrent.futures.TimeoutError:
                    trace.aborted = f"policy timed out after {config.decision_timeout_s}s"
                    raise SimulationAborted(trace.aborted, trace) from None
                except DecisionParseError as exc:
                    trace.aborted = f"decision parse error: {exc}"
                    raise SimulationAborted(trace.aborted, trace) from exc
                except ProviderError as exc:
                    trace.aborted = f"policy backend error: {exc}"
                    raise SimulationAborted(trace.aborted, trace) from exc
                steps += 1
                if action == DAY_END:
                    trace.decisions.append({"source": "policy", "thought": thought, "decision": record})
                    break
                try:
                    new_state, event = step(state, action, providers, rule, profile)
                except ProviderError as exc:
                    trace.aborted = f"environment error: {exc}"
                    raise SimulationAborted(trace.aborted, trace) from exc
                except (ContractError, ModeError) as exc:
                    trace.aborted = f"illegal action: {exc}"
                    raise SimulationAborted(trace.aborted, trace) from exc
                if event.kind == "sightsee":
                    if state.location in seen:
                        trace.flags.append(f"revisit:{state.location}")
                    seen.add(state.location)
                if event.clamped:
                    trace.flags.append(f"clamped:day{day}:{event.kind}")
                trace.decisions.append({"source": "policy", "thought": thought, "decision": record})
                trace.states.append(new_state)
                state = new_state

            day_end = Event(DAY_END, day, state.time, state.time, state.location)
            if day < plan.days:
                state = TravelerState(
                    day + 1,
                    _day_start(plan, day + 1, config),
                    state.location,
                    overnight_recovery(state.stamina, rule, config.overnight_rest_hours),
                    state.outlay,
                    day_end,
                )
            else:
                state = TravelerState(day, state.time, state.location, state.stamina, state.outlay, day_end)
            trace.states.append(state)
    finally:
        if executor is not None:
            executor.shutdown(wait=False)
    return trace


def extract_simulated_trajectory(trace: Trace, pois: Mapping[str, POI] | None = None) -> list[Trajectory]:
    """Per-day (time, place) trajectories; every event marks where the traveler was when it began."""
    if not trace.states:
        return []
    last_day = max(s.event.day for s in trace.states)
    by_day: dict[int, list[tuple[int, str]]] = {d: [] for d in range(1, last_day + 1)}
    for s in trace.states:
        by_day[s.event.day].append((s.event.start, place_name(s.event.location, pois)))
    return [collapse_visits(day, pairs) for day, pairs in by_day.items()]


def stamina_sequence(trace: Trace) -> list[float]:
    return [s.stamina.value for s in trace.states]
