"""Rule-based stamina engine.

Each traveler type carries a :class:`StaminaRule` with hourly exertion and
recovery rates. Values are clamped to ``[0, cap]`` where the cap is the
traveler's initial stamina.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field, replace
from importlib import resources
from typing import Mapping

from .errors import ContractError, ModeError

TRANSIT_MODES = ("bus_metro", "taxi", "walking", "cycling")
ACTIVITIES = ("transit", "rest", "dine", "sightsee")

_MODE_ALIASES = {
    "bus_metro": "bus_metro",
    "bus/metro": "bus_metro",
    "bus": "bus_metro",
    "metro": "bus_metro",
    "subway": "bus_metro",
    "public transportation": "bus_metro",
    "public transport": "bus_metro",
    "taxi": "taxi",
    "car": "taxi",
    "walking": "walking",
    "walk": "walking",
    "cycling": "cycling",
    "bike": "cycling",
    "bicycle": "cycling",
}

# ordered from most to least rested
STATE_LABELS = ("Energetic", "Good", "Slightly Tired", "Very Tired")


def normalize_mode(mode: str) -> str:
    key = " ".join(str(mode).strip().lower().replace("-", " ").split())
    try:
        return _MODE_ALIASES[key]
    except KeyError:
        raise ModeError(f"unknown transport mode {mode!r}") from None


@dataclass(frozen=True)
class StaminaRule:
    sightseeing_per_hr: float
    dining_per_event: float
    resting_per_hr: float
    transit_per_hr: Mapping[str, float] = field(default_factory=dict)
    forbidden_modes: frozenset = frozenset()
    arrival_penalty: float = 2.0

    def __post_init__(self):
        rates = {normalize_mode(m): float(r) for m, r in dict(self.transit_per_hr).items()}
        forbidden = frozenset(normalize_mode(m) for m in self.forbidden_modes)
        # a mode without a published rate cannot be costed, so it is off limits
        forbidden |= frozenset(m for m in TRANSIT_MODES if m not in rates)
        object.__setattr__(self, "transit_per_hr", rates)
        object.__setattr__(self, "forbidden_modes", forbidden)

    def allowed_modes(self) -> list[str]:
        return [m for m in TRANSIT_MODES if m not in self.forbidden_modes]

    def transit_rate(self, mode: str) -> float:
        mode = normalize_mode(mode)
        if mode in self.forbidden_modes:
            raise ModeError(f"transport mode {mode!r} is not allowed for this traveler")
        return self.transit_per_hr[mode]

    def to_dict(self) -> dict:
        return {
            "sightseeing_per_hr": self.sightseeing_per_hr,
            "dining_per_event": self.dining_per_event,
            "resting_per_hr": self.resting_per_hr,
            "transit_per_hr": {m: self.transit_per_hr[m] for m in TRANSIT_MODES if m in self.transit_per_hr},
            "forbidden_modes": sorted(self.forbidden_modes),
            "arrival_penalty": self.arrival_penalty,
        }

    @classmethod
    def from_dict(cls, d: Mapping) -> "StaminaRule":
        return cls(
            sightseeing_per_hr=float(d["sightseeing_per_hr"]),
            dining_per_event=float(d["dining_per_event"]),
            resting_per_hr=float(d["resting_per_hr"]),
            transit_per_hr=dict(d.get("transit_per_hr", {})),
            forbidden_modes=frozenset(d.get("forbidden_modes", ())),
            arrival_penalty=float(d.get("arrival_penalty", 2.0)),
        )


@dataclass(frozen=True)
class StaminaValue:
    value: float
    cap: float

    def __post_init__(self):
        if not self.cap > 0:
            raise ContractError(f"stamina cap must be positive, got {self.cap}")
        if not 0.0 <= self.value <= self.cap:
            raise ContractError(f"stamina {self.value} outside [0, {self.cap}]")

    @classmethod
    def full(cls, cap: float) -> "StaminaValue":
        return cls(cap, cap)

    def shifted(self, delta: float) -> "StaminaValue":
        return replace(self, value=min(self.cap, max(0.0, self.value + delta)))


def activity_delta(rule: StaminaRule, activity: str, duration_min: int, mode: str | None = None) -> float:
    """Unclamped stamina change for one activity."""
    if duration_min < 0:
        raise ContractError(f"negative duration {duration_min}")
    hours = duration_min / 60.0
    if activity == "transit":
        if mode is None:
            raise ContractError("transit requires a transport mode")
        return rule.transit_rate(mode) * hours
    if mode is not None:
        raise ContractError(f"mode given for non-transit activity {activity!r}")
    if activity == "sightsee":
        return rule.sightseeing_per_hr * hours
    if activity == "rest":
        return rule.resting_per_hr * hours
    if activity == "dine":
        return rule.dining_per_event
    raise ContractError(f"unknown activity {activity!r}")


def apply_activity(
    s: StaminaValue, rule: StaminaRule, activity: str, duration_min: int, mode: str | None = None
) -> StaminaValue:
    return s.shifted(activity_delta(rule, activity, duration_min, mode))


def apply_arrival_penalty(s: StaminaValue, rule: StaminaRule) -> StaminaValue:
    return s.shifted(-rule.arrival_penalty)


def overnight_recovery(s: StaminaValue, rule: StaminaRule, hours: float = 8.0) -> StaminaValue:
    return s.shifted(rule.resting_per_hr * hours)


def stamina_state(value: float) -> str:
    if value < 0:
        raise ContractError(f"negative stamina {value}")
    if value > 6.0:
        return "Energetic"
    if value >= 4.0:
        return "Good"
    if value >= 2.0:
        return "Slightly Tired"
    return "Very Tired"


def load_rule_examples(path=None) -> dict[str, dict]:
    """Raw rule entries keyed by traveler type, with composition and initial stamina.

    Defaults to the examples shipped with the package.
    """
    if path is None:
        text = resources.files("travelsim").joinpath("data/stamina_rules.json").read_text(encoding="utf-8")
    else:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    return json.loads(text)["rules"]


def load_rules(path=None) -> dict[str, StaminaRule]:
    return {key: StaminaRule.from_dict(entry["rule"]) for key, entry in load_rule_examples(path).items()}
