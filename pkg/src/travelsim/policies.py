"""Traveler policies: plan echo, scripted replay, and model-backed."""
from __future__ import annotations

import json
from typing import Any, Mapping, Sequence

import httpx

from .core import Plan, TravelerProfile, format_time, same_place, serialize_plan
from .errors import ProviderError
from .prompts import load_template
from .sandbox import DAY_END, Providers, TransitOption, TravelerState, make_decision
from .stamina import StaminaRule


class EchoPolicy:
    """Replays the plan as literally as the world allows.

    Departures are timed so the traveler reaches each planned location at its
    planned start time (waiting in place beforehand); activities run until
    their planned end, or until the next entry starts.
    """

    def __init__(self, providers: Providers, rule: StaminaRule):
        self.providers = providers
        self.rule = rule
        self._day = None
        self._idx = 0

    def _best_option(self, options: Sequence[TransitOption]) -> TransitOption | None:
        allowed = [o for o in options if o.mode not in self.rule.forbidden_modes]
        if not allowed:
            return None
        return min(allowed, key=lambda o: (o.duration_min, o.cost, o.mode))

    def decide(self, history: Sequence[TravelerState], plan: Plan, options: Mapping[str, Any]):
        state = history[-1]
        pois = self.providers.pois
        entries = plan.day_entries(state.day)
        if self._day != state.day:
            self._day, self._idx = state.day, 0

        while self._idx < len(entries):
            entry = entries[self._idx]
            here = same_place(entry.location, state.location, pois)
            if entry.activity == "transit" and here:
                # a departure marker; the move itself is driven by the next entry
                self._idx += 1
                continue
            if not here:
                return self._move_towards(state, entry.location, entry.start_time)
            if state.time < entry.start_time:
                return make_decision("rest", state, **{"end time": format_time(entry.start_time)})
            nxt = entries[self._idx + 1].start_time if self._idx + 1 < len(entries) else None
            end = entry.end_time if entry.end_time is not None else nxt
            self._idx += 1
            if end is not None and end <= state.time:
                end = None
            if entry.activity == "rest":
                if end is None:
                    continue
                return make_decision("rest", state, **{"end time": format_time(end)})
            fields = {"end time": format_time(end)} if end is not None else {}
            if entry.activity == "dine" and entry.location in pois:
                fields["restaurant"] = pois[entry.location].name
            return make_decision(entry.activity, state, **fields)
        return make_decision(DAY_END, state)

    def _move_towards(self, state: TravelerState, destination: str, arrive_by: int):
        try:
            routes = self.providers.transit.query(state.location, destination, state.time)
        except ProviderError:
            routes = []
        best = self._best_option(routes)
        if best is None:
            # let the engine report the missing route
            return make_decision("transit", state, destination=destination, departure=state.location, **{"transport mode": "taxi"})
        depart = max(state.time, arrive_by - best.duration_min)
        if depart > state.time:
            return make_decision("rest", state, **{"end time": format_time(depart)})
        return make_decision(
            "transit",
            state,
            departure=state.location,
            destination=destination,
            **{
                "transport mode": best.mode,
                "arrival time": format_time(min(1439, state.time + best.duration_min)),
                "next planned location": destination,
            },
        )


class ScriptedPolicy:
    """Returns pre-recorded decisions in order; ends every remaining day once exhausted."""

    def __init__(self, decisions: Sequence):
        self._decisions = list(decisions)
        self._next = 0

    @classmethod
    def from_file(cls, path) -> "ScriptedPolicy":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(doc["decisions"] if isinstance(doc, Mapping) else doc)

    def decide(self, history, plan, options):
        if self._next >= len(self._decisions):
            return {"decision": DAY_END}
        item = self._decisions[self._next]
        self._next += 1
        if isinstance(item, Mapping) and "reply" in item:
            return item["reply"]
        if isinstance(item, Mapping) and "thought" in item and "decision" in item and isinstance(item["decision"], Mapping):
            return item["thought"], item["decision"]
        return item


def policy_request(history: Sequence[TravelerState], plan: Plan, options: Mapping, profile: TravelerProfile) -> dict:
    """Wire request sent to remote traveler policies."""
    return {
        "history": [dict(s.to_dict(), event=s.event.to_dict()) for s in history],
        "plan": serialize_plan(plan),
        "options": dict(options),
        "profile": profile.to_dict(),
    }


class ChatTravelerPolicy:
    """Traveler backed by a chat model; the user turn carries the wire request as JSON."""

    def __init__(self, client, profile: TravelerProfile, system_prompt: str | None = None, temperature: float = 0.0, seed: int = 0):
        self.client = client
        self.profile = profile
        self.system_prompt = system_prompt or load_template("traveler_system").render(
            profile=json.dumps(profile.to_dict(), ensure_ascii=False, indent=2)
        )
        self.temperature = temperature
        self.seed = seed
        self._turn = 0

    def decide(self, history, plan, options):
        request = policy_request(history, plan, options, self.profile)
        messages = [
            {"role": "system", "content": self.system_prompt},
            {"role": "user", "content": json.dumps(request, ensure_ascii=False, sort_keys=True)},
        ]
        tag = f"traveler:{self._turn}"
        self._turn += 1
        reply = self.client.complete(messages, temperature=self.temperature, seed=self.seed, tag=tag)
        return reply.text


class HttpPolicy:
    """Posts the wire request to an HTTP endpoint that answers with ReAct text."""

    def __init__(self, url: str, profile: TravelerProfile, client=None, timeout: float = 120.0):
        self.url = url
        self.profile = profile
        self.http = client or httpx.Client(timeout=timeout)

    def decide(self, history, plan, options):
        request = policy_request(history, plan, options, self.profile)
        try:
            resp = self.http.post(self.url, json=request)
            resp.raise_for_status()
        except httpx.HTTPError as exc:
            raise ProviderError(f"policy endpoint failed: {exc}") from exc
        return resp.text
