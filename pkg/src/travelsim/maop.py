"""Strategist/planner pipeline and the two single-model baselines.

Every model call goes through a chat client (see ``adapters.ChatClient``) and
carries a stable request tag, so fixture clients can replay canned answers
regardless of scheduling.
"""
from __future__ import annotations

import json
import logging
import re
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import POI, Plan, TravelerProfile, normalize_place, parse_plan
from .errors import ContractError, PipelineError, PlanParseError, PlanReferenceError
from .prompts import load_template
from .spatial import BearingResult, RouteResult

log = logging.getLogger(__name__)

MAX_ASPECTS = 8
EMPTY_MARKER = "(none)"
SECTION_TITLES = (
    "User Profile & Preferences",
    "Hotel Information",
    "POI Blog Posts",
    "Intra-Cluster Information",
    "Inter-Cluster Information",
)


@dataclass(frozen=True)
class AspectGuidance:
    aspect: str
    guidance: str
    sample_id: int = 0

    def __post_init__(self):
        if not self.aspect.strip() or not self.guidance.strip():
            raise ValueError("aspect title and guidance must be non-empty")

    @property
    def key(self) -> str:
        return normalize_place(self.aspect)

    def to_dict(self) -> dict:
        return {"aspect": self.aspect, "guidance": self.guidance, "sample_id": self.sample_id}

    @classmethod
    def from_dict(cls, d: Mapping) -> "AspectGuidance":
        return cls(d["aspect"], d["guidance"], int(d.get("sample_id", 0)))


@dataclass(frozen=True)
class Blueprint:
    aspects: tuple
    # provenance[i] holds indices into the routed input list
    provenance: tuple
    sources: tuple = ()
    warnings: tuple = ()

    def __len__(self) -> int:
        return len(self.aspects)

    def to_dict(self) -> dict:
        return {
            "aspects": [
                dict(a.to_dict(), provenance=[self.sources[j].aspect for j in prov] if self.sources else list(prov))
                for a, prov in zip(self.aspects, self.provenance)
            ],
            "candidates": [s.to_dict() for s in self.sources],
            "warnings": list(self.warnings),
        }


@dataclass(frozen=True)
class ContextDocument:
    profile_text: str
    hotel_info: str
    poi_posts: str
    intra_cluster_info: str
    inter_cluster_info: str

    def sections(self) -> list[tuple[str, str]]:
        bodies = (self.profile_text, self.hotel_info, self.poi_posts, self.intra_cluster_info, self.inter_cluster_info)
        return [(t, b if b.strip() else EMPTY_MARKER) for t, b in zip(SECTION_TITLES, bodies)]

    def render(self) -> str:
        return "\n\n".join(f"## {title}\n{body.rstrip()}" for title, body in self.sections()) + "\n"


@dataclass
class ChatTranscript:
    messages: list = field(default_factory=list)

    def add(self, role: str, content: str, **meta) -> None:
        if self.messages and role != "system":
            prev = self.messages[-1]["role"]
            if prev == role or (prev == "system" and role != "user"):
                raise ContractError(f"transcript roles must alternate; got {role} after {prev}")
        self.messages.append({"role": role, "content": content, "meta": dict(meta, approx_tokens=len(content.split()))})

    def chat_messages(self) -> list[dict]:
        return [{"role": m["role"], "content": m["content"]} for m in self.messages]

    @property
    def planner_turns(self) -> int:
        # reformat retries are repairs, not planning turns
        return sum(1 for m in self.messages if m["role"] == "assistant" and m["meta"].get("stage") != "reformat")

    def to_dict(self) -> dict:
        return {"messages": [dict(m) for m in self.messages]}

    @classmethod
    def from_dict(cls, d: Mapping) -> "ChatTranscript":
        return cls([dict(m) for m in d["messages"]])


class CallLog(list):
    """Flat audit record of every model call made by a pipeline run."""

    def record(self, tag: str, messages, text: str, reasoning: str | None = None) -> None:
        self.append({"tag": tag, "messages": [dict(m) for m in messages], "response": text, "reasoning": reasoning})


def _call(client, messages, tag, audit: CallLog | None, temperature=0.0, seed=None) -> str:
    reply = client.complete(messages, temperature=temperature, seed=seed, tag=tag)
    if audit is not None:
        audit.record(tag, messages, reply.text, reply.reasoning)
    return reply.text


# --- context -------------------------------------------------------------------------


def _profile_text(profile: TravelerProfile) -> str:
    members = ", ".join(f"{m['gender']} aged {m['age']}" for m in profile.group)
    rule = profile.stamina_rule
    lines = [
        f"Traveler type: {profile.type_label} ({members})",
        f"Preferences: {profile.preferences or 'not stated'}",
        f"Budget: {profile.budget}",
        f"Initial stamina: {profile.initial_stamina:g} of 10",
        (
            f"Stamina per hour: sightseeing {rule.sightseeing_per_hr:+g}, resting {rule.resting_per_hr:+g}; "
            f"per meal {rule.dining_per_event:+g}; "
            + ", ".join(f"{m} {r:+g}/h" for m, r in sorted(rule.transit_per_hr.items()))
        ),
    ]
    if rule.forbidden_modes:
        lines.append("Cannot use: " + ", ".join(sorted(rule.forbidden_modes)))
    if profile.description:
        lines.append(profile.description)
    return "\n".join(lines)


def assemble_context(
    profile: TravelerProfile,
    hotel: POI,
    posts: Mapping[str, str],
    routes: Sequence[RouteResult],
    bearings: Sequence[BearingResult],
    pois: Mapping[str, POI] | None = None,
) -> ContextDocument:
    """Render the planning context in a fixed section order; ``posts`` maps POI id to post text."""
    pois = pois or {}

    def name(pid: str) -> str:
        return pois[pid].name if pid in pois else pid

    hotel_info = f"{hotel.name} ({hotel.id}), at {hotel.location.lat:.4f}, {hotel.location.lon:.4f}"
    post_text = "\n\n".join(f"### {name(pid)} ({pid})\n{text.strip()}" for pid, text in posts.items())
    intra = []
    for i, route in enumerate(routes, 1):
        legs = ", ".join(f"{d:.2f} km" for d in route.step_distances)
        intra.append(
            f"Cluster {i}: " + " -> ".join(name(p) for p in route.path)
            + f" (total {route.total_distance:.2f} km; legs {legs or '-'})"
        )
    inter = [
        f"Cluster {b.target}: {b.direction} of the hotel, {b.distance_km:.2f} km (bearing {b.bearing_deg:.0f} deg)"
        for b in bearings
    ]
    return ContextDocument(_profile_text(profile), hotel_info, post_text, "\n".join(intra), "\n".join(inter))


# --- response parsing ---------------------------------------------------------------------

_FENCE_RE = re.compile(r"```[ \t]*(\w+)[ \t]*\n(.*?)```", re.S)
_ITEM_RE = re.compile(r"^\s*(\d+)[.)]\s*(.+?)\s*::\s*(.+?)\s*$")
_PROV_RE = re.compile(r"^(.*?)\s*<-\s*\[([^\]]*)\]\s*$")


def _fenced(text: str, label: str) -> str | None:
    for tag, body in _FENCE_RE.findall(text):
        if tag.lower() == label:
            return body
    return None


def parse_aspects(text: str, sample_id: int = 0) -> list[AspectGuidance]:
    body = _fenced(text, "aspects")
    if body is None:
        return []
    out = []
    for line in body.splitlines():
        m = _ITEM_RE.match(line)
        if m:
            out.append(AspectGuidance(m.group(2), m.group(3), sample_id))
    return out


def extract_plan_json(text: str):
    body = _fenced(text, "json")
    if body is None:
        lo, hi = text.find("{"), text.rfind("}")
        if lo < 0 or hi <= lo:
            raise PlanParseError("document", "no JSON object in response")
        body = text[lo : hi + 1]
    try:
        return json.loads(body)
    except json.JSONDecodeError as exc:
        raise PlanParseError("document", f"invalid JSON: {exc.msg}") from None


# --- strategist -----------------------------------------------------------------------------


def _context_text(context) -> str:
    return context.render() if isinstance(context, ContextDocument) else str(context)


def decompose(
    context: ContextDocument,
    request: str,
    n_samples: int,
    client,
    *,
    temperature: float = 0.7,
    seed: int = 0,
    max_in_flight: int = 4,
    audit: CallLog | None = None,
) -> list[AspectGuidance]:
    """Sample the strategist ``n_samples`` times and union the parsed aspects."""
    if n_samples < 1:
        raise ContractError("n_samples must be at least 1")
    system = load_template("strategist_system").render()
    user = load_template("decompose").render(context=_context_text(context), request=request)
    messages = [{"role": "system", "content": system}, {"role": "user", "content": user}]

    def sample(i: int) -> str:
        reply = client.complete(messages, temperature=temperature, seed=seed + i, tag=f"decompose:{i}")
        return reply

    with ThreadPoolExecutor(max_workers=max(1, min(max_in_flight, n_samples))) as pool:
        replies = list(pool.map(sample, range(n_samples)))

    aspects: list[AspectGuidance] = []
    seen: set[str] = set()
    parsed_any = False
    for i, reply in enumerate(replies):
        if audit is not None:
            audit.record(f"decompose:{i}", messages, reply.text, reply.reasoning)
        found = parse_aspects(reply.text, i)
        if not found:
            log.warning("strategist sample %d had no parseable aspects; skipped", i)
            continue
        parsed_any = True
        for a in found:
            if a.key not in seen:
                seen.add(a.key)
                aspects.append(a)
    if not parsed_any:
        raise PipelineError("no strategist sample produced parseable aspects", audit)
    return aspects


def route(
    aspects: Sequence[AspectGuidance],
    max_aspects: int,
    client,
    *,
    request: str = "",
    audit: CallLog | None = None,
) -> Blueprint:
    """Ask the strategist to select, merge and order aspects into a blueprint."""
    if not aspects:
        raise ContractError("route needs at least one aspect")
    if max_aspects < 1:
        raise ContractError("max_aspects must be at least 1")
    listing = "\n".join(f"{i}. {a.aspect} :: {a.guidance}" for i, a in enumerate(aspects, 1))
    messages = [
        {"role": "system", "content": load_template("strategist_system").render()},
        {"role": "user", "content": load_template("route").render(request=request, aspects=listing, max_aspects=max_aspects)},
    ]
    text = _call(client, messages, "route", audit)
    body = _fenced(text, "blueprint")
    if body is None:
        raise PipelineError("routing response has no blueprint block", audit)

    by_title = {a.key: i for i, a in enumerate(aspects)}
    warnings: list[str] = []
    chosen: list[AspectGuidance] = []
    provenance: list[tuple] = []
    for line in body.splitlines():
        m = _ITEM_RE.match(line)
        if not m:
            continue
        title, guidance = m.group(2), m.group(3)
        prov: list[int] = []
        pm = _PROV_RE.match(guidance)
        if pm:
            guidance = pm.group(1)
            for tok in pm.group(2).split(","):
                tok = tok.strip()
                if tok.isdigit() and 1 <= int(tok) <= len(aspects) and int(tok) - 1 not in prov:
                    prov.append(int(tok) - 1)
        if not prov and normalize_place(title) in by_title:
            prov.append(by_title[normalize_place(title)])
        if not prov or not guidance.strip():
            warnings.append(f"blueprint aspect {title!r} has no traceable source; dropped")
            continue
        chosen.append(AspectGuidance(title, guidance.strip()))
        provenance.append(tuple(sorted(prov)))
    if not chosen:
        raise PipelineError("routing produced an empty blueprint", audit)
    if len(chosen) > max_aspects:
        warnings.append(f"blueprint had {len(chosen)} aspects; truncated to {max_aspects}")
        chosen, provenance = chosen[:max_aspects], provenance[:max_aspects]
    for w in warnings:
        log.warning(w)
    return Blueprint(tuple(chosen), tuple(provenance), tuple(aspects), tuple(warnings))


# --- planners ---------------------------------------------------------------------------------


def _finish(
    client,
    transcript: ChatTranscript,
    prompt: str,
    tag: str,
    pois: Mapping[str, POI] | None,
    audit: CallLog | None,
    **meta,
) -> Plan:
    """Final formatting turn with one reformat retry."""
    transcript.add("user", prompt, **meta)
    for attempt in range(2):
        call_tag = tag if attempt == 0 else f"{tag}:retry"
        text = _call(client, transcript.chat_messages(), call_tag, audit)
        transcript.add("assistant", text, **(meta if attempt == 0 else {"stage": "reformat"}))
        try:
            return parse_plan(extract_plan_json(text), pois)
        except (PlanParseError, PlanReferenceError) as exc:
            error = str(exc)
        if attempt == 0:
            log.warning("final plan unreadable (%s); asking once for a reformat", error)
            transcript.add("user", load_template("reformat").render(error=error), stage="reformat")
    raise PipelineError(f"final plan unreadable after retry: {error}", transcript)


def plan_maop(
    blueprint: Blueprint,
    context: ContextDocument,
    client,
    *,
    request: str = "",
    pois: Mapping[str, POI] | None = None,
    audit: CallLog | None = None,
) -> tuple[Plan, ChatTranscript]:
    """Planner dialogue: one turn per blueprint aspect, then the plan."""
    if not len(blueprint):
        raise ContractError("plan_maop needs a non-empty blueprint")
    transcript = ChatTranscript()
    transcript.add("system", load_template("planner_system").render(context=_context_text(context)))
    total = len(blueprint)
    for i, aspect in enumerate(blueprint.aspects, 1):
        prompt = load_template("planner_aspect").render(index=i, total=total, aspect=aspect.aspect, guidance=aspect.guidance)
        transcript.add("user", prompt, stage="aspect", aspect_id=i)
        text = _call(client, transcript.chat_messages(), f"maop:aspect:{i}", audit)
        transcript.add("assistant", text, stage="aspect", aspect_id=i)
    plan = _finish(client, transcript, load_template("plan_format").render(request=request), "maop:final", pois, audit, stage="final")
    return plan, transcript


def plan_naive_wide(
    context: ContextDocument,
    aspects: Sequence[AspectGuidance],
    client,
    *,
    request: str = "",
    pois: Mapping[str, POI] | None = None,
    max_in_flight: int = 4,
    audit: CallLog | None = None,
    transcript: ChatTranscript | None = None,
) -> Plan:
    """Analyze each aspect in an independent call, then synthesize one plan."""
    if not aspects:
        raise ContractError("plan_naive_wide needs at least one aspect")
    ctx = _context_text(context)

    def analyze(item):
        k, a = item
        messages = [{"role": "user", "content": load_template("naive_aspect").render(context=ctx, request=request, aspect=a.aspect, guidance=a.guidance)}]
        return messages, client.complete(messages, temperature=0.0, tag=f"naive:aspect:{k}")

    with ThreadPoolExecutor(max_workers=max(1, min(max_in_flight, len(aspects)))) as pool:
        results = list(pool.map(analyze, enumerate(aspects, 1)))
    analyses = []
    for k, (a, (messages, reply)) in enumerate(zip(aspects, results), 1):
        if audit is not None:
            audit.record(f"naive:aspect:{k}", messages, reply.text, reply.reasoning)
        analyses.append(f"### {k}. {a.aspect}\n{reply.text.strip()}")

    transcript = transcript if transcript is not None else ChatTranscript()
    prompt = (
        load_template("naive_synthesis").render(context=ctx, analyses="\n\n".join(analyses))
        + "\n"
        + load_template("plan_format").render(request=request)
    )
    return _finish(client, transcript, prompt, "naive:synthesis", pois, audit, stage="final")


def plan_long_horizon(
    context: ContextDocument,
    guidance: str,
    client,
    *,
    request: str = "",
    pois: Mapping[str, POI] | None = None,
    audit: CallLog | None = None,
    transcript: ChatTranscript | None = None,
) -> Plan:
    """Single-call baseline: context plus the guidance text, then the plan."""
    prompt = (
        load_template("long_horizon").render(context=_context_text(context), guidance=guidance.strip() or EMPTY_MARKER)
        + "\n"
        + load_template("plan_format").render(request=request)
    )
    transcript = transcript if transcript is not None else ChatTranscript()
    return _finish(client, transcript, prompt, "long:plan", pois, audit, stage="final")
