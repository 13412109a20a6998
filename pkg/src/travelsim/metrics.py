"""Plan metrics: comprehensiveness, completeness, feasibility, personalization.

Feasibility is the trajectory similarity score: a dynamic-programming
alignment of planned and simulated (time, place) sequences. Personalization
aggregates traveler feedback over five dimensions at per-POI, per-day and
per-trip granularity.
"""
from __future__ import annotations

import json
import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Callable, Mapping, Protocol, Sequence

from .core import (
    POI,
    CriteriaConfig,
    Plan,
    Trajectory,
    TrajectoryItem,
    TravelerProfile,
    extract_planned_trajectory,
    format_time,
    place_name,
    validate_plan,
)
from .errors import ContractError, ProtocolError, TravelsimError
from .prompts import load_template
from .sandbox import extract_simulated_trajectory

DIMENSIONS = ("ex", "it", "ar", "st", "co")
GRANULARITIES = ("per_poi", "per_day", "per_trip")
LUNCH_WINDOW = (11 * 60, 14 * 60)
DINNER_WINDOW = (17 * 60, 21 * 60)


# --- feasibility (trajectory similarity) -----------------------------------------


def time_diff_score(t1: int, t2: int) -> float:
    """1 for simultaneous events, falling linearly to 0 at a two-hour gap."""
    diff_hours = abs(t2 - t1) / 60.0
    return max(0.0, 1.0 - diff_hours / 2.0)


def match_score(a: TrajectoryItem, b: TrajectoryItem) -> float:
    location_score = 1.0 if a.location == b.location else 0.0
    return (time_diff_score(a.time, b.time) + location_score) / 2.0


def _items(t) -> Sequence[TrajectoryItem]:
    return t.items if isinstance(t, Trajectory) else t


def tpss_day(planned, simulated) -> float:
    """Similarity of two same-day trajectories, in ``[0, 100]``."""
    p, s = _items(planned), _items(simulated)
    m, n = len(p), len(s)
    if m == 0 and n == 0:
        return 100.0
    if m == 0 or n == 0:
        return 0.0
    prev = [0.0] * (n + 1)
    for i in range(1, m + 1):
        row = [0.0] * (n + 1)
        for j in range(1, n + 1):
            row[j] = max(prev[j], row[j - 1], prev[j - 1] + match_score(p[i - 1], s[j - 1]))
        prev = row
    similarity = prev[n] / min(m, n)
    completeness = min(m, n) / max(m, n)
    return similarity * completeness * 100.0


def tpss(planned_days: Sequence[Trajectory], simulated_days: Sequence[Trajectory]) -> float:
    """Mean daily score; a day present on only one side scores 0."""
    planned = {t.day: t for t in planned_days}
    simulated = {t.day: t for t in simulated_days}
    days = sorted(set(planned) | set(simulated))
    if not days:
        raise ContractError("no days to compare")
    scores = [tpss_day(planned[d], simulated[d]) if d in planned and d in simulated else 0.0 for d in days]
    return sum(scores) / len(scores)


# --- personalization ----------------------------------------------------------------


@dataclass(frozen=True)
class DimScores:
    ex: float
    it: float
    ar: float
    st: float
    co: float

    def __post_init__(self):
        for dim in DIMENSIONS:
            v = getattr(self, dim)
            if not (math.isfinite(v) and 0.0 <= v <= 100.0):
                raise ContractError(f"{dim}={v} outside [0, 100]")

    def values(self) -> tuple:
        return tuple(getattr(self, d) for d in DIMENSIONS)

    def to_dict(self) -> dict:
        return {d: getattr(self, d) for d in DIMENSIONS}

    @classmethod
    def uniform(cls, s: float) -> "DimScores":
        return cls(s, s, s, s, s)

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "DimScores":
        return cls(*(float(v) for v in values))

    @classmethod
    def clamped(cls, raw: Mapping[str, float]) -> tuple["DimScores", bool]:
        """Clamp raw evaluator numbers into range; the flag says whether any moved."""
        vals, flagged = [], False
        for dim in DIMENSIONS:
            v = float(raw[dim])
            if not math.isfinite(v):
                v, flagged = 0.0, True
            c = min(100.0, max(0.0, v))
            flagged |= c != v
            vals.append(c)
        return cls(*vals), flagged


def mean_scores(scores: Sequence[DimScores]) -> DimScores:
    if not scores:
        raise ContractError("cannot average an empty list of scores")
    return DimScores.from_values([sum(s.values()[k] for s in scores) / len(scores) for k in range(5)])


@dataclass(frozen=True)
class PerWeights:
    alpha1: float = 0.6
    alpha2: float = 0.4
    beta: float = 0.6
    gamma: float = 0.4

    def __post_init__(self):
        if abs(self.alpha1 + self.alpha2 - 1.0) > 1e-9 or abs(self.beta + self.gamma - 1.0) > 1e-9:
            raise ContractError("alpha1 + alpha2 and beta + gamma must each equal 1")

    @classmethod
    def from_file(cls, path) -> "PerWeights":
        with open(path, encoding="utf-8") as fh:
            return cls(**json.load(fh))

    def to_dict(self) -> dict:
        return {"alpha1": self.alpha1, "alpha2": self.alpha2, "beta": self.beta, "gamma": self.gamma}


def aggregate_per(
    trip: DimScores,
    day_scores: Sequence[DimScores],
    poi_day_scores: Sequence[DimScores],
    w: PerWeights | None = None,
) -> DimScores:
    """Blend trip, day and per-day POI scores, dimension by dimension."""
    w = w or PerWeights()
    if len(day_scores) != len(poi_day_scores) or not day_scores:
        raise ContractError("need one POI score per day and at least one day")
    n = len(day_scores)
    out = []
    for k in range(5):
        daily = sum(w.beta * d.values()[k] + w.gamma * p.values()[k] for d, p in zip(day_scores, poi_day_scores)) / n
        out.append(min(100.0, max(0.0, w.alpha1 * trip.values()[k] + w.alpha2 * daily)))
    return DimScores.from_values(out)


def aggregate_dimensions(d: DimScores) -> float:
    return sum(d.values()) / len(DIMENSIONS)


def reward(per_norm: float, format_ok: bool) -> float:
    if not 0.0 <= per_norm <= 1.0:
        raise ContractError(f"normalized PER {per_norm} outside [0, 1]")
    r = 2.0 * (per_norm - 0.5)
    return r if format_ok else r - 1.0


# --- traveler feedback -----------------------------------------------------------------


@dataclass(frozen=True)
class FeedbackRecord:
    granularity: str
    day: int
    scores: DimScores
    commentary: str = ""
    poi: str | None = None
    flagged: bool = False

    def __post_init__(self):
        if self.granularity not in GRANULARITIES:
            raise ContractError(f"unknown granularity {self.granularity!r}")
        if self.granularity == "per_poi" and not self.poi:
            raise ContractError("per-POI feedback needs a POI id")

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "day": self.day,
            "poi": self.poi,
            "scores": self.scores.to_dict(),
            "commentary": self.commentary,
            "flagged": self.flagged,
        }


class Evaluator(Protocol):
    def evaluate(self, window: Sequence, profile: TravelerProfile | None, granularity: str) -> tuple[Mapping[str, float], str]:
        """Score a slice of the trace; returns raw 0-100 numbers per dimension and commentary."""


class FixtureEvaluator:
    """Returns configured scores: per-POI overrides, then per-granularity, then a default."""

    def __init__(self, default=70.0, by_granularity: Mapping | None = None, by_poi: Mapping | None = None):
        self.default = default
        self.by_granularity = dict(by_granularity or {})
        self.by_poi = dict(by_poi or {})

    @classmethod
    def from_dict(cls, d: Mapping) -> "FixtureEvaluator":
        return cls(d.get("default", 70.0), d.get("by_granularity"), d.get("by_poi"))

    @staticmethod
    def _expand(value) -> dict:
        if isinstance(value, Mapping):
            return {dim: float(value[dim]) for dim in DIMENSIONS}
        return {dim: float(value) for dim in DIMENSIONS}

    def evaluate(self, window, profile, granularity):
        if granularity == "per_poi" and window:
            poi = window[-1].location
            if poi in self.by_poi:
                return self._expand(self.by_poi[poi]), f"fixture score for {poi}"
        value = self.by_granularity.get(granularity, self.default)
        return self._expand(value), f"fixture {granularity} score"


def collect_feedback(trace, evaluator: Evaluator, profile: TravelerProfile | None = None) -> list[FeedbackRecord]:
    """Ask the evaluator for one record per sightseeing visit, per day and for the trip."""
    records = []
    states = trace.states
    days = sorted({s.event.day for s in states})
    for day in days:
        for i, s in enumerate(states):
            if s.event.day == day and s.event.kind == "sightsee":
                raw, note = evaluator.evaluate(states[: i + 1], profile, "per_poi")
                scores, flagged = DimScores.clamped(raw)
                records.append(FeedbackRecord("per_poi", day, scores, note, poi=s.event.location, flagged=flagged))
        window = [s for s in states if s.event.day == day]
        raw, note = evaluator.evaluate(window, profile, "per_day")
        scores, flagged = DimScores.clamped(raw)
        records.append(FeedbackRecord("per_day", day, scores, note, flagged=flagged))
    raw, note = evaluator.evaluate(list(states), profile, "per_trip")
    scores, flagged = DimScores.clamped(raw)
    records.append(FeedbackRecord("per_trip", days[-1] if days else 1, scores, note, flagged=flagged))
    return records


def per_from_feedback(records: Sequence[FeedbackRecord], w: PerWeights | None = None) -> DimScores:
    trips = [r for r in records if r.granularity == "per_trip"]
    if len(trips) != 1:
        raise ContractError(f"expected exactly one per-trip record, got {len(trips)}")
    day_records = {r.day: r.scores for r in records if r.granularity == "per_day"}
    if not day_records:
        raise ContractError("no per-day feedback")
    days = sorted(day_records)
    day_scores, poi_scores = [], []
    for d in days:
        pois = [r.scores for r in records if r.granularity == "per_poi" and r.day == d]
        day_scores.append(day_records[d])
        # a day without visits has no POI score of its own; reuse the day score
        poi_scores.append(mean_scores(pois) if pois else day_records[d])
    return aggregate_per(trips[0].scores, day_scores, poi_scores, w)


# --- completeness ------------------------------------------------------------------------


class MealWindowJudge:
    """Every day needs a dine entry touching lunch hours and one touching dinner hours."""

    def __init__(self, lunch=LUNCH_WINDOW, dinner=DINNER_WINDOW):
        self.lunch = lunch
        self.dinner = dinner

    @staticmethod
    def _overlaps(entry, window) -> bool:
        end = max(entry.end_time if entry.end_time is not None else entry.start_time, entry.start_time + 1)
        return entry.start_time < window[1] and end > window[0]

    def __call__(self, plan: Plan) -> bool:
        for day in range(1, plan.days + 1):
            meals = [e for e in plan.day_entries(day) if e.activity == "dine"]
            if not any(self._overlaps(e, self.lunch) for e in meals):
                return False
            if not any(self._overlaps(e, self.dinner) for e in meals):
                return False
        return True


CPL_CRITERIA = ("terminal_anchoring", "hotel_anchoring", "guidance_format", "meals")


@dataclass(frozen=True)
class CplResult:
    score: float
    breakdown: dict
    indeterminate: bool = False

    def __iter__(self):
        return iter((self.score, self.breakdown))


def cpl(
    plan: Plan,
    judge: Callable[[Plan], bool] | None = None,
    pois: Mapping[str, POI] | None = None,
    config: CriteriaConfig | None = None,
) -> CplResult:
    """25 points per satisfied criterion."""
    report = validate_plan(plan, config, pois)
    breakdown = dict(report.checks)
    judge = judge or MealWindowJudge()
    indeterminate = False
    try:
        breakdown["meals"] = bool(judge(plan))
    except Exception:  # a remote judge may fail in any way; the criterion is then unscored
        breakdown["meals"] = False
        indeterminate = True
    return CplResult(25.0 * sum(breakdown[c] for c in CPL_CRITERIA), breakdown, indeterminate)


# --- comprehensiveness -------------------------------------------------------------------

_CJK = "\u3400-\u4dbf\u4e00-\u9fff\uf900-\ufaff"
_TOKEN_RE = re.compile(f"[{_CJK}]|[^\\W_{_CJK}]+")


def tokenize(text: str) -> list[str]:
    """Case-folded word tokens; each CJK ideograph is its own token."""
    return _TOKEN_RE.findall(text.casefold())


def term_frequency_cosine(a: str, b: str) -> float:
    ta, tb = Counter(tokenize(a)), Counter(tokenize(b))
    if not ta or not tb:
        return 0.0
    dot = sum(c * tb[t] for t, c in ta.items())
    na = math.sqrt(sum(c * c for c in ta.values()))
    nb = math.sqrt(sum(c * c for c in tb.values()))
    return dot / (na * nb)


class EmbeddingSimilarity:
    """Cosine similarity of sentence embeddings.

    ``encoder`` maps a list of strings to vectors; by default a
    sentence-transformers model is loaded on first use.
    """

    def __init__(self, encoder=None, model_name: str = "paraphrase-multilingual-mpnet-base-v2"):
        self._encoder = encoder
        self.model_name = model_name

    def _encode(self, texts):
        if self._encoder is None:
            from sentence_transformers import SentenceTransformer

            self._encoder = SentenceTransformer(self.model_name).encode
        return self._encoder(texts)

    def __call__(self, a: str, b: str) -> float:
        va, vb = self._encode([a, b])
        dot = sum(float(x) * float(y) for x, y in zip(va, vb))
        na = math.sqrt(sum(float(x) ** 2 for x in va))
        nb = math.sqrt(sum(float(y) ** 2 for y in vb))
        if na == 0 or nb == 0:
            return 0.0
        return max(-1.0, min(1.0, dot / (na * nb)))


@dataclass(frozen=True)
class CphResult:
    score: float
    per_poi: dict
    missing_posts: tuple = ()


def plan_pois(plan: Plan) -> dict[str, str]:
    """Sightseeing locations in first-visit order with their joined guidance."""
    guidance: dict[str, list[str]] = {}
    for e in plan.entries:
        if e.activity == "sightsee":
            guidance.setdefault(e.location, [])
            if e.guidance.strip():
                guidance[e.location].append(e.guidance.strip())
    return {poi: "\n".join(parts) for poi, parts in guidance.items()}


def cph(
    plan: Plan,
    posts: Mapping[str, str],
    sim: Callable[[str, str], float] | None = None,
    pois: Mapping[str, POI] | None = None,
) -> CphResult:
    """Mean guidance-to-post similarity over the plan's POIs, scaled to 0-100."""
    sim = sim or term_frequency_cosine
    guidance = plan_pois(plan)
    if not guidance:
        raise ContractError("plan visits no POIs")
    per_poi, missing = {}, []
    for poi, text in guidance.items():
        post = posts.get(poi)
        if post is None and pois and poi in pois:
            post = posts.get(pois[poi].name)
        if post is None:
            missing.append(poi)
            per_poi[poi] = 0.0
            continue
        # negative cosine counts as no overlap
        per_poi[poi] = max(0.0, min(1.0, sim(text, post))) if text else 0.0
    score = 100.0 * sum(per_poi.values()) / len(per_poi)
    return CphResult(score, per_poi, tuple(missing))


# --- score card --------------------------------------------------------------------------


@dataclass
class ScoreCard:
    cph: float
    cpl: float
    fea: float
    per_agg: float
    per_dims: DimScores
    cpl_breakdown: dict
    reward: float
    flags: list = field(default_factory=list)
    daily_fea: list = field(default_factory=list)
    cph_per_poi: dict = field(default_factory=dict)
    feedback: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "cph": self.cph,
            "cpl": self.cpl,
            "fea": self.fea,
            "per_agg": self.per_agg,
            "per_dims": self.per_dims.to_dict(),
            "cpl_breakdown": dict(self.cpl_breakdown),
            "reward": self.reward,
            "flags": list(self.flags),
            "daily_fea": list(self.daily_fea),
            "cph_per_poi": dict(self.cph_per_poi),
            "feedback": [r.to_dict() for r in self.feedback],
        }

    CSV_FIELDS = ("cph", "cpl", "fea", "per_agg", "ex", "it", "ar", "st", "co", "reward")

    def csv_row(self) -> dict:
        row = {"cph": self.cph, "cpl": self.cpl, "fea": self.fea, "per_agg": self.per_agg, "reward": self.reward}
        row.update(self.per_dims.to_dict())
        return {k: f"{row[k]:.4f}" for k in self.CSV_FIELDS}


def score_plan(
    plan: Plan,
    trace,
    posts: Mapping[str, str],
    evaluator: Evaluator,
    profile: TravelerProfile | None = None,
    pois: Mapping[str, POI] | None = None,
    weights: PerWeights | None = None,
    judge: Callable[[Plan], bool] | None = None,
    sim: Callable[[str, str], float] | None = None,
    criteria: CriteriaConfig | None = None,
) -> ScoreCard:
    if trace.header.get("city") != plan.city:
        raise TravelsimError(f"trace city {trace.header.get('city')!r} does not match plan city {plan.city!r}")
    flags = []
    try:
        cph_result = cph(plan, posts, sim, pois)
        cph_score = cph_result.score
        per_poi = {place_name(k, pois): v for k, v in cph_result.per_poi.items()}
        flags += [f"cph_missing_post:{p}" for p in cph_result.missing_posts]
    except ContractError:
        cph_score, per_poi = 0.0, {}
        flags.append("cph_no_pois")
    cpl_result = cpl(plan, judge, pois, criteria)
    if cpl_result.indeterminate:
        flags.append("cpl_meals_indeterminate")

    planned = extract_planned_trajectory(plan, pois)
    simulated = extract_simulated_trajectory(trace, pois)
    fea = tpss(planned, simulated) if (planned or simulated) else 0.0
    sim_by_day = {t.day: t for t in simulated}
    daily = [tpss_day(t, sim_by_day[t.day]) if t.day in sim_by_day else 0.0 for t in planned]

    records = collect_feedback(trace, evaluator, profile)
    flags += [f"feedback_clamped:{r.granularity}:day{r.day}" for r in records if r.flagged]
    per_dims = per_from_feedback(records, weights)
    per_agg = aggregate_dimensions(per_dims)
    format_ok = all(cpl_result.breakdown[c] for c in CPL_CRITERIA[:3])
    if trace.aborted:
        flags.append("trace_aborted")
    if trace.truncated:
        flags.append("trace_truncated")
    return ScoreCard(
        cph=cph_score,
        cpl=cpl_result.score,
        fea=fea,
        per_agg=per_agg,
        per_dims=per_dims,
        cpl_breakdown=cpl_result.breakdown,
        reward=reward(per_agg / 100.0, format_ok),
        flags=flags,
        daily_fea=daily,
        cph_per_poi=per_poi,
        feedback=records,
    )


def describe_window(window: Sequence, pois: Mapping[str, POI] | None = None) -> str:
    """Plain-text rendering of trace states for evaluator prompts."""
    lines = []
    for s in window:
        ev = s.event
        where = place_name(ev.location, pois)
        line = f"day {ev.day} {format_time(ev.start)}-{format_time(ev.end)} {ev.kind} at {where}"
        if ev.destination:
            line += f" -> {place_name(ev.destination, pois)} by {ev.mode}"
        line += f" | stamina {s.stamina.value:.2f}, spent {s.outlay}"
        if ev.detail:
            line += f" | {ev.detail}"
        lines.append(line)
    return "\n".join(lines)


_SCOPES = {
    "per_poi": "the sightseeing visit that just ended",
    "per_day": "this whole day",
    "per_trip": "the entire trip",
}


class ChatEvaluator:
    """Traveler feedback from a chat model playing the traveler."""

    def __init__(self, client, pois: Mapping[str, POI] | None = None, temperature: float = 0.0, seed: int = 0):
        self.client = client
        self.pois = pois
        self.temperature = temperature
        self.seed = seed
        self._n = 0

    def evaluate(self, window, profile, granularity):
        prompt = load_template("evaluator").render(
            profile=json.dumps(profile.to_dict(), ensure_ascii=False, indent=2) if profile else "(not given)",
            scope=_SCOPES[granularity],
            window=describe_window(window, self.pois),
        )
        tag = f"evaluate:{granularity}:{self._n}"
        self._n += 1
        text = self.client.complete([{"role": "user", "content": prompt}], temperature=self.temperature, seed=self.seed, tag=tag).text
        return parse_feedback(text)


def parse_feedback(text: str) -> tuple[dict, str]:
    """Split an evaluator reply into its trailing score object and the commentary before it."""
    for m in reversed(list(re.finditer(r"\{[^{}]*\}", text))):
        try:
            obj = json.loads(m.group(0))
        except json.JSONDecodeError:
            continue
        if isinstance(obj, dict) and all(d in obj for d in DIMENSIONS):
            try:
                return {d: float(obj[d]) for d in DIMENSIONS}, text[: m.start()].strip()
            except (TypeError, ValueError):
                break
    raise ProtocolError("evaluator reply has no score object with all five dimensions")
