"""Provider and chat-client implementations.

Fixture-backed providers read a bundle directory and are the default; remote
adapters talk HTTP through a record/replay cache so any live run can be
replayed offline byte for byte.

Cache layout (``travelsim.cache/1``)::

    <cache_dir>/<namespace>/<sha256 of the canonical request>.json

Each file holds ``{"schema", "request", "response"}``.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import tempfile
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import httpx

from .core import POI, TravelerProfile, format_time, load_pois
from .errors import BundleError, ProtocolError, ProviderError, ReplayMiss, TravelsimError
from .sandbox import Experience, Providers, Restaurant, TransitOption

log = logging.getLogger(__name__)

CACHE_SCHEMA = "travelsim.cache/1"
BUNDLE_SCHEMA = "travelsim.bundle/1"
CACHE_MODES = ("replay", "record", "cached")


# --- chat contract --------------------------------------------------------------------


@dataclass(frozen=True)
class ChatResponse:
    text: str
    reasoning: str | None = None
    usage: Mapping[str, int] | None = None


class ChatClient(Protocol):
    def complete(
        self,
        messages: Sequence[Mapping[str, str]],
        *,
        temperature: float = 0.0,
        seed: int | None = None,
        max_tokens: int | None = None,
        tag: str | None = None,
    ) -> ChatResponse: ...


class FixtureChatClient:
    """Replays canned responses looked up by request tag.

    Tags look like ``"maop:aspect:3"``. Lookup tries the exact tag, then
    ``"maop:aspect:*"``, ``"maop:*"`` and finally ``"*"``. A list value
    is consumed one element per call (the last element repeats).
    """

    def __init__(self, responses: Mapping[str, Any]):
        self.responses = dict(responses)
        self.calls: list[dict] = []
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    @classmethod
    def from_file(cls, path) -> "FixtureChatClient":
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
        return cls(doc.get("responses", doc))

    def _lookup(self, tag: str):
        # exact tag, then each wildcard prefix from the most specific, then "*"
        parts = tag.split(":")
        candidates = [tag] + [":".join(parts[:i]) + ":*" for i in range(len(parts) - 1, 0, -1)] + ["*"]
        for key in candidates:
            if key in self.responses:
                return key, self.responses[key]
        raise ReplayMiss(f"no canned chat response for tag {tag!r}")

    def complete(self, messages, *, temperature=0.0, seed=None, max_tokens=None, tag=None) -> ChatResponse:
        tag = tag or ""
        with self._lock:
            key, value = self._lookup(tag)
            if isinstance(value, list):
                i = self._counters.get(key, 0)
                self._counters[key] = i + 1
                value = value[min(i, len(value) - 1)]
            self.calls.append({"tag": tag, "messages": [dict(m) for m in messages], "temperature": temperature, "seed": seed})
        if isinstance(value, Mapping):
            return ChatResponse(value["text"], value.get("reasoning"))
        return ChatResponse(str(value))


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, ensure_ascii=False, separators=(",", ":"))


class ReplayCache:
    """On-disk request/response store; one writer at a time, any number of readers."""

    def __init__(self, root, namespace: str):
        self.dir = Path(root) / namespace
        self._lock = threading.Lock()

    @staticmethod
    def key(request) -> str:
        return hashlib.sha256(canonical_json(request).encode("utf-8")).hexdigest()

    def get(self, request):
        path = self.dir / f"{self.key(request)}.json"
        if not path.exists():
            return None
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)["response"]

    def put(self, request, response) -> None:
        record = {"schema": CACHE_SCHEMA, "request": request, "response": response}
        with self._lock:
            self.dir.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=self.dir, suffix=".tmp")
            with os.fdopen(fd, "w", encoding="utf-8") as fh:
                json.dump(record, fh, sort_keys=True, ensure_ascii=False, indent=1)
            os.replace(tmp, self.dir / f"{self.key(request)}.json")


def _cached_call(cache: ReplayCache | None, mode: str, request, live):
    if mode not in CACHE_MODES:
        raise TravelsimError(f"unknown cache mode {mode!r}")
    if cache is not None and mode in ("replay", "cached"):
        hit = cache.get(request)
        if hit is not None:
            return hit
    if mode == "replay":
        raise ReplayMiss("request not in the replay cache and replay mode forbids network access")
    response = live()
    if cache is not None:
        cache.put(request, response)
    return response


class HttpChatClient:
    """OpenAI-style ``/chat/completions`` client with record/replay caching."""

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key: str | None = None,
        *,
        cache: ReplayCache | None = None,
        mode: str = "cached",
        timeout: float = 120.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.model = model
        self.cache = cache
        self.mode = mode
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.http = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport)
        self.log: list[dict] = []
        self._log_lock = threading.Lock()

    def _live(self, payload):
        try:
            resp = self.http.post("/chat/completions", json=payload)
            resp.raise_for_status()
            body = resp.json()
        except httpx.HTTPError as exc:
            raise ProviderError(f"chat endpoint failed: {exc}") from exc
        except ValueError as exc:
            raise ProtocolError(f"chat endpoint returned non-JSON: {exc}") from exc
        try:
            message = body["choices"][0]["message"]
            out = {"text": message["content"], "reasoning": message.get("reasoning_content")}
        except (KeyError, IndexError, TypeError) as exc:
            raise ProtocolError(f"unexpected chat payload: {exc!r}") from exc
        if not isinstance(out["text"], str):
            raise ProtocolError("chat payload content is not text")
        if isinstance(body.get("usage"), Mapping):
            out["usage"] = dict(body["usage"])
        return out

    def complete(self, messages, *, temperature=0.0, seed=None, max_tokens=None, tag=None) -> ChatResponse:
        payload = {"model": self.model, "messages": [dict(m) for m in messages], "temperature": temperature}
        if seed is not None:
            payload["seed"] = seed
        if max_tokens is not None:
            payload["max_tokens"] = max_tokens
        out = _cached_call(self.cache, self.mode, payload, lambda: self._live(payload))
        with self._log_lock:
            self.log.append({"tag": tag, "request": payload, "response": out})
        log.debug("chat %s -> %d chars", tag, len(out["text"]))
        return ChatResponse(out["text"], out.get("reasoning"), out.get("usage"))


def remote_chat_adapter(config: Mapping[str, Any], transport: httpx.BaseTransport | None = None):
    """Build a chat client from config; ``mode: fixture`` gives a replay client."""
    if config.get("mode") == "fixture":
        source = config["responses"]
        if isinstance(source, Mapping):
            return FixtureChatClient(source)
        return FixtureChatClient.from_file(source)
    if not config.get("base_url") or not config.get("model"):
        raise TravelsimError("live chat needs base_url and model")
    cache = ReplayCache(config["cache_dir"], "chat") if config.get("cache_dir") else None
    return HttpChatClient(
        config["base_url"],
        config["model"],
        config.get("api_key"),
        cache=cache,
        mode=config.get("mode", "cached"),
        timeout=float(config.get("timeout", 120.0)),
        transport=transport,
    )


# --- fixture providers ------------------------------------------------------------------


class FixtureTransit:
    def __init__(self, matrix: Mapping[tuple[str, str], Sequence[TransitOption]]):
        self.matrix = {k: list(v) for k, v in matrix.items()}

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FixtureTransit":
        matrix = {}
        for edge in doc["edges"]:
            matrix[(edge["from"], edge["to"])] = [TransitOption.from_dict(o) for o in edge["options"]]
        return cls(matrix)

    def query(self, origin, destination, depart_time):
        try:
            return list(self.matrix[(origin, destination)])
        except KeyError:
            raise ProviderError(f"no transit data from {origin!r} to {destination!r}") from None


class FixtureDining:
    def __init__(self, near: Mapping[str, Sequence[Restaurant]], default: Sequence[Restaurant] = ()):
        self.near = {k: list(v) for k, v in near.items()}
        self.default = list(default)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FixtureDining":
        near = {k: [Restaurant.from_dict(r) for r in v] for k, v in doc.get("near", {}).items()}
        return cls(near, [Restaurant.from_dict(r) for r in doc.get("default", [])])

    def nearby(self, location, time):
        return list(self.near.get(location, self.default))


class FixtureSightsee:
    def __init__(self, narratives: Mapping[str, Experience]):
        self.narratives = dict(narratives)

    @classmethod
    def from_dict(cls, doc: Mapping) -> "FixtureSightsee":
        return cls({k: Experience.from_dict(v) for k, v in doc.items()})

    def experience(self, poi, profile, state):
        try:
            return self.narratives[poi.id]
        except KeyError:
            raise ProviderError(f"no sightseeing narrative for {poi.id!r}") from None


# --- remote map adapter ------------------------------------------------------------------


class RemoteTransit:
    """Route options from an HTTP map service, cached by (origin, destination, hour).

    The service receives ``POST <base_url>/routes`` with origin/destination
    ids and coordinates and the departure time, and answers
    ``{"options": [{mode, duration_min, cost, description}]}``.
    """

    def __init__(
        self,
        base_url: str,
        pois: Mapping[str, POI],
        api_key: str | None = None,
        *,
        cache: ReplayCache | None = None,
        mode: str = "cached",
        timeout: float = 30.0,
        transport: httpx.BaseTransport | None = None,
    ):
        self.pois = pois
        self.cache = cache
        self.mode = mode
        headers = {"Authorization": f"Bearer {api_key}"} if api_key else {}
        self.http = httpx.Client(base_url=base_url.rstrip("/"), headers=headers, timeout=timeout, transport=transport)

    def _point(self, place: str) -> dict:
        if place not in self.pois:
            raise ProviderError(f"no coordinates for {place!r}")
        loc = self.pois[place].location
        return {"id": place, "lat": loc.lat, "lon": loc.lon}

    def _live(self, payload) -> list[dict]:
        try:
            resp = self.http.post("/routes", json=payload)
            resp.raise_for_status()
            options = resp.json()["options"]
        except httpx.HTTPError as exc:
            raise ProviderError(f"map service failed: {exc}") from exc
        except (ValueError, KeyError, TypeError) as exc:
            raise ProtocolError(f"unexpected map payload: {exc!r}") from exc
        return options

    def query(self, origin, destination, depart_time):
        key = {"origin": origin, "destination": destination, "hour": depart_time // 60}
        payload = {
            "origin": self._point(origin),
            "destination": self._point(destination),
            "depart_time": format_time(depart_time),
        }
        options = _cached_call(self.cache, self.mode, key, lambda: self._live(payload))
        try:
            return [TransitOption.from_dict(o) for o in options]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"bad route option: {exc!r}") from exc


def remote_transit_adapter(config: Mapping[str, Any], pois: Mapping[str, POI], transport=None) -> RemoteTransit:
    if not config.get("base_url"):
        raise TravelsimError("live transit needs base_url")
    cache = ReplayCache(config["cache_dir"], "transit") if config.get("cache_dir") else None
    return RemoteTransit(
        config["base_url"],
        pois,
        config.get("api_key"),
        cache=cache,
        mode=config.get("mode", "cached"),
        timeout=float(config.get("timeout", 30.0)),
        transport=transport,
    )


def live_config_from_env(env: Mapping[str, str] | None = None) -> dict:
    """Endpoints, credentials and cache mode from ``TRAVELSIM_*`` variables."""
    env = os.environ if env is None else env
    mode = env.get("TRAVELSIM_MODE", "cached")
    cache_dir = env.get("TRAVELSIM_CACHE_DIR", ".travelsim-cache")
    return {
        "chat": {
            "base_url": env.get("TRAVELSIM_CHAT_URL"),
            "model": env.get("TRAVELSIM_CHAT_MODEL"),
            "api_key": env.get("TRAVELSIM_CHAT_KEY"),
            "mode": mode,
            "cache_dir": cache_dir,
        },
        "transit": {
            "base_url": env.get("TRAVELSIM_MAP_URL"),
            "api_key": env.get("TRAVELSIM_MAP_KEY"),
            "mode": mode,
            "cache_dir": cache_dir,
        },
    }


# --- fixture bundles ----------------------------------------------------------------------

REQUIRED_FILES = ("manifest.json", "pois.json", "transit.json", "restaurants.json", "narratives.json", "chat.json", "profiles.json")
OPTIONAL_FILES = ("posts.json", "plan.json", "decisions.json", "evaluator.json", "aspects.json")


@dataclass
class FixtureBundle:
    path: Path
    manifest: dict
    pois: dict
    transit_matrix: FixtureTransit
    restaurants: FixtureDining
    sightsee_narratives: FixtureSightsee
    canned_chat_responses: dict
    traveler_profiles: dict
    posts: dict = field(default_factory=dict)
    extras: dict = field(default_factory=dict)

    @property
    def city(self) -> str:
        return self.manifest.get("city", "")

    def providers(self) -> Providers:
        return Providers(self.transit_matrix, self.restaurants, self.sightsee_narratives, self.pois)

    def chat_client(self) -> FixtureChatClient:
        return FixtureChatClient(self.canned_chat_responses)

    def profile(self, profile_id: str | None = None) -> TravelerProfile:
        if profile_id is None:
            if len(self.traveler_profiles) != 1:
                raise BundleError("bundle has several profiles; name one")
            return next(iter(self.traveler_profiles.values()))
        try:
            return self.traveler_profiles[profile_id]
        except KeyError:
            raise BundleError(f"unknown profile {profile_id!r}") from None

    def file(self, name: str) -> Path:
        return self.path / name


def bundled_fixture_path(name: str) -> Path:
    return Path(str(resources.files("travelsim").joinpath(f"data/{name}")))


def resolve_bundle(name_or_path) -> Path:
    path = Path(name_or_path)
    if path.is_dir():
        return path
    shipped = bundled_fixture_path(str(name_or_path))
    if shipped.is_dir():
        return shipped
    raise BundleError(f"fixture bundle {name_or_path!r} not found")


def _read_json(path: Path):
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise BundleError(f"{path.name}: invalid JSON ({exc})") from None


def load_fixture_bundle(path) -> FixtureBundle:
    root = resolve_bundle(path)
    for name in REQUIRED_FILES:
        if not (root / name).is_file():
            raise BundleError(f"missing bundle file {name}")
    manifest = _read_json(root / "manifest.json")
    if manifest.get("schema") != BUNDLE_SCHEMA:
        raise BundleError(f"manifest.json: unsupported schema {manifest.get('schema')!r}")
    try:
        pois = load_pois(_read_json(root / "pois.json"))
    except TravelsimError as exc:
        raise BundleError(f"pois.json: {exc}") from None

    transit_doc = _read_json(root / "transit.json")
    for edge in transit_doc.get("edges", []):
        for end in (edge["from"], edge["to"]):
            if end not in pois:
                raise BundleError(f"transit.json: dangling reference to unknown place {end!r}")
    transit = FixtureTransit.from_dict(transit_doc)

    dining_doc = _read_json(root / "restaurants.json")
    for place in dining_doc.get("near", {}):
        if place not in pois:
            raise BundleError(f"restaurants.json: dangling reference to unknown place {place!r}")
    narratives_doc = _read_json(root / "narratives.json")
    for poi in narratives_doc:
        if poi not in pois:
            raise BundleError(f"narratives.json: dangling reference to unknown POI {poi!r}")

    profiles_doc = _read_json(root / "profiles.json")
    profiles = {}
    for raw in profiles_doc.get("profiles", []):
        try:
            profile = TravelerProfile.from_dict(raw)
        except (KeyError, TypeError, ValueError, TravelsimError) as exc:
            raise BundleError(f"profiles.json: bad profile {raw.get('id', '?')!r} ({exc})") from None
        profiles[profile.id] = profile

    posts = {}
    if (root / "posts.json").is_file():
        posts = _read_json(root / "posts.json")
        for poi in posts:
            if poi not in pois:
                raise BundleError(f"posts.json: dangling reference to unknown POI {poi!r}")

    extras = {name: _read_json(root / name) for name in OPTIONAL_FILES[1:] if (root / name).is_file()}
    chat = _read_json(root / "chat.json")
    return FixtureBundle(
        root,
        manifest,
        pois,
        transit,
        FixtureDining.from_dict(dining_doc),
        FixtureSightsee.from_dict(narratives_doc),
        dict(chat.get("responses", chat)),
        profiles,
        posts,
        extras,
    )
