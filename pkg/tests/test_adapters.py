from __future__ import annotations

import json
import shutil
import threading

import httpx
import pytest

from travelsim.adapters import (
    FixtureChatClient,
    HttpChatClient,
    ReplayCache,
    bundled_fixture_path,
    live_config_from_env,
    load_fixture_bundle,
    remote_chat_adapter,
    remote_transit_adapter,
)
from travelsim.errors import BundleError, ProtocolError, ProviderError, ReplayMiss

MESSAGES = [{"role": "user", "content": "hello"}]


def chat_transport(counter, content="hi there", status=200):
    def handler(request: httpx.Request):
        counter.append(json.loads(request.content))
        if status != 200:
            return httpx.Response(status, json={"error": "nope"})
        return httpx.Response(
            200,
            json={"choices": [{"message": {"content": content, "reasoning_content": "because"}}], "usage": {"total_tokens": 7}},
        )

    return httpx.MockTransport(handler)


def failing_transport():
    def handler(request):
        raise AssertionError("network must not be touched")

    return httpx.MockTransport(handler)


def test_bundle_contents(bundle):
    assert bundle.city == "Beijing"
    assert len(bundle.pois) == 12
    assert len(bundle.transit_matrix.matrix) == 12 * 11
    assert set(bundle.extras) >= {"plan.json", "decisions.json", "evaluator.json", "aspects.json"}
    assert bundle.profile().id == "elderly-couple"
    with pytest.raises(BundleError):
        bundle.profile("nobody")


def copy_bundle(tmp_path):
    dst = tmp_path / "b"
    shutil.copytree(bundled_fixture_path("beijing-mini"), dst)
    return dst


def test_missing_file_is_named(tmp_path):
    root = copy_bundle(tmp_path)
    (root / "transit.json").unlink()
    with pytest.raises(BundleError, match="transit.json"):
        load_fixture_bundle(root)


def test_dangling_reference_is_named(tmp_path):
    root = copy_bundle(tmp_path)
    doc = json.loads((root / "narratives.json").read_text())
    doc["atlantis"] = {"narrative": "x", "suggested_duration_min": 10}
    (root / "narratives.json").write_text(json.dumps(doc))
    with pytest.raises(BundleError, match="atlantis"):
        load_fixture_bundle(root)


def test_bad_profile_and_schema(tmp_path):
    root = copy_bundle(tmp_path)
    doc = json.loads((root / "profiles.json").read_text())
    doc["profiles"][0]["type_label"] = "crowd"
    (root / "profiles.json").write_text(json.dumps(doc))
    with pytest.raises(BundleError, match="profiles.json"):
        load_fixture_bundle(root)
    (root / "manifest.json").write_text(json.dumps({"schema": "other/9"}))
    with pytest.raises(BundleError, match="schema"):
        load_fixture_bundle(root)
    with pytest.raises(BundleError):
        load_fixture_bundle(tmp_path / "nowhere")


def test_fixture_chat_lookup_order_and_lists():
    client = FixtureChatClient({"a:b:c": "exact", "a:b:*": "mid", "a:*": "top", "*": "any", "seq": ["one", "two"]})
    assert client.complete(MESSAGES, tag="a:b:c").text == "exact"
    assert client.complete(MESSAGES, tag="a:b:d").text == "mid"
    assert client.complete(MESSAGES, tag="a:x:y").text == "top"
    assert client.complete(MESSAGES, tag="zzz").text == "any"
    assert [client.complete(MESSAGES, tag="seq").text for _ in range(3)] == ["one", "two", "two"]
    with pytest.raises(ReplayMiss):
        FixtureChatClient({}).complete(MESSAGES, tag="x")


def test_cache_round_trip_and_layout(tmp_path):
    cache = ReplayCache(tmp_path, "chat")
    req = {"b": 1, "a": [1, 2]}
    assert cache.get(req) is None
    cache.put(req, {"text": "x"})
    assert cache.get({"a": [1, 2], "b": 1}) == {"text": "x"}
    [path] = (tmp_path / "chat").iterdir()
    assert path.name == ReplayCache.key(req) + ".json"
    assert json.loads(path.read_text())["schema"] == "travelsim.cache/1"


def test_cache_concurrent_writers(tmp_path):
    cache = ReplayCache(tmp_path, "chat")
    threads = [threading.Thread(target=cache.put, args=({"i": i % 3}, {"text": str(i % 3)})) for i in range(30)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert sorted(p.suffix for p in (tmp_path / "chat").iterdir()) == [".json"] * 3


def test_http_chat_record_then_replay(tmp_path):
    seen = []
    cache = ReplayCache(tmp_path, "chat")
    live = HttpChatClient("http://chat.test/v1", "m", "k", cache=cache, mode="record", transport=chat_transport(seen))
    reply = live.complete(MESSAGES, temperature=0.2, seed=3, tag="t")
    assert (reply.text, reply.reasoning, reply.usage) == ("hi there", "because", {"total_tokens": 7})
    assert seen[0]["seed"] == 3 and seen[0]["model"] == "m"

    offline = HttpChatClient("http://chat.test/v1", "m", cache=cache, mode="replay", transport=failing_transport())
    assert offline.complete(MESSAGES, temperature=0.2, seed=3).text == "hi there"
    with pytest.raises(ReplayMiss):
        offline.complete(MESSAGES, temperature=0.2, seed=4)


def test_http_chat_cached_mode_calls_once(tmp_path):
    seen = []
    client = HttpChatClient("http://chat.test", "m", cache=ReplayCache(tmp_path, "chat"), transport=chat_transport(seen))
    for _ in range(3):
        client.complete(MESSAGES)
    assert len(seen) == 1 and len(client.log) == 3


def test_http_chat_errors():
    with pytest.raises(ProviderError):
        HttpChatClient("http://chat.test", "m", transport=chat_transport([], status=500), mode="record").complete(MESSAGES)
    bad = httpx.MockTransport(lambda r: httpx.Response(200, json={"choices": []}))
    with pytest.raises(ProtocolError):
        HttpChatClient("http://chat.test", "m", transport=bad, mode="record").complete(MESSAGES)
    text = httpx.MockTransport(lambda r: httpx.Response(200, text="<html>"))
    with pytest.raises(ProtocolError):
        HttpChatClient("http://chat.test", "m", transport=text, mode="record").complete(MESSAGES)


def test_remote_transit(tmp_path, bundle):
    seen = []

    def handler(request):
        seen.append(json.loads(request.content))
        return httpx.Response(200, json={"options": [{"mode": "Taxi", "duration_min": 12, "cost": 2500}]})

    config = {"base_url": "http://map.test", "mode": "cached", "cache_dir": str(tmp_path)}
    transit = remote_transit_adapter(config, bundle.pois, httpx.MockTransport(handler))
    [opt] = transit.query("shichahai", "jingshan", 9 * 60 + 5)
    assert (opt.mode, opt.duration_min) == ("taxi", 12)
    transit.query("shichahai", "jingshan", 9 * 60 + 40)  # same hour: served from cache
    assert len(seen) == 1 and seen[0]["depart_time"] == "09:05"
    with pytest.raises(ProviderError):
        transit.query("shichahai", "mars", 600)


def test_adapter_factories(tmp_path):
    client = remote_chat_adapter({"mode": "fixture", "responses": {"*": "ok"}})
    assert client.complete(MESSAGES).text == "ok"
    path = tmp_path / "r.json"
    path.write_text(json.dumps({"responses": {"*": "file"}}))
    assert remote_chat_adapter({"mode": "fixture", "responses": str(path)}).complete(MESSAGES).text == "file"
    with pytest.raises(Exception):
        remote_chat_adapter({"mode": "cached"})


def test_live_config_from_env():
    cfg = live_config_from_env({"TRAVELSIM_CHAT_URL": "http://x", "TRAVELSIM_CHAT_MODEL": "m", "TRAVELSIM_MODE": "replay"})
    assert cfg["chat"]["base_url"] == "http://x" and cfg["chat"]["mode"] == "replay"
    assert cfg["transit"]["cache_dir"] == ".travelsim-cache"
