import threading

import pytest

from figvqa.backend import (
    BackendConfig,
    BackendTimeout,
    OfflineCacheMiss,
    ResponseCache,
    TransportError,
    Turn,
    chat,
    fingerprint_request,
    load_registry,
    probe,
)
from figvqa.mockserver import MockVisionServer, last_user_text


def make_config(url, **overrides) -> BackendConfig:
    defaults = dict(
        name="mock",
        base_url=url,
        model_id="mock/model",
        temperature=0.0,
        max_tokens=64,
        timeout=5.0,
        max_retries=2,
    )
    defaults.update(overrides)
    return BackendConfig(**defaults)


@pytest.fixture
def cache(tmp_path) -> ResponseCache:
    return ResponseCache(tmp_path / "cache")


def test_chat_returns_endpoint_text(cache):
    with MockVisionServer(responder=lambda p, h: "OK") as server:
        response = chat(make_config(server.url), [Turn("user", "hello")], cache)
    assert response.text == "OK"
    assert response.from_cache is False
    assert response.backend_name == "mock"


def test_repeat_call_hits_cache(cache):
    with MockVisionServer(responder=lambda p, h: f"answer-{h}") as server:
        config = make_config(server.url)
        first = chat(config, [Turn("user", "hello")], cache)
        second = chat(config, [Turn("user", "hello")], cache)
        assert server.hits == 1
    assert second.from_cache is True
    assert second.text == first.text
    assert second.request_fingerprint == first.request_fingerprint


def test_retries_then_transport_error(cache):
    with MockVisionServer(responder=lambda p, h: (500, "boom")) as server:
        config = make_config(server.url, max_retries=2)
        with pytest.raises(TransportError) as err:
            chat(config, [Turn("user", "hello")], cache)
        assert server.hits == 3
    assert err.value.status == 500
    assert "boom" in err.value.body


def test_timeout_raises_timeout_error(cache):
    with MockVisionServer(responder=lambda p, h: "late", delay_s=2.0) as server:
        config = make_config(server.url, timeout=0.2, max_retries=0)
        with pytest.raises(BackendTimeout):
            chat(config, [Turn("user", "hello")], cache)


def test_fingerprint_ignores_transport_knobs():
    turns = [Turn("user", "hello")]
    base = fingerprint_request(make_config("http://x"), turns)
    assert fingerprint_request(make_config("http://x", timeout=1.0, max_retries=9), turns) == base
    assert fingerprint_request(make_config("http://x", temperature=0.5), turns) != base
    assert fingerprint_request(make_config("http://x", max_tokens=65), turns) != base
    assert fingerprint_request(make_config("http://x", name="other"), turns) != base
    assert fingerprint_request(make_config("http://x"), [Turn("user", "bye")]) != base


def test_fingerprint_covers_image_bytes(figure_file, tmp_path):
    config = make_config("http://x")
    with_image = fingerprint_request(config, [Turn("user", "hi", image=str(figure_file))])
    without = fingerprint_request(config, [Turn("user", "hi")])
    assert with_image != without
    other = tmp_path / "other.png"
    other.write_bytes(figure_file.read_bytes() + b"\x00")
    assert fingerprint_request(config, [Turn("user", "hi", image=str(other))]) != with_image


def test_image_sent_as_base64_part(cache, figure_file):
    seen = {}

    def responder(payload, hit):
        seen["payload"] = payload
        return "got it"

    with MockVisionServer(responder=responder) as server:
        chat(make_config(server.url), [Turn("user", "look", image=str(figure_file))], cache)
    content = seen["payload"]["messages"][0]["content"]
    kinds = [part["type"] for part in content]
    assert kinds == ["text", "image_url"]
    assert content[1]["image_url"]["url"].startswith("data:image/png;base64,")
    assert last_user_text(seen["payload"]) == "look"


def test_bearer_token_from_env(cache, monkeypatch):
    import requests

    monkeypatch.setenv("MOCK_KEY", "sekrit")
    seen = {}
    original = requests.post

    def spy(url, **kwargs):
        seen["headers"] = kwargs.get("headers", {})
        return original(url, **kwargs)

    with MockVisionServer(responder=lambda p, h: "ok") as server:
        monkeypatch.setattr(requests, "post", spy)
        chat(make_config(server.url, api_key_env="MOCK_KEY"), [Turn("user", "x")], cache)
    assert seen["headers"]["Authorization"] == "Bearer sekrit"


def test_inflight_dedup_single_network_call(tmp_path):
    cache = ResponseCache(tmp_path / "cache")
    with MockVisionServer(responder=lambda p, h: "shared", delay_s=0.3) as server:
        config = make_config(server.url)
        results = []

        def worker():
            results.append(chat(config, [Turn("user", "same")], cache))

        threads = [threading.Thread(target=worker) for _ in range(4)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        assert server.hits == 1
    assert {r.text for r in results} == {"shared"}
    assert sum(1 for r in results if not r.from_cache) == 1


def test_offline_cache_miss_raises(cache):
    config = make_config("http://127.0.0.1:9")  # no server needed offline
    with pytest.raises(OfflineCacheMiss):
        chat(config, [Turn("user", "never asked")], cache, offline=True)


def test_offline_cache_hit_needs_no_server(cache):
    with MockVisionServer(responder=lambda p, h: "warm") as server:
        config = make_config(server.url)
        chat(config, [Turn("user", "q")], cache)
    offline_config = make_config("http://127.0.0.1:9", name="mock")
    response = chat(offline_config, [Turn("user", "q")], cache, offline=True)
    assert response.text == "warm"
    assert response.from_cache


def test_probe_live_and_dead():
    with MockVisionServer(responder=lambda p, h: "pong") as server:
        assert probe(make_config(server.url)) is True
        dead = make_config("http://127.0.0.1:1", timeout=0.5)
    assert probe(dead) is False


def test_probe_within_timeout():
    with MockVisionServer(responder=lambda p, h: "pong", delay_s=0.0) as server:
        assert probe(make_config(server.url, timeout=1.0)) is True


def test_config_validation():
    with pytest.raises(ValueError):
        BackendConfig(name="x", base_url="http://x", model_id="m", temperature=-1.0)
    with pytest.raises(ValueError):
        BackendConfig(name="x", base_url="http://x", model_id="m", max_tokens=0)


def test_registry_loading(tmp_path):
    path = tmp_path / "registry.json"
    path.write_text(
        '{"backends": [{"name": "a", "base_url": "http://a", "model_id": "m"},'
        ' {"name": "b", "base_url": "http://b", "model_id": "m"}]}'
    )
    registry = load_registry(path)
    assert registry.get("a").base_url == "http://a"
    assert "b" in registry
    with pytest.raises(KeyError):
        registry.get("missing")


def test_registry_rejects_duplicates(tmp_path):
    path = tmp_path / "registry.json"
    path.write_text(
        '{"backends": [{"name": "a", "base_url": "http://a", "model_id": "m"},'
        ' {"name": "a", "base_url": "http://b", "model_id": "m"}]}'
    )
    with pytest.raises(ValueError, match="duplicate"):
        load_registry(path)
