"""LLM client: cache determinism and failure paths (no real network)."""

import json

import pytest
import requests

import symdx.llm as llm_mod
from symdx.errors import EmptyResponseError, TransportError
from symdx.llm import LlmConfig, ResponseCache, cache_key, query_llm

CFG = LlmConfig(endpoint="https://llm.invalid/v1/chat/completions", model="test-model")


class FakeResponse:
    def __init__(self, status_code=200, content="Some answer"):
        self.status_code = status_code
        self._content = content
        self.text = json.dumps(self._body())

    def _body(self):
        return {"choices": [{"message": {"content": self._content}}]}

    def json(self):
        return self._body()


def test_cache_key_is_stable_and_distinct():
    a = cache_key("designed-v1", "Tuberculosis", "test-model")
    assert a == cache_key("designed-v1", "Tuberculosis", "test-model")
    assert a != cache_key("baseline-v1", "Tuberculosis", "test-model")
    assert a != cache_key("designed-v1", "Pneumonia", "test-model")


def test_second_call_served_from_cache(tmp_path, monkeypatch):
    cache = ResponseCache(tmp_path)
    calls = []

    def fake_post(url, **kwargs):
        calls.append(url)
        return FakeResponse(content="1. Cavitation\n2. Effusion")

    monkeypatch.setattr(llm_mod.requests, "post", fake_post)
    first = query_llm("prompt text", CFG, cache=cache)
    second = query_llm("prompt text", CFG, cache=cache)
    assert first == second == "1. Cavitation\n2. Effusion"
    assert len(calls) == 1  # second call never touched the network


def test_cache_hit_returns_fixture_without_network(tmp_path, monkeypatch):
    cache = ResponseCache(tmp_path)
    key = cache_key("designed-v1", "Tuberculosis", CFG.model)
    cache.put(key, {"schema_version": 1, "prompt": "p", "response": "fixture text"})

    def explode(*a, **k):
        raise AssertionError("network must not be touched on a cache hit")

    monkeypatch.setattr(llm_mod.requests, "post", explode)
    assert query_llm("p", CFG, cache=cache, key=key) == "fixture text"


def test_unreachable_endpoint_cold_cache_raises_transport_error(tmp_path, monkeypatch):
    def fail(*a, **k):
        raise requests.ConnectionError("no route to host")

    monkeypatch.setattr(llm_mod.requests, "post", fail)
    with pytest.raises(TransportError):
        query_llm("p", CFG, cache=ResponseCache(tmp_path))


def test_http_error_raises_transport_error(monkeypatch):
    monkeypatch.setattr(
        llm_mod.requests, "post", lambda *a, **k: FakeResponse(status_code=401)
    )
    with pytest.raises(TransportError):
        query_llm("p", CFG)


def test_empty_completion_raises(monkeypatch):
    monkeypatch.setattr(
        llm_mod.requests, "post", lambda *a, **k: FakeResponse(content="   ")
    )
    with pytest.raises(EmptyResponseError):
        query_llm("p", CFG)


def test_api_key_sent_as_bearer_never_cached(tmp_path, monkeypatch):
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen["headers"] = headers
        return FakeResponse()

    monkeypatch.setattr(llm_mod.requests, "post", fake_post)
    monkeypatch.setenv("SYMDX_API_KEY", "secret-key-value")
    cache = ResponseCache(tmp_path)
    query_llm("p", CFG, cache=cache)
    assert seen["headers"]["Authorization"] == "Bearer secret-key-value"
    for f in tmp_path.glob("*.json"):
        assert "secret-key-value" not in f.read_text()


def test_temperature_and_model_in_payload(monkeypatch):
    seen = {}

    def fake_post(url, json=None, headers=None, timeout=None):
        seen["payload"] = json
        return FakeResponse()

    monkeypatch.setattr(llm_mod.requests, "post", fake_post)
    query_llm("p", CFG)
    assert seen["payload"]["model"] == "test-model"
    assert seen["payload"]["temperature"] == 0.0
    assert seen["payload"]["messages"] == [{"role": "user", "content": "p"}]
