"""Model client tests: mock policies, caching, retry/backoff, and the
environment-only API key rule."""

import pytest

from iealign.client import (
    GenParams,
    LiveClient,
    MockClient,
    ResponseCache,
    TransportError,
    make_client,
    prompt_digest,
)
from iealign.errors import ConfigurationError


def test_genparams_validation():
    with pytest.raises(ConfigurationError):
        GenParams(temperature=-1)
    with pytest.raises(ConfigurationError):
        GenParams(n=0)
    assert GenParams().digest() == GenParams().digest()
    assert GenParams(temperature=1.0).digest() != GenParams(temperature=0.7).digest()


# ---------------------------------------------------------------------------
# Mock policies


def test_echo_gold_policy():
    client = MockClient(policy="echo_gold")
    client.register_gold("prompt", "the gold answer")
    assert client.complete("prompt", GenParams()) == "the gold answer"


def test_echo_gold_fallback_when_unregistered():
    client = MockClient(policy="echo_gold", fallback="NA")
    assert client.complete("unknown prompt", GenParams()) == "NA"


def test_fixed_policy():
    client = MockClient(policy="fixed:hello there")
    assert client.complete("anything", GenParams()) == "hello there"


def test_scripted_policy_cycles():
    digest = prompt_digest("p")
    client = MockClient(policy="scripted", script={digest: ["a", "b"]})
    assert [client.complete("p", GenParams(), index=i) for i in range(3)] == ["a", "b", "a"]


def test_scripted_unknown_prompt_uses_fallback():
    client = MockClient(policy="scripted", fallback="NA")
    assert client.complete("p", GenParams()) == "NA"


def test_unknown_policy_rejected():
    with pytest.raises(ConfigurationError):
        MockClient(policy="bogus").complete("p", GenParams())


def test_noisy_gold_zero_is_identity():
    client = MockClient(policy="noisy_gold:0")
    client.register_gold("p", "alpha beta gamma")
    assert client.sample_n("p", 5, GenParams()) == ["alpha beta gamma"] * 5


def test_noisy_gold_corruption_rate_near_p():
    gold = " ".join(f"tok{i}" for i in range(1000))
    client = MockClient(policy="noisy_gold:0.5", seed=1)
    client.register_gold("p", gold)
    out = client.complete("p", GenParams()).split()
    corrupted = sum(1 for a, b in zip(gold.split(), out) if a != b)
    assert abs(corrupted / 1000 - 0.5) < 0.05


def test_noisy_gold_deterministic_per_index():
    client1 = MockClient(policy="noisy_gold:0.5", seed=2)
    client2 = MockClient(policy="noisy_gold:0.5", seed=2)
    for c in (client1, client2):
        c.register_gold("p", "one two three four five six")
    a = client1.sample_n("p", 5, GenParams())
    b = client2.sample_n("p", 5, GenParams())
    assert a == b
    assert len(set(a)) > 1  # indexes draw independent corruption


# ---------------------------------------------------------------------------
# Cache


def test_cache_roundtrip_and_call_counter(tmp_path):
    cache = ResponseCache(str(tmp_path))
    client = MockClient(policy="fixed:x", cache=cache)
    assert client.complete("p", GenParams()) == "x"
    assert client.call_count == 1
    assert client.complete("p", GenParams()) == "x"
    assert client.call_count == 1  # served from cache

    fresh = MockClient(policy="fixed:x", cache=ResponseCache(str(tmp_path)))
    assert fresh.complete("p", GenParams()) == "x"
    assert fresh.call_count == 0  # cache survives across client instances


def test_cache_distinguishes_params_and_index(tmp_path):
    cache = ResponseCache(str(tmp_path))
    client = MockClient(policy="fixed:x", cache=cache)
    client.complete("p", GenParams(temperature=0.7))
    client.complete("p", GenParams(temperature=1.0))
    client.complete("p", GenParams(temperature=1.0), index=1)
    assert client.call_count == 3


# ---------------------------------------------------------------------------
# Live client


def test_live_client_requires_api_key_env(monkeypatch):
    monkeypatch.delenv("IEALIGN_API_KEY", raising=False)
    with pytest.raises(ConfigurationError, match="IEALIGN_API_KEY"):
        LiveClient(endpoint="https://example.invalid/v1", model="m")


class _FakeResponse:
    def __init__(self, status_code, payload=None):
        self.status_code = status_code
        self._payload = payload or {}

    def raise_for_status(self):
        if self.status_code >= 400:
            raise RuntimeError(f"HTTP {self.status_code}")

    def json(self):
        return self._payload


class _FakeSession:
    def __init__(self, responses):
        self.responses = list(responses)
        self.calls = 0

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls += 1
        return self.responses.pop(0)


def _ok(text):
    return _FakeResponse(200, {"choices": [{"message": {"content": text}}]})


def test_live_client_retries_transient_then_succeeds(monkeypatch):
    monkeypatch.setenv("IEALIGN_API_KEY", "test-key")
    monkeypatch.setattr("time.sleep", lambda s: None)
    session = _FakeSession([_FakeResponse(429), _FakeResponse(503), _ok("done")])
    client = LiveClient(endpoint="https://example.invalid/v1", model="m", qps=0, session=session)
    assert client.complete("p", GenParams()) == "done"
    assert session.calls == 3


def test_live_client_exhausts_retries(monkeypatch):
    monkeypatch.setenv("IEALIGN_API_KEY", "test-key")
    monkeypatch.setattr("time.sleep", lambda s: None)
    session = _FakeSession([_FakeResponse(500)] * 5)
    client = LiveClient(
        endpoint="https://example.invalid/v1", model="m", qps=0, max_retries=5, session=session
    )
    with pytest.raises(TransportError, match="exhausted"):
        client.complete("p", GenParams())


# ---------------------------------------------------------------------------
# Factory


def test_make_client_mock_and_unknown(tmp_path):
    client = make_client({"kind": "mock", "policy": "fixed:y"}, cache_dir=str(tmp_path / "c"))
    assert client.complete("p", GenParams()) == "y"
    with pytest.raises(ConfigurationError):
        make_client({"kind": "telepathy"})


def test_sample_n_validation():
    client = MockClient(policy="fixed:x")
    with pytest.raises(ConfigurationError):
        client.sample_n("p", 0, GenParams())
    assert client.sample_n("p", 1, GenParams()) == ["x"]
