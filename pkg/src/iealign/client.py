"""Uniform interface to text-generation backends.

Ships a deterministic mock backend (the default for pipeline testing) and a
minimal live chat-completion client. Completions are cached on disk keyed by
(backend id, prompt digest, params digest, sample index); cache writes are
atomic so concurrent workers cannot corrupt entries.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import random
import tempfile
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from .errors import ConfigurationError
from .seeds import derive_seed

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GenParams:
    temperature: float = 0.7
    max_tokens: int = 1024
    n: int = 1
    seed: Optional[int] = None  # mock backends only

    def __post_init__(self):
        if self.temperature < 0:
            raise ConfigurationError(f"temperature must be >= 0, got {self.temperature}")
        if self.n < 1:
            raise ConfigurationError(f"n must be >= 1, got {self.n}")

    def digest(self) -> str:
        body = f"{self.temperature}|{self.max_tokens}|{self.seed}"
        return hashlib.sha256(body.encode()).hexdigest()[:16]


class TransportError(Exception):
    pass


def prompt_digest(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()[:24]


class ResponseCache:
    """Content-addressed completion cache; None directory disables caching."""

    def __init__(self, directory: Optional[str] = None):
        self.directory = Path(directory) if directory else None
        if self.directory:
            self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, key: str) -> Path:
        return self.directory / f"{key}.json"

    def get(self, key: str) -> Optional[str]:
        if not self.directory:
            return None
        path = self._path(key)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["text"]

    def put(self, key: str, text: str) -> None:
        if not self.directory:
            return
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w", encoding="utf-8") as f:
                json.dump({"text": text}, f, ensure_ascii=False)
            os.replace(tmp, self._path(key))
        except BaseException:
            if os.path.exists(tmp):
                os.unlink(tmp)
            raise


class BaseClient:
    backend_id = "base"

    def __init__(self, cache: Optional[ResponseCache] = None):
        self.cache = cache or ResponseCache(None)
        self.call_count = 0  # generations actually performed (cache misses)

    def _cache_key(self, prompt: str, params: GenParams, index: int) -> str:
        return f"{self.backend_id}-{prompt_digest(prompt)}-{params.digest()}-{index}"

    def complete(self, prompt: str, params: GenParams, index: int = 0) -> str:
        key = self._cache_key(prompt, params, index)
        cached = self.cache.get(key)
        if cached is not None:
            return cached
        text = self._generate(prompt, params, index)
        self.call_count += 1
        self.cache.put(key, text)
        return text

    def sample_n(self, prompt: str, n: int, params: GenParams) -> list[str]:
        if n < 1:
            raise ConfigurationError(f"n must be >= 1, got {n}")
        return [self.complete(prompt, params, index=i) for i in range(n)]

    def _generate(self, prompt: str, params: GenParams, index: int) -> str:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# Mock backend

NOISE_VOCAB = (
    "lorem", "ipsum", "quux", "zebra", "puzzle", "random", "static", "noise",
    "filler", "blank", "arbitrary", "garble", "offbeat", "scatter", "jumble",
)


class MockClient(BaseClient):
    """Deterministic mock backend.

    Policies:
      echo_gold          return the registered gold text verbatim
      fixed:<text>       always return <text>
      noisy_gold:<p>     gold with each token independently corrupted w.p. p
      scripted           responses looked up by prompt digest
    """

    backend_id = "mock"

    def __init__(
        self,
        policy: str = "echo_gold",
        seed: int = 0,
        gold_map: Optional[dict[str, str]] = None,
        script: Optional[dict[str, list[str]]] = None,
        fallback: str = "NA",
        cache: Optional[ResponseCache] = None,
    ):
        super().__init__(cache)
        self.policy = policy
        self.seed = seed
        self.gold_map = gold_map or {}
        self.script = script or {}
        self.fallback = fallback

    def register_gold(self, prompt: str, gold: str) -> None:
        self.gold_map[prompt_digest(prompt)] = gold

    def _lookup_gold(self, prompt: str) -> str:
        digest = prompt_digest(prompt)
        if digest not in self.gold_map:
            logger.warning("mock: no gold registered for prompt %s, using fallback", digest)
            return self.fallback
        return self.gold_map[digest]

    def _generate(self, prompt: str, params: GenParams, index: int) -> str:
        digest = prompt_digest(prompt)
        if self.policy == "echo_gold":
            return self._lookup_gold(prompt)
        if self.policy.startswith("fixed:"):
            return self.policy[len("fixed:"):]
        if self.policy.startswith("noisy_gold:"):
            p = float(self.policy[len("noisy_gold:"):])
            return self._corrupt(self._lookup_gold(prompt), p, digest, index)
        if self.policy == "scripted":
            responses = self.script.get(digest)
            if not responses:
                logger.warning("mock: no script for prompt %s, using fallback", digest)
                return self.fallback
            return responses[index % len(responses)]
        raise ConfigurationError(f"unknown mock policy {self.policy!r}")

    def _corrupt(self, gold: str, p: float, digest: str, index: int) -> str:
        rng = random.Random(derive_seed(self.seed, "noisy", digest, str(index)))
        tokens = gold.split()
        out = [rng.choice(NOISE_VOCAB) if rng.random() < p else tok for tok in tokens]
        return " ".join(out)


# ---------------------------------------------------------------------------
# Live backend


class LiveClient(BaseClient):
    """Minimal chat-completion HTTP client with retries and rate limiting.

    The API key comes from the environment variable named by `api_key_env`;
    it is never read from configuration files.
    """

    backend_id = "live"

    def __init__(
        self,
        endpoint: str,
        model: str,
        api_key_env: str = "IEALIGN_API_KEY",
        qps: float = 1.0,
        max_retries: int = 5,
        timeout: float = 60.0,
        cache: Optional[ResponseCache] = None,
        session=None,
    ):
        super().__init__(cache)
        api_key = os.environ.get(api_key_env)
        if not api_key:
            raise ConfigurationError(f"API key environment variable {api_key_env} is not set")
        self.endpoint = endpoint
        self.model = model
        self.api_key = api_key
        self.min_interval = 1.0 / qps if qps > 0 else 0.0
        self.max_retries = max_retries
        self.timeout = timeout
        self._last_call = 0.0
        if session is None:
            import requests

            session = requests.Session()
        self.session = session

    def _throttle(self) -> None:
        wait = self._last_call + self.min_interval - time.monotonic()
        if wait > 0:
            time.sleep(wait)
        self._last_call = time.monotonic()

    def _generate(self, prompt: str, params: GenParams, index: int) -> str:
        body = {
            "model": self.model,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": params.temperature,
            "max_tokens": params.max_tokens,
        }
        headers = {"Authorization": f"Bearer {self.api_key}"}
        delay = 1.0
        last_error: Optional[Exception] = None
        for attempt in range(self.max_retries):
            self._throttle()
            try:
                resp = self.session.post(
                    self.endpoint, json=body, headers=headers, timeout=self.timeout
                )
                if resp.status_code in (429, 500, 502, 503, 504):
                    raise TransportError(f"HTTP {resp.status_code}")
                resp.raise_for_status()
                return resp.json()["choices"][0]["message"]["content"]
            except Exception as e:  # transient transport failures retry
                last_error = e
                logger.warning("live call failed (attempt %d/%d): %s", attempt + 1, self.max_retries, e)
                time.sleep(delay)
                delay = min(delay * 2, 30.0)
        raise TransportError(f"exhausted {self.max_retries} retries: {last_error}")


def make_client(config: dict, cache_dir: Optional[str] = None) -> BaseClient:
    """Build a client from a backend config: {kind: live|mock, ...}."""
    cache = ResponseCache(cache_dir)
    kind = config.get("kind", "mock")
    if kind == "mock":
        return MockClient(
            policy=config.get("policy", "echo_gold"),
            seed=config.get("seed", 0),
            fallback=config.get("fallback", "NA"),
            cache=cache,
        )
    if kind == "live":
        return LiveClient(
            endpoint=config["endpoint"],
            model=config["model"],
            api_key_env=config.get("api_key_env", "IEALIGN_API_KEY"),
            qps=config.get("qps", 1.0),
            cache=cache,
        )
    raise ConfigurationError(f"unknown backend kind {kind!r}")
