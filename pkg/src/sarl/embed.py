"""Unit-normalized step embeddings via an external HTTP inference endpoint.

Each reasoning step is encoded to a vector and normalized to unit Euclidean
norm. Vectors come either from an embedding server speaking the de facto
``/v1/embeddings`` JSON schema or from precomputed vectors carried in the
corpus (``passthrough``). Requests are batched, bounded in concurrency,
retried with exponential backoff, and memoized in a per-client LRU cache
because repeated reasoning phrases recur across rollouts.
"""

from __future__ import annotations

import hashlib
import math
import os
import threading
import time
from collections import OrderedDict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import httpx

from .errors import (
    DimensionMismatchError,
    InvalidRequestError,
    ProtocolError,
    TransportError,
    ZeroVectorError,
)

ENV_URL = "SARL_EMBED_URL"
ENV_MODEL = "SARL_EMBED_MODEL"

DEFAULT_URL = "http://127.0.0.1:8000/v1/embeddings"
DEFAULT_MODEL = "Qwen/Qwen3-Embedding-0.6B"

ZERO_NORM_THRESHOLD = 1e-12


@dataclass(frozen=True)
class StepEmbedding:
    """Unit-norm vector for one reasoning step."""

    vector: tuple[float, ...]
    step_index: int

    def __post_init__(self) -> None:
        if len(self.vector) < 2:
            raise DimensionMismatchError("embedding dimension must be >= 2")
        norm = math.sqrt(sum(v * v for v in self.vector))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"vector norm {norm!r} is not 1 within 1e-9")


@dataclass(frozen=True)
class EmbedderConfig:
    """Connection and batching parameters for the embedding endpoint."""

    endpoint_url: str = DEFAULT_URL
    model_name: str = DEFAULT_MODEL
    request_batch_size: int = 32
    timeout: float = 30.0
    max_in_flight: int = 4
    retry_budget: int = 3
    retry_base_delay: float = 0.1
    cache_capacity: int = 100_000

    def __post_init__(self) -> None:
        if self.request_batch_size < 1:
            raise ValueError("request_batch_size must be >= 1")
        if self.max_in_flight < 1:
            raise ValueError("max_in_flight must be >= 1")
        if self.retry_budget < 0:
            raise ValueError("retry_budget must be >= 0")
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")

    @classmethod
    def from_env(cls, **overrides: object) -> EmbedderConfig:
        """Build a config with precedence: explicit overrides > env > defaults."""
        cfg = cls()
        env_url = os.environ.get(ENV_URL)
        env_model = os.environ.get(ENV_MODEL)
        if env_url:
            cfg = replace(cfg, endpoint_url=env_url)
        if env_model:
            cfg = replace(cfg, model_name=env_model)
        cleaned = {k: v for k, v in overrides.items() if v is not None}
        return replace(cfg, **cleaned) if cleaned else cfg


def normalize(vector: list[float] | tuple[float, ...]) -> tuple[float, ...]:
    """Return v / ||v||_2. Rejects empty and (near-)zero vectors."""
    if len(vector) == 0:
        raise InvalidRequestError("cannot normalize an empty vector")
    norm = math.sqrt(sum(float(v) * float(v) for v in vector))
    if norm < ZERO_NORM_THRESHOLD:
        raise ZeroVectorError(f"vector norm {norm!r} below {ZERO_NORM_THRESHOLD}")
    return tuple(float(v) / norm for v in vector)


def passthrough(embeddings: list[list[float]]) -> list[StepEmbedding]:
    """Normalize precomputed vectors, preserving order."""
    if not embeddings:
        return []
    dim = len(embeddings[0])
    out = []
    for t, vec in enumerate(embeddings):
        if len(vec) != dim:
            raise DimensionMismatchError(
                f"step {t} has dimension {len(vec)}, expected {dim}"
            )
        out.append(StepEmbedding(vector=normalize(vec), step_index=t))
    return out


def _text_key(model_name: str, text: str) -> tuple[str, str]:
    digest = hashlib.blake2b(text.encode("utf-8"), digest_size=16).hexdigest()
    return (model_name, digest)


class EmbeddingClient:
    """Blocking client for the embedding endpoint with cache and retries.

    Safe for concurrent use: the cache is lock-protected and requests are
    dispatched through a bounded thread pool (at most ``max_in_flight``
    concurrent requests).
    """

    def __init__(self, cfg: EmbedderConfig | None = None) -> None:
        self.cfg = cfg if cfg is not None else EmbedderConfig.from_env()
        self._cache: OrderedDict[tuple[str, str], tuple[float, ...]] = OrderedDict()
        self._cache_lock = threading.Lock()
        self._pool = ThreadPoolExecutor(max_workers=self.cfg.max_in_flight)
        self._http = httpx.Client(timeout=self.cfg.timeout)

    def close(self) -> None:
        self._pool.shutdown(wait=False)
        self._http.close()

    def __enter__(self) -> EmbeddingClient:
        return self

    def __exit__(self, *exc: object) -> None:
        self.close()

    def _cache_get(self, key: tuple[str, str]) -> tuple[float, ...] | None:
        with self._cache_lock:
            vec = self._cache.get(key)
            if vec is not None:
                self._cache.move_to_end(key)
            return vec

    def _cache_put(self, key: tuple[str, str], vec: tuple[float, ...]) -> None:
        with self._cache_lock:
            self._cache[key] = vec
            self._cache.move_to_end(key)
            while len(self._cache) > self.cfg.cache_capacity:
                self._cache.popitem(last=False)

    def _post(self, texts: list[str]) -> list[tuple[float, ...]]:
        """One wire request with retries. Returns normalized vectors in order."""
        body = {"model": self.cfg.model_name, "input": texts}
        attempt = 0
        while True:
            try:
                resp = self._http.post(self.cfg.endpoint_url, json=body)
                if resp.status_code >= 500:
                    raise TransportError(f"endpoint returned {resp.status_code}")
                break
            except (httpx.TransportError, TransportError) as exc:
                if attempt >= self.cfg.retry_budget:
                    raise TransportError(
                        f"embedding endpoint unreachable after "
                        f"{self.cfg.retry_budget} retries: {exc}"
                    ) from exc
                time.sleep(self.cfg.retry_base_delay * (2**attempt))
                attempt += 1
        if resp.status_code != 200:
            raise ProtocolError(
                f"embedding endpoint returned status {resp.status_code}"
            )
        try:
            payload = resp.json()
            data = payload["data"]
            rows = sorted(data, key=lambda row: row["index"])
            vectors = [[float(v) for v in row["embedding"]] for row in rows]
            indices = [int(row["index"]) for row in rows]
        except (KeyError, TypeError, ValueError) as exc:
            raise ProtocolError(f"malformed embedding response: {exc}") from exc
        if indices != list(range(len(texts))):
            raise ProtocolError(
                f"embedding response indices {indices[:8]}... do not cover "
                f"0..{len(texts) - 1}"
            )
        return [normalize(vec) for vec in vectors]

    def embed_steps(self, steps: list[str]) -> list[StepEmbedding]:
        """Embed steps in order, batching requests and consulting the cache."""
        if not steps:
            raise InvalidRequestError("steps must be non-empty")
        model = self.cfg.model_name
        vectors: list[tuple[float, ...] | None] = [None] * len(steps)
        pending: dict[tuple[str, str], list[int]] = {}
        for t, text in enumerate(steps):
            key = _text_key(model, text)
            cached = self._cache_get(key)
            if cached is not None:
                vectors[t] = cached
            else:
                pending.setdefault(key, []).append(t)
        if pending:
            keys = list(pending)
            texts = [steps[pending[key][0]] for key in keys]
            bs = self.cfg.request_batch_size
            batches = [texts[i : i + bs] for i in range(0, len(texts), bs)]
            futures = [self._pool.submit(self._post, batch) for batch in batches]
            got: list[tuple[float, ...]] = []
            for future in futures:
                got.extend(future.result())
            for key, vec in zip(keys, got):
                self._cache_put(key, vec)
                for t in pending[key]:
                    vectors[t] = vec
        dim = len(vectors[0])  # type: ignore[arg-type]
        out = []
        for t, vec in enumerate(vectors):
            assert vec is not None
            if len(vec) != dim:
                raise ProtocolError(
                    f"embedding dimension changed across batches: "
                    f"{len(vec)} != {dim}"
                )
            out.append(StepEmbedding(vector=vec, step_index=t))
        return out

    def probe(self) -> bool:
        """One uncached, unretried request to check endpoint liveness."""
        try:
            body = {"model": self.cfg.model_name, "input": ["ping"]}
            resp = self._http.post(self.cfg.endpoint_url, json=body)
            if resp.status_code != 200:
                return False
            data = resp.json()["data"]
            return isinstance(data, list) and len(data) == 1
        except (httpx.HTTPError, KeyError, TypeError, ValueError):
            return False
