"""Reward-function client for the structure reward scoring service.

One synchronous POST to /v1/score scores a whole rollout group, matching the
granularity of a training step. Trace ids are derived from the text content,
so a completion's score does not depend on its position within the group and
identical inputs always score identically against a healthy service.
"""

from __future__ import annotations

import hashlib
import time
import warnings
from collections.abc import Callable, Sequence
from dataclasses import dataclass
from typing import Any

import httpx


class TransportError(Exception):
    """Service unreachable or persistently failing after the retry budget."""


class ProtocolError(Exception):
    """Service responded outside the scoring protocol."""


@dataclass(frozen=True)
class ClientConfig:
    """Connection settings plus default scoring options.

    ``fallback`` is the reward substituted for traces the service reports an
    item-level error for; each substitution surfaces a warning.
    """

    base_url: str = "http://127.0.0.1:8100"
    timeout: float = 30.0
    retry_budget: int = 3
    retry_base_delay: float = 0.1
    clustering: str = "kmeans"
    seed: int = 0
    fallback: float = 0.0

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.retry_budget < 1:
            raise ValueError("retry_budget must be >= 1")
        if self.retry_base_delay <= 0:
            raise ValueError("retry_base_delay must be positive")
        if self.clustering not in ("kmeans", "hdbscan"):
            raise ValueError(f"unknown clustering method {self.clustering!r}")
        if self.seed < 0:
            raise ValueError("seed must be >= 0")


def _trace_id(text: str) -> str:
    return "t-" + hashlib.blake2b(text.encode("utf-8"), digest_size=8).hexdigest()


class RewardClient:
    """Synchronous scoring client; give each worker its own instance."""

    def __init__(self, cfg: ClientConfig | None = None) -> None:
        self.cfg = cfg if cfg is not None else ClientConfig()
        self._http = httpx.Client(base_url=self.cfg.base_url, timeout=self.cfg.timeout)

    def close(self) -> None:
        self._http.close()

    def __enter__(self) -> RewardClient:
        return self

    def __exit__(self, *exc_info: object) -> None:
        self.close()

    def score_group(
        self, trace_texts: Sequence[str], options: dict[str, Any] | None = None
    ) -> list[float]:
        """Score one group of raw completions, aligned with the input order.

        Degenerate traces score 0. Traces the service rejects individually
        score ``cfg.fallback`` and raise a warning. A service that stays
        unreachable through the retry budget raises TransportError.
        """
        if not trace_texts:
            return []
        body_options: dict[str, Any] = {
            "clustering": self.cfg.clustering,
            "seed": self.cfg.seed,
        }
        if options:
            body_options.update(options)
        body = {
            "traces": [{"id": _trace_id(t), "text": t} for t in trace_texts],
            "options": body_options,
        }
        results = self._post_score(body)
        if len(results) != len(trace_texts):
            raise ProtocolError(
                f"service returned {len(results)} results for {len(trace_texts)} traces"
            )
        rewards: list[float] = []
        for i, item in enumerate(results):
            if "error" in item:
                err = item["error"]
                warnings.warn(
                    f"trace {i} not scored ({err.get('code')}: {err.get('message')}); "
                    f"using fallback {self.cfg.fallback}",
                    stacklevel=2,
                )
                rewards.append(self.cfg.fallback)
            else:
                try:
                    rewards.append(float(item["sr"]))
                except (KeyError, TypeError, ValueError) as exc:
                    raise ProtocolError(f"result {i} has no usable sr: {item!r}") from exc
        return rewards

    def _post_score(self, body: dict[str, Any]) -> list[dict[str, Any]]:
        last_failure = "no attempt made"
        for attempt in range(self.cfg.retry_budget):
            if attempt:
                time.sleep(self.cfg.retry_base_delay * 2 ** (attempt - 1))
            try:
                resp = self._http.post("/v1/score", json=body)
            except httpx.TransportError as exc:
                last_failure = f"transport: {exc}"
                continue
            if resp.status_code >= 500:
                last_failure = f"status {resp.status_code}"
                continue
            if resp.status_code != 200:
                raise ProtocolError(
                    f"scoring rejected with status {resp.status_code}: {resp.text[:200]}"
                )
            try:
                payload = resp.json()
            except ValueError as exc:
                raise ProtocolError(f"malformed response body: {exc}") from exc
            results = payload.get("results") if isinstance(payload, dict) else None
            if not isinstance(results, list):
                raise ProtocolError("response missing results list")
            return results
        raise TransportError(
            f"scoring failed after {self.cfg.retry_budget} attempts: {last_failure}"
        )


def as_reward_fn(
    cfg: ClientConfig | None = None, options: dict[str, Any] | None = None
) -> Callable[[Sequence[str]], list[float]]:
    """Bind a config into a batch reward function (completions -> rewards)."""
    client = RewardClient(cfg)

    def reward_fn(completions: Sequence[str]) -> list[float]:
        return client.score_group(completions, options)

    return reward_fn
