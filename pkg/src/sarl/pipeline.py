"""Orchestrate trace -> steps -> embeddings -> clusters -> map -> score.

One request carries exactly one trace source: raw text (think block gets
extracted and segmented), pre-split steps, or steps with precomputed
embeddings. Each trace is clustered under its own seed, mixed from the
request seed and a stable hash of the trace id, so rewards are reproducible
per trajectory across restarts regardless of batch composition.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import Any

from .cluster import ClusterAssignment, ClusterConfig, cluster_trace
from .embed import EmbeddingClient, passthrough
from .errors import InvalidRequestError, error_info
from .reasoning_map import StructureScore, build_map, structure_reward
from .trace_ingest import RawResponse, extract_think, segment_steps

_U64 = (1 << 64) - 1


def trace_seed(global_seed: int, trace_id: str) -> int:
    """Mix the run seed with a 64-bit hash of the trace id."""
    digest = hashlib.blake2b(trace_id.encode("utf-8"), digest_size=8).digest()
    return (global_seed ^ int.from_bytes(digest, "big")) & _U64


@dataclass(frozen=True)
class ScoreRequest:
    """One trace to score. Exactly one of ``text`` or ``steps`` is set."""

    id: str
    text: str | None = None
    steps: tuple[str, ...] | None = None
    embeddings: tuple[tuple[float, ...], ...] | None = None
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    seed: int = 0
    extraction_mode: str = "whole-text"
    degenerate_reward: float = 0.0

    def __post_init__(self) -> None:
        if not self.id:
            raise InvalidRequestError("trace id must be non-empty")
        if (self.text is None) == (self.steps is None):
            raise InvalidRequestError(
                "exactly one of text or steps must be provided"
            )
        if self.embeddings is not None:
            if self.steps is None:
                raise InvalidRequestError("embeddings require steps")
            if len(self.embeddings) != len(self.steps):
                raise InvalidRequestError(
                    f"{len(self.embeddings)} embeddings for "
                    f"{len(self.steps)} steps"
                )


def request_from_response(
    resp: RawResponse,
    cluster: ClusterConfig | None = None,
    seed: int = 0,
    extraction_mode: str = "whole-text",
    degenerate_reward: float = 0.0,
) -> ScoreRequest:
    """Build a request from a corpus record; pre-split steps win over text."""
    cfg = cluster if cluster is not None else ClusterConfig()
    if resp.steps is not None:
        return ScoreRequest(
            id=resp.id,
            steps=tuple(resp.steps),
            embeddings=(
                tuple(tuple(v) for v in resp.embeddings)
                if resp.embeddings is not None
                else None
            ),
            cluster=cfg,
            seed=seed,
            extraction_mode=extraction_mode,
            degenerate_reward=degenerate_reward,
        )
    return ScoreRequest(
        id=resp.id,
        text=resp.text,
        cluster=cfg,
        seed=seed,
        extraction_mode=extraction_mode,
        degenerate_reward=degenerate_reward,
    )


@dataclass(frozen=True)
class ScoreResult:
    """Scored trace: the reward, its decomposition, and graph diagnostics."""

    id: str
    score: StructureScore
    k: int
    num_edges: int
    num_steps: int
    assignments: tuple[int, ...]
    method: str
    seed: int
    timing: dict[str, float]

    def to_json_dict(self, include_timing: bool = False) -> dict[str, Any]:
        """Serializable view; timing is excluded by default because wall
        times vary between otherwise identical runs."""
        out: dict[str, Any] = {
            "id": self.id,
            "sr": self.score.sr,
            "local_depth": self.score.local_depth,
            "global_flow": self.score.global_flow,
            "c": self.score.c,
            "l": self.score.l,
            "degenerate": self.score.degenerate,
            "k": self.k,
            "num_nodes": self.k,
            "num_edges": self.num_edges,
            "num_steps": self.num_steps,
            "assignments": list(self.assignments),
            "method": self.method,
            "seed": self.seed,
        }
        if include_timing:
            out["timing"] = dict(self.timing)
        return out


@dataclass(frozen=True)
class ScoreError:
    """Per-item failure, reported in place so a batch never aborts."""

    id: str
    error: dict[str, Any]

    def to_json_dict(self) -> dict[str, Any]:
        return {"id": self.id, "error": dict(self.error)}


def result_to_json_line(
    item: ScoreResult | ScoreError, include_timing: bool = False
) -> str:
    """Canonical single-line JSON for batch output files."""
    if isinstance(item, ScoreResult):
        payload = item.to_json_dict(include_timing=include_timing)
    else:
        payload = item.to_json_dict()
    return json.dumps(payload, sort_keys=True, separators=(",", ":"))


def _degenerate_result(
    req: ScoreRequest, num_steps: int, assignment: ClusterAssignment | None,
    timing: dict[str, float],
) -> ScoreResult:
    score = StructureScore(
        sr=req.degenerate_reward,
        local_depth=0.0,
        global_flow=0.0,
        c=0.0,
        l=None,
        degenerate=True,
    )
    return ScoreResult(
        id=req.id,
        score=score,
        k=assignment.k if assignment is not None else 0,
        num_edges=0,
        num_steps=num_steps,
        assignments=tuple(assignment.labels) if assignment is not None else (),
        method=req.cluster.method,
        seed=req.seed,
        timing=timing,
    )


def score_one(req: ScoreRequest, client: EmbeddingClient | None = None) -> ScoreResult:
    """Run the full scoring pipeline for one trace.

    Deterministic given the request and the embedder's outputs. Traces with
    no steps are degenerate and skip embedding and clustering entirely.
    """
    timing: dict[str, float] = {}
    t0 = time.perf_counter()
    if req.steps is not None:
        steps = list(req.steps)
    else:
        assert req.text is not None
        steps = segment_steps(extract_think(req.text, req.extraction_mode))
    timing["extract"] = time.perf_counter() - t0

    if not steps:
        return _degenerate_result(req, 0, None, timing)

    t0 = time.perf_counter()
    if req.embeddings is not None:
        embedded = passthrough([list(v) for v in req.embeddings])
    else:
        if client is None:
            raise InvalidRequestError(
                "request has no precomputed embeddings and no embedding "
                "client was provided"
            )
        embedded = client.embed_steps(steps)
    timing["embed"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    cfg = replace(req.cluster, seed=trace_seed(req.seed, req.id))
    assignment = cluster_trace([e.vector for e in embedded], cfg)
    timing["cluster"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    graph = build_map(assignment)
    score = structure_reward(graph, degenerate_reward=req.degenerate_reward)
    timing["score"] = time.perf_counter() - t0

    return ScoreResult(
        id=req.id,
        score=score,
        k=assignment.k,
        num_edges=graph.num_edges,
        num_steps=len(steps),
        assignments=tuple(assignment.labels),
        method=assignment.method,
        seed=req.seed,
        timing=timing,
    )


def score_batch(
    reqs: list[ScoreRequest],
    parallelism: int = 1,
    client: EmbeddingClient | None = None,
) -> list[ScoreResult | ScoreError]:
    """Score many traces, order-preserving, with per-item errors in place.

    Elementwise equal to calling :func:`score_one` on each request, for any
    parallelism: items are independent and each trace's seed depends only
    on its own id.
    """
    if parallelism < 1:
        raise InvalidRequestError("parallelism must be >= 1")

    def run(req: ScoreRequest) -> ScoreResult | ScoreError:
        try:
            return score_one(req, client=client)
        except Exception as exc:  # noqa: BLE001 - one bad item must not kill the batch
            return ScoreError(id=req.id, error=error_info(exc))

    if parallelism == 1 or len(reqs) <= 1:
        return [run(r) for r in reqs]
    with ThreadPoolExecutor(max_workers=parallelism) as pool:
        return list(pool.map(run, reqs))
