"""HTTP scoring service for RL training loops.

POST /v1/score scores a batch of traces (one rollout group per call, the
training-step granularity). GET /healthz reports liveness with a cached
embedder probe. GET /v1/metrics exposes plaintext counters for scraping.

The response for a request is value-equal to running the pipeline's batch
scorer in process on the same parsed inputs.
"""

from __future__ import annotations

import json
import time
from contextlib import asynccontextmanager
from dataclasses import replace
from typing import Any

import pydantic
from fastapi import FastAPI, Request, Response
from fastapi.concurrency import run_in_threadpool
from fastapi.responses import JSONResponse, PlainTextResponse

from ..cluster import ClusterConfig
from ..embed import EmbeddingClient
from ..errors import error_info
from ..pipeline import ScoreError, ScoreRequest, ScoreResult, score_batch
from .config import ServiceConfig
from .metrics import MetricsRegistry
from .schemas import ScoreBody, ScoreOptions, TraceIn


def _effective_cluster(base: ClusterConfig, opts: ScoreOptions) -> ClusterConfig:
    cfg = base
    if opts.clustering is not None:
        cfg = replace(cfg, method=opts.clustering)
    if opts.k_floor is not None:
        cfg = replace(cfg, k_floor=opts.k_floor)
    if opts.noise_policy is not None:
        cfg = replace(cfg, noise_policy=opts.noise_policy)
    return cfg


def build_requests(
    traces: list[TraceIn], opts: ScoreOptions, base_cluster: ClusterConfig
) -> list[ScoreRequest | ScoreError]:
    """Convert wire traces to pipeline requests; shape violations become
    in-place error records rather than failing the whole batch."""
    cluster = _effective_cluster(base_cluster, opts)
    seed = opts.seed if opts.seed is not None else cluster.seed
    out: list[ScoreRequest | ScoreError] = []
    for trace in traces:
        try:
            out.append(
                ScoreRequest(
                    id=trace.id,
                    text=trace.text,
                    steps=tuple(trace.steps) if trace.steps is not None else None,
                    embeddings=(
                        tuple(tuple(v) for v in trace.embeddings)
                        if trace.embeddings is not None
                        else None
                    ),
                    cluster=cluster,
                    seed=seed,
                    extraction_mode=opts.extraction_mode or "whole-text",
                    degenerate_reward=(
                        opts.degenerate_reward
                        if opts.degenerate_reward is not None
                        else 0.0
                    ),
                )
            )
        except Exception as exc:  # noqa: BLE001
            out.append(ScoreError(id=trace.id, error=error_info(exc)))
    return out


def _score_mixed(
    items: list[ScoreRequest | ScoreError],
    parallelism: int,
    client: EmbeddingClient,
) -> list[ScoreResult | ScoreError]:
    """Score the valid requests, splicing pre-failed items back in order."""
    reqs = [i for i in items if isinstance(i, ScoreRequest)]
    scored = iter(score_batch(reqs, parallelism=parallelism, client=client))
    return [item if isinstance(item, ScoreError) else next(scored) for item in items]


def create_app(cfg: ServiceConfig | None = None) -> FastAPI:
    cfg = cfg if cfg is not None else ServiceConfig()

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        yield
        app.state.client.close()

    app = FastAPI(title="structure reward service", lifespan=lifespan)
    app.state.config = cfg
    app.state.client = EmbeddingClient(cfg.embedder)
    app.state.metrics = MetricsRegistry()
    app.state.health_cache = {"checked_at": float("-inf"), "ok": False}

    def error_response(status: int, message: str) -> JSONResponse:
        return JSONResponse(
            status_code=status, content={"error": {"message": message}}
        )

    @app.post("/v1/score")
    async def score(request: Request) -> Response:
        app.state.metrics.observe_request()
        raw = await request.body()
        if len(raw) > cfg.max_body_bytes:
            return error_response(
                413, f"request body exceeds {cfg.max_body_bytes} bytes"
            )
        try:
            payload = json.loads(raw)
        except json.JSONDecodeError as exc:
            return error_response(400, f"malformed JSON: {exc}")
        try:
            body = ScoreBody.model_validate(payload)
        except pydantic.ValidationError as exc:
            return error_response(400, f"schema violation: {exc.errors()[:3]}")
        if len(body.traces) > cfg.max_traces:
            return error_response(
                413, f"{len(body.traces)} traces exceed limit {cfg.max_traces}"
            )
        opts = body.options if body.options is not None else ScoreOptions()
        items = build_requests(body.traces, opts, cfg.cluster)
        results = await run_in_threadpool(
            _score_mixed, items, cfg.parallelism, app.state.client
        )
        app.state.metrics.observe_results(results)
        failures = [r for r in results if isinstance(r, ScoreError)]
        if failures and len(failures) == len(results) and any(
            f.error.get("code") == "embed_transport" for f in failures
        ):
            return error_response(503, "embedding endpoint unavailable")
        out: list[dict[str, Any]] = []
        for item in results:
            if isinstance(item, ScoreResult):
                out.append(item.to_json_dict(include_timing=opts.include_timing))
            else:
                out.append(item.to_json_dict())
        return JSONResponse(content={"results": out})

    @app.get("/healthz")
    async def healthz() -> JSONResponse:
        cache = app.state.health_cache
        now = time.monotonic()
        if now - cache["checked_at"] > cfg.health_ttl:
            cache["ok"] = await run_in_threadpool(app.state.client.probe)
            cache["checked_at"] = now
        return JSONResponse(
            content={"status": "ok", "embedder": "ok" if cache["ok"] else "degraded"}
        )

    @app.get("/v1/metrics")
    async def metrics() -> PlainTextResponse:
        return PlainTextResponse(app.state.metrics.render())

    return app
