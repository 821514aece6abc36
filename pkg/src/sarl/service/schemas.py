"""Wire-format models for the scoring endpoint."""

from __future__ import annotations

from typing import Literal

from pydantic import BaseModel, ConfigDict, Field


class TraceIn(BaseModel):
    """One trace to score: raw text, or pre-split steps with optional
    precomputed embeddings. Source-form rules are enforced per item so one
    bad trace cannot fail the batch."""

    model_config = ConfigDict(extra="forbid")

    id: str = Field(min_length=1)
    text: str | None = None
    steps: list[str] | None = None
    embeddings: list[list[float]] | None = None
    meta: dict[str, str] | None = None


class ScoreOptions(BaseModel):
    """Per-request overrides of the service's scoring defaults."""

    model_config = ConfigDict(extra="forbid")

    clustering: Literal["kmeans", "hdbscan"] | None = None
    seed: int | None = Field(default=None, ge=0)
    k_floor: int | None = Field(default=None, ge=1)
    noise_policy: Literal["merged", "singletons"] | None = None
    extraction_mode: Literal["whole-text", "empty"] | None = None
    degenerate_reward: float | None = Field(default=None, ge=0.0, le=1.0)
    include_timing: bool = False


class ScoreBody(BaseModel):
    model_config = ConfigDict(extra="forbid")

    traces: list[TraceIn]
    options: ScoreOptions | None = None
