"""Parse raw model outputs into ordered reasoning steps and stream corpora.

A raw response is the full generated string for one rollout. Scoring only
looks at the think block: the text between the first ``<think>`` and its
closing ``</think>``. The block is split into steps at newline boundaries;
whitespace-only lines are dropped. Responses may instead carry pre-split
``steps`` (and optionally pre-computed ``embeddings``), which bypass
extraction entirely.
"""

from __future__ import annotations

import json
from collections.abc import Iterator
from dataclasses import dataclass
from pathlib import Path
from typing import Any

from .errors import CorpusError

OPEN_TAG = "<think>"
CLOSE_TAG = "</think>"

# Behavior when no opening tag exists: score the whole text, or nothing.
EXTRACTION_MODES = ("whole-text", "empty")


@dataclass(frozen=True)
class RawResponse:
    """One corpus record: a generated string plus optional pre-split fields."""

    id: str
    text: str
    meta: dict[str, str] | None = None
    steps: list[str] | None = None
    embeddings: list[list[float]] | None = None


@dataclass(frozen=True)
class ReasoningTrace:
    """Ordered non-empty reasoning steps extracted from one response.

    ``source_span`` is the byte range (UTF-8 offsets, half-open) of the
    extracted think content within the original text, or None when steps
    were supplied directly and nothing was extracted.
    """

    id: str
    steps: tuple[str, ...]
    source_span: tuple[int, int] | None


@dataclass(frozen=True)
class CorpusLineError:
    """A malformed corpus line, reported in place of a record."""

    line_no: int
    message: str
    id: str | None = None


def extract_think(text: str, mode: str = "whole-text") -> str:
    """Return the content of the first think block in ``text``.

    An unterminated block runs to end-of-text. With no opening tag the
    result follows ``mode``: the whole text, or the empty string. Total
    function; the result is always a substring of the input (or empty).
    """
    if mode not in EXTRACTION_MODES:
        raise ValueError(f"unknown extraction mode: {mode!r}")
    start = text.find(OPEN_TAG)
    if start < 0:
        return text if mode == "whole-text" else ""
    content_start = start + len(OPEN_TAG)
    end = text.find(CLOSE_TAG, content_start)
    if end < 0:
        return text[content_start:]
    return text[content_start:end]


def _think_span(text: str, mode: str) -> tuple[int, int]:
    """Byte range of what extract_think(text, mode) returns."""
    start = text.find(OPEN_TAG)
    if start < 0:
        if mode == "whole-text":
            return (0, len(text.encode("utf-8")))
        return (0, 0)
    content_start = start + len(OPEN_TAG)
    end = text.find(CLOSE_TAG, content_start)
    if end < 0:
        end = len(text)
    byte_start = len(text[:content_start].encode("utf-8"))
    byte_end = byte_start + len(text[content_start:end].encode("utf-8"))
    return (byte_start, byte_end)


def segment_steps(think_content: str) -> list[str]:
    """Split think content into steps at newlines, trimming and dropping blanks."""
    steps = []
    for line in think_content.split("\n"):
        trimmed = line.strip()
        if trimmed:
            steps.append(trimmed)
    return steps


def parse_trace(resp: RawResponse, mode: str = "whole-text") -> ReasoningTrace:
    """Turn a raw response into a trace, honoring pre-split steps if present."""
    if resp.steps is not None:
        return ReasoningTrace(id=resp.id, steps=tuple(resp.steps), source_span=None)
    content = extract_think(resp.text, mode)
    return ReasoningTrace(
        id=resp.id,
        steps=tuple(segment_steps(content)),
        source_span=_think_span(resp.text, mode),
    )


def _parse_line(obj: Any) -> RawResponse:
    """Validate one decoded corpus line. Raises ValueError with a reason."""
    if not isinstance(obj, dict):
        raise ValueError("line is not a JSON object")
    rid = obj.get("id")
    if not isinstance(rid, str) or not rid:
        raise ValueError('missing or empty required field "id"')
    text = obj.get("text")
    if not isinstance(text, str):
        raise ValueError('missing required field "text"')
    meta = obj.get("meta")
    if meta is not None:
        if not isinstance(meta, dict) or not all(
            isinstance(k, str) and isinstance(v, str) for k, v in meta.items()
        ):
            raise ValueError('"meta" must map strings to strings')
    steps = obj.get("steps")
    if steps is not None:
        if not isinstance(steps, list) or not all(isinstance(s, str) for s in steps):
            raise ValueError('"steps" must be a list of strings')
        if any(not s.strip() for s in steps):
            raise ValueError('"steps" entries must be non-empty')
    embeddings = obj.get("embeddings")
    if embeddings is not None:
        if steps is None:
            raise ValueError('"embeddings" requires "steps"')
        if not isinstance(embeddings, list) or len(embeddings) != len(steps):
            raise ValueError('"embeddings" must align 1:1 with "steps"')
        for vec in embeddings:
            if not isinstance(vec, list) or not all(
                isinstance(v, (int, float)) and not isinstance(v, bool) for v in vec
            ):
                raise ValueError('"embeddings" must be lists of numbers')
        embeddings = [[float(v) for v in vec] for vec in embeddings]
    return RawResponse(id=rid, text=text, meta=meta, steps=steps, embeddings=embeddings)


def read_corpus(
    path: str | Path, strict: bool = False
) -> Iterator[RawResponse | CorpusLineError]:
    """Stream corpus records in file order.

    Malformed lines yield :class:`CorpusLineError` values carrying the
    1-based line number; in strict mode they raise :class:`CorpusError`
    instead, as does a duplicate id. Blank lines are skipped.
    """
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"corpus file not found: {path}")
    seen_ids: set[str] = set()
    with path.open("r", encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            rid: str | None = None
            try:
                obj = json.loads(line)
                if isinstance(obj, dict) and isinstance(obj.get("id"), str):
                    rid = obj["id"]
                resp = _parse_line(obj)
            except (json.JSONDecodeError, ValueError) as exc:
                if strict:
                    raise CorpusError(f"line {line_no}: {exc}") from exc
                yield CorpusLineError(line_no=line_no, message=str(exc), id=rid)
                continue
            if strict and resp.id in seen_ids:
                raise CorpusError(f"line {line_no}: duplicate id {resp.id!r}")
            seen_ids.add(resp.id)
            yield resp
