"""Shared fixtures: a deterministic mock embedding endpoint and corpora."""

from __future__ import annotations

import hashlib
import json
import random
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np
import pytest


@dataclass
class MockEmbedServer:
    """In-process embedding endpoint speaking the /v1/embeddings schema.

    Vectors are a pure function of the input text (hash-seeded Gaussian,
    dimension ``dim``), so every client sees identical embeddings across
    requests, batch splits, and runs.
    """

    dim: int = 16
    shuffle_latency: bool = False
    fail_all: bool = False
    fail_first: int = 0
    requests: list[list[str]] = field(default_factory=list)
    _lock: threading.Lock = field(default_factory=threading.Lock)
    _server: ThreadingHTTPServer | None = None

    @property
    def url(self) -> str:
        assert self._server is not None
        return f"http://127.0.0.1:{self._server.server_port}/v1/embeddings"

    def vector(self, text: str) -> list[float]:
        digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
        rng = np.random.default_rng(int.from_bytes(digest, "big"))
        return rng.normal(size=self.dim).tolist()

    def reset(self) -> None:
        with self._lock:
            self.requests.clear()
            self.fail_all = False
            self.fail_first = 0
            self.shuffle_latency = False

    def start(self) -> MockEmbedServer:
        outer = self

        class Handler(BaseHTTPRequestHandler):
            def do_POST(self) -> None:
                length = int(self.headers.get("Content-Length", 0))
                body = json.loads(self.rfile.read(length))
                texts = body["input"]
                with outer._lock:
                    outer.requests.append(list(texts))
                    fail = outer.fail_all
                    if not fail and outer.fail_first > 0:
                        outer.fail_first -= 1
                        fail = True
                if fail:
                    self.send_response(503)
                    self.send_header("Content-Length", "0")
                    self.end_headers()
                    return
                if outer.shuffle_latency:
                    time.sleep(random.uniform(0.0, 0.02))
                rows = [
                    {"index": i, "embedding": outer.vector(t)}
                    for i, t in enumerate(texts)
                ]
                # out-of-order rows exercise the client's index sort
                if outer.shuffle_latency:
                    random.shuffle(rows)
                payload = json.dumps({"data": rows}).encode("utf-8")
                self.send_response(200)
                self.send_header("Content-Type", "application/json")
                self.send_header("Content-Length", str(len(payload)))
                self.end_headers()
                self.wfile.write(payload)

            def log_message(self, *args: object) -> None:
                pass

        self._server = ThreadingHTTPServer(("127.0.0.1", 0), Handler)
        threading.Thread(target=self._server.serve_forever, daemon=True).start()
        return self

    def stop(self) -> None:
        if self._server is not None:
            self._server.shutdown()
            self._server.server_close()


@pytest.fixture(scope="session")
def embed_server() -> MockEmbedServer:
    server = MockEmbedServer().start()
    yield server
    server.stop()


@pytest.fixture()
def fresh_embed_server(embed_server: MockEmbedServer) -> MockEmbedServer:
    embed_server.reset()
    return embed_server


def make_corpus_lines(n: int, seed: int = 0, max_steps: int = 9) -> list[str]:
    """Synthetic think-block corpus with a small recurring phrase pool."""
    rng = np.random.default_rng(seed)
    phrases = [
        "restate the goal",
        "expand the expression",
        "substitute the value",
        "check the boundary case",
        "simplify both sides",
        "compare with the target",
        "backtrack and retry",
        "verify the arithmetic",
    ]
    lines = []
    for i in range(n):
        t = int(rng.integers(3, max_steps + 1))
        steps = [phrases[int(rng.integers(len(phrases)))] for _ in range(t)]
        text = "<think>" + "\n".join(steps) + "</think>the answer"
        lines.append(json.dumps({"id": f"trace-{i:04d}", "text": text}))
    return lines


@pytest.fixture()
def corpus_file(tmp_path):
    def write(n: int, seed: int = 0, max_steps: int = 9, name: str = "corpus.jsonl"):
        path = tmp_path / name
        path.write_text("\n".join(make_corpus_lines(n, seed, max_steps)) + "\n")
        return path

    return write
