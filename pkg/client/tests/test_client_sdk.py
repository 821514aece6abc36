"""Client SDK tests against a locally started scoring service.

The service subprocess and the deterministic mock embedding endpoint are
managed here so this suite stays independent of the engine's own tests.
"""

import hashlib
import json
import math
import os
import random
import socket
import subprocess
import sys
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import httpx
import pytest

from sarl_client import (
    ClientConfig,
    ProtocolError,
    RewardClient,
    TransportError,
    as_reward_fn,
)
from sarl_client.client import _trace_id


def start_json_server(handler_cls) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler_cls)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    return server


@pytest.fixture(scope="module")
def embed_url():
    class Handler(BaseHTTPRequestHandler):
        dim = 16

        def do_POST(self):
            length = int(self.headers.get("Content-Length", 0))
            texts = json.loads(self.rfile.read(length))["input"]
            rows = []
            for i, text in enumerate(texts):
                digest = hashlib.blake2b(text.encode("utf-8"), digest_size=8).digest()
                rng = random.Random(int.from_bytes(digest, "big"))
                vec = [rng.gauss(0.0, 1.0) for _ in range(self.dim)]
                rows.append({"index": i, "embedding": vec})
            payload = json.dumps({"data": rows}).encode("utf-8")
            self.send_response(200)
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(payload)))
            self.end_headers()
            self.wfile.write(payload)

        def log_message(self, *args):
            pass

    server = start_json_server(Handler)
    yield f"http://127.0.0.1:{server.server_port}/v1/embeddings"
    server.shutdown()
    server.server_close()


def free_port() -> int:
    with socket.socket() as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


@pytest.fixture(scope="module")
def service(embed_url):
    port = free_port()
    proc = subprocess.Popen(
        [sys.executable, "-m", "sarl.cli", "serve", "--bind", f"127.0.0.1:{port}"],
        env=dict(os.environ, SARL_EMBED_URL=embed_url),
        stdout=subprocess.PIPE,
        stderr=subprocess.PIPE,
    )
    base_url = f"http://127.0.0.1:{port}"
    deadline = time.monotonic() + 20
    while True:
        try:
            if httpx.get(base_url + "/healthz", timeout=1.0).status_code == 200:
                break
        except httpx.TransportError:
            pass
        if time.monotonic() > deadline or proc.poll() is not None:
            proc.kill()
            _, err = proc.communicate(timeout=5)
            raise RuntimeError(f"service did not come up: {err.decode()[-800:]}")
        time.sleep(0.1)
    yield base_url
    proc.terminate()
    proc.wait(timeout=10)


def make_texts(n: int, seed: int = 0) -> list[str]:
    rng = random.Random(seed)
    phrases = [
        "restate the goal", "expand the expression", "substitute the value",
        "check the boundary case", "simplify both sides", "compare with the target",
        "backtrack and retry", "verify the arithmetic",
    ]
    texts = []
    for _ in range(n):
        steps = rng.choices(phrases, k=rng.randint(3, 9))
        texts.append("<think>" + "\n".join(steps) + "</think>the answer")
    return texts


def test_score_group_matches_cli(service, embed_url, tmp_path):
    start = time.perf_counter()
    texts = make_texts(50, seed=21)
    corpus = tmp_path / "fixture.jsonl"
    corpus.write_text(
        "\n".join(json.dumps({"id": _trace_id(t), "text": t}) for t in texts) + "\n"
    )
    out = tmp_path / "cli.jsonl"
    proc = subprocess.run(
        [
            sys.executable, "-m", "sarl.cli", "score",
            "--input", str(corpus), "--output", str(out), "--seed", "4",
        ],
        capture_output=True,
        text=True,
        env=dict(os.environ, SARL_EMBED_URL=embed_url),
    )
    assert proc.returncode == 0, proc.stderr
    cli_sr = {}
    for line in out.read_text().splitlines():
        obj = json.loads(line)
        cli_sr[obj["id"]] = obj["sr"]

    with RewardClient(ClientConfig(base_url=service, seed=4)) as client:
        rewards = client.score_group(texts)

    assert len(rewards) == len(texts)
    worst = max(abs(r - cli_sr[_trace_id(t)]) for r, t in zip(rewards, texts))
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-12 and elapsed < 30.0
    print(
        f"acceptance client-differential: {'PASS' if ok else 'FAIL'} "
        f"50-trace group equals CLI scores (max |diff| = {worst:.2e} <= 1e-12) "
        f"({elapsed:.2f}s < 30s)"
    )
    assert worst <= 1e-12
    assert elapsed < 30.0


def test_empty_trace_scores_zero(service):
    with RewardClient(ClientConfig(base_url=service)) as client:
        assert client.score_group([""]) == [0.0]


def test_same_inputs_same_scores(service):
    texts = make_texts(6, seed=5)
    with RewardClient(ClientConfig(base_url=service, seed=9)) as client:
        first = client.score_group(texts)
        second = client.score_group(texts)
    assert first == second
    assert all(0.0 <= r <= 1.0 for r in first)


def test_score_independent_of_group_position(service):
    texts = make_texts(4, seed=6)
    with RewardClient(ClientConfig(base_url=service)) as client:
        forward = client.score_group(texts)
        backward = client.score_group(list(reversed(texts)))
    assert forward == list(reversed(backward))


def test_options_override_defaults(service):
    texts = make_texts(4, seed=7)
    with RewardClient(ClientConfig(base_url=service, seed=1)) as client:
        base = client.score_group(texts)
        hdb = client.score_group(texts, options={"clustering": "hdbscan"})
    assert len(base) == len(hdb) == 4


def test_empty_group_is_empty():
    # no service needed: an empty group never leaves the process
    client = RewardClient(ClientConfig(base_url="http://127.0.0.1:9"))
    assert client.score_group([]) == []


def test_reward_fn_binding(service):
    reward_fn = as_reward_fn(ClientConfig(base_url=service, seed=2))
    texts = make_texts(2, seed=8)
    first = reward_fn(texts)
    second = reward_fn(texts)
    assert len(first) == 2
    assert first == second


def test_service_down_raises_transport_error():
    cfg = ClientConfig(
        base_url=f"http://127.0.0.1:{free_port()}",
        retry_budget=2,
        retry_base_delay=0.01,
    )
    with RewardClient(cfg) as client:
        with pytest.raises(TransportError):
            client.score_group(["<think>a\nb</think>"])


class CannedHandler(BaseHTTPRequestHandler):
    status = 200
    body: dict = {}

    def do_POST(self):
        length = int(self.headers.get("Content-Length", 0))
        self.rfile.read(length)
        payload = json.dumps(self.body).encode("utf-8")
        self.send_response(self.status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def log_message(self, *args):
        pass


def canned_service(status: int, body: dict) -> ThreadingHTTPServer:
    handler = type("Handler", (CannedHandler,), {"status": status, "body": body})
    return start_json_server(handler)


def test_item_error_uses_fallback_with_warning():
    body = {
        "results": [
            {"id": "t-x", "error": {"code": "internal", "message": "boom", "retryable": False}}
        ]
    }
    server = canned_service(200, body)
    try:
        cfg = ClientConfig(
            base_url=f"http://127.0.0.1:{server.server_port}", fallback=float("nan")
        )
        with RewardClient(cfg) as client:
            with pytest.warns(UserWarning, match="boom"):
                rewards = client.score_group(["anything"])
        assert math.isnan(rewards[0])
    finally:
        server.shutdown()
        server.server_close()


def test_rejected_request_raises_protocol_error():
    server = canned_service(400, {"error": {"message": "bad request"}})
    try:
        cfg = ClientConfig(base_url=f"http://127.0.0.1:{server.server_port}")
        with RewardClient(cfg) as client:
            with pytest.raises(ProtocolError):
                client.score_group(["x"])
    finally:
        server.shutdown()
        server.server_close()


def test_result_count_mismatch_raises_protocol_error():
    server = canned_service(200, {"results": []})
    try:
        cfg = ClientConfig(base_url=f"http://127.0.0.1:{server.server_port}")
        with RewardClient(cfg) as client:
            with pytest.raises(ProtocolError):
                client.score_group(["x"])
    finally:
        server.shutdown()
        server.server_close()


def test_persistent_500_raises_transport_error():
    server = canned_service(500, {"error": {"message": "down"}})
    try:
        cfg = ClientConfig(
            base_url=f"http://127.0.0.1:{server.server_port}",
            retry_budget=2,
            retry_base_delay=0.01,
        )
        with RewardClient(cfg) as client:
            with pytest.raises(TransportError):
                client.score_group(["x"])
    finally:
        server.shutdown()
        server.server_close()


def test_config_validation():
    for bad in (
        dict(timeout=0.0),
        dict(retry_budget=0),
        dict(retry_base_delay=0.0),
        dict(clustering="other"),
        dict(seed=-1),
    ):
        with pytest.raises(ValueError):
            ClientConfig(**bad)


def test_trace_ids_are_stable_and_content_addressed():
    assert _trace_id("abc") == _trace_id("abc")
    assert _trace_id("abc") != _trace_id("abd")
    assert _trace_id("abc").startswith("t-")
