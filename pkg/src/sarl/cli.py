"""Batch scoring, corpus statistics, graph export, toy training, serving.

Exit codes: 0 on full success, 2 when some items errored but the run
completed, 1 on fatal errors (including usage errors). Scoring output is
order-preserving and byte-identical across reruns and parallelism levels:
every record is serialized with sorted keys and no wall-clock fields.
"""

from __future__ import annotations

import json
import statistics
import sys
import time
from dataclasses import asdict
from pathlib import Path

import click

from .cluster import ClusterAssignment, ClusterConfig
from .embed import EmbedderConfig, EmbeddingClient
from .errors import SarlError, error_info
from .pipeline import (
    ScoreError,
    ScoreRequest,
    ScoreResult,
    request_from_response,
    result_to_json_line,
    score_batch,
)
from .reasoning_map import build_map, map_from_edges, to_dot
from .trace_ingest import CorpusLineError, RawResponse, read_corpus
from .trainer import TrainConfig, improvement, train


@click.group()
def cli() -> None:
    """Structure-reward scoring tools."""


def _cluster_config(clustering: str, seed: int) -> ClusterConfig:
    return ClusterConfig(method=clustering, seed=seed)


def _load_records(
    input_path: str, strict: bool
) -> list[RawResponse | CorpusLineError]:
    return list(read_corpus(input_path, strict=strict))


@cli.command("score")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--output", "output_path", required=True, type=click.Path())
@click.option("--clustering", type=click.Choice(["kmeans", "hdbscan"]), default="kmeans")
@click.option("--seed", type=click.IntRange(min=0), default=0)
@click.option("--embed-url", default=None, help="Embedding endpoint URL.")
@click.option("--embed-model", default=None, help="Embedding model name.")
@click.option("--parallelism", type=click.IntRange(min=1), default=1)
@click.option("--strict", is_flag=True, help="Abort on malformed lines or duplicate ids.")
@click.option("--timings", is_flag=True, help="Include per-stage wall times (breaks byte determinism).")
def cmd_score(
    input_path: str,
    output_path: str,
    clustering: str,
    seed: int,
    embed_url: str | None,
    embed_model: str | None,
    parallelism: int,
    strict: bool,
    timings: bool,
) -> None:
    """Score a JSONL corpus, one result line per input line, in order."""
    started = time.time()
    records = _load_records(input_path, strict)
    cluster = _cluster_config(clustering, seed)
    embed_cfg = EmbedderConfig.from_env(endpoint_url=embed_url, model_name=embed_model)

    items: list[ScoreRequest | ScoreError] = []
    for rec in records:
        if isinstance(rec, CorpusLineError):
            items.append(
                ScoreError(
                    id=rec.id if rec.id is not None else f"line-{rec.line_no}",
                    error={
                        "code": "corpus",
                        "message": f"line {rec.line_no}: {rec.message}",
                        "retryable": False,
                    },
                )
            )
        else:
            items.append(request_from_response(rec, cluster=cluster, seed=seed))

    reqs = [i for i in items if isinstance(i, ScoreRequest)]
    with EmbeddingClient(embed_cfg) as client:
        scored = iter(score_batch(reqs, parallelism=parallelism, client=client))
        results = [i if isinstance(i, ScoreError) else next(scored) for i in items]

    counts = {"ok": 0, "degenerate": 0, "error": 0}
    out_file = Path(output_path)
    with out_file.open("w", encoding="utf-8") as fh:
        for item in results:
            if isinstance(item, ScoreResult):
                counts["degenerate" if item.score.degenerate else "ok"] += 1
            else:
                counts["error"] += 1
            fh.write(result_to_json_line(item, include_timing=timings) + "\n")

    manifest = {
        "input": str(input_path),
        "output": str(output_path),
        "cluster_config": asdict(cluster),
        "seed": seed,
        "embedder": {
            "endpoint_url": embed_cfg.endpoint_url,
            "model_name": embed_cfg.model_name,
            "request_batch_size": embed_cfg.request_batch_size,
        },
        "parallelism": parallelism,
        "started_at": started,
        "finished_at": time.time(),
        "counts": counts,
    }
    manifest_path = out_file.with_name(out_file.name + ".manifest.json")
    manifest_path.write_text(json.dumps(manifest, indent=2) + "\n", encoding="utf-8")
    click.echo(
        f"scored {len(results)} traces: {counts['ok']} ok, "
        f"{counts['degenerate']} degenerate, {counts['error']} errors",
        err=True,
    )
    if counts["error"]:
        sys.exit(2)


_STAT_FIELDS = ("sr", "c", "l", "num_steps", "num_nodes", "num_edges")


@cli.command("stats")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--csv", "as_csv", is_flag=True, help="Emit one CSV header + one data row.")
def cmd_stats(input_path: str, as_csv: bool) -> None:
    """Summarize a score-result JSONL file."""
    path = Path(input_path)
    if not path.is_file():
        raise click.ClickException(f"input not found: {input_path}")
    rows = []
    errors = 0
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip():
            continue
        obj = json.loads(line)
        if "error" in obj:
            errors += 1
        else:
            rows.append(obj)
    if not rows:
        raise click.ClickException("no scored records in input")

    def describe(values: list[float]) -> tuple[float, float, float]:
        if not values:
            return (float("nan"),) * 3
        return (
            statistics.mean(values),
            statistics.median(values),
            statistics.pstdev(values),
        )

    degenerate = sum(1 for r in rows if r["degenerate"])
    summary: dict[str, float] = {
        "count": len(rows),
        "errors": errors,
        "degenerate_fraction": degenerate / len(rows),
    }
    for name in _STAT_FIELDS:
        values = [float(r[name]) for r in rows if r[name] is not None]
        mean, median, stddev = describe(values)
        summary[f"{name}_mean"] = mean
        summary[f"{name}_median"] = median
        summary[f"{name}_stddev"] = stddev

    if as_csv:
        keys = list(summary)
        click.echo(",".join(keys))
        click.echo(",".join(str(summary[k]) for k in keys))
    else:
        click.echo(f"count: {len(rows)}  errors: {errors}")
        click.echo(f"degenerate_fraction: {summary['degenerate_fraction']:.6g}")
        for name in _STAT_FIELDS:
            click.echo(
                f"{name}: mean={summary[f'{name}_mean']:.6g} "
                f"median={summary[f'{name}_median']:.6g} "
                f"stddev={summary[f'{name}_stddev']:.6g}"
            )


@cli.command("graph")
@click.option("--input", "input_path", required=True, type=click.Path())
@click.option("--id", "trace_id", required=True)
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--clustering", type=click.Choice(["kmeans", "hdbscan"]), default="kmeans")
@click.option("--seed", type=click.IntRange(min=0), default=0)
@click.option("--embed-url", default=None)
@click.option("--embed-model", default=None)
def cmd_graph(
    input_path: str,
    trace_id: str,
    out_path: str,
    clustering: str,
    seed: int,
    embed_url: str | None,
    embed_model: str | None,
) -> None:
    """Export one trace's reasoning map as a DOT file."""
    record = None
    for rec in read_corpus(input_path):
        if isinstance(rec, RawResponse) and rec.id == trace_id:
            record = rec
            break
    if record is None:
        raise click.ClickException(f"id {trace_id!r} not found in {input_path}")
    req = request_from_response(
        record, cluster=_cluster_config(clustering, seed), seed=seed
    )
    embed_cfg = EmbedderConfig.from_env(endpoint_url=embed_url, model_name=embed_model)
    with EmbeddingClient(embed_cfg) as client:
        try:
            result = score_batch([req], client=client)[0]
        except SarlError as exc:
            raise click.ClickException(error_info(exc)["message"]) from exc
    if isinstance(result, ScoreError):
        raise click.ClickException(result.error["message"])
    if result.k == 0:
        dot = to_dot(map_from_edges(0, []))
    else:
        assignment = ClusterAssignment(
            labels=result.assignments, k=result.k,
            method=result.method, seed=result.seed,
        )
        dot = to_dot(build_map(assignment), member_counts=assignment.member_counts())
    Path(out_path).write_text(dot, encoding="utf-8")
    click.echo(f"wrote {out_path}", err=True)


@cli.command("toy-train")
@click.option("--n-types", type=click.IntRange(min=2), default=5)
@click.option("--horizon", type=click.IntRange(min=1), default=12)
@click.option("--group-size", type=click.IntRange(min=2), default=8)
@click.option("--lr", type=float, default=0.1)
@click.option("--iterations", type=click.IntRange(min=1), default=300)
@click.option("--seed", type=click.IntRange(min=0), default=0)
@click.option("--mode", type=click.Choice(["labels-direct", "full-pipeline"]), default="labels-direct")
@click.option("--noise", type=float, default=0.0, help="Embedding noise scale (full-pipeline mode).")
@click.option("--csv", "csv_path", type=click.Path(), default=None, help="Write per-iteration log here.")
def cmd_toy_train(
    n_types: int,
    horizon: int,
    group_size: int,
    lr: float,
    iterations: int,
    seed: int,
    mode: str,
    noise: float,
    csv_path: str | None,
) -> None:
    """Optimize the structure reward with a tabular policy."""
    cfg = TrainConfig(
        n_types=n_types,
        horizon=horizon,
        group_size=group_size,
        learning_rate=lr,
        iterations=iterations,
        seed=seed,
        mode=mode,
        embedding_noise=noise,
    )
    log = train(cfg, csv_path=csv_path)
    window = min(20, max(1, len(log) // 2))
    first = statistics.mean(r.mean_sr for r in log[:window])
    last = statistics.mean(r.mean_sr for r in log[-window:])
    click.echo(
        f"iterations={len(log)} first{window}_mean_sr={first:.4f} "
        f"final{window}_mean_sr={last:.4f} delta={last - first:+.4f}"
    )
    if len(log) >= 40:
        click.echo(f"improvement(window=20)={improvement(log):+.4f}")


@cli.command("serve")
@click.option("--bind", default=None, help="host:port (overrides SARL_BIND_ADDR).")
@click.option("--config", "config_file", type=click.Path(), default=None)
@click.option("--embed-url", default=None)
@click.option("--embed-model", default=None)
def cmd_serve(
    bind: str | None,
    config_file: str | None,
    embed_url: str | None,
    embed_model: str | None,
) -> None:
    """Run the HTTP scoring service."""
    import uvicorn
    from dataclasses import replace

    from .service import create_app, load_service_config

    cfg = load_service_config(config_file)
    if bind is not None:
        host, _, port = bind.rpartition(":")
        if not port.isdigit():
            raise click.ClickException(f"--bind must be host:port, got {bind!r}")
        cfg = replace(cfg, host=host, port=int(port))
    if embed_url is not None:
        cfg = replace(cfg, embedder=replace(cfg.embedder, endpoint_url=embed_url))
    if embed_model is not None:
        cfg = replace(cfg, embedder=replace(cfg.embedder, model_name=embed_model))
    uvicorn.run(create_app(cfg), host=cfg.host, port=cfg.port, log_level="info")


def main() -> None:
    """Entry point; usage errors exit 1, reserving 2 for item-level failures."""
    try:
        cli.main(standalone_mode=False)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except SarlError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    main()
