"""Service configuration from defaults, environment, and a key=value file.

Precedence, lowest to highest: built-in defaults, environment variables
(SARL_BIND_ADDR, SARL_EMBED_URL, SARL_EMBED_MODEL), then an optional config
file of ``key = value`` lines.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path

from ..cluster import ClusterConfig
from ..embed import EmbedderConfig

ENV_BIND_ADDR = "SARL_BIND_ADDR"

DEFAULT_BIND = "127.0.0.1:8100"


@dataclass(frozen=True)
class ServiceConfig:
    """Bind address, embedder connection, scoring defaults, and limits."""

    host: str = "127.0.0.1"
    port: int = 8100
    embedder: EmbedderConfig = field(default_factory=EmbedderConfig)
    cluster: ClusterConfig = field(default_factory=ClusterConfig)
    max_body_bytes: int = 8_000_000
    max_traces: int = 512
    parallelism: int = 4
    health_ttl: float = 5.0

    def __post_init__(self) -> None:
        if self.max_body_bytes < 1:
            raise ValueError("max_body_bytes must be positive")
        if self.max_traces < 1:
            raise ValueError("max_traces must be positive")
        if self.parallelism < 1:
            raise ValueError("parallelism must be positive")
        if not 0 < self.health_ttl <= 5.0:
            raise ValueError("health_ttl must be in (0, 5] seconds")


def _parse_bind(addr: str) -> tuple[str, int]:
    host, sep, port = addr.rpartition(":")
    if not sep or not port.isdigit():
        raise ValueError(f"bind address must be host:port, got {addr!r}")
    return host, int(port)


def parse_config_file(path: str | Path) -> dict[str, str]:
    """Read ``key = value`` lines; '#' starts a comment, blanks are skipped."""
    values: dict[str, str] = {}
    for line_no, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ValueError(f"config line {line_no}: expected key = value")
        values[key.strip()] = value.strip()
    return values


def load_service_config(config_file: str | Path | None = None) -> ServiceConfig:
    """Resolve the effective config: defaults, then env, then file."""
    bind = os.environ.get(ENV_BIND_ADDR, DEFAULT_BIND)
    embedder = EmbedderConfig.from_env()
    cfg = ServiceConfig(host=_parse_bind(bind)[0], port=_parse_bind(bind)[1],
                        embedder=embedder)
    if config_file is None:
        return cfg
    values = parse_config_file(config_file)
    if "bind_addr" in values:
        host, port = _parse_bind(values.pop("bind_addr"))
        cfg = replace(cfg, host=host, port=port)
    if "embed_url" in values:
        cfg = replace(cfg, embedder=replace(cfg.embedder, endpoint_url=values.pop("embed_url")))
    if "embed_model" in values:
        cfg = replace(cfg, embedder=replace(cfg.embedder, model_name=values.pop("embed_model")))
    if "clustering" in values:
        cfg = replace(cfg, cluster=replace(cfg.cluster, method=values.pop("clustering")))
    if "seed" in values:
        cfg = replace(cfg, cluster=replace(cfg.cluster, seed=int(values.pop("seed"))))
    for int_key in ("max_body_bytes", "max_traces", "parallelism"):
        if int_key in values:
            cfg = replace(cfg, **{int_key: int(values.pop(int_key))})
    if "health_ttl" in values:
        cfg = replace(cfg, health_ttl=float(values.pop("health_ttl")))
    if values:
        raise ValueError(f"unknown config keys: {sorted(values)}")
    return cfg
