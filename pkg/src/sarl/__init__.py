"""Label-free structure rewards for chain-of-thought traces.

Convert a trace into ordered reasoning steps, embed and cluster the steps
into latent reasoning types, build the per-response reasoning map, and
score its small-world topology: SR = C/2 + 1/(1+L). Ships as a library,
a batch CLI, an HTTP scoring service, and a desk-scale trainer showing
the reward is optimizable.
"""

from .cluster import (
    ClusterAssignment,
    ClusterConfig,
    choose_k,
    cluster_trace,
    compact_labels,
    hdbscan,
    kmeans,
)
from .embed import (
    EmbedderConfig,
    EmbeddingClient,
    StepEmbedding,
    normalize,
    passthrough,
)
from .errors import (
    CorpusError,
    DimensionMismatchError,
    InvalidRequestError,
    ProtocolError,
    SarlError,
    TransportError,
    ZeroVectorError,
)
from .pipeline import (
    ScoreError,
    ScoreRequest,
    ScoreResult,
    request_from_response,
    result_to_json_line,
    score_batch,
    score_one,
    trace_seed,
)
from .reasoning_map import (
    ReasoningMap,
    StructureScore,
    avg_path_length,
    build_map,
    clustering_coefficient,
    map_from_edges,
    structure_reward,
    to_dot,
)
from .trace_ingest import (
    CorpusLineError,
    RawResponse,
    ReasoningTrace,
    extract_think,
    parse_trace,
    read_corpus,
    segment_steps,
)
from .trainer import (
    IterationRecord,
    TabularPolicy,
    TrainConfig,
    grad_log_prob,
    group_advantages,
    log_prob,
    rollout,
    train,
)

__version__ = "0.1.0"

__all__ = [
    "ClusterAssignment",
    "ClusterConfig",
    "CorpusError",
    "CorpusLineError",
    "DimensionMismatchError",
    "EmbedderConfig",
    "EmbeddingClient",
    "InvalidRequestError",
    "IterationRecord",
    "ProtocolError",
    "RawResponse",
    "ReasoningMap",
    "ReasoningTrace",
    "SarlError",
    "ScoreError",
    "ScoreRequest",
    "ScoreResult",
    "StepEmbedding",
    "StructureScore",
    "TabularPolicy",
    "TrainConfig",
    "TransportError",
    "ZeroVectorError",
    "avg_path_length",
    "build_map",
    "choose_k",
    "cluster_trace",
    "clustering_coefficient",
    "compact_labels",
    "extract_think",
    "grad_log_prob",
    "group_advantages",
    "hdbscan",
    "kmeans",
    "log_prob",
    "map_from_edges",
    "normalize",
    "parse_trace",
    "passthrough",
    "read_corpus",
    "request_from_response",
    "result_to_json_line",
    "rollout",
    "score_batch",
    "score_one",
    "segment_steps",
    "structure_reward",
    "to_dot",
    "trace_seed",
    "train",
]
