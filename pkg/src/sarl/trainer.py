"""Desk-scale policy-gradient demo that optimizes the structure reward.

A first-order Markov tabular policy over latent reasoning types stands in
for a language model: it is the smallest policy class whose rollouts induce
arbitrary reasoning maps, which isolates the reward's optimizability from
language modeling. Training is plain REINFORCE with group-normalized
advantages: sample G label sequences, score each with the structure reward,
normalize rewards within the group, and ascend sum_g a_g * grad log pi(tau_g).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import ClusterAssignment, ClusterConfig, compact_labels
from .errors import SarlError
from .pipeline import ScoreRequest, score_one
from .reasoning_map import build_map, structure_reward


def _softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - logits.max(axis=-1, keepdims=True)
    exp = np.exp(shifted)
    return exp / exp.sum(axis=-1, keepdims=True)


@dataclass
class TabularPolicy:
    """Markov chain over reasoning types with learnable logits."""

    n_types: int
    horizon: int
    init_logits: np.ndarray = field(default=None)  # type: ignore[assignment]
    trans_logits: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        if self.n_types < 2:
            raise ValueError("n_types must be >= 2")
        if self.horizon < 1:
            raise ValueError("horizon must be >= 1")
        if self.init_logits is None:
            self.init_logits = np.zeros(self.n_types)
        if self.trans_logits is None:
            self.trans_logits = np.zeros((self.n_types, self.n_types))
        self.init_logits = np.asarray(self.init_logits, dtype=np.float64)
        self.trans_logits = np.asarray(self.trans_logits, dtype=np.float64)
        if self.init_logits.shape != (self.n_types,):
            raise ValueError("init_logits must have shape (n_types,)")
        if self.trans_logits.shape != (self.n_types, self.n_types):
            raise ValueError("trans_logits must have shape (n_types, n_types)")

    def entropy(self) -> float:
        """Mean Shannon entropy (nats) over the initial and transition rows."""
        rows = np.vstack([self.init_logits[None, :], self.trans_logits])
        probs = _softmax(rows)
        ent = -(probs * np.log(probs + 1e-300)).sum(axis=1)
        return float(ent.mean())

    def max_logit(self) -> float:
        return float(max(self.init_logits.max(), self.trans_logits.max()))


def _sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF sampling; fixed cumulative order keeps runs reproducible."""
    u = rng.random()
    return int(np.searchsorted(np.cumsum(probs), u, side="right").clip(0, len(probs) - 1))


def rollout(policy: TabularPolicy, rng: np.random.Generator) -> list[int]:
    """Sample one label sequence of length ``horizon`` from the policy."""
    probs_init = _softmax(policy.init_logits)
    probs_trans = _softmax(policy.trans_logits)
    seq = [_sample_index(probs_init, rng)]
    for _ in range(policy.horizon - 1):
        seq.append(_sample_index(probs_trans[seq[-1]], rng))
    return seq


def log_prob(policy: TabularPolicy, seq: list[int]) -> float:
    """Log-probability of a label sequence under the policy."""
    logp_init = np.log(_softmax(policy.init_logits))
    logp_trans = np.log(_softmax(policy.trans_logits))
    total = logp_init[seq[0]]
    for prev, cur in zip(seq, seq[1:]):
        total += logp_trans[prev, cur]
    return float(total)


def grad_log_prob(
    policy: TabularPolicy, seq: list[int]
) -> tuple[np.ndarray, np.ndarray]:
    """Analytic gradient of log pi(seq) w.r.t. (init_logits, trans_logits)."""
    g_init = -_softmax(policy.init_logits)
    g_init[seq[0]] += 1.0
    g_trans = np.zeros_like(policy.trans_logits)
    probs_trans = _softmax(policy.trans_logits)
    for prev, cur in zip(seq, seq[1:]):
        g_trans[prev] -= probs_trans[prev]
        g_trans[prev, cur] += 1.0
    return g_init, g_trans


def group_advantages(rewards: list[float], eps: float) -> list[float]:
    """Center and scale rewards within one rollout group (population std).

    A group whose rewards are (numerically) all equal carries no learning
    signal; its advantages are all zero.
    """
    if len(rewards) < 2:
        raise ValueError("group size must be >= 2")
    arr = np.asarray(rewards, dtype=np.float64)
    mean = arr.mean()
    std = float(arr.std())
    if std < eps * 1e-3:
        return [0.0] * len(rewards)
    return [float(v) for v in (arr - mean) / (std + eps)]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters for the toy training loop."""

    n_types: int = 5
    horizon: int = 12
    group_size: int = 8
    learning_rate: float = 0.1
    iterations: int = 300
    seed: int = 0
    advantage_eps: float = 1e-8
    mode: str = "labels-direct"  # or "full-pipeline"
    embedding_noise: float = 0.0

    def __post_init__(self) -> None:
        if self.group_size < 2:
            raise ValueError("group_size must be >= 2")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be >= 0")
        if self.advantage_eps <= 0:
            raise ValueError("advantage_eps must be > 0")
        if self.mode not in ("labels-direct", "full-pipeline"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.embedding_noise < 0:
            raise ValueError("embedding_noise must be >= 0")


@dataclass(frozen=True)
class IterationRecord:
    iteration: int
    mean_sr: float
    entropy: float
    max_logit: float


def _score_labels_direct(seq: list[int]) -> float:
    labels, k = compact_labels(seq)
    assignment = ClusterAssignment(labels=labels, k=k, method="direct", seed=0)
    return structure_reward(build_map(assignment)).sr


def _score_full_pipeline(
    seq: list[int], cfg: TrainConfig, trace_id: str, rng: np.random.Generator
) -> float:
    """Score through the whole pipeline with one-hot-plus-noise embeddings.

    The cluster-count floor is raised to n_types so distinct types stay
    distinct clusters; at zero noise this provably coincides with scoring
    the labels directly.
    """
    vectors = []
    for z in seq:
        vec = np.zeros(cfg.n_types)
        vec[z] = 1.0
        if cfg.embedding_noise > 0:
            vec = vec + rng.normal(size=cfg.n_types) * cfg.embedding_noise
        vectors.append(tuple(float(v) for v in vec))
    req = ScoreRequest(
        id=trace_id,
        steps=tuple(f"type {z}" for z in seq),
        embeddings=tuple(vectors),
        cluster=ClusterConfig(method="kmeans", k_floor=cfg.n_types),
        seed=cfg.seed,
    )
    return score_one(req).score.sr


def train(cfg: TrainConfig, csv_path: str | Path | None = None) -> list[IterationRecord]:
    """Run the REINFORCE loop; optionally stream a CSV log for plotting."""
    policy = TabularPolicy(n_types=cfg.n_types, horizon=cfg.horizon)
    rng = np.random.default_rng(cfg.seed)
    log: list[IterationRecord] = []
    writer = None
    handle = None
    if csv_path is not None:
        handle = Path(csv_path).open("w", newline="", encoding="utf-8")
        writer = csv.writer(handle)
        writer.writerow(["iteration", "mean_sr", "entropy"])
    try:
        for it in range(cfg.iterations):
            seqs = [rollout(policy, rng) for _ in range(cfg.group_size)]
            if cfg.mode == "labels-direct":
                rewards = [_score_labels_direct(s) for s in seqs]
            else:
                rewards = [
                    _score_full_pipeline(s, cfg, f"iter{it}-rollout{g}", rng)
                    for g, s in enumerate(seqs)
                ]
            advantages = group_advantages(rewards, cfg.advantage_eps)
            g_init = np.zeros_like(policy.init_logits)
            g_trans = np.zeros_like(policy.trans_logits)
            for adv, seq in zip(advantages, seqs):
                gi, gt = grad_log_prob(policy, seq)
                g_init += adv * gi
                g_trans += adv * gt
            policy.init_logits = policy.init_logits + cfg.learning_rate * g_init
            policy.trans_logits = policy.trans_logits + cfg.learning_rate * g_trans
            if not (
                np.isfinite(policy.init_logits).all()
                and np.isfinite(policy.trans_logits).all()
            ):
                raise SarlError(f"non-finite logits at iteration {it}")
            record = IterationRecord(
                iteration=it,
                mean_sr=float(np.mean(rewards)),
                entropy=policy.entropy(),
                max_logit=policy.max_logit(),
            )
            log.append(record)
            if writer is not None:
                writer.writerow([record.iteration, record.mean_sr, record.entropy])
    finally:
        if handle is not None:
            handle.close()
    return log


def improvement(log: list[IterationRecord], window: int = 20) -> float:
    """Mean SR of the final window minus mean SR of the first window."""
    if len(log) < 2 * window:
        raise ValueError(f"log must cover at least {2 * window} iterations")
    first = float(np.mean([r.mean_sr for r in log[:window]]))
    last = float(np.mean([r.mean_sr for r in log[-window:]]))
    return last - first
