"""Per-response clustering of step embeddings into latent reasoning types.

Two methods are supported, mirroring the two trace regimes they suit:
KMeans with k ~= sqrt(M) for regular step structure, and density-based
HDBSCAN (which infers K itself) for heterogeneous structure.  Both are
deterministic under a fixed seed: KMeans uses a counter-based RNG for its
seeding and breaks all distance ties by lowest index, and the HDBSCAN
implementation orders its spanning-tree edges the same way.

Cluster labels are always compacted to the dense range [0, K) with every
id occupied, because map construction requires each node to be a
non-empty reasoning type.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatchError, InvalidRequestError
from ._hdbscan import hdbscan_labels

__all__ = [
    "ClusterAssignment",
    "ClusterConfig",
    "choose_k",
    "kmeans",
    "hdbscan",
    "cluster_trace",
    "compact_labels",
]


@dataclass(frozen=True)
class ClusterConfig:
    """Settings for per-trace clustering.

    ``k_floor`` is the lower clamp of the sqrt(M) cluster-count rule;
    ``noise_policy`` controls whether HDBSCAN noise points merge into one
    extra cluster ("merged", default) or become singletons ("singletons").
    """

    method: str = "kmeans"  # "kmeans" | "hdbscan"
    kmeans_max_iter: int = 100
    kmeans_tol: float = 1e-8
    seed: int = 0
    k_floor: int = 2
    noise_policy: str = "merged"

    def __post_init__(self) -> None:
        if self.method not in ("kmeans", "hdbscan"):
            raise ValueError(f"unknown clustering method {self.method!r}")
        if self.kmeans_max_iter < 1:
            raise ValueError("kmeans_max_iter must be >= 1")
        if self.kmeans_tol <= 0:
            raise ValueError("kmeans_tol must be > 0")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.k_floor < 1:
            raise ValueError("k_floor must be >= 1")
        if self.noise_policy not in ("merged", "singletons"):
            raise ValueError(f"unknown noise_policy {self.noise_policy!r}")


@dataclass(frozen=True)
class ClusterAssignment:
    """Per-step reasoning-type labels, compacted to [0, k)."""

    labels: tuple[int, ...]
    k: int
    method: str
    seed: int

    def __post_init__(self) -> None:
        if self.k < 1:
            raise ValueError("k must be >= 1")
        used = set(self.labels)
        if used != set(range(self.k)):
            raise ValueError(f"labels must cover exactly [0, {self.k}), got {sorted(used)}")

    def member_counts(self) -> list[int]:
        counts = [0] * self.k
        for z in self.labels:
            counts[z] += 1
        return counts


def compact_labels(labels: Sequence[int]) -> tuple[tuple[int, ...], int]:
    """Relabel by first occurrence so ids form the dense range [0, K)."""
    remap: dict[int, int] = {}
    out = []
    for z in labels:
        if z not in remap:
            remap[z] = len(remap)
        out.append(remap[z])
    return tuple(out), len(remap)


def choose_k(m: int, floor: int = 2) -> int:
    """Cluster count for an m-step trace: round(sqrt(m)) clamped to [floor, m].

    A single step always gets one cluster.  The default floor of 2 exists
    because one cluster yields an edgeless, degenerate map.
    """
    if m < 1:
        raise InvalidRequestError("step count must be >= 1")
    if m == 1:
        return 1
    k = int(round(math.sqrt(m)))
    return min(max(k, floor), m)


def _as_points(points: Sequence[Sequence[float]] | np.ndarray) -> np.ndarray:
    arr = np.asarray(points, dtype=np.float64)
    if arr.ndim != 2:
        raise DimensionMismatchError("points must be a 2-d array of equal-length vectors")
    return arr


def _canonical_order(x: np.ndarray) -> np.ndarray:
    """Indices that sort rows lexicographically (first coordinate primary).

    Clustering runs in this canonical order, so every order-sensitive
    step (seeding draws, tie-breaking, summation) depends only on the
    multiset of points, never on their input order.
    """
    return np.lexsort(x.T[::-1])


def _pairwise_sq_dists(x: np.ndarray, centers: np.ndarray) -> np.ndarray:
    # (k, n) squared distances via broadcasting; avoids BLAS so the
    # summation order is fixed and results are reproducible
    diff = x[np.newaxis, :, :] - centers[:, np.newaxis, :]
    return np.sum(diff * diff, axis=2)


def _kmeans_pp_init(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding; once all remaining distances are zero (duplicate
    points), further centers repeat the lowest-index point."""
    n = x.shape[0]
    centers = np.empty((k, x.shape[1]), dtype=np.float64)
    first = int(rng.integers(n))
    centers[0] = x[first]
    d2 = np.sum((x - centers[0]) ** 2, axis=1)
    for j in range(1, k):
        total = float(d2.sum())
        if total <= 0.0:
            idx = 0
        else:
            r = rng.random() * total
            idx = int(np.searchsorted(np.cumsum(d2), r, side="right"))
            idx = min(idx, n - 1)
        centers[j] = x[idx]
        d2 = np.minimum(d2, np.sum((x - centers[j]) ** 2, axis=1))
    return centers


def kmeans(
    points: Sequence[Sequence[float]] | np.ndarray,
    k: int,
    cfg: ClusterConfig,
) -> ClusterAssignment:
    """Lloyd's algorithm with seeded k-means++ initialization.

    Iterates until the largest centroid shift drops below ``kmeans_tol``
    or ``kmeans_max_iter`` is reached.  Assignment ties break toward the
    lowest centroid index; clusters that end up empty are compacted away,
    reducing K.  The within-cluster sum of squares is checked to be
    non-increasing on every run.  Points are processed in canonical order,
    so the partition depends only on the point multiset and the seed, not
    on input order.
    """
    x_in = _as_points(points)
    n = x_in.shape[0]
    if n == 0:
        raise InvalidRequestError("cannot cluster zero points")
    if not 1 <= k <= n:
        raise InvalidRequestError(f"k={k} outside [1, {n}]")
    order = _canonical_order(x_in)
    x = x_in[order]

    rng = np.random.Generator(np.random.Philox(key=np.uint64(cfg.seed)))
    centers = _kmeans_pp_init(x, k, rng)

    labels = np.argmin(_pairwise_sq_dists(x, centers), axis=0)
    prev_wcss = math.inf
    for _ in range(cfg.kmeans_max_iter):
        d2 = _pairwise_sq_dists(x, centers)
        labels = np.argmin(d2, axis=0)
        wcss = float(d2[labels, np.arange(n)].sum())
        if wcss > prev_wcss * (1.0 + 1e-12) + 1e-12:
            raise AssertionError(
                f"kmeans objective increased: {prev_wcss!r} -> {wcss!r}"
            )
        prev_wcss = wcss

        new_centers = centers.copy()  # empty clusters keep their centroid
        for j in range(k):
            members = x[labels == j]
            if members.shape[0] > 0:
                new_centers[j] = members.mean(axis=0)
        shift = float(np.sqrt(np.sum((new_centers - centers) ** 2, axis=1)).max())
        centers = new_centers
        if shift < cfg.kmeans_tol:
            break

    labels_sorted = np.argmin(_pairwise_sq_dists(x, centers), axis=0)
    labels = np.empty(n, dtype=np.int64)
    labels[order] = labels_sorted
    compacted, k_eff = compact_labels(labels.tolist())
    return ClusterAssignment(labels=compacted, k=k_eff, method="kmeans", seed=cfg.seed)


def hdbscan(
    points: Sequence[Sequence[float]] | np.ndarray,
    cfg: ClusterConfig,
) -> ClusterAssignment:
    """Density-based clustering with size-derived parameters.

    For M points, min_cluster_size = max(2, min(5, M // 4)) and
    min_samples = min_cluster_size - 1.  Noise handling follows
    ``cfg.noise_policy``; when every point is noise, all points share one
    default cluster.  Points are processed in canonical order, so the
    partition depends only on the point multiset.
    """
    x = _as_points(points)
    n = x.shape[0]
    if n == 0:
        raise InvalidRequestError("cannot cluster zero points")
    if n == 1:
        return ClusterAssignment(labels=(0,), k=1, method="hdbscan", seed=cfg.seed)

    min_cluster_size = max(2, min(5, n // 4))
    min_samples = min(min_cluster_size - 1, n - 1)
    order = _canonical_order(x)
    raw_sorted = hdbscan_labels(
        x[order], min_cluster_size=min_cluster_size, min_samples=min_samples
    )
    raw = np.empty(n, dtype=np.int64)
    raw[order] = raw_sorted

    labels = [int(z) for z in raw]
    n_clusters = max(labels) + 1 if max(labels) >= 0 else 0
    if n_clusters == 0:
        # all noise: one default cluster
        labels = [0] * n
    elif cfg.noise_policy == "merged":
        labels = [z if z >= 0 else n_clusters for z in labels]
    else:  # singletons
        next_id = n_clusters
        for i, z in enumerate(labels):
            if z < 0:
                labels[i] = next_id
                next_id += 1
    compacted, k_eff = compact_labels(labels)
    return ClusterAssignment(labels=compacted, k=k_eff, method="hdbscan", seed=cfg.seed)


def cluster_trace(
    embeddings: Sequence[Sequence[float]] | np.ndarray,
    cfg: ClusterConfig,
) -> ClusterAssignment:
    """Cluster one trace's step embeddings per the configured method."""
    x = _as_points(embeddings)
    if x.shape[0] == 0:
        raise InvalidRequestError("cannot cluster an empty trace")
    if cfg.method == "kmeans":
        k = choose_k(x.shape[0], floor=cfg.k_floor)
        return kmeans(x, k, cfg)
    return hdbscan(x, cfg)
