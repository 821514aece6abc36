"""Per-response reasoning map and its small-world structure score.

A reasoning map is a simple undirected graph whose nodes are latent
reasoning types (clusters of step embeddings) and whose edges are the
observed transitions between consecutive steps of different types.  The
structure score combines local clustering with global path efficiency:

    score = clustering_coefficient / 2  +  1 / (1 + avg_path_length)

Maps with fewer than two nodes or no edges are degenerate and receive a
configurable reward (0 by default) so that trivially short traces are not
rewarded for their emptiness.

All functions here are pure and accumulate in fixed node-index order, so
identical inputs give bit-identical floats.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

from .cluster import ClusterAssignment

__all__ = [
    "ReasoningMap",
    "StructureScore",
    "build_map",
    "map_from_edges",
    "clustering_coefficient",
    "avg_path_length",
    "structure_reward",
    "to_dot",
]


@dataclass(frozen=True)
class ReasoningMap:
    """Simple undirected graph over reasoning-type ids 0..num_nodes-1."""

    num_nodes: int
    edges: frozenset[tuple[int, int]]  # each stored as (i, j) with i < j
    adjacency: tuple[tuple[int, ...], ...]  # sorted neighbor ids per node

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degree(self, node: int) -> int:
        return len(self.adjacency[node])


@dataclass(frozen=True)
class StructureScore:
    """Structure reward with its decomposition and graph diagnostics.

    ``l`` is None when no reachable distinct pair exists (average path
    length undefined); such maps are degenerate and ``sr`` equals the
    configured degenerate reward.
    """

    sr: float
    local_depth: float
    global_flow: float
    c: float
    l: float | None
    degenerate: bool


def map_from_edges(num_nodes: int, edges: Iterable[tuple[int, int]]) -> ReasoningMap:
    """Construct a map from an explicit edge list (self-loops rejected)."""
    canonical: set[tuple[int, int]] = set()
    for a, b in edges:
        if a == b:
            raise ValueError(f"self-loop on node {a}")
        if not (0 <= a < num_nodes and 0 <= b < num_nodes):
            raise ValueError(f"edge ({a}, {b}) outside [0, {num_nodes})")
        canonical.add((a, b) if a < b else (b, a))
    neighbors: list[set[int]] = [set() for _ in range(num_nodes)]
    for a, b in canonical:
        neighbors[a].add(b)
        neighbors[b].add(a)
    adjacency = tuple(tuple(sorted(ns)) for ns in neighbors)
    return ReasoningMap(num_nodes=num_nodes, edges=frozenset(canonical), adjacency=adjacency)


def build_map(assignment: ClusterAssignment) -> ReasoningMap:
    """Build the reasoning map from per-step cluster labels.

    Each consecutive pair of steps with different labels contributes the
    undirected edge between their clusters; repeats deduplicate, equal
    consecutive labels contribute nothing.
    """
    labels = assignment.labels
    edges = (
        (a, b)
        for a, b in zip(labels, labels[1:])
        if a != b
    )
    return map_from_edges(assignment.k, edges)


def clustering_coefficient(g: ReasoningMap) -> float:
    """Mean local clustering coefficient over nodes of degree >= 2.

    A node's local coefficient is the fraction of realized edges among its
    neighbors.  Returns 0.0 when no node has degree >= 2.
    """
    total = 0.0
    counted = 0
    for node in range(g.num_nodes):
        neighbors = g.adjacency[node]
        deg = len(neighbors)
        if deg < 2:
            continue
        links = 0
        for i in range(deg):
            for j in range(i + 1, deg):
                if (neighbors[i], neighbors[j]) in g.edges:
                    links += 1
        total += links / (deg * (deg - 1) / 2)
        counted += 1
    if counted == 0:
        return 0.0
    return total / counted


def _bfs_distances(g: ReasoningMap, source: int) -> list[int]:
    dist = [-1] * g.num_nodes
    dist[source] = 0
    queue: deque[int] = deque([source])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def avg_path_length(g: ReasoningMap) -> float | None:
    """Mean hop-count distance over unordered reachable distinct pairs.

    Returns None when no such pair exists (edgeless graph or < 2 nodes).
    Unreachable pairs are excluded, not penalized.
    """
    total = 0.0
    pairs = 0
    for source in range(g.num_nodes):
        dist = _bfs_distances(g, source)
        for target in range(source + 1, g.num_nodes):
            if dist[target] > 0:
                total += dist[target]
                pairs += 1
    if pairs == 0:
        return None
    return total / pairs


def structure_reward(g: ReasoningMap, degenerate_reward: float = 0.0) -> StructureScore:
    """Score a reasoning map: local depth (C/2) plus global flow (1/(1+L)).

    Maps with fewer than two nodes or no edges are degenerate; they get
    ``degenerate_reward`` instead of the two-term score.
    """
    if not 0.0 <= degenerate_reward <= 1.0:
        raise ValueError("degenerate_reward must lie in [0, 1]")
    if g.num_nodes < 2 or g.num_edges == 0:
        return StructureScore(
            sr=degenerate_reward,
            local_depth=0.0,
            global_flow=0.0,
            c=0.0,
            l=None,
            degenerate=True,
        )
    c = clustering_coefficient(g)
    l = avg_path_length(g)
    assert l is not None  # at least one edge means at least one reachable pair
    local_depth = c / 2.0
    global_flow = 1.0 / (1.0 + l)
    return StructureScore(
        sr=local_depth + global_flow,
        local_depth=local_depth,
        global_flow=global_flow,
        c=c,
        l=l,
        degenerate=False,
    )


def to_dot(g: ReasoningMap, member_counts: Sequence[int] | None = None) -> str:
    """Render the map in DOT format for offline visualization.

    ``member_counts`` optionally annotates each node with the number of
    steps assigned to its cluster.
    """
    lines = ["graph reasoning_map {"]
    for node in range(g.num_nodes):
        if member_counts is not None:
            lines.append(f'  n{node} [label="{node} ({member_counts[node]} steps)"];')
        else:
            lines.append(f'  n{node} [label="{node}"];')
    for a, b in sorted(g.edges):
        lines.append(f"  n{a} -- n{b};")
    lines.append("}")
    return "\n".join(lines) + "\n"
