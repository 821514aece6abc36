"""Density-based hierarchical clustering over one trace's embeddings.

The classic pipeline, specialised for small dense point sets: Euclidean
core distances, mutual-reachability transform, a Prim minimum spanning
tree, single-linkage dendrogram, the condensed tree at min_cluster_size,
and excess-of-mass cluster extraction.  Points not captured by any
selected cluster come back as label -1; the caller decides their fate.

Determinism: spanning-tree and merge ties always break toward the lowest
point index, so identical inputs give identical labels.
"""

from __future__ import annotations

import math

import numpy as np

__all__ = ["hdbscan_labels"]


def _pairwise_distances(x: np.ndarray) -> np.ndarray:
    # row-at-a-time keeps memory at O(n*d) and avoids BLAS reductions,
    # whose summation order is not reproducible
    n = x.shape[0]
    dist = np.empty((n, n), dtype=np.float64)
    for i in range(n):
        diff = x - x[i]
        dist[i] = np.sqrt(np.sum(diff * diff, axis=1))
    return dist


def _mutual_reachability(dist: np.ndarray, min_samples: int) -> np.ndarray:
    core = np.partition(dist, min_samples, axis=1)[:, min_samples]
    mr = np.maximum(dist, np.maximum(core[:, np.newaxis], core[np.newaxis, :]))
    np.fill_diagonal(mr, 0.0)
    return mr


def _prim_mst(weights: np.ndarray) -> list[tuple[float, int, int]]:
    """Minimum spanning tree edges (weight, parent, child), ties by lowest index."""
    n = weights.shape[0]
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best = weights[0].copy()
    parent = np.zeros(n, dtype=np.int64)
    edges: list[tuple[float, int, int]] = []
    for _ in range(n - 1):
        masked = np.where(in_tree, np.inf, best)
        j = int(np.argmin(masked))
        edges.append((float(masked[j]), int(parent[j]), j))
        in_tree[j] = True
        improve = (weights[j] < best) & ~in_tree
        best = np.where(improve, weights[j], best)
        parent = np.where(improve, j, parent)
    return edges


def _single_linkage(edges: list[tuple[float, int, int]], n: int) -> np.ndarray:
    """Merge MST edges into a dendrogram: rows (left, right, distance, size).

    Row i creates node id n+i by merging two existing roots; leaves are
    ids 0..n-1.
    """
    order = sorted(edges, key=lambda e: (e[0], min(e[1], e[2]), max(e[1], e[2])))
    uf_parent = list(range(2 * n - 1))
    size = [1] * n + [0] * (n - 1)

    def find(a: int) -> int:
        root = a
        while uf_parent[root] != root:
            root = uf_parent[root]
        while uf_parent[a] != root:
            uf_parent[a], a = root, uf_parent[a]
        return root

    hierarchy = np.empty((n - 1, 4), dtype=np.float64)
    next_id = n
    for w, u, v in order:
        ru, rv = find(u), find(v)
        hierarchy[next_id - n] = (min(ru, rv), max(ru, rv), w, size[ru] + size[rv])
        uf_parent[ru] = next_id
        uf_parent[rv] = next_id
        size[next_id] = size[ru] + size[rv]
        next_id += 1
    return hierarchy


def _subtree_points(hierarchy: np.ndarray, node: int, n: int) -> list[int]:
    points: list[int] = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur < n:
            points.append(cur)
        else:
            row = hierarchy[cur - n]
            stack.append(int(row[0]))
            stack.append(int(row[1]))
    return points


def _condense_tree(
    hierarchy: np.ndarray, n: int, min_cluster_size: int
) -> list[tuple[int, int, float, int]]:
    """Rows (parent_cluster, child, lambda, size); child < n means a point.

    Splitting a cluster keeps it alive through any child smaller than
    min_cluster_size (those points simply leave at the split's lambda);
    only a split into two large-enough children creates new clusters.
    Cluster ids start at n (the root) and grow in breadth-first order, so
    larger ids are never ancestors of smaller ones.
    """
    root = 2 * n - 2
    relabel = {root: n}
    next_label = n + 1
    rows: list[tuple[int, int, float, int]] = []
    ignore: set[int] = set()

    queue = [root]
    bfs_order: list[int] = []
    while queue:
        node = queue.pop(0)
        bfs_order.append(node)
        if node >= n:
            row = hierarchy[node - n]
            queue.append(int(row[0]))
            queue.append(int(row[1]))

    for node in bfs_order:
        if node < n or node in ignore:
            continue
        left, right, dist, _ = hierarchy[node - n]
        left, right = int(left), int(right)
        lam = 1.0 / dist if dist > 0.0 else math.inf
        left_count = int(hierarchy[left - n][3]) if left >= n else 1
        right_count = int(hierarchy[right - n][3]) if right >= n else 1
        cluster = relabel[node]

        if left_count >= min_cluster_size and right_count >= min_cluster_size:
            relabel[left] = next_label
            rows.append((cluster, next_label, lam, left_count))
            next_label += 1
            relabel[right] = next_label
            rows.append((cluster, next_label, lam, right_count))
            next_label += 1
        elif left_count < min_cluster_size and right_count < min_cluster_size:
            for side in (left, right):
                for p in _subtree_points(hierarchy, side, n):
                    rows.append((cluster, p, lam, 1))
                ignore.update(t for t in _descendant_internals(hierarchy, side, n))
        elif left_count < min_cluster_size:
            relabel[right] = cluster
            for p in _subtree_points(hierarchy, left, n):
                rows.append((cluster, p, lam, 1))
            ignore.update(_descendant_internals(hierarchy, left, n))
        else:
            relabel[left] = cluster
            for p in _subtree_points(hierarchy, right, n):
                rows.append((cluster, p, lam, 1))
            ignore.update(_descendant_internals(hierarchy, right, n))
    return rows


def _descendant_internals(hierarchy: np.ndarray, node: int, n: int) -> list[int]:
    out: list[int] = []
    stack = [node]
    while stack:
        cur = stack.pop()
        if cur >= n:
            out.append(cur)
            row = hierarchy[cur - n]
            stack.append(int(row[0]))
            stack.append(int(row[1]))
    return out


def _stability(rows: list[tuple[int, int, float, int]], n: int) -> dict[int, float]:
    births: dict[int, float] = {n: 0.0}
    for _, child, lam, size in rows:
        if size > 1:
            births[child] = lam
    stability: dict[int, float] = {}
    for parent, _, lam, size in rows:
        stability.setdefault(parent, 0.0)
        stability[parent] += (lam - births[parent]) * size
    for cluster in births:
        stability.setdefault(cluster, 0.0)
    return stability


def _excess_of_mass(
    rows: list[tuple[int, int, float, int]], stability: dict[int, float], n: int
) -> set[int]:
    """Select the antichain of clusters maximizing summed stability.

    The root (id n) is never selectable, so a dataset without persistent
    substructure yields no clusters at all.
    """
    children_of: dict[int, list[int]] = {}
    for parent, child, _, size in rows:
        if size > 1:
            children_of.setdefault(parent, []).append(child)

    candidates = sorted(c for c in stability if c != n)
    is_cluster = {c: True for c in candidates}
    score = dict(stability)
    for node in reversed(candidates):  # ids grow downward, so this is bottom-up
        subtree = sum(score[ch] for ch in children_of.get(node, []))
        if subtree > score[node]:
            is_cluster[node] = False
            score[node] = subtree
        else:
            stack = list(children_of.get(node, []))
            while stack:
                sub = stack.pop()
                is_cluster[sub] = False
                stack.extend(children_of.get(sub, []))
    return {c for c, keep in is_cluster.items() if keep}


def _label_points(
    rows: list[tuple[int, int, float, int]], selected: set[int], n: int, max_id: int
) -> np.ndarray:
    """Each point joins its selected ancestor cluster, if any, else noise."""
    rep = list(range(max_id + 1))

    def find(a: int) -> int:
        root = a
        while rep[root] != root:
            root = rep[root]
        while rep[a] != root:
            rep[a], a = root, rep[a]
        return root

    for parent, child, _, _ in rows:
        if child not in selected:
            rep[find(child)] = find(parent)

    label_map = {c: i for i, c in enumerate(sorted(selected))}
    labels = np.full(n, -1, dtype=np.int64)
    for p in range(n):
        top = find(p)
        if top in label_map:
            labels[p] = label_map[top]
    return labels


def hdbscan_labels(x: np.ndarray, min_cluster_size: int, min_samples: int) -> np.ndarray:
    """Cluster labels in [0, K) plus -1 for noise; K may be 0 (all noise)."""
    n = x.shape[0]
    if n == 1:
        return np.zeros(1, dtype=np.int64)
    dist = _pairwise_distances(x)
    if float(dist.max()) == 0.0:
        return np.full(n, -1, dtype=np.int64)  # coincident points: no density structure
    mr = _mutual_reachability(dist, min_samples)
    edges = _prim_mst(mr)
    hierarchy = _single_linkage(edges, n)
    rows = _condense_tree(hierarchy, n, min_cluster_size)
    stability = _stability(rows, n)
    selected = _excess_of_mass(rows, stability, n)
    max_id = max((child for _, child, _, s in rows if s > 1), default=n)
    return _label_points(rows, selected, n, max(max_id, n))
