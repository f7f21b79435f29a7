"""Latent space roadmap: build a cluster graph from encoded tuples and plan on it.

Building has three phases: a reference graph over all encodings with an edge
per action pair, HDBSCAN over the encodings, and the roadmap whose nodes are
clusters joined whenever some action pair straddles them.
"""
from __future__ import annotations

import csv
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .cluster import NOISE, ClusteringResult, hdbscan
from .encoders import encode
from .errors import EmptyRoadmap, IoError, NoClusters


@dataclass
class ReferenceGraph:
    """Encodings as nodes; node ``k`` is side i of tuple ``k``, node ``n + k`` side j."""
    points: np.ndarray
    edges: np.ndarray          # (E, 2) node indices, one row per action pair
    tuple_index: np.ndarray    # tuple each node came from
    side: np.ndarray           # 0 for o_i, 1 for o_j

    @property
    def n_nodes(self) -> int:
        return len(self.points)


def build_reference_graph(z_i, z_j, s, augmented=None) -> ReferenceGraph:
    """Reference graph from encoded tuples.

    Augmented tuples are skipped entirely: they add neither nodes nor edges.
    """
    z_i = np.asarray(z_i, dtype=float)
    z_j = np.asarray(z_j, dtype=float)
    s = np.asarray(s)
    keep = np.ones(len(s), dtype=bool) if augmented is None else ~np.asarray(augmented, dtype=bool)
    kept = np.flatnonzero(keep)
    n = len(kept)
    points = np.concatenate([z_i[kept], z_j[kept]])
    action = np.flatnonzero(s[kept] == 0)
    edges = np.stack([action, action + n], axis=1) if len(action) else np.empty((0, 2), dtype=np.int64)
    return ReferenceGraph(points, edges.astype(np.int64), np.concatenate([kept, kept]),
                          np.concatenate([np.zeros(n, dtype=np.int8), np.ones(n, dtype=np.int8)]))


@dataclass
class Roadmap:
    centroids: np.ndarray                      # (V, z)
    members: list[np.ndarray]                  # reference-graph node indices per roadmap node
    edges: dict[tuple[int, int], int]          # (a, b) with a < b -> support
    points: np.ndarray | None = None           # encodings the members index into
    adjacency: dict[int, list[int]] = field(init=False)

    def __post_init__(self):
        adj = {v: set() for v in range(len(self.centroids))}
        for a, b in self.edges:
            adj[a].add(b)
            adj[b].add(a)
        self.adjacency = {v: sorted(ns) for v, ns in adj.items()}

    @property
    def n_nodes(self) -> int:
        return len(self.centroids)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @property
    def sizes(self) -> list[int]:
        return [len(m) for m in self.members]


def build_lsr(g: ReferenceGraph, clustering: ClusteringResult, encodings=None) -> Roadmap:
    """One node per cluster; an edge wherever an action pair joins two clusters.

    Reference edges with a noise endpoint are dropped, as are edges inside a
    single cluster.
    """
    labels = np.asarray(clustering.labels)
    points = g.points if encodings is None else np.asarray(encodings, dtype=float)
    if len(labels) != len(points):
        raise ValueError("clustering does not cover every encoding")
    if clustering.n_clusters == 0:
        raise NoClusters("every encoding was labelled noise")
    members = [np.flatnonzero(labels == c) for c in range(clustering.n_clusters)]
    centroids = np.stack([points[m].mean(axis=0) for m in members])
    edges: dict[tuple[int, int], int] = {}
    for u, v in g.edges:
        a, b = int(labels[u]), int(labels[v])
        if a == NOISE or b == NOISE or a == b:
            continue
        key = (min(a, b), max(a, b))
        edges[key] = edges.get(key, 0) + 1
    return Roadmap(centroids, members, dict(sorted(edges.items())), points)


def build_roadmap(z_i, z_j, s, augmented=None, m: int = 5, min_samples: int | None = None
                  ) -> tuple[Roadmap, ReferenceGraph, ClusteringResult]:
    """All three phases in one call."""
    g = build_reference_graph(z_i, z_j, s, augmented)
    clustering = hdbscan(g.points, m, min_samples)
    return build_lsr(g, clustering), g, clustering


def nearest_node(rm: Roadmap, z, mode: str = "centroid") -> int:
    """Closest roadmap node to ``z``; ties go to the lowest node id.

    ``mode="member"`` measures to the closest member encoding instead of the
    centroid.
    """
    if rm.n_nodes == 0:
        raise EmptyRoadmap("roadmap has no nodes")
    z = np.asarray(z, dtype=float)
    if mode == "centroid":
        d = np.linalg.norm(rm.centroids - z, axis=1)
    elif mode == "member":
        if rm.points is None:
            raise ValueError("member mode needs the roadmap's member encodings")
        d = np.array([np.linalg.norm(rm.points[m] - z, axis=1).min() for m in rm.members])
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return int(np.argmin(d))


@dataclass
class PlanResult:
    start_node: int
    goal_node: int
    paths: list[list[int]]
    truncated: bool = False

    @property
    def reachable(self) -> bool:
        return bool(self.paths)


def _bfs(rm: Roadmap, source: int) -> dict[int, int]:
    dist = {source: 0}
    queue = deque([source])
    while queue:
        v = queue.popleft()
        for w in rm.adjacency[v]:
            if w not in dist:
                dist[w] = dist[v] + 1
                queue.append(w)
    return dist


def shortest_paths(rm: Roadmap, a: int, b: int, cap: int = 100) -> PlanResult:
    """All shortest node paths from ``a`` to ``b`` (at most ``cap``).

    Paths are listed in lexicographic order of node ids. An unreachable goal
    gives an empty path list.
    """
    for v in (a, b):
        if not 0 <= v < rm.n_nodes:
            raise ValueError(f"node {v} not in roadmap")
    if a == b:
        return PlanResult(a, b, [[a]])
    from_a = _bfs(rm, a)
    if b not in from_a:
        return PlanResult(a, b, [])
    from_b = _bfs(rm, b)
    length = from_a[b]
    on_path = {v for v, d in from_a.items() if d + from_b.get(v, length + 1) == length}
    paths: list[list[int]] = []
    truncated = False
    stack = [(a, [a])]
    while stack:
        v, path = stack.pop()
        if v == b:
            if len(paths) == cap:
                truncated = True
                break
            paths.append(path)
            continue
        nxt = [w for w in rm.adjacency[v] if w in on_path and from_a[w] == from_a[v] + 1]
        for w in reversed(nxt):
            stack.append((w, path + [w]))
    return PlanResult(a, b, paths, truncated)


def plan_latent(rm: Roadmap, z_start, z_goal, cap: int = 100, mode: str = "centroid") -> PlanResult:
    return shortest_paths(rm, nearest_node(rm, z_start, mode), nearest_node(rm, z_goal, mode), cap)


def plan(rm: Roadmap, model, o_start, o_goal, cap: int = 100, mode: str = "centroid") -> PlanResult:
    """Encode both observations, snap them to roadmap nodes and plan."""
    return plan_latent(rm, encode(model, o_start), encode(model, o_goal), cap, mode)


def save_roadmap(rm: Roadmap, prefix) -> tuple[Path, Path]:
    """Write ``<prefix>_nodes.csv`` (id, size, centroid...) and ``<prefix>_edges.csv`` (a, b, support)."""
    prefix = Path(prefix)
    nodes_path = prefix.with_name(prefix.name + "_nodes.csv")
    edges_path = prefix.with_name(prefix.name + "_edges.csv")
    z_dim = rm.centroids.shape[1] if rm.n_nodes else 0
    try:
        with open(nodes_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["id", "size"] + [f"c{k}" for k in range(z_dim)])
            for v in range(rm.n_nodes):
                w.writerow([v, len(rm.members[v])] + [repr(float(c)) for c in rm.centroids[v]])
        with open(edges_path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["a", "b", "support"])
            for (a, b), sup in rm.edges.items():
                w.writerow([a, b, sup])
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return nodes_path, edges_path


def load_roadmap(prefix) -> Roadmap:
    """Inverse of :func:`save_roadmap`. Member lists come back empty."""
    prefix = Path(prefix)
    try:
        with open(prefix.with_name(prefix.name + "_nodes.csv"), newline="") as fh:
            rows = list(csv.reader(fh))[1:]
        with open(prefix.with_name(prefix.name + "_edges.csv"), newline="") as fh:
            erows = list(csv.reader(fh))[1:]
    except OSError as exc:
        raise IoError(str(exc)) from exc
    centroids = np.array([[float(c) for c in r[2:]] for r in rows]).reshape(len(rows), -1)
    members = [np.empty(0, dtype=np.int64) for _ in rows]
    edges = {(int(a), int(b)): int(sup) for a, b, sup in erows}
    rm = Roadmap(centroids, members, edges)
    rm.loaded_sizes = [int(r[1]) for r in rows]
    return rm
