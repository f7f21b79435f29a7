"""HDBSCAN from scratch.

Pipeline: core distances -> minimum spanning tree under mutual reachability
(dense Prim) -> single-linkage dendrogram -> condensed tree with minimum
cluster size ``m`` -> excess-of-mass selection.

Distances are Euclidean and computed densely; intended for a few thousand
points.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from .errors import TooFewPoints

NOISE = -1


def _as_points(points) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    return x


def pairwise_distances(a, b) -> np.ndarray:
    """Euclidean distances between the rows of ``a`` and ``b``.

    Squared differences are accumulated one coordinate at a time, so
    ``d(p, q)`` comes out bitwise identical wherever it is computed. Core
    distances and MST weights then tie exactly when they should.
    """
    a = np.atleast_2d(np.asarray(a, dtype=float))
    b = np.atleast_2d(np.asarray(b, dtype=float))
    return np.sqrt(_sq_dist_cols(np.ascontiguousarray(a.T), np.ascontiguousarray(b.T)))


def _sq_dist_cols(a_cols: np.ndarray, b_cols: np.ndarray) -> np.ndarray:
    # inputs are coordinate-major (dim, n) so every step is a contiguous op
    d2 = np.zeros((a_cols.shape[1], b_cols.shape[1]))
    diff = np.empty_like(d2)
    for ak, bk in zip(a_cols, b_cols):
        np.subtract(ak[:, None], bk[None, :], out=diff)
        diff *= diff
        d2 += diff
    return d2


def core_distances(points, k: int) -> np.ndarray:
    """Distance from each point to its k-th nearest other point."""
    x = _as_points(points)
    n = len(x)
    if k < 1 or k > n - 1:
        raise TooFewPoints(f"k={k} needs at least {k + 1} points, got {n}")
    out = np.empty(n)
    chunk = max(1, 2_000_000 // max(n, 1))
    for start in range(0, n, chunk):
        block = x[start:start + chunk]
        d = pairwise_distances(block, x)
        d[np.arange(len(block)), np.arange(start, start + len(block))] = np.inf
        out[start:start + len(block)] = np.partition(d, k - 1, axis=1)[:, k - 1]
    return out


@dataclass
class MSTEdges:
    a: np.ndarray
    b: np.ndarray
    weight: np.ndarray

    def __len__(self) -> int:
        return len(self.weight)

    @property
    def total_weight(self) -> float:
        return float(self.weight.sum())


def build_mr_mst(points, core) -> MSTEdges:
    """Prim's algorithm on the complete mutual-reachability graph.

    Edges come out in insertion order; ties go to the lowest vertex index.
    """
    x = _as_points(points)
    core = np.asarray(core, dtype=float)
    n = len(x)
    if len(core) != n:
        raise ValueError("one core distance per point is required")
    a = np.empty(max(n - 1, 0), dtype=np.int64)
    b = np.empty(max(n - 1, 0), dtype=np.int64)
    w = np.empty(max(n - 1, 0))
    if n <= 1:
        return MSTEdges(a, b, w)
    cols = np.ascontiguousarray(x.T)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    best_from = np.zeros(n, dtype=np.int64)
    v = 0
    for e in range(n - 1):
        in_tree[v] = True
        d = np.sqrt(_sq_dist_cols(cols[:, v:v + 1], cols)[0])
        mr = np.maximum(np.maximum(d, core), core[v])
        better = (mr < best) & ~in_tree
        best[better] = mr[better]
        best_from[better] = v
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        a[e], b[e], w[e] = best_from[v], v, best[v]
    return MSTEdges(a, b, w)


@dataclass
class CondensedTree:
    """Rows ``(parent, child, lam, child_size)``.

    Cluster ids start at ``n_points`` (the root); ``child < n_points`` means a
    single point falling out of ``parent`` at density ``lam``.
    """
    parent: np.ndarray
    child: np.ndarray
    lam: np.ndarray
    child_size: np.ndarray
    n_points: int
    min_cluster_size: int

    @property
    def root(self) -> int:
        return self.n_points

    @property
    def cluster_ids(self) -> np.ndarray:
        kids = self.child[self.child >= self.n_points]
        return np.concatenate([[self.root], np.sort(kids)]).astype(np.int64)

    def children(self, cluster: int) -> np.ndarray:
        mask = (self.parent == cluster) & (self.child >= self.n_points)
        return self.child[mask]

    def lambda_birth(self) -> dict[int, float]:
        out = {self.root: 0.0}
        for c, lam in zip(self.child, self.lam):
            if c >= self.n_points:
                out[int(c)] = float(lam)
        return out

    def lambda_death(self) -> dict[int, float]:
        out = {}
        for c in self.cluster_ids:
            rows = self.parent == c
            out[int(c)] = float(self.lam[rows].max()) if rows.any() else 0.0
        return out

    def sizes(self) -> dict[int, int]:
        out = {self.root: self.n_points}
        for c, s in zip(self.child, self.child_size):
            if c >= self.n_points:
                out[int(c)] = int(s)
        return out

    def stability(self) -> dict[int, float]:
        birth = self.lambda_birth()
        stab = {int(c): 0.0 for c in self.cluster_ids}
        for p, lam, size in zip(self.parent, self.lam, self.child_size):
            stab[int(p)] += (lam - birth[int(p)]) * size
        return stab

    def point_lambdas(self) -> np.ndarray:
        """Density at which each point falls out of the tree."""
        out = np.zeros(self.n_points)
        pts = self.child < self.n_points
        out[self.child[pts]] = self.lam[pts]
        return out


def _single_linkage(mst: MSTEdges, n: int):
    """Dendrogram merges as arrays ``left, right, dist, size`` (node ``n + i``)."""
    order = np.argsort(mst.weight, kind="stable")
    parent = np.arange(2 * n - 1)
    size = np.ones(2 * n - 1, dtype=np.int64)
    left = np.empty(n - 1, dtype=np.int64)
    right = np.empty(n - 1, dtype=np.int64)
    dist = np.empty(n - 1)

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    for step, e in enumerate(order):
        ra, rb = find(mst.a[e]), find(mst.b[e])
        node = n + step
        left[step], right[step], dist[step] = ra, rb, mst.weight[e]
        size[node] = size[ra] + size[rb]
        parent[ra] = parent[rb] = node
    return left, right, dist, size


def condense(mst: MSTEdges, m: int, n: int) -> CondensedTree:
    if m < 2:
        raise ValueError("minimum cluster size must be at least 2")
    empty = np.empty(0, dtype=np.int64)
    if n <= 1:
        return CondensedTree(empty, empty, np.empty(0), empty, n, m)
    left, right, dist, size = _single_linkage(mst, n)
    max_w = float(dist.max())
    floor = max_w * 1e-12 if max_w > 0 else 1.0

    def lam_of(d):
        return 1.0 / max(d, floor)

    def leaves(node):
        stack, out = [node], []
        while stack:
            v = stack.pop()
            if v < n:
                out.append(v)
            else:
                stack += [right[v - n], left[v - n]]
        return sorted(out)

    def pieces(node):
        # components left once every edge of this node's weight is cut; tied
        # merges are one multiway split, not a chain of binary ones
        w = dist[node - n]
        stack, out = [right[node - n], left[node - n]], []
        while stack:
            v = stack.pop()
            if v >= n and dist[v - n] == w:
                stack += [right[v - n], left[v - n]]
            else:
                out.append(v)
        return out

    rows_p, rows_c, rows_l, rows_s = [], [], [], []
    next_id = n + 1
    label = {2 * n - 2: n}
    queue = deque([2 * n - 2])
    while queue:
        node = queue.popleft()
        cid = label[node]
        lam = lam_of(dist[node - n])
        parts = [(v, size[v] if v >= n else 1) for v in pieces(node)]
        big = [(v, s) for v, s in parts if s >= m]
        for v, s in parts:
            if s < m:
                for p in leaves(v):
                    rows_p.append(cid), rows_c.append(p), rows_l.append(lam), rows_s.append(1)
        if len(big) >= 2:
            for child, csize in big:
                label[child] = next_id
                rows_p.append(cid), rows_c.append(next_id), rows_l.append(lam), rows_s.append(csize)
                next_id += 1
                queue.append(child)
        elif big:
            label[big[0][0]] = cid
            queue.append(big[0][0])
    return CondensedTree(np.array(rows_p, dtype=np.int64), np.array(rows_c, dtype=np.int64),
                         np.array(rows_l, dtype=float), np.array(rows_s, dtype=np.int64), n, m)


@dataclass
class ClusteringResult:
    labels: np.ndarray
    n_clusters: int
    core_distances: np.ndarray
    probabilities: np.ndarray | None = None
    tree: CondensedTree | None = None

    @property
    def noise_fraction(self) -> float:
        return float(np.mean(self.labels == NOISE)) if len(self.labels) else 0.0


def select_clusters(tree: CondensedTree) -> list[int]:
    """Excess-of-mass selection; returns the chosen cluster ids, ascending.

    A node is kept when its stability strictly exceeds the summed (propagated)
    stability of its children. The root is only kept when it has no children
    and holds at least ``m`` points.
    """
    root = tree.root
    clusters = tree.cluster_ids
    if len(clusters) == 1:
        return [root] if tree.n_points >= tree.min_cluster_size else []
    stab = tree.stability()
    kids = {int(c): [int(k) for k in tree.children(c)] for c in clusters}
    selected = {int(c): False for c in clusters}
    for c in sorted(kids, reverse=True):
        if c == root:
            continue
        child_sum = sum(stab[k] for k in kids[c])
        if stab[c] > child_sum:
            selected[c] = True
            stack = list(kids[c])
            while stack:
                d = stack.pop()
                selected[d] = False
                stack += kids[d]
        else:
            stab[c] = child_sum
    return sorted(c for c, keep in selected.items() if keep)


def extract(tree: CondensedTree, core: np.ndarray | None = None) -> ClusteringResult:
    n = tree.n_points
    chosen = select_clusters(tree)
    labels = np.full(n, NOISE, dtype=np.int64)
    probs = np.zeros(n)
    point_lam = tree.point_lambdas()
    death = tree.lambda_death()
    kids = {}
    for p, c in zip(tree.parent, tree.child):
        kids.setdefault(int(p), []).append(int(c))
    for label, cid in enumerate(chosen):
        members = []
        stack = [cid]
        while stack:
            v = stack.pop()
            for c in kids.get(v, []):
                (members.append(c) if c < n else stack.append(c))
        members = np.array(sorted(members), dtype=np.int64)
        labels[members] = label
        top = death[cid] if death[cid] > 0 else 1.0
        probs[members] = np.minimum(point_lam[members], top) / top
    if core is None:
        core = np.zeros(n)
    return ClusteringResult(labels, len(chosen), np.asarray(core, dtype=float), probs, tree)


def hdbscan(points, m: int = 5, min_samples: int | None = None) -> ClusteringResult:
    """Cluster ``points`` with minimum cluster size ``m``.

    ``min_samples`` (neighbor rank for core distances) defaults to ``m``.
    """
    x = _as_points(points)
    n = len(x)
    k = m if min_samples is None else min_samples
    if n <= 1:
        return ClusteringResult(np.full(n, NOISE, dtype=np.int64), 0, np.zeros(n), np.zeros(n))
    core = core_distances(x, min(k, n - 1))
    mst = build_mr_mst(x, core)
    tree = condense(mst, m, n)
    return extract(tree, core)


def labels_to_csv(result: ClusteringResult, path) -> None:
    with open(path, "w") as fh:
        fh.write("index,label,core_distance\n")
        for i, (lab, cd) in enumerate(zip(result.labels, result.core_distances)):
            fh.write(f"{i},{int(lab)},{float(cd)!r}\n")
