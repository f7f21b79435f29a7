"""Independent reference implementations used as test oracles.

Each one is written from the textbook definition and shares no code with the
package: plain loops, no Gram tricks, no MST shortcuts.
"""
from __future__ import annotations

import math
from collections import Counter

import numpy as np


# -- linear algebra -----------------------------------------------------------

def jacobi_eigh(a, tol=1e-14, max_sweeps=100):
    """Eigenvalues (descending) and eigenvectors (columns) of a symmetric matrix."""
    a = np.array(a, dtype=float)
    n = len(a)
    v = np.eye(n)
    for _ in range(max_sweeps):
        off = math.sqrt(sum(a[i, j] ** 2 for i in range(n) for j in range(n) if i != j))
        if off < tol * max(1.0, np.abs(a).max()):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if abs(a[p, q]) < 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2 * a[p, q])
                t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1))
                c = 1 / math.sqrt(t * t + 1)
                s = t * c
                rot = np.eye(n)
                rot[p, p] = rot[q, q] = c
                rot[p, q] = s
                rot[q, p] = -s
                a = rot.T @ a @ rot
                v = v @ rot
    vals = np.diag(a).copy()
    order = np.argsort(vals)[::-1]
    return vals[order], v[:, order]


# -- neighbors and spanning trees ------------------------------------------------

def euclid(p, q):
    return math.sqrt(sum((float(x) - float(y)) ** 2 for x, y in zip(p, q)))


def knn_core(points, k):
    out = []
    for i, p in enumerate(points):
        ds = sorted(euclid(p, q) for j, q in enumerate(points) if j != i)
        out.append(ds[k - 1])
    return np.array(out)


def mutual_reachability(points, core):
    n = len(points)
    mr = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i != j:
                mr[i, j] = max(core[i], core[j], euclid(points[i], points[j]))
    return mr


def kruskal_weight(weights):
    """Total weight of a minimum spanning tree of a dense symmetric weight matrix."""
    n = len(weights)
    edges = sorted((weights[i][j], i, j) for i in range(n) for j in range(i + 1, n))
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total, used = 0.0, 0
    for w, i, j in edges:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[ri] = rj
            total += w
            used += 1
    assert used == n - 1
    return total


# -- HDBSCAN by definition ------------------------------------------------------------

def _components(members, adj):
    """Connected components of the subgraph induced by ``members``."""
    left = set(members)
    comps = []
    while left:
        seed = min(left)
        comp, frontier = {seed}, [seed]
        left.discard(seed)
        while frontier:
            v = frontier.pop()
            for w in list(left):
                if adj[v, w]:
                    left.discard(w)
                    comp.add(w)
                    frontier.append(w)
        comps.append(sorted(comp))
    return comps


def brute_hdbscan(points, m, min_samples=None):
    """Flat HDBSCAN labels (-1 noise) straight from the density-level definition.

    Levels are the distinct mutual-reachability values. At each level every
    live cluster is cut into the components left after removing edges of that
    weight or more; components of at least ``m`` points are significant. Two or
    more significant components make a split, one means the cluster shrinks,
    none means it vanishes. Stability and excess-of-mass selection follow.
    """
    points = [list(map(float, p)) for p in np.atleast_2d(np.asarray(points, dtype=float))]
    n = len(points)
    k = m if min_samples is None else min_samples
    core = knn_core(points, min(k, n - 1))
    mr = mutual_reachability(points, core)
    levels = sorted({mr[i, j] for i in range(n) for j in range(i + 1, n)}, reverse=True)

    clusters = {0: {"parent": None, "birth": 0.0, "points": list(range(n)), "leave": {}, "children": []}}
    live = {0: list(range(n))}
    next_id = 1
    for w in levels:
        lam = 1.0 / w if w > 0 else math.inf
        adj = mr < w
        for cid in list(live):
            comps = _components(live[cid], adj)
            big = [c for c in comps if len(c) >= m]
            small = [p for c in comps if len(c) < m for p in c]
            node = clusters[cid]
            for p in small:
                node["leave"][p] = lam
            if len(big) >= 2:
                del live[cid]
                for c in big:
                    for p in c:
                        node["leave"][p] = lam
                    clusters[next_id] = {"parent": cid, "birth": lam, "points": c, "leave": {}, "children": []}
                    node["children"].append(next_id)
                    live[next_id] = c
                    next_id += 1
            elif len(big) == 1:
                live[cid] = big[0]
            else:
                del live[cid]
    stab = {cid: sum(l - c["birth"] for l in c["leave"].values()) for cid, c in clusters.items()}

    def best(cid):
        kids = clusters[cid]["children"]
        if not kids:
            return stab[cid], [cid]
        sub_val, sub_sel = 0.0, []
        for kid in kids:
            v, s = best(kid)
            sub_val += v
            sub_sel += s
        if cid != 0 and stab[cid] > sub_val:
            return stab[cid], [cid]
        return sub_val, sub_sel

    if not clusters[0]["children"]:
        chosen = [0] if n >= m else []
    else:
        chosen = best(0)[1]
    labels = np.full(n, -1)
    for lab, cid in enumerate(sorted(chosen)):
        labels[clusters[cid]["points"]] = lab
    return labels


def same_partition(a, b) -> bool:
    """Equal up to renaming of non-noise labels; noise must match exactly."""
    a, b = np.asarray(a), np.asarray(b)
    if a.shape != b.shape or np.any((a == -1) != (b == -1)):
        return False
    fwd, back = {}, {}
    for x, y in zip(a[a != -1], b[b != -1]):
        if fwd.setdefault(int(x), int(y)) != int(y) or back.setdefault(int(y), int(x)) != int(x):
            return False
    return True


# -- graphs ---------------------------------------------------------------------------

def all_shortest_paths_dfs(adj, a, b):
    """Every shortest simple path from ``a`` to ``b`` by exhaustive DFS with length pruning."""
    best = [math.inf]
    found = []

    def dfs(v, path, seen):
        if len(path) - 1 > best[0]:
            return
        if v == b:
            if len(path) - 1 < best[0]:
                best[0] = len(path) - 1
                found.clear()
            found.append(list(path))
            return
        for w in adj[v]:
            if w not in seen:
                seen.add(w)
                path.append(w)
                dfs(w, path, seen)
                path.pop()
                seen.discard(w)

    dfs(a, [a], {a})
    return sorted(found)


# -- calculus and optimization --------------------------------------------------------

def central_diff(f, x, h=1e-6):
    """Gradient of scalar ``f`` at array ``x`` by central differences."""
    x = np.array(x, dtype=float)
    g = np.zeros_like(x)
    for idx in np.ndindex(x.shape):
        xp, xm = x.copy(), x.copy()
        xp[idx] += h
        xm[idx] -= h
        g[idx] = (f(xp) - f(xm)) / (2 * h)
    return g


def rel_err(a, b) -> float:
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    denom = max(np.abs(a).max(), np.abs(b).max(), 1e-12)
    return float(np.abs(a - b).max() / denom)


def adam_reference(p0, grads, lr=1e-3, b1=0.9, b2=0.999, eps=1e-8):
    """Adam applied to a flat list of floats, one scalar at a time."""
    p = [float(x) for x in p0]
    m = [0.0] * len(p)
    v = [0.0] * len(p)
    for t, g in enumerate(grads, start=1):
        for i, gi in enumerate(g):
            m[i] = b1 * m[i] + (1 - b1) * gi
            v[i] = b2 * v[i] + (1 - b2) * gi * gi
            mhat = m[i] / (1 - b1 ** t)
            vhat = v[i] / (1 - b2 ** t)
            p[i] -= lr * mhat / (math.sqrt(vhat) + eps)
    return p


# -- scores -----------------------------------------------------------------------------

def silhouette_loops(points, labels):
    points = [np.asarray(p, dtype=float) for p in np.atleast_2d(np.asarray(points, dtype=float))]
    labels = list(labels)
    clusters = sorted(set(labels))
    out = []
    for i, p in enumerate(points):
        own = [j for j, l in enumerate(labels) if l == labels[i] and j != i]
        if not own:
            out.append(0.0)
            continue
        a = sum(euclid(p, points[j]) for j in own) / len(own)
        b = min(sum(euclid(p, points[j]) for j, l in enumerate(labels) if l == c)
                / sum(1 for l in labels if l == c) for c in clusters if c != labels[i])
        out.append((b - a) / max(a, b) if max(a, b) > 0 else 0.0)
    return sum(out) / len(out)


def entropy_h_c(truth, pred):
    """Homogeneity and completeness from hand-counted entropies."""
    n = len(truth)

    def h(xs):
        return -sum(c / n * math.log(c / n) for c in Counter(xs).values())

    def h_cond(xs, ys):
        joint = Counter(zip(xs, ys))
        ycount = Counter(ys)
        return -sum(c / n * math.log(c / ycount[y]) for (x, y), c in joint.items())

    ht, hp = h(truth), h(pred)
    hom = 1.0 if ht == 0 else 1 - h_cond(truth, pred) / ht
    com = 1.0 if hp == 0 else 1 - h_cond(pred, truth) / hp
    return hom, com
