"""Clustering and planning scores for a latent mapping.

Ground truth is read from dataset sidecars only.
"""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

import numpy as np

from . import worlds
from .cluster import NOISE, hdbscan, pairwise_distances
from .encoders import encode_tuples
from .errors import EmptyHoldout, EmptyInput, NoClusters, OneCluster
from .lsr import Roadmap, build_lsr, build_reference_graph, nearest_node, shortest_paths
from .synthgen import Dataset
from .worlds import WorldSpec


def _entropy(counts: np.ndarray) -> float:
    counts = counts[counts > 0]
    p = counts / counts.sum()
    return float(-(p * np.log(p)).sum())


def _conditional_entropy(joint: np.ndarray) -> float:
    """H(row variable | column variable) from a contingency table."""
    n = joint.sum()
    col = joint.sum(axis=0)
    nz = joint > 0
    ratio = joint[nz] / np.broadcast_to(col, joint.shape)[nz]
    return float(-(joint[nz] / n * np.log(ratio)).sum())


def homogeneity_completeness(truth, pred) -> tuple[float, float]:
    truth = np.asarray(truth)
    pred = np.asarray(pred)
    if len(truth) != len(pred):
        raise ValueError("label arrays differ in length")
    if len(truth) == 0:
        raise EmptyInput("no labels")
    t_ids, t_inv = np.unique(truth, return_inverse=True)
    p_ids, p_inv = np.unique(pred, return_inverse=True)
    joint = np.zeros((len(t_ids), len(p_ids)))
    np.add.at(joint, (t_inv, p_inv), 1)
    h_truth = _entropy(joint.sum(axis=1))
    h_pred = _entropy(joint.sum(axis=0))
    h = 1.0 if h_truth == 0 else 1.0 - _conditional_entropy(joint) / h_truth
    c = 1.0 if h_pred == 0 else 1.0 - _conditional_entropy(joint.T) / h_pred
    return h, c


def silhouette_samples(points, labels) -> np.ndarray:
    x = np.asarray(points, dtype=float)
    labels = np.asarray(labels)
    ids, inv = np.unique(labels, return_inverse=True)
    if len(ids) < 2:
        raise OneCluster("silhouette needs at least two clusters")
    sizes = np.bincount(inv).astype(float)
    onehot = np.zeros((len(x), len(ids)))
    onehot[np.arange(len(x)), inv] = 1.0
    out = np.empty(len(x))
    chunk = max(1, 2_000_000 // max(len(x), 1))
    for start in range(0, len(x), chunk):
        block = x[start:start + chunk]
        d = pairwise_distances(block, x)
        sums = d @ onehot
        own = inv[start:start + chunk]
        rows = np.arange(len(block))
        own_size = sizes[own]
        intra = np.where(own_size > 1, sums[rows, own] / np.maximum(own_size - 1, 1), 0.0)
        means = sums / sizes
        means[rows, own] = np.inf
        closest = means.min(axis=1)
        denom = np.maximum(intra, closest)
        s = np.where(denom > 0, (closest - intra) / np.where(denom > 0, denom, 1.0), 0.0)
        out[start:start + len(block)] = np.where(own_size > 1, s, 0.0)
    return out


def mean_silhouette(points, labels) -> float:
    """Mean silhouette over non-noise points; singleton-cluster points score 0."""
    labels = np.asarray(labels)
    keep = labels != NOISE
    return float(silhouette_samples(np.asarray(points, dtype=float)[keep], labels[keep]).mean())


def node_true_states(rm: Roadmap, truth) -> list[int]:
    """Majority true state per roadmap node; ties go to the smallest bitmask."""
    truth = np.asarray(truth)
    out = []
    for members in rm.members:
        counts = Counter(int(s) for s in truth[members])
        best = max(counts.values())
        out.append(min(s for s, c in counts.items() if c == best))
    return out


def edge_correctness(rm: Roadmap, node_truth, spec: WorldSpec) -> float:
    """Fraction of roadmap edges that are legal world transitions (1.0 for no edges)."""
    if rm.n_edges == 0:
        return 1.0
    legal = sum(worlds.is_legal_transition(spec, node_truth[a], node_truth[b]) for a, b in rm.edges)
    return legal / rm.n_edges


def path_is_correct(path: list[int], node_truth, spec: WorldSpec, start_state: int, goal_state: int) -> bool:
    if not path:
        return False
    if node_truth[path[0]] != start_state or node_truth[path[-1]] != goal_state:
        return False
    return all(worlds.is_legal_transition(spec, node_truth[a], node_truth[b]) for a, b in zip(path, path[1:]))


@dataclass
class PathScores:
    pct_all: float
    pct_any: float
    n_truncated: int = 0
    n_unreachable: int = 0


def holdout_pool(model, holdout: Dataset, rng: np.random.Generator | None = None):
    """Encodings and true states of every non-augmented holdout observation."""
    ds = holdout.non_augmented()
    if len(ds) == 0:
        raise EmptyHoldout("holdout has no tuples")
    z_i, z_j = encode_tuples(model, ds, rng)
    return np.concatenate([z_i, z_j]), np.concatenate([ds.sidecar.state_i, ds.sidecar.state_j]).astype(np.int64)


def path_metrics(rm: Roadmap, model, holdout: Dataset, spec: WorldSpec, trials: int = 1000, cap: int = 100,
                 rng: np.random.Generator | None = None, node_truth=None, truth=None,
                 mode: str = "centroid") -> PathScores:
    """Plan between random holdout observations and score the returned paths.

    A trial counts for ``pct_any`` when at least one path is correct and for
    ``pct_all`` when there is a path and every path is correct. Unreachable
    goals count as failures.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(0) if rng is None else rng
    z, states = holdout_pool(model, holdout, rng)
    if node_truth is None:
        if truth is None:
            raise ValueError("need node_truth or per-member truth")
        node_truth = node_true_states(rm, truth)
    picks = rng.integers(len(z), size=(trials, 2))
    n_all = n_any = n_trunc = n_unreach = 0
    cache: dict[tuple[int, int], tuple[list[bool], bool]] = {}
    nearest = {}
    for a, b in picks:
        for k in (a, b):
            if k not in nearest:
                nearest[k] = nearest_node(rm, z[k], mode)
        na, nb = nearest[a], nearest[b]
        if (na, nb) not in cache:
            res = shortest_paths(rm, na, nb, cap)
            cache[(na, nb)] = (res.paths, res.truncated)
        paths, truncated = cache[(na, nb)]
        n_trunc += truncated
        if not paths:
            n_unreach += 1
            continue
        ok = [path_is_correct(p, node_truth, spec, int(states[a]), int(states[b])) for p in paths]
        n_all += all(ok)
        n_any += any(ok)
    return PathScores(100.0 * n_all / trials, 100.0 * n_any / trials, n_trunc, n_unreach)


RESULT_COLUMNS = ["model", "variant", "dataset", "seed", "n_nodes", "h_c", "c_e", "s_c", "n_edges", "c_c",
                  "pct_all", "pct_any", "noise_frac", "status"]


@dataclass
class EvalReport:
    n_nodes: int
    n_edges: int
    h_c: float
    c_c: float
    s_c: float
    c_e: float
    pct_all: float
    pct_any: float
    noise_frac: float = 0.0
    model: str = ""
    variant: str = "base"
    dataset: str = ""
    seed: int = 0
    status: str = "ok"
    extra: dict = field(default_factory=dict)

    def row(self) -> dict:
        return {k: getattr(self, k) for k in RESULT_COLUMNS}

    @classmethod
    def failed(cls, status: str, **meta) -> "EvalReport":
        return cls(0, 0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, status=status, **meta)


def evaluate(encoder, train_ds: Dataset, holdout_ds: Dataset, spec: WorldSpec, m: int = 5, trials: int = 1000,
             rng: np.random.Generator | None = None, cap: int = 100, min_samples: int | None = None,
             mode: str = "centroid", **meta) -> EvalReport:
    """Build the roadmap from the non-augmented training tuples and score it."""
    rng = np.random.default_rng(0) if rng is None else rng
    ds = train_ds.non_augmented()
    z_i, z_j = encode_tuples(encoder, ds, rng)
    g = build_reference_graph(z_i, z_j, ds.s)
    truth = np.concatenate([ds.sidecar.state_i, ds.sidecar.state_j]).astype(np.int64)
    clustering = hdbscan(g.points, m, min_samples)
    try:
        rm = build_lsr(g, clustering)
    except NoClusters:
        return EvalReport.failed("no_clusters", **meta)
    keep = clustering.labels != NOISE
    h_c, c_c = homogeneity_completeness(truth[keep], clustering.labels[keep])
    s_c = mean_silhouette(g.points, clustering.labels) if clustering.n_clusters >= 2 else 0.0
    node_truth = node_true_states(rm, truth)
    c_e = edge_correctness(rm, node_truth, spec)
    scores = path_metrics(rm, encoder, holdout_ds, spec, trials, cap, rng, node_truth=node_truth, mode=mode)
    report = EvalReport(rm.n_nodes, rm.n_edges, h_c, c_c, s_c, c_e, scores.pct_all, scores.pct_any,
                        clustering.noise_fraction, **meta)
    report.extra.update(truncated=scores.n_truncated, unreachable=scores.n_unreachable,
                        roadmap=rm, clustering=clustering, node_truth=node_truth, truth=truth)
    return report
