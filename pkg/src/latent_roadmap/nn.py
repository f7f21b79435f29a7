"""Dense feed-forward networks with hand-written backprop and Adam.

Everything works on row batches: ``x`` has shape ``(n, in_dim)``; a single
vector is promoted to a batch of one and demoted on the way out.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import DimensionMismatch, ShapeMismatch

RELU = "relu"
IDENTITY = "identity"
_ACTIVATIONS = (RELU, IDENTITY)


@dataclass
class Tape:
    inputs: list[np.ndarray]
    pre: list[np.ndarray]
    squeeze: bool


class MLP:
    """Affine layers, each followed by ReLU or identity."""

    def __init__(self, layer_dims: Sequence[int], activations: Sequence[str], rng=None, weights=None, biases=None):
        layer_dims = [int(d) for d in layer_dims]
        if len(layer_dims) < 2:
            raise DimensionMismatch("an MLP needs at least an input and an output dim")
        if len(activations) != len(layer_dims) - 1:
            raise DimensionMismatch("one activation per layer is required")
        for act in activations:
            if act not in _ACTIVATIONS:
                raise ValueError(f"unknown activation {act!r}")
        self.layer_dims = layer_dims
        self.activations = list(activations)
        if weights is None:
            rng = np.random.default_rng() if rng is None else rng
            weights, biases = [], []
            for d_in, d_out in zip(layer_dims[:-1], layer_dims[1:]):
                # He init keeps ReLU activations at unit scale
                weights.append(rng.normal(0.0, np.sqrt(2.0 / d_in), size=(d_in, d_out)))
                biases.append(np.zeros(d_out))
        self.weights = [np.asarray(w, dtype=float) for w in weights]
        self.biases = [np.asarray(b, dtype=float) for b in biases]
        for w, b, d_in, d_out in zip(self.weights, self.biases, layer_dims[:-1], layer_dims[1:]):
            if w.shape != (d_in, d_out) or b.shape != (d_out,):
                raise DimensionMismatch(f"layer shape {w.shape}/{b.shape} does not match dims {d_in}->{d_out}")

    @property
    def in_dim(self) -> int:
        return self.layer_dims[0]

    @property
    def out_dim(self) -> int:
        return self.layer_dims[-1]

    def params(self) -> list[np.ndarray]:
        """Parameter arrays in a fixed order: W0, b0, W1, b1, ..."""
        out = []
        for w, b in zip(self.weights, self.biases):
            out += [w, b]
        return out

    def copy(self) -> "MLP":
        return MLP(self.layer_dims, self.activations,
                   weights=[w.copy() for w in self.weights],
                   biases=[b.copy() for b in self.biases])

    def forward(self, x) -> tuple[np.ndarray, Tape]:
        x = np.asarray(x, dtype=float)
        squeeze = x.ndim == 1
        if squeeze:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise DimensionMismatch(f"expected input dim {self.in_dim}, got shape {x.shape}")
        inputs, pre = [], []
        h = x
        for w, b, act in zip(self.weights, self.biases, self.activations):
            inputs.append(h)
            a = h @ w + b
            pre.append(a)
            h = np.maximum(a, 0.0) if act == RELU else a
        return (h[0] if squeeze else h), Tape(inputs, pre, squeeze)

    def __call__(self, x) -> np.ndarray:
        return self.forward(x)[0]

    def backward(self, tape: Tape, grad_output) -> tuple[list[np.ndarray], np.ndarray]:
        """Gradients of ``sum(output * grad_output)``.

        Returns parameter gradients in :meth:`params` order and the input
        gradient.
        """
        g = np.asarray(grad_output, dtype=float)
        if tape.squeeze:
            g = g[None, :]
        if g.shape != tape.pre[-1].shape:
            raise DimensionMismatch(f"grad_output shape {g.shape} does not match output {tape.pre[-1].shape}")
        grads: list[np.ndarray] = [None] * (2 * len(self.weights))
        for i in reversed(range(len(self.weights))):
            if self.activations[i] == RELU:
                # subgradient at 0 is 0
                g = g * (tape.pre[i] > 0)
            grads[2 * i] = tape.inputs[i].T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, (g[0] if tape.squeeze else g)


@dataclass
class AdamState:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    t: int = 0
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]) -> None:
    """Bias-corrected Adam update, applied to ``params`` in place."""
    if len(params) != len(grads):
        raise ShapeMismatch("params and grads differ in length")
    if not state.m:
        state.m = [np.zeros_like(p) for p in params]
        state.v = [np.zeros_like(p) for p in params]
    if len(state.m) != len(params):
        raise ShapeMismatch("optimizer state does not match the parameter list")
    state.t += 1
    c1 = 1.0 - state.beta1 ** state.t
    c2 = 1.0 - state.beta2 ** state.t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape or m.shape != p.shape:
            raise ShapeMismatch(f"shape mismatch {p.shape} vs {g.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        p -= state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)


@dataclass
class TrainConfig:
    epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    seed: int = 0
    # fraction of epochs over which alpha/gamma ramp from 0 to their final value
    ramp_fraction: float = 0.25

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.batch_size < 2:
            raise ValueError("batch_size must be >= 2")


def grad_check(params: list[np.ndarray], loss_and_grads: Callable[[], tuple[float, list[np.ndarray]]],
               h: float = 1e-4) -> float:
    """Largest relative error between analytic and central-difference gradients.

    ``loss_and_grads`` must read ``params`` (which are perturbed in place and
    restored) and return ``(loss, grads)`` with grads aligned to ``params``.
    The error of one array is ``|g_a - g_fd| / max(|g_a|, |g_fd|)`` in the
    2-norm, so arrays whose true gradient is exactly zero contribute zero.
    """
    _, analytic = loss_and_grads()
    analytic = [np.array(g, dtype=float, copy=True) for g in analytic]
    worst = 0.0
    for p, ga in zip(params, analytic):
        fd = np.zeros_like(p)
        flat = p.reshape(-1)
        fd_flat = fd.reshape(-1)
        for k in range(flat.size):
            orig = flat[k]
            flat[k] = orig + h
            lp = loss_and_grads()[0]
            flat[k] = orig - h
            lm = loss_and_grads()[0]
            flat[k] = orig
            fd_flat[k] = (lp - lm) / (2 * h)
        denom = max(np.linalg.norm(ga), np.linalg.norm(fd))
        if denom > 0:
            worst = max(worst, float(np.linalg.norm(ga - fd) / denom))
    return worst


def assert_finite(params: list[np.ndarray]) -> bool:
    return all(np.all(np.isfinite(p)) for p in params)
