"""Latent mappings, their losses and training loops.

Model kinds:

    RAW    identity on observations (no learning, baseline)
    PCA    principal components of the training observations
    AE     auto-encoder, MSE reconstruction
    BVAE   beta-VAE, MSE reconstruction + beta * KL
    PCAE   AE + alpha * pairwise contrastive loss
    PCVAE  beta-VAE + gamma * pairwise contrastive loss
    PCSIA  Siamese encoder trained on the pairwise contrastive loss only
    CESIA  Siamese encoder trained on NT-Xent over similar pairs

Losses operate on row batches and return ``(value, gradient)`` so the
training code can chain them into :mod:`latent_roadmap.nn` backprop.
"""
from __future__ import annotations

import enum
import json
import logging
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np

from . import nn, worlds
from .errors import (DegenerateData, Diverged, DimensionMismatch, EmptyBatch, IoError, NoSimilarPairsInBatch,
                     NotFitted, UnknownState, ZeroVector)
from .synthgen import Dataset, TrainingData
from .worlds import WorldSpec, WorldState

log = logging.getLogger(__name__)


class ModelKind(str, enum.Enum):
    RAW = "RAW"
    PCA = "PCA"
    AE = "AE"
    BVAE = "BVAE"
    PCAE = "PCAE"
    PCVAE = "PCVAE"
    PCSIA = "PCSIA"
    CESIA = "CESIA"


TRAINABLE = (ModelKind.AE, ModelKind.BVAE, ModelKind.PCAE, ModelKind.PCVAE, ModelKind.PCSIA, ModelKind.CESIA)
CONTRASTIVE = (ModelKind.PCAE, ModelKind.PCVAE, ModelKind.PCSIA, ModelKind.CESIA)
STANDARD_MODELS = (ModelKind.PCA, ModelKind.AE, ModelKind.BVAE, ModelKind.PCAE, ModelKind.PCVAE,
                ModelKind.PCSIA, ModelKind.CESIA)


@dataclass
class Hyper:
    alpha: float = 100.0
    gamma: float = 2500.0
    beta: float = 1.5
    # None: measured from a pretrained AE / beta-VAE (PCAE, PCVAE), pcsia_margin for PCSIA
    d_m: float | None = None
    pcsia_margin: float = 0.5
    tau: float = 0.5
    z_dim: int = 12
    pc_distance: str = "l1sq"
    hidden: tuple[int, ...] = (64, 32)

    def __post_init__(self):
        for name in ("alpha", "gamma", "beta", "tau"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.tau <= 0:
            raise ValueError("tau must be positive")
        if self.d_m is not None and self.d_m <= 0:
            raise ValueError("d_m must be positive")
        if self.pcsia_margin <= 0:
            raise ValueError("pcsia_margin must be positive")
        if self.pc_distance not in ("l1sq", "l2sq"):
            raise ValueError("pc_distance must be 'l1sq' or 'l2sq'")
        self.hidden = tuple(int(h) for h in self.hidden)


# -- losses ---------------------------------------------------------------------

def loss_recon(o, o_rec) -> tuple[float, np.ndarray]:
    """Per-sample MSE averaged over the batch; gradient w.r.t. ``o_rec``."""
    o = np.asarray(o, dtype=float)
    o_rec = np.asarray(o_rec, dtype=float)
    if o.shape != o_rec.shape:
        raise DimensionMismatch(f"{o.shape} vs {o_rec.shape}")
    diff = o_rec - o
    if diff.ndim == 1:
        return float(np.mean(diff ** 2)), 2.0 * diff / diff.size
    n, d = diff.shape
    return float(np.mean(diff ** 2)), 2.0 * diff / (n * d)


def loss_kl(mu, logvar) -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """KL(N(mu, exp(logvar)) || N(0, I)), summed over dims, batch-averaged."""
    mu = np.asarray(mu, dtype=float)
    logvar = np.asarray(logvar, dtype=float)
    if mu.shape != logvar.shape:
        raise DimensionMismatch(f"{mu.shape} vs {logvar.shape}")
    ev = np.exp(logvar)
    per = 0.5 * (mu ** 2 + ev - 1.0 - logvar).sum(axis=-1)
    n = 1 if mu.ndim == 1 else len(mu)
    return float(np.mean(per)), (mu / n, 0.5 * (ev - 1.0) / n)


def pair_distance(z_i, z_j, kind: str = "l1sq") -> tuple[np.ndarray, np.ndarray]:
    """Pair distances and their gradient w.r.t. ``z_i`` (negate for ``z_j``)."""
    delta = np.asarray(z_i, dtype=float) - np.asarray(z_j, dtype=float)
    if kind == "l1sq":
        l1 = np.abs(delta).sum(axis=-1)
        return l1 ** 2, 2.0 * l1[..., None] * np.sign(delta)
    return (delta ** 2).sum(axis=-1), 2.0 * delta


def loss_pc(z_i, z_j, s, d_m: float, kind: str = "l1sq") -> tuple[float, tuple[np.ndarray, np.ndarray]]:
    """Pairwise contrastive loss averaged over pairs.

    Similar pairs (s=1) pay their distance; action pairs (s=0) pay the hinge
    ``max(0, d_m - distance)``.
    """
    z_i = np.asarray(z_i, dtype=float)
    z_j = np.asarray(z_j, dtype=float)
    if z_i.shape != z_j.shape:
        raise DimensionMismatch(f"{z_i.shape} vs {z_j.shape}")
    single = z_i.ndim == 1
    if single:
        z_i, z_j = z_i[None], z_j[None]
    s = np.broadcast_to(np.asarray(s), (len(z_i),))
    dist, g = pair_distance(z_i, z_j, kind)
    similar = s == 1
    active = ~similar & (dist < d_m)
    per = np.where(similar, dist, np.maximum(0.0, d_m - dist))
    coef = np.where(similar, 1.0, np.where(active, -1.0, 0.0)) / len(z_i)
    gi = coef[:, None] * g
    if single:
        return float(per[0]), (gi[0], -gi[0])
    return float(per.mean()), (gi, -gi)


def loss_ntxent(batch_z, pairing, tau: float) -> tuple[float, np.ndarray]:
    """Normalized temperature-scaled cross-entropy over a batch of 2N vectors.

    ``pairing[k]`` is the index of ``k``'s positive partner; every other
    element of the batch is a negative. The value is the mean over all 2N
    anchors.
    """
    z = np.asarray(batch_z, dtype=float)
    pairing = np.asarray(pairing, dtype=int)
    m = len(z)
    if m < 2 or m % 2:
        raise ValueError("NT-Xent needs an even batch of at least 2 vectors")
    if sorted(pairing.tolist()) != list(range(m)) or np.any(pairing[pairing] != np.arange(m)) \
            or np.any(pairing == np.arange(m)):
        raise ValueError("pairing must be a perfect matching")
    norms = np.linalg.norm(z, axis=1)
    if np.any(norms < 1e-12):
        raise ZeroVector("cosine similarity is undefined for a zero vector")
    u = z / norms[:, None]
    logits = u @ u.T / tau
    np.fill_diagonal(logits, -np.inf)
    top = logits.max(axis=1, keepdims=True)
    ex = np.exp(logits - top)
    denom = ex.sum(axis=1, keepdims=True)
    log_z = top[:, 0] + np.log(denom[:, 0])
    rows = np.arange(m)
    loss = float(np.mean(log_z - logits[rows, pairing]))
    p = ex / denom
    p[rows, pairing] -= 1.0
    p /= m
    g_u = (p + p.T) @ u / tau
    g_z = (g_u - u * (u * g_u).sum(axis=1, keepdims=True)) / norms[:, None]
    return loss, g_z


def similar_pair_batch(z_i, z_j) -> tuple[np.ndarray, np.ndarray]:
    """Stack ``N`` pairs as ``[z_i; z_j]`` with the matching pairing map."""
    n = len(z_i)
    batch = np.concatenate([z_i, z_j])
    pairing = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
    return batch, pairing


# -- models ---------------------------------------------------------------------

@dataclass
class EncoderModel:
    kind: ModelKind
    hyper: Hyper = field(default_factory=Hyper)
    mean: np.ndarray | None = None
    components: np.ndarray | None = None
    enc: nn.MLP | None = None
    dec: nn.MLP | None = None
    seed: int = 0
    degenerate: bool = False
    info: dict = field(default_factory=dict)

    @property
    def z_dim(self) -> int:
        if self.kind is ModelKind.PCA:
            return self.components.shape[0]
        if self.kind is ModelKind.RAW:
            return -1
        return self.hyper.z_dim

    def encoder_params(self) -> list[np.ndarray]:
        return self.enc.params() if self.enc is not None else []

    def params(self) -> list[np.ndarray]:
        out = self.encoder_params()
        if self.dec is not None:
            out += self.dec.params()
        return out

    def copy(self) -> "EncoderModel":
        return replace(self, mean=None if self.mean is None else self.mean.copy(),
                       components=None if self.components is None else self.components.copy(),
                       enc=None if self.enc is None else self.enc.copy(),
                       dec=None if self.dec is None else self.dec.copy(),
                       hyper=replace(self.hyper), info=dict(self.info))


def _is_vae(kind: ModelKind) -> bool:
    return kind in (ModelKind.BVAE, ModelKind.PCVAE)


def encode(model: EncoderModel, o) -> np.ndarray:
    """Deterministic latent point(s) for observation(s) ``o``.

    VAE-type models return the posterior mean; nothing is sampled.
    """
    o = np.asarray(o, dtype=float)
    if model.kind is ModelKind.RAW:
        return o.copy()
    if model.kind is ModelKind.PCA:
        if model.components is None:
            raise NotFitted("PCA model has no components")
        if o.shape[-1] != model.components.shape[1]:
            raise DimensionMismatch(f"expected dim {model.components.shape[1]}, got {o.shape[-1]}")
        return (o - model.mean) @ model.components.T
    if model.enc is None:
        raise NotFitted(f"{model.kind.value} model has no encoder")
    out = model.enc(o)
    if _is_vae(model.kind):
        return out[..., :model.hyper.z_dim]
    return out


def new_model(kind: ModelKind | str, D: int, hyper: Hyper, rng: np.random.Generator, seed: int = 0) -> EncoderModel:
    kind = ModelKind(kind)
    if kind in (ModelKind.RAW, ModelKind.PCA):
        return EncoderModel(kind, hyper, seed=seed)
    z = hyper.z_dim
    dims = [D, *hyper.hidden]
    acts = [nn.RELU] * len(hyper.hidden) + [nn.IDENTITY]
    enc_out = 2 * z if _is_vae(kind) else z
    enc_acts = list(acts)
    if kind is ModelKind.PCSIA:
        # non-negative codes; CE-Siamese keeps a linear head since cosine needs nonzero vectors
        enc_acts[-1] = nn.RELU
    enc = nn.MLP(dims + [enc_out], enc_acts, rng)
    dec = None
    if kind not in (ModelKind.PCSIA, ModelKind.CESIA):
        dec = nn.MLP([z, *reversed(hyper.hidden), D], acts, rng)
    return EncoderModel(kind, hyper, enc=enc, dec=dec, seed=seed)


def fit_pca(observations, z_dim: int = 12, strict: bool = False) -> EncoderModel:
    """Top-``z_dim`` eigenvectors of the sample covariance.

    With fewer than ``z_dim`` non-trivial directions the remaining rows are an
    arbitrary orthonormal completion and the model is flagged ``degenerate``;
    ``strict=True`` raises instead.
    """
    x = np.asarray(observations, dtype=float)
    n, d = x.shape
    if n < z_dim + 1:
        raise DegenerateData(f"PCA with {z_dim} components needs at least {z_dim + 1} samples")
    if z_dim > d:
        raise DegenerateData(f"cannot extract {z_dim} components from {d}-dim data")
    mean = x.mean(axis=0)
    cov = (x - mean).T @ (x - mean) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals, evecs = evals[order], evecs[:, order]
    tol = max(evals[0], 0.0) * d * np.finfo(float).eps
    rank = int(np.sum(evals > tol))
    degenerate = rank < z_dim
    if degenerate:
        if strict:
            raise DegenerateData(f"covariance rank {rank} < {z_dim}")
        log.warning("PCA: covariance rank %d < %d, padding with an orthonormal completion", rank, z_dim)
    components = evecs[:, :z_dim].T.copy()
    # sign convention: largest-magnitude entry of each component is positive
    flip = np.sign(components[np.arange(z_dim), np.abs(components).argmax(axis=1)])
    components *= np.where(flip == 0, 1.0, flip)[:, None]
    model = EncoderModel(ModelKind.PCA, Hyper(z_dim=z_dim), mean=mean, components=components,
                         degenerate=degenerate)
    model.info["explained_variance"] = evals[:z_dim].tolist()
    return model


# -- batch objectives -------------------------------------------------------------

@dataclass
class LossWeights:
    """Current (possibly ramped) loss weights for one optimization step."""
    alpha: float
    gamma: float
    beta: float
    d_m: float


def _recon_terms(model: EncoderModel, o: np.ndarray, beta: float, eps: np.ndarray | None, scale: float):
    """Reconstruction (+KL) value for rows ``o`` and a backward closure.

    Returns ``(value, z_for_pc, backward)`` where ``backward(g_z_extra)`` yields
    encoder and decoder gradients, adding ``g_z_extra`` at the point the
    contrastive term reads (``mu`` for VAEs, the code otherwise).
    """
    h, enc_tape = model.enc.forward(o)
    z_dim = model.hyper.z_dim
    if _is_vae(model.kind):
        mu, logvar = h[:, :z_dim], h[:, z_dim:]
        std = np.exp(0.5 * logvar)
        z = mu + std * eps
    else:
        mu = z = h
    rec, dec_tape = model.dec.forward(z)
    l_rec, g_rec = loss_recon(o, rec)
    value = l_rec
    if _is_vae(model.kind):
        l_kl, (g_mu_kl, g_lv_kl) = loss_kl(mu, logvar)
        value += beta * l_kl

    def backward(g_pc):
        g_dec, g_z = model.dec.backward(dec_tape, scale * g_rec)
        if _is_vae(model.kind):
            g_mu = g_z + scale * beta * g_mu_kl
            g_lv = g_z * eps * 0.5 * std + scale * beta * g_lv_kl
            if g_pc is not None:
                g_mu = g_mu + g_pc
            g_h = np.concatenate([g_mu, g_lv], axis=1)
        else:
            g_h = g_z if g_pc is None else g_z + g_pc
        g_enc, _ = model.enc.backward(enc_tape, g_h)
        return g_enc, g_dec

    return value, mu, backward


def batch_objective(model: EncoderModel, obs_i: np.ndarray, obs_j: np.ndarray, s: np.ndarray,
                    w: LossWeights, eps_i: np.ndarray | None = None, eps_j: np.ndarray | None = None,
                    pc_distance: str | None = None):
    """Loss and parameter gradients (``model.params()`` order) on one tuple batch.

    For CESIA every tuple in the batch must be a similar pair. ``eps_*`` are
    the reparameterization draws for VAE-type models.
    """
    kind = model.kind
    if len(s) == 0:
        raise EmptyBatch("empty batch")
    dist_kind = pc_distance or model.hyper.pc_distance

    if kind is ModelKind.CESIA:
        if not np.all(s == 1):
            raise NoSimilarPairsInBatch("CE-Siamese batches hold similar pairs only")
        z, tape = model.enc.forward(np.concatenate([obs_i, obs_j]))
        n = len(obs_i)
        pairing = np.concatenate([np.arange(n, 2 * n), np.arange(n)])
        value, g_z = loss_ntxent(z, pairing, model.hyper.tau)
        grads, _ = model.enc.backward(tape, g_z)
        return value, grads

    if kind is ModelKind.PCSIA:
        z, tape = model.enc.forward(np.concatenate([obs_i, obs_j]))
        n = len(obs_i)
        value, (g_i, g_j) = loss_pc(z[:n], z[n:], s, w.d_m, dist_kind)
        grads, _ = model.enc.backward(tape, np.concatenate([g_i, g_j]))
        return value, grads

    if kind not in (ModelKind.AE, ModelKind.BVAE, ModelKind.PCAE, ModelKind.PCVAE):
        raise ValueError(f"{kind.value} has no trainable objective")
    if _is_vae(kind):
        if eps_i is None or eps_j is None:
            raise ValueError("VAE objectives need reparameterization noise")
    # each side's reconstruction term carries weight 1/2
    v_i, z_i, back_i = _recon_terms(model, obs_i, w.beta, eps_i, 0.5)
    v_j, z_j, back_j = _recon_terms(model, obs_j, w.beta, eps_j, 0.5)
    value = 0.5 * (v_i + v_j)
    g_pc_i = g_pc_j = None
    weight = w.alpha if kind is ModelKind.PCAE else w.gamma if kind is ModelKind.PCVAE else 0.0
    if weight > 0:
        l_pc, (g_pc_i, g_pc_j) = loss_pc(z_i, z_j, s, w.d_m, dist_kind)
        value += weight * l_pc
        g_pc_i, g_pc_j = weight * g_pc_i, weight * g_pc_j
    ge_i, gd_i = back_i(g_pc_i)
    ge_j, gd_j = back_j(g_pc_j)
    grads = [a + b for a, b in zip(ge_i + gd_i, ge_j + gd_j)]
    return value, grads


# -- training -------------------------------------------------------------------

@dataclass
class TrainHistory:
    initial_loss: float
    epoch_loss: list[float] = field(default_factory=list)


def _weights_at(kind: ModelKind, hyper: Hyper, epoch: int, cfg: nn.TrainConfig, d_m: float) -> LossWeights:
    ramp_epochs = max(1, int(round(cfg.ramp_fraction * cfg.epochs)))
    ramp = min(1.0, (epoch + 1) / ramp_epochs)
    beta = hyper.beta * (epoch + 1) / cfg.epochs
    return LossWeights(hyper.alpha * ramp, hyper.gamma * ramp, beta, d_m)


def _as_training_data(ds) -> TrainingData:
    if isinstance(ds, Dataset):
        return ds.training_view()
    if isinstance(ds, TrainingData):
        return ds
    raise TypeError("training expects a Dataset or TrainingData")


def mean_action_pair_distance(model: EncoderModel, data: TrainingData, kind: str = "l1sq") -> float:
    mask = (data.s == 0) & ~data.augmented
    if not mask.any():
        raise ValueError("no action pairs to measure")
    dist, _ = pair_distance(encode(model, data.obs_i[mask]), encode(model, data.obs_j[mask]), kind)
    return float(dist.mean())


def train(kind: ModelKind | str, ds, cfg: nn.TrainConfig, hyper: Hyper | None = None,
          rng: np.random.Generator | None = None, pretrained: EncoderModel | None = None
          ) -> tuple[EncoderModel, TrainHistory]:
    """Fit one model kind on tuple data.

    ``ds`` may be a :class:`Dataset`; only its training view (observations,
    ``s`` and the augmented flags) is read. For PCAE/PCVAE without an explicit
    ``d_m``, the margin is the mean action-pair distance under ``pretrained``
    (or an AE / beta-VAE trained here with the same config).
    """
    kind = ModelKind(kind)
    hyper = replace(hyper) if hyper is not None else Hyper()
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    data = _as_training_data(ds)
    if len(data.s) == 0:
        raise EmptyBatch("empty training set")
    D = data.obs_i.shape[1]

    if kind is ModelKind.RAW:
        return EncoderModel(kind, hyper, seed=cfg.seed), TrainHistory(0.0)
    if kind is ModelKind.PCA:
        model = fit_pca(np.concatenate([data.obs_i, data.obs_j]), hyper.z_dim)
        model.seed = cfg.seed
        return model, TrainHistory(0.0)

    d_m = hyper.d_m
    if kind is ModelKind.PCSIA and d_m is None:
        d_m = hyper.pcsia_margin
    if kind in (ModelKind.PCAE, ModelKind.PCVAE) and d_m is None:
        if pretrained is None:
            base = ModelKind.AE if kind is ModelKind.PCAE else ModelKind.BVAE
            pretrained, _ = train(base, data, cfg, hyper, rng)
        d_m = mean_action_pair_distance(pretrained, data, hyper.pc_distance)
        if not np.isfinite(d_m) or d_m <= 0:
            raise Diverged(f"measured margin d_m={d_m} is unusable")
    hyper.d_m = d_m if d_m is not None else hyper.d_m

    model = new_model(kind, D, hyper, rng, seed=cfg.seed)
    opt = nn.AdamState(lr=cfg.lr)
    params = model.params()

    if kind is ModelKind.CESIA:
        pool = np.flatnonzero(data.s == 1)
        if len(pool) == 0:
            raise NoSimilarPairsInBatch("CE-Siamese needs similar pairs")
        per_batch = max(1, cfg.batch_size // 2)
    elif kind is ModelKind.AE or kind is ModelKind.BVAE:
        # reconstruction-only models learn from the observations, not the pairing
        pool = np.flatnonzero(~data.augmented)
        per_batch = cfg.batch_size
    else:
        pool = np.arange(len(data.s))
        per_batch = cfg.batch_size

    def run_batch(idx, w, update):
        eps_i = eps_j = None
        if _is_vae(kind):
            eps_i = rng.normal(size=(len(idx), hyper.z_dim))
            eps_j = rng.normal(size=(len(idx), hyper.z_dim))
        value, grads = batch_objective(model, data.obs_i[idx], data.obs_j[idx], data.s[idx], w, eps_i, eps_j)
        if not np.isfinite(value):
            raise Diverged(f"{kind.value}: non-finite loss")
        if update:
            nn.adam_step(opt, params, grads)
        return value

    def full_loss(w):
        total = 0.0
        for start in range(0, len(pool), per_batch):
            idx = pool[start:start + per_batch]
            total += run_batch(idx, w, False) * len(idx)
        return total / len(pool)

    initial = full_loss(_weights_at(kind, hyper, 0, cfg, d_m or 0.0))
    history = TrainHistory(initial)
    for epoch in range(cfg.epochs):
        w = _weights_at(kind, hyper, epoch, cfg, d_m or 0.0)
        order = pool[rng.permutation(len(pool))]
        total = 0.0
        for start in range(0, len(order), per_batch):
            idx = order[start:start + per_batch]
            total += run_batch(idx, w, True) * len(idx)
        history.epoch_loss.append(total / len(order))
        if not nn.assert_finite(params):
            raise Diverged(f"{kind.value}: non-finite parameters after epoch {epoch}")
    model.info["d_m"] = d_m
    return model, history


# -- ground-truth oracle --------------------------------------------------------

@dataclass
class OracleEncoder:
    """Injective state embedding standing in for the ideal mapping (tests only).

    States get one-hot codes when they fit in ``z_dim`` dimensions, otherwise
    their occupancy vector zero-padded to ``max(z_dim, n_slots)``.
    """
    spec: WorldSpec
    z_dim: int = 12
    noise_scale: float = 0.0
    seed: int = 0
    embedding: dict[WorldState, np.ndarray] = field(init=False)

    def __post_init__(self):
        states = worlds.enumerate_states(self.spec)
        self.embedding = {}
        if len(states) <= self.z_dim:
            eye = np.eye(self.z_dim)
            for i, st in enumerate(states):
                self.embedding[st] = eye[i]
        else:
            dim = max(self.z_dim, self.spec.n_slots)
            for st in states:
                v = np.zeros(dim)
                v[:self.spec.n_slots] = [(st >> i) & 1 for i in range(self.spec.n_slots)]
                self.embedding[st] = v

    @property
    def kind(self) -> str:
        return "ORACLE"

    def encode_states(self, states, rng: np.random.Generator | None = None) -> np.ndarray:
        states = np.atleast_1d(np.asarray(states))
        try:
            z = np.stack([self.embedding[int(s)] for s in states])
        except KeyError as exc:
            raise UnknownState(f"state {exc.args[0]} is not enumerable") from None
        if self.noise_scale > 0:
            rng = np.random.default_rng(self.seed) if rng is None else rng
            z = z + rng.normal(0.0, self.noise_scale, size=z.shape)
        return z


def oracle_encode(oracle: OracleEncoder, state: WorldState, noise_scale: float = 0.0,
                  rng: np.random.Generator | None = None) -> np.ndarray:
    if state not in oracle.embedding:
        raise UnknownState(f"state {state} is not enumerable")
    z = oracle.embedding[state].copy()
    if noise_scale > 0:
        rng = np.random.default_rng() if rng is None else rng
        z = z + rng.normal(0.0, noise_scale, size=z.shape)
    return z


def encode_tuples(model, ds: Dataset, rng: np.random.Generator | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Encodings of both sides of every tuple in ``ds``.

    An :class:`OracleEncoder` reads the sidecar states; every learned model
    reads observations only.
    """
    if isinstance(model, OracleEncoder):
        rng = np.random.default_rng(model.seed) if rng is None else rng
        return model.encode_states(ds.sidecar.state_i, rng), model.encode_states(ds.sidecar.state_j, rng)
    return encode(model, ds.obs_i), encode(model, ds.obs_j)


# -- checkpoints ------------------------------------------------------------------
# A JSON header line, then the parameter arrays as raw little-endian float64
# in header order.

_CKPT_MAGIC = "latent-roadmap-checkpoint/1"


def save_checkpoint(model: EncoderModel, path) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    header = {"format": _CKPT_MAGIC, "kind": model.kind.value, "seed": model.seed,
              "hyper": asdict(model.hyper), "degenerate": model.degenerate,
              "info": {k: v for k, v in model.info.items() if isinstance(v, (int, float, str, list))}}
    if model.kind is ModelKind.PCA:
        arrays = [("mean", model.mean), ("components", model.components)]
    for name, net in (("enc", model.enc), ("dec", model.dec)):
        if net is not None:
            header[name] = {"layer_dims": net.layer_dims, "activations": net.activations}
            for i, p in enumerate(net.params()):
                arrays.append((f"{name}.{i}", p))
    header["arrays"] = [[name, list(a.shape)] for name, a in arrays]
    try:
        with open(path, "wb") as fh:
            fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
            for _, a in arrays:
                fh.write(np.ascontiguousarray(a, dtype="<f8").tobytes())
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_checkpoint(path) -> EncoderModel:
    try:
        with open(path, "rb") as fh:
            header = json.loads(fh.readline().decode())
            raw = fh.read()
    except OSError as exc:
        raise IoError(str(exc)) from exc
    if header.get("format") != _CKPT_MAGIC:
        raise IoError(f"{path} is not a checkpoint")
    arrays, offset = {}, 0
    for name, shape in header["arrays"]:
        count = int(np.prod(shape)) if shape else 1
        arrays[name] = np.frombuffer(raw, dtype="<f8", count=count, offset=offset).reshape(shape).copy()
        offset += 8 * count
    hyper_d = header["hyper"]
    hyper_d["hidden"] = tuple(hyper_d["hidden"])
    model = EncoderModel(ModelKind(header["kind"]), Hyper(**hyper_d), seed=header["seed"],
                         degenerate=header.get("degenerate", False), info=header.get("info", {}))
    if model.kind is ModelKind.PCA:
        model.mean, model.components = arrays["mean"], arrays["components"]
    for name in ("enc", "dec"):
        if name in header:
            spec = header[name]
            n_layers = len(spec["activations"])
            ps = [arrays[f"{name}.{i}"] for i in range(2 * n_layers)]
            setattr(model, name, nn.MLP(spec["layer_dims"], spec["activations"],
                                        weights=ps[0::2], biases=ps[1::2]))
    return model
