"""Synthetic observations with task-irrelevant variation.

An observation is a D-dimensional vector

    o = M_v (occupancy + jitter) + M_d distractors + lighting * l + noise

where ``M_v`` is a per-viewpoint random mixing matrix, ``M_d`` places the
distractor objects, ``l`` is a lighting direction and the noise is isotropic
Gaussian. Only ``occupancy`` carries the task state.
"""
from __future__ import annotations

import io
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from . import worlds
from .errors import DimensionMismatch, IoError
from .worlds import WorldSpec, WorldState


class NuisanceFactors(NamedTuple):
    viewpoint: int
    distractors: int
    lighting: float
    jitter: np.ndarray


def _unit_columns(a: np.ndarray) -> np.ndarray:
    norms = np.linalg.norm(a, axis=0, keepdims=True)
    return a / np.where(norms > 0, norms, 1.0)


@dataclass(frozen=True, eq=False)
class RenderParams:
    D: int
    V: int
    K: int
    p_distractor: float
    sigma_jitter: float
    sigma_noise: float
    mix_view: np.ndarray          # (V, D, S)
    mix_distract: np.ndarray      # (D, K)
    lighting_dir: np.ndarray      # (D,)
    seed: int
    lighting_scale: float = 1.0
    distract_scale: float = 1.0

    @classmethod
    def build(cls, spec: WorldSpec, *, D: int = 64, V: int = 2, K: int = 0, p_distractor: float = 0.8,
              sigma_jitter: float = 0.17, sigma_noise: float = 0.05, lighting_scale: float = 1.0,
              distract_scale: float = 1.0, seed: int = 0) -> "RenderParams":
        """Draw all mixing matrices once from ``seed``.

        Mixing columns are i.i.d. normal, normalized to unit length, then the
        distractor and lighting parts are scaled by their strength knobs.
        """
        S = spec.n_slots
        if D < S:
            raise DimensionMismatch(f"observation dim {D} is smaller than the slot count {S}")
        if V < 1 or K < 0:
            raise ValueError("need V >= 1 and K >= 0")
        rng = np.random.default_rng(seed)
        mix_view = np.stack([_unit_columns(rng.normal(size=(D, S))) for _ in range(V)])
        mix_distract = distract_scale * _unit_columns(rng.normal(size=(D, K)))
        lighting_dir = rng.normal(size=D)
        lighting_dir = lighting_scale * lighting_dir / np.linalg.norm(lighting_dir)
        for a in (mix_view, mix_distract, lighting_dir):
            a.setflags(write=False)
        return cls(D, V, K, p_distractor, sigma_jitter, sigma_noise, mix_view, mix_distract,
                   lighting_dir, seed, lighting_scale, distract_scale)

    @property
    def n_slots(self) -> int:
        return self.mix_view.shape[2]

    def header(self) -> dict:
        return {"D": self.D, "V": self.V, "K": self.K, "p_distractor": self.p_distractor,
                "sigma_jitter": self.sigma_jitter, "sigma_noise": self.sigma_noise,
                "lighting_scale": self.lighting_scale, "distract_scale": self.distract_scale,
                "seed": self.seed}


def sample_factors(params: RenderParams, rng: np.random.Generator) -> NuisanceFactors:
    viewpoint = int(rng.integers(params.V))
    present = rng.random(params.K) < params.p_distractor
    distractors = int(sum(1 << k for k in np.flatnonzero(present)))
    lighting = float(rng.random())
    bound = 3.0 * params.sigma_jitter
    jitter = np.clip(rng.normal(0.0, params.sigma_jitter, size=params.n_slots), -bound, bound)
    return NuisanceFactors(viewpoint, distractors, lighting, jitter)


def occupancy_vector(spec: WorldSpec, state: WorldState) -> np.ndarray:
    return np.array([(state >> i) & 1 for i in range(spec.n_slots)], dtype=float)


def distractor_vector(bits: int, K: int) -> np.ndarray:
    return np.array([(bits >> k) & 1 for k in range(K)], dtype=float)


def render(spec: WorldSpec, state: WorldState, f: NuisanceFactors, params: RenderParams,
           rng: np.random.Generator | None = None) -> np.ndarray:
    """Observation of ``state`` under nuisance factors ``f``.

    ``rng`` supplies the additive noise; with ``sigma_noise == 0`` it is not
    consumed and may be omitted.
    """
    if params.n_slots != spec.n_slots or len(f.jitter) != spec.n_slots:
        raise DimensionMismatch("render params / jitter do not match the world's slot count")
    if not 0 <= f.viewpoint < params.V:
        raise ValueError(f"viewpoint {f.viewpoint} out of range")
    occ = occupancy_vector(spec, state)
    o = params.mix_view[f.viewpoint] @ (occ + f.jitter)
    if params.K:
        o = o + params.mix_distract @ distractor_vector(f.distractors, params.K)
    o = o + f.lighting * params.lighting_dir
    if params.sigma_noise > 0:
        o = o + rng.normal(0.0, params.sigma_noise, size=params.D)
    return o


class DataTuple(NamedTuple):
    o_i: np.ndarray
    o_j: np.ndarray
    s: int
    augmented: bool


@dataclass
class Sidecar:
    """Ground truth per tuple. Evaluation code only; encoders never see it."""
    state_i: np.ndarray
    state_j: np.ndarray
    view_i: np.ndarray
    view_j: np.ndarray
    distract_i: np.ndarray
    distract_j: np.ndarray
    light_i: np.ndarray
    light_j: np.ndarray
    jitter_i: np.ndarray
    jitter_j: np.ndarray

    def take(self, idx) -> "Sidecar":
        return Sidecar(**{k: v[idx] for k, v in self.__dict__.items()})

    @classmethod
    def concat(cls, parts: list["Sidecar"]) -> "Sidecar":
        return cls(**{k: np.concatenate([getattr(p, k) for p in parts]) for k in parts[0].__dict__})


@dataclass
class Dataset:
    obs_i: np.ndarray
    obs_j: np.ndarray
    s: np.ndarray
    augmented: np.ndarray
    sidecar: Sidecar
    spec: WorldSpec
    params: RenderParams
    meta: dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.s)

    def __getitem__(self, k: int) -> DataTuple:
        return DataTuple(self.obs_i[k], self.obs_j[k], int(self.s[k]), bool(self.augmented[k]))

    def take(self, idx) -> "Dataset":
        idx = np.asarray(idx, dtype=int)
        return Dataset(self.obs_i[idx], self.obs_j[idx], self.s[idx], self.augmented[idx],
                       self.sidecar.take(idx), self.spec, self.params, dict(self.meta))

    def training_view(self) -> "TrainingData":
        """The part of the dataset a model may learn from (no sidecar)."""
        return TrainingData(self.obs_i, self.obs_j, self.s, self.augmented)

    @property
    def n_action_pairs(self) -> int:
        return int(np.sum((self.s == 0) & ~self.augmented))

    @property
    def n_similar_pairs(self) -> int:
        return int(np.sum(self.s == 1))

    def non_augmented(self) -> "Dataset":
        return self.take(np.flatnonzero(~self.augmented))


class TrainingData(NamedTuple):
    obs_i: np.ndarray
    obs_j: np.ndarray
    s: np.ndarray
    augmented: np.ndarray


def _factor_columns(factors: list[NuisanceFactors]):
    return (np.array([f.viewpoint for f in factors], dtype=np.int32),
            np.array([f.distractors for f in factors], dtype=np.uint32),
            np.array([f.lighting for f in factors], dtype=float),
            np.array([f.jitter for f in factors], dtype=float).reshape(len(factors), -1))


def generate_dataset(spec: WorldSpec, params: RenderParams, n_tuples: int, frac_action: float,
                     rng: np.random.Generator) -> Dataset:
    if n_tuples <= 0:
        raise ValueError("n_tuples must be positive")
    states = worlds.enumerate_states(spec)
    obs_i = np.empty((n_tuples, params.D))
    obs_j = np.empty((n_tuples, params.D))
    s = np.empty(n_tuples, dtype=np.int8)
    st_i = np.empty(n_tuples, dtype=np.uint32)
    st_j = np.empty(n_tuples, dtype=np.uint32)
    f_i, f_j = [], []
    for k in range(n_tuples):
        a = states[int(rng.integers(len(states)))]
        if rng.random() < frac_action:
            actions = worlds.legal_actions(spec, a)
            b = worlds.apply_action(spec, a, actions[int(rng.integers(len(actions)))])
            s[k] = 0
        else:
            b = a
            s[k] = 1
        fi = sample_factors(params, rng)
        fj = sample_factors(params, rng)
        obs_i[k] = render(spec, a, fi, params, rng)
        obs_j[k] = render(spec, b, fj, params, rng)
        st_i[k], st_j[k] = a, b
        f_i.append(fi)
        f_j.append(fj)
    vi, di, li, ji = _factor_columns(f_i)
    vj, dj, lj, jj = _factor_columns(f_j)
    sidecar = Sidecar(st_i, st_j, vi, vj, di, dj, li, lj, ji, jj)
    return Dataset(obs_i, obs_j, s, np.zeros(n_tuples, dtype=bool), sidecar, spec, params)


def augment(ds: Dataset, n: int, rng: np.random.Generator) -> Dataset:
    """Append ``n`` random-negative tuples ``(o_i, o_k, 0)`` per similar pair.

    ``o_k`` is drawn uniformly from every observation in ``ds``; draws that
    happen to show the same state as ``o_i`` are kept.
    """
    if len(ds) == 0:
        raise ValueError("cannot augment an empty dataset")
    if n == 0:
        return ds
    similar = np.flatnonzero(ds.s == 1)
    n_obs = 2 * len(ds)
    anchors = np.repeat(similar, n)
    picks = rng.integers(n_obs, size=len(anchors))
    from_j = picks >= len(ds)
    rows = np.where(from_j, picks - len(ds), picks)

    def pick(a_i, a_j):
        return np.where(from_j[:, None] if a_i.ndim == 2 else from_j, a_j[rows], a_i[rows])

    sc = ds.sidecar
    extra_sc = Sidecar(
        sc.state_i[anchors], pick(sc.state_i, sc.state_j),
        sc.view_i[anchors], pick(sc.view_i, sc.view_j),
        sc.distract_i[anchors], pick(sc.distract_i, sc.distract_j),
        sc.light_i[anchors], pick(sc.light_i, sc.light_j),
        sc.jitter_i[anchors], pick(sc.jitter_i, sc.jitter_j),
    )
    out = Dataset(
        np.concatenate([ds.obs_i, ds.obs_i[anchors]]),
        np.concatenate([ds.obs_j, pick(ds.obs_i, ds.obs_j)]),
        np.concatenate([ds.s, np.zeros(len(anchors), dtype=ds.s.dtype)]),
        np.concatenate([ds.augmented, np.ones(len(anchors), dtype=bool)]),
        Sidecar.concat([ds.sidecar, extra_sc]), ds.spec, ds.params, dict(ds.meta),
    )
    out.meta["augment_n"] = n
    return out


def split_holdout(ds: Dataset, frac: float, rng: np.random.Generator) -> tuple[Dataset, Dataset]:
    if not 0 < frac < 1:
        raise ValueError("holdout fraction must lie in (0, 1)")
    if ds.augmented.any():
        raise ValueError("split before augmenting")
    perm = rng.permutation(len(ds))
    n_hold = int(round(frac * len(ds)))
    hold = np.sort(perm[:n_hold])
    train = np.sort(perm[n_hold:])
    return ds.take(train), ds.take(hold)


# -- file format --------------------------------------------------------------
# A JSON header line followed by little-endian fixed-size records. The sidecar
# lives in "<path>.sidecar" with the same layout and the same tuple order.

_MAGIC = "latent-roadmap-dataset/1"


def _tuple_dtype(D: int) -> np.dtype:
    return np.dtype([("o_i", "<f8", (D,)), ("o_j", "<f8", (D,)), ("s", "u1"), ("augmented", "u1")])


def _sidecar_dtype(S: int) -> np.dtype:
    fields = []
    for side in ("i", "j"):
        fields += [(f"state_{side}", "<u4"), (f"view_{side}", "<i4"), (f"distract_{side}", "<u4"),
                   (f"light_{side}", "<f8"), (f"jitter_{side}", "<f8", (S,))]
    return np.dtype(fields)


def _write_records(path: Path, header: dict, records: np.ndarray) -> None:
    with open(path, "wb") as fh:
        fh.write((json.dumps(header, sort_keys=True) + "\n").encode())
        fh.write(records.tobytes())


def _read_records(path: Path) -> tuple[dict, bytes]:
    with open(path, "rb") as fh:
        header = json.loads(fh.readline().decode())
        if header.get("format") != _MAGIC:
            raise IoError(f"{path} is not a dataset file")
        return header, fh.read()


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    D, S = ds.params.D, ds.spec.n_slots
    rec = np.zeros(len(ds), dtype=_tuple_dtype(D))
    rec["o_i"], rec["o_j"], rec["s"], rec["augmented"] = ds.obs_i, ds.obs_j, ds.s, ds.augmented
    header = {"format": _MAGIC, "kind": "tuples", "world": ds.spec.name, "n_tuples": len(ds),
              "n_action_pairs": ds.n_action_pairs, "n_similar_pairs": ds.n_similar_pairs,
              "n_augmented": int(ds.augmented.sum()), "params": ds.params.header(), "meta": ds.meta}
    try:
        _write_records(path, header, rec)
        side = np.zeros(len(ds), dtype=_sidecar_dtype(S))
        for name in side.dtype.names:
            side[name] = getattr(ds.sidecar, name)
        _write_records(path.with_name(path.name + ".sidecar"),
                       {"format": _MAGIC, "kind": "sidecar", "world": ds.spec.name, "n_tuples": len(ds)}, side)
    except OSError as exc:
        raise IoError(str(exc)) from exc


def load_dataset(path) -> Dataset:
    path = Path(path)
    try:
        header, raw = _read_records(path)
        side_header, side_raw = _read_records(path.with_name(path.name + ".sidecar"))
    except OSError as exc:
        raise IoError(str(exc)) from exc
    spec = WorldSpec.of(header["world"])
    p = header["params"]
    params = RenderParams.build(spec, D=p["D"], V=p["V"], K=p["K"], p_distractor=p["p_distractor"],
                                sigma_jitter=p["sigma_jitter"], sigma_noise=p["sigma_noise"],
                                lighting_scale=p["lighting_scale"], distract_scale=p["distract_scale"],
                                seed=p["seed"])
    rec = np.frombuffer(raw, dtype=_tuple_dtype(params.D))
    side = np.frombuffer(side_raw, dtype=_sidecar_dtype(spec.n_slots))
    if len(rec) != header["n_tuples"] or len(side) != len(rec):
        raise IoError(f"{path}: record count does not match header")
    sidecar = Sidecar(**{name: np.array(side[name]) for name in side.dtype.names})
    return Dataset(np.array(rec["o_i"]), np.array(rec["o_j"]), rec["s"].astype(np.int8),
                   rec["augmented"].astype(bool), sidecar, spec, params, header.get("meta", {}))


def export_csv(ds: Dataset, path) -> None:
    """Human-readable dump: tuple index, s, augmented, true states, then both observations."""
    D = ds.params.D
    cols = (["index", "s", "augmented", "state_i", "state_j"]
            + [f"o_i_{d}" for d in range(D)] + [f"o_j_{d}" for d in range(D)])
    buf = io.StringIO()
    buf.write(",".join(cols) + "\n")
    for k in range(len(ds)):
        head = [k, int(ds.s[k]), int(ds.augmented[k]), int(ds.sidecar.state_i[k]), int(ds.sidecar.state_j[k])]
        vals = [repr(float(v)) for v in np.concatenate([ds.obs_i[k], ds.obs_j[k]])]
        buf.write(",".join(map(str, head)) + "," + ",".join(vals) + "\n")
    Path(path).write_text(buf.getvalue())
