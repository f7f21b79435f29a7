"""Experiment driver: generate data, train encoders, build roadmaps, score them.

Configuration is an INI file::

    [experiment]
    world = BoxStacking          ; BoxManipulation | ShelfArrangement | BoxStacking
    seed = 0                     ; required
    out = runs/box_stacking
    models = PCA, AE, BVAE, PCAE, PCVAE, PCSIA, CESIA
    variants = base, augmented   ; augmented rows only for contrastive models
    augment = 1                  ; random negatives per similar pair

    [data]
    n_train = 2500
    n_holdout = 500
    frac_action = 0.5

    [render]                     ; keyword arguments of RenderParams.build
    D = 64
    V = 2
    K = 0

    [train]
    epochs_recon = 500           ; AE, BVAE, PCAE, PCVAE
    epochs_siamese = 100         ; PCSIA, CESIA
    batch_size = 64
    lr = 0.001

    [hyper]                      ; fields of encoders.Hyper, e.g. pcsia_margin = 16
    [eval]
    m = 5
    trials = 1000
    cap = 100
    nearest = centroid

Command-line flags override the file. Every random stream is derived from
``seed`` and the (model, variant) name, so any stage can be rerun alone and
gives the same numbers as a full run.
"""
from __future__ import annotations

import argparse
import configparser
import csv
import io
import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import encoders, lsr, metrics, nn, synthgen, worlds
from .encoders import CONTRASTIVE, Hyper, ModelKind
from .errors import ConfigError, DegenerateData, Diverged, IoError, LatentRoadmapError
from .metrics import RESULT_COLUMNS, EvalReport
from .worlds import WorldKind, WorldSpec

log = logging.getLogger("latent_roadmap")

VARIANTS = ("base", "augmented")
SIAMESE = (ModelKind.PCSIA, ModelKind.CESIA)

# stream tags for seed derivation
_DATA, _SPLIT, _AUG, _TRAIN, _EVAL = range(5)


@dataclass
class ExperimentConfig:
    world: WorldKind
    seed: int
    out: Path = Path("runs/experiment")
    models: list[ModelKind] = field(default_factory=lambda: list(encoders.STANDARD_MODELS))
    variants: list[str] = field(default_factory=lambda: ["base"])
    augment: int = 1
    n_train: int = 2500
    n_holdout: int = 500
    frac_action: float = 0.5
    render: dict = field(default_factory=dict)
    epochs_recon: int = 500
    epochs_siamese: int = 100
    batch_size: int = 64
    lr: float = 1e-3
    hyper: Hyper = field(default_factory=Hyper)
    m: int = 5
    trials: int = 1000
    cap: int = 100
    nearest: str = "centroid"

    def __post_init__(self):
        if self.n_train < 2 or self.n_holdout < 1:
            raise ConfigError("need n_train >= 2 and n_holdout >= 1")
        if not 0 < self.frac_action < 1:
            raise ConfigError("frac_action must lie in (0, 1)")
        bad = [v for v in self.variants if v not in VARIANTS]
        if bad or not self.variants:
            raise ConfigError(f"variants must be drawn from {VARIANTS}, got {self.variants}")
        if self.augment < 0:
            raise ConfigError("augment must be >= 0")
        if self.nearest not in ("centroid", "member"):
            raise ConfigError("nearest must be 'centroid' or 'member'")
        if self.m < 2 or self.trials < 1 or self.cap < 1:
            raise ConfigError("need m >= 2, trials >= 1 and cap >= 1")
        if min(self.epochs_recon, self.epochs_siamese) < 1 or self.batch_size < 2 or self.lr < 0:
            raise ConfigError("need epochs >= 1, batch_size >= 2 and lr >= 0")

    @property
    def spec(self) -> WorldSpec:
        return WorldSpec.of(self.world)

    def jobs(self) -> list[tuple[ModelKind, str]]:
        """(model, variant) pairs in report order."""
        out = []
        for variant in self.variants:
            for kind in self.models:
                if variant == "augmented" and kind not in CONTRASTIVE:
                    continue
                out.append((kind, variant))
        return out

    def train_config(self, kind: ModelKind) -> nn.TrainConfig:
        epochs = self.epochs_siamese if kind in SIAMESE else self.epochs_recon
        return nn.TrainConfig(epochs=epochs, batch_size=self.batch_size, lr=self.lr, seed=self.seed)


_RENDER_KEYS = {"D": int, "V": int, "K": int, "p_distractor": float, "sigma_jitter": float,
                "sigma_noise": float, "lighting_scale": float, "distract_scale": float}
_HYPER_KEYS = {"alpha": float, "gamma": float, "beta": float, "d_m": float, "pcsia_margin": float, "tau": float,
               "z_dim": int, "pc_distance": str}


def _split_list(raw: str) -> list[str]:
    return [p.strip() for p in raw.replace(";", ",").split(",") if p.strip()]


def parse_models(raw: str) -> list[ModelKind]:
    names = _split_list(raw)
    if [n.lower() for n in names] == ["all"]:
        return list(encoders.STANDARD_MODELS)
    try:
        return [ModelKind(n.upper()) for n in names]
    except ValueError as exc:
        raise ConfigError(f"unknown model in {raw!r}") from exc


def load_config(path=None, text: str | None = None, **overrides) -> ExperimentConfig:
    """Parse an INI file (or ``text``); keyword overrides win over the file."""
    cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"))
    cp.optionxform = str
    try:
        if text is not None:
            cp.read_string(text)
        elif path is not None:
            with open(path) as fh:
                cp.read_file(fh)
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc}") from exc
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc

    def sect(name):
        return cp[name] if cp.has_section(name) else {}

    exp, data, train, ev = sect("experiment"), sect("data"), sect("train"), sect("eval")
    try:
        world = WorldKind(overrides.get("world") or exp.get("world", ""))
    except ValueError as exc:
        raise ConfigError(f"unknown world {exp.get('world')!r}") from exc
    seed = overrides.get("seed")
    if seed is None:
        if "seed" not in exp:
            raise ConfigError("[experiment] seed is required")
        seed = exp["seed"]
    try:
        render = {k: _RENDER_KEYS[k](v) for k, v in sect("render").items()}
    except KeyError as exc:
        raise ConfigError(f"unknown [render] key {exc}") from exc
    except ValueError as exc:
        raise ConfigError(f"bad [render] value: {exc}") from exc
    hyper_kw = {}
    for k, v in sect("hyper").items():
        if k != "hidden" and k not in _HYPER_KEYS:
            raise ConfigError(f"unknown [hyper] key {k!r}")
        try:
            hyper_kw[k] = tuple(int(h) for h in _split_list(v)) if k == "hidden" else _HYPER_KEYS[k](v)
        except ValueError as exc:
            raise ConfigError(f"bad [hyper] value for {k}: {exc}") from exc
    models = overrides.get("models") or exp.get("models", "all")
    try:
        return ExperimentConfig(
            world=world,
            seed=int(seed),
            out=Path(overrides.get("out") or exp.get("out", "runs/experiment")),
            models=models if isinstance(models, list) else parse_models(models),
            variants=_split_list(exp.get("variants", "base")),
            augment=int(exp.get("augment", 1)),
            n_train=int(data.get("n_train", 2500)),
            n_holdout=int(data.get("n_holdout", 500)),
            frac_action=float(data.get("frac_action", 0.5)),
            render=render,
            epochs_recon=int(train.get("epochs_recon", 500)),
            epochs_siamese=int(train.get("epochs_siamese", 100)),
            batch_size=int(train.get("batch_size", 64)),
            lr=float(train.get("lr", 1e-3)),
            hyper=Hyper(**hyper_kw),
            m=int(ev.get("m", 5)),
            trials=int(overrides.get("trials") or ev.get("trials", 1000)),
            cap=int(ev.get("cap", 100)),
            nearest=ev.get("nearest", "centroid"),
        )
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc


# -- random streams -------------------------------------------------------------

def _rng(cfg: ExperimentConfig, tag: int, kind: ModelKind | None = None, variant: str | None = None):
    key = [cfg.seed, tag]
    if kind is not None:
        key.append(list(ModelKind).index(kind))
    if variant is not None:
        key.append(VARIANTS.index(variant))
    return np.random.default_rng(np.random.SeedSequence(key))


# -- stages ---------------------------------------------------------------------

@dataclass
class Datasets:
    train: synthgen.Dataset
    holdout: synthgen.Dataset
    augmented: synthgen.Dataset | None = None

    def for_variant(self, variant: str) -> synthgen.Dataset:
        if variant == "augmented":
            if self.augmented is None:
                raise ConfigError("augmented variant requested but no augmented dataset exists")
            return self.augmented
        return self.train


def make_datasets(cfg: ExperimentConfig) -> Datasets:
    try:
        params = synthgen.RenderParams.build(cfg.spec, seed=cfg.seed, **cfg.render)
    except (ValueError, LatentRoadmapError) as exc:
        raise ConfigError(f"bad render parameters: {exc}") from exc
    total = cfg.n_train + cfg.n_holdout
    full = synthgen.generate_dataset(cfg.spec, params, total, cfg.frac_action, _rng(cfg, _DATA))
    train, holdout = synthgen.split_holdout(full, cfg.n_holdout / total, _rng(cfg, _SPLIT))
    aug = None
    if "augmented" in cfg.variants:
        aug = synthgen.augment(train, cfg.augment, _rng(cfg, _AUG))
    return Datasets(train, holdout, aug)


def train_job(cfg: ExperimentConfig, data: Datasets, kind: ModelKind, variant: str,
              cache: dict | None = None) -> encoders.EncoderModel:
    """Train one (model, variant); PCAE/PCVAE reuse the matching base AE/BVAE for their margin."""
    cache = {} if cache is None else cache
    pretrained = None
    if kind in (ModelKind.PCAE, ModelKind.PCVAE) and cfg.hyper.d_m is None:
        base = ModelKind.AE if kind is ModelKind.PCAE else ModelKind.BVAE
        if (base, "base") not in cache:
            cache[(base, "base")] = train_job(cfg, data, base, "base", cache)
        pretrained = cache[(base, "base")]
    if (kind, variant) in cache:
        return cache[(kind, variant)]
    # the training view carries no sidecar, so ground truth cannot leak into training
    view = data.for_variant(variant).training_view()
    model, _ = encoders.train(kind, view, cfg.train_config(kind), cfg.hyper, _rng(cfg, _TRAIN, kind, variant),
                              pretrained)
    cache[(kind, variant)] = model
    return model


def eval_job(cfg: ExperimentConfig, data: Datasets, model, kind: ModelKind, variant: str) -> EvalReport:
    # the roadmap is always built from the non-augmented training tuples
    return metrics.evaluate(model, data.train, data.holdout, cfg.spec, cfg.m, cfg.trials,
                            _rng(cfg, _EVAL, kind, variant), cfg.cap, mode=cfg.nearest,
                            model=kind.value, variant=variant, dataset=dataset_name(cfg), seed=cfg.seed)


def dataset_name(cfg: ExperimentConfig) -> str:
    r = dict(cfg.render)
    return f"{cfg.world.value}-V{r.get('V', 2)}-K{r.get('K', 0)}"


def _failed(cfg, kind, variant, status) -> EvalReport:
    return EvalReport.failed(status, model=kind.value, variant=variant, dataset=dataset_name(cfg), seed=cfg.seed)


def run_experiment(cfg: ExperimentConfig, data: Datasets | None = None,
                   keep_models: dict | None = None) -> list[EvalReport]:
    """Train and evaluate every configured (model, variant); one report per job.

    A model that diverges yields a sentinel row with status ``diverged``.
    """
    data = make_datasets(cfg) if data is None else data
    cache: dict = {} if keep_models is None else keep_models
    reports = []
    for kind, variant in cfg.jobs():
        log.info("%s/%s: training", kind.value, variant)
        try:
            model = train_job(cfg, data, kind, variant, cache)
        except Diverged as exc:
            log.warning("%s/%s diverged: %s", kind.value, variant, exc)
            reports.append(_failed(cfg, kind, variant, "diverged"))
            continue
        rep = eval_job(cfg, data, model, kind, variant)
        log.info("%s/%s: |V|=%d h_c=%.3f %%any=%.1f", kind.value, variant, rep.n_nodes, rep.h_c, rep.pct_any)
        reports.append(rep)
    return reports


# -- reports --------------------------------------------------------------------

def _fmt(value) -> str:
    if isinstance(value, float):
        return f"{value:.4f}"
    return str(value)


def rows_of(reports) -> list[dict]:
    return [r.row() if isinstance(r, EvalReport) else dict(r) for r in reports]


def report_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for row in rows:
        w.writerow([_fmt(row[c]) for c in RESULT_COLUMNS])
    return buf.getvalue()


_SCORE_COLS = ("h_c", "c_c", "s_c", "c_e", "pct_all", "pct_any")
_TABLE_COLS = ["model", "variant", "n_nodes", "h_c", "c_c", "s_c", "n_edges", "c_e", "pct_all", "pct_any"]
_HEADINGS = {"n_nodes": "|V|", "n_edges": "|E|", "pct_all": "% all", "pct_any": "% any"}


def best_rows(rows, spec: WorldSpec | None = None) -> dict[str, set[int]]:
    """Row indices to bold per column: the max for scores, closest to the truth for |V| and |E|."""
    ok = [k for k, r in enumerate(rows) if r.get("status", "ok") == "ok"]
    out: dict[str, set[int]] = {}
    if not ok:
        return out
    for col in _SCORE_COLS:
        best = max(float(rows[k][col]) for k in ok)
        out[col] = {k for k in ok if float(rows[k][col]) == best}
    if spec is not None:
        truth = {"n_nodes": len(worlds.enumerate_states(spec)), "n_edges": len(worlds.legal_transitions(spec))}
        for col, target in truth.items():
            gap = min(abs(int(rows[k][col]) - target) for k in ok)
            out[col] = {k for k in ok if abs(int(rows[k][col]) - target) == gap}
    return out


def report_markdown(rows, spec: WorldSpec | None = None) -> str:
    rows = list(rows)
    bold = best_rows(rows, spec)
    lines = ["| " + " | ".join(_HEADINGS.get(c, c) for c in _TABLE_COLS) + " |",
             "|" + "---|" * len(_TABLE_COLS)]
    for k, row in enumerate(rows):
        cells = []
        for c in _TABLE_COLS:
            v = row[c]
            text = f"{float(v):.2f}" if c in _SCORE_COLS else str(v)
            if row.get("status", "ok") != "ok" and c not in ("model", "variant"):
                text = "-"
            elif k in bold.get(c, ()):
                text = f"**{text}**"
            cells.append(text)
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def emit_report(reports, fmt: str, path, spec: WorldSpec | None = None) -> Path:
    rows = rows_of(reports)
    if not rows:
        raise ValueError("no report rows")
    if fmt == "csv":
        text = report_csv(rows)
    elif fmt == "markdown":
        text = report_markdown(rows, spec)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    path = Path(path)
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return path


def read_results(path) -> list[dict]:
    try:
        with open(path, newline="") as fh:
            return list(csv.DictReader(fh))
    except OSError as exc:
        raise IoError(str(exc)) from exc


def project_2d(encodings) -> np.ndarray:
    """Coordinates of ``encodings`` on their top two principal axes."""
    z = np.asarray(encodings, dtype=float)
    if z.ndim != 2 or len(z) < 3:
        raise DegenerateData("projection needs at least 3 points")
    centered = z - z.mean(axis=0)
    cov = centered.T @ centered / (len(z) - 1)
    vals, vecs = np.linalg.eigh(cov)
    top = vecs[:, np.argsort(vals)[::-1][:2]]
    if top.shape[1] < 2:
        top = np.pad(top, ((0, 0), (0, 2 - top.shape[1])))
    # fix the sign so the largest loading is positive
    flip = np.sign(top[np.abs(top).argmax(axis=0), range(top.shape[1])])
    return centered @ (top * np.where(flip == 0, 1.0, flip))


def export_projection(encodings, labels, path) -> np.ndarray:
    xy = project_2d(encodings)
    labels = np.asarray(labels)
    if len(labels) != len(xy):
        raise ValueError("one label per encoding is required")
    try:
        Path(path).parent.mkdir(parents=True, exist_ok=True)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["index", "x", "y", "state"])
            for k, ((x, y), s) in enumerate(zip(xy, labels)):
                w.writerow([k, repr(float(x)), repr(float(y)), int(s)])
    except OSError as exc:
        raise IoError(str(exc)) from exc
    return xy


# -- on-disk layout ---------------------------------------------------------------

def _paths(cfg: ExperimentConfig) -> dict[str, Path]:
    out = Path(cfg.out)
    return {"train": out / "data" / "train.bin", "holdout": out / "data" / "holdout.bin",
            "augmented": out / "data" / "train_augmented.bin", "models": out / "models",
            "roadmaps": out / "roadmaps", "projections": out / "projections",
            "csv": out / "results.csv", "md": out / "results.md"}


def _job_name(kind: ModelKind, variant: str) -> str:
    return f"{kind.value}_{variant}"


def save_datasets(cfg: ExperimentConfig, data: Datasets) -> None:
    p = _paths(cfg)
    p["train"].parent.mkdir(parents=True, exist_ok=True)
    synthgen.save_dataset(data.train, p["train"])
    synthgen.save_dataset(data.holdout, p["holdout"])
    if data.augmented is not None:
        synthgen.save_dataset(data.augmented, p["augmented"])


def load_datasets(cfg: ExperimentConfig) -> Datasets:
    p = _paths(cfg)
    if not p["train"].exists():
        raise IoError(f"{p['train']} missing; run the generate stage first")
    aug = synthgen.load_dataset(p["augmented"]) if p["augmented"].exists() else None
    return Datasets(synthgen.load_dataset(p["train"]), synthgen.load_dataset(p["holdout"]), aug)


def _load_models(cfg: ExperimentConfig) -> dict:
    p = _paths(cfg)
    out = {}
    for kind, variant in cfg.jobs():
        path = p["models"] / (_job_name(kind, variant) + ".ckpt")
        if path.exists():
            out[(kind, variant)] = encoders.load_checkpoint(path)
    return out


def stage_generate(cfg: ExperimentConfig) -> Datasets:
    data = make_datasets(cfg)
    save_datasets(cfg, data)
    return data


def stage_train(cfg: ExperimentConfig, data: Datasets | None = None) -> dict:
    data = load_datasets(cfg) if data is None else data
    p = _paths(cfg)
    p["models"].mkdir(parents=True, exist_ok=True)
    cache: dict = {}
    for kind, variant in cfg.jobs():
        marker = p["models"] / (_job_name(kind, variant) + ".diverged")
        try:
            model = train_job(cfg, data, kind, variant, cache)
        except Diverged as exc:
            marker.write_text(str(exc) + "\n")
            continue
        marker.unlink(missing_ok=True)
        encoders.save_checkpoint(model, p["models"] / (_job_name(kind, variant) + ".ckpt"))
    return cache


def stage_build_lsr(cfg: ExperimentConfig, data: Datasets | None = None, models: dict | None = None) -> None:
    data = load_datasets(cfg) if data is None else data
    models = _load_models(cfg) if models is None else models
    p = _paths(cfg)
    p["roadmaps"].mkdir(parents=True, exist_ok=True)
    for (kind, variant), model in models.items():
        z_i, z_j = encoders.encode_tuples(model, data.train, _rng(cfg, _EVAL, kind, variant))
        try:
            rm, _, _ = lsr.build_roadmap(z_i, z_j, data.train.s, data.train.augmented, cfg.m)
        except LatentRoadmapError as exc:
            log.warning("%s/%s: no roadmap (%s)", kind.value, variant, exc)
            continue
        lsr.save_roadmap(rm, p["roadmaps"] / _job_name(kind, variant))


def stage_eval(cfg: ExperimentConfig, data: Datasets | None = None, models: dict | None = None
               ) -> list[EvalReport]:
    data = load_datasets(cfg) if data is None else data
    models = _load_models(cfg) if models is None else models
    reports = []
    for kind, variant in cfg.jobs():
        if (kind, variant) in models:
            reports.append(eval_job(cfg, data, models[(kind, variant)], kind, variant))
        else:
            diverged = (_paths(cfg)["models"] / (_job_name(kind, variant) + ".diverged")).exists()
            reports.append(_failed(cfg, kind, variant, "diverged" if diverged else "missing"))
    stage_report(cfg, reports)
    return reports


def stage_report(cfg: ExperimentConfig, reports=None) -> None:
    p = _paths(cfg)
    if reports is None:
        reports = read_results(p["csv"])
    else:
        emit_report(reports, "csv", p["csv"])
    emit_report(reports, "markdown", p["md"], cfg.spec)


def stage_project(cfg: ExperimentConfig, data: Datasets | None = None, models: dict | None = None) -> None:
    data = load_datasets(cfg) if data is None else data
    models = _load_models(cfg) if models is None else models
    p = _paths(cfg)
    ds = data.train.non_augmented()
    truth = np.concatenate([ds.sidecar.state_i, ds.sidecar.state_j])
    for (kind, variant), model in models.items():
        z_i, z_j = encoders.encode_tuples(model, ds, _rng(cfg, _EVAL, kind, variant))
        export_projection(np.concatenate([z_i, z_j]), truth, p["projections"] / (_job_name(kind, variant) + ".csv"))


def stage_all(cfg: ExperimentConfig) -> list[EvalReport]:
    data = stage_generate(cfg)
    models: dict = {}
    reports = run_experiment(cfg, data, models)
    p = _paths(cfg)
    p["models"].mkdir(parents=True, exist_ok=True)
    wanted = {job: m for job, m in models.items() if job in cfg.jobs()}
    for (kind, variant), model in wanted.items():
        encoders.save_checkpoint(model, p["models"] / (_job_name(kind, variant) + ".ckpt"))
    stage_report(cfg, reports)
    stage_build_lsr(cfg, data, wanted)
    stage_project(cfg, data, wanted)
    return reports


STAGES = {"generate": stage_generate, "train": stage_train, "build-lsr": stage_build_lsr,
          "eval": stage_eval, "report": stage_report, "project": stage_project, "all": stage_all}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="latent-roadmap", description="Latent space roadmap experiments.")
    ap.add_argument("stage", choices=list(STAGES))
    ap.add_argument("--config", required=True, help="INI experiment file")
    ap.add_argument("--seed", type=int, default=None)
    ap.add_argument("--out", default=None, help="output directory")
    ap.add_argument("--models", default=None, help="comma-separated model kinds, or 'all'")
    ap.add_argument("--trials", type=int, default=None, help="planning trials per model")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        overrides = {"seed": args.seed, "out": args.out, "trials": args.trials}
        if args.models:
            overrides["models"] = parse_models(args.models)
        cfg = load_config(args.config, **overrides)
        STAGES[args.stage](cfg)
    except (ConfigError, IoError) as exc:
        print(f"latent-roadmap: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
