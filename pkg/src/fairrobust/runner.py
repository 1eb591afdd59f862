"""Experiment configuration, sweeps and report writing.

A sweep point is one ``(loss, lam, q, epsilon_star, seed)`` combination; each
point is trained once and evaluated at every attack budget in
``sweep.epsilon``, giving one CSV row per (point, epsilon).
"""

from __future__ import annotations

import copy
import csv
import itertools
import json
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import mixture_theory as mt
from .attacks import AttackConfig
from .data import LabeledDataset, MixtureSampleConfig, load_csv, load_idx, sample_mixture
from .losses import DefenseConfig, FairnessConfig, FairnessMode, LossKind
from .metrics import REPORT_COLUMNS, EvalReport, evaluate
from .models import Architecture, init_params, load_checkpoint, save_checkpoint
from .population import GaussianMixtureSpec, TheoryBudget
from .training import TrainConfig, TrainingDivergedError, train

OUTPUT_DIR_ENV = "FAIRROBUST_OUTPUT_DIR"

KEY_COLUMNS = ("loss", "lam", "q", "epsilon_star", "seed")
ROW_COLUMNS = KEY_COLUMNS + ("epsilon", "status", "final_loss")

SWEEP_CSV = "sweep.csv"
TIMINGS_CSV = "sweep_timings.csv"


class ConfigError(ValueError):
    pass


DEFAULT_CONFIG = {
    "dataset": {"synthetic": {"mu_minus": -1.0, "mu_plus": 1.0, "k_ratio": 5.0,
                              "prior_plus": 0.5, "n": 8000, "dims": 5, "seed": 0,
                              "test_n": 5000, "test_seed": 1000}},
    "architecture": {"hidden": [16], "activations": ["relu"]},
    "loss": "ramp",
    "fairness": {"mode": "penalty", "penalty_group": None},
    "defense": {"norm_order": "inf", "pgd_steps": 5, "pgd_step_size": None,
                "attack_loss": "cross_entropy", "clip_lo": None, "clip_hi": None},
    "attack": {"method": "rfgsm", "norm_order": "inf", "steps": 10, "step_size": None,
               "random_start": True, "seed": 0, "clip_lo": None, "clip_hi": None},
    "optimizer": {"lr": 0.1, "batch_size": 64, "epochs": 15, "lr_schedule": "linear",
                  "warm_start": [{"loss": "cross_entropy", "epochs": 2, "lr": 0.1}]},
    "sweep": {"loss": None, "lam": [0.0, 1.0], "q": [0.0], "epsilon_star": [0.0],
              "epsilon": [0.05, 0.1], "seed": [0, 1, 2, 3, 4]},
    "workers": 1,
    "output_dir": "results",
}


# --------------------------------------------------------------------------
# configuration

def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k != "dataset":
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_override(cfg: dict, assignment: str) -> dict:
    """Apply one ``dotted.key=value`` override; the value is parsed as JSON when it can be."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    try:
        value = json.loads(raw)
    except json.JSONDecodeError:
        value = raw
    cfg = copy.deepcopy(cfg)
    node = cfg
    parts = key.strip().split(".")
    for p in parts[:-1]:
        nxt = node.get(p)
        if not isinstance(nxt, dict):
            nxt = node[p] = {}
        node = nxt
    node[parts[-1]] = value
    return cfg


def _as_float(v, default):
    if v is None:
        return default
    try:
        return float(v)
    except (TypeError, ValueError):
        raise ConfigError(f"expected a number, got {v!r}") from None


def _axis(sweep: dict, name: str, cast):
    values = sweep.get(name)
    if values is None:
        raise ConfigError(f"sweep.{name} is missing")
    if not isinstance(values, list):
        values = [values]
    if not values:
        raise ConfigError(f"sweep.{name} must be nonempty")
    try:
        return tuple(cast(v) for v in values)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"sweep.{name}: {exc}") from None


@dataclass(frozen=True)
class ExperimentConfig:
    raw: dict
    source: str
    losses: tuple
    lams: tuple
    qs: tuple
    epsilon_stars: tuple
    epsilons: tuple
    seeds: tuple
    output_dir: Path

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        raw = _merge(DEFAULT_CONFIG, d)
        ds = raw.get("dataset")
        if not isinstance(ds, dict) or len(ds) != 1:
            raise ConfigError("dataset must name exactly one source: synthetic, csv or idx")
        (source, params), = ds.items()
        if source not in ("synthetic", "csv", "idx"):
            raise ConfigError(f"unknown dataset source {source!r}")
        _check_source(source, params)

        sweep = raw["sweep"]
        loss_axis = sweep.get("loss") or [raw["loss"]]
        try:
            losses = tuple(LossKind.parse(v).value for v in
                           (loss_axis if isinstance(loss_axis, list) else [loss_axis]))
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        if LossKind.ZERO_ONE.value in losses:
            raise ConfigError("zero_one loss cannot be trained")
        cfg = cls(raw=raw, source=source, losses=losses,
                  lams=_axis(sweep, "lam", float), qs=_axis(sweep, "q", float),
                  epsilon_stars=_axis(sweep, "epsilon_star", float),
                  epsilons=_axis(sweep, "epsilon", float), seeds=_axis(sweep, "seed", int),
                  output_dir=Path(os.environ.get(OUTPUT_DIR_ENV) or raw["output_dir"]))
        # build every sub-config once so bad values fail before any training
        cfg.train_config(cfg.seeds[0])
        cfg.fairness_config(cfg.lams[0], cfg.qs[0])
        cfg.defense_config(cfg.epsilon_stars[0])
        cfg.attack_config(cfg.epsilons[0], cfg.seeds[0])
        if not isinstance(raw["workers"], int) or raw["workers"] < 1:
            raise ConfigError("workers must be a positive integer")
        return cfg

    def to_dict(self) -> dict:
        return copy.deepcopy(self.raw)

    def _wrap(self, fn, what):
        try:
            return fn()
        except ConfigError:
            raise
        except (TypeError, ValueError, KeyError) as exc:
            raise ConfigError(f"{what}: {exc}") from None

    @property
    def default_clip(self):
        return (0.0, 1.0) if self.source == "idx" else (-math.inf, math.inf)

    def architecture(self, input_dim, num_classes) -> Architecture:
        a = self.raw["architecture"]
        return self._wrap(lambda: Architecture(input_dim, num_classes, tuple(a.get("hidden", ())),
                                               tuple(a.get("activations", ()))), "architecture")

    def train_config(self, seed) -> TrainConfig:
        o = self.raw["optimizer"]
        return self._wrap(lambda: TrainConfig(
            lr=float(o["lr"]), batch_size=int(o["batch_size"]), epochs=int(o["epochs"]),
            seed=int(seed), warm_start=tuple(o.get("warm_start") or ()),
            lr_schedule=o.get("lr_schedule", "constant")), "optimizer")

    def fairness_config(self, lam, q) -> FairnessConfig:
        f = self.raw["fairness"]
        return self._wrap(lambda: FairnessConfig(FairnessMode(f.get("mode", "penalty")),
                                                 lam=lam, q=q,
                                                 penalty_group=f.get("penalty_group")),
                          "fairness")

    def defense_config(self, epsilon_star) -> DefenseConfig:
        d = self.raw["defense"]
        lo, hi = self.default_clip
        return self._wrap(lambda: DefenseConfig(
            epsilon_star=epsilon_star, norm_order=str(d.get("norm_order", "inf")),
            pgd_steps=int(d.get("pgd_steps", 10)), pgd_step_size=d.get("pgd_step_size"),
            clip_lo=_as_float(d.get("clip_lo"), lo), clip_hi=_as_float(d.get("clip_hi"), hi),
            attack_loss=d.get("attack_loss")), "defense")

    def attack_config(self, epsilon, seed) -> AttackConfig:
        a = self.raw["attack"]
        lo, hi = self.default_clip
        return self._wrap(lambda: AttackConfig(
            method=a.get("method", "rfgsm"), norm_order=str(a.get("norm_order", "inf")),
            epsilon=epsilon, step_size=a.get("step_size"), steps=int(a.get("steps", 10)),
            random_start=bool(a.get("random_start", True)),
            seed=int(a.get("seed", 0)) + int(seed),
            clip_lo=_as_float(a.get("clip_lo"), lo), clip_hi=_as_float(a.get("clip_hi"), hi)),
            "attack")

    def points(self):
        """Sweep points in canonical order."""
        return list(itertools.product(self.losses, self.lams, self.qs, self.epsilon_stars,
                                      self.seeds))


def _check_source(source, params):
    if not isinstance(params, dict):
        raise ConfigError(f"dataset.{source} must be an object")
    if source == "synthetic":
        try:
            GaussianMixtureSpec(float(params["mu_minus"]), float(params["mu_plus"]),
                                float(params["k_ratio"]), float(params.get("prior_plus", 0.5)))
            MixtureSampleConfig(GaussianMixtureSpec(-1, 1, 2), int(params["n"]),
                                dims=int(params.get("dims", 1)))
            if int(params.get("test_n", 1)) < 1:
                raise ValueError("test_n must be positive")
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"dataset.synthetic: {exc}") from None
        return
    keys = ("path",) if source == "csv" else ("images", "labels")
    opt = ("test_path",) if source == "csv" else ("test_images", "test_labels")
    for k in keys:
        if not params.get(k):
            raise ConfigError(f"dataset.{source}.{k} must be a nonempty path")
    for k in keys + opt:
        p = params.get(k)
        if p and not Path(p).is_file():
            raise ConfigError(f"dataset.{source}.{k}: file not found: {p}")
    if source == "csv" and not params.get("feature_cols"):
        raise ConfigError("dataset.csv.feature_cols must list at least one column")
    if source == "csv" and not params.get("label_col"):
        raise ConfigError("dataset.csv.label_col is required")


def load_config(path=None, overrides=()) -> ExperimentConfig:
    d = {}
    if path is not None:
        try:
            d = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from None
        if not isinstance(d, dict):
            raise ConfigError(f"{path}: top level must be an object")
    for o in overrides:
        d = apply_override(d, o)
    return ExperimentConfig.from_dict(d)


# --------------------------------------------------------------------------
# datasets

def load_datasets(cfg: ExperimentConfig, seed: int):
    """``(train, test)`` for one run; file sources ignore ``seed``."""
    p = cfg.raw["dataset"][cfg.source]
    if cfg.source == "synthetic":
        spec = GaussianMixtureSpec(float(p["mu_minus"]), float(p["mu_plus"]),
                                   float(p["k_ratio"]), float(p.get("prior_plus", 0.5)))
        dims = int(p.get("dims", 1))
        tr = sample_mixture(MixtureSampleConfig(spec, int(p["n"]), int(p.get("seed", 0)) + seed,
                                                dims))
        te = sample_mixture(MixtureSampleConfig(spec, int(p.get("test_n", p["n"])),
                                                int(p.get("test_seed", 1000)) + seed, dims))
        return tr, te
    if cfg.source == "csv":
        args = (p["feature_cols"], p["label_col"], p.get("group_col"))
        tr = load_csv(p["path"], *args)
        te = load_csv(p["test_path"], *args) if p.get("test_path") else tr
        return tr, te
    tr = load_idx(p["images"], p["labels"], p.get("max_items"))
    te = (load_idx(p["test_images"], p["test_labels"], p.get("max_items"))
          if p.get("test_images") else tr)
    return tr, te


# --------------------------------------------------------------------------
# single runs

def _fmt(v) -> str:
    if isinstance(v, str):
        return v
    if isinstance(v, (int, np.integer)) and not isinstance(v, bool):
        return str(int(v))
    return repr(float(v))


def point_key(point) -> tuple:
    return tuple(_fmt(v) for v in point)


def train_point(cfg: ExperimentConfig, point, train_ds: LabeledDataset):
    loss, lam, q, eps_star, seed = point
    arch = cfg.architecture(train_ds.dim, train_ds.num_classes)
    model = init_params(arch, seed)
    return train(model, train_ds, loss, cfg.fairness_config(lam, q),
                 cfg.defense_config(eps_star), cfg.train_config(seed))


def evaluate_point(cfg: ExperimentConfig, model, test_ds: LabeledDataset, seed: int):
    return [(eps, evaluate(model, test_ds, cfg.attack_config(eps, seed))) for eps in cfg.epsilons]


def sweep_columns(num_groups: int) -> list:
    cols = list(ROW_COLUMNS) + list(REPORT_COLUMNS)
    for a in range(num_groups):
        cols += [f"group_{a}_error", f"group_{a}_margin_proxy"]
    return cols


def _report_cells(report: EvalReport | None, num_groups: int) -> list:
    if report is None:
        return ["nan"] * (len(REPORT_COLUMNS) + 2 * num_groups)
    cells = [report.natural_error, report.robust_error, report.boundary_error,
             report.fairness_violation, report.avg_margin_proxy]
    for a in range(num_groups):
        cells += [report.per_group_error.get(a, math.nan),
                  report.per_group_margin_proxy.get(a, math.nan)]
    return [_fmt(c) for c in cells]


def run_point(cfg: ExperimentConfig, point, datasets=None):
    """Train and evaluate one sweep point; returns ``(rows, seconds)``."""
    start = time.perf_counter()
    seed = point[-1]
    train_ds, test_ds = datasets if datasets is not None else load_datasets(cfg, seed)
    key = list(point_key(point))
    try:
        result = train_point(cfg, point, train_ds)
        evals = evaluate_point(cfg, result.model, test_ds, seed)
        status, final = "ok", result.final_loss
    except TrainingDivergedError:
        evals = [(eps, None) for eps in cfg.epsilons]
        status, final = "failed", math.nan
    rows = [key + [_fmt(eps), status, _fmt(final)] + _report_cells(rep, test_ds.num_groups)
            for eps, rep in evals]
    return rows, time.perf_counter() - start


def _worker(args):
    raw, point = args
    cfg = ExperimentConfig.from_dict(raw)
    return run_point(cfg, point)


# --------------------------------------------------------------------------
# sweep

def _read_existing(path: Path, columns):
    if not path.exists():
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return {}
        if header != list(columns):
            raise RuntimeError(f"{path}: existing columns do not match this configuration")
        done = {}
        for row in reader:
            done.setdefault(tuple(row[:len(KEY_COLUMNS)]), []).append(row)
    return done


def _read_timings(path: Path):
    if not path.exists():
        return {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        next(reader, None)
        return {tuple(r[:len(KEY_COLUMNS)]): r[len(KEY_COLUMNS)] for r in reader}


def _write_csv(path: Path, header, rows):
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    os.replace(tmp, path)


def cmd_sweep(cfg: ExperimentConfig, log=None) -> Path:
    """Run every missing sweep point and write ``sweep.csv`` in canonical order.

    Points already present in an existing ``sweep.csv`` are skipped. Wall-clock
    seconds go to ``sweep_timings.csv`` so the main table is reproducible
    byte for byte.
    """
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.json").write_text(json.dumps(cfg.to_dict(), indent=2, sort_keys=True) + "\n")

    first_train, first_test = load_datasets(cfg, cfg.seeds[0])
    columns = sweep_columns(first_test.num_groups)
    csv_path, timing_path = out / SWEEP_CSV, out / TIMINGS_CSV
    done = _read_existing(csv_path, columns)
    timings = _read_timings(timing_path)
    pending = [p for p in cfg.points() if point_key(p) not in done]

    def record(point, rows, seconds):
        done[point_key(point)] = rows
        timings[point_key(point)] = _fmt(round(seconds, 3))
        # append as points finish so an interrupted sweep can resume
        new_file = not csv_path.exists()
        with open(csv_path, "a", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            if new_file:
                w.writerow(columns)
            w.writerows(rows)
        if log:
            log(f"point {dict(zip(KEY_COLUMNS, point_key(point)))}: {rows[0][6]} "
                f"({seconds:.1f}s)")

    workers = cfg.raw["workers"]
    if workers > 1 and len(pending) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            for point, (rows, secs) in zip(pending, pool.map(
                    _worker, [(cfg.raw, p) for p in pending])):
                record(point, rows, secs)
    else:
        for point in pending:
            datasets = ((first_train, first_test) if cfg.source != "synthetic"
                        or point[-1] == cfg.seeds[0] else None)
            rows, secs = run_point(cfg, point, datasets)
            record(point, rows, secs)

    order = [point_key(p) for p in cfg.points()]
    extra = [k for k in done if k not in set(order)]
    _write_csv(csv_path, columns, [r for k in order + extra for r in done[k]])
    _write_csv(timing_path, list(KEY_COLUMNS) + ["seconds"],
               [list(k) + [timings[k]] for k in order + extra if k in timings])
    return csv_path


def read_sweep(path) -> list:
    """Rows of a sweep CSV as dicts with numeric fields converted."""
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    for r in rows:
        for k, v in r.items():
            if k not in ("loss", "status"):
                r[k] = int(v) if k == "seed" else float(v)
    return rows


# --------------------------------------------------------------------------
# single-run entry points

CHECKPOINT_NAME = "model.frck"


def first_point(cfg: ExperimentConfig):
    return cfg.points()[0]


def cmd_train(cfg: ExperimentConfig, checkpoint=None) -> Path:
    """Train the first sweep point and save it with a JSON sidecar."""
    point = first_point(cfg)
    train_ds, _ = load_datasets(cfg, point[-1])
    result = train_point(cfg, point, train_ds)
    path = Path(checkpoint) if checkpoint else cfg.output_dir / CHECKPOINT_NAME
    path.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(result.model, path, {
        "experiment": cfg.to_dict(),
        "point": dict(zip(KEY_COLUMNS, point)),
        "final_loss": result.final_loss,
    })
    return path


def cmd_attack_eval(cfg: ExperimentConfig, checkpoint, split: str = "test") -> Path:
    """Evaluate a saved model at every ``sweep.epsilon``; writes CSV and JSON reports."""
    if split not in ("train", "test"):
        raise ConfigError("split must be 'train' or 'test'")
    model, sidecar = load_checkpoint(checkpoint)
    meta = (sidecar or {}).get("config") or {}
    seed = meta.get("point", {}).get("seed", first_point(cfg)[-1])
    train_ds, test_ds = load_datasets(cfg, seed)
    ds = train_ds if split == "train" else test_ds
    if ds.dim != model.input_dim:
        raise ConfigError(f"checkpoint expects {model.input_dim} features, data has {ds.dim}")
    evals = evaluate_point(cfg, model, ds, seed)
    out = cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    header = ["epsilon"] + list(REPORT_COLUMNS)
    for a in range(ds.num_groups):
        header += [f"group_{a}_error", f"group_{a}_margin_proxy"]
    _write_csv(out / "attack_eval.csv", header,
               [[_fmt(eps)] + _report_cells(rep, ds.num_groups) for eps, rep in evals])
    payload = {"checkpoint": str(checkpoint), "split": split,
               "reports": [{"epsilon": eps, **rep.to_dict()} for eps, rep in evals]}
    path = out / "attack_eval.json"
    path.write_text(json.dumps(payload, indent=2) + "\n")
    return path


# --------------------------------------------------------------------------
# theory

def cmd_theory(spec: GaussianMixtureSpec, epsilon: float, lambdas, out_dir,
               curve_points: int = 401):
    """Write the theorem report, threshold table, loss curves and lambda path.

    Returns the :class:`~fairrobust.mixture_theory.TheoremReport`.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    budget = TheoryBudget(epsilon)
    report = mt.verify_theorems(spec, budget)
    (out / "theorem.json").write_text(report.to_json(indent=2) + "\n")

    rows = []
    for name, theta in report.thresholds.items():
        rows.append([name, _fmt(theta), str(report.clamped[name]).lower(),
                     _fmt(mt.natural_error(spec, theta)),
                     _fmt(mt.robust_error(spec, theta, budget)),
                     _fmt(mt.boundary_error(spec, theta, budget)),
                     _fmt(mt.avg_boundary_distance(spec, theta))])
    _write_csv(out / "thresholds.csv", ["threshold", "theta", "clamped", "natural_error",
                                        "robust_error", "boundary_error", "avg_distance"], rows)

    thetas = np.linspace(spec.mu_minus, spec.mu_plus, curve_points)
    rows = []
    for t in thetas:
        e_plus, e_minus = mt.group_errors(spec, float(t))
        rows.append([_fmt(t), _fmt(mt.natural_error(spec, float(t))), _fmt(abs(e_plus - e_minus)),
                     _fmt(mt.robust_error(spec, float(t), budget))])
    _write_csv(out / "curves.csv", ["theta", "natural_error", "fair_gap", "robust_error"], rows)

    rows = []
    for lam in lambdas:
        clf = mt.penalized_fair_threshold(spec, float(lam))
        e_plus, e_minus = mt.group_errors(spec, clf)
        rows.append([_fmt(float(lam)), _fmt(clf.theta), _fmt(mt.natural_error(spec, clf)),
                     _fmt(abs(e_plus - e_minus)), _fmt(mt.avg_boundary_distance(spec, clf))])
    _write_csv(out / "lambda_path.csv",
               ["lambda", "theta", "natural_error", "fair_gap", "avg_distance"], rows)
    return report
