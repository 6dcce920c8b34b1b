"""Experiment protocols shared by the CLI and the acceptance tests.

Only functions in this module (and ``eval`` in the CLI) call
``ShiftPair.hidden_target``; every estimator receives the unlabeled target.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .baselines import ben_david_estimate, conf_score_estimate
from .config import ExperimentConfig
from .data import (ShiftPair, load_csv, load_idx, make_gauss_shift, make_moons_shift, make_pair,
                   make_toy2d)
from .errors import ConfigError
from .hypothesis import Hypothesis, MlpSpec, zero_one_risk
from .proxy import (DetectionScore, DivisionSelection, EarlyStopRow, ProxyResult,
                    compute_proxy_risk, detect_errors, early_stopping_trace, score_error_detection,
                    select_division, triangle_holds)
from .reports import RiskReport
from .trainer import DirConfig, TrainTrace, train_dir, train_supervised

# Estimator settings for the 2-D synthetic suite: MMD alignment with a strong
# weight keeps check models close to the target labeling on these tasks.
ESTIMATOR = dict(epochs_t1=150, epochs_t2=20, lr=3e-3, divergence_method="mmd_rbf", alpha_max=10.0)
# Settings for DIR training in the architecture and division sweeps.
SWEEP = dict(epochs_t1=60, epochs_t2=10)

LINEAR_TOY = MlpSpec(2, (2, 16, 16), 2, 1)
DEEP_TOY = MlpSpec(2, (16,) * 5 + (2, 16), 2, 6)


def estimator_config(seed: int, **overrides) -> DirConfig:
    return DirConfig(seed=seed, **{**ESTIMATOR, **overrides})


# ---------------------------------------------------------------- data

def build_pair(cfg: ExperimentConfig, seed: int) -> ShiftPair:
    d = cfg.dataset
    if d.generator == "toy2d":
        pair = make_toy2d(d.epsilon, d.n, seed, d.standardize)
    elif d.generator == "moons":
        pair = make_moons_shift(d.rotation_deg, d.noise, d.n, seed, d.standardize)
    elif d.generator == "gauss":
        pair = make_gauss_shift(d.mean_shift, d.n, seed, d.spread, d.standardize)
    elif d.generator == "csv":
        if not d.source_path or not d.target_path:
            raise ConfigError("dataset.source_path and dataset.target_path are required for csv")
        src = load_csv(d.source_path, d.label_column, d.has_header, "source")
        tgt = load_csv(d.target_path, d.label_column if d.target_has_labels else None,
                       d.has_header, "target")
        pair = make_pair(src, tgt, d.name or "csv", seed, cfg.train.val_fraction or 0.2, d.standardize)
    else:
        keys = ("source_images", "source_labels", "target_images", "target_labels")
        missing = [k for k in keys if not getattr(d, k)]
        if missing:
            raise ConfigError(f"dataset.{missing[0]} is required for idx")
        src = load_idx(d.source_images, d.source_labels, "source")
        tgt = load_idx(d.target_images, d.target_labels, "target")
        pair = make_pair(src, tgt, d.name or "idx", seed, cfg.train.val_fraction or 0.2, d.standardize)
    if d.name:
        pair.name = d.name
    return pair


def task_name(cfg: ExperimentConfig) -> str:
    d = cfg.dataset
    if d.name:
        return d.name
    if d.generator == "toy2d":
        return f"toy2d_eps{d.epsilon:g}"
    if d.generator == "moons":
        return f"moons_rot{d.rotation_deg:g}"
    if d.generator == "gauss":
        return f"gauss_shift{d.mean_shift:g}"
    return d.generator


def has_hidden_labels(cfg: ExperimentConfig) -> bool:
    return cfg.dataset.generator != "csv" or cfg.dataset.target_has_labels


def train_candidate(cfg: ExperimentConfig, pair: ShiftPair, seed: int,
                    callback=None) -> tuple[Hypothesis, TrainTrace]:
    spec = cfg.model_spec(pair.source.dim)
    tcfg = cfg.train.with_seed(seed)
    if cfg.model.candidate == "supervised":
        return train_supervised(spec, pair.source, tcfg, pair.target_unlabeled, callback=callback)
    return train_dir(spec, pair.source, pair.target_unlabeled, tcfg, callback=callback)


def hidden_risk(h: Hypothesis, pair: ShiftPair, purpose: str) -> float:
    tgt = pair.hidden_target(purpose)
    return zero_one_risk(h, tgt.features, tgt.labels)


# ---------------------------------------------------------------- synthetic suite

@dataclass(frozen=True)
class Task:
    name: str
    make: Callable[[int], ShiftPair]
    spec: MlpSpec


def synthetic_tasks() -> list[Task]:
    moons = MlpSpec(2, (16, 16, 16), 2, 1)
    tasks = [Task(f"moons_rot{r}", (lambda s, r=r: make_moons_shift(r, 0.1, 1000, s)), moons)
             for r in (0, 20, 40, 60)]
    tasks += [Task(f"gauss_shift{m:g}", (lambda s, m=m: make_gauss_shift(m, 1000, s)), moons)
              for m in (0.5, 1.0, 1.5)]
    # a 2-unit latent layer keeps the check class from containing label-flipped models
    tasks.append(Task("toy2d_eps0.05", lambda s: make_toy2d(0.05, 1000, s), LINEAR_TOY))
    return tasks


@dataclass
class TaskOutcome:
    task: str
    true_risk: float
    reports: list[RiskReport]
    proxy: ProxyResult
    triangle: tuple[bool, int, int, int]
    n_target: int = 0


def run_methods_task(task: Task, seed: int = 0) -> TaskOutcome:
    """Supervised candidate, then proxy risk, Ben-David and CONF estimates."""
    pair = task.make(seed)
    cfg = estimator_config(seed)
    h, _ = train_supervised(task.spec, pair.source, cfg)
    target = pair.target_unlabeled
    proxy = compute_proxy_risk(h, task.spec, pair.source, target, cfg)
    bd = ben_david_estimate(h, "source_constrained", pair.source, target, cfg)
    conf = conf_score_estimate(h, pair.source, target, cfg)
    truth = hidden_risk(h, pair, "methods suite")
    tri = triangle_holds(h, proxy.best_check_model, pair.hidden_target("triangle audit"))
    reports = [RiskReport(task.name, m, v, seed, truth)
               for m, v in (("proxy", proxy.max_risk), (bd.method, bd.predicted_risk),
                            (conf.method, conf.predicted_risk))]
    return TaskOutcome(task.name, truth, reports, proxy, tri, len(target))


def methods_suite(seed: int = 0, tasks: Sequence[Task] | None = None) -> list[TaskOutcome]:
    return [run_methods_task(t, seed) for t in (tasks or synthetic_tasks())]


# ---------------------------------------------------------------- toy architecture sweep

def toy_encoder_risks(seeds: Sequence[int] = range(5), epsilon: float = 0.05,
                      n: int = 1000) -> dict[str, list[float]]:
    """Target risk of DIR models with a linear and a 6-hidden-layer encoder on the toy task."""
    out: dict[str, list[float]] = {"linear": [], "deep": []}
    for s in seeds:
        pair = make_toy2d(epsilon, n, s)
        for name, spec in (("linear", LINEAR_TOY), ("deep", DEEP_TOY)):
            h, _ = train_dir(spec, pair.source, pair.target_unlabeled, DirConfig(seed=s, epochs_t1=60))
            out[name].append(hidden_risk(h, pair, "toy encoder sweep"))
    return out


# ---------------------------------------------------------------- division self-tuning

@dataclass
class DivisionOutcome:
    selection: DivisionSelection
    true_risks: dict[int, list[float]] = field(default_factory=dict)

    def true_median(self, division: int) -> float:
        return float(statistics.median(self.true_risks[division]))

    @property
    def best_true(self) -> float:
        return min(self.true_median(d) for d in self.true_risks)

    @property
    def chosen_true(self) -> float:
        return self.true_median(self.selection.chosen)


DIVISION_SUITES = {
    "toy": (MlpSpec(2, (2, 16, 16, 16, 16, 16, 16), 2, 1), (1, 3, 6),
            lambda s: make_toy2d(0.05, 1000, s)),
    "moons": (MlpSpec(2, (16, 16, 16, 16), 2, 1), (1, 2, 3),
              lambda s: make_moons_shift(30, 0.1, 1000, s)),
}


def division_experiment(suite: str, seeds: Sequence[int] = range(5)) -> DivisionOutcome:
    """Sweep divisions by worst in-class proxy risk; score each with hidden labels."""
    base, divisions, make = DIVISION_SUITES[suite]
    pairs = {s: make(s) for s in seeds}
    true: dict[int, list[float]] = {}

    def true_risk(i: int, s: int) -> float:
        pair = pairs[s]
        h, _ = train_dir(base.with_division(i), pair.source, pair.target_unlabeled,
                         DirConfig(seed=s, **SWEEP))
        r = hidden_risk(h, pair, "division sweep")
        true.setdefault(i, []).append(r)
        return r

    sel = select_division(base, divisions, None, None, None, DirConfig(**SWEEP), seeds, true_risk,
                          data=lambda s: (pairs[s].source, pairs[s].target_unlabeled))
    return DivisionOutcome(sel, true)


# ---------------------------------------------------------------- early stopping

def early_stop_experiment(seed: int = 0, rotation: float = 40.0, every: int = 2,
                          epochs: int = 20) -> list[EarlyStopRow]:
    """Proxy and true risk along DIR training of a candidate on rotated moons."""
    pair = make_moons_shift(rotation, 0.1, 1000, seed)
    spec = MlpSpec(2, (16, 16, 16), 2, 1)
    checkpoints = []
    train_dir(spec, pair.source, pair.target_unlabeled, DirConfig(seed=seed, epochs_t1=epochs),
              callback=lambda e, h: checkpoints.append((e, h.copy())) if e % every == 0 else None)
    rows = early_stopping_trace(checkpoints, spec, pair.source, pair.target_unlabeled,
                                estimator_config(seed, epochs_t1=60))
    tgt = pair.hidden_target("early stopping")
    for row, (_, h) in zip(rows, checkpoints):
        row.true_target_risk = zero_one_risk(h, tgt.features, tgt.labels)
    return rows


# ---------------------------------------------------------------- error detection

def detection_experiment(seed: int = 0) -> DetectionScore:
    """Flag target points of a deep-encoder toy model that the best check model disputes."""
    pair = make_toy2d(0.05, 1000, seed)
    h, _ = train_dir(DEEP_TOY, pair.source, pair.target_unlabeled, DirConfig(seed=seed, epochs_t1=60))
    proxy = compute_proxy_risk(h, LINEAR_TOY, pair.source, pair.target_unlabeled, estimator_config(seed))
    flags = detect_errors(h, proxy, pair.target_unlabeled.features)
    tgt = pair.hidden_target("error detection")
    return score_error_detection(flags, h.predict(tgt.features) != tgt.labels)


def median(values: Sequence[float]) -> float:
    return float(np.median(np.asarray(values, dtype=np.float64)))
