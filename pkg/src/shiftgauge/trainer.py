"""Domain-invariant (DANN-style) training and the DIR objective used as a
membership score for check models."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, fields, replace
from typing import Callable

import numpy as np

from . import tensor as T
from .alignment import JS, METHODS, AlignmentTerm, BatchPlan, median_bandwidth
from .data import Dataset, split
from .divergence import AuditConfig, estimate, mmd2_rbf
from .errors import ConfigError, InputError, TrainingError
from .hypothesis import Hypothesis, MlpSpec, zero_one_risk
from .rng import stream
from .tensor import Adam, Tensor


@dataclass(frozen=True)
class DirConfig:
    alpha_max: float = 1.0
    lr: float = 1e-3
    epochs_t1: int = 30
    epochs_t2: int = 20
    lambda_penalty: float = 50.0
    epsilon_slack: float = 0.10
    batch_size: int = 64
    seed: int = 0
    divergence_method: str = JS
    grl: bool = True
    val_fraction: float = 0.2
    disc_hidden: tuple[int, ...] = (64, 64)
    audit_epochs: int = 30
    dropout_rate: float = 0.0
    # fixed threshold instead of the (1 + slack) * pretrained-objective rule
    epsilon: float | None = None
    restarts: int = 1
    # extra multipliers tried as separate ascents; the best feasible result wins
    penalty_grid: tuple[float, ...] = ()
    disagreement_loss: str = "complement"

    def __post_init__(self):
        object.__setattr__(self, "disc_hidden", tuple(int(w) for w in self.disc_hidden))
        object.__setattr__(self, "penalty_grid", tuple(float(v) for v in self.penalty_grid))
        if any(v <= 0 for v in self.penalty_grid):
            raise ConfigError(f"penalty_grid values must be positive, got {self.penalty_grid}")
        if self.alpha_max < 0:
            raise ConfigError(f"alpha_max must be >= 0, got {self.alpha_max}")
        if self.epsilon_slack < 0:
            raise ConfigError(f"epsilon_slack must be >= 0, got {self.epsilon_slack}")
        for name in ("lr", "lambda_penalty", "batch_size", "restarts"):
            if getattr(self, name) <= 0:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        for name in ("epochs_t1", "epochs_t2", "audit_epochs", "seed"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0, got {getattr(self, name)}")
        if self.divergence_method not in METHODS:
            raise ConfigError(f"divergence_method must be one of {METHODS}, got {self.divergence_method!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1), got {self.val_fraction}")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.disagreement_loss not in ("complement", "neg_ce"):
            raise ConfigError(f"disagreement_loss must be 'complement' or 'neg_ce', got {self.disagreement_loss!r}")

    def audit_config(self) -> AuditConfig:
        return AuditConfig(epochs=self.audit_epochs, seed=self.seed, hidden=self.disc_hidden)

    def multipliers(self) -> tuple[float, ...]:
        return (self.lambda_penalty,) + tuple(v for v in self.penalty_grid if v != self.lambda_penalty)

    def with_seed(self, seed: int) -> "DirConfig":
        return replace(self, seed=seed)

    @classmethod
    def field_names(cls) -> list[str]:
        return [f.name for f in fields(cls)]


def alpha_schedule(progress: float, alpha_max: float = 1.0) -> float:
    """alpha_max * (2 / (1 + exp(-10 p)) - 1): ramps the alignment weight from 0."""
    if not 0.0 <= progress <= 1.0:
        raise InputError(f"progress must be in [0, 1], got {progress}")
    return alpha_max * (2.0 / (1.0 + math.exp(-10.0 * progress)) - 1.0)


@dataclass
class EpochRecord:
    epoch: int
    src_train_risk: float
    src_val_risk: float
    divergence: float
    objective: float


@dataclass
class TrainTrace:
    records: list[EpochRecord] = field(default_factory=list)

    COLUMNS = ("epoch", "src_train_risk", "src_val_risk", "divergence", "objective")

    def append(self, rec: EpochRecord) -> None:
        if self.records and rec.epoch <= self.records[-1].epoch:
            raise InputError("trace epochs must be strictly increasing")
        self.records.append(rec)

    def __len__(self) -> int:
        return len(self.records)

    def rows(self) -> list[tuple]:
        return [(r.epoch, r.src_train_risk, r.src_val_risk, r.divergence, r.objective)
                for r in self.records]

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow([row[0], *(repr(float(v)) for v in row[1:])])
        return buf.getvalue()


def source_split(source: Dataset, cfg: DirConfig) -> tuple[Dataset, Dataset]:
    """(train, validation); with ``val_fraction == 0`` both are the full source."""
    if cfg.val_fraction == 0.0:
        return source, source
    return split(source, cfg.val_fraction, cfg.seed)


def _check_inputs(spec: MlpSpec, source: Dataset, target: Dataset | None) -> None:
    y = source.require_labels()
    if len(np.unique(y)) < 2:
        raise InputError("source must contain at least 2 classes")
    if y.max() >= spec.num_classes:
        raise InputError(f"source label {y.max()} out of range for {spec.num_classes} classes")
    if source.dim != spec.input_dim:
        raise InputError(f"spec input_dim {spec.input_dim} does not match source width {source.dim}")
    if target is not None:
        if len(target) == 0:
            raise InputError("target must be non-empty")
        if target.dim != spec.input_dim:
            raise InputError(f"spec input_dim {spec.input_dim} does not match target width {target.dim}")


def trace_divergence(h: Hypothesis, source: Dataset, target: Dataset | None,
                     max_points: int = 256) -> float:
    """Cheap deterministic alignment reading for traces: MMD^2 of encoder outputs."""
    if target is None:
        return float("nan")
    zs = h.embed(source.features[:max_points])
    zt = h.embed(target.features[:max_points])
    sigma, _ = median_bandwidth(np.concatenate([zs, zt]))
    return max(mmd2_rbf(zs, zt, sigma), 0.0)


class DirRun:
    """Mutable training state for one hypothesis and its alignment adversary."""

    def __init__(self, h: Hypothesis, source_train: Dataset, target: Dataset | None,
                 cfg: DirConfig, tag: str = "dir"):
        self.h = h
        self.cfg = cfg
        self.xs = source_train.features
        self.ys = source_train.require_labels()
        self.xt = None if target is None else target.features
        self.opt = Adam(h.parameters(), cfg.lr)
        self.align = None
        if target is not None and cfg.alpha_max > 0:
            self.align = AlignmentTerm(cfg.divergence_method, h.spec.latent_dim, cfg.seed, cfg.lr,
                                       cfg.disc_hidden, cfg.grl, f"init/discriminator/{tag}")
        self.plan = BatchPlan(len(self.xs), 1 if self.xt is None else len(self.xt), cfg.batch_size,
                              stream(cfg.seed, f"batches/source/{tag}"),
                              stream(cfg.seed, f"batches/target/{tag}"))
        self.drop_s = stream(cfg.seed, f"dropout/source/{tag}")
        self.drop_t = stream(cfg.seed, f"dropout/target/{tag}")
        self.step_count = 0

    def encode_source(self, idx) -> Tensor:
        return self.h.encode(Tensor(self.xs[idx]), self.drop_s)

    def encode_target(self, idx) -> Tensor:
        return self.h.encode(Tensor(self.xt[idx]), self.drop_t)

    def dir_loss(self, sb, tb, alpha: float) -> Tensor:
        zs = self.encode_source(sb)
        loss = T.cross_entropy(self.h.head(zs), self.ys[sb])
        if self.align is not None and tb is not None:
            loss = T.add(loss, self.align.loss(zs, self.encode_target(tb), alpha))
        return loss

    def apply(self, loss: Tensor, epoch: int) -> None:
        value = loss.item()
        if not np.isfinite(value):
            raise TrainingError(f"non-finite loss at epoch {epoch}", epoch=epoch)
        self.opt.zero_grad()
        loss.backward()
        try:
            self.opt.step()
        except TrainingError as exc:
            raise TrainingError(f"{exc} (epoch {epoch})", step=exc.step, epoch=epoch) from exc
        if self.align is not None:
            self.align.step()
        self.step_count += 1

    def run_epoch(self, epoch: int, loss_fn: Callable[[np.ndarray, np.ndarray | None], Tensor]) -> None:
        for sb, tb in self.plan.epoch(with_target=self.xt is not None):
            self.apply(loss_fn(sb, tb), epoch)


def _record(h: Hypothesis, epoch: int, train: Dataset, val: Dataset, target: Dataset | None,
            alpha: float) -> EpochRecord:
    tr = zero_one_risk(h, train.features, train.labels)
    va = zero_one_risk(h, val.features, val.labels)
    div = trace_divergence(h, val, target)
    obj = va if alpha == 0.0 or not np.isfinite(div) else va + alpha * div
    if not np.isfinite(obj):
        raise TrainingError(f"non-finite objective at epoch {epoch}", epoch=epoch)
    return EpochRecord(epoch, tr, va, div, obj)


EpochCallback = Callable[[int, Hypothesis], None]


def fit_dir(spec: MlpSpec, source: Dataset, target: Dataset, cfg: DirConfig,
            epochs: int | None = None, init: Hypothesis | None = None, tag: str = "dir",
            callback: EpochCallback | None = None) -> tuple[DirRun, TrainTrace]:
    """Train and return the live run (hypothesis plus adversary) and its trace."""
    _check_inputs(spec, source, target)
    epochs = cfg.epochs_t1 if epochs is None else epochs
    train, val = source_split(source, cfg)
    h = init.copy() if init is not None else Hypothesis.init(spec, cfg.seed, cfg.dropout_rate,
                                                             f"init/hypothesis/{tag}")
    run = DirRun(h, train, target, cfg, tag)
    trace = TrainTrace()
    total = max(epochs * run.plan.steps_per_epoch - 1, 1)
    for epoch in range(1, epochs + 1):
        def loss_fn(sb, tb):
            alpha = alpha_schedule(min(run.step_count / total, 1.0), cfg.alpha_max)
            return run.dir_loss(sb, tb, alpha)

        run.run_epoch(epoch, loss_fn)
        alpha_now = alpha_schedule(min(run.step_count / total, 1.0), cfg.alpha_max)
        trace.append(_record(h, epoch, train, val, target, alpha_now))
        if callback is not None:
            callback(epoch, h)
    return run, trace


def train_dir(spec: MlpSpec, source: Dataset, target: Dataset, cfg: DirConfig,
              epochs: int | None = None, init: Hypothesis | None = None,
              callback: EpochCallback | None = None, tag: str = "dir") -> tuple[Hypothesis, TrainTrace]:
    """Minimize source cross-entropy + alpha(p) * alignment term; deterministic in ``cfg.seed``."""
    run, trace = fit_dir(spec, source, target, cfg, epochs, init, tag, callback)
    return run.h, trace


def train_supervised(spec: MlpSpec, source: Dataset, cfg: DirConfig, target: Dataset | None = None,
                     epochs: int | None = None, callback: EpochCallback | None = None,
                     tag: str = "dir") -> tuple[Hypothesis, TrainTrace]:
    """Plain source training. ``target`` only feeds the trace's divergence column."""
    _check_inputs(spec, source, target)
    epochs = cfg.epochs_t1 if epochs is None else epochs
    train, val = source_split(source, cfg)
    h = Hypothesis.init(spec, cfg.seed, cfg.dropout_rate, f"init/hypothesis/{tag}")
    run = DirRun(h, train, None, cfg, tag)
    trace = TrainTrace()
    for epoch in range(1, epochs + 1):
        run.run_epoch(epoch, lambda sb, tb: run.dir_loss(sb, None, 0.0))
        trace.append(_record(h, epoch, train, val, target, 0.0))
        if callback is not None:
            callback(epoch, h)
    return h, trace


def dir_objective(h: Hypothesis, source: Dataset, target: Dataset, alpha: float,
                  method: str = JS, cfg: DirConfig | AuditConfig | None = None) -> float:
    """Zero-one source risk + alpha * audited divergence of h's encoder."""
    risk = zero_one_risk(h, source.features, source.require_labels())
    if alpha == 0.0:
        return risk
    return risk + alpha * estimate(method, h, source, target, cfg).value


def constraint_alpha(cfg: DirConfig) -> float:
    return cfg.alpha_max


def epsilon_from_pretrained(h0: Hypothesis, source_val: Dataset, target: Dataset,
                            cfg: DirConfig) -> float:
    """(1 + slack) times the pretrained check model's objective, or ``cfg.epsilon`` if set."""
    if cfg.epsilon is not None:
        return float(cfg.epsilon)
    obj = dir_objective(h0, source_val, target, constraint_alpha(cfg), cfg.divergence_method, cfg)
    return (1.0 + cfg.epsilon_slack) * obj
