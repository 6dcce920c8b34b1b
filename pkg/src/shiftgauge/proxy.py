"""Proxy risk of a candidate model and the tools built on it.

The proxy risk is the largest target disagreement between the candidate and a
check model that stays inside the DIR constraint set
{h' : R_S(h') + alpha * d(h') <= epsilon}. Check models are first trained on
the DIR objective, then pushed away from the candidate on target inputs while a
Lagrangian penalty holds them near the set; only epochs whose audited objective
is within epsilon count.
"""
from __future__ import annotations

import statistics
from dataclasses import dataclass, field, replace
from typing import Callable, Sequence

import numpy as np

from . import tensor as T
from .classdiv import Feasibility, HypothesisClass, PairAscent, _pretrain, disagree_loss
from .data import Dataset
from .errors import EstimationError, InputError
from .hypothesis import Hypothesis, MlpSpec, disagreement, zero_one_risk
from .rng import child_seed
from .trainer import (DirConfig, DirRun, constraint_alpha, dir_objective,
                      epsilon_from_pretrained, fit_dir, source_split)


@dataclass
class ProxyEpoch:
    epoch: int
    disagreement: float
    # NaN / None when the epoch could not raise the maximum and was not audited
    objective: float
    feasible: bool | None
    restart: int = 0
    multiplier: float = 0.0


@dataclass
class ProxyResult:
    max_risk: float
    best_check_model: Hypothesis | None
    epsilon_used: float
    feasible_epochs: int
    trace: list[ProxyEpoch] = field(default_factory=list)
    pretrained: Hypothesis | None = None

    def trace_rows(self) -> list[tuple]:
        return [(r.epoch, r.disagreement, r.objective,
                 "" if r.feasible is None else int(r.feasible)) for r in self.trace]


def _pretrain_check(check_spec: MlpSpec, source: Dataset, target: Dataset, cfg: DirConfig,
                    init: Hypothesis | None, tag: str):
    run, _ = fit_dir(check_spec, source, target, cfg, cfg.epochs_t1, init=init, tag=tag)
    return run


def compute_proxy_risk(h: Hypothesis, check_spec: MlpSpec, source: Dataset, target: Dataset,
                       cfg: DirConfig, init: Hypothesis | None = None,
                       audit_every_epoch: bool = False, tag: str = "check",
                       pretrained: Hypothesis | None = None) -> ProxyResult:
    """Max feasible target disagreement between ``h`` and a DIR check model.

    ``init`` warm-starts the check model. By default the constraint is audited
    only on epochs that would raise the running maximum, which is all the
    maximum needs; ``audit_every_epoch`` fills in every trace row.
    ``pretrained`` skips T1 and uses the given model as the pretrained check
    model; pair it with a fixed ``cfg.epsilon``.
    """
    if check_spec.input_dim != h.spec.input_dim or check_spec.num_classes != h.num_classes:
        raise InputError(f"check spec {check_spec} does not fit candidate {h.spec}")
    target = target.unlabeled()
    _, s_val = source_split(source, cfg)
    alpha = constraint_alpha(cfg)
    xt = target.features
    base = h.predict(xt)

    def objective(model: Hypothesis) -> float:
        return dir_objective(model, s_val, target, alpha, cfg.divergence_method, cfg)

    if pretrained is not None:
        h0 = pretrained.copy()
    else:
        h0 = _pretrain_check(check_spec, source, target, cfg, init, f"{tag}/pretrain").h
    eps = epsilon_from_pretrained(h0, s_val, target, cfg)
    obj0 = objective(h0)
    if cfg.epsilon is None and obj0 > eps:
        raise EstimationError(f"pretrained check model infeasible: {obj0} > {eps}")
    feasible0 = obj0 <= eps
    d0 = float(np.mean(h0.predict(xt) != base))
    max_risk = d0 if feasible0 else 0.0
    best = h0.copy() if feasible0 else None
    trace = [ProxyEpoch(0, d0, obj0, feasible0)]
    feasible_epochs = int(feasible0)

    for restart in range(cfg.restarts):
        rcfg = cfg if restart == 0 else cfg.with_seed(child_seed(cfg.seed, f"restart{restart}"))
        for lam in cfg.multipliers():
            if restart == 0:
                start = h0
            else:
                # random starts reach check models that a pretrained start can
                # only get to through dead ReLU regions
                start = Hypothesis.init(check_spec, rcfg.seed, cfg.dropout_rate,
                                        f"init/hypothesis/{tag}/restart")
            run = _ascent_run(start, source, target, replace(rcfg, lambda_penalty=lam), tag)
            for epoch in range(1, cfg.epochs_t2 + 1):
                run.run_epoch(epoch, _ascent_loss(run, base, alpha, lam, cfg.disagreement_loss))
                d = float(np.mean(run.h.predict(xt) != base))
                obj, ok = float("nan"), None
                if audit_every_epoch or d > max_risk:
                    obj = objective(run.h)
                    ok = obj <= eps
                    feasible_epochs += int(ok)
                    if ok and d > max_risk:
                        max_risk, best = d, run.h.copy()
                trace.append(ProxyEpoch(epoch, d, obj, ok, restart, lam))
    return ProxyResult(max_risk, best, eps, feasible_epochs, trace, h0)


def _ascent_run(start: Hypothesis, source: Dataset, target: Dataset, cfg: DirConfig, tag: str):
    train, _ = source_split(source, cfg)
    return DirRun(start.copy(), train, target, cfg, f"{tag}/ascent")


def _ascent_loss(run, base_labels: np.ndarray, alpha: float, lam: float, kind: str):
    def loss_fn(sb, tb):
        zt = run.encode_target(tb)
        dis = disagree_loss(run.h.head(zt), base_labels[tb], kind)
        return T.add(dis, T.scale(run.dir_loss(sb, tb, alpha), lam))
    return loss_fn


def triangle_holds(h: Hypothesis, check: Hypothesis, target: Dataset) -> tuple[bool, int, int, int]:
    """Integer-count check of R_T(h) <= R_T(h, h') + R_T(h') on labeled target."""
    y = target.require_labels()
    ph, pc = h.predict(target.features), check.predict(target.features)
    err_h = int(np.count_nonzero(ph != y))
    dis = int(np.count_nonzero(ph != pc))
    err_c = int(np.count_nonzero(pc != y))
    return err_h <= dis + err_c, err_h, dis, err_c


# division self-tuning

@dataclass
class DivisionReport:
    division_index: int
    worst_in_class_proxy_risk: float
    second_level_division: int
    seeds: list[int]
    per_seed: list[float]


def worst_in_class_value(spec: MlpSpec, second_level_spec: MlpSpec, source: Dataset,
                         target: Dataset, cfg: DirConfig, tag: str = "wic") -> float:
    """Best feasible target disagreement between two independently constrained DIR models."""
    target = target.unlabeled()
    s_train, s_val = source_split(source, cfg)
    cls_a = HypothesisClass(spec, "dir")
    cls_b = HypothesisClass(second_level_spec, "dir")
    feas_a = Feasibility(cls_a, s_val, target, cfg)
    feas_b = Feasibility(cls_b, s_val, target, cfg)
    xt = target.features
    best = None
    for restart in range(cfg.restarts):
        rcfg = cfg if restart == 0 else cfg.with_seed(child_seed(cfg.seed, f"restart{restart}"))
        a0 = _pretrain(spec, cls_a, source, target, rcfg, f"{tag}/a")
        b0 = _pretrain(second_level_spec, cls_b, source, target, rcfg, f"{tag}/b")
        # one epsilon per level, each from its own pretrained model
        feas_a.calibrate(a0)
        feas_b.calibrate(b0)
        for lam in cfg.multipliers():
            a, b = a0.copy(), b0.copy()
            ascent = PairAscent(a, b, a.parameters(), b.parameters(), s_train, target,
                                replace(rcfg, lambda_penalty=lam), "dir", "dir", direction=1,
                                agree_weight=0.0, tag=f"{tag}/r{restart}")
            for epoch in range(cfg.epochs_t2 + 1):
                if epoch > 0:
                    ascent.run_epoch(epoch)
                d = disagreement(a, b, xt)
                if (best is None or d > best) and feas_a.ok(a) and feas_b.ok(b):
                    best = d
    if best is None:
        raise EstimationError("no feasible pair for worst in-class proxy risk")
    return best


def worst_in_class_proxy_risk(division_i: int, second_level_spec: MlpSpec, source: Dataset,
                              target: Dataset, cfg: DirConfig, base_spec: MlpSpec,
                              seeds: Sequence[int] = (0,)) -> DivisionReport:
    """Worst in-class proxy risk of division ``division_i`` of ``base_spec``."""
    spec = base_spec.with_division(division_i)
    values = [worst_in_class_value(spec, second_level_spec, source, target, cfg.with_seed(s))
              for s in seeds]
    return DivisionReport(division_i, float(statistics.median(values)),
                          second_level_spec.division_index, list(seeds), values)


@dataclass
class SweepRow:
    division_index: int
    second_level_division: int
    seed: int
    worst_in_class_proxy_risk: float
    true_target_risk: float | None = None


@dataclass
class DivisionSelection:
    chosen: int
    scores: dict[int, float]
    table: list[SweepRow]


TrueRiskFn = Callable[[int, int], float]
DataFn = Callable[[int], tuple[Dataset, Dataset]]


def select_division(base_spec: MlpSpec, candidate_divisions: Sequence[int],
                    second_level_divisions: Sequence[int] | None, source: Dataset,
                    target: Dataset, cfg: DirConfig, seeds: Sequence[int] = (0, 1, 2, 3, 4),
                    true_risk: TrueRiskFn | None = None,
                    data: DataFn | None = None) -> DivisionSelection:
    """Pick the division with the smallest worst in-class proxy risk.

    A division's score is the largest, over second-level divisions, of the
    median across seeds. ``second_level_divisions=None`` pairs each candidate
    with itself. Ties go to the shallower encoder. ``true_risk(division, seed)``
    fills the table's hidden-label column when given. ``data(seed)`` returns a
    per-seed (source, target) pair and overrides ``source``/``target``.
    """
    candidates = sorted(set(candidate_divisions))
    if not candidates:
        raise InputError("select_division needs at least one candidate division")
    table: list[SweepRow] = []
    scores: dict[int, float] = {}
    for i in candidates:
        seconds = [i] if second_level_divisions is None else list(second_level_divisions)
        worst = 0.0
        for j in seconds:
            per_seed = []
            for s in seeds:
                src, tgt = (source, target) if data is None else data(s)
                v = worst_in_class_value(base_spec.with_division(i), base_spec.with_division(j),
                                         src, tgt, cfg.with_seed(s))
                per_seed.append(v)
                tr = None if true_risk is None else true_risk(i, s)
                table.append(SweepRow(i, j, s, v, tr))
            worst = max(worst, float(statistics.median(per_seed)))
        scores[i] = worst
    chosen = min(candidates, key=lambda i: (scores[i], i))
    return DivisionSelection(chosen, scores, table)


# early stopping

@dataclass
class EarlyStopRow:
    epoch: int
    src_risk: float
    proxy_risk: float
    true_target_risk: float | None


def early_stopping_trace(checkpoints: Sequence, check_spec: MlpSpec, source: Dataset,
                         target: Dataset, cfg: DirConfig) -> list[EarlyStopRow]:
    """Proxy risk at each checkpoint, warm-starting every check model from the
    previous checkpoint's best one.

    The check-model set does not depend on the candidate, so epsilon is fixed
    by the first checkpoint's pretraining and reused; later checkpoints skip
    pretraining. ``checkpoints`` holds hypotheses or (epoch, hypothesis) pairs
    in epoch order. The true-risk column is filled only when ``target`` carries
    labels.
    """
    rows = []
    warm = None
    run_cfg = cfg
    _, s_val = source_split(source, cfg)
    for k, item in enumerate(checkpoints):
        epoch, h = item if isinstance(item, tuple) else (k + 1, item)
        res = compute_proxy_risk(h, check_spec, source, target, run_cfg, pretrained=warm,
                                 tag="earlystop")
        if warm is None:
            run_cfg = replace(cfg, epsilon=res.epsilon_used)
        warm = res.best_check_model or res.pretrained or warm
        true = None
        if target.labels is not None:
            true = zero_one_risk(h, target.features, target.labels)
        rows.append(EarlyStopRow(int(epoch), zero_one_risk(h, s_val.features, s_val.labels),
                                 res.max_risk, true))
    return rows


# error detection

def detect_errors(h: Hypothesis, proxy: ProxyResult, x) -> np.ndarray:
    """Flag points where the best check model disagrees with ``h``."""
    if proxy.best_check_model is None:
        raise InputError("proxy result has no feasible check model")
    return np.asarray(h.predict(x) != proxy.best_check_model.predict(x))


@dataclass(frozen=True)
class DetectionScore:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int


def score_error_detection(flags, true_errors) -> DetectionScore:
    """Precision, recall and F1 with "misclassified" as the positive class."""
    f = np.asarray(flags, dtype=bool)
    e = np.asarray(true_errors, dtype=bool)
    if f.shape != e.shape:
        raise InputError(f"flags {f.shape} and true errors {e.shape} differ in shape")
    tp = int(np.count_nonzero(f & e))
    fp = int(np.count_nonzero(f & ~e))
    fn = int(np.count_nonzero(~f & e))
    tn = int(np.count_nonzero(~f & ~e))
    if tp + fp == 0:
        # nothing flagged: perfect only if nothing was wrong
        v = 1.0 if fn == 0 else 0.0
        return DetectionScore(v, v, v, tp, fp, fn, tn)
    p = tp / (tp + fp)
    r = tp / (tp + fn) if tp + fn else 1.0
    f1 = 2 * p * r / (p + r) if p + r else 0.0
    return DetectionScore(p, r, f1, tp, fp, fn, tn)
