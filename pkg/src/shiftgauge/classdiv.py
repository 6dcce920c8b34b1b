"""Adversarial estimates of class divergences between source and target.

All three estimators optimize a pair of models (A, B) so that their
disagreement differs as much as possible between the two domains. Updates
alternate between A and B: each step one model chases the other's current
hard labels (disagreeing on one domain, agreeing on the other) while a
penalty keeps it inside its class constraint. Reported values are zero-one
quantities on held-out splits, taken at epochs where both models satisfy the
constraint.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Literal

import numpy as np

from . import tensor as T
from .alignment import AlignmentTerm, BatchPlan
from .data import Dataset, split
from .errors import EstimationError, InputError
from .hypothesis import Hypothesis, Layer, MlpSpec, zero_one_risk
from .rng import child_seed, stream
from .tensor import Adam, Tensor
from .trainer import (DirConfig, constraint_alpha, dir_objective, source_split,
                      train_dir, train_supervised)

Constraint = Literal["none", "source_risk", "dir"]


@dataclass
class HypothesisClass:
    """MLP template plus a membership constraint.

    ``source_risk`` means {h : R_S(h) <= epsilon}; ``dir`` means the check-model
    set {h : R_S(h) + alpha * d(g) <= epsilon}. With ``epsilon=None`` the
    threshold is (1 + slack) times the worse pretrained member's score.
    ``fixed`` turns the class into the singleton {fixed}.
    """

    spec: MlpSpec
    constraint: Constraint = "none"
    epsilon: float | None = None
    fixed: Hypothesis | None = None

    def __post_init__(self):
        if self.constraint not in ("none", "source_risk", "dir"):
            raise InputError(f"unknown constraint {self.constraint!r}")


@dataclass
class PairEpoch:
    epoch: int
    restart: int
    multiplier: float
    direction: int
    value: float
    # None when the epoch could not beat the running max and was not audited
    feasible: bool | None


@dataclass
class ClassDivergenceEstimate:
    kind: str
    value: float
    pair: tuple[Hypothesis, Hypothesis] | None
    epsilon: float | None = None
    trace: list[PairEpoch] = field(default_factory=list)


def _unique(params):
    seen, out = set(), []
    for p in params:
        if id(p) not in seen:
            seen.add(id(p))
            out.append(p)
    return out


class _Member:
    """One side of the pair: a hypothesis, its trainable tensors and adversary."""

    def __init__(self, h: Hypothesis, trainable: list[Tensor], cfg: DirConfig, tag: str,
                 align: bool):
        self.h = h
        self.opt = Adam(_unique(trainable), cfg.lr)
        self.align = (AlignmentTerm(cfg.divergence_method, h.spec.latent_dim, cfg.seed, cfg.lr,
                                    cfg.disc_hidden, cfg.grl, f"init/discriminator/{tag}")
                      if align else None)


def disagree_loss(logits: Tensor, other_labels: np.ndarray, kind: str) -> Tensor:
    if kind == "complement":
        return T.complement_cross_entropy(logits, other_labels)
    return T.scale(T.cross_entropy(logits, other_labels), -1.0)


class PairAscent:
    """Maximize R_P(A, B) - agree_weight * R_M(A, B) under class penalties.

    ``P`` is the domain where disagreement is rewarded (target when
    ``direction=+1``, source when ``-1``); ``M`` is the other one.
    """

    def __init__(self, a: Hypothesis, b: Hypothesis, train_a: list[Tensor], train_b: list[Tensor],
                 source_train: Dataset, target_train: Dataset, cfg: DirConfig,
                 penalize_a: Constraint, penalize_b: Constraint, direction: int = 1,
                 agree_weight: float = 1.0, tag: str = "pair"):
        self.cfg = cfg
        self.xs = source_train.features
        self.ys = source_train.require_labels()
        self.xt = target_train.features
        self.direction = direction
        self.agree_weight = agree_weight
        self.pen = (penalize_a, penalize_b)
        self.members = [
            _Member(a, train_a, cfg, f"{tag}/a", penalize_a == "dir") if train_a else None,
            _Member(b, train_b, cfg, f"{tag}/b", penalize_b == "dir") if train_b else None,
        ]
        self.models = (a, b)
        self.plan = BatchPlan(len(self.xs), len(self.xt), cfg.batch_size,
                              stream(cfg.seed, f"batches/source/{tag}"),
                              stream(cfg.seed, f"batches/target/{tag}"))
        self.turn = 0

    def _step_member(self, k: int, sb: np.ndarray, tb: np.ndarray, epoch: int) -> None:
        member = self.members[k]
        me, other = self.models[k], self.models[1 - k]
        xs, xt = self.xs[sb], self.xt[tb]
        if self.direction > 0:
            x_p, x_m = xt, xs
        else:
            x_p, x_m = xs, xt
        lam = self.cfg.lambda_penalty
        zs = me.encode(Tensor(xs))
        zt = me.encode(Tensor(xt))
        z_p, z_m = (zt, zs) if self.direction > 0 else (zs, zt)
        loss = disagree_loss(me.head(z_p), other.predict(x_p), self.cfg.disagreement_loss)
        if self.agree_weight > 0:
            loss = T.add(loss, T.scale(T.cross_entropy(me.head(z_m), other.predict(x_m)),
                                       self.agree_weight))
        pen = self.pen[k]
        if pen != "none":
            penalty = T.cross_entropy(me.head(zs), self.ys[sb])
            if pen == "dir" and member.align is not None:
                penalty = T.add(penalty, member.align.loss(zs, zt, constraint_alpha(self.cfg)))
            loss = T.add(loss, T.scale(penalty, lam))
        if not np.isfinite(loss.item()):
            raise EstimationError(f"non-finite pair objective at epoch {epoch}")
        member.opt.zero_grad()
        loss.backward()
        member.opt.step()
        if member.align is not None:
            member.align.step()

    def run_epoch(self, epoch: int) -> None:
        active = [k for k in (0, 1) if self.members[k] is not None]
        for sb, tb in self.plan.epoch():
            k = active[self.turn % len(active)]
            self.turn += 1
            self._step_member(k, sb, tb, epoch)


def _pair_gap(a: Hypothesis, b: Hypothesis, xs: np.ndarray, xt: np.ndarray) -> float:
    """R_T(a, b) - R_S(a, b) from integer counts."""
    ds = int(np.count_nonzero(a.predict(xs) != b.predict(xs)))
    dt = int(np.count_nonzero(a.predict(xt) != b.predict(xt)))
    return (dt * len(xs) - ds * len(xt)) / (len(xs) * len(xt))


class Feasibility:
    def __init__(self, cls: HypothesisClass, source_val: Dataset, target: Dataset, cfg: DirConfig):
        self.cls = cls
        self.source_val = source_val
        self.target = target
        self.cfg = cfg
        self.epsilon = cls.epsilon

    def score(self, h: Hypothesis) -> float:
        if self.cls.constraint == "source_risk":
            return zero_one_risk(h, self.source_val.features, self.source_val.labels)
        return dir_objective(h, self.source_val, self.target, constraint_alpha(self.cfg),
                             self.cfg.divergence_method, self.cfg)

    def calibrate(self, *members: Hypothesis) -> None:
        if self.cls.constraint == "none" or self.epsilon is not None:
            return
        self.epsilon = (1.0 + self.cfg.epsilon_slack) * max(self.score(h) for h in members)

    def ok(self, h: Hypothesis) -> bool:
        if self.cls.constraint == "none":
            return True
        return self.score(h) <= self.epsilon


def _splits(source: Dataset, target: Dataset, cfg: DirConfig):
    s_train, s_val = source_split(source, cfg)
    if cfg.val_fraction == 0.0:
        t_train = t_val = target
    else:
        t_train, t_val = split(target, cfg.val_fraction, cfg.seed)
    return s_train, s_val, t_train, t_val


def _pretrain(spec: MlpSpec, cls: HypothesisClass, source: Dataset, target: Dataset,
              cfg: DirConfig, tag: str, fresh: bool = False) -> Hypothesis:
    if cls.constraint == "none" or fresh:
        return Hypothesis.init(spec, cfg.seed, cfg.dropout_rate, f"init/hypothesis/{tag}")
    if cls.constraint == "dir":
        return train_dir(spec, source, target, cfg, tag=tag)[0]
    return train_supervised(spec, source, cfg, tag=tag)[0]


def fit_subset(h: Hypothesis, params: list[Tensor], source: Dataset, cfg: DirConfig,
               epochs: int, tag: str) -> Hypothesis:
    """Source cross-entropy training of ``params`` only; the rest of ``h`` stays put."""
    opt = Adam(_unique(params), cfg.lr)
    x, y = source.features, source.require_labels()
    rng = stream(cfg.seed, f"batches/source/{tag}")
    for _ in range(epochs):
        perm = rng.permutation(len(x))
        for start in range(0, len(x), cfg.batch_size):
            sb = perm[start:start + cfg.batch_size]
            loss = T.cross_entropy(h.forward(Tensor(x[sb])), y[sb])
            opt.zero_grad()
            loss.backward()
            opt.step()
    return h


def _run_pair_search(kind: str, cls: HypothesisClass, source: Dataset, target: Dataset,
                     cfg: DirConfig, build) -> ClassDivergenceEstimate:
    """Shared driver; ``build(cfg, source_train, target_train)`` returns
    (A, B, trainable_A, trainable_B) for one ascent."""
    s_train, s_val, t_train, t_val = _splits(source, target, cfg)
    feas = Feasibility(cls, s_val, t_val, cfg)
    best_val, best_pair, best_infeasible = -1.0, None, None
    trace: list[PairEpoch] = []
    lams = cfg.multipliers() if cls.constraint != "none" else cfg.multipliers()[:1]
    runs = [(r, lam, d) for r in range(cfg.restarts) for lam in lams for d in (1, -1)]
    for restart, lam, direction in runs:
        rcfg = cfg if restart == 0 else cfg.with_seed(child_seed(cfg.seed, f"restart{restart}"))
        # restart 0 starts from trained members; later ones from random weights
        # so the penalty pulls them into the class from different directions
        a, b, ta, tb = build(rcfg, s_train, t_train, restart > 0)
        feas.calibrate(a, b)
        ascent = PairAscent(a, b, ta, tb, s_train, t_train, replace(rcfg, lambda_penalty=lam),
                            cls.constraint, cls.constraint, direction,
                            tag=f"{kind}/r{restart}/d{direction}")
        for epoch in range(cfg.epochs_t2 + 1):
            if epoch > 0:
                ascent.run_epoch(epoch)
            gap = abs(_pair_gap(a, b, s_val.features, t_val.features))
            # constraint audits are costly, so skip them when the epoch cannot improve the max
            ok = None
            if gap > best_val:
                ok = feas.ok(a) and feas.ok(b)
                if ok:
                    best_val, best_pair = gap, (a.copy(), b.copy())
                else:
                    best_infeasible = max(best_infeasible or 0.0, gap)
            trace.append(PairEpoch(epoch, restart, lam, direction, gap, ok))
    if best_pair is None:
        raise EstimationError(f"no feasible pair found for {kind}", best_infeasible)
    return ClassDivergenceEstimate(kind, min(best_val, 1.0), best_pair, feas.epsilon, trace)


def estimate_hdh(class_cfg: HypothesisClass, source: Dataset, target: Dataset,
                 cfg: DirConfig) -> ClassDivergenceEstimate:
    """sup over pairs in the class of |R_S(h, h') - R_T(h, h')|."""
    if class_cfg.fixed is not None:
        return ClassDivergenceEstimate("hdh", 0.0, (class_cfg.fixed, class_cfg.fixed), class_cfg.epsilon)
    spec = class_cfg.spec

    def build(rcfg, s_train, t_train, fresh):
        a = _pretrain(spec, class_cfg, s_train, t_train, rcfg, "hdh/a", fresh)
        b = _pretrain(spec, class_cfg, s_train, t_train, rcfg, "hdh/b", fresh)
        return a, b, a.parameters(), b.parameters()

    return _run_pair_search("hdh", class_cfg, source, target, cfg, build)


def estimate_fgg(f_class: HypothesisClass, g_class: HypothesisClass, source: Dataset,
                 target: Dataset, cfg: DirConfig) -> ClassDivergenceEstimate:
    """sup over one shared predictor f and two encoders g, g' of |R_S(fg, fg') - R_T(fg, fg')|.

    The composed template and constraint come from ``f_class``; ``f_class.fixed``
    pins the predictor and ``g_class.fixed`` collapses the encoders to one.
    """
    if g_class.fixed is not None:
        return ClassDivergenceEstimate("fgg", 0.0, None, f_class.epsilon)
    spec = f_class.spec
    fixed_f = f_class.fixed

    def build(rcfg, s_train, t_train, fresh):
        fit = f_class.constraint != "none" and not fresh
        a = _pretrain(spec, f_class, s_train, t_train, rcfg, "fgg/a", fresh)
        if fixed_f is not None:
            a = Hypothesis(spec, list(a.encoder_layers) + _copy_layers(fixed_f.predictor_layers),
                           a.dropout_rate)
            if fit:
                fit_subset(a, a.encoder_parameters(), s_train, rcfg, rcfg.epochs_t1, "fgg/a/enc")
        enc_b = Hypothesis.init(spec, rcfg.seed, label="init/hypothesis/fgg/b").encoder_layers
        # b owns its encoder but shares a's predictor layer objects
        b = Hypothesis(spec, list(enc_b) + list(a.predictor_layers), a.dropout_rate)
        if fit:
            fit_subset(b, b.encoder_parameters(), s_train, rcfg, rcfg.epochs_t1, "fgg/b/enc")
        shared = [] if fixed_f is not None else a.predictor_parameters()
        return a, b, a.encoder_parameters() + shared, b.encoder_parameters() + shared

    return _run_pair_search("fgg", f_class, source, target, cfg, build)


def estimate_latent_fdf(g: Hypothesis, f_class: HypothesisClass, source: Dataset,
                        target: Dataset, cfg: DirConfig) -> ClassDivergenceEstimate:
    """With the encoder of ``g`` frozen, sup over predictors f, f' of
    |R_S(fg, f'g) - R_T(fg, f'g)|."""
    if f_class.fixed is not None:
        return ClassDivergenceEstimate("latent_fdf", 0.0, None, f_class.epsilon)
    if g.spec != f_class.spec:
        raise InputError(f"encoder spec {g.spec} does not match class spec {f_class.spec}")
    enc = g.encoder_layers

    def build(rcfg, s_train, t_train, fresh):
        pair = []
        for side in ("a", "b"):
            init = Hypothesis.init(g.spec, rcfg.seed, label=f"init/hypothesis/fdf/{side}")
            h = Hypothesis(g.spec, list(enc) + list(init.predictor_layers), g.dropout_rate)
            if f_class.constraint != "none" and not fresh:
                fit_subset(h, h.predictor_parameters(), s_train, rcfg, rcfg.epochs_t1, f"fdf/{side}")
            pair.append(h)
        a, b = pair
        return a, b, a.predictor_parameters(), b.predictor_parameters()

    return _run_pair_search("latent_fdf", f_class, source, target, cfg, build)


def _copy_layers(layers: list[Layer]) -> list[Layer]:
    return [layer.copy() for layer in layers]
