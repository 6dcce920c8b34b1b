"""Exact suprema and infima over tiny finite hypothesis classes.

Every quantity is a ratio of integer counts, returned as ``fractions.Fraction``.
Hypotheses are small frozen objects with ``predict(x) -> int labels``; the
default family is 1D thresholds ``1[s * (x - t) > 0]``. Factorized classes
compose monotone piecewise-linear encoders with threshold predictors so the
encoder/predictor split can move between layers without changing the class.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from .errors import OracleError


def _col(x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        if x.shape[1] != 1:
            raise OracleError(f"oracle classes are one-dimensional, got {x.shape[1]} features")
        x = x[:, 0]
    return x


@dataclass(frozen=True)
class Threshold:
    t: float
    s: int = 1

    def predict(self, x) -> np.ndarray:
        return (self.s * (_col(x) - self.t) > 0).astype(np.int64)


@dataclass(frozen=True)
class Constant:
    label: int

    def predict(self, x) -> np.ndarray:
        return np.full(len(_col(x)), self.label, np.int64)


@dataclass(frozen=True)
class MonotonePL:
    """Non-decreasing piecewise-linear map through (knots[k], values[k]), flat outside."""

    knots: tuple[float, ...]
    values: tuple[float, ...]

    def __call__(self, x) -> np.ndarray:
        return np.interp(_col(x), self.knots, self.values)


@dataclass(frozen=True)
class Ramp:
    """relu(s * (x - t)): the one-unit ReLU layer up to positive scaling."""

    t: float
    s: int = 1

    def __call__(self, x) -> np.ndarray:
        return np.maximum(self.s * (_col(x) - self.t), 0.0)


@dataclass(frozen=True)
class Chain:
    layers: tuple = ()

    def __call__(self, x) -> np.ndarray:
        z = _col(x)
        for layer in self.layers:
            z = layer(z)
        return z


IDENTITY = Chain(())


@dataclass(frozen=True)
class Head:
    """Predictor: remaining layers followed by a threshold."""

    chain: Chain
    threshold: Threshold

    def predict(self, z) -> np.ndarray:
        return self.threshold.predict(self.chain(z))


@dataclass(frozen=True)
class Composed:
    predictor: Head
    encoder: Chain

    def predict(self, x) -> np.ndarray:
        return self.predictor.predict(self.encoder(x))


@dataclass
class FiniteClass:
    """Explicit hypothesis list, optionally the product of encoders and predictors."""

    hypotheses: list
    encoders: list | None = None
    predictors: list | None = None

    def __post_init__(self):
        if not self.hypotheses:
            raise OracleError("finite class is empty")

    @classmethod
    def factorized(cls, encoders: Sequence[Chain], predictors: Sequence[Head]) -> "FiniteClass":
        hyps = [Composed(f, g) for g in encoders for f in predictors]
        return cls(hyps, list(encoders), list(predictors))

    @property
    def is_factorized(self) -> bool:
        return self.encoders is not None and self.predictors is not None

    def __len__(self) -> int:
        return len(self.hypotheses)


def threshold_grid(lo: float = -1.0, hi: float = 1.0, count: int = 41) -> np.ndarray:
    return np.linspace(lo, hi, count)


def threshold_class(grid: Sequence[float] | None = None) -> FiniteClass:
    """Thresholds over ``grid`` (41 points on [-1, 1] by default) times both signs."""
    grid = threshold_grid() if grid is None else grid
    return FiniteClass([Threshold(float(t), s) for t in grid for s in (1, -1)])


@dataclass(frozen=True)
class OracleConstraint:
    """Feasibility R_S(h) + alpha * TV(binned g-embeddings) <= epsilon.

    ``epsilon=None`` means unconstrained. TV is taken between empirical source
    and target embeddings histogrammed on ``bins`` (ignored when alpha is 0).
    """

    epsilon: Fraction | None = None
    alpha: Fraction = Fraction(0)
    bins: tuple[float, ...] = tuple(np.linspace(-1.0, 1.0, 9))


UNCONSTRAINED = OracleConstraint()


def _frac(count: int, n: int) -> Fraction:
    if n == 0:
        raise OracleError("empty sample")
    return Fraction(int(count), int(n))


def risk(h, x, y) -> Fraction:
    y = np.asarray(y)
    return _frac(np.count_nonzero(h.predict(x) != y), len(y))


def disagreement(h, h2, x) -> Fraction:
    return _frac(np.count_nonzero(h.predict(x) != h2.predict(x)), len(_col(x)))


def total_variation(zs, zt, bins: Sequence[float]) -> Fraction:
    """Exact TV between two empirical samples binned on ``bins`` (ends are open)."""
    edges = np.asarray(bins, dtype=np.float64)
    bs = np.searchsorted(edges, _col(zs), side="right")
    bt = np.searchsorted(edges, _col(zt), side="right")
    k = len(edges) + 1
    cs = np.bincount(bs, minlength=k)
    ct = np.bincount(bt, minlength=k)
    ns, nt = len(bs), len(bt)
    return Fraction(int(np.abs(cs * nt - ct * ns).sum()), 2 * ns * nt)


def _encoder_of(h) -> Chain:
    return getattr(h, "encoder", IDENTITY)


def constraint_value(h, source_x, source_y, target_x, c: OracleConstraint) -> Fraction:
    value = risk(h, source_x, source_y)
    if c.alpha:
        g = _encoder_of(h)
        value += c.alpha * total_variation(g(source_x), g(target_x), c.bins)
    return value


def feasible_indices(cls: FiniteClass, c: OracleConstraint, source_x, source_y, target_x) -> list[int]:
    if c.epsilon is None:
        return list(range(len(cls)))
    return [k for k, h in enumerate(cls.hypotheses)
            if constraint_value(h, source_x, source_y, target_x, c) <= c.epsilon]


def _require(idx: list[int]) -> list[int]:
    if not idx:
        raise OracleError("no hypothesis satisfies the constraint")
    return idx


def exact_proxy_risk(h, cls: FiniteClass, constraint: OracleConstraint, source_x, source_y,
                     target_x) -> tuple[Fraction, int]:
    """max over feasible h' of R_T(h, h'); ties go to the earliest index."""
    idx = _require(feasible_indices(cls, constraint, source_x, source_y, target_x))
    base = h.predict(target_x)
    best, arg = Fraction(-1), -1
    for k in idx:
        d = _frac(np.count_nonzero(cls.hypotheses[k].predict(target_x) != base), len(base))
        if d > best:
            best, arg = d, k
    return best, arg


def exact_bias(cls: FiniteClass, constraint: OracleConstraint, source_x, source_y,
               target_x, target_y) -> Fraction:
    """min over feasible h' of R_T(h')."""
    idx = _require(feasible_indices(cls, constraint, source_x, source_y, target_x))
    return min(risk(cls.hypotheses[k], target_x, target_y) for k in idx)


def max_feasible_target_risk(cls: FiniteClass, constraint: OracleConstraint, source_x, source_y,
                             target_x, target_y) -> Fraction:
    idx = _require(feasible_indices(cls, constraint, source_x, source_y, target_x))
    return max(risk(cls.hypotheses[k], target_x, target_y) for k in idx)


@dataclass
class Lemma4Check:
    holds: bool
    proxy_risk: Fraction
    target_risk: Fraction
    max_check_risk: Fraction


def verify_lemma4(h, cls: FiniteClass, constraint: OracleConstraint, source_x, source_y,
                  target_x, target_y) -> Lemma4Check:
    """|proxy risk - R_T(h)| <= max feasible R_T(h')."""
    proxy, _ = exact_proxy_risk(h, cls, constraint, source_x, source_y, target_x)
    r = risk(h, target_x, target_y)
    worst = max_feasible_target_risk(cls, constraint, source_x, source_y, target_x, target_y)
    return Lemma4Check(abs(proxy - r) <= worst, proxy, r, worst)


def verify_proxy_bound(h, cls: FiniteClass, constraint: OracleConstraint, source_x, source_y,
                  target_x, target_y) -> bool:
    """R_T(h) <= proxy risk + bias."""
    proxy, _ = exact_proxy_risk(h, cls, constraint, source_x, source_y, target_x)
    bias = exact_bias(cls, constraint, source_x, source_y, target_x, target_y)
    return risk(h, target_x, target_y) <= proxy + bias


def _label_matrix(hyps, x) -> np.ndarray:
    """Labels of every hypothesis on ``x``; shared chains are evaluated once and
    thresholds applied in bulk."""
    x = _col(x)
    cache: dict = {}
    groups: dict = {}
    out = np.empty((len(hyps), len(x)), np.int64)

    def run(chain: Chain, z, key):
        k = (id(key), id(chain))
        if k not in cache:
            cache[k] = chain(z)
        return k

    for row, h in enumerate(hyps):
        if isinstance(h, Composed):
            k_enc = run(h.encoder, x, None)
            k = run(h.predictor.chain, cache[k_enc], h.encoder)
            th = h.predictor.threshold
        elif isinstance(h, Head):
            k, th = run(h.chain, x, None), h.threshold
        elif isinstance(h, Threshold):
            k, th = ("x", 0), h
            cache[k] = x
        else:
            out[row] = h.predict(x)
            continue
        groups.setdefault(k, []).append((row, th.t, th.s))
    for k, items in groups.items():
        rows, ts, ss = (np.array(v) for v in zip(*items))
        v = cache[k]
        out[rows] = ss[:, None] * (v[None, :] - ts[:, None]) > 0
    return out


def _pair_counts(labels: np.ndarray) -> np.ndarray:
    """Disagreement counts between every pair of rows of a 0/1 matrix."""
    ones = labels.sum(1)
    # float matmul is exact for these small integer counts and far faster
    both = np.rint(labels.astype(np.float64) @ labels.T.astype(np.float64)).astype(np.int64)
    return ones[:, None] + ones[None, :] - 2 * both


def _sup_gap(ls: np.ndarray, lt: np.ndarray, ns: int, nt: int) -> int:
    joint = np.unique(np.concatenate([ls, lt], axis=1), axis=0)
    ls, lt = joint[:, :ns], joint[:, ns:]
    return int(np.abs(_pair_counts(ls) * nt - _pair_counts(lt) * ns).max())


def _check_constraint(constraint: OracleConstraint, source_y):
    if constraint.epsilon is not None and source_y is None:
        raise OracleError("a constrained class needs source labels")


def _feasible_rows(labels_s: np.ndarray, tv: Fraction, source_y, c: OracleConstraint) -> np.ndarray:
    """Mask of label rows meeting R_S + alpha * tv <= epsilon, in exact arithmetic."""
    if c.epsilon is None:
        return np.ones(len(labels_s), bool)
    y = np.asarray(source_y)
    errors = (labels_s != y[None, :]).sum(1)
    n = len(y)
    return np.array([Fraction(int(e), n) + c.alpha * tv <= c.epsilon for e in errors], bool)


def exact_hdh(cls: FiniteClass, source_x, target_x, constraint: OracleConstraint = UNCONSTRAINED,
              source_y=None) -> Fraction:
    """sup over feasible h, h' in the class of |R_S(h, h') - R_T(h, h')|."""
    _check_constraint(constraint, source_y)
    hyps = [cls.hypotheses[k] for k in
            _require(feasible_indices(cls, constraint, source_x, source_y, target_x))]
    ls, lt = _label_matrix(hyps, source_x), _label_matrix(hyps, target_x)
    ns, nt = ls.shape[1], lt.shape[1]
    return Fraction(_sup_gap(ls, lt, ns, nt), ns * nt)


def exact_fgg(cls: FiniteClass, source_x, target_x, constraint: OracleConstraint = UNCONSTRAINED,
              source_y=None) -> Fraction:
    """sup over f and feasible fg, fg' of |R_S(fg, fg') - R_T(fg, fg')|, with f shared."""
    if not cls.is_factorized:
        raise OracleError("exact_fgg needs a factorized class")
    _check_constraint(constraint, source_y)
    zs = [g(source_x) for g in cls.encoders]
    zt = [g(target_x) for g in cls.encoders]
    ns, nt = len(_col(source_x)), len(_col(target_x))
    # (predictor, encoder, point) label tensors
    ls_i = np.stack([_label_matrix(cls.predictors, z) for z in zs], axis=1)
    lt_i = np.stack([_label_matrix(cls.predictors, z) for z in zt], axis=1)
    ls, lt = ls_i.astype(np.float64), lt_i.astype(np.float64)

    def counts(lab):
        ones = lab.sum(2)
        both = np.rint(lab @ lab.transpose(0, 2, 1))
        return (ones[:, :, None] + ones[:, None, :] - 2 * both).astype(np.int64)

    gap = np.abs(counts(ls) * nt - counts(lt) * ns)
    if constraint.epsilon is not None:
        ok = np.zeros(ls_i.shape[:2], bool)
        for j in range(len(cls.encoders)):
            tv = (total_variation(zs[j], zt[j], constraint.bins) if constraint.alpha else Fraction(0))
            ok[:, j] = _feasible_rows(ls_i[:, j], tv, source_y, constraint)
        if not ok.any():
            raise OracleError("no hypothesis satisfies the constraint")
        gap = np.where(ok[:, :, None] & ok[:, None, :], gap, -1)
    return Fraction(int(gap.max()), ns * nt)


def exact_latent_fdf(encoder: Callable, predictors: Sequence, source_x, target_x,
                     constraint: OracleConstraint = UNCONSTRAINED, source_y=None) -> Fraction:
    """sup over feasible f, f' of |R_S(fg, f'g) - R_T(fg, f'g)| for a fixed encoder g."""
    _check_constraint(constraint, source_y)
    zs, zt = encoder(source_x), encoder(target_x)
    ls, lt = _label_matrix(predictors, zs), _label_matrix(predictors, zt)
    if constraint.epsilon is not None:
        tv = total_variation(zs, zt, constraint.bins) if constraint.alpha else Fraction(0)
        ok = _feasible_rows(ls, tv, source_y, constraint)
        if not ok.any():
            raise OracleError("no hypothesis satisfies the constraint")
        ls, lt = ls[ok], lt[ok]
    ns, nt = ls.shape[1], lt.shape[1]
    return Fraction(_sup_gap(ls, lt, ns, nt), ns * nt)


def exact_worst_in_class(cls_a: FiniteClass, cls_b: FiniteClass, c_a: OracleConstraint,
                         c_b: OracleConstraint, source_x, source_y, target_x) -> Fraction:
    """sup of R_T(h, h') with h and h' feasible in their own classes."""
    ia = _require(feasible_indices(cls_a, c_a, source_x, source_y, target_x))
    ib = _require(feasible_indices(cls_b, c_b, source_x, source_y, target_x))
    la = _label_matrix([cls_a.hypotheses[k] for k in ia], target_x)
    lb = _label_matrix([cls_b.hypotheses[k] for k in ib], target_x)
    counts = la.sum(1)[:, None] + lb.sum(1)[None, :] - 2 * (la @ lb.T)
    return Fraction(int(counts.max()), la.shape[1])


# nested division families

def random_monotone_layer(rng: np.random.Generator, lo: float = -1.0, hi: float = 1.0,
                          pieces: int = 3) -> MonotonePL:
    """Random non-decreasing map of [lo, hi] into itself on a coarse knot grid."""
    knots = np.linspace(lo, hi, pieces + 1)
    steps = rng.integers(0, 3, size=pieces + 1)
    vals = np.cumsum(steps).astype(np.float64)
    span = vals[-1] - vals[0]
    vals = lo + (hi - lo) * (vals - vals[0]) / span if span > 0 else np.zeros_like(vals)
    return MonotonePL(tuple(float(k) for k in knots), tuple(float(v) for v in vals))


@dataclass
class DivisionFamily:
    """All depth-N chains over a layer family, cut at any division index.

    ``encoders(i)`` lists every chain of the first i layers and
    ``predictors(i)`` every chain of the remaining N - i layers capped by a
    threshold, so ``factorized(i)`` enumerates the same functions for every i.
    """

    layers: list[MonotonePL]
    depth: int
    thresholds: list[Threshold] = field(default_factory=lambda: list(threshold_class().hypotheses))

    def _chains(self, k: int) -> list[Chain]:
        return [Chain(tuple(c)) for c in itertools.product(self.layers, repeat=k)]

    def encoders(self, i: int) -> list[Chain]:
        return self._chains(i)

    def predictors(self, i: int) -> list[Head]:
        return [Head(c, t) for c in self._chains(self.depth - i) for t in self.thresholds]

    def factorized(self, i: int) -> FiniteClass:
        if not 0 <= i <= self.depth:
            raise OracleError(f"division {i} outside 0..{self.depth}")
        return FiniteClass.factorized(self.encoders(i), self.predictors(i))

    def network_prefix(self, network: Sequence[MonotonePL], i: int) -> Chain:
        return Chain(tuple(network[:i]))


def random_division_family(rng: np.random.Generator, n_layers: int = 3, depth: int = 3,
                           thresholds: int = 21) -> DivisionFamily:
    layers = [random_monotone_layer(rng) for _ in range(n_layers)]
    grid = threshold_grid(-1.0, 1.0, thresholds)
    ths = [Threshold(float(t), s) for t in grid for s in (1, -1)]
    return DivisionFamily(layers, depth, ths)


def ramp_threshold_family(ramp_grid: Sequence[float], latent_grid: Sequence[float]) -> FiniteClass:
    """Ramps over ``ramp_grid`` (both signs) composed with latent thresholds.

    On points that the grids separate, this enumerates the labelings of a
    one-unit ReLU encoder followed by a linear two-class head.
    """
    encoders = [Chain((Ramp(float(t), s),)) for t in ramp_grid for s in (1, -1)]
    predictors = [Head(IDENTITY, Threshold(float(t), s)) for t in latent_grid for s in (1, -1)]
    return FiniteClass.factorized(encoders, predictors)
