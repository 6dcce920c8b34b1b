from fractions import Fraction
from itertools import product

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftgauge import oracle as O
from shiftgauge.errors import OracleError

X5 = np.array([-1.0, -0.5, 0.0, 0.5, 1.0])


class Flip:
    def __init__(self, h):
        self.h = h

    def predict(self, x):
        return 1 - self.h.predict(x)


def naive_gap(hyps, xs, xt):
    best = Fraction(0)
    for a, b in product(hyps, repeat=2):
        gap = abs(O.disagreement(a, b, xs) - O.disagreement(a, b, xt))
        best = max(best, gap)
    return best


def test_singleton_proxy_is_zero():
    h = O.Threshold(0.1)
    val, arg = O.exact_proxy_risk(h, O.FiniteClass([h]), O.UNCONSTRAINED, X5, None, X5)
    assert (val, arg) == (0, 0)


def test_complement_pair_proxy_is_one():
    h = O.Threshold(0.1)
    val, arg = O.exact_proxy_risk(h, O.FiniteClass([h, Flip(h)]), O.UNCONSTRAINED, X5, None, X5)
    assert (val, arg) == (1, 1)


def test_21_threshold_enumeration():
    cls = O.threshold_class(np.linspace(-1, 1, 21))
    h = O.Threshold(-0.3)
    val, arg = O.exact_proxy_risk(h, cls, O.UNCONSTRAINED, X5, None, X5)
    # the sign-flipped copy of h disagrees on every point
    assert val == 1
    xs = np.array([-1.0, -0.5])
    ys = np.array([0, 0])
    c = O.OracleConstraint(epsilon=Fraction(0))
    val, arg = O.exact_proxy_risk(h, cls, c, xs, ys, X5)
    # feasible checks must label both source points 0
    labels_h = h.predict(X5)
    expected = max(O.disagreement(h, g, X5) for g in cls.hypotheses
                   if np.all(g.predict(xs) == 0))
    assert val == expected
    assert np.count_nonzero(cls.hypotheses[arg].predict(X5) != labels_h) == val * 5


def test_empty_feasible_set():
    cls = O.FiniteClass([O.Constant(1)])
    c = O.OracleConstraint(epsilon=Fraction(0))
    with pytest.raises(OracleError):
        O.exact_bias(cls, c, X5, np.zeros(5, int), X5, np.zeros(5, int))


def test_bias_examples():
    y = (X5 > 0.2).astype(int)
    truth = O.Threshold(0.2)
    cls = O.threshold_class(np.linspace(-1, 1, 11))
    assert O.exact_bias(cls, O.UNCONSTRAINED, X5, y, X5, y) == 0
    assert O.exact_bias(O.FiniteClass([O.Constant(0)]), O.UNCONSTRAINED, X5, y, X5, y) == Fraction(2, 5)
    assert O.exact_bias(O.FiniteClass([truth]), O.UNCONSTRAINED, X5, y, X5, y) == 0


def test_identical_samples_give_zero_divergences():
    fam = O.random_division_family(np.random.default_rng(0))
    cls = fam.factorized(1)
    assert O.exact_hdh(cls, X5, X5) == 0
    assert O.exact_fgg(cls, X5, X5) == 0
    assert O.exact_latent_fdf(cls.encoders[0], cls.predictors, X5, X5) == 0


def test_hdh_matches_naive_pairs(rng):
    cls = O.threshold_class(np.linspace(-1, 1, 9))
    xs, xt = rng.uniform(-1, 1, 7), rng.uniform(-0.5, 1.5, 6)
    assert O.exact_hdh(cls, xs, xt) == naive_gap(cls.hypotheses, xs, xt)


def test_fgg_matches_naive_pairs(rng):
    fam = O.random_division_family(rng, n_layers=2, depth=2, thresholds=5)
    cls = fam.factorized(1)
    xs, xt = rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 5)
    best = Fraction(0)
    for f in cls.predictors:
        for g, g2 in product(cls.encoders, repeat=2):
            a, b = O.Composed(f, g), O.Composed(f, g2)
            best = max(best, abs(O.disagreement(a, b, xs) - O.disagreement(a, b, xt)))
    assert O.exact_fgg(cls, xs, xt) == best


def test_latent_matches_naive_pairs(rng):
    fam = O.random_division_family(rng, n_layers=2, depth=2, thresholds=5)
    g = fam.encoders(1)[1]
    preds = fam.predictors(1)
    xs, xt = rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 5)
    hyps = [O.Composed(f, g) for f in preds]
    assert O.exact_latent_fdf(g, preds, xs, xt) == naive_gap(hyps, xs, xt)


def test_estimation_error_bound_is_tight():
    xt = X5
    yt = np.array([0, 0, 1, 1, 1])
    h = O.Threshold(0.25)  # errs only at x=0
    wrong = h.predict(xt) != yt
    # h' is right where h errs and disagrees with h where h is right
    labels = np.where(wrong, yt, 1 - yt)
    check = O.FiniteClass([_Table(xt, labels)])
    res = O.verify_lemma4(h, check, O.UNCONSTRAINED, xt, yt, xt, yt)
    assert res.holds
    assert res.proxy_risk - res.target_risk == res.max_check_risk


class _Table:
    def __init__(self, x, labels):
        self.map = {float(a): int(b) for a, b in zip(x, labels)}

    def predict(self, x):
        return np.array([self.map[float(v)] for v in np.ravel(x)])


def test_values_are_exact_and_repeatable(rng):
    cls = O.threshold_class()
    xs, xt = rng.uniform(-1, 1, 9), rng.uniform(-1, 1, 7)
    a, b = O.exact_hdh(cls, xs, xt), O.exact_hdh(cls, xs, xt)
    assert isinstance(a, Fraction) and a == b


def test_total_variation_hand_case():
    tv = O.total_variation([-0.9, -0.9], [0.9, -0.9], [0.0])
    assert tv == Fraction(1, 2)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_risk_bounds_hold_on_random_instances(seed):
    rng = np.random.default_rng(seed)
    cls = O.threshold_class(np.linspace(-1, 1, 11))
    xs, xt = rng.uniform(-1, 1, 8), rng.uniform(-1, 1, 8)
    thr = rng.uniform(-1, 1)
    ys, yt = (xs > thr).astype(int), (xt > thr).astype(int)
    c = O.OracleConstraint(epsilon=Fraction(int(rng.integers(1, 5)), 8))
    h = cls.hypotheses[int(rng.integers(len(cls)))]
    assert O.verify_proxy_bound(h, cls, c, xs, ys, xt, yt)
    assert O.verify_lemma4(h, cls, c, xs, ys, xt, yt).holds


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 10_000))
def test_nested_division_inequalities(seed):
    rng = np.random.default_rng(seed)
    fam = O.random_division_family(rng, n_layers=2, depth=2, thresholds=7)
    xs, xt = rng.uniform(-1, 1, 6), rng.uniform(-1, 1, 6)
    net = [fam.layers[int(k)] for k in rng.integers(0, 2, 2)]
    fgg = [O.exact_fgg(fam.factorized(i), xs, xt) for i in range(3)]
    lat = [O.exact_latent_fdf(fam.network_prefix(net, i), fam.predictors(i), xs, xt) for i in range(3)]
    hdh = O.exact_hdh(fam.factorized(0), xs, xt)
    assert fgg[0] <= fgg[1] <= fgg[2] <= hdh
    assert lat[0] >= lat[1] >= lat[2]
