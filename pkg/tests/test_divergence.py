import math

import numpy as np
import pytest

from shiftgauge.data import Dataset
from shiftgauge.divergence import AuditConfig, estimate_js, estimate_mmd, mmd2_rbf
from shiftgauge.errors import InputError


def test_js_same_sample_is_near_zero(rng):
    x = rng.standard_normal((400, 2))
    est = estimate_js(None, x, x.copy(), AuditConfig(epochs=20))
    assert 0.0 <= est.value <= 0.05


def test_js_separated_means_near_ln2(rng):
    xs = rng.standard_normal((300, 1)) - 10.0
    xt = rng.standard_normal((300, 1)) + 10.0
    est = estimate_js(None, xs, xt, AuditConfig(epochs=20))
    assert est.value >= 0.9 * math.log(2.0)
    assert est.value <= math.log(2.0)


def test_js_is_deterministic(rng):
    xs, xt = rng.standard_normal((100, 2)), rng.standard_normal((100, 2)) + 0.5
    a = estimate_js(None, xs, xt, AuditConfig(epochs=5))
    b = estimate_js(None, xs, xt, AuditConfig(epochs=5))
    assert a.value == b.value


def test_js_accepts_datasets_and_encoders(rng):
    ds = Dataset(rng.standard_normal((50, 3)))
    est = estimate_js(lambda x: x[:, :1], ds, ds, AuditConfig(epochs=2))
    assert est.details["n_source"] == 50


def test_empty_input_rejected():
    with pytest.raises(InputError):
        estimate_js(None, np.zeros((0, 2)), np.zeros((3, 2)))
    with pytest.raises(InputError):
        estimate_mmd(None, np.zeros((3, 2)), np.zeros((0, 2)))


def test_mmd_identical_samples(rng):
    x = rng.standard_normal((50, 3))
    assert abs(estimate_mmd(None, x, x.copy()).value) <= 1e-12
    assert mmd2_rbf(np.zeros((1, 1)), np.zeros((1, 1)), 1.0) == 0.0


def test_mmd_singletons_hand_value():
    v = mmd2_rbf(np.array([[0.0]]), np.array([[10.0]]), 1.0)
    assert abs(v - (2.0 - 2.0 * math.exp(-50.0))) <= 1e-12


def test_mmd_degenerate_bandwidth_falls_back():
    est = estimate_mmd(None, np.ones((5, 2)), np.ones((5, 2)))
    assert est.details["bandwidth"] == 1.0
    assert est.details.get("bandwidth_fallback")


def test_mmd_grows_with_shift(rng):
    x = rng.standard_normal((200, 2))
    near = estimate_mmd(None, x, x + 0.2, bandwidth=1.0).value
    far = estimate_mmd(None, x, x + 2.0, bandwidth=1.0).value
    assert 0.0 < near < far
