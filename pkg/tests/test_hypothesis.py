import struct

import numpy as np
import pytest

from shiftgauge.errors import FormatError, InputError
from shiftgauge.hypothesis import (Hypothesis, MlpSpec, ReplayLabeler, checkpoint_bytes,
                                   checkpoint_from_bytes, disagreement, load_checkpoint,
                                   save_checkpoint, zero_one_risk)
from conftest import threshold_net


def zero_net(spec):
    h = Hypothesis.init(spec, 0)
    for layer in h.layers:
        layer.weight.data[:] = 0.0
        layer.bias.data[:] = 0.0
    return h


def test_zero_network_ties_to_class_zero(rng):
    h = zero_net(MlpSpec(3, (4,), 2, 1))
    x = rng.standard_normal((20, 3))
    assert np.allclose(h.predict_proba(x), 0.5)
    assert np.all(h.predict(x) == 0)


def test_predict_is_argmax_of_proba(rng):
    h = Hypothesis.init(MlpSpec(2, (8, 8), 3, 1), 5)
    x = rng.standard_normal((100, 2))
    assert np.array_equal(h.predict(x), h.predict_proba(x).argmax(axis=1))


def test_hand_set_sign_classifier():
    h = threshold_net(0.0, 1)
    x = np.array([-2.0, -0.5, 0.3, 4.0])
    assert h.predict(x).tolist() == [0, 0, 1, 1]


def test_zero_one_risk_examples():
    h = threshold_net(0.0, 1)
    x = np.linspace(-1, 1, 8)
    y = h.predict(x)
    assert zero_one_risk(h, x, y) == 0.0
    wrong = y.copy()
    wrong[:3] = 1 - wrong[:3]
    assert zero_one_risk(h, x, wrong) == 0.375
    assert zero_one_risk(h, x, 1 - wrong) == 1 - 0.375


def test_disagreement_examples():
    x = np.array([-1.0, 0.5, 2.0])
    a, b = threshold_net(0.0, 1), threshold_net(1.0, 1)
    assert disagreement(a, a, x) == 0.0
    assert disagreement(a, b, x) == pytest.approx(1 / 3)
    flipped = ReplayLabeler(x[:, None], 1 - a.predict(x), 2)
    assert disagreement(a, flipped, x[:, None]) == 1.0


def test_spec_validation():
    with pytest.raises(InputError):
        MlpSpec(2, (4, 4), 2, 3)
    with pytest.raises(InputError):
        MlpSpec(2, (), 2, 1)
    with pytest.raises(InputError):
        MlpSpec(2, (4,), 1, 1)


def test_division_changes_only_bookkeeping(rng):
    h = Hypothesis.init(MlpSpec(2, (6, 5, 4), 2, 1), 3)
    x = rng.standard_normal((50, 2))
    h3 = h.with_division(3)
    assert np.array_equal(h.logits(x), h3.logits(x))
    assert h3.embed(x).shape == (50, 4)


def test_init_is_seeded():
    spec = MlpSpec(2, (8,), 2, 1)
    a, b, c = Hypothesis.init(spec, 1), Hypothesis.init(spec, 1), Hypothesis.init(spec, 2)
    assert np.array_equal(a.layers[0].weight.data, b.layers[0].weight.data)
    assert not np.array_equal(a.layers[0].weight.data, c.layers[0].weight.data)


def test_checkpoint_round_trip(tmp_path, rng):
    h = Hypothesis.init(MlpSpec(4, (7, 3), 3, 2), 9)
    save_checkpoint(h, tmp_path / "h.ckpt")
    back = load_checkpoint(tmp_path / "h.ckpt")
    x = rng.standard_normal((1000, 4))
    assert back.spec == h.spec
    assert np.array_equal(back.predict(x), h.predict(x))
    assert np.array_equal(back.logits(x), h.logits(x))


def test_checkpoint_rejects_corruption():
    blob = checkpoint_bytes(Hypothesis.init(MlpSpec(2, (3,), 2, 1), 0))
    with pytest.raises(FormatError):
        checkpoint_from_bytes(b"NOTMAGIC" + blob[8:])
    with pytest.raises(FormatError):
        checkpoint_from_bytes(blob[:10])
    with pytest.raises(FormatError):
        checkpoint_from_bytes(blob[:-8])
    with pytest.raises(FormatError):
        checkpoint_from_bytes(blob + b"\0")


def test_checkpoint_version_gate():
    blob = checkpoint_bytes(Hypothesis.init(MlpSpec(2, (3,), 2, 1), 0))
    assert struct.unpack("<I", blob[8:12])[0] == 1
    checkpoint_from_bytes(blob)
    v2 = blob[:8] + struct.pack("<I", 2) + blob[12:]
    with pytest.raises(FormatError, match="version 2"):
        checkpoint_from_bytes(v2)


def test_replay_labeler_refuses_other_inputs():
    r = ReplayLabeler(np.zeros((3, 1)), np.array([0, 1, 0]), 2)
    with pytest.raises(InputError):
        r.predict(np.ones((3, 1)))
