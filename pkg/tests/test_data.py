import struct

import numpy as np
import pytest

from shiftgauge.data import (Dataset, load_csv, load_idx, make_gauss_shift, make_moons_shift,
                             make_toy2d, save_csv, split, standardize_pair)
from shiftgauge.errors import FormatError, InputError
from shiftgauge.hypothesis import MlpSpec, zero_one_risk
from shiftgauge.trainer import DirConfig, train_supervised


def test_toy_supports_are_disjoint():
    pair = make_toy2d(0.05, 500, 0)
    tgt = pair.hidden_target("test")
    assert pair.source.features[:, 1].min() >= 0.8
    assert tgt.features[:, 1].max() <= -0.8


def test_toy_label_priors():
    fracs = [make_toy2d(0.05, 1000, s).source.labels.mean() for s in range(20)]
    # [0.52, 0.58] is a two-sigma band at n=1000, so a few seeds may land outside
    assert sum(0.52 <= f <= 0.58 for f in fracs) >= 17
    assert all(0.50 <= f <= 0.60 for f in fracs)
    assert abs(np.mean(fracs) - 0.55) < 0.01
    tgt = [make_toy2d(0.05, 1000, s).hidden_target("test").labels.mean() for s in range(20)]
    assert abs(np.mean(tgt) - 0.45) < 0.01


def test_toy_zero_epsilon_priors_match():
    pair = make_toy2d(0.0, 2000, 3)
    gap = pair.source.labels.mean() - pair.hidden_target("test").labels.mean()
    # two binomial fractions at n=2000: sd of the gap is about 0.016
    assert abs(gap) < 0.05


@pytest.mark.parametrize("kwargs", [{"epsilon": 0.3}, {"epsilon": -0.1}, {"n_per_domain": 39}])
def test_toy_rejects_bad_parameters(kwargs):
    args = {"epsilon": 0.05, "n_per_domain": 100, "seed": 0} | kwargs
    with pytest.raises(InputError):
        make_toy2d(**args)


def test_generators_are_seed_deterministic():
    a, b = make_moons_shift(30, 0.1, 200, 4), make_moons_shift(30, 0.1, 200, 4)
    assert np.array_equal(a.source.features, b.source.features)
    assert np.array_equal(a.target_unlabeled.features, b.target_unlabeled.features)
    c = make_moons_shift(30, 0.1, 200, 5)
    assert not np.array_equal(a.source.features, c.source.features)


def test_generated_sizes():
    for pair in (make_moons_shift(10, 0.1, 123, 0), make_gauss_shift(1.0, 77, 0)):
        assert len(pair.source) == len(pair.target_unlabeled)
        assert len(pair.source) in (123, 77)


def test_moons_rotation_zero_is_same_distribution():
    pair = make_moons_shift(0, 0.05, 4000, 0)
    xs, xt = pair.source.features, pair.target_unlabeled.features
    assert np.allclose(xs.mean(0), xt.mean(0), atol=0.05)
    assert np.allclose(np.cov(xs.T), np.cov(xt.T), atol=0.05)


def test_moons_half_turn_flips_labels():
    pair = make_moons_shift(180, 0.05, 400, 0)
    spec = MlpSpec(2, (16, 16), 2, 1)
    h, _ = train_supervised(spec, pair.source, DirConfig(epochs_t1=40, lr=1e-2, seed=0))
    tgt = pair.hidden_target("test")
    assert zero_one_risk(h, tgt.features, tgt.labels) >= 0.5


def test_moons_rotation_range():
    with pytest.raises(InputError):
        make_moons_shift(181, 0.1, 100, 0)


def test_hidden_target_is_guarded():
    pair = make_gauss_shift(0.5, 50, 0)
    assert pair.target_unlabeled.labels is None
    assert pair.access_log == []
    tgt = pair.hidden_target("score")
    assert tgt.labeled
    assert np.array_equal(tgt.features, pair.target_unlabeled.features)
    assert pair.access_log == ["score"]


def test_standardize_uses_source_statistics():
    src = Dataset(np.array([[0.0], [2.0]]), np.array([0, 1]))
    tgt = Dataset(np.array([[4.0]]))
    s, t = standardize_pair(src, tgt)
    assert np.allclose(s.features.ravel(), [-1.0, 1.0])
    assert np.allclose(t.features.ravel(), [3.0])


def test_split_sizes_and_determinism():
    d = Dataset(np.arange(100.0)[:, None], np.arange(100) % 2)
    tr, va = split(d, 0.2, 7)
    assert (len(tr), len(va)) == (80, 20)
    tr2, va2 = split(d, 0.2, 7)
    assert np.array_equal(tr.features, tr2.features)
    merged = np.sort(np.concatenate([tr.features.ravel(), va.features.ravel()]))
    assert np.array_equal(merged, d.features.ravel())


@pytest.mark.parametrize("frac", [0.0, 1.0, -0.1])
def test_split_fraction_range(frac):
    with pytest.raises(InputError):
        split(Dataset(np.zeros((10, 1))), frac, 0)


def test_dataset_validation():
    with pytest.raises(InputError):
        Dataset(np.zeros((3, 2)), np.array([0, 1]))
    with pytest.raises(InputError):
        Dataset(np.zeros((0, 2)))


def test_load_csv_exact_values(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1.5,2,0\n-3,4.25,1\n0,0,1\n")
    d = load_csv(p)
    assert np.array_equal(d.features, [[1.5, 2.0], [-3.0, 4.25], [0.0, 0.0]])
    assert d.labels.tolist() == [0, 1, 1]


def test_load_csv_header_and_named_label(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("y,a,b\n1,0.5,0.25\n0,1,2\n")
    d = load_csv(p, label_column="y", has_header=True)
    assert d.labels.tolist() == [1, 0]
    assert d.features.tolist() == [[0.5, 0.25], [1.0, 2.0]]


def test_load_csv_ragged_row_names_line(tmp_path):
    p = tmp_path / "d.csv"
    p.write_text("1,2,0\n3,1\n")
    with pytest.raises(FormatError, match="line 2"):
        load_csv(p)


def test_csv_round_trip(tmp_path):
    pair = make_gauss_shift(1.0, 30, 0)
    save_csv(pair.source, tmp_path / "s.csv")
    back = load_csv(tmp_path / "s.csv", label_column="label", has_header=True)
    assert np.array_equal(back.features, pair.source.features)
    assert np.array_equal(back.labels, pair.source.labels)


def _idx(path, magic, dims, payload):
    path.write_bytes(struct.pack(">I", magic) + struct.pack(f">{len(dims)}I", *dims) + bytes(payload))


def test_load_idx(tmp_path):
    _idx(tmp_path / "img", 0x803, (2, 2, 2), [0, 255, 51, 0, 255, 255, 0, 0])
    _idx(tmp_path / "lab", 0x801, (2,), [3, 7])
    d = load_idx(tmp_path / "img", tmp_path / "lab")
    assert d.features.tolist() == [[0.0, 1.0, 0.2, 0.0], [1.0, 1.0, 0.0, 0.0]]
    assert d.labels.tolist() == [3, 7]


def test_load_idx_bad_magic(tmp_path):
    _idx(tmp_path / "img", 0x802, (1, 1), [0])
    _idx(tmp_path / "lab", 0x801, (1,), [0])
    with pytest.raises(FormatError, match="magic"):
        load_idx(tmp_path / "img", tmp_path / "lab")


def test_load_idx_count_mismatch(tmp_path):
    _idx(tmp_path / "img", 0x803, (2, 1, 1), [0, 0])
    _idx(tmp_path / "lab", 0x801, (3,), [0, 1, 0])
    with pytest.raises(FormatError, match="2.*3"):
        load_idx(tmp_path / "img", tmp_path / "lab")
