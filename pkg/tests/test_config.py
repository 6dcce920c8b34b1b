import pytest

from shiftgauge.config import load_config, parse_config
from shiftgauge.errors import ConfigError

FULL = """
[dataset]
generator = moons
rotation_deg = 30
noise = 0.1
n = 400

[model]
widths = 16, 16, 16
division_index = 2
seeds = 0, 1, 2

[train]
lr = 0.003
epochs_t1 = 12
divergence_method = mmd_rbf
penalty_grid = 3, 0.3
epsilon = none

[proxy]
check_widths = 8, 8
candidate_divisions = 1, 3
second_level_divisions = 2

[output]
directory = out
emit_plots = no
"""


def test_full_config_parses():
    cfg = parse_config(FULL)
    assert cfg.dataset.generator == "moons"
    assert cfg.dataset.rotation_deg == 30.0
    assert cfg.model.widths == (16, 16, 16)
    assert cfg.model.seeds == (0, 1, 2)
    assert cfg.train.lr == 0.003
    assert cfg.train.penalty_grid == (3.0, 0.3)
    assert cfg.train.epsilon is None
    assert cfg.candidate_divisions == (1, 3)
    assert cfg.output.emit_plots is False
    spec = cfg.model_spec(2)
    assert (spec.input_dim, spec.widths, spec.division_index) == (2, (16, 16, 16), 2)
    assert cfg.check_spec(2).widths == (8, 8)
    assert cfg.text == FULL


def test_defaults():
    cfg = parse_config("")
    assert cfg.dataset.generator == "toy2d"
    assert cfg.candidate_divisions == (1, 2, 3)
    assert cfg.check_widths == cfg.model.widths


@pytest.mark.parametrize("text, where", [
    ("[train]\nlearning_rate = 0.1\n", "train.learning_rate"),
    ("[model]\nwidth = 4\n", "model.width"),
    ("[dataset]\nn = many\n", "dataset.n"),
    ("[output]\nemit_plots = maybe\n", "output.emit_plots"),
    ("[extras]\nx = 1\n", "[extras]"),
])
def test_bad_keys_and_values_are_named(text, where):
    with pytest.raises(ConfigError, match=__import__("re").escape(where)):
        parse_config(text)


@pytest.mark.parametrize("text", [
    "[model]\nwidths = 4, 4\ndivision_index = 3\n",
    "[model]\nseeds = -1\n",
    "[dataset]\ngenerator = mnist\n",
    "[train]\nlr = -1\n",
    "[proxy]\ncheckpoint_every = 0\n",
])
def test_invalid_values(text):
    with pytest.raises(ConfigError):
        parse_config(text)


def test_input_dim_mismatch():
    cfg = parse_config("[model]\ninput_dim = 3\n")
    with pytest.raises(ConfigError, match="input_dim"):
        cfg.model_spec(2)


def test_overrides():
    cfg = parse_config(FULL).with_seeds([7]).with_output("elsewhere")
    assert cfg.model.seeds == (7,)
    assert cfg.output.directory == "elsewhere"


def test_load_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_config(tmp_path / "absent.ini")
