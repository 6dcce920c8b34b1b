"""Experiment configuration: an INI file with dataset, model, train, proxy and
output sections.

Example::

    [dataset]
    generator = toy2d
    epsilon = 0.05
    n = 1000

    [model]
    widths = 2, 16, 16
    seeds = 0, 1, 2, 3, 4

    [train]
    epochs_t1 = 60
"""
from __future__ import annotations

import configparser
import dataclasses
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .hypothesis import MlpSpec
from .trainer import DirConfig

GENERATORS = ("toy2d", "moons", "gauss", "csv", "idx")
CANDIDATES = ("dir", "supervised")
CLASS_MODES = ("source_constrained", "dir_constrained")


@dataclass(frozen=True)
class DatasetBlock:
    generator: str = "toy2d"
    name: str = ""
    epsilon: float = 0.05
    n: int = 1000
    rotation_deg: float = 40.0
    noise: float = 0.1
    mean_shift: float = 1.0
    spread: float = 0.6
    standardize: bool = False
    source_path: str = ""
    target_path: str = ""
    label_column: int = -1
    has_header: bool = False
    # file inputs may carry target labels for scoring; estimators never see them
    target_has_labels: bool = False
    source_images: str = ""
    source_labels: str = ""
    target_images: str = ""
    target_labels: str = ""


@dataclass(frozen=True)
class ModelBlock:
    widths: tuple[int, ...] = (16, 16, 16)
    num_classes: int = 2
    division_index: int = 1
    input_dim: int = 0  # 0: take it from the data
    seeds: tuple[int, ...] = (0,)
    candidate: str = "dir"


@dataclass(frozen=True)
class ProxyBlock:
    check_widths: tuple[int, ...] = ()  # empty: same as the model
    check_division: int = 1
    candidate_divisions: tuple[int, ...] = ()  # empty: every division
    second_level_divisions: tuple[int, ...] = ()  # empty: pair each division with itself
    checkpoint_every: int = 2
    bd_class: str = "source_constrained"


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "runs"
    emit_plots: bool = True


@dataclass(frozen=True)
class ExperimentConfig:
    dataset: DatasetBlock = field(default_factory=DatasetBlock)
    model: ModelBlock = field(default_factory=ModelBlock)
    train: DirConfig = field(default_factory=DirConfig)
    proxy: ProxyBlock = field(default_factory=ProxyBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    text: str = ""  # source text, kept for manifests

    def __post_init__(self):
        d, m, p = self.dataset, self.model, self.proxy
        if d.generator not in GENERATORS:
            raise ConfigError(f"dataset.generator must be one of {GENERATORS}, got {d.generator!r}")
        if m.candidate not in CANDIDATES:
            raise ConfigError(f"model.candidate must be one of {CANDIDATES}, got {m.candidate!r}")
        if p.bd_class not in CLASS_MODES:
            raise ConfigError(f"proxy.bd_class must be one of {CLASS_MODES}, got {p.bd_class!r}")
        if not m.seeds:
            raise ConfigError("model.seeds must be non-empty")
        if any(s < 0 for s in m.seeds):
            raise ConfigError(f"model.seeds must be non-negative, got {m.seeds}")
        if p.checkpoint_every < 1:
            raise ConfigError(f"proxy.checkpoint_every must be >= 1, got {p.checkpoint_every}")
        depth = len(m.widths)
        _divisions_ok("model.division_index", (m.division_index,), depth)
        _divisions_ok("proxy.candidate_divisions", p.candidate_divisions, depth)
        _divisions_ok("proxy.second_level_divisions", p.second_level_divisions, depth)
        _divisions_ok("proxy.check_division", (p.check_division,), len(self.check_widths))

    @property
    def check_widths(self) -> tuple[int, ...]:
        return self.proxy.check_widths or self.model.widths

    @property
    def candidate_divisions(self) -> tuple[int, ...]:
        return self.proxy.candidate_divisions or tuple(range(1, len(self.model.widths) + 1))

    def model_spec(self, input_dim: int) -> MlpSpec:
        self._check_dim(input_dim)
        return MlpSpec(input_dim, self.model.widths, self.model.num_classes, self.model.division_index)

    def check_spec(self, input_dim: int) -> MlpSpec:
        self._check_dim(input_dim)
        return MlpSpec(input_dim, self.check_widths, self.model.num_classes, self.proxy.check_division)

    def _check_dim(self, input_dim: int) -> None:
        if self.model.input_dim and self.model.input_dim != input_dim:
            raise ConfigError(f"model.input_dim is {self.model.input_dim} but the data has {input_dim} features")

    def with_seeds(self, seeds) -> "ExperimentConfig":
        return dataclasses.replace(self, model=dataclasses.replace(self.model, seeds=tuple(seeds)))

    def with_output(self, directory: str) -> "ExperimentConfig":
        return dataclasses.replace(self, output=dataclasses.replace(self.output, directory=directory))


def _divisions_ok(key: str, values, depth: int) -> None:
    bad = [v for v in values if not 1 <= v <= depth]
    if bad:
        raise ConfigError(f"{key}: division {bad[0]} is outside [1, {depth}]")


SECTIONS = {"dataset": DatasetBlock, "model": ModelBlock, "train": DirConfig,
            "proxy": ProxyBlock, "output": OutputBlock}


def _parse_value(section: str, key: str, raw: str, default):
    where = f"{section}.{key}"
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(raw)
        if isinstance(default, tuple):
            parts = [p.strip() for p in raw.split(",") if p.strip()]
            conv = float if key == "penalty_grid" else int
            return tuple(conv(p) for p in parts)
        if key == "epsilon" and section == "train":
            return None if raw.lower() in ("", "none") else float(raw)
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"{where}: cannot parse {raw!r}") from None


def parse_config(text: str, origin: str = "<string>") -> ExperimentConfig:
    parser = configparser.ConfigParser(interpolation=None, default_section="\0none")
    parser.optionxform = str  # keep key case so typos are reported verbatim
    try:
        parser.read_string(text, source=origin)
    except configparser.Error as exc:
        raise ConfigError(f"{origin}: {' '.join(str(exc).split())}") from None
    blocks = {}
    for section in parser.sections():
        if section not in SECTIONS:
            raise ConfigError(f"{origin}: unknown section [{section}]")
        cls = SECTIONS[section]
        defaults = {f.name: getattr(cls(), f.name) for f in dataclasses.fields(cls)}
        values = {}
        for key, raw in parser.items(section):
            if key not in defaults:
                raise ConfigError(f"{origin}: unknown key {section}.{key}")
            values[key] = _parse_value(section, key, raw, defaults[key])
        try:
            blocks[section] = cls(**values)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{origin}: [{section}] {exc}") from None
    try:
        return ExperimentConfig(**blocks, text=text)
    except ConfigError as exc:
        raise ConfigError(f"{origin}: {exc}") from None


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except FileNotFoundError:
        raise FileNotFoundError(f"config file not found: {path}") from None
    return parse_config(text, str(path))
