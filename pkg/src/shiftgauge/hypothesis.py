"""MLP hypotheses split as predictor-after-encoder at a division index."""
from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from . import tensor as T
from .errors import FormatError, InputError
from .rng import stream
from .tensor import Tensor

MAGIC = b"SHGAUGE1"
VERSION = 1


@dataclass(frozen=True)
class MlpSpec:
    """Shape of an N-layer ReLU network; ``widths`` has N-1 hidden widths.

    The encoder is layers ``1..division_index``; the predictor is the rest.
    """

    input_dim: int
    widths: tuple[int, ...]
    num_classes: int = 2
    division_index: int = 1

    def __post_init__(self):
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        if self.input_dim < 1:
            raise InputError(f"input_dim must be >= 1, got {self.input_dim}")
        if not self.widths or any(w < 1 for w in self.widths):
            raise InputError(f"widths must be non-empty and positive, got {self.widths}")
        if self.num_classes < 2:
            raise InputError(f"num_classes must be >= 2, got {self.num_classes}")
        if not 1 <= self.division_index <= len(self.widths):
            raise InputError(
                f"division_index must be in [1, {len(self.widths)}], got {self.division_index}")

    @property
    def total_layers(self) -> int:
        return len(self.widths) + 1

    @property
    def latent_dim(self) -> int:
        return self.widths[self.division_index - 1]

    def layer_dims(self) -> list[tuple[int, int]]:
        dims = [self.input_dim, *self.widths, self.num_classes]
        return list(zip(dims[:-1], dims[1:]))

    def with_division(self, division_index: int) -> "MlpSpec":
        return MlpSpec(self.input_dim, self.widths, self.num_classes, division_index)


@dataclass
class Layer:
    weight: Tensor
    bias: Tensor

    def copy(self) -> "Layer":
        return Layer(Tensor(self.weight.data.copy(), True), Tensor(self.bias.data.copy(), True))


def he_uniform_layers(dims: Sequence[tuple[int, int]], rng: np.random.Generator) -> list[Layer]:
    layers = []
    for fan_in, fan_out in dims:
        bound = np.sqrt(6.0 / fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
        layers.append(Layer(Tensor(w, True), Tensor(np.zeros(fan_out), True)))
    return layers


def _dense(x: Tensor, layer: Layer) -> Tensor:
    return T.add_bias(T.matmul(x, layer.weight), layer.bias)


def _dense_np(x: np.ndarray, layer: Layer) -> np.ndarray:
    return x @ layer.weight.data + layer.bias.data


class Classifier(Protocol):
    num_classes: int

    def predict(self, x: np.ndarray) -> np.ndarray: ...


class Hypothesis:
    """h = predictor(encoder(x)) with ReLU after every hidden layer."""

    def __init__(self, spec: MlpSpec, layers: list[Layer], dropout_rate: float = 0.0):
        if len(layers) != spec.total_layers:
            raise InputError(f"expected {spec.total_layers} layers, got {len(layers)}")
        for layer, (i, o) in zip(layers, spec.layer_dims()):
            if layer.weight.shape != (i, o) or layer.bias.shape != (o,):
                raise InputError(f"layer shape {layer.weight.shape} does not match spec ({i}, {o})")
        if not 0.0 <= dropout_rate < 1.0:
            raise InputError(f"dropout_rate must be in [0, 1), got {dropout_rate}")
        self.spec = spec
        self.layers = layers
        self.dropout_rate = dropout_rate

    @classmethod
    def init(cls, spec: MlpSpec, seed: int, dropout_rate: float = 0.0,
             label: str = "init/hypothesis") -> "Hypothesis":
        return cls(spec, he_uniform_layers(spec.layer_dims(), stream(seed, label)), dropout_rate)

    @property
    def num_classes(self) -> int:
        return self.spec.num_classes

    @property
    def encoder_layers(self) -> list[Layer]:
        return self.layers[: self.spec.division_index]

    @property
    def predictor_layers(self) -> list[Layer]:
        return self.layers[self.spec.division_index:]

    def parameters(self) -> list[Tensor]:
        return [t for layer in self.layers for t in (layer.weight, layer.bias)]

    def encoder_parameters(self) -> list[Tensor]:
        return [t for layer in self.encoder_layers for t in (layer.weight, layer.bias)]

    def predictor_parameters(self) -> list[Tensor]:
        return [t for layer in self.predictor_layers for t in (layer.weight, layer.bias)]

    def copy(self) -> "Hypothesis":
        return Hypothesis(self.spec, [layer.copy() for layer in self.layers], self.dropout_rate)

    def with_division(self, division_index: int) -> "Hypothesis":
        """Same weights, different bookkeeping split."""
        return Hypothesis(self.spec.with_division(division_index),
                          [layer.copy() for layer in self.layers], self.dropout_rate)

    # -- differentiable forward
    def encode(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        h = x
        for layer in self.encoder_layers:
            h = T.relu(_dense(h, layer))
            if rng is not None and self.dropout_rate > 0:
                h = T.dropout(h, self.dropout_rate, rng)
        return h

    def head(self, z: Tensor) -> Tensor:
        h = z
        last = len(self.predictor_layers) - 1
        for k, layer in enumerate(self.predictor_layers):
            h = _dense(h, layer)
            if k < last:
                h = T.relu(h)
        return h

    def forward(self, x: Tensor, rng: np.random.Generator | None = None) -> Tensor:
        return self.head(self.encode(x, rng))

    # -- inference
    def _check_x(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None] if self.spec.input_dim == 1 else x[None, :]
        if x.ndim != 2 or x.shape[1] != self.spec.input_dim:
            raise InputError(f"expected inputs of width {self.spec.input_dim}, got shape {x.shape}")
        return x

    def embed(self, x) -> np.ndarray:
        h = self._check_x(x)
        for layer in self.encoder_layers:
            h = np.maximum(_dense_np(h, layer), 0.0)
        return h

    def head_logits(self, z: np.ndarray) -> np.ndarray:
        h = z
        last = len(self.predictor_layers) - 1
        for k, layer in enumerate(self.predictor_layers):
            h = _dense_np(h, layer)
            if k < last:
                h = np.maximum(h, 0.0)
        return h

    def logits(self, x) -> np.ndarray:
        return self.head_logits(self.embed(x))

    def predict_proba(self, x) -> np.ndarray:
        return T.softmax_np(self.logits(x))

    def predict(self, x) -> np.ndarray:
        # np.argmax returns the first maximum: ties go to the smaller class index
        return np.argmax(self.predict_proba(x), axis=1)

    def confidence(self, x) -> np.ndarray:
        """Max softmax probability per point, in [1/K, 1]."""
        return self.predict_proba(x).max(axis=1)


def predict(h: Classifier, x) -> np.ndarray:
    return h.predict(x)


def predict_proba(h: Hypothesis, x) -> np.ndarray:
    return h.predict_proba(x)


class Discriminator:
    """Domain classifier from latent codes to 2 logits (source=0, target=1)."""

    def __init__(self, latent_dim: int, hidden: Sequence[int] = (64, 64), seed: int = 0,
                 label: str = "init/discriminator"):
        dims = [latent_dim, *hidden, 2]
        self.latent_dim = latent_dim
        self.hidden = tuple(hidden)
        self.layers = he_uniform_layers(list(zip(dims[:-1], dims[1:])), stream(seed, label))

    def parameters(self) -> list[Tensor]:
        return [t for layer in self.layers for t in (layer.weight, layer.bias)]

    def forward(self, z: Tensor) -> Tensor:
        h = z
        for k, layer in enumerate(self.layers):
            h = _dense(h, layer)
            if k < len(self.layers) - 1:
                h = T.relu(h)
        return h

    def logits(self, z: np.ndarray) -> np.ndarray:
        h = np.asarray(z, dtype=np.float64)
        for k, layer in enumerate(self.layers):
            h = _dense_np(h, layer)
            if k < len(self.layers) - 1:
                h = np.maximum(h, 0.0)
        return h


@dataclass
class ReplayLabeler:
    """Returns stored labels for the exact feature matrix it was built from."""

    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def predict(self, x) -> np.ndarray:
        x = np.asarray(x)
        if x.shape != self.features.shape or not np.array_equal(x, self.features):
            raise InputError("ReplayLabeler only labels the features it was built from")
        return np.asarray(self.labels)


# ---------------------------------------------------------------- risks

def zero_one_risk(h: Classifier, features, labels) -> float:
    """Fraction of misclassified points."""
    labels = np.asarray(labels)
    if labels.size == 0:
        raise InputError("zero_one_risk needs a non-empty labeled set")
    pred = h.predict(features)
    if pred.shape != labels.shape:
        raise InputError(f"{len(labels)} labels for {len(pred)} predictions")
    return int(np.count_nonzero(pred != labels)) / labels.size


def disagreement(h: Classifier, h2: Classifier, x) -> float:
    """Fraction of points where the two classifiers predict different labels."""
    if h.num_classes != h2.num_classes:
        raise InputError(f"class-count mismatch: {h.num_classes} vs {h2.num_classes}")
    x = np.asarray(x)
    if len(x) == 0:
        raise InputError("disagreement needs a non-empty sample")
    a, b = h.predict(x), h2.predict(x)
    return int(np.count_nonzero(a != b)) / len(a)


# ---------------------------------------------------------------- checkpoints

def _metadata(h: Hypothesis) -> dict:
    meta = asdict(h.spec)
    meta["widths"] = list(h.spec.widths)
    meta["dropout_rate"] = h.dropout_rate
    return meta


def checkpoint_bytes(h: Hypothesis) -> bytes:
    meta = json.dumps(_metadata(h), sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", VERSION), struct.pack("<I", len(meta)), meta]
    for layer in h.layers:
        parts.append(layer.weight.data.astype("<f8").tobytes(order="C"))
        parts.append(layer.bias.data.astype("<f8").tobytes(order="C"))
    return b"".join(parts)


def save_checkpoint(h: Hypothesis, path) -> None:
    Path(path).write_bytes(checkpoint_bytes(h))


def checkpoint_from_bytes(blob: bytes) -> Hypothesis:
    if len(blob) < 16:
        raise FormatError(f"checkpoint truncated: {len(blob)} bytes, header needs 16")
    if blob[:8] != MAGIC:
        raise FormatError(f"bad checkpoint magic {blob[:8]!r}, expected {MAGIC!r}")
    (version,) = struct.unpack("<I", blob[8:12])
    if version != VERSION:
        raise FormatError(f"unsupported checkpoint version {version} (this reader supports {VERSION})")
    (meta_len,) = struct.unpack("<I", blob[12:16])
    end = 16 + meta_len
    if len(blob) < end:
        raise FormatError(f"checkpoint truncated inside metadata at offset {len(blob)}")
    try:
        meta = json.loads(blob[16:end].decode("utf-8"))
        spec = MlpSpec(int(meta["input_dim"]), tuple(meta["widths"]),
                       int(meta["num_classes"]), int(meta["division_index"]))
        dropout_rate = float(meta.get("dropout_rate", 0.0))
    except (ValueError, KeyError, TypeError, InputError) as exc:
        raise FormatError(f"unreadable checkpoint metadata: {exc}") from exc
    layers = []
    offset = end
    for fan_in, fan_out in spec.layer_dims():
        arrays = []
        for shape in ((fan_in, fan_out), (fan_out,)):
            nbytes = 8 * int(np.prod(shape))
            if len(blob) < offset + nbytes:
                raise FormatError(f"checkpoint truncated at offset {offset}, needed {nbytes} more bytes")
            arrays.append(np.frombuffer(blob, dtype="<f8", count=nbytes // 8, offset=offset)
                          .astype(np.float64).reshape(shape))
            offset += nbytes
        layers.append(Layer(Tensor(arrays[0], True), Tensor(arrays[1], True)))
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes after last layer")
    return Hypothesis(spec, layers, dropout_rate)


def load_checkpoint(path) -> Hypothesis:
    return checkpoint_from_bytes(Path(path).read_bytes())
