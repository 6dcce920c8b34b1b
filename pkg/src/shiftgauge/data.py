"""Synthetic shift benchmarks, file loaders and splits.

Target labels of a :class:`ShiftPair` are held back from estimators: the
public fields expose an unlabeled target, and the labeled copy is reachable
only through :meth:`ShiftPair.hidden_target`, which records every access.
"""
from __future__ import annotations

import csv
import struct
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .errors import FormatError, InputError
from .rng import stream


@dataclass(frozen=True)
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    domain_tag: str = "source"
    name: str = ""

    def __post_init__(self):
        x = np.asarray(self.features, dtype=np.float64)
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2 or x.shape[0] < 1:
            raise InputError(f"features must be a non-empty n x d matrix, got shape {x.shape}")
        object.__setattr__(self, "features", x)
        if self.labels is not None:
            y = np.asarray(self.labels)
            if y.shape != (x.shape[0],):
                raise InputError(f"{y.shape[0] if y.ndim else 0} labels for {x.shape[0]} points")
            if y.size and y.min() < 0:
                raise InputError("labels must be non-negative class indices")
            object.__setattr__(self, "labels", y.astype(np.int64))

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def labeled(self) -> bool:
        return self.labels is not None

    def unlabeled(self) -> "Dataset":
        return replace(self, labels=None)

    def subset(self, idx) -> "Dataset":
        idx = np.asarray(idx)
        return replace(self, features=self.features[idx],
                       labels=None if self.labels is None else self.labels[idx])

    def require_labels(self) -> np.ndarray:
        if self.labels is None:
            raise InputError(f"dataset {self.name or self.domain_tag!r} has no labels")
        return self.labels


@dataclass
class ShiftPair:
    """Labeled source, unlabeled target, and a guarded labeled copy of the target."""

    source: Dataset
    target_unlabeled: Dataset
    _target_hidden: Dataset = field(repr=False)
    split_seed: int = 0
    val_fraction: float = 0.2
    name: str = ""
    access_log: list[str] = field(default_factory=list, repr=False)

    def __post_init__(self):
        if self.target_unlabeled.labels is not None:
            raise InputError("target_unlabeled must not carry labels")
        if not np.array_equal(self.target_unlabeled.features, self._target_hidden.features):
            raise InputError("hidden target features must match the unlabeled target row-for-row")

    def hidden_target(self, purpose: str) -> Dataset:
        """Labeled target for scoring only; ``purpose`` is recorded."""
        self.access_log.append(purpose)
        return self._target_hidden

    @property
    def num_classes(self) -> int:
        return int(self.source.require_labels().max()) + 1

    def source_split(self) -> tuple[Dataset, Dataset]:
        return split(self.source, self.val_fraction, self.split_seed)


def make_pair(source: Dataset, target: Dataset, name: str, split_seed: int,
              val_fraction: float = 0.2, standardize: bool = False) -> ShiftPair:
    if standardize:
        source, target = standardize_pair(source, target)
    source = replace(source, domain_tag="source", name=f"{name}/source")
    hidden = replace(target, domain_tag="target", name=f"{name}/target")
    return ShiftPair(source, hidden.unlabeled(), hidden, split_seed, val_fraction, name)


def standardize_pair(source: Dataset, target: Dataset) -> tuple[Dataset, Dataset]:
    """Per-column mean 0 / variance 1 using source statistics only."""
    mu = source.features.mean(axis=0)
    sd = source.features.std(axis=0)
    sd = np.where(sd > 0, sd, 1.0)
    return (replace(source, features=(source.features - mu) / sd),
            replace(target, features=(target.features - mu) / sd))


# ---------------------------------------------------------------- generators

def _check(cond: bool, message: str) -> None:
    if not cond:
        raise InputError(message)


def make_toy2d(epsilon: float, n_per_domain: int, seed: int, standardize: bool = False,
               jitter: float = 0.15) -> ShiftPair:
    """Two-band binary task with disjoint supports and a 2*epsilon label-prior gap.

    Source lies on y in [0.8, 1.2], target on y in [-1.2, -0.8]; the class is
    the side of x (class 1 near x=+1, class 0 near x=-1).
    """
    _check(0.0 <= epsilon <= 0.25, f"epsilon must be in [0, 0.25], got {epsilon}")
    _check(n_per_domain >= 40, f"n_per_domain must be >= 40, got {n_per_domain}")

    def domain(prior: float, lo: float, hi: float, label: str) -> Dataset:
        rng = stream(seed, f"toy2d/{label}")
        y = (rng.random(n_per_domain) < prior).astype(np.int64)
        xs = np.where(y == 1, 1.0, -1.0) + jitter * rng.standard_normal(n_per_domain)
        ys = rng.uniform(lo, hi, n_per_domain)
        return Dataset(np.column_stack([xs, ys]), y)

    src = domain(0.5 + epsilon, 0.8, 1.2, "source")
    tgt = domain(0.5 - epsilon, -1.2, -0.8, "target")
    return make_pair(src, tgt, f"toy2d_eps{epsilon:g}", seed, standardize=standardize)


def _moons(n: int, noise: float, rng: np.random.Generator) -> Dataset:
    n0 = n // 2
    n1 = n - n0
    t0 = rng.uniform(0.0, np.pi, n0)
    t1 = rng.uniform(0.0, np.pi, n1)
    upper = np.column_stack([np.cos(t0), np.sin(t0)])
    lower = np.column_stack([1.0 - np.cos(t1), 0.5 - np.sin(t1)])
    # centred so that a half-turn maps one moon onto the other
    x = np.vstack([upper, lower]) - np.array([0.5, 0.25])
    x = x + noise * rng.standard_normal(x.shape)
    y = np.concatenate([np.zeros(n0, np.int64), np.ones(n1, np.int64)])
    perm = rng.permutation(n)
    return Dataset(x[perm], y[perm])


def rotate(features: np.ndarray, degrees: float) -> np.ndarray:
    a = np.deg2rad(degrees)
    r = np.array([[np.cos(a), -np.sin(a)], [np.sin(a), np.cos(a)]])
    return features @ r.T


def make_moons_shift(rotation_deg: float, noise: float, n: int, seed: int,
                     standardize: bool = False) -> ShiftPair:
    """Two interleaved moons; the target is a fresh sample rotated about the origin."""
    _check(0.0 <= rotation_deg <= 180.0, f"rotation_deg must be in [0, 180], got {rotation_deg}")
    _check(noise >= 0.0, f"noise must be >= 0, got {noise}")
    _check(n >= 2, f"n must be >= 2, got {n}")
    src = _moons(n, noise, stream(seed, "moons/source"))
    tgt = _moons(n, noise, stream(seed, "moons/target"))
    tgt = replace(tgt, features=rotate(tgt.features, rotation_deg))
    return make_pair(src, tgt, f"moons_rot{rotation_deg:g}", seed, standardize=standardize)


def make_gauss_shift(mean_shift: float, n: int, seed: int, spread: float = 0.6,
                     standardize: bool = False) -> ShiftPair:
    """Two Gaussian classes at (-1, 0) and (1, 0); target class means move by
    ``mean_shift`` along the diagonal direction (1, 1)/sqrt(2)."""
    _check(n >= 2, f"n must be >= 2, got {n}")

    def domain(shift: float, label: str) -> Dataset:
        rng = stream(seed, f"gauss/{label}")
        y = rng.integers(0, 2, n)
        centers = np.column_stack([np.where(y == 1, 1.0, -1.0), np.zeros(n)])
        centers = centers + shift * np.array([1.0, 1.0]) / np.sqrt(2.0)
        return Dataset(centers + spread * rng.standard_normal((n, 2)), y)

    return make_pair(domain(0.0, "source"), domain(mean_shift, "target"),
                     f"gauss_shift{mean_shift:g}", seed, standardize=standardize)


# ---------------------------------------------------------------- splits

def split(dataset: Dataset, val_fraction: float, seed: int) -> tuple[Dataset, Dataset]:
    """Seeded shuffle, then (train, val) with round(n * val_fraction) validation rows."""
    if not 0.0 < val_fraction < 1.0:
        raise InputError(f"val_fraction must be in (0, 1), got {val_fraction}")
    n = len(dataset)
    if n < 2:
        raise InputError(f"cannot split a dataset of {n} point(s)")
    n_val = min(max(int(round(n * val_fraction)), 1), n - 1)
    perm = stream(seed, "split").permutation(n)
    return dataset.subset(np.sort(perm[n_val:])), dataset.subset(np.sort(perm[:n_val]))


# ---------------------------------------------------------------- files

def load_csv(path, label_column: int | str | None = -1, has_header: bool = False,
             domain_tag: str = "source") -> Dataset:
    """Comma-separated floats, one point per row.

    ``label_column`` is a column index (negative counts from the end), a
    header name when ``has_header`` is set, or None for unlabeled data.
    """
    path = Path(path)
    with path.open(newline="") as fh:
        rows = list(csv.reader(fh))
    header = None
    start = 1
    if has_header:
        if not rows:
            raise FormatError(f"{path}: empty file, expected a header")
        header, rows, start = rows[0], rows[1:], 2
    rows = [(i + start, r) for i, r in enumerate(rows) if r and any(c.strip() for c in r)]
    if not rows:
        raise FormatError(f"{path}: no data rows")
    width = len(rows[0][1])
    values = []
    for line, r in rows:
        if len(r) != width:
            raise FormatError(f"{path}: line {line} has {len(r)} fields, expected {width}")
        try:
            values.append([float(c) for c in r])
        except ValueError as exc:
            raise FormatError(f"{path}: line {line}: {exc}") from exc
    arr = np.asarray(values, dtype=np.float64)
    if label_column is None:
        return Dataset(arr, None, domain_tag, path.stem)
    if isinstance(label_column, str):
        if header is None or label_column not in header:
            raise FormatError(f"{path}: label column {label_column!r} not in header")
        col = header.index(label_column)
    else:
        col = label_column % width
    labels = arr[:, col]
    if np.any(labels != np.round(labels)) or np.any(labels < 0):
        raise FormatError(f"{path}: label column {col} holds non-integer or negative values")
    feats = np.delete(arr, col, axis=1)
    if feats.shape[1] == 0:
        raise FormatError(f"{path}: no feature columns besides the label")
    return Dataset(feats, labels.astype(np.int64), domain_tag, path.stem)


def save_csv(dataset: Dataset, path, header: bool = True) -> None:
    """Features then (if present) a trailing ``label`` column; repr floats."""
    path = Path(path)
    d = dataset.dim
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow([f"x{j}" for j in range(d)] + (["label"] if dataset.labeled else []))
        for i in range(len(dataset)):
            row = [repr(float(v)) for v in dataset.features[i]]
            if dataset.labeled:
                row.append(str(int(dataset.labels[i])))
            w.writerow(row)


IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


def _read_idx(path: Path, expected_magic: int) -> tuple[tuple[int, ...], bytes]:
    blob = path.read_bytes()
    if len(blob) < 4:
        raise FormatError(f"{path}: truncated IDX header at offset {len(blob)}")
    (magic,) = struct.unpack(">I", blob[:4])
    if magic != expected_magic:
        raise FormatError(f"{path}: bad IDX magic 0x{magic:08x} at offset 0, expected 0x{expected_magic:08x}")
    ndim = magic & 0xFF
    head = 4 + 4 * ndim
    if len(blob) < head:
        raise FormatError(f"{path}: truncated IDX dimensions at offset {len(blob)}")
    dims = struct.unpack(f">{ndim}I", blob[4:head])
    size = int(np.prod(dims))
    if len(blob) != head + size:
        raise FormatError(f"{path}: payload is {len(blob) - head} bytes at offset {head}, expected {size}")
    return dims, blob[head:]


def load_idx(images_path, labels_path, domain_tag: str = "source") -> Dataset:
    """IDX (MNIST-style) unsigned-byte images and labels; pixels scaled to [0, 1]."""
    images_path, labels_path = Path(images_path), Path(labels_path)
    idims, ipay = _read_idx(images_path, IDX_IMAGES)
    ldims, lpay = _read_idx(labels_path, IDX_LABELS)
    if idims[0] != ldims[0]:
        raise FormatError(f"image count {idims[0]} does not match label count {ldims[0]}")
    x = np.frombuffer(ipay, dtype=np.uint8).reshape(idims[0], -1).astype(np.float64) / 255.0
    y = np.frombuffer(lpay, dtype=np.uint8).astype(np.int64)
    return Dataset(x, y, domain_tag, images_path.stem)
