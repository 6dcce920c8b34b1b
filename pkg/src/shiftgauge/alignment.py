"""Differentiable source/target alignment terms and minibatch plumbing."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .errors import InputError
from .hypothesis import Discriminator
from .tensor import Adam, Tensor

JS = "js_discriminator"
MMD = "mmd_rbf"
METHODS = (JS, MMD)


def median_bandwidth(z: np.ndarray) -> tuple[float, bool]:
    """Median pairwise Euclidean distance of ``z``; (1.0, True) when it is zero."""
    z = np.asarray(z, dtype=np.float64)
    if len(z) < 2:
        return 1.0, True
    sq = (z * z).sum(1)
    d2 = sq[:, None] + sq[None, :] - 2.0 * z @ z.T
    iu = np.triu_indices(len(z), 1)
    med = float(np.median(np.sqrt(np.maximum(d2[iu], 0.0))))
    if not np.isfinite(med) or med <= 0.0:
        return 1.0, True
    return med, False


def domain_loss(logits_s: Tensor, logits_t: Tensor, flip: bool = False) -> Tensor:
    """Class-balanced domain cross-entropy (source=0, target=1)."""
    ys = np.ones if flip else np.zeros
    yt = np.zeros if flip else np.ones
    ls = T.cross_entropy(logits_s, ys(logits_s.shape[0], np.int64))
    lt = T.cross_entropy(logits_t, yt(logits_t.shape[0], np.int64))
    return T.scale(T.add(ls, lt), 0.5)


class AlignmentTerm:
    """Penalty on the gap between embedded source and target batches.

    For ``js_discriminator`` a discriminator plays against the encoder, through
    gradient reversal when ``grl`` is set and through flipped domain labels
    otherwise. For ``mmd_rbf`` the term is the batch MMD^2 with a median
    bandwidth taken on the (detached) pooled batch.
    """

    def __init__(self, method: str, latent_dim: int, seed: int, lr: float,
                 hidden=(64, 64), grl: bool = True, label: str = "init/discriminator"):
        if method not in METHODS:
            raise InputError(f"unknown divergence method {method!r}; expected one of {METHODS}")
        self.method = method
        self.grl = grl
        self.disc = Discriminator(latent_dim, hidden, seed, label) if method == JS else None
        self.opt = Adam(self.disc.parameters(), lr) if self.disc is not None else None

    def loss(self, z_s: Tensor, z_t: Tensor, alpha: float) -> Tensor:
        """Term to add to the model loss. Discriminator updates happen in :meth:`step`."""
        if self.method == MMD:
            pooled = np.concatenate([z_s.data, z_t.data])
            sigma, _ = median_bandwidth(pooled)
            return T.scale(T.rbf_mmd2(z_s, z_t, sigma), alpha)
        if self.grl:
            return domain_loss(self.disc.forward(T.gradient_reversal(z_s, alpha)),
                               self.disc.forward(T.gradient_reversal(z_t, alpha)))
        self._pending = (Tensor(z_s.data), Tensor(z_t.data))
        return T.scale(domain_loss(self.disc.forward(z_s), self.disc.forward(z_t), flip=True), alpha)

    def step(self) -> None:
        """Advance the discriminator after the model's backward pass."""
        if self.disc is None:
            return
        if self.grl:
            self.opt.step()
        else:
            self.opt.zero_grad()
            zs, zt = self._pending
            domain_loss(self.disc.forward(zs), self.disc.forward(zt)).backward()
            self.opt.step()
        self.opt.zero_grad()


class BatchPlan:
    """Epoch-wise shuffled source batches, each paired with a cycled target batch."""

    def __init__(self, n_source: int, n_target: int, batch_size: int,
                 source_rng: np.random.Generator, target_rng: np.random.Generator):
        if batch_size < 1:
            raise InputError(f"batch_size must be >= 1, got {batch_size}")
        self.n_source = n_source
        self.n_target = n_target
        self.batch_size = batch_size
        self.source_rng = source_rng
        self.target_rng = target_rng
        self._tperm = np.empty(0, np.int64)
        self._tpos = 0

    @property
    def steps_per_epoch(self) -> int:
        return -(-self.n_source // self.batch_size)

    def _target_batch(self, size: int) -> np.ndarray:
        out = []
        while size > 0:
            if self._tpos >= len(self._tperm):
                self._tperm = self.target_rng.permutation(self.n_target)
                self._tpos = 0
            take = min(size, len(self._tperm) - self._tpos)
            out.append(self._tperm[self._tpos:self._tpos + take])
            self._tpos += take
            size -= take
        return np.concatenate(out)

    def epoch(self, with_target: bool = True) -> Iterator[tuple[np.ndarray, np.ndarray | None]]:
        perm = self.source_rng.permutation(self.n_source)
        for start in range(0, self.n_source, self.batch_size):
            sb = perm[start:start + self.batch_size]
            tb = self._target_batch(len(sb)) if with_target else None
            yield sb, tb
