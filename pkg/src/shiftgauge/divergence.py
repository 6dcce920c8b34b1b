"""Scalar divergence estimates between embedded source and target samples."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import tensor as T
from .alignment import JS, MMD, domain_loss, median_bandwidth
from .errors import EstimationError, InputError, TrainingError
from .hypothesis import Discriminator, Hypothesis
from .rng import stream
from .tensor import Adam, Tensor

LN2 = math.log(2.0)


@dataclass
class DivergenceEstimate:
    method: str
    value: float
    audit_epochs: int = 0
    details: dict = field(default_factory=dict)


@dataclass(frozen=True)
class AuditConfig:
    """Settings for the fresh discriminator used by :func:`estimate_js`."""

    epochs: int = 30
    seed: int = 0
    batch_size: int = 128
    lr: float = 3e-3
    hidden: tuple[int, ...] = (64, 64)
    holdout: float = 0.3
    max_points: int = 1000


Embedder = Callable[[np.ndarray], np.ndarray]


def as_embedder(g) -> Embedder:
    """Accept a Hypothesis (its encoder), a callable, or None (identity)."""
    if g is None:
        return lambda x: np.asarray(x, dtype=np.float64)
    if isinstance(g, Hypothesis):
        return g.embed
    if callable(g):
        return g
    raise InputError(f"cannot use {type(g).__name__} as an encoder")


def _features(data) -> np.ndarray:
    x = getattr(data, "features", data)
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] == 0:
        raise InputError("divergence estimation needs non-empty source and target sets")
    return x


def _audit_config(cfg) -> AuditConfig:
    if cfg is None:
        return AuditConfig()
    if isinstance(cfg, AuditConfig):
        return cfg
    return cfg.audit_config()


def estimate_js(g, source, target, cfg=None) -> DivergenceEstimate:
    """Jensen-Shannon proxy ln 2 - (best held-out balanced BCE of a fresh discriminator).

    The discriminator is trained from scratch on standardized embeddings; the
    estimate is clamped to [0, ln 2].
    """
    ac = _audit_config(cfg)
    embed = as_embedder(g)
    zs, zt = embed(_features(source)), embed(_features(target))
    rng = stream(ac.seed, "audit/split")
    if len(zs) > ac.max_points:
        zs = zs[np.sort(rng.choice(len(zs), ac.max_points, replace=False))]
    if len(zt) > ac.max_points:
        zt = zt[np.sort(rng.choice(len(zt), ac.max_points, replace=False))]

    def cut(z):
        n = len(z)
        if n < 2:
            return z, z
        k = min(max(int(round(n * ac.holdout)), 1), n - 1)
        perm = rng.permutation(n)
        return z[perm[k:]], z[perm[:k]]

    (s_tr, s_ho), (t_tr, t_ho) = cut(zs), cut(zt)
    pooled = np.concatenate([s_tr, t_tr])
    mu = pooled.mean(0)
    sd = pooled.std(0)
    sd = np.where(sd > 1e-12, sd, 1.0)
    s_tr, s_ho, t_tr, t_ho = ((a - mu) / sd for a in (s_tr, s_ho, t_tr, t_ho))
    if not all(np.all(np.isfinite(a)) for a in (s_tr, t_tr, s_ho, t_ho)):
        raise EstimationError("non-finite embeddings in divergence audit")

    disc = Discriminator(zs.shape[1], ac.hidden, ac.seed, "audit/discriminator")
    opt = Adam(disc.parameters(), ac.lr)
    batch_rng = stream(ac.seed, "audit/batches")

    def heldout_bce() -> float:
        ls = T.log_softmax_np(disc.logits(s_ho))[:, 0].mean()
        lt = T.log_softmax_np(disc.logits(t_ho))[:, 1].mean()
        return float(-0.5 * (ls + lt))

    best = heldout_bce()
    last = best
    n = max(len(s_tr), len(t_tr))
    steps = max(1, -(-n // ac.batch_size))
    for epoch in range(1, ac.epochs + 1):
        ps = batch_rng.permutation(len(s_tr))
        pt = batch_rng.permutation(len(t_tr))
        for k in range(steps):
            sb = ps[np.arange(k * ac.batch_size, (k + 1) * ac.batch_size) % len(ps)]
            tb = pt[np.arange(k * ac.batch_size, (k + 1) * ac.batch_size) % len(pt)]
            loss = domain_loss(disc.forward(Tensor(s_tr[sb])), disc.forward(Tensor(t_tr[tb])))
            if not np.isfinite(loss.item()):
                raise EstimationError(f"non-finite audit loss at epoch {epoch}")
            opt.zero_grad()
            loss.backward()
            try:
                opt.step()
            except TrainingError as exc:
                raise EstimationError(f"audit discriminator diverged at epoch {epoch}: {exc}") from exc
        last = heldout_bce()
        if not np.isfinite(last):
            raise EstimationError(f"non-finite held-out audit loss at epoch {epoch}")
        best = min(best, last)
    value = min(max(LN2 - best, 0.0), LN2)
    return DivergenceEstimate(JS, value, ac.epochs,
                              {"best_heldout_bce": best, "final_heldout_bce": last,
                               "n_source": int(len(zs)), "n_target": int(len(zt))})


def mmd2_rbf(x: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """Biased V-statistic MMD^2 with kernel exp(-|a-b|^2 / (2 sigma^2))."""
    return float(T.rbf_mmd2(Tensor(x), Tensor(y), sigma).item())


def estimate_mmd(g, source, target, bandwidth: float | None = None,
                 max_points: int = 1000, seed: int = 0) -> DivergenceEstimate:
    """MMD^2 between embedded samples; bandwidth defaults to the pooled median distance."""
    embed = as_embedder(g)
    zs, zt = embed(_features(source)), embed(_features(target))
    rng = stream(seed, "mmd/subsample")
    if len(zs) > max_points:
        zs = zs[np.sort(rng.choice(len(zs), max_points, replace=False))]
    if len(zt) > max_points:
        zt = zt[np.sort(rng.choice(len(zt), max_points, replace=False))]
    details: dict = {}
    if bandwidth is None:
        bandwidth, degenerate = median_bandwidth(np.concatenate([zs, zt]))
        details["median_heuristic"] = True
        if degenerate:
            details["bandwidth_fallback"] = True
    details["bandwidth"] = float(bandwidth)
    value = max(mmd2_rbf(zs, zt, bandwidth), 0.0)
    return DivergenceEstimate(MMD, value, 0, details)


def estimate(method: str, g, source, target, cfg=None) -> DivergenceEstimate:
    if method == JS:
        return estimate_js(g, source, target, cfg)
    if method == MMD:
        seed = _audit_config(cfg).seed
        return estimate_mmd(g, source, target, seed=seed)
    raise InputError(f"unknown divergence method {method!r}")
