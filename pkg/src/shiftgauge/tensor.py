"""A small reverse-mode autodiff engine over float64 numpy arrays.

Only what multilayer perceptrons, softmax classifiers, gradient reversal
and a kernel MMD need is provided. There is no general broadcasting; the
single exception is adding a bias row vector to a matrix.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np

from .errors import InputError, ShapeError, TrainingError


class Tensor:
    """Dense float64 array with an optional gradient and graph links."""

    __slots__ = ("data", "grad", "requires_grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False, op: str = "leaf",
                 parents: Sequence["Tensor"] = (), backward: Callable[[], None] | None = None):
        self.data = np.ascontiguousarray(data, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self.op = op
        self._parents = tuple(parents)
        self._backward = backward

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        if self.data.size != 1:
            raise ShapeError(f"item() needs a single element, shape is {self.shape}")
        return float(self.data.reshape(()))

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, op={self.op!r})"

    def _accumulate(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.zeros_like(self.data)
        self.grad += g

    def zero_grad(self) -> None:
        self.grad = None

    def backward(self) -> None:
        """Backpropagate from this scalar through the graph."""
        if self.data.size != 1:
            raise ShapeError(f"backward() needs a scalar output, shape is {self.shape}")
        order = _topological(self)
        for node in order:
            node.grad = np.zeros_like(node.data)
        self.grad = np.ones_like(self.data)
        for node in reversed(order):
            if node._backward is not None:
                node._backward()

    # operator sugar
    def __add__(self, other):
        if isinstance(other, Tensor):
            return add(self, other)
        return add_scalar(self, float(other))

    __radd__ = __add__

    def __sub__(self, other):
        if isinstance(other, Tensor):
            return add(self, scale(other, -1.0))
        return add_scalar(self, -float(other))

    def __neg__(self):
        return scale(self, -1.0)

    def __mul__(self, other):
        if isinstance(other, Tensor):
            return mul(self, other)
        return scale(self, float(other))

    __rmul__ = __mul__

    def __matmul__(self, other):
        return matmul(self, other)


def _topological(root: Tensor) -> list[Tensor]:
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))
    return order


def _needs(*xs: Tensor) -> bool:
    return any(x.requires_grad for x in xs)


def _make(data, parents, op, backward) -> Tensor:
    if _needs(*parents):
        return Tensor(data, True, op, parents, backward)
    return Tensor(data, False, op)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


# ---------------------------------------------------------------- linear algebra

def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[0]:
        raise ShapeError(f"matmul shape mismatch: {a.shape} @ {b.shape}")
    out = None

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad @ b.data.T)
        if b.requires_grad:
            b._accumulate(a.data.T @ out.grad)

    out = _make(a.data @ b.data, (a, b), "matmul", backward)
    return out


def add_bias(x: Tensor, b: Tensor) -> Tensor:
    """Row-wise bias addition: (m, n) + (n,)."""
    if x.data.ndim != 2 or b.data.ndim != 1 or x.shape[1] != b.shape[0]:
        raise ShapeError(f"add_bias shape mismatch: {x.shape} + {b.shape}")
    out = None

    def backward():
        if x.requires_grad:
            x._accumulate(out.grad)
        if b.requires_grad:
            b._accumulate(out.grad.sum(axis=0))

    out = _make(x.data + b.data, (x, b), "add_bias", backward)
    return out


def add(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"add shape mismatch: {a.shape} + {b.shape}")
    out = None

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad)
        if b.requires_grad:
            b._accumulate(out.grad)

    out = _make(a.data + b.data, (a, b), "add", backward)
    return out


def mul(a: Tensor, b: Tensor) -> Tensor:
    if a.shape != b.shape:
        raise ShapeError(f"mul shape mismatch: {a.shape} * {b.shape}")
    out = None

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad * b.data)
        if b.requires_grad:
            b._accumulate(out.grad * a.data)

    out = _make(a.data * b.data, (a, b), "mul", backward)
    return out


def scale(x: Tensor, c: float) -> Tensor:
    out = None

    def backward():
        x._accumulate(out.grad * c)

    out = _make(x.data * c, (x,), "scale", backward)
    return out


def add_scalar(x: Tensor, c: float) -> Tensor:
    out = None

    def backward():
        x._accumulate(out.grad)

    out = _make(x.data + c, (x,), "add_scalar", backward)
    return out


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a scalar tensor."""
    out = None

    def backward():
        x._accumulate(np.broadcast_to(out.grad, x.shape))

    out = _make(np.asarray(x.data.sum()), (x,), "sum", backward)
    return out


def mean(x: Tensor) -> Tensor:
    return scale(total(x), 1.0 / max(x.data.size, 1))


def concat_rows(a: Tensor, b: Tensor) -> Tensor:
    if a.data.ndim != 2 or b.data.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ShapeError(f"concat_rows shape mismatch: {a.shape} and {b.shape}")
    n = a.shape[0]
    out = None

    def backward():
        if a.requires_grad:
            a._accumulate(out.grad[:n])
        if b.requires_grad:
            b._accumulate(out.grad[n:])

    out = _make(np.concatenate([a.data, b.data], axis=0), (a, b), "concat_rows", backward)
    return out


# ---------------------------------------------------------------- nonlinearities

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    out = None

    def backward():
        x._accumulate(out.grad * mask)

    out = _make(x.data * mask, (x,), "relu", backward)
    return out


def dropout(x: Tensor, rate: float, rng: np.random.Generator) -> Tensor:
    """Inverted dropout; identity when ``rate == 0``."""
    if rate <= 0.0:
        return x
    if rate >= 1.0:
        raise InputError(f"dropout rate must be < 1, got {rate}")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    out = None

    def backward():
        x._accumulate(out.grad * keep)

    out = _make(x.data * keep, (x,), "dropout", backward)
    return out


def gradient_reversal(x: Tensor, lambda_grl: float) -> Tensor:
    """Identity forward; backward multiplies the incoming gradient by ``-lambda_grl``."""
    if lambda_grl < 0:
        raise InputError(f"lambda_grl must be >= 0, got {lambda_grl}")
    out = None

    def backward():
        x._accumulate(out.grad * -lambda_grl)

    out = _make(x.data.copy(), (x,), "gradient_reversal", backward)
    return out


def softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def log_softmax_np(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    return z - np.log(np.exp(z).sum(axis=-1, keepdims=True))


def softmax(x: Tensor) -> Tensor:
    p = softmax_np(x.data)
    out = None

    def backward():
        g = out.grad
        x._accumulate(p * (g - (g * p).sum(axis=-1, keepdims=True)))

    out = _make(p, (x,), "softmax", backward)
    return out


def log_softmax(x: Tensor) -> Tensor:
    ls = log_softmax_np(x.data)
    out = None

    def backward():
        g = out.grad
        x._accumulate(g - np.exp(ls) * g.sum(axis=-1, keepdims=True))

    out = _make(ls, (x,), "log_softmax", backward)
    return out


def _check_labels(logits: Tensor, labels) -> np.ndarray:
    labels = np.asarray(labels)
    if logits.data.ndim != 2:
        raise ShapeError(f"logits must be 2-D, got {logits.shape}")
    if labels.shape != (logits.shape[0],):
        raise ShapeError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    k = logits.shape[1]
    if labels.size and (labels.min() < 0 or labels.max() >= k):
        raise InputError(f"label index out of range [0, {k})")
    return labels.astype(np.int64)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer ``labels`` under softmax(logits)."""
    y = _check_labels(logits, labels)
    m = logits.shape[0]
    ls = log_softmax_np(logits.data)
    rows = np.arange(m)
    value = -ls[rows, y].mean()
    out = None

    def backward():
        g = np.exp(ls)
        g[rows, y] -= 1.0
        logits._accumulate(g * (out.grad / m))

    out = _make(np.asarray(value), (logits,), "cross_entropy", backward)
    return out


def complement_cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean of -log(1 - p_label): small when the model avoids ``labels``."""
    y = _check_labels(logits, labels)
    m, k = logits.shape
    rows = np.arange(m)
    ls = log_softmax_np(logits.data)
    masked = logits.data.copy()
    masked[rows, y] = -np.inf
    lse_rest = np.logaddexp.reduce(masked, axis=1)
    lse_all = np.logaddexp.reduce(logits.data, axis=1)
    value = -(lse_rest - lse_all).mean()
    out = None

    def backward():
        q = np.exp(masked - lse_rest[:, None])
        g = np.exp(ls) - q
        logits._accumulate(g * (out.grad / m))

    out = _make(np.asarray(value), (logits,), "complement_cross_entropy", backward)
    return out


def rbf_mmd2(x: Tensor, y: Tensor, sigma: float) -> Tensor:
    """Biased (V-statistic) squared MMD with kernel exp(-|a-b|^2 / (2 sigma^2))."""
    if x.data.ndim != 2 or y.data.ndim != 2 or x.shape[1] != y.shape[1]:
        raise ShapeError(f"rbf_mmd2 shape mismatch: {x.shape} vs {y.shape}")
    if sigma <= 0:
        raise InputError(f"sigma must be positive, got {sigma}")
    n, m = x.shape[0], y.shape[0]
    X, Y = x.data, y.data
    g2 = 2.0 * sigma * sigma

    def kern(A, B):
        d2 = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
        return np.exp(-np.maximum(d2, 0.0) / g2)

    kxx, kyy, kxy = kern(X, X), kern(Y, Y), kern(X, Y)
    value = kxx.mean() + kyy.mean() - 2.0 * kxy.mean()
    out = None

    def backward():
        # d/dA of k(A,B) summed with weights W: sum_j W_ij k_ij (B_j - A_i) / sigma^2
        def grad_wrt_first(K, A, B, w):
            W = K * w
            return (W @ B - W.sum(1)[:, None] * A) / (sigma * sigma)

        s = float(np.asarray(out.grad).reshape(-1)[0])
        if x.requires_grad:
            gx = 2 * grad_wrt_first(kxx, X, X, 1.0 / (n * n)) - 2 * grad_wrt_first(kxy, X, Y, 1.0 / (n * m))
            x._accumulate(s * gx)
        if y.requires_grad:
            gy = 2 * grad_wrt_first(kyy, Y, Y, 1.0 / (m * m)) - 2 * grad_wrt_first(kxy.T, Y, X, 1.0 / (n * m))
            y._accumulate(s * gy)

    out = _make(np.asarray(value), (x, y), "rbf_mmd2", backward)
    return out


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    m: list[np.ndarray] = field(default_factory=list)
    v: list[np.ndarray] = field(default_factory=list)
    t: int = 0


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState,
              lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8
              ) -> tuple[list[np.ndarray], AdamState]:
    """One bias-corrected Adam update. Returns new arrays; inputs are not mutated."""
    step = state.t + 1
    for i, g in enumerate(grads):
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in parameter {i} at step {step}", step=step)
    m = state.m or [np.zeros_like(p) for p in params]
    v = state.v or [np.zeros_like(p) for p in params]
    new_m, new_v, new_p = [], [], []
    c1 = 1.0 - beta1 ** step
    c2 = 1.0 - beta2 ** step
    for p, g, mi, vi in zip(params, grads, m, v):
        mi = beta1 * mi + (1.0 - beta1) * g
        vi = beta2 * vi + (1.0 - beta2) * (g * g)
        new_p.append(p - lr * (mi / c1) / (np.sqrt(vi / c2) + eps))
        new_m.append(mi)
        new_v.append(vi)
    return new_p, AdamState(new_m, new_v, step)


class Adam:
    """Adam over a fixed list of leaf tensors, updated in place."""

    def __init__(self, params: Iterable[Tensor], lr: float = 1e-3,
                 betas: tuple[float, float] = (0.9, 0.999), eps: float = 1e-8):
        self.params = list(params)
        self.lr = lr
        self.betas = betas
        self.eps = eps
        self.state = AdamState()

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad = None

    def step(self) -> None:
        grads = [p.grad if p.grad is not None else np.zeros_like(p.data) for p in self.params]
        new, self.state = adam_step([p.data for p in self.params], grads, self.state,
                                    self.lr, self.betas[0], self.betas[1], self.eps)
        for p, arr in zip(self.params, new):
            p.data = arr
