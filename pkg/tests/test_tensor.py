import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from shiftgauge import tensor as T
from shiftgauge.errors import InputError, ShapeError, TrainingError


def numeric_grad(f, arr, step=1e-6):
    g = np.zeros_like(arr)
    for idx in np.ndindex(arr.shape):
        old = arr[idx]
        arr[idx] = old + step
        up = f()
        arr[idx] = old - step
        down = f()
        arr[idx] = old
        g[idx] = (up - down) / (2 * step)
    return g


def rel_err(a, b):
    return np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)


def test_matmul_examples():
    eye = T.Tensor([[1.0, 0.0], [0.0, 1.0]])
    assert np.array_equal(T.matmul(eye, T.Tensor([[2.0], [3.0]])).data, [[2.0], [3.0]])
    assert T.matmul(T.Tensor([[1.0, 2.0]]), T.Tensor([[3.0], [4.0]])).data.tolist() == [[11.0]]


def test_matmul_shape_mismatch():
    with pytest.raises(ShapeError):
        T.matmul(T.Tensor(np.ones((2, 3))), T.Tensor(np.ones((2, 3))))


def test_matmul_gradient_matches_finite_differences(rng):
    a = T.Tensor(rng.standard_normal((3, 4)), requires_grad=True)
    b = T.Tensor(rng.standard_normal((4, 2)), requires_grad=True)
    T.total(T.matmul(a, b)).backward()
    f = lambda: float((a.data @ b.data).sum())
    assert rel_err(a.grad, numeric_grad(f, a.data)) <= 1e-4
    assert rel_err(b.grad, numeric_grad(f, b.data)) <= 1e-4


def test_softmax_relu_cross_entropy_examples():
    assert np.allclose(T.softmax(T.Tensor([[0.0, 0.0]])).data, [[0.5, 0.5]])
    assert T.relu(T.Tensor([-3.0])).data[0] == 0.0
    assert T.relu(T.Tensor([2.0])).data[0] == 2.0
    perfect = T.cross_entropy(T.Tensor([[100.0, -100.0], [-100.0, 100.0]]), [0, 1])
    assert perfect.item() < 1e-9


def test_softmax_is_stable_for_large_logits():
    p = T.softmax_np(np.array([[1000.0, 0.0], [-1000.0, 1000.0]]))
    assert np.all(np.isfinite(p))
    assert np.allclose(p.sum(axis=1), 1.0)


def test_cross_entropy_label_checks():
    with pytest.raises(InputError):
        T.cross_entropy(T.Tensor(np.zeros((2, 2))), [0, 2])
    with pytest.raises(ShapeError):
        T.cross_entropy(T.Tensor(np.zeros((2, 2))), [0])


@pytest.mark.parametrize("fn", [T.cross_entropy, T.complement_cross_entropy])
def test_classification_loss_gradients(rng, fn):
    x = T.Tensor(rng.standard_normal((6, 3)), requires_grad=True)
    y = rng.integers(0, 3, 6)
    fn(x, y).backward()
    assert rel_err(x.grad, numeric_grad(lambda: fn(T.Tensor(x.data), y).item(), x.data)) <= 1e-5


def test_complement_cross_entropy_value():
    logits = np.array([[2.0, 0.0, -1.0]])
    p = T.softmax_np(logits)[0]
    got = T.complement_cross_entropy(T.Tensor(logits), [0]).item()
    assert got == pytest.approx(-np.log(1 - p[0]), rel=1e-12)


def test_gradient_reversal_forward_and_backward(rng):
    x = T.Tensor(rng.standard_normal((4, 3)), requires_grad=True)
    y = T.gradient_reversal(x, 2.0)
    assert np.array_equal(y.data, x.data)
    T.total(y).backward()
    # d(sum x)/dx = 1, so the reversed gradient is -2 everywhere
    assert np.array_equal(x.grad, -2.0 * np.ones((4, 3)))


def test_gradient_reversal_zero_lambda_blocks_gradient(rng):
    x = T.Tensor(rng.standard_normal(5), requires_grad=True)
    T.total(T.gradient_reversal(x, 0.0)).backward()
    assert np.all(x.grad == 0.0)


def test_gradient_reversal_negative_lambda_rejected():
    with pytest.raises(InputError):
        T.gradient_reversal(T.Tensor([1.0]), -1.0)


def test_rbf_mmd2_singletons():
    v = T.rbf_mmd2(T.Tensor([[0.0]]), T.Tensor([[10.0]]), 1.0).item()
    assert abs(v - (2 - 2 * np.exp(-50.0))) <= 1e-12
    assert T.rbf_mmd2(T.Tensor([[0.0]]), T.Tensor([[0.0]]), 1.0).item() == 0.0


def test_rbf_mmd2_gradient(rng):
    x = T.Tensor(rng.standard_normal((5, 2)), requires_grad=True)
    y = T.Tensor(rng.standard_normal((4, 2)) + 1.0, requires_grad=True)
    T.rbf_mmd2(x, y, 0.8).backward()
    fx = lambda: T.rbf_mmd2(T.Tensor(x.data), T.Tensor(y.data), 0.8).item()
    assert rel_err(x.grad, numeric_grad(fx, x.data)) <= 1e-5
    assert rel_err(y.grad, numeric_grad(fx, y.data)) <= 1e-5


def test_adam_zero_gradient_leaves_parameters():
    p = [np.array([1.0, -2.0])]
    new, _ = T.adam_step(p, [np.zeros(2)], T.AdamState(), 1e-3)
    assert np.array_equal(new[0], p[0])


def test_adam_first_step_moves_by_lr():
    new, state = T.adam_step([np.array([0.5])], [np.array([1.0])], T.AdamState(), 1e-3)
    assert new[0][0] == pytest.approx(0.5 - 1e-3, abs=1e-9)
    assert state.t == 1


def test_adam_rejects_nonfinite_gradient():
    with pytest.raises(TrainingError):
        T.adam_step([np.zeros(1)], [np.array([np.nan])], T.AdamState(), 1e-3)


def test_adam_runs_are_bit_identical(rng):
    start = rng.standard_normal((3, 3))

    def run():
        p = T.Tensor(start.copy(), requires_grad=True)
        opt = T.Adam([p], lr=1e-2)
        for _ in range(20):
            opt.zero_grad()
            T.total(T.mul(p, p)).backward()
            opt.step()
        return p.data

    assert np.array_equal(run(), run())


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6))
def test_softmax_rows_sum_to_one(values):
    p = T.softmax_np(np.array([values]))
    assert abs(p.sum() - 1.0) < 1e-12
    assert np.all(p >= 0)
