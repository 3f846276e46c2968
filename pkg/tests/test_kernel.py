import numpy as np
import numpy.testing as npt
import pytest

from loralab import kernel as K
from loralab.errors import ConfigError, NumericError, ShapeError, StateError
from loralab.kernel import Param
from loralab.rng import RngState

F32 = np.float32


def triple_loop_matmul(a, b):
    """Independent oracle: naive loops, f64 accumulation, one rounding."""
    m, k = a.shape
    _, n = b.shape
    out = np.zeros((m, n), dtype=np.float64)
    for i in range(m):
        for j in range(n):
            acc = 0.0
            for t in range(k):
                acc += float(a[i, t]) * float(b[t, j])
            out[i, j] = acc
    return out.astype(F32)


def grad_rel_err(pairs):
    """Standard gradient-check metric: ||a - n|| / (||a|| + ||n||) over the
    concatenated (analytic, numeric) parameter vectors of one layer."""
    a = np.concatenate([np.asarray(x, np.float64).ravel() for x, _ in pairs])
    n = np.concatenate([np.asarray(y, np.float64).ravel() for _, y in pairs])
    return np.linalg.norm(a - n) / (np.linalg.norm(a) + np.linalg.norm(n) + 1e-12)


# ---------------------------------------------------------------------------
# matmul
# ---------------------------------------------------------------------------


def test_matmul_identity():
    a = np.array([[1, 2], [3, 4]], dtype=F32)
    npt.assert_array_equal(K.matmul(np.eye(2, dtype=F32), a), a)


def test_matmul_hand_sum():
    out = K.matmul(np.array([[1, 1]], dtype=F32), np.array([[2], [3]], dtype=F32))
    npt.assert_array_equal(out, np.array([[5]], dtype=F32))


def test_matmul_matches_triple_loop_oracle():
    rng = RngState(123)
    a = rng.normal((3, 4))
    b = rng.normal((4, 2))
    npt.assert_array_equal(K.matmul(a, b), triple_loop_matmul(a, b))


def test_matmul_shape_error_names_both_shapes():
    with pytest.raises(ShapeError, match=r"\(2, 3\).*\(2, 2\)"):
        K.matmul(np.zeros((2, 3), dtype=F32), np.zeros((2, 2), dtype=F32))


# ---------------------------------------------------------------------------
# linear
# ---------------------------------------------------------------------------


def test_linear_identity_weight():
    W = Param(np.eye(2, dtype=F32))
    b = Param(np.zeros(2, dtype=F32))
    out = K.linear(np.array([[1, 0]], dtype=F32), W, b)
    npt.assert_array_equal(out.value, np.array([[1, 0]], dtype=F32))


def test_linear_hand_case():
    # x W^T + b with x=[1,2], W=[[1,1],[0,1]], b=[1,1]:
    # row = [1*1+2*1, 1*0+2*1] + [1,1] = [4, 3]
    W = Param(np.array([[1, 1], [0, 1]], dtype=F32))
    b = Param(np.array([1, 1], dtype=F32))
    out = K.linear(np.array([[1, 2]], dtype=F32), W, b)
    npt.assert_array_equal(out.value, np.array([[4, 3]], dtype=F32))


def test_linear_zero_in_zero_out():
    W = Param(RngState(5).normal((3, 4)))
    b = Param(np.zeros(3, dtype=F32))
    out = K.linear(np.zeros((2, 4), dtype=F32), W, b)
    npt.assert_array_equal(out.value, np.zeros((2, 3), dtype=F32))


def test_linear_shape_error():
    W = Param(np.zeros((3, 4), dtype=F32))
    b = Param(np.zeros(3, dtype=F32))
    with pytest.raises(ShapeError):
        K.linear(np.zeros((2, 5), dtype=F32), W, b)


# ---------------------------------------------------------------------------
# conv1d
# ---------------------------------------------------------------------------


def test_conv1d_k1_identity_channel_map():
    x = RngState(7).normal((5, 3))
    kern = Param(np.eye(3, dtype=F32).reshape(3, 3, 1))
    b = Param(np.zeros(3, dtype=F32))
    out = K.conv1d(x, kern, b)
    npt.assert_array_equal(out.value, x)


def test_conv1d_hand_sliding_window():
    # K=[1,1,1], x=[1,2,3], zero padded: [0+1+2, 1+2+3, 2+3+0] = [3, 6, 5]
    x = np.array([[1], [2], [3]], dtype=F32)
    kern = Param(np.ones((1, 1, 3), dtype=F32))
    b = Param(np.zeros(1, dtype=F32))
    out = K.conv1d(x, kern, b)
    npt.assert_array_equal(out.value, np.array([[3], [6], [5]], dtype=F32))


def test_conv1d_zero_kernel_zero_output():
    x = RngState(9).normal((4, 2))
    kern = Param(np.zeros((2, 2, 3), dtype=F32))
    b = Param(np.zeros(2, dtype=F32))
    npt.assert_array_equal(K.conv1d(x, kern, b).value, np.zeros((4, 2), dtype=F32))


def test_conv1d_even_kernel_rejected():
    kern = Param(np.zeros((2, 2, 4), dtype=F32))
    b = Param(np.zeros(2, dtype=F32))
    with pytest.raises(ConfigError):
        K.conv1d(np.zeros((3, 2), dtype=F32), kern, b)


def test_conv1d_matches_sliding_window_oracle():
    rng = RngState(11)
    x = rng.normal((6, 3))
    kern = Param(rng.normal((2, 3, 3)))
    b = Param(rng.normal((2,)))
    out = K.conv1d(x, kern, b).value

    xp = np.zeros((8, 3), dtype=F32)
    xp[1:7] = x
    expected = np.zeros((6, 2), dtype=np.float64)
    for t in range(6):
        for o in range(2):
            acc = float(b.value[o])
            for c in range(3):
                for j in range(3):
                    acc += float(xp[t + j, c]) * float(kern.value[o, c, j])
            expected[t, o] = acc
    npt.assert_array_almost_equal(out, expected.astype(F32), decimal=6)


# ---------------------------------------------------------------------------
# losses and activations
# ---------------------------------------------------------------------------


def test_mse_zero_when_equal():
    x = RngState(3).normal((4, 2))
    assert K.mse(K.constant(x), x).value == 0.0


def test_mse_hand_value():
    assert K.mse(K.constant(np.array([0.0], dtype=F32)), np.array([2.0], dtype=F32)).value == 4.0


def test_mse_matches_loop_oracle():
    rng = RngState(17)
    a, b = rng.normal((5, 3)), rng.normal((5, 3))
    acc = 0.0
    for i in range(5):
        for j in range(3):
            acc += (float(a[i, j]) - float(b[i, j])) ** 2
    assert K.mse(K.constant(a), b).value == pytest.approx(acc / 15, rel=1e-12)


def test_mse_shape_error():
    with pytest.raises(ShapeError):
        K.mse(K.constant(np.zeros((2, 2), dtype=F32)), np.zeros((2, 3), dtype=F32))


def test_activation_values():
    x = np.array([[-2.0, 0.0, 3.0]], dtype=F32)
    npt.assert_array_equal(K.relu(x).value, [[0.0, 0.0, 3.0]])
    npt.assert_allclose(K.tanh(x).value, np.tanh(x), rtol=1e-6)
    npt.assert_allclose(K.softplus(x).value, np.log1p(np.exp(x.astype(np.float64))), rtol=1e-6)


# ---------------------------------------------------------------------------
# backward
# ---------------------------------------------------------------------------


def test_backward_hand_derived_linear_mse():
    # pred = x W^T + b, L = mean((pred - t)^2) over 4 entries.
    # dL/dpred = (pred - t)/2 ; dL/dW = dpred^T x ; dL/db = col sums.
    x = np.array([[1.0, 2.0], [3.0, -1.0]], dtype=F32)
    W = Param(np.array([[0.5, -1.0], [2.0, 0.0]], dtype=F32))
    b = Param(np.array([0.5, -0.5], dtype=F32))
    t = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=F32)

    pred = x @ W.value.T + b.value                      # [[-1.0, 1.5], [2.5, 5.5]]
    dpred = (pred - t) / 2.0                            # [[-0.5, 0.25], [0.75, 2.75]]
    expect_gW = dpred.T @ x
    expect_gb = dpred.sum(axis=0)

    loss = K.mse(K.linear(x, W, b), t)
    K.backward(loss)
    npt.assert_allclose(W.grad, expect_gW, rtol=1e-6)
    npt.assert_allclose(b.grad, expect_gb, rtol=1e-6)


def test_frozen_param_grad_stays_zero():
    x = RngState(21).normal((3, 4))
    W = Param(RngState(22).normal((2, 4)), trainable=False)
    b = Param(np.zeros(2, dtype=F32), trainable=False)
    loss = K.mse(K.linear(x, W, b), np.zeros((3, 2), dtype=F32))
    K.backward(loss)
    npt.assert_array_equal(W.grad, np.zeros_like(W.grad))
    npt.assert_array_equal(b.grad, np.zeros_like(b.grad))


def test_backward_without_forward_raises():
    with pytest.raises(StateError):
        K.backward(K.constant(np.zeros(3, dtype=F32)))


def test_backward_deterministic_bitwise():
    rng = RngState(33)
    x = rng.normal((4, 6))
    t = rng.normal((4, 3))
    grads = []
    for _ in range(2):
        W = Param(RngState(34).normal((3, 6)))
        b = Param(RngState(35).normal((3,)))
        loss = K.mse(K.tanh(K.linear(x, W, b)), t)
        K.backward(loss)
        grads.append((W.grad.copy(), b.grad.copy(), loss.value))
    assert grads[0][2] == grads[1][2]
    npt.assert_array_equal(grads[0][0], grads[1][0])
    npt.assert_array_equal(grads[0][1], grads[1][1])


def gradcheck_linear(seed):
    """Well-scaled check problem: pre-activations stay in tanh's smooth
    region so the finite-difference oracle is not noise-limited."""
    rng = RngState(seed)
    x = rng.normal((3, 4), std=2.0)
    W = Param(rng.normal((2, 4), std=0.15))
    b = Param(rng.normal((2,), std=0.05))
    t = rng.normal((3, 2), std=1.0)

    def loss_fn(_p=None):
        return K.mse(K.tanh(K.linear(x, W, b)), t).value

    K.backward(K.mse(K.tanh(K.linear(x, W, b)), t))
    return grad_rel_err([(p.grad, K.finite_diff_grad(loss_fn, p)) for p in (W, b)])


def gradcheck_conv(seed):
    rng = RngState(seed)
    x = rng.normal((5, 3), std=2.0)
    kern = Param(rng.normal((2, 3, 3), std=0.15))
    b = Param(rng.normal((2,), std=0.05))
    t = rng.normal((5, 2), std=1.0)

    def loss_fn(_p=None):
        return K.mse(K.tanh(K.conv1d(x, kern, b)), t).value

    K.backward(K.mse(K.tanh(K.conv1d(x, kern, b)), t))
    return grad_rel_err([(p.grad, K.finite_diff_grad(loss_fn, p)) for p in (kern, b)])


@pytest.mark.parametrize("seed", range(20))
def test_linear_grads_match_finite_differences(seed):
    assert gradcheck_linear(1000 + seed) < 1e-4


@pytest.mark.parametrize("seed", range(20))
def test_conv_grads_match_finite_differences(seed):
    assert gradcheck_conv(2000 + seed) < 1e-4


@pytest.mark.parametrize("op", [K.relu, K.tanh, K.softplus, K.exp])
def test_elementwise_grads_match_finite_differences(op):
    # magnitudes bounded away from zero so relu's kink is never crossed
    rng = RngState(77)
    signs = np.where(rng.uniform((3, 3)) < 0.5, -1.0, 1.0).astype(F32)
    p = Param(rng.uniform((3, 3), 0.3, 1.5) * signs)
    t = rng.normal((3, 3))

    def apply(_p=None):
        return K.mse(op(K.matmul_nt(K.constant(np.eye(3, dtype=F32)), p)), t).value

    K.backward(K.mse(op(K.matmul_nt(K.constant(np.eye(3, dtype=F32)), p)), t))
    fd = K.finite_diff_grad(apply, p)
    assert grad_rel_err([(p.grad, fd)]) < 1e-4


def test_repeat_rows_and_grad():
    # matmul_nt(I, x) passes x through transposed, so store the transpose
    x = Param(np.array([[1.0, 3.0], [2.0, 4.0]], dtype=F32))
    out = K.repeat_rows(K.matmul_nt(K.constant(np.eye(2, dtype=F32)), x), [2, 1])
    npt.assert_array_equal(out.value, [[1, 2], [1, 2], [3, 4]])
    K.backward(K.mse(out, np.zeros((3, 2), dtype=F32)))
    fd = K.finite_diff_grad(
        lambda _p: K.mse(
            K.repeat_rows(K.matmul_nt(K.constant(np.eye(2, dtype=F32)), x), [2, 1]),
            np.zeros((3, 2), dtype=F32),
        ).value,
        x,
    )
    assert grad_rel_err([(x.grad, fd)]) < 1e-4


# ---------------------------------------------------------------------------
# finite differences
# ---------------------------------------------------------------------------


def test_finite_diff_quadratic():
    p = Param(np.array([1.0, 2.0], dtype=F32))
    fd = K.finite_diff_grad(lambda q: float(np.sum(q.value.astype(np.float64) ** 2)), p)
    npt.assert_allclose(fd, [2.0, 4.0], atol=1e-6)


def test_finite_diff_constant_is_zero():
    p = Param(np.array([3.0, -1.0], dtype=F32))
    fd = K.finite_diff_grad(lambda q: 7.5, p)
    npt.assert_array_equal(fd, np.zeros(2, dtype=F32))


def test_finite_diff_cubic():
    p = Param(np.array([1.0], dtype=F32))
    fd = K.finite_diff_grad(lambda q: float(np.sum(q.value.astype(np.float64) ** 3)), p)
    npt.assert_allclose(fd, [3.0], atol=1e-4)


def test_finite_diff_rejects_bad_eps():
    with pytest.raises(ConfigError):
        K.finite_diff_grad(lambda q: 0.0, Param(np.zeros(1, dtype=F32)), eps=0.0)


def test_finite_diff_nonfinite_objective():
    p = Param(np.array([1.0], dtype=F32))
    with pytest.raises(NumericError):
        K.finite_diff_grad(lambda q: float("nan"), p)
