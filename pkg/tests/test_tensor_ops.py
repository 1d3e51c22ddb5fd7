"""Gradient and contract checks for the array substrate."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from textspot import nn
from textspot.nn import Parameter, Tensor, grad_check


RNG = np.random.default_rng(1234)


def _param(shape, scale=1.0):
    return Parameter(RNG.standard_normal(shape) * scale)


# ---------------------------------------------------------------- softmax


def test_softmax_uniform_logits():
    out = nn.softmax_axis(Tensor(np.array([1.0, 1.0, 1.0, 1.0])), axis=0)
    np.testing.assert_allclose(out.data, [0.25, 0.25, 0.25, 0.25], atol=1e-12)


def test_softmax_direct_evaluation():
    # exp-normalize of [0, ln 2] is [1/3, 2/3]
    out = nn.softmax_axis(Tensor(np.array([0.0, np.log(2.0)])), axis=0)
    np.testing.assert_allclose(out.data, [1.0 / 3.0, 2.0 / 3.0], atol=1e-12)


@pytest.mark.parametrize("c", [-100.0, -1.0, 0.0, 3.7, 1e6])
def test_softmax_shift_invariance(c):
    base = nn.softmax_axis(Tensor(np.array([5.0, 5.0])), axis=0)
    shifted = nn.softmax_axis(Tensor(np.array([5.0 + c, 5.0 + c])), axis=0)
    np.testing.assert_allclose(base.data, [0.5, 0.5], atol=1e-6)
    np.testing.assert_allclose(shifted.data, base.data, atol=1e-6)


def test_softmax_invalid_axis():
    with pytest.raises(ValueError):
        nn.softmax_axis(Tensor(np.zeros((2, 3))), axis=5)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(min_value=1, max_value=5),
    st.integers(min_value=2, max_value=30),
    st.integers(min_value=0, max_value=2**31 - 1),
)
def test_softmax_rows_sum_to_one(rows, cols, seed):
    x = np.random.default_rng(seed).normal(scale=10.0, size=(rows, cols))
    out = nn.softmax_axis(Tensor(x), axis=1)
    np.testing.assert_allclose(out.data.sum(axis=1), np.ones(rows), atol=1e-6)
    assert (out.data > 0).all()


def test_softmax_sums_100_random_per_shape_class():
    for shape, axis in [((16,), 0), ((8, 32), 1), ((4, 8, 8), 2)]:
        for i in range(100):
            x = np.random.default_rng(i * 7 + len(shape)).normal(scale=5.0, size=shape)
            out = nn.softmax_axis(Tensor(x), axis=axis).data
            np.testing.assert_allclose(out.sum(axis=axis), np.ones(out.sum(axis=axis).shape), atol=1e-6)


# ---------------------------------------------------------------- bilinear sampling


def test_bilinear_integer_lattice_exact():
    fmap = Parameter(RNG.standard_normal((5, 6, 3)))
    out = nn.bilinear_sample(fmap, Tensor(np.array([[2.0, 3.0]])))
    np.testing.assert_array_equal(out.data[0], fmap.data[2, 3])


def test_bilinear_halfway_blend():
    # 2x1 grid: sampling midway between the two cells averages them
    v = np.array([[[1.0, 5.0]], [[3.0, -1.0]]])  # shape (2, 1, 2)
    out = nn.bilinear_sample(Tensor(v), Tensor(np.array([[0.5, 0.0]])))
    np.testing.assert_allclose(out.data[0], (v[0, 0] + v[1, 0]) / 2.0, atol=1e-12)


def test_bilinear_border_clamp():
    fmap = Tensor(RNG.standard_normal((4, 4, 2)))
    inside = nn.bilinear_sample(fmap, Tensor(np.array([[0.0, 0.0]])))
    outside = nn.bilinear_sample(fmap, Tensor(np.array([[-5.0, 0.0]])))
    np.testing.assert_array_equal(inside.data, outside.data)


def test_bilinear_empty_points():
    fmap = Tensor(RNG.standard_normal((4, 4, 2)))
    out = nn.bilinear_sample(fmap, Tensor(np.zeros((0, 2))))
    assert out.data.shape == (0, 2)


def test_bilinear_grad_wrt_fmap_and_points():
    fmap = _param((4, 5, 3), scale=0.7)
    pts = Parameter(np.array([[1.3, 2.6], [0.2, 3.9], [2.5, 0.1]]))

    def f():
        sampled = nn.bilinear_sample(fmap, pts)
        return nn.sum_(nn.mul(sampled, sampled))

    assert grad_check(f, [fmap, pts], step=1e-6) < 1e-6


# ---------------------------------------------------------------- grad_check harness


def test_grad_check_linear_is_exact():
    w = _param((7,))

    def f():
        return nn.sum_(nn.mul(w, 3.0))

    assert grad_check(f, [w], step=1e-5) <= 1e-10


def test_grad_check_softmax_cross_entropy():
    logits = _param((8,))
    target = 3

    def f():
        logp = nn.log(nn.softmax_axis(logits, axis=0))
        return -logp[target]

    assert grad_check(f, [logits], step=1e-5) <= 1e-6


def test_grad_check_rejects_nonfinite():
    w = Parameter(np.array([-1.0]))

    def f():
        return nn.log(w)

    with pytest.raises(FloatingPointError):
        grad_check(f, [w])


# ---------------------------------------------------------------- op inventory gradients

def _check(f, params, tol=1e-4, step=1e-5):
    err = grad_check(f, params, step=step)
    assert err < tol, f"relative error {err}"


def test_grad_matmul():
    a, b = _param((3, 4)), _param((4, 5))
    ref = RNG.standard_normal((3, 5))
    _check(lambda: nn.sum_(nn.mul(nn.matmul(a, b), ref)), [a, b])


def test_grad_matmul_batched():
    a, b = _param((2, 3, 4)), _param((2, 4, 5))
    ref = RNG.standard_normal((2, 3, 5))
    _check(lambda: nn.sum_(nn.mul(nn.matmul(a, b), ref)), [a, b])


def test_grad_conv2d_stride1():
    x, w = _param((2, 5, 6, 3), 0.5), _param((3, 3, 3, 4), 0.5)
    _check(lambda: nn.sum_(nn.mul(nn.conv2d(x, w, stride=1, pad=1), 0.3)), [x, w])


def test_grad_conv2d_stride2():
    x, w = _param((1, 7, 9, 2), 0.5), _param((3, 3, 2, 3), 0.5)
    ref = RNG.standard_normal((1, 4, 5, 3))
    _check(lambda: nn.sum_(nn.mul(nn.conv2d(x, w, stride=2, pad=1), ref)), [x, w])


def test_conv2d_shape_ceil_division():
    x = Tensor(np.zeros((1, 7, 9, 2)))
    w = Tensor(np.zeros((3, 3, 2, 3)))
    assert nn.conv2d(x, w, stride=2, pad=1).shape == (1, 4, 5, 3)


def test_grad_add_scale_mean():
    a, b = _param((4, 3)), _param((3,))
    _check(lambda: nn.mean(nn.mul(nn.add(a, b), 2.5)), [a, b])


def test_grad_elementwise_max():
    a, b = _param((6,)), _param((6,))
    _check(lambda: nn.sum_(nn.maximum(a, b)), [a, b])


def test_grad_embedding_lookup():
    e = _param((9, 4))
    ids = np.array([1, 4, 4, 0])
    ref = RNG.standard_normal((4, 4))
    _check(lambda: nn.sum_(nn.mul(nn.embedding(e, ids), ref)), [e])


def test_grad_l2_normalize():
    x = _param((5,), 2.0)
    ref = RNG.standard_normal(5)
    _check(lambda: nn.sum_(nn.mul(nn.l2_normalize(x, axis=0), ref)), [x])


def test_l2_normalize_zero_vector_is_zero():
    out = nn.l2_normalize(Tensor(np.zeros(4)), axis=0)
    np.testing.assert_array_equal(out.data, np.zeros(4))


def test_grad_cosine_similarity():
    a, b = _param((6,)), _param((6,))
    _check(lambda: nn.cosine_similarity(a, b, axis=0), [a, b])


def test_cosine_parallel_and_zero():
    v = np.array([1.0, 2.0, -3.0])
    assert nn.cosine_similarity(Tensor(v), Tensor(2.0 * v), axis=0).item() == pytest.approx(1.0, abs=1e-9)
    assert nn.cosine_similarity(Tensor(v), Tensor(np.zeros(3)), axis=0).item() == 0.0


def test_grad_layer_norm():
    x, g, b = _param((3, 5)), Parameter(np.ones(5)), Parameter(np.zeros(5))
    ref = RNG.standard_normal((3, 5))
    _check(lambda: nn.sum_(nn.mul(nn.layer_norm(x, g, b), ref)), [x, g, b])


def test_grad_relu_sigmoid_log_exp():
    x = _param((7,), 0.8)
    _check(lambda: nn.sum_(nn.relu(x)), [x])
    _check(lambda: nn.sum_(nn.sigmoid(x)), [x])
    _check(lambda: nn.sum_(nn.exp(x)), [x])
    y = Parameter(np.abs(RNG.standard_normal(7)) + 0.5)
    _check(lambda: nn.sum_(nn.log(y)), [y])


def test_grad_softmax_axis_op():
    x = _param((4, 6))
    ref = RNG.standard_normal((4, 6))
    _check(lambda: nn.sum_(nn.mul(nn.softmax_axis(x, axis=1), ref)), [x])


def test_grad_logsumexp():
    x = _param((5,))
    _check(lambda: nn.logsumexp(x, axis=0), [x])


def test_logsumexp_handles_masked_terms():
    x = np.array([1.0, -np.inf, 2.0])
    expected = np.log(np.exp(1.0) + np.exp(2.0))
    assert nn.logsumexp(Tensor(x), axis=0).item() == pytest.approx(expected, abs=1e-12)


def test_grad_transpose_reshape_getitem():
    x = _param((3, 4))
    ref_t = RNG.standard_normal((4, 3))
    ref_r = RNG.standard_normal((2, 6))
    _check(lambda: nn.sum_(nn.mul(nn.transpose(x, (1, 0)), ref_t)), [x])
    _check(lambda: nn.sum_(nn.mul(nn.reshape(x, (2, 6)), ref_r)), [x])
    _check(lambda: nn.sum_(x[1:, :2]), [x])


def test_grad_accumulates_over_shared_use():
    x = Parameter(np.array([2.0]))
    y = nn.add(nn.mul(x, 3.0), nn.mul(x, x))  # 3x + x^2
    y.backward()
    np.testing.assert_allclose(x.grad, [3.0 + 2.0 * 2.0])


def test_forward_values_are_finite_after_ops():
    x = Tensor(RNG.standard_normal((4, 4)))
    for op in (lambda t: nn.relu(t), lambda t: nn.sigmoid(t), lambda t: nn.softmax_axis(t, 1)):
        assert np.isfinite(op(x).data).all()


# ---------------------------------------------------------------- transformer block


def test_transformer_block_identity_at_init():
    from textspot.nn import TransformerBlock

    rng = np.random.default_rng(0)
    block = TransformerBlock(16, 4, rng)
    x = Tensor(rng.standard_normal((2, 5, 16)))
    out = block(x)
    np.testing.assert_allclose(out.data, x.data, atol=1e-12)
    pos = np.random.default_rng(1).standard_normal((5, 16))
    np.testing.assert_allclose(block(x, pos=pos).data, x.data, atol=1e-12)


def test_transformer_block_grad():
    from textspot.nn import TransformerBlock

    rng = np.random.default_rng(3)
    block = TransformerBlock(8, 2, rng)
    # perturb the zero-init projections so the test exercises a non-identity map
    for p in block.parameters():
        p.data = p.data + 0.05 * rng.standard_normal(p.data.shape)
    x = Parameter(rng.standard_normal((1, 4, 8)) * 0.5)
    ref = rng.standard_normal((1, 4, 8))

    def f():
        return nn.sum_(nn.mul(block(x), ref))

    params = [x] + block.parameters()
    assert grad_check(f, params, step=1e-5) < 1e-4
