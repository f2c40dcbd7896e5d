import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from dain.core import (
    Parameter,
    conv2d,
    conv2d_backward,
    conv3d_depthwise,
    conv3d_depthwise_backward,
    dense,
    dense_backward,
    dropout,
    dropout_backward,
    grad_check,
    make_rng,
    maxpool2d,
    maxpool2d_backward,
    relu,
    relu_backward,
    sgd_momentum_step,
    softmax_cross_entropy,
    softmax_cross_entropy_backward,
)
from dain.core.io import decode_tensor, encode_tensor
from dain.errors import DimensionError, NumericError, StateError
from oracles import conv2d_loops, conv3d_loops, maxpool_scan

SEEDS = range(10)


class TestConv2d:
    def test_identity_kernel(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        out = conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1))
        np.testing.assert_array_equal(out, x)

    def test_all_ones_kernel_sums(self):
        x = np.array([[[1.0, 2.0], [3.0, 4.0]]])
        out = conv2d(x, np.ones((1, 1, 2, 2)), np.zeros(1))
        np.testing.assert_array_equal(out, [[[10.0]]])

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (3, 2)])
    def test_matches_loop_oracle(self, rng, stride, pad):
        x = rng.standard_normal((3, 8, 8))
        k = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        got = conv2d(x, k, b, stride=stride, pad=pad)
        np.testing.assert_allclose(got, conv2d_loops(x, k, b, stride, pad), atol=1e-5)

    def test_float32_matches_oracle(self, rng):
        x = rng.standard_normal((3, 8, 8)).astype(np.float32)
        k = rng.standard_normal((4, 3, 3, 3)).astype(np.float32)
        b = np.zeros(4, np.float32)
        got = conv2d(x, k, b, pad=1)
        assert got.dtype == np.float32
        np.testing.assert_allclose(got, conv2d_loops(x, k, b, 1, 1), atol=1e-5)

    def test_channel_mismatch(self, rng):
        with pytest.raises(DimensionError):
            conv2d(rng.standard_normal((2, 5, 5)), np.ones((1, 3, 3, 3)), np.zeros(1))

    def test_centered_identity_same_padding(self, rng):
        x = rng.standard_normal((2, 7, 7))
        for k in (1, 3, 5):
            ker = np.zeros((2, 2, k, k))
            ker[0, 0, k // 2, k // 2] = 1
            ker[1, 1, k // 2, k // 2] = 1
            np.testing.assert_array_equal(conv2d(x, ker, np.zeros(2), pad=(k - 1) // 2), x)

    def test_backward_zero_grad(self, rng):
        x = rng.standard_normal((2, 5, 5))
        k = rng.standard_normal((3, 2, 3, 3))
        gi, gk, gb = conv2d_backward(np.zeros((3, 3, 3)), x, k)
        assert not gi.any() and not gk.any() and not gb.any()

    def test_backward_identity_kernel(self, rng):
        x = rng.standard_normal((1, 4, 4))
        g = rng.standard_normal((1, 4, 4))
        gi, _, gb = conv2d_backward(g, x, np.ones((1, 1, 1, 1)))
        np.testing.assert_array_equal(gi, g)
        assert gb[0] == pytest.approx(g.sum())

    def test_backward_requires_cache(self):
        with pytest.raises(StateError):
            conv2d_backward(np.zeros((1, 2, 2)), None, np.ones((1, 1, 1, 1)))

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (1, 2), (2, 1), (1, 3)])
    def test_backward_shortcuts_agree(self, rng, stride, pad):
        # cached columns, the transposed-conv input gradient and the scatter path agree
        x = rng.standard_normal((2, 3, 7, 7))
        k = rng.standard_normal((4, 3, 3, 3))
        out, cols = conv2d(x, k, np.zeros(4), stride, pad, return_cols=True)
        g = rng.standard_normal(out.shape)
        fresh = conv2d_backward(g, x, k, stride, pad)
        cached = conv2d_backward(g, x, k, stride, pad, cols=cols)
        for a, b in zip(fresh, cached):
            np.testing.assert_array_equal(a, b)
        no_input = conv2d_backward(g, x, k, stride, pad, cols=cols, input_grad=False)
        assert no_input[0] is None
        np.testing.assert_array_equal(no_input[1], fresh[1])
        np.testing.assert_array_equal(no_input[2], fresh[2])
        # input gradient by linearity: <g, conv(e_i)> summed over a basis is dx
        ref = np.zeros_like(x)
        for i in np.ndindex(x.shape):
            e = np.zeros_like(x)
            e[i] = 1.0
            ref[i] = (g * conv2d(e, k, np.zeros(4), stride, pad)).sum()
        np.testing.assert_allclose(fresh[0], ref, atol=1e-10)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradcheck(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((2, 3, 6, 6))
        k = r.standard_normal((4, 3, 3, 3))
        b = r.standard_normal(4)
        w = r.standard_normal((2, 4, 3, 3))

        def fn(x, k, b):
            out = conv2d(x, k, b, stride=2, pad=1)
            return (w * out).sum(), conv2d_backward(w, x, k, stride=2, pad=1)

        assert grad_check(fn, [x, k, b], eps=1e-2, random_state=seed) < 1e-3


class TestRelu:
    def test_values(self):
        np.testing.assert_array_equal(relu(np.array([-1.0, 0.0, 2.0])), [0, 0, 2])

    def test_tie_at_zero_has_zero_gradient(self):
        g = relu_backward(np.ones(3), np.array([-1.0, 0.0, 2.0]))
        np.testing.assert_array_equal(g, [0, 0, 1])

    def test_positive_is_identity(self, rng):
        x = rng.uniform(0.1, 2, 10)
        np.testing.assert_array_equal(relu(x), x)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradcheck_away_from_kink(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal(50)
        x[np.abs(x) < 1e-3] = 0.5
        w = r.standard_normal(50)
        fn = lambda x: ((w * relu(x)).sum(), [relu_backward(w, x)])
        assert grad_check(fn, [x], eps=1e-6, n_coords=None, skip_kinks=False) < 1e-3


class TestMaxPool:
    def test_simple(self):
        out, _ = maxpool2d(np.array([[[1.0, 2.0], [3.0, 4.0]]]), 2)
        np.testing.assert_array_equal(out, [[[4.0]]])

    def test_constant_routes_to_first_cell(self):
        x = np.full((1, 4, 4), 3.0)
        out, idx = maxpool2d(x, 2)
        np.testing.assert_array_equal(out, np.full((1, 2, 2), 3.0))
        g = maxpool2d_backward(np.ones((1, 2, 2)), idx, x.shape, 2)
        expected = np.zeros((1, 4, 4))
        expected[0, ::2, ::2] = 1
        np.testing.assert_array_equal(g, expected)

    @pytest.mark.parametrize("window,stride", [(2, 2), (3, 1), (3, 2)])
    def test_matches_scan(self, rng, window, stride):
        x = rng.standard_normal((3, 9, 9))
        out, _ = maxpool2d(x, window, stride)
        np.testing.assert_array_equal(out, maxpool_scan(x, window, stride))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradcheck(self, seed):
        r = np.random.default_rng(seed)
        x = r.standard_normal((2, 2, 6, 6))
        w = r.standard_normal((2, 2, 2, 2))

        def fn(x):
            out, idx = maxpool2d(x, 3, 2)
            return (w * out).sum(), [maxpool2d_backward(w, idx, x.shape, 3, 2)]

        assert grad_check(fn, [x], eps=1e-6, n_coords=None) < 1e-3


class TestDense:
    def test_identity(self, rng):
        x = rng.standard_normal(4)
        np.testing.assert_array_equal(dense(x, np.eye(4), np.zeros(4)), x)

    def test_zero_weights(self):
        b = np.array([1.0, -2.0])
        np.testing.assert_array_equal(dense(np.ones(3), np.zeros((2, 3)), b), b)

    def test_mismatch(self):
        with pytest.raises(DimensionError):
            dense(np.ones(3), np.zeros((2, 4)), np.zeros(2))

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradcheck(self, seed):
        r = np.random.default_rng(seed)
        x, wt, b = r.standard_normal((3, 5)), r.standard_normal((4, 5)), r.standard_normal(4)
        g = r.standard_normal((3, 4))
        fn = lambda x, wt, b: ((g * dense(x, wt, b)).sum(), dense_backward(g, x, wt))
        assert grad_check(fn, [x, wt, b], eps=1e-6, n_coords=None) < 1e-3


class TestSoftmaxCrossEntropy:
    def test_uniform(self):
        loss, probs = softmax_cross_entropy(np.array([0.0, 0.0]), 0)
        assert loss == pytest.approx(0.693147, abs=1e-6)
        np.testing.assert_allclose(probs, [0.5, 0.5])

    def test_stabilised(self):
        loss, probs = softmax_cross_entropy(np.array([1000.0, 0.0]), 0)
        assert np.isfinite(loss) and loss == pytest.approx(0.0, abs=1e-12)
        assert np.all(np.isfinite(probs))

    def test_label_range(self):
        with pytest.raises(ValueError):
            softmax_cross_entropy(np.zeros(3), 3)

    @given(arrays(np.float64, st.integers(1, 12),
                  elements=st.floats(-1e4, 1e4, allow_nan=False)))
    @settings(max_examples=200, deadline=None)
    def test_probs_form_distribution(self, logits):
        _, probs = softmax_cross_entropy(logits, 0)
        assert np.all(probs >= 0)
        assert abs(probs.sum() - 1) <= 1e-6

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradcheck(self, seed):
        r = np.random.default_rng(seed)
        z = r.standard_normal(8)
        label = int(r.integers(8))

        def fn(z):
            loss, p = softmax_cross_entropy(z, label)
            return loss, [softmax_cross_entropy_backward(p, label)]

        assert grad_check(fn, [z], eps=1e-6, n_coords=None) < 1e-3


class TestDropout:
    def test_rate_zero_identity(self, rng):
        x = rng.standard_normal(10)
        out, _ = dropout(x, 0.0, make_rng(0), training=True)
        np.testing.assert_array_equal(out, x)

    def test_inference_identity(self, rng):
        x = rng.standard_normal(10)
        out, mask = dropout(x, 0.7, make_rng(0), training=False)
        np.testing.assert_array_equal(out, x)
        assert mask is None

    def test_seeded_mask_and_mean(self):
        x = np.ones(100_000)
        a, ma = dropout(x, 0.5, make_rng(42), training=True)
        b, mb = dropout(x, 0.5, make_rng(42), training=True)
        np.testing.assert_array_equal(ma, mb)
        assert abs(a.mean() - 1.0) < 0.02
        np.testing.assert_array_equal(dropout_backward(np.ones_like(x), ma), ma)

    def test_rate_one_rejected(self):
        with pytest.raises(ValueError):
            dropout(np.ones(3), 1.0, make_rng(0), True)


class TestConv3dDepthwise:
    def test_center_one_identity(self, rng):
        s = rng.standard_normal((3, 4, 5, 5))
        k = np.zeros((3, 3, 3, 3))
        k[:, 1, 1, 1] = 1
        np.testing.assert_array_equal(conv3d_depthwise(s, k), s)

    def test_zero_kernel(self, rng):
        s = rng.standard_normal((2, 3, 4, 4))
        assert not conv3d_depthwise(s, np.zeros((2, 3, 3, 3))).any()

    def test_bad_kernel_shape(self, rng):
        with pytest.raises(DimensionError):
            conv3d_depthwise(rng.standard_normal((2, 3, 4, 4)), np.zeros((2, 3, 3, 2)))

    def test_matches_loops(self, rng):
        s = rng.standard_normal((2, 4, 5, 6))
        k = rng.standard_normal((2, 3, 3, 3))
        np.testing.assert_allclose(conv3d_depthwise(s, k), conv3d_loops(s, k), atol=1e-5)

    @pytest.mark.parametrize("seed", SEEDS)
    def test_gradcheck(self, seed):
        r = np.random.default_rng(seed)
        s = r.standard_normal((2, 2, 4, 3, 3))
        k = r.standard_normal((2, 3, 3, 3))
        w = r.standard_normal(s.shape)
        fn = lambda s, k: ((w * conv3d_depthwise(s, k)).sum(),
                           conv3d_depthwise_backward(w, s, k))
        assert grad_check(fn, [s, k], eps=1e-6, random_state=seed) < 1e-3


class TestMomentum:
    def test_zero_gradient(self):
        p = Parameter(np.array([1.0, 2.0]))
        sgd_momentum_step([p], 0.1, 0.9)
        np.testing.assert_array_equal(p.value, [1.0, 2.0])

    def test_plain_step(self):
        p = Parameter(np.array([1.0, 2.0]))
        p.gradient[:] = [0.5, -1.0]
        sgd_momentum_step([p], 1.0, 0.0)
        np.testing.assert_array_equal(p.value, [0.5, 3.0])
        assert not p.gradient.any()

    def test_two_steps_unrolled(self):
        g, lr = np.array([1.0, -2.0]), 0.1
        p = Parameter(np.zeros(2))
        for _ in range(2):
            p.gradient[:] = g
            sgd_momentum_step([p], lr, 0.9)
        np.testing.assert_allclose(p.value, -lr * g - lr * 1.9 * g, rtol=1e-12)

    def test_learn_rate_scale(self):
        p = Parameter(np.zeros(1), learn_rate_scale=10.0)
        p.gradient[:] = 1.0
        sgd_momentum_step([p], 0.01, 0.0)
        assert p.value[0] == pytest.approx(-0.1)

    def test_frozen_bitwise_unchanged(self, rng):
        p = Parameter(rng.standard_normal(5), frozen=True)
        p.velocity[:] = rng.standard_normal(5)
        v0, w0 = p.value.copy(), p.velocity.copy()
        p.gradient[:] = 3.0
        sgd_momentum_step([p], 0.5, 0.9)
        assert p.value.tobytes() == v0.tobytes()
        assert p.velocity.tobytes() == w0.tobytes()


class TestGradCheck:
    def test_linear_map_is_exact(self, rng):
        a = rng.standard_normal(6)
        x = rng.standard_normal(6)
        assert grad_check(lambda x: (a @ x, [a.copy()]), [x], eps=1e-3, n_coords=None) < 1e-5

    def test_zero_gradient(self, rng):
        x = rng.standard_normal(4)
        assert grad_check(lambda x: (1.0, [np.zeros(4)]), [x]) == 0.0

    def test_non_finite_loss(self):
        with pytest.raises(NumericError):
            grad_check(lambda x: (np.nan, [np.zeros(1)]), [np.zeros(1)])


class TestDait:
    def test_roundtrip(self, rng):
        x = rng.standard_normal((2, 3, 4)).astype(np.float32)
        buf = encode_tensor(x)
        assert buf[:4] == b"DAIT" and buf[4] == 3
        assert int.from_bytes(buf[5:9], "little") == 2
        assert len(buf) == 5 + 12 + 4 * 24
        np.testing.assert_array_equal(decode_tensor(buf), x)

    def test_scalar_and_bad_magic(self):
        np.testing.assert_array_equal(decode_tensor(encode_tensor(np.float32(2.5))), 2.5)
        with pytest.raises(ValueError):
            decode_tensor(b"XXXX\x00")
