import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stalesgd.nn import (
    Layer,
    NetworkSpec,
    ParamSegment,
    ShapeError,
    backward_segment,
    encode_targets,
    finite_diff_check,
    forward,
    forward_segment,
    full_gradient,
    init_params,
    loss_and_output_grad,
    per_sample_grad_norms,
)


def reference_forward(spec, params, X):
    """Per-sample loop with explicit matrices; shares nothing with the engine."""
    out = []
    for n in range(X.shape[1]):
        h = X[:, n].copy()
        pos = 0
        for layer in spec.layers:
            W = params[pos : pos + layer.n_in * layer.n_out].reshape(layer.n_out, layer.n_in)
            pos += layer.n_in * layer.n_out
            b = params[pos : pos + layer.n_out]
            pos += layer.n_out
            z = np.array([sum(W[i, j] * h[j] for j in range(layer.n_in)) + b[i] for i in range(layer.n_out)])
            h = {"tanh": np.tanh, "relu": lambda v: np.maximum(v, 0), "identity": lambda v: v}[layer.activation](z)
        out.append(h)
    return np.array(out).T


def segments(spec, cuts):
    bounds = list(zip([1, *[c + 1 for c in cuts]], [*cuts, spec.L]))
    return bounds


class TestSpec:
    def test_chain_checked(self):
        with pytest.raises(ValueError):
            NetworkSpec((Layer(3, 4), Layer(5, 2)))

    def test_sizes(self):
        spec = NetworkSpec.mlp([3, 4, 2])
        assert spec.n_params == 4 * 4 + 5 * 2
        assert spec.segment_slice(2, 2) == slice(16, 26)

    def test_unknown_loss(self):
        with pytest.raises(ValueError):
            NetworkSpec.mlp([2, 1], loss="hinge")


class TestInit:
    def test_deterministic(self):
        spec = NetworkSpec.mlp([5, 4, 3])
        assert init_params(spec, 7).tobytes() == init_params(spec, 7).tobytes()

    def test_seeds_differ(self):
        spec = NetworkSpec.mlp([5, 4, 3])
        assert not np.array_equal(init_params(spec, 1), init_params(spec, 2))

    def test_bias_zero_and_bound(self):
        spec = NetworkSpec.mlp([2, 1], output_activation="identity")
        w = init_params(spec, 3)
        assert w[2] == 0.0
        assert np.all(np.abs(w[:2]) <= math.sqrt(6 / 3))


class TestForward:
    def test_identity_layer(self):
        spec = NetworkSpec((Layer(3, 3, "identity"),), "half-squared-error")
        w = np.concatenate([np.eye(3).ravel(), np.zeros(3)])
        X = np.arange(6.0).reshape(3, 2)
        _, out = forward_segment(X, ParamSegment(1, 1, w), spec)
        np.testing.assert_array_equal(out, X)

    def test_relu_negative(self):
        spec = NetworkSpec((Layer(1, 1, "relu"),), "half-squared-error")
        _, out = forward_segment(np.array([[-1.0]]), ParamSegment(1, 1, np.array([1.0, 0.0])), spec)
        assert out[0, 0] == 0.0

    def test_shape_mismatch(self):
        spec = NetworkSpec.mlp([3, 2])
        with pytest.raises(ShapeError):
            forward_segment(np.zeros((4, 2)), ParamSegment(1, 1, init_params(spec, 0)), spec)

    def test_matches_loop_reference(self):
        spec = NetworkSpec.mlp([4, 5, 3, 2], activation="tanh")
        w = init_params(spec, 11) + 0.1
        X = np.random.default_rng(0).standard_normal((4, 6))
        h = X
        for p, q in segments(spec, [1, 2]):
            _, h = forward_segment(h, ParamSegment(p, q, w[spec.segment_slice(p, q)]), spec)
        np.testing.assert_allclose(h, reference_forward(spec, w, X), rtol=0, atol=1e-12)

    @settings(max_examples=25, deadline=None)
    @given(st.integers(0, 2**31), st.sets(st.integers(1, 3)))
    def test_segmented_equals_whole_bitwise(self, seed, cuts):
        spec = NetworkSpec.mlp([3, 4, 4, 3, 2], activation="relu")
        w = init_params(spec, seed)
        X = np.random.default_rng(seed).standard_normal((3, 5))
        h = X
        for p, q in segments(spec, sorted(cuts)):
            _, h = forward_segment(h, ParamSegment(p, q, w[spec.segment_slice(p, q)]), spec)
        assert h.tobytes() == forward(spec, w, X).tobytes()


class TestBackward:
    def test_hand_linear(self):
        spec = NetworkSpec((Layer(1, 1, "identity"),), "half-squared-error")
        trace, y = forward_segment(np.array([[2.0]]), ParamSegment(1, 1, np.array([3.0, 0.0])), spec)
        _, g = loss_and_output_grad(y, np.array([[0.0]]), spec.loss)
        gw, _ = backward_segment(trace, g, spec)
        assert gw[0] == 12.0

    def test_zero_upstream(self):
        spec = NetworkSpec.mlp([3, 4, 2])
        w = init_params(spec, 0)
        trace, y = forward_segment(np.ones((3, 2)), ParamSegment(1, 2, w), spec)
        gw, gin = backward_segment(trace, np.zeros_like(y), spec)
        assert not gw.any() and not gin.any()

    def test_missing_trace(self):
        with pytest.raises(KeyError):
            backward_segment(None, np.zeros((1, 1)), NetworkSpec.mlp([1, 1]))

    def test_uses_snapshot_weights(self):
        spec = NetworkSpec.mlp([3, 3, 2])
        w = init_params(spec, 1)
        seg = ParamSegment(1, 2, w.copy())
        X = np.random.default_rng(1).standard_normal((3, 4))
        y = np.array([0, 1, 1, 0])
        trace, out = forward_segment(X, seg, spec)
        seg.w += 1.0  # weights move on before the backward pass
        _, g = loss_and_output_grad(out, y, spec.loss)
        gw, _ = backward_segment(trace, g, spec)
        np.testing.assert_array_equal(gw, full_gradient(spec, w, X, y)[1])

    @pytest.mark.parametrize("seed", range(5))
    def test_chained_segments_match_monolithic(self, seed):
        spec = NetworkSpec.mlp([5, 6, 4, 3], activation="tanh")
        w = init_params(spec, seed) + 0.05
        rng = np.random.default_rng(seed)
        X, y = rng.standard_normal((5, 7)), rng.integers(0, 3, 7)
        cuts = [(1, 1), (2, 3)]
        traces, h = [], X
        for p, q in cuts:
            tr, h = forward_segment(h, ParamSegment(p, q, w[spec.segment_slice(p, q)]), spec)
            traces.append(tr)
        _, g = loss_and_output_grad(h, y, spec.loss)
        parts = []
        for tr in reversed(traces):
            gw, g = backward_segment(tr, g, spec)
            parts.insert(0, gw)
        ref = full_gradient(spec, w, X, y)[1]
        np.testing.assert_allclose(np.concatenate(parts), ref, rtol=1e-10, atol=1e-14)


class TestLoss:
    def test_uniform_softmax(self):
        value, _ = loss_and_output_grad(np.zeros((10, 3)), np.array([0, 4, 9]), "softmax-cross-entropy")
        assert value == pytest.approx(math.log(10), abs=1e-12)

    def test_hse_zero(self):
        y = np.random.default_rng(0).standard_normal((3, 4))
        value, g = loss_and_output_grad(y, y.copy(), "half-squared-error")
        assert value == 0.0 and not g.any()

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            loss_and_output_grad(np.zeros((2, 1)), np.zeros(1), "hinge")

    def test_softmax_grad_central_differences(self):
        rng = np.random.default_rng(3)
        z = rng.standard_normal((5, 4))
        y = rng.integers(0, 5, 4)
        _, g = loss_and_output_grad(z, y, "softmax-cross-entropy")
        eps = 1e-6
        fd = np.zeros_like(z)
        for idx in np.ndindex(z.shape):
            zp, zm = z.copy(), z.copy()
            zp[idx] += eps
            zm[idx] -= eps
            fd[idx] = (loss_and_output_grad(zp, y, "softmax-cross-entropy")[0]
                       - loss_and_output_grad(zm, y, "softmax-cross-entropy")[0]) / (2 * eps)
        np.testing.assert_allclose(g, fd, rtol=0, atol=1e-6)


class TestFiniteDiff:
    def test_linear_quadratic(self):
        spec = NetworkSpec((Layer(4, 3, "identity"),), "half-squared-error")
        rng = np.random.default_rng(0)
        X = rng.standard_normal((4, 6))
        T = rng.standard_normal((3, 6))
        assert finite_diff_check(spec, init_params(spec, 0), X, T) < 1e-9

    def test_tanh_mlp(self):
        spec = NetworkSpec.mlp([8, 8, 4])
        rng = np.random.default_rng(1)
        X, y = rng.standard_normal((8, 5)), rng.integers(0, 4, 5)
        assert finite_diff_check(spec, init_params(spec, 1), X, y) < 1e-4

    def test_relu_away_from_kinks(self):
        spec = NetworkSpec.mlp([6, 7, 3], activation="relu")
        # first seed whose hidden pre-activations all sit at least 1e-3 from the kink
        for seed in range(100):
            w = init_params(spec, seed)
            rng = np.random.default_rng(seed)
            X, y = rng.standard_normal((6, 5)), rng.integers(0, 3, 5)
            z = w[:42].reshape(7, 6) @ X + w[42:49, None]
            if np.abs(z).min() > 1e-3:
                break
        assert finite_diff_check(spec, w, X, y) < 1e-4

    def test_rejects_bad_epsilon(self):
        spec = NetworkSpec.mlp([1, 1])
        with pytest.raises(ValueError):
            finite_diff_check(spec, init_params(spec, 0), np.ones((1, 1)), np.zeros(1, int), epsilon=0)


def test_per_sample_norms_match_loop():
    spec = NetworkSpec.mlp([4, 5, 3])
    w = init_params(spec, 4)
    rng = np.random.default_rng(4)
    X, y = rng.standard_normal((4, 6)), rng.integers(0, 3, 6)
    expected = [np.linalg.norm(full_gradient(spec, w, X[:, [n]], y[[n]])[1]) for n in range(6)]
    np.testing.assert_allclose(per_sample_grad_norms(spec, w, X, y), expected, rtol=1e-12)


def test_encode_targets_one_hot():
    spec = NetworkSpec.mlp([2, 3], loss="half-squared-error")
    np.testing.assert_array_equal(encode_targets(spec, np.array([2, 0])), [[0, 1], [0, 0], [1, 0]])
