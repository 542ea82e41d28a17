import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dtfnet.errors import LabelOutOfRange, ShapeMismatch
from dtfnet.nn import (
    ParamStore,
    conv1d_temporal,
    conv2d_3x3,
    dynamic_conv1d,
    global_avg_pool,
    linear,
    rms_channel_norm,
    softmax_cross_entropy,
)
from dtfnet.oracles import conv1d_temporal_loop, conv2d_3x3_loop


def test_conv2d_center_tap_identity(rng):
    x = rng.normal(size=(1, 1, 2, 3, 3))
    w = np.zeros((1, 1, 3, 3))
    w[0, 0, 1, 1] = 1.0
    np.testing.assert_array_equal(conv2d_3x3(x, w, np.zeros(1)), x)


def test_conv2d_matches_loop(rng):
    x = rng.normal(size=(1, 2, 2, 4, 4))
    w, b = rng.normal(size=(3, 2, 3, 3)), rng.normal(size=3)
    assert np.max(np.abs(conv2d_3x3(x, w, b) - conv2d_3x3_loop(x, w, b))) < 1e-12


def test_conv2d_stride2_matches_loop(rng):
    x = rng.normal(size=(2, 2, 1, 5, 6))
    w, b = rng.normal(size=(2, 2, 3, 3)), rng.normal(size=2)
    out = conv2d_3x3(x, w, b, stride=2)
    assert out.shape == (2, 2, 1, 3, 3)
    assert np.max(np.abs(out - conv2d_3x3_loop(x, w, b, stride=2))) < 1e-12


def test_conv2d_frames_independent(rng):
    x = rng.normal(size=(1, 2, 3, 4, 4))
    w, b = rng.normal(size=(2, 2, 3, 3)), rng.normal(size=2)
    full = conv2d_3x3(x, w, b)
    np.testing.assert_allclose(full[:, :, 1:2], conv2d_3x3(x[:, :, 1:2], w, b), atol=1e-14)


def test_conv2d_bad_weight():
    with pytest.raises(ShapeMismatch):
        conv2d_3x3(np.zeros((1, 2, 1, 3, 3)), np.zeros((1, 3, 3, 3)), np.zeros(1))


def test_conv1d_identity_and_shift(rng):
    x = rng.normal(size=(1, 2, 5, 1, 1))
    w = np.zeros((2, 3))
    w[:, 1] = 1.0
    np.testing.assert_array_equal(conv1d_temporal(x, w, np.zeros(2)), x)
    w = np.zeros((2, 3))
    w[:, 0] = 1.0  # picks frame t-1
    out = conv1d_temporal(x, w, np.zeros(2))
    np.testing.assert_array_equal(out[:, :, 1:], x[:, :, :-1])
    assert np.all(out[:, :, 0] == 0)


def test_conv1d_matches_loop(rng):
    x = rng.normal(size=(2, 3, 6, 2, 3))
    w, b = rng.normal(size=(3, 3)), rng.normal(size=3)
    assert np.max(np.abs(conv1d_temporal(x, w, b) - conv1d_temporal_loop(x, w, b))) < 1e-12


def test_dynamic_conv1d_matches_shared_kernel(rng):
    x = rng.normal(size=(1, 2, 7, 2, 2))
    w = rng.normal(size=(2, 3))
    signals = x.transpose(0, 3, 4, 1, 2)
    kernels = np.broadcast_to(w, signals.shape[:-1] + (3,))
    out = dynamic_conv1d(signals, kernels).transpose(0, 3, 4, 1, 2)
    np.testing.assert_allclose(out, conv1d_temporal(x, w, np.zeros(2)), atol=1e-14)


def test_linear_zero_input_gives_bias():
    out = linear(np.zeros((3, 4)), np.ones((2, 4)), np.array([1.0, -1.0]))
    np.testing.assert_array_equal(out, [[1, -1]] * 3)


def test_linear_matches_reference(rng):
    x, w, b = rng.normal(size=(3, 4)), rng.normal(size=(2, 4)), rng.normal(size=2)
    assert np.max(np.abs(linear(x, w, b) - (x @ w.T + b))) < 1e-12


def test_rms_norm_constant_channel():
    c = 0.7
    out = rms_channel_norm(np.full((1, 1, 2, 2, 2), c), np.ones(1))
    np.testing.assert_allclose(out, c / math.sqrt(c * c + 1e-6), rtol=1e-15)


def test_rms_norm_zero_input():
    assert np.all(rms_channel_norm(np.zeros((1, 2, 2, 2, 2)), np.ones(2)) == 0)


def test_rms_norm_scale_invariant(rng):
    x = rng.normal(size=(2, 3, 2, 3, 3))
    g = rng.normal(size=3)
    a, b = rms_channel_norm(x, g), rms_channel_norm(10 * x, g)
    assert np.max(np.abs(a - b) / np.abs(a)) < 1e-6


def test_global_avg_pool(rng):
    x = rng.normal(size=(2, 3, 2, 2, 4))
    ref = np.array([[x[n, c].sum() / x[n, c].size for c in range(3)] for n in range(2)])
    assert np.max(np.abs(global_avg_pool(x) - ref)) < 1e-12


def test_cross_entropy_uniform_logits():
    assert abs(float(softmax_cross_entropy(np.zeros((5, 4)), [0, 1, 2, 3, 0])) - math.log(4)) < 1e-15


def test_cross_entropy_bad_label():
    with pytest.raises(LabelOutOfRange):
        softmax_cross_entropy(np.zeros((2, 3)), [0, 3])


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 50))
def test_cross_entropy_nonnegative(seed, scale):
    r = np.random.default_rng(seed)
    logits = r.normal(scale=scale, size=(4, 5))
    assert float(softmax_cross_entropy(logits, r.integers(0, 5, 4))) >= 0


def test_param_store_shape_checked():
    p = ParamStore({"a": np.zeros(3)})
    with pytest.raises(ShapeMismatch):
        p["a"] = np.zeros(4)
    with pytest.raises(KeyError):
        p.add("a", np.zeros(3))


def test_param_store_sorted_and_copy():
    p = ParamStore({"b": [1.0], "a": [2.0]})
    assert p.names() == ["a", "b"]
    q = p.copy()
    q["a"] = [5.0]
    assert p["a"][0] == 2.0
    assert not p.equal(q)
    assert p.num_params() == 2
