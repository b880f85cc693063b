import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from memvos.numerics import (
    ContractError,
    as_tensor,
    bilinear_resize,
    conv2d,
    gelu,
    hflip,
    layer_norm,
    linear,
    softmax,
)

GRID = np.array([[1, 2], [3, 4]], np.float32)[..., None]


class TestConv2d:
    def test_scaling_kernel(self):
        out = conv2d(GRID, np.full((1, 1, 1, 1), 2.0), np.zeros(1))
        np.testing.assert_array_equal(out[..., 0], [[2, 4], [6, 8]])

    def test_output_extents(self, rng):
        out = conv2d(rng.random((64, 64, 1)), rng.random((2, 2, 1, 4)), np.zeros(4), stride=2)
        assert out.shape == (32, 32, 4)

    def test_all_ones_stride_two(self):
        # hand sum 1 + 2 + 3 + 4
        out = conv2d(GRID, np.ones((2, 2, 1, 1)), np.zeros(1), stride=2)
        np.testing.assert_array_equal(out, [[[10.0]]])

    def test_channel_mismatch(self, rng):
        with pytest.raises(ContractError):
            conv2d(rng.random((4, 4, 2)), rng.random((1, 1, 3, 1)))

    def test_kernel_larger_than_input(self, rng):
        with pytest.raises(ContractError):
            conv2d(rng.random((2, 2, 1)), rng.random((3, 3, 1, 1)))

    @pytest.mark.parametrize("stride,pad,k", [(1, 0, 3), (2, 1, 3), (3, 2, 2), (1, 1, 1)])
    def test_matches_loop_oracle(self, rng, stride, pad, k):
        x = rng.standard_normal((7, 6, 2)).astype(np.float32)
        w = rng.standard_normal((k, k, 2, 3)).astype(np.float32)
        b = rng.standard_normal(3).astype(np.float32)
        np.testing.assert_allclose(conv2d(x, w, b, stride, pad), oracles.conv2d(x, w, b, stride, pad), atol=1e-5)

    @settings(max_examples=60, deadline=None)
    @given(h=st.integers(1, 12), w=st.integers(1, 12), kh=st.integers(1, 4), kw=st.integers(1, 4),
           stride=st.integers(1, 3), pad=st.integers(0, 2))
    def test_shape_formula(self, h, w, kh, kw, stride, pad):
        if kh > h + 2 * pad or kw > w + 2 * pad:
            return
        out = conv2d(np.ones((h, w, 1)), np.ones((kh, kw, 1, 2)), None, stride, pad)
        assert out.shape == ((h + 2 * pad - kh) // stride + 1, (w + 2 * pad - kw) // stride + 1, 2)


class TestGelu:
    def test_zero(self):
        assert gelu(np.zeros(1))[0] == 0

    def test_large(self):
        assert abs(gelu(np.array([10.0]))[0] - 10) < 1e-6

    def test_one(self):
        assert gelu(np.array([1.0]))[0] == pytest.approx(0.841345, abs=1e-5)

    def test_against_erf_oracle(self, rng):
        x = rng.uniform(-6, 6, 1000).astype(np.float32)
        expected = [oracles.gelu(float(v)) for v in x]
        np.testing.assert_allclose(gelu(x), expected, atol=1e-5)


class TestLayerNorm:
    def test_constant_row_gives_bias(self):
        out = layer_norm(np.full((3, 5), 7.0), np.ones(5), np.zeros(5))
        np.testing.assert_array_equal(out, 0)

    def test_unit_pair(self):
        out = layer_norm(np.array([[1.0, -1.0]]), np.ones(2), np.zeros(2), eps=0.0)
        np.testing.assert_allclose(out, [[1, -1]], atol=1e-7)

    def test_zero_gain(self, rng):
        bias = rng.standard_normal(4)
        out = layer_norm(rng.standard_normal((6, 4)), np.zeros(4), bias)
        np.testing.assert_allclose(out, np.broadcast_to(bias, (6, 4)), atol=1e-7)

    def test_normalizes(self, rng):
        out = layer_norm(rng.standard_normal((10, 32)) * 5 + 3, np.ones(32), np.zeros(32))
        np.testing.assert_allclose(out.mean(-1), 0, atol=1e-5)
        np.testing.assert_allclose(out.std(-1), 1, atol=1e-3)


class TestSoftmax:
    def test_symmetric(self):
        np.testing.assert_allclose(softmax([0.0, 0.0]), [0.5, 0.5])

    def test_singleton(self):
        assert softmax([123.0])[0] == 1.0

    def test_log_ratio(self):
        np.testing.assert_allclose(softmax([math.log(1), math.log(3)]), [0.25, 0.75], atol=1e-6)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(st.floats(-50, 50), min_size=1, max_size=20), st.floats(-100, 100))
    def test_sums_to_one_and_shift_invariant(self, row, c):
        row = np.array(row, np.float32)
        p = softmax(row)
        assert abs(p.sum() - 1) <= 1e-6
        assert (p > 0).all() or len(row) > 1
        np.testing.assert_allclose(softmax(row + np.float32(c)), p, atol=1e-6)


class TestBilinear:
    def test_same_size_identity(self, rng):
        x = rng.random((5, 7, 3)).astype(np.float32)
        np.testing.assert_array_equal(bilinear_resize(x, 5, 7), x)

    @pytest.mark.parametrize("shape", [(1, 1), (3, 9), (17, 4), (40, 40)])
    def test_constant(self, shape):
        out = bilinear_resize(np.full((6, 5, 2), 0.37, np.float32), *shape)
        assert (out == np.float32(0.37)).all()

    def test_half_pixel_upsample(self):
        # hand computation with half-pixel centres and edge clamping
        out = bilinear_resize(np.array([[0.0], [1.0]])[..., None], 4, 1)
        np.testing.assert_allclose(out[:, 0, 0], [0.0, 0.25, 0.75, 1.0], atol=1e-6)

    def test_downsample_average(self):
        out = bilinear_resize(np.array([[0.0, 1.0, 2.0, 3.0]])[..., None], 1, 2)
        np.testing.assert_allclose(out[0, :, 0], [0.5, 2.5], atol=1e-6)

    def test_bad_extent(self):
        with pytest.raises(ContractError):
            bilinear_resize(np.ones((2, 2)), 0, 3)

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 20), st.integers(1, 20))
    def test_round_trip_constant_exact(self, h, w, oh, ow):
        const = np.full((h, w, 1), 0.25, np.float32)
        assert (bilinear_resize(bilinear_resize(const, oh, ow), h, w) == const).all()

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 20), st.integers(1, 20), st.integers(1, 20))
    def test_round_trip_stays_in_range(self, h, w, oh, ow):
        # each output is a convex combination of inputs
        x = np.random.default_rng(h * 31 + w).random((h, w, 1)).astype(np.float32)
        back = bilinear_resize(bilinear_resize(x, oh, ow), h, w)
        assert np.abs(back - x).max() <= (x.max() - x.min()) + 1e-6

    @settings(max_examples=40, deadline=None)
    @given(st.integers(1, 20), st.integers(1, 20), st.sampled_from([1, 2, 3, 4]))
    def test_integer_upsample_round_trip_smoothing(self, h, w, factor):
        x = np.random.default_rng(h * 31 + w).random((h, w, 1)).astype(np.float32)
        back = bilinear_resize(bilinear_resize(x, h * factor, w * factor), h, w)
        assert np.abs(back - x).max() <= 0.5 * (x.max() - x.min()) + 1e-6


class TestHflip:
    def test_involution(self, rng):
        x = rng.random((4, 6, 3)).astype(np.float32)
        np.testing.assert_array_equal(hflip(hflip(x)), x)

    def test_pair(self):
        np.testing.assert_array_equal(hflip(np.array([[[1.0], [2.0]]]))[..., 0], [[2.0, 1.0]])

    def test_width_one(self, rng):
        x = rng.random((5, 1, 2))
        np.testing.assert_array_equal(hflip(x), x)


def test_linear_rows_independent_of_position(rng):
    x = rng.standard_normal((97, 33)).astype(np.float32)
    w = rng.standard_normal((33, 65)).astype(np.float32)
    perm = rng.permutation(97)
    np.testing.assert_array_equal(linear(x, w)[perm], linear(x[perm], w))


def test_as_tensor_contract():
    assert as_tensor(3.0).shape == (1,)
    with pytest.raises(ContractError):
        as_tensor(np.zeros((1, 1, 1, 1, 1)))
    with pytest.raises(ContractError):
        as_tensor(np.zeros((0, 3)))
