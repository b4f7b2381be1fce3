import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from memtrack.reference import naive_attend, naive_bilinear, naive_conv2d
from memtrack.tensor import (
    AttentionParams,
    attend,
    bilinear_resize,
    bilinear_sample,
    conv2d,
    deform_conv2d,
    dump_tensor,
    load_tensor,
    softmax,
)

finite = st.floats(-50, 50, allow_nan=False)


class TestSoftmax:
    def test_uniform(self):
        np.testing.assert_allclose(softmax(np.zeros(3)), [1 / 3] * 3, atol=1e-15)

    def test_ln2(self):
        np.testing.assert_allclose(softmax(np.array([np.log(2), 0.0])), [2 / 3, 1 / 3], atol=1e-15)

    def test_dominance_no_overflow(self):
        out = softmax(np.array([100.0, 0.0]))
        assert np.all(np.isfinite(out))
        assert out[1] < 1e-40 and out[1] > 0
        assert out[0] == 1.0

    def test_bad_axis(self):
        with pytest.raises(ValueError):
            softmax(np.zeros((2, 3)), axis=2)

    @given(arrays(np.float64, st.tuples(st.integers(1, 5), st.integers(1, 6)), elements=finite),
           st.integers(0, 1), st.floats(-100, 100))
    def test_properties(self, v, axis, shift):
        out = softmax(v, axis)
        assert np.all(out > 0)
        np.testing.assert_allclose(out.sum(axis=axis), 1.0, atol=1e-9)
        np.testing.assert_allclose(softmax(v + shift, axis), out, atol=1e-12)


class TestAttend:
    def test_single_key(self, rng):
        p = AttentionParams.identity(6)
        v = rng.normal(size=(1, 6))
        out = attend(rng.normal(size=(4, 6)), rng.normal(size=(1, 6)), v, p)
        np.testing.assert_allclose(out, np.repeat(v, 4, axis=0), atol=1e-15)

    def test_equal_logits_mean(self, rng):
        p = AttentionParams.identity(4)
        k = np.ones((2, 4))
        v = rng.normal(size=(2, 4))
        np.testing.assert_allclose(attend(rng.normal(size=(1, 4)), k, v, p)[0], v.mean(axis=0), atol=1e-15)

    def test_matches_loops(self, rng, kernels):
        p = AttentionParams.random(8, 1, rng, std=0.5)
        q, k, v = rng.normal(size=(3, 8)), rng.normal(size=(5, 8)), rng.normal(size=(5, 8))
        ref = naive_attend(q, k, v, p.wq, p.wk, p.wv, p.wo, 1)
        np.testing.assert_allclose(attend(q, k, v, p), ref, atol=1e-12, rtol=0)

    @pytest.mark.parametrize("heads", [1, 2, 4])
    def test_convex_per_head(self, rng, heads):
        eye = np.eye(8)
        p = AttentionParams(8, heads, rng.normal(size=(8, 8)), rng.normal(size=(8, 8)), rng.normal(size=(8, 8)), eye)
        k = rng.normal(size=(6, 8))
        v = rng.normal(size=(6, 8))
        out = attend(rng.normal(size=(5, 8)), k, v, p)
        vp = v @ p.wv.T
        assert np.all(out <= vp.max(axis=0) + 1e-12) and np.all(out >= vp.min(axis=0) - 1e-12)

    def test_joint_key_permutation(self, rng):
        p = AttentionParams.random(8, 2, rng, std=0.5)
        q, k, v = rng.normal(size=(3, 8)), rng.normal(size=(7, 8)), rng.normal(size=(7, 8))
        perm = rng.permutation(7)
        np.testing.assert_allclose(attend(q, k[perm], v[perm], p), attend(q, k, v, p), atol=1e-12, rtol=0)

    def test_sink_takes_mass(self):
        p = AttentionParams.identity(2, logit_scale=1.0)
        q = np.array([[1.0, 0.0]])
        k = np.array([[1.0, 0.0]])
        v = np.array([[2.0, 4.0]])
        out = attend(q, k, v, p, sink_logit=1.0)
        np.testing.assert_allclose(out, v / 2, atol=1e-15)

    def test_width_mismatch(self, rng):
        with pytest.raises(ValueError):
            attend(rng.normal(size=(2, 5)), rng.normal(size=(3, 4)), rng.normal(size=(3, 4)), AttentionParams.identity(4))

    def test_heads_must_divide(self):
        with pytest.raises(ValueError):
            AttentionParams.identity(6, n_heads=4)


class TestConv2d:
    def test_identity_kernel(self, rng, kernels):
        x = rng.normal(size=(1, 5, 6))
        np.testing.assert_array_equal(conv2d(x, np.ones((1, 1, 1, 1)), np.zeros(1)), x)

    def test_zero_kernel_bias(self, rng, kernels):
        out = conv2d(rng.normal(size=(2, 5, 5)), np.zeros((3, 2, 3, 3)), np.array([1.5, -2.0, 0.0]), 1, 1)
        for k, beta in enumerate([1.5, -2.0, 0.0]):
            assert np.all(out[k] == beta)

    def test_ramp_stride2(self, kernels):
        x = np.arange(25, dtype=float).reshape(1, 5, 5)
        w = np.arange(9, dtype=float).reshape(1, 1, 3, 3) / 10
        np.testing.assert_allclose(conv2d(x, w, np.array([0.5]), 2, 0), naive_conv2d(x, w, np.array([0.5]), 2, 0), atol=1e-12)

    @pytest.mark.parametrize("stride,pad", [(1, 0), (1, 1), (2, 1), (3, 2)])
    def test_matches_loops(self, rng, kernels, stride, pad):
        x = rng.normal(size=(3, 8, 7))
        w = rng.normal(size=(4, 3, 3, 2))
        b = rng.normal(size=4)
        np.testing.assert_allclose(conv2d(x, w, b, stride, pad), naive_conv2d(x, w, b, stride, pad), atol=1e-12, rtol=0)

    def test_output_size(self, rng):
        out = conv2d(rng.normal(size=(1, 9, 10)), rng.normal(size=(2, 1, 3, 3)), np.zeros(2), 2, 1)
        assert out.shape == (2, (9 + 2 - 3) // 2 + 1, (10 + 2 - 3) // 2 + 1)

    def test_kernel_too_large(self, rng):
        with pytest.raises(ValueError):
            conv2d(rng.normal(size=(1, 2, 2)), np.zeros((1, 1, 5, 5)), np.zeros(1))


class TestBilinear:
    def test_resize_identity(self, rng):
        x = rng.normal(size=(2, 4, 5))
        np.testing.assert_array_equal(bilinear_resize(x, 1.0), x)

    def test_resize_constant(self):
        np.testing.assert_allclose(bilinear_resize(np.full((1, 3, 3), 7.0), 2), 7.0, atol=1e-15)

    def test_resize_hand_values(self):
        # source coordinate of output i is (i + 0.5) / 2 - 0.5, clamped to [0, 1]
        x = np.array([[[0.0, 1.0], [2.0, 3.0]]])
        expected = np.array([
            [0.0, 0.25, 0.75, 1.0],
            [0.5, 0.75, 1.25, 1.5],
            [1.5, 1.75, 2.25, 2.5],
            [2.0, 2.25, 2.75, 3.0],
        ])
        np.testing.assert_allclose(bilinear_resize(x, 2)[0], expected, atol=1e-15)

    def test_resize_empty(self):
        with pytest.raises(ValueError):
            bilinear_resize(np.zeros((1, 2, 2)), 0.25)

    def test_sample_on_grid(self, rng, kernels):
        x = rng.normal(size=(3, 4, 5))
        np.testing.assert_array_equal(bilinear_sample(x, [(1, 2)])[:, 0], x[:, 1, 2])

    def test_sample_midpoint(self, rng, kernels):
        x = rng.normal(size=(2, 3, 3))
        np.testing.assert_allclose(bilinear_sample(x, [(0.5, 0.5)])[:, 0], x[:, :2, :2].mean(axis=(1, 2)), atol=1e-15)

    def test_sample_far_outside(self, rng, kernels):
        assert np.all(bilinear_sample(rng.normal(size=(2, 3, 3)), [(-5, -5)]) == 0)

    @settings(max_examples=50)
    @given(st.floats(-2, 6), st.floats(-2, 7))
    def test_sample_matches_reference(self, y, x):
        img = np.arange(2 * 5 * 6, dtype=float).reshape(2, 5, 6) ** 1.3
        np.testing.assert_allclose(bilinear_sample(img, [(y, x)])[:, 0], naive_bilinear(img, y, x), atol=1e-9)


class TestDeformConv:
    def test_zero_offsets_equal_conv(self, rng, kernels):
        x = rng.normal(size=(3, 6, 7))
        w = rng.normal(size=(2, 3, 3, 3))
        b = rng.normal(size=2)
        out = deform_conv2d(x, np.zeros((18, 6, 7)), w, b, pad=1)
        np.testing.assert_allclose(out, conv2d(x, w, b, 1, 1), atol=1e-12)

    def test_integer_shift(self, rng, kernels):
        # every tap moved one pixel right equals convolving the left-shifted image,
        # except in column 0 where the shifted copy reads padding
        x = rng.normal(size=(1, 6, 6))
        w = rng.normal(size=(1, 1, 3, 3))
        offsets = np.zeros((18, 6, 6))
        offsets[1::2] = 1.0
        shifted = np.zeros_like(x)
        shifted[:, :, :-1] = x[:, :, 1:]
        out = deform_conv2d(x, offsets, w, np.zeros(1))
        np.testing.assert_allclose(out[:, :, 1:], conv2d(shifted, w, np.zeros(1), 1, 1)[:, :, 1:], atol=1e-12)

    def test_bad_offsets(self, rng):
        with pytest.raises(ValueError):
            deform_conv2d(rng.normal(size=(1, 4, 4)), np.zeros((9, 4, 4)), np.zeros((1, 1, 3, 3)), np.zeros(1))


def test_tensor_dump_roundtrip(rng):
    x = rng.normal(size=(2, 3, 4))
    doc = json.loads(json.dumps(dump_tensor(x)))
    assert doc["shape"] == [2, 3, 4] and len(doc["data"]) == 24
    np.testing.assert_array_equal(load_tensor(doc), x)
    with pytest.raises(ValueError):
        load_tensor({"shape": [2, 2], "data": [1.0]})
