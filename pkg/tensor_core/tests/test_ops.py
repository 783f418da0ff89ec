"""
Tests for the tensor operations' forward values and shape contracts.
"""
import numpy as np
import pytest
from django.test import SimpleTestCase

from tensor_core.autodiff import Tensor, feature_map
from tensor_core.exceptions import ShapeError
from tensor_core.ops import (
    ConvSpec, add, concat_channels, conv2d, count_macs, instance_norm, mul, scale_shift, sigmoid,
    sigmoid_values, silu, softmax_channels, split_channels, sum_all,
)


def naive_conv(x, weight, bias, spec):
    n, c, h, w = x.shape
    p, k, s, g = spec.padding, spec.kernel, spec.stride, spec.groups
    xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p)))
    out_h, out_w = spec.output_size(h, w)
    cig, cog = c // g, spec.out_channels // g
    out = np.zeros((n, spec.out_channels, out_h, out_w))
    for b in range(n):
        for o in range(spec.out_channels):
            group = o // cog
            for i in range(out_h):
                for j in range(out_w):
                    patch = xp[b, group * cig:(group + 1) * cig, i * s:i * s + k, j * s:j * s + k]
                    out[b, o, i, j] = (patch * weight[o]).sum() + bias[o]
    return out


CONV_SPECS = [
    ConvSpec(3, 4, kernel=3, stride=1, padding=1),
    ConvSpec(3, 4, kernel=3, stride=2, padding=1),
    ConvSpec(4, 4, kernel=3, stride=1, padding=1, groups=4),
    ConvSpec(4, 6, kernel=1),
    ConvSpec(4, 2, kernel=1, stride=2),
    ConvSpec(2, 2, kernel=3, stride=1, padding=0),
]


@pytest.mark.parametrize('spec', CONV_SPECS)
def test_conv2d_matches_direct_loop(spec):
    rng = np.random.default_rng(0)
    x = rng.standard_normal((2, spec.in_channels, 7, 6))
    weight = rng.standard_normal(spec.weight_shape)
    bias = rng.standard_normal(spec.out_channels)
    out = conv2d(Tensor(x), Tensor(weight), Tensor(bias), spec)
    np.testing.assert_allclose(out.data, naive_conv(x, weight, bias, spec), rtol=1e-12, atol=1e-12)


class ConvSpecTest(SimpleTestCase):
    def test_rejects_unsupported_geometry(self):
        for kwargs in ({'kernel': 5}, {'stride': 3}, {'padding': 2}):
            with self.assertRaises(ShapeError):
                ConvSpec(4, 4, **kwargs)

    def test_groups_must_divide_channels(self):
        with self.assertRaises(ShapeError):
            ConvSpec(4, 6, groups=4)

    def test_output_size(self):
        self.assertEqual(ConvSpec(1, 1, kernel=3, stride=2, padding=1).output_size(64, 64), (32, 32))
        self.assertEqual(ConvSpec(1, 1, kernel=3, stride=2, padding=1).output_size(1, 1), (1, 1))


class ConvShapeTest(SimpleTestCase):
    def test_channel_mismatch_names_both_shapes(self):
        spec = ConvSpec(3, 4, kernel=1)
        x = Tensor(np.zeros((1, 2, 4, 4)))
        with self.assertRaises(ShapeError) as ctx:
            conv2d(x, Tensor(np.zeros(spec.weight_shape)), Tensor(np.zeros(4)), spec)
        self.assertIn('(1, 2, 4, 4)', str(ctx.exception))
        self.assertIn('(4, 3, 1, 1)', str(ctx.exception))

    def test_wrong_weight_shape(self):
        spec = ConvSpec(3, 4, kernel=3, padding=1)
        with self.assertRaises(ShapeError):
            conv2d(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((4, 3, 1, 1))), Tensor(np.zeros(4)), spec)

    def test_mac_count(self):
        spec = ConvSpec(4, 8, kernel=3, stride=2, padding=1)
        x = Tensor(np.zeros((1, 4, 8, 8)))
        with count_macs() as counter:
            conv2d(x, Tensor(np.zeros(spec.weight_shape)), Tensor(np.zeros(8)), spec)
        self.assertEqual(counter.total, 8 * 4 * 9 * 4 * 4)

    def test_macs_not_counted_outside_context(self):
        spec = ConvSpec(1, 1)
        with count_macs() as counter:
            pass
        conv2d(Tensor(np.zeros((1, 1, 2, 2))), Tensor(np.zeros(spec.weight_shape)), Tensor(np.zeros(1)), spec)
        self.assertEqual(counter.total, 0)


class ElementwiseTest(SimpleTestCase):
    def test_sigmoid_strictly_inside_unit_interval(self):
        """Test that sigmoid never reaches 0 or 1, even for extreme inputs."""
        x = Tensor(np.array([-1e4, -800.0, -40.0, 0.0, 40.0, 800.0, 1e4]).reshape(1, 7, 1, 1))
        s = sigmoid(x).data
        self.assertTrue(np.all(s > 0.0))
        self.assertTrue(np.all(s < 1.0))
        self.assertEqual(s[0, 3, 0, 0], 0.5)

    def test_sigmoid_values_symmetry(self):
        a = np.linspace(-20, 20, 41)
        np.testing.assert_allclose(sigmoid_values(a) + sigmoid_values(-a), 1.0, atol=1e-15)

    def test_silu(self):
        a = np.array([-2.0, 0.0, 3.0]).reshape(1, 3, 1, 1)
        np.testing.assert_allclose(silu(Tensor(a)).data, a / (1.0 + np.exp(-a)))

    def test_scale_shift(self):
        a = np.arange(4.0).reshape(1, 1, 2, 2)
        np.testing.assert_array_equal(scale_shift(Tensor(a), -1.0, 1.0).data, 1.0 - a)

    def test_sum_all_is_scalar(self):
        out = sum_all(Tensor(np.ones((2, 3, 4, 5))))
        self.assertEqual(out.shape, (1, 1, 1, 1))
        self.assertEqual(out.item(), 120.0)


class BroadcastTest(SimpleTestCase):
    def test_one_channel_mask(self):
        x = Tensor(np.ones((2, 3, 4, 4)))
        mask = Tensor(np.full((2, 1, 4, 4), 2.0))
        self.assertEqual(mul(x, mask).shape, (2, 3, 4, 4))
        self.assertEqual(mul(mask, x).shape, (2, 3, 4, 4))

    def test_per_channel_scalar(self):
        x = Tensor(np.zeros((1, 3, 4, 4)))
        bias = Tensor(np.arange(3.0).reshape(1, 3, 1, 1))
        np.testing.assert_array_equal(add(x, bias).data[0, :, 2, 2], [0.0, 1.0, 2.0])

    def test_rejects_other_shapes(self):
        x = Tensor(np.zeros((1, 3, 4, 4)))
        for other in [(1, 2, 4, 4), (1, 3, 2, 2), (2, 3, 4, 4), (1, 1, 1, 1, 1)]:
            with self.assertRaises(ShapeError):
                add(x, Tensor(np.zeros(other)))

    def test_error_names_both_shapes(self):
        with self.assertRaises(ShapeError) as ctx:
            mul(Tensor(np.zeros((1, 3, 4, 4))), Tensor(np.zeros((1, 2, 4, 4))))
        self.assertIn('(1, 3, 4, 4)', str(ctx.exception))
        self.assertIn('(1, 2, 4, 4)', str(ctx.exception))


class ChannelOpsTest(SimpleTestCase):
    def test_softmax_sums_to_one(self):
        rng = np.random.default_rng(2)
        x = Tensor(rng.standard_normal((2, 5, 3, 3)) * 50)
        np.testing.assert_allclose(softmax_channels(x).data.sum(axis=1), 1.0, atol=1e-12)

    def test_softmax_needs_two_channels(self):
        with self.assertRaises(ShapeError):
            softmax_channels(Tensor(np.zeros((1, 1, 2, 2))))

    def test_concat_then_split_restores_parts(self):
        rng = np.random.default_rng(3)
        a = Tensor(rng.standard_normal((1, 2, 3, 3)))
        b = Tensor(rng.standard_normal((1, 3, 3, 3)))
        left, right = split_channels(concat_channels(a, b), [2, 3])
        np.testing.assert_array_equal(left.data, a.data)
        np.testing.assert_array_equal(right.data, b.data)

    def test_concat_rejects_spatial_mismatch(self):
        with self.assertRaises(ShapeError):
            concat_channels(Tensor(np.zeros((1, 2, 3, 3))), Tensor(np.zeros((1, 2, 4, 4))))

    def test_split_sizes_must_partition(self):
        with self.assertRaises(ShapeError):
            split_channels(Tensor(np.zeros((1, 4, 2, 2))), [1, 2])


class InstanceNormTest(SimpleTestCase):
    def test_standardizes_each_channel(self):
        rng = np.random.default_rng(4)
        x = feature_map(rng.standard_normal((2, 3, 6, 6)) * 4 + 7)
        out = instance_norm(x, Tensor(np.ones(3)), Tensor(np.zeros(3))).data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-12)
        np.testing.assert_allclose(out.std(axis=(2, 3)), 1.0, atol=1e-3)

    def test_single_pixel_gives_beta(self):
        x = feature_map(np.array([5.0, -2.0]).reshape(1, 2, 1, 1))
        out = instance_norm(x, Tensor(np.array([3.0, 3.0])), Tensor(np.array([0.5, -0.5])))
        np.testing.assert_allclose(out.data.reshape(-1), [0.5, -0.5])

    def test_affine_shape_checked(self):
        with self.assertRaises(ShapeError):
            instance_norm(feature_map(np.zeros((1, 3, 2, 2))), Tensor(np.ones(2)), Tensor(np.zeros(3)))
