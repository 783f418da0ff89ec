"""
Tests for Conv, DSBottleneck, PointwiseBottleneck and NormLayer.
"""
import numpy as np
import pytest
from django.test import SimpleTestCase

from nn_blocks.layers import Conv, DSBottleneck, NormLayer, PointwiseBottleneck, ds_bottleneck_forward, norm_forward
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import feature_map
from tensor_core.exceptions import ShapeError
from tensor_core.gradcheck import check_gradients, projection_loss
from tensor_core.ops import ConvSpec


def zero_all(params):
    for name in list(params):
        params[name] = np.zeros(params[name].shape)


class DSBottleneckTest(SimpleTestCase):
    def test_parameter_names(self):
        params = ParameterSet()
        DSBottleneck(params, 'blk', 8)
        self.assertEqual(sorted(params), sorted(
            f"blk.{part}.{kind}" for part in ('reduce', 'dw', 'expand') for kind in ('weight', 'bias')
        ))
        self.assertEqual(params['blk.dw.weight'].shape, (4, 1, 3, 3))

    def test_zero_weights_residual_is_identity(self):
        """Test that a residual block with all-zero parameters returns its input."""
        params = ParameterSet()
        block = DSBottleneck(params, 'blk', 4)
        zero_all(params)
        x = feature_map(np.random.default_rng(0).standard_normal((1, 4, 5, 5)))
        np.testing.assert_array_equal(ds_bottleneck_forward(x, block).data, x.data)

    def test_zero_weights_plain_is_zero(self):
        params = ParameterSet()
        block = DSBottleneck(params, 'blk', 4, residual=False)
        zero_all(params)
        x = feature_map(np.ones((1, 4, 3, 3)))
        np.testing.assert_array_equal(block(x).data, np.zeros((1, 4, 3, 3)))

    def test_odd_channels_rejected(self):
        with self.assertRaises(ShapeError):
            DSBottleneck(ParameterSet(), 'blk', 5)

    def test_channel_mismatch_rejected(self):
        block = DSBottleneck(ParameterSet(), 'blk', 4)
        with self.assertRaises(ShapeError):
            block(feature_map(np.zeros((1, 6, 3, 3))))


class NormLayerTest(SimpleTestCase):
    def test_initial_affine(self):
        params = ParameterSet()
        layer = NormLayer(params, 'norm', 3)
        np.testing.assert_array_equal(params[layer.gamma_name].data, np.ones(3))
        np.testing.assert_array_equal(params[layer.beta_name].data, np.zeros(3))

    def test_initial_output_standardized_per_channel(self):
        layer = NormLayer(ParameterSet(), 'norm', 3)
        x = feature_map(np.random.default_rng(0).normal(4.0, 3.0, (2, 3, 6, 6)))
        out = norm_forward(x, layer).data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), 0.0, atol=1e-9)
        np.testing.assert_allclose(out.std(axis=(2, 3)), 1.0, atol=1e-3)

    def test_beta_shifts_output(self):
        params = ParameterSet()
        layer = NormLayer(params, 'norm', 2)
        params[layer.beta_name] = np.array([1.5, -2.0])
        out = norm_forward(feature_map(np.random.default_rng(1).standard_normal((1, 2, 4, 4))), layer).data
        np.testing.assert_allclose(out.mean(axis=(2, 3)), [[1.5, -2.0]], atol=1e-9)


@pytest.mark.parametrize('build', [
    lambda p: DSBottleneck(p, 'blk', 4),
    lambda p: DSBottleneck(p, 'blk', 4, residual=False),
    lambda p: PointwiseBottleneck(p, 'pw', 4, 2, 6),
    lambda p: Conv(p, 'conv', ConvSpec(4, 2, kernel=3, stride=2, padding=1), gate=True),
    lambda p: NormLayer(p, 'norm', 4),
])
def test_layer_gradients(build):
    rng = np.random.default_rng(0)
    params = ParameterSet(seed=1)
    layer = build(params)
    for name in list(params):
        if name.endswith('.bias') or name.endswith('.beta'):
            params[name] = rng.standard_normal(params[name].shape) * 0.1
    bound = {'x': feature_map(rng.standard_normal((1, 4, 6, 6)), requires_grad=True)}
    project = projection_loss([layer(bound['x'])], rng)
    result = check_gradients('layer', lambda: project([layer(bound['x'])]), [params, bound], rng=rng)
    assert result.passed, result
