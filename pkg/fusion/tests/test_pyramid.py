"""
Tests for the dual-stream backbone and pyramid fusion.
"""
import numpy as np
import pytest
from django.test import SimpleTestCase

from core.exceptions import ConfigError
from fusion.pyramid import (
    BackboneConfig, DualStreamBackbone, PyramidFusion, backbone_forward, fuse_pyramid,
)
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import GradientTape, Tensor, feature_map
from tensor_core.exceptions import ShapeError
from tensor_core.ops import sum_all


def images(rng, n=1, size=64, requires_grad=False):
    rgb = Tensor(rng.uniform(0, 1, (n, 3, size, size)), requires_grad=requires_grad)
    ir = Tensor(rng.uniform(0, 1, (n, 3, size, size)), requires_grad=requires_grad)
    return rgb, ir


def build(config, seed=0):
    params = ParameterSet(seed=seed)
    backbone = DualStreamBackbone(params, config)
    fusion = PyramidFusion(params, config)
    return params, backbone, fusion


class BackboneConfigTest(SimpleTestCase):
    def test_defaults(self):
        config = BackboneConfig()
        self.assertEqual(config.image_size, 64)
        self.assertEqual(config.widths, (8, 16, 32, 64, 128))
        self.assertEqual([config.grid_size(level) for level in (2, 3, 4, 5)], [16, 8, 4, 2])

    def test_image_size_must_divide_by_32(self):
        for size in (0, 16, 48, 100):
            with self.assertRaises(ConfigError):
                BackboneConfig(image_size=size)

    def test_widths_validated(self):
        with self.assertRaises(ConfigError):
            BackboneConfig(widths=(8, 16, 32, 64))
        with self.assertRaises(ConfigError):
            BackboneConfig(widths=(8, 16, 33, 64, 128))


class BackboneShapeTest(SimpleTestCase):
    def test_pyramid_levels_for_64(self):
        rng = np.random.default_rng(0)
        _, backbone, _ = build(BackboneConfig())
        pyramid = backbone_forward(*images(rng), backbone)
        expected = {2: (1, 16, 16, 16), 3: (1, 32, 8, 8), 4: (1, 64, 4, 4), 5: (1, 128, 2, 2)}
        for level, shape in expected.items():
            self.assertEqual(pyramid[level].rgb.shape, shape)
            self.assertEqual(pyramid[level].ir.shape, shape)
        self.assertNotIn(1, pyramid.levels)

    def test_image_size_not_multiple_of_32_rejected(self):
        rng = np.random.default_rng(0)
        _, backbone, _ = build(BackboneConfig())
        with self.assertRaises(ShapeError):
            backbone(*images(rng, size=48))

    def test_image_channels_checked(self):
        _, backbone, _ = build(BackboneConfig())
        gray = feature_map(np.zeros((1, 1, 64, 64)))
        with self.assertRaises(ShapeError):
            backbone(gray, gray)

    def test_streams_have_independent_weights(self):
        params, _, _ = build(BackboneConfig())
        rgb = params['backbone.rgb.stage1.down.weight'].data
        ir = params['backbone.ir.stage1.down.weight'].data
        self.assertEqual(rgb.shape, ir.shape)
        self.assertFalse(np.array_equal(rgb, ir))

    def test_disabled_scg_equals_independent_streams(self):
        """Test that without SCG each stream is exactly its own single-stream backbone."""
        rng = np.random.default_rng(1)
        _, backbone, _ = build(BackboneConfig(enable_scg=False), seed=3)
        rgb, ir = images(rng, n=2)
        pyramid = backbone(rgb, ir)
        rgb_alone = backbone.stream_forward(rgb, 'rgb')
        ir_alone = backbone.stream_forward(ir, 'ir')
        for level in (2, 3, 4, 5):
            np.testing.assert_array_equal(pyramid[level].rgb.data, rgb_alone[level].data)
            np.testing.assert_array_equal(pyramid[level].ir.data, ir_alone[level].data)

    def test_scg_changes_the_streams(self):
        rng = np.random.default_rng(1)
        _, backbone, _ = build(BackboneConfig(), seed=3)
        rgb, ir = images(rng)
        pyramid = backbone(rgb, ir)
        self.assertFalse(np.array_equal(pyramid[3].rgb.data, backbone.stream_forward(rgb, 'rgb')[3].data))


class FusionTest(SimpleTestCase):
    def test_fused_shapes_for_64(self):
        rng = np.random.default_rng(2)
        _, backbone, fusion = build(BackboneConfig())
        fused = fuse_pyramid(backbone(*images(rng)), fusion)
        self.assertEqual(fused.p3.shape, (1, 32, 8, 8))
        self.assertEqual(fused.p4.shape, (1, 64, 4, 4))
        self.assertEqual(fused.p5.shape, (1, 128, 2, 2))

    def test_suppressed_hier_gates_give_base_at_every_level(self):
        rng = np.random.default_rng(3)
        params, backbone, fusion = build(BackboneConfig())
        for level in (3, 4, 5):
            name = f'pfmg.p{level}.hier_gate'
            params[f'{name}.weight'] = np.zeros(params[f'{name}.weight'].shape)
            params[f'{name}.bias'] = np.array([-20.0])
        pyramid = backbone(*images(rng))
        fused = fusion(pyramid)
        for level in (3, 4, 5):
            trace = fusion.modules[level].trace(pyramid[level], pyramid[level - 1])
            np.testing.assert_allclose(fused[level].data, trace.base.data, rtol=0, atol=1e-6)

    def test_average_fusion_when_pfmg_disabled(self):
        rng = np.random.default_rng(4)
        _, backbone, fusion = build(BackboneConfig(enable_pfmg=False))
        pyramid = backbone(*images(rng))
        fused = fusion(pyramid)
        for level in (3, 4, 5):
            np.testing.assert_allclose(fused[level].data, 0.5 * (pyramid[level].rgb.data + pyramid[level].ir.data))

    def test_gradient_reaches_both_images(self):
        """Test that a loss on P5 alone back-propagates into the RGB and the IR image."""
        rng = np.random.default_rng(5)
        _, backbone, fusion = build(BackboneConfig(image_size=32, widths=(4, 4, 8, 8, 8)))
        rgb, ir = images(rng, size=32, requires_grad=True)
        with GradientTape() as tape:
            loss = sum_all(fusion(backbone(rgb, ir)).p5)
        grads = tape.gradient(loss)
        self.assertGreater(np.linalg.norm(grads[rgb]), 0.0)
        self.assertGreater(np.linalg.norm(grads[ir]), 0.0)


class AblationStructureTest(SimpleTestCase):
    def test_parameter_count_grows_with_each_module(self):
        counts = {}
        for scg in (False, True):
            for pfmg in (False, True):
                params, _, _ = build(BackboneConfig(enable_scg=scg, enable_pfmg=pfmg))
                counts[(scg, pfmg)] = params.count()
        baseline, full = counts[(False, False)], counts[(True, True)]
        for single in (counts[(True, False)], counts[(False, True)]):
            self.assertLess(baseline, single)
            self.assertLess(single, full)


@pytest.mark.slow
def test_full_resolution_input_gives_80_cell_p3():
    rng = np.random.default_rng(0)
    _, backbone, fusion = build(BackboneConfig(image_size=640, widths=(2, 2, 2, 2, 2)))
    fused = fusion(backbone(*images(rng, size=640)))
    assert fused.p3.shape[2:] == (80, 80)
    assert fused.p5.shape[2:] == (20, 20)


class SingleModalityTest(SimpleTestCase):
    def test_fusion_modules_rejected(self):
        with self.assertRaises(ConfigError):
            BackboneConfig(modality='rgb')
        with self.assertRaises(ConfigError):
            BackboneConfig(modality='ir', enable_scg=False)
        with self.assertRaises(ConfigError):
            BackboneConfig(modality='thermal', enable_scg=False, enable_pfmg=False)

    def test_only_configured_stream_is_built(self):
        config = BackboneConfig(modality='ir', enable_scg=False, enable_pfmg=False)
        self.assertEqual(config.streams, ('ir',))
        params = ParameterSet(seed=0)
        backbone = DualStreamBackbone(params, config)
        self.assertEqual(list(backbone.stages), ['ir'])
        self.assertFalse(any(name.startswith('backbone.rgb.') for name in params))

    def test_single_stream_ignores_other_image(self):
        rng = np.random.default_rng(1)
        config = BackboneConfig(modality='rgb', enable_scg=False, enable_pfmg=False)
        backbone = DualStreamBackbone(ParameterSet(seed=0), config)
        rgb, ir = images(rng)
        first = backbone.single_stream(rgb, ir)
        second = backbone.single_stream(rgb, Tensor(rng.uniform(0, 1, ir.shape)))
        direct = backbone.stream_forward(rgb, 'rgb')
        for level in (3, 4, 5):
            np.testing.assert_array_equal(first[level].data, second[level].data)
            np.testing.assert_array_equal(first[level].data, direct[level].data)

    def test_dual_pyramid_unavailable(self):
        rng = np.random.default_rng(2)
        config = BackboneConfig(modality='rgb', enable_scg=False, enable_pfmg=False)
        backbone = DualStreamBackbone(ParameterSet(seed=0), config)
        with self.assertRaises(ConfigError):
            backbone(*images(rng))
