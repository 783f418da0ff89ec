"""
Tests for fused and single-modality detector assembly.
"""
import numpy as np
from django.test import SimpleTestCase

from detection.model import ModelConfig, PacgDetector
from fusion.pyramid import BackboneConfig
from tensor_core.autodiff import Tensor

WIDTHS = (4, 4, 8, 8, 8)


def detector(modality='both'):
    fused = modality == 'both'
    backbone = BackboneConfig(32, WIDTHS, enable_scg=fused, enable_pfmg=fused, modality=modality)
    return PacgDetector(ModelConfig(backbone, 2, seed=0))


class SingleModalityDetectorTest(SimpleTestCase):
    @classmethod
    def setUpClass(cls):
        super().setUpClass()
        rng = np.random.default_rng(0)
        cls.rgb = Tensor(rng.uniform(0, 1, (1, 3, 32, 32)))
        cls.ir = Tensor(rng.uniform(0, 1, (1, 3, 32, 32)))
        cls.other = Tensor(rng.uniform(0, 1, (1, 3, 32, 32)))

    def test_fewer_parameters_than_fused(self):
        fused = detector().parameter_count()
        self.assertLess(detector('rgb').parameter_count(), fused)
        self.assertEqual(detector('rgb').parameter_count(), detector('ir').parameter_count())
        self.assertIsNone(detector('ir').fusion)

    def test_rgb_only_ignores_ir(self):
        model = detector('rgb')
        first, second = model(self.rgb, self.ir), model(self.rgb, self.other)
        for level in first:
            np.testing.assert_array_equal(first[level].data, second[level].data)
        changed = model(self.other, self.ir)
        self.assertFalse(np.array_equal(first[3].data, changed[3].data))

    def test_ir_only_ignores_rgb(self):
        model = detector('ir')
        first, second = model(self.rgb, self.ir), model(self.other, self.ir)
        for level in first:
            np.testing.assert_array_equal(first[level].data, second[level].data)

    def test_fused_model_sees_both_images(self):
        model = detector()
        base = model(self.rgb, self.ir)[3].data
        self.assertFalse(np.array_equal(base, model(self.other, self.ir)[3].data))
        self.assertFalse(np.array_equal(base, model(self.rgb, self.other)[3].data))

    def test_same_output_levels(self):
        fused, single = detector()(self.rgb, self.ir), detector('ir')(self.rgb, self.ir)
        self.assertEqual(sorted(fused), sorted(single))
        for level in fused:
            self.assertEqual(fused[level].shape, single[level].shape)
