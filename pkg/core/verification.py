"""
The gradient-check suite behind `manage.py gradcheck`.

Every differentiable building block is checked against central
differences, element by element, at tiny shapes (N=1, C=4, S=32): each
tensor op on its own, the SCG and PFMG modules, the detection loss and
finally every parameter of the whole backbone -> fusion -> head -> loss
pipeline at the narrowest valid widths.
"""

import logging
from typing import Callable, Dict, List, Optional

import numpy as np

from core.exceptions import ConfigError
from detection.head import head_channels, level_stride
from detection.losses import assign_targets, detection_loss
from detection.model import ModelConfig, PacgDetector
from detection.synth import SceneObject
from fusion.pfmg import PFMGModule
from fusion.pyramid import FUSED_LEVELS, BackboneConfig
from fusion.scg import SCGModule
from fusion.types import ModalityPair
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import Tensor
from tensor_core.gradcheck import GradCheckResult, check_gradients, projection_loss
from tensor_core.ops import (
    ConvSpec, add, concat_channels, conv2d, instance_norm, mul, scale_shift, sigmoid, silu,
    softmax_channels, split_channels, sum_all,
)

logger = logging.getLogger(__name__)

CHANNELS = 4
IMAGE_SIZE = 32
SPATIAL = 8
NUM_CLASSES = 2
# Smallest valid backbone, so every parameter element can be checked.
END_TO_END_WIDTHS = (2, 2, 2, 2, 2)


def _inputs(rng: np.random.Generator, **shapes) -> Dict[str, Tensor]:
    return {name: Tensor(rng.standard_normal(shape), requires_grad=True) for name, shape in shapes.items()}


class GradientSuite:
    def __init__(self, seed: int = 0, step: float = 1e-5, tolerance: float = 1e-4):
        self.seed = seed
        self.step = step
        self.tolerance = tolerance
        self.rng = np.random.default_rng(seed)

    @property
    def checks(self) -> Dict[str, Callable[[], GradCheckResult]]:
        return {
            'conv2d': lambda: self._conv('conv2d', ConvSpec(CHANNELS, CHANNELS, kernel=3, padding=1)),
            'conv2d_strided': lambda: self._conv('conv2d_strided', ConvSpec(CHANNELS, 2 * CHANNELS, kernel=3, stride=2, padding=1)),
            'conv2d_depthwise': lambda: self._conv('conv2d_depthwise', ConvSpec(CHANNELS, CHANNELS, kernel=3, padding=1, groups=CHANNELS)),
            'conv2d_pointwise': lambda: self._conv('conv2d_pointwise', ConvSpec(CHANNELS, 2, kernel=1)),
            'sigmoid': lambda: self._unary('sigmoid', sigmoid),
            'silu': lambda: self._unary('silu', silu),
            'scale_shift': lambda: self._unary('scale_shift', lambda x: scale_shift(x, -1.0, 1.0)),
            'softmax_channels': lambda: self._unary('softmax_channels', softmax_channels),
            'sum_all': lambda: self._unary('sum_all', sum_all),
            'add_broadcast': lambda: self._binary('add_broadcast', add),
            'mul_broadcast': lambda: self._binary('mul_broadcast', mul),
            'concat_split': self._concat_split,
            'instance_norm': self._instance_norm,
            'scg': self._scg,
            'pfmg': self._pfmg,
            'detection_loss': self._detection_loss,
            'end_to_end': self._end_to_end,
        }

    def run(self, names: Optional[List[str]] = None) -> List[GradCheckResult]:
        checks = self.checks
        unknown = [name for name in names or () if name not in checks]
        if unknown:
            raise ConfigError(f"unknown gradcheck component(s): {', '.join(unknown)}; choose from {', '.join(checks)}")
        results = []
        for name in names or list(checks):
            results.append(checks[name]())
        return results

    def _check(self, component, loss_fn, bindings) -> GradCheckResult:
        return check_gradients(component, loss_fn, bindings, step=self.step, tolerance=self.tolerance)

    def _projected(self, component, forward, bindings) -> GradCheckResult:
        outputs = forward()
        outputs = outputs if isinstance(outputs, (list, tuple)) else [outputs]
        project = projection_loss(outputs, self.rng)

        def loss():
            values = forward()
            return project(values if isinstance(values, (list, tuple)) else [values])

        return self._check(component, loss, bindings)

    # --- Ops ---

    def _conv(self, component: str, spec: ConvSpec) -> GradCheckResult:
        bound = _inputs(self.rng, x=(1, spec.in_channels, SPATIAL, SPATIAL), weight=spec.weight_shape,
                        bias=(spec.out_channels,))
        return self._projected(component, lambda: conv2d(bound['x'], bound['weight'], bound['bias'], spec), [bound])

    def _unary(self, component: str, op) -> GradCheckResult:
        bound = _inputs(self.rng, x=(1, CHANNELS, SPATIAL, SPATIAL))
        return self._projected(component, lambda: op(bound['x']), [bound])

    def _binary(self, component: str, op) -> GradCheckResult:
        bound = _inputs(
            self.rng,
            x=(1, CHANNELS, SPATIAL, SPATIAL),
            channel=(1, 1, SPATIAL, SPATIAL),
            spatial=(1, CHANNELS, 1, 1),
        )
        return self._projected(
            component,
            lambda: [op(bound['x'], bound['channel']), op(bound['spatial'], bound['x'])],
            [bound],
        )

    def _concat_split(self) -> GradCheckResult:
        bound = _inputs(self.rng, a=(1, CHANNELS, SPATIAL, SPATIAL), b=(1, 2, SPATIAL, SPATIAL))
        return self._projected(
            'concat_split',
            lambda: split_channels(concat_channels(bound['a'], bound['b']), [1, CHANNELS + 1]),
            [bound],
        )

    def _instance_norm(self) -> GradCheckResult:
        bound = _inputs(self.rng, x=(1, CHANNELS, SPATIAL, SPATIAL), gamma=(CHANNELS,), beta=(CHANNELS,))
        return self._projected('instance_norm', lambda: instance_norm(bound['x'], bound['gamma'], bound['beta']), [bound])

    # --- Fusion modules ---

    def _scg(self) -> GradCheckResult:
        params = ParameterSet(self.seed)
        module = SCGModule(params, 'scg', CHANNELS)
        bound = _inputs(self.rng, rgb=(1, CHANNELS, SPATIAL, SPATIAL), ir=(1, CHANNELS, SPATIAL, SPATIAL))

        def forward():
            out = module(ModalityPair(bound['rgb'], bound['ir']))
            return [out.rgb, out.ir]

        return self._projected('scg', forward, [params, bound])

    def _pfmg(self) -> GradCheckResult:
        params = ParameterSet(self.seed)
        module = PFMGModule(params, 'pfmg', CHANNELS, CHANNELS)
        half, full = SPATIAL // 2, SPATIAL
        bound = _inputs(
            self.rng,
            curr_rgb=(1, CHANNELS, half, half), curr_ir=(1, CHANNELS, half, half),
            prev_rgb=(1, CHANNELS, full, full), prev_ir=(1, CHANNELS, full, full),
        )

        def forward():
            return module(ModalityPair(bound['curr_rgb'], bound['curr_ir']),
                          ModalityPair(bound['prev_rgb'], bound['prev_ir']))

        return self._projected('pfmg', forward, [params, bound])

    # --- Detection ---

    def _targets(self):
        objects = [SceneObject(0, 3, 5, 10, 8), SceneObject(1, 14, 12, 16, 18)]
        return assign_targets([objects], IMAGE_SIZE)

    def _detection_loss(self) -> GradCheckResult:
        channels = head_channels(NUM_CLASSES)
        bound = _inputs(self.rng, **{
            f"p{level}": (1, channels, IMAGE_SIZE // level_stride(level), IMAGE_SIZE // level_stride(level))
            for level in FUSED_LEVELS
        })
        targets = self._targets()

        def loss():
            outputs = {level: bound[f"p{level}"] for level in FUSED_LEVELS}
            return detection_loss(outputs, targets, NUM_CLASSES)[0]

        return self._check('detection_loss', loss, [bound])

    def _end_to_end(self) -> GradCheckResult:
        """Every parameter of the full detector through the detection loss; images are fixed data."""
        config = ModelConfig(BackboneConfig(IMAGE_SIZE, END_TO_END_WIDTHS), NUM_CLASSES, self.seed)
        model = PacgDetector(config)
        shape = (1, 3, IMAGE_SIZE, IMAGE_SIZE)
        rgb = Tensor(self.rng.uniform(0.0, 1.0, shape))
        ir = Tensor(self.rng.uniform(0.0, 1.0, shape))
        targets = self._targets()

        def loss():
            return detection_loss(model(rgb, ir), targets, NUM_CLASSES)[0]

        return self._check('end_to_end', loss, [model.params])


def run_gradient_checks(seed: int = 0, step: float = 1e-5, tolerance: float = 1e-4,
                        names: Optional[List[str]] = None) -> List[GradCheckResult]:
    return GradientSuite(seed, step, tolerance).run(names)
