"""
Detector assembly: dual-stream backbone -> pyramid fusion -> 1x1 heads.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Sequence, Tuple, Union

import numpy as np

from fusion.pyramid import (
    DUAL, FUSED_LEVELS, BackboneConfig, DualStreamBackbone, FusedPyramid, PyramidFusion, backbone_forward, fuse_pyramid,
)
from nn_blocks.checkpoint import load_checkpoint
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import Tensor
from tensor_core.ops import count_macs

from .head import DetectionHead
from .synth import Scene

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ModelConfig:
    backbone: BackboneConfig = field(default_factory=BackboneConfig)
    num_classes: int = 2
    seed: int = 0


class PacgDetector:
    def __init__(self, config: ModelConfig):
        self.config = config
        self.params = ParameterSet(config.seed)
        self.backbone = DualStreamBackbone(self.params, config.backbone)
        # single-modality models feed their own P3..P5 straight to the head
        self.fusion = PyramidFusion(self.params, config.backbone) if config.backbone.modality == DUAL else None
        widths = {level: config.backbone.width(level) for level in FUSED_LEVELS}
        self.head = DetectionHead(self.params, widths, config.num_classes)
        logger.debug("Built %s detector (scg=%s, pfmg=%s) with %d parameters", config.backbone.modality,
                     config.backbone.enable_scg, config.backbone.enable_pfmg, self.parameter_count())

    @property
    def num_classes(self) -> int:
        return self.config.num_classes

    @property
    def image_size(self) -> int:
        return self.config.backbone.image_size

    @property
    def modality(self) -> str:
        return self.config.backbone.modality

    def features(self, rgb: Tensor, ir: Tensor) -> FusedPyramid:
        if self.fusion is None:
            return self.backbone.single_stream(rgb, ir)
        return fuse_pyramid(backbone_forward(rgb, ir, self.backbone), self.fusion)

    def __call__(self, rgb: Tensor, ir: Tensor) -> Dict[int, Tensor]:
        return self.head(self.features(rgb, ir))

    def parameter_count(self) -> int:
        return self.params.count()

    def flops(self) -> int:
        """Floating-point operations (2 per multiply-accumulate) of one forward pass at batch 1."""
        size = self.image_size
        blank = Tensor(np.zeros((1, 3, size, size)))
        with count_macs() as counter:
            self(blank, blank)
        return 2 * counter.total


def batch_images(scenes: Sequence[Scene]) -> Tuple[Tensor, Tensor]:
    rgb = np.concatenate([scene.rgb for scene in scenes], axis=0)
    ir = np.concatenate([scene.ir for scene in scenes], axis=0)
    return Tensor(rgb), Tensor(ir)


def load_detector(config: ModelConfig, checkpoint: Union[str, Path]) -> PacgDetector:
    """Rebuild the architecture from `config` and load trained values into it."""
    model = PacgDetector(config)
    load_checkpoint(model.params, checkpoint)
    return model
