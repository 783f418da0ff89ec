"""
Dual-stream backbone and pyramid fusion.

Each modality runs through five stride-2 stages (P1..P5, stride 2**i).
With SCG enabled, the two streams are cross-gated after P2, P3 and P4, so
deeper stages consume enhanced features. P2..P5 of both streams form the
DualPyramid; PFMG (or the plain average when PFMG is disabled) then fuses
P3, P4 and P5, each guided by the level before it.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Mapping, Tuple

from core.exceptions import ConfigError
from nn_blocks.layers import Conv, DSBottleneck, ds_bottleneck_forward
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import Tensor, check_feature_map
from tensor_core.exceptions import ShapeError
from tensor_core.ops import ConvSpec, add, scale_shift, silu

from .pfmg import PFMGModule
from .scg import SCGModule, scg_forward
from .types import ModalityPair

logger = logging.getLogger(__name__)

MODALITIES = ('rgb', 'ir')
DUAL = 'both'
MODALITY_CHOICES = (DUAL,) + MODALITIES
STAGES = (1, 2, 3, 4, 5)
PYRAMID_LEVELS = (2, 3, 4, 5)
SCG_LEVELS = (2, 3, 4)
FUSED_LEVELS = (3, 4, 5)
IMAGE_CHANNELS = 3
MAX_STRIDE = 2 ** STAGES[-1]


@dataclass(frozen=True)
class BackboneConfig:
    image_size: int = 64
    widths: Tuple[int, ...] = (8, 16, 32, 64, 128)
    enable_scg: bool = True
    enable_pfmg: bool = True
    # 'both', or one stream alone with no cross-modal fusion
    modality: str = DUAL

    def __post_init__(self):
        object.__setattr__(self, 'widths', tuple(int(w) for w in self.widths))
        if self.image_size < MAX_STRIDE or self.image_size % MAX_STRIDE:
            raise ConfigError(f"image_size must be a positive multiple of {MAX_STRIDE}, got {self.image_size}")
        if len(self.widths) != len(STAGES):
            raise ConfigError(f"widths must list {len(STAGES)} stage widths, got {list(self.widths)}")
        if any(w < 2 or w % 2 for w in self.widths):
            raise ConfigError(f"every stage width must be even and >= 2, got {list(self.widths)}")
        if self.modality not in MODALITY_CHOICES:
            raise ConfigError(f"modality must be one of {', '.join(MODALITY_CHOICES)}, got {self.modality!r}")
        if self.modality != DUAL and (self.enable_scg or self.enable_pfmg):
            raise ConfigError(f"a {self.modality}-only model has no second stream; disable SCG and PFMG")

    @property
    def streams(self) -> Tuple[str, ...]:
        return MODALITIES if self.modality == DUAL else (self.modality,)

    def width(self, level: int) -> int:
        return self.widths[level - 1]

    @staticmethod
    def stride(level: int) -> int:
        return 2 ** level

    def grid_size(self, level: int) -> int:
        return self.image_size // self.stride(level)


@dataclass(frozen=True)
class DualPyramid:
    """Per-modality features at P2..P5."""
    levels: Mapping[int, ModalityPair] = field(default_factory=dict)

    def __getitem__(self, level: int) -> ModalityPair:
        return self.levels[level]


@dataclass(frozen=True)
class FusedPyramid:
    """One fused feature map per level for P3..P5."""
    levels: Mapping[int, Tensor] = field(default_factory=dict)

    def __getitem__(self, level: int) -> Tensor:
        return self.levels[level]

    @property
    def p3(self) -> Tensor:
        return self.levels[3]

    @property
    def p4(self) -> Tensor:
        return self.levels[4]

    @property
    def p5(self) -> Tensor:
        return self.levels[5]


class Stage:
    """Stride-2 3x3 conv -> SiLU -> residual DSBottleneck."""

    def __init__(self, params: ParameterSet, name: str, in_channels: int, out_channels: int):
        self.down = Conv(params, f"{name}.down", ConvSpec(in_channels, out_channels, kernel=3, stride=2, padding=1))
        self.block = DSBottleneck(params, f"{name}.block", out_channels)

    def __call__(self, x: Tensor) -> Tensor:
        return ds_bottleneck_forward(silu(self.down(x)), self.block)


class DualStreamBackbone:
    def __init__(self, params: ParameterSet, config: BackboneConfig):
        self.config = config
        self.stages: Dict[str, Tuple[Stage, ...]] = {}
        for modality in config.streams:
            channels = (IMAGE_CHANNELS,) + config.widths
            self.stages[modality] = tuple(
                Stage(params, f"backbone.{modality}.stage{i}", channels[i - 1], channels[i]) for i in STAGES
            )
        self.scg: Dict[int, SCGModule] = {}
        if config.enable_scg:
            for level in SCG_LEVELS:
                self.scg[level] = SCGModule(params, f"scg.p{level}", config.width(level))

    def _check_images(self, rgb: Tensor, ir: Tensor) -> None:
        check_feature_map(rgb, 'backbone rgb image')
        check_feature_map(ir, 'backbone ir image')
        n, c, h, w = rgb.shape
        if c != IMAGE_CHANNELS or h != w or h % MAX_STRIDE:
            raise ShapeError(
                f"backbone: images must be (N, {IMAGE_CHANNELS}, S, S) with S a multiple of {MAX_STRIDE}, "
                f"got shape {rgb.shape}"
            )
        if ir.shape != rgb.shape:
            raise ShapeError(f"backbone: ir image shape {ir.shape} does not match rgb image shape {rgb.shape}")

    def stream_forward(self, image: Tensor, modality: str) -> Dict[int, Tensor]:
        """Run one modality alone, without any cross-gating."""
        features = {}
        x = image
        for level, stage in zip(STAGES, self.stages[modality]):
            x = stage(x)
            if level in PYRAMID_LEVELS:
                features[level] = x
        return features

    def __call__(self, rgb: Tensor, ir: Tensor) -> DualPyramid:
        if self.config.modality != DUAL:
            raise ConfigError(f"a {self.config.modality}-only backbone has no dual pyramid; use single_stream")
        self._check_images(rgb, ir)
        x_rgb, x_ir = rgb, ir
        levels = {}
        for level, rgb_stage, ir_stage in zip(STAGES, self.stages['rgb'], self.stages['ir']):
            x_rgb, x_ir = rgb_stage(x_rgb), ir_stage(x_ir)
            if level in self.scg:
                pair = scg_forward(ModalityPair(x_rgb, x_ir), self.scg[level])
                x_rgb, x_ir = pair.rgb, pair.ir
            if level in PYRAMID_LEVELS:
                levels[level] = ModalityPair(x_rgb, x_ir)
        return DualPyramid(levels)

    def single_stream(self, rgb: Tensor, ir: Tensor) -> FusedPyramid:
        """P3..P5 of the configured stream alone; the other image is ignored."""
        self._check_images(rgb, ir)
        modality = self.config.modality
        features = self.stream_forward(rgb if modality == 'rgb' else ir, modality)
        return FusedPyramid({level: features[level] for level in FUSED_LEVELS})


class AverageFusion:
    """Fixed equal-weight fusion used when PFMG is disabled."""

    def __call__(self, curr: ModalityPair, prev: ModalityPair) -> Tensor:
        return scale_shift(add(curr.rgb, curr.ir), 0.5)


class PyramidFusion:
    def __init__(self, params: ParameterSet, config: BackboneConfig):
        self.config = config
        if config.enable_pfmg:
            self.modules = {
                level: PFMGModule(params, f"pfmg.p{level}", config.width(level), config.width(level - 1))
                for level in FUSED_LEVELS
            }
        else:
            average = AverageFusion()
            self.modules = {level: average for level in FUSED_LEVELS}

    def __call__(self, pyramid: DualPyramid) -> FusedPyramid:
        return FusedPyramid({level: self.modules[level](pyramid[level], pyramid[level - 1]) for level in FUSED_LEVELS})


def backbone_forward(rgb: Tensor, ir: Tensor, backbone: DualStreamBackbone) -> DualPyramid:
    return backbone(rgb, ir)


def fuse_pyramid(pyramid: DualPyramid, fusion: PyramidFusion) -> FusedPyramid:
    return fusion(pyramid)
