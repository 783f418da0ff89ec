"""
Pyramidal Feature-aware Multimodal Gating (PFMG).

Fuses the RGB/IR pair of level i under guidance from level i-1:

    M_S            = sigmoid(H(concat(rgb_{i-1}, ir_{i-1})))   3x3 stride-2 conv, 1 channel
    F'_rgb, F'_ir  = split(I(concat(rgb_i, ir_i)))             1x1 bottleneck 2C -> C -> 2C
    w_rgb, w_ir    = softmax(W(concat(F'_rgb, F'_ir)))          2 logits per pixel
    F_base         = w_rgb * F'_rgb + w_ir * F'_ir
    F_fused        = F_base + M_S * F_base

The guidance is the raw dual-stream pair of the previous level. Its
spatial size must be exactly twice the current one; nothing is resampled.
"""

import logging
from dataclasses import dataclass

from nn_blocks.layers import Conv, PointwiseBottleneck
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import Tensor
from tensor_core.exceptions import ShapeError
from tensor_core.ops import (
    ConvSpec, add, concat_channels, mul, scale_shift, sigmoid, softmax_channels, split_channels,
)

from .types import ModalityPair

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class PFMGTrace:
    hier_gate: Tensor
    interacted: ModalityPair
    weight_rgb: Tensor
    weight_ir: Tensor
    base: Tensor
    fused: Tensor


class PFMGModule:
    def __init__(self, params: ParameterSet, name: str, channels: int, prev_channels: int):
        self.name = name
        self.channels = channels
        self.prev_channels = prev_channels
        self.hier_gate = Conv(
            params, f"{name}.hier_gate",
            ConvSpec(2 * prev_channels, 1, kernel=3, stride=2, padding=1), gate=True,
        )
        self.interaction = PointwiseBottleneck(params, f"{name}.interaction", 2 * channels, channels, 2 * channels)
        self.weight_head = Conv(params, f"{name}.weight_head", ConvSpec(2 * channels, 2, kernel=1), gate=True)

    def trace(self, curr: ModalityPair, prev: ModalityPair) -> PFMGTrace:
        n, c, h, w = curr.shape
        pn, pc, ph, pw = prev.shape
        if (ph, pw) != (2 * h, 2 * w) or pn != n:
            raise ShapeError(
                f"PFMG '{self.name}': previous level shape {prev.shape} must be exactly twice "
                f"the spatial size of current level shape {curr.shape}"
            )
        if c != self.channels or pc != self.prev_channels:
            raise ShapeError(
                f"PFMG '{self.name}': expected {self.channels}/{self.prev_channels} channels, "
                f"got shapes {curr.shape} and {prev.shape}"
            )
        gate = sigmoid(self.hier_gate(concat_channels(prev.rgb, prev.ir)))
        f_rgb, f_ir = split_channels(self.interaction(concat_channels(curr.rgb, curr.ir)), [c, c])
        weights = softmax_channels(self.weight_head(concat_channels(f_rgb, f_ir)))
        w_rgb, w_ir = split_channels(weights, [1, 1])
        base = add(mul(w_rgb, f_rgb), mul(w_ir, f_ir))
        fused = add(base, mul(gate, base))
        return PFMGTrace(gate, ModalityPair(f_rgb, f_ir), w_rgb, w_ir, base, fused)

    def __call__(self, curr: ModalityPair, prev: ModalityPair) -> Tensor:
        return self.trace(curr, prev).fused


def closed_form_fusion(gate: Tensor, base: Tensor) -> Tensor:
    """(1 + M_S) * F_base, algebraically equal to the two-step fusion."""
    return mul(scale_shift(gate, 1.0, 1.0), base)


def pfmg_forward(curr: ModalityPair, prev: ModalityPair, module: PFMGModule) -> Tensor:
    return module(curr, prev)
