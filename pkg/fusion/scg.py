"""
Symmetrical Cross-Gating (SCG).

For the RGB side (the IR side mirrors it with its own parameters):

    F'_rgb = R_rgb(F_rgb)                    refined features
    M      = sigmoid(Conv1x1_{C->1}(F'_ir))  spatial gate from the other modality
    F~_rgb = F'_rgb * (1 + M)                residual-preserving spatial enhancement
    G      = P(F'_ir)                        projected cross-modal features
    g      = sigmoid(Conv1x1_{C->C}(G))      per-position, per-channel gate
    out    = Norm(F_rgb + F~_rgb + g * G)

Because 1 + M lies in (1, 2) the spatial gate can amplify but never erase
the refined features.
"""

import logging
from dataclasses import dataclass

from nn_blocks.layers import Conv, DSBottleneck, NormLayer, ds_bottleneck_forward, norm_forward
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import Tensor
from tensor_core.exceptions import ShapeError
from tensor_core.ops import ConvSpec, add, mul, scale_shift, sigmoid

from .types import ModalityPair

logger = logging.getLogger(__name__)


class CrossGate:
    """Parameters of one gating direction (e.g. ir_to_rgb: IR features gate the RGB stream)."""

    def __init__(self, params: ParameterSet, name: str, channels: int):
        self.spatial_gate = Conv(params, f"{name}.spatial_gate", ConvSpec(channels, 1, kernel=1), gate=True)
        self.projection = DSBottleneck(params, f"{name}.projection", channels, residual=False)
        self.channel_gate = Conv(params, f"{name}.channel_gate", ConvSpec(channels, channels, kernel=1), gate=True)


@dataclass(frozen=True)
class SCGTrace:
    """Intermediate values of one SCG pass, keyed by the stream they act on."""
    refined: ModalityPair
    spatial_gates: ModalityPair
    channel_gates: ModalityPair
    projections: ModalityPair
    output: ModalityPair


class SCGModule:
    def __init__(self, params: ParameterSet, name: str, channels: int):
        if channels < 2 or channels % 2:
            raise ShapeError(f"SCG '{name}': channel count must be even, got {channels}")
        self.name = name
        self.channels = channels
        self.rgb_refiner = DSBottleneck(params, f"{name}.rgb_refiner", channels)
        self.ir_refiner = DSBottleneck(params, f"{name}.ir_refiner", channels)
        self.ir_to_rgb = CrossGate(params, f"{name}.ir_to_rgb", channels)
        self.rgb_to_ir = CrossGate(params, f"{name}.rgb_to_ir", channels)
        self.rgb_norm = NormLayer(params, f"{name}.rgb_norm", channels)
        self.ir_norm = NormLayer(params, f"{name}.ir_norm", channels)

    def trace(self, pair: ModalityPair) -> SCGTrace:
        if pair.shape[1] != self.channels:
            raise ShapeError(f"SCG '{self.name}': expected {self.channels} channels, got shape {pair.shape}")
        refined_rgb = ds_bottleneck_forward(pair.rgb, self.rgb_refiner)
        refined_ir = ds_bottleneck_forward(pair.ir, self.ir_refiner)
        out_rgb, m_rgb, g_rgb, p_rgb = _enhance(pair.rgb, refined_rgb, refined_ir, self.ir_to_rgb, self.rgb_norm)
        out_ir, m_ir, g_ir, p_ir = _enhance(pair.ir, refined_ir, refined_rgb, self.rgb_to_ir, self.ir_norm)
        return SCGTrace(
            refined=ModalityPair(refined_rgb, refined_ir),
            spatial_gates=ModalityPair(m_rgb, m_ir),
            channel_gates=ModalityPair(g_rgb, g_ir),
            projections=ModalityPair(p_rgb, p_ir),
            output=ModalityPair(out_rgb, out_ir),
        )

    def __call__(self, pair: ModalityPair) -> ModalityPair:
        return self.trace(pair).output


def _enhance(own_in: Tensor, own_refined: Tensor, other_refined: Tensor, gate: CrossGate, norm: NormLayer):
    spatial = sigmoid(gate.spatial_gate(other_refined))
    enhanced = mul(own_refined, scale_shift(spatial, 1.0, 1.0))
    projected = ds_bottleneck_forward(other_refined, gate.projection)
    channel = sigmoid(gate.channel_gate(projected))
    out = norm_forward(add(add(own_in, enhanced), mul(channel, projected)), norm)
    return out, spatial, channel, projected


def scg_forward(pair: ModalityPair, module: SCGModule) -> ModalityPair:
    return module(pair)
