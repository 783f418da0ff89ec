"""
Parameterized layers.

A layer registers its arrays in a ParameterSet under a name prefix when it
is constructed and reads them back by name on every call.
"""

import logging

import numpy as np

from tensor_core.autodiff import Tensor
from tensor_core.exceptions import ShapeError
from tensor_core.ops import ConvSpec, add, conv2d, instance_norm, silu

from .parameters import ParameterSet

logger = logging.getLogger(__name__)

NORM_EPS = 1e-5


class Conv:
    """Convolution with bias; `gate=True` marks a gate-producing head for initialization."""

    def __init__(self, params: ParameterSet, name: str, spec: ConvSpec, gate: bool = False):
        self.params = params
        self.name = name
        self.spec = spec
        self.weight_name, self.bias_name = params.register_conv(name, spec, gate=gate)

    def __call__(self, x: Tensor) -> Tensor:
        return conv2d(x, self.params[self.weight_name], self.params[self.bias_name], self.spec)


class DSBottleneck:
    """
    Depthwise-separable bottleneck.

    reduce 1x1 (C -> C/2) -> SiLU -> depthwise 3x3 (groups C/2) -> SiLU ->
    expand 1x1 (C/2 -> C), plus the block input when `residual` is set.
    With every weight and bias zero the residual block is the identity and
    the plain block outputs zeros.
    """

    def __init__(self, params: ParameterSet, name: str, channels: int, residual: bool = True):
        if channels < 2 or channels % 2:
            raise ShapeError(f"DSBottleneck '{name}': channel count must be even, got {channels}")
        hidden = channels // 2
        self.name = name
        self.channels = channels
        self.residual = residual
        self.reduce = Conv(params, f"{name}.reduce", ConvSpec(channels, hidden, kernel=1))
        self.dw = Conv(params, f"{name}.dw", ConvSpec(hidden, hidden, kernel=3, padding=1, groups=hidden))
        self.expand = Conv(params, f"{name}.expand", ConvSpec(hidden, channels, kernel=1))

    def __call__(self, x: Tensor) -> Tensor:
        if x.shape[1] != self.channels:
            raise ShapeError(f"DSBottleneck '{self.name}': expected {self.channels} channels, got shape {x.shape}")
        branch = self.expand(silu(self.dw(silu(self.reduce(x)))))
        return add(x, branch) if self.residual else branch


class PointwiseBottleneck:
    """1x1 (in -> hidden) -> SiLU -> 1x1 (hidden -> out)."""

    def __init__(self, params: ParameterSet, name: str, in_channels: int, hidden: int, out_channels: int):
        self.name = name
        self.inner = Conv(params, f"{name}.reduce", ConvSpec(in_channels, hidden, kernel=1))
        self.outer = Conv(params, f"{name}.expand", ConvSpec(hidden, out_channels, kernel=1))

    def __call__(self, x: Tensor) -> Tensor:
        return self.outer(silu(self.inner(x)))


class NormLayer:
    """Instance-style normalization with learnable per-channel gamma (init 1) and beta (init 0)."""

    def __init__(self, params: ParameterSet, name: str, channels: int, eps: float = NORM_EPS):
        self.params = params
        self.name = name
        self.eps = eps
        self.gamma_name, self.beta_name = f"{name}.gamma", f"{name}.beta"
        params.register(self.gamma_name, np.ones(channels))
        params.register(self.beta_name, np.zeros(channels))

    def __call__(self, x: Tensor) -> Tensor:
        return instance_norm(x, self.params[self.gamma_name], self.params[self.beta_name], self.eps)


def ds_bottleneck_forward(x: Tensor, block: DSBottleneck) -> Tensor:
    """Apply `block` to `x`; shape-preserving."""
    return block(x)


def norm_forward(x: Tensor, layer: NormLayer) -> Tensor:
    return layer(x)
