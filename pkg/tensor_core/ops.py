"""
Differentiable operations on FeatureMaps.

Each operation validates its operands, computes the forward value with
numpy and records a vector-Jacobian product on the active tape. The
backward rules are module-level functions (`_<op>_vjp`) so that a single
rule can be swapped out when testing the gradient checker itself.

Broadcasting is deliberately narrow: an operand may have 1 channel
(broadcast over C) or 1x1 spatial extent (broadcast over H, W); the batch
dimension must match. Anything wider is rejected.
"""

import logging
from contextlib import contextmanager
from contextvars import ContextVar
from dataclasses import dataclass
from typing import Iterator, List, Optional, Sequence, Tuple

import numpy as np

from .autodiff import DTYPE, SCALAR_SHAPE, Tensor, check_feature_map, record
from .exceptions import ShapeError

logger = logging.getLogger(__name__)

SIGMOID_FLOOR = np.finfo(DTYPE).tiny
SIGMOID_CEIL = 1.0 - np.finfo(DTYPE).epsneg


# --- Convolution ---

@dataclass(frozen=True)
class ConvSpec:
    """Geometry of a 2-D convolution (kernel 1 or 3, stride 1 or 2, padding 0 or 1)."""
    in_channels: int
    out_channels: int
    kernel: int = 1
    stride: int = 1
    padding: int = 0
    groups: int = 1

    def __post_init__(self):
        if self.kernel not in (1, 3):
            raise ShapeError(f"ConvSpec: kernel must be 1 or 3, got {self.kernel}")
        if self.stride not in (1, 2):
            raise ShapeError(f"ConvSpec: stride must be 1 or 2, got {self.stride}")
        if self.padding not in (0, 1):
            raise ShapeError(f"ConvSpec: padding must be 0 or 1, got {self.padding}")
        if self.in_channels < 1 or self.out_channels < 1 or self.groups < 1:
            raise ShapeError(f"ConvSpec: channels and groups must be positive: {self}")
        if self.in_channels % self.groups or self.out_channels % self.groups:
            raise ShapeError(
                f"ConvSpec: in_channels={self.in_channels} and out_channels={self.out_channels} "
                f"must both be divisible by groups={self.groups}"
            )

    @property
    def weight_shape(self) -> Tuple[int, int, int, int]:
        return (self.out_channels, self.in_channels // self.groups, self.kernel, self.kernel)

    @property
    def fan_in(self) -> int:
        return (self.in_channels // self.groups) * self.kernel * self.kernel

    def output_size(self, height: int, width: int) -> Tuple[int, int]:
        out_h = (height + 2 * self.padding - self.kernel) // self.stride + 1
        out_w = (width + 2 * self.padding - self.kernel) // self.stride + 1
        return out_h, out_w


class MacCounter:
    """Accumulates multiply-accumulate operations executed by conv2d."""

    def __init__(self):
        self.total = 0

    def add(self, count: int) -> None:
        self.total += int(count)


_MAC_COUNTER: ContextVar[Optional[MacCounter]] = ContextVar('pacgnet_mac_counter', default=None)


@contextmanager
def count_macs() -> Iterator[MacCounter]:
    """Count conv multiply-accumulates executed inside the block."""
    counter = MacCounter()
    token = _MAC_COUNTER.set(counter)
    try:
        yield counter
    finally:
        _MAC_COUNTER.reset(token)


def _im2col(xp: np.ndarray, spec: ConvSpec, out_h: int, out_w: int) -> np.ndarray:
    """Patches of a padded input as (N, groups, C/groups * k * k, out_h * out_w)."""
    n, c, _, _ = xp.shape
    k, s = spec.kernel, spec.stride
    if k == 1:
        patches = xp[:, :, ::s, ::s][:, :, :out_h, :out_w]
    else:
        xp = np.ascontiguousarray(xp)
        sn, sc, sh, sw = xp.strides
        patches = np.lib.stride_tricks.as_strided(
            xp,
            shape=(n, c, k, k, out_h, out_w),
            strides=(sn, sc, sh, sw, s * sh, s * sw),
            writeable=False,
        )
    return patches.reshape(n, spec.groups, (c // spec.groups) * k * k, out_h * out_w)


def _col2im(cols: np.ndarray, padded_shape: Tuple[int, ...], spec: ConvSpec, out_h: int, out_w: int) -> np.ndarray:
    """Scatter-add patch gradients back onto the padded input grid."""
    n, c, hp, wp = padded_shape
    k, s = spec.kernel, spec.stride
    cols = cols.reshape(n, c, k, k, out_h, out_w)
    grid = np.zeros(padded_shape, dtype=DTYPE)
    for i in range(k):
        for j in range(k):
            grid[:, :, i:i + s * (out_h - 1) + 1:s, j:j + s * (out_w - 1) + 1:s] += cols[:, :, i, j]
    return grid


def _conv2d_vjp(grad, x_shape, xp_shape, cols, weight, spec, out_h, out_w):
    n = grad.shape[0]
    g = spec.groups
    cog = spec.out_channels // g
    go = grad.reshape(n, g, cog, out_h * out_w)
    w_mat = weight.reshape(g, cog, -1)
    grad_w = np.matmul(go, cols.transpose(0, 1, 3, 2)).sum(axis=0).reshape(weight.shape)
    grad_b = grad.sum(axis=(0, 2, 3))
    grad_cols = np.matmul(w_mat.transpose(0, 2, 1), go)
    grad_xp = _col2im(grad_cols, xp_shape, spec, out_h, out_w)
    p = spec.padding
    grad_x = grad_xp[:, :, p:p + x_shape[2], p:p + x_shape[3]]
    return np.ascontiguousarray(grad_x), grad_w, grad_b


def conv2d(x: Tensor, weight: Tensor, bias: Tensor, spec: ConvSpec) -> Tensor:
    """
    2-D convolution with per-output-channel bias.

    weight has shape (out, in/groups, k, k); bias has shape (out,).
    """
    check_feature_map(x, 'conv2d')
    if x.shape[1] != spec.in_channels:
        raise ShapeError(
            f"conv2d: input shape {x.shape} has {x.shape[1]} channels, "
            f"spec expects {spec.in_channels} (weight shape {spec.weight_shape})"
        )
    if weight.shape != spec.weight_shape:
        raise ShapeError(f"conv2d: weight shape {weight.shape} does not match spec shape {spec.weight_shape}")
    if bias.shape != (spec.out_channels,):
        raise ShapeError(f"conv2d: bias shape {bias.shape} does not match ({spec.out_channels},)")

    n, _, h, w = x.shape
    out_h, out_w = spec.output_size(h, w)
    if out_h < 1 or out_w < 1:
        raise ShapeError(f"conv2d: input shape {x.shape} is too small for spec {spec}")

    p = spec.padding
    xp = np.pad(x.data, ((0, 0), (0, 0), (p, p), (p, p))) if p else x.data
    cols = _im2col(xp, spec, out_h, out_w)
    w_mat = weight.data.reshape(spec.groups, spec.out_channels // spec.groups, -1)
    out = np.matmul(w_mat, cols).reshape(n, spec.out_channels, out_h, out_w)
    out = out + bias.data[None, :, None, None]

    counter = _MAC_COUNTER.get()
    if counter is not None:
        counter.add(n * spec.out_channels * spec.fan_in * out_h * out_w)

    x_shape, xp_shape, w_data = x.shape, xp.shape, weight.data

    def vjp(grad):
        return _conv2d_vjp(grad, x_shape, xp_shape, cols, w_data, spec, out_h, out_w)

    return record('conv2d', (x, weight, bias), out, vjp)


# --- Elementwise ---

def sigmoid_values(a: np.ndarray) -> np.ndarray:
    e = np.exp(-np.abs(a))
    s = np.where(a >= 0, 1.0 / (1.0 + e), e / (1.0 + e))
    return np.clip(s, SIGMOID_FLOOR, SIGMOID_CEIL)


def _sigmoid_vjp(grad, s):
    return (grad * s * (1.0 - s),)


def sigmoid(x: Tensor) -> Tensor:
    """Logistic function, clamped to the open interval (0, 1)."""
    s = sigmoid_values(x.data)
    return record('sigmoid', (x,), s, lambda grad: _sigmoid_vjp(grad, s))


def _silu_vjp(grad, a, s):
    return (grad * (s + a * s * (1.0 - s)),)


def silu(x: Tensor) -> Tensor:
    """x * sigmoid(x)."""
    a = x.data
    s = sigmoid_values(a)
    return record('silu', (x,), a * s, lambda grad: _silu_vjp(grad, a, s))


def _broadcast_shape(op: str, a: Tuple[int, ...], b: Tuple[int, ...]) -> Tuple[int, ...]:
    if len(a) != 4 or len(b) != 4:
        raise ShapeError(f"{op}: operands must be rank 4, got {a} and {b}")
    if a == b:
        return a
    if a[0] != b[0]:
        raise ShapeError(f"{op}: batch sizes differ in shapes {a} and {b}")
    for small, large in ((a, b), (b, a)):
        one_channel = small[1] == 1 and small[2:] == large[2:]
        one_pixel = small[2:] == (1, 1) and small[1] == large[1]
        if one_channel or one_pixel:
            return large
    raise ShapeError(f"{op}: cannot broadcast shapes {a} and {b}")


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    axes = tuple(i for i, (g, s) in enumerate(zip(grad.shape, shape)) if s == 1 and g != 1)
    return grad.sum(axis=axes, keepdims=True)


def _add_vjp(grad, a_shape, b_shape):
    return _unbroadcast(grad, a_shape), _unbroadcast(grad, b_shape)


def add(x: Tensor, y: Tensor) -> Tensor:
    _broadcast_shape('add', x.shape, y.shape)
    a_shape, b_shape = x.shape, y.shape
    return record('add', (x, y), x.data + y.data, lambda grad: _add_vjp(grad, a_shape, b_shape))


def _mul_vjp(grad, a, b):
    return _unbroadcast(grad * b, a.shape), _unbroadcast(grad * a, b.shape)


def mul(x: Tensor, y: Tensor) -> Tensor:
    """Elementwise product; one operand may be a 1-channel mask or a per-channel scalar map."""
    _broadcast_shape('mul', x.shape, y.shape)
    a, b = x.data, y.data
    return record('mul', (x, y), a * b, lambda grad: _mul_vjp(grad, a, b))


def _scale_shift_vjp(grad, scale):
    return (grad * scale,)


def scale_shift(x: Tensor, scale: float = 1.0, shift: float = 0.0) -> Tensor:
    """scale * x + shift with constant scalars."""
    check_feature_map(x, 'scale_shift')
    return record('scale_shift', (x,), x.data * scale + shift, lambda grad: _scale_shift_vjp(grad, scale))


def _sum_vjp(grad, shape):
    return (np.broadcast_to(grad.reshape(1, 1, 1, 1), shape).copy(),)


def sum_all(x: Tensor) -> Tensor:
    """Sum of every element as a (1, 1, 1, 1) scalar."""
    check_feature_map(x, 'sum_all')
    shape = x.shape
    total = np.array(x.data.sum(), dtype=DTYPE).reshape(SCALAR_SHAPE)
    return record('sum_all', (x,), total, lambda grad: _sum_vjp(grad, shape))


# --- Channel-structured ---

def _softmax_vjp(grad, s):
    return (s * (grad - (grad * s).sum(axis=1, keepdims=True)),)


def softmax_channels(x: Tensor) -> Tensor:
    """Softmax across the channel axis at every (n, h, w), with max subtraction."""
    check_feature_map(x, 'softmax_channels')
    if x.shape[1] < 2:
        raise ShapeError(f"softmax_channels: needs at least 2 channels, got shape {x.shape}")
    shifted = x.data - x.data.max(axis=1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=1, keepdims=True)
    return record('softmax_channels', (x,), s, lambda grad: _softmax_vjp(grad, s))


def _concat_vjp(grad, bounds):
    return tuple(grad[:, lo:hi] for lo, hi in bounds)


def concat_channels(*xs: Tensor) -> Tensor:
    if not xs:
        raise ShapeError("concat_channels: nothing to concatenate")
    for x in xs:
        check_feature_map(x, 'concat_channels')
    ref = xs[0].shape
    for x in xs[1:]:
        if (x.shape[0], x.shape[2], x.shape[3]) != (ref[0], ref[2], ref[3]):
            raise ShapeError(f"concat_channels: shapes {ref} and {x.shape} differ outside the channel axis")
    bounds = []
    start = 0
    for x in xs:
        bounds.append((start, start + x.shape[1]))
        start += x.shape[1]
    out = np.concatenate([x.data for x in xs], axis=1)
    return record('concat_channels', xs, out, lambda grad: _concat_vjp(grad, bounds))


def _slice_vjp(grad, shape, lo, hi):
    full = np.zeros(shape, dtype=DTYPE)
    full[:, lo:hi] = grad
    return (full,)


def _channel_slice(x: Tensor, lo: int, hi: int) -> Tensor:
    shape = x.shape
    return record('channel_slice', (x,), x.data[:, lo:hi].copy(), lambda grad: _slice_vjp(grad, shape, lo, hi))


def split_channels(x: Tensor, sizes: Sequence[int]) -> List[Tensor]:
    check_feature_map(x, 'split_channels')
    if any(size < 1 for size in sizes) or sum(sizes) != x.shape[1]:
        raise ShapeError(f"split_channels: sizes {list(sizes)} do not partition the channels of shape {x.shape}")
    parts = []
    start = 0
    for size in sizes:
        parts.append(_channel_slice(x, start, start + size))
        start += size
    return parts


# --- Normalization ---

def _instance_norm_vjp(grad, xhat, inv_std, gamma):
    hw = xhat.shape[2] * xhat.shape[3]
    g_hat = grad * gamma[None, :, None, None]
    grad_x = inv_std / hw * (
        hw * g_hat
        - g_hat.sum(axis=(2, 3), keepdims=True)
        - xhat * (g_hat * xhat).sum(axis=(2, 3), keepdims=True)
    )
    grad_gamma = (grad * xhat).sum(axis=(0, 2, 3))
    grad_beta = grad.sum(axis=(0, 2, 3))
    return grad_x, grad_gamma, grad_beta


def instance_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """
    Per-sample, per-channel standardization over spatial positions, then gamma * x_hat + beta.

    With a single spatial position the variance is zero and x_hat is zero,
    so only the affine shift remains.
    """
    check_feature_map(x, 'instance_norm')
    c = x.shape[1]
    if gamma.shape != (c,) or beta.shape != (c,):
        raise ShapeError(f"instance_norm: gamma {gamma.shape} / beta {beta.shape} do not match input shape {x.shape}")
    a = x.data
    mean = a.mean(axis=(2, 3), keepdims=True)
    centered = a - mean
    var = (centered * centered).mean(axis=(2, 3), keepdims=True)
    inv_std = 1.0 / np.sqrt(var + eps)
    xhat = centered * inv_std
    g = gamma.data
    out = xhat * g[None, :, None, None] + beta.data[None, :, None, None]
    return record('instance_norm', (x, gamma, beta), out,
                  lambda grad: _instance_norm_vjp(grad, xhat, inv_std, g))
