"""
Per-level 1x1 detection head and box decoding.

Every cell of a fused level predicts 1 objectness logit, K class logits
and 4 box offsets (tx, ty, tw, th):

    cx = (j + sigmoid(tx)) * stride
    cy = (i + sigmoid(ty)) * stride
    w  = stride * exp(tw)
    h  = stride * exp(th)

so a decoded box is centred inside its own cell and always has positive
extent.
"""

import logging
from dataclasses import dataclass
from typing import Dict, Mapping

import numpy as np

from fusion.pyramid import FUSED_LEVELS, FusedPyramid
from nn_blocks.layers import Conv
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import Tensor
from tensor_core.ops import ConvSpec, sigmoid_values

logger = logging.getLogger(__name__)

OBJECTNESS = 0
CLASS_OFFSET = 1
BOX_CHANNELS = 4
# Objectness bias starts at logit(0.01): nearly every cell is background.
OBJECTNESS_PRIOR = 0.01
# exp() argument bound for w and h; the gradient is zero outside it.
MAX_LOG_SCALE = 6.0


def head_channels(num_classes: int) -> int:
    return 1 + num_classes + BOX_CHANNELS


def level_stride(level: int) -> int:
    return 2 ** level


class DetectionHead:
    def __init__(self, params: ParameterSet, widths: Mapping[int, int], num_classes: int):
        self.num_classes = num_classes
        self.convs: Dict[int, Conv] = {}
        prior_logit = np.log(OBJECTNESS_PRIOR / (1.0 - OBJECTNESS_PRIOR))
        for level in FUSED_LEVELS:
            conv = Conv(params, f"head.p{level}", ConvSpec(widths[level], head_channels(num_classes), kernel=1))
            bias = np.zeros(conv.spec.out_channels)
            bias[OBJECTNESS] = prior_logit
            params[conv.bias_name] = bias
            self.convs[level] = conv

    def __call__(self, fused: FusedPyramid) -> Dict[int, Tensor]:
        return {level: conv(fused[level]) for level, conv in self.convs.items()}


@dataclass(frozen=True)
class LevelPrediction:
    """Raw head output of one level split into its parts, cell-major (N, H, W, ...)."""
    objectness: np.ndarray
    classes: np.ndarray
    box_raw: np.ndarray
    stride: int

    @classmethod
    def from_raw(cls, raw: np.ndarray, num_classes: int, stride: int) -> 'LevelPrediction':
        cells = raw.transpose(0, 2, 3, 1)
        return cls(
            objectness=cells[..., OBJECTNESS],
            classes=cells[..., CLASS_OFFSET:CLASS_OFFSET + num_classes],
            box_raw=cells[..., CLASS_OFFSET + num_classes:],
            stride=stride,
        )

    def boxes(self) -> np.ndarray:
        """Decoded (cx, cy, w, h) per cell, shape (N, H, W, 4)."""
        return decode_boxes(self.box_raw, self.stride)


def decode_boxes(box_raw: np.ndarray, stride: int) -> np.ndarray:
    n, h, w, _ = box_raw.shape
    rows = np.arange(h, dtype=float)[None, :, None]
    cols = np.arange(w, dtype=float)[None, None, :]
    cx = (cols + sigmoid_values(box_raw[..., 0])) * stride
    cy = (rows + sigmoid_values(box_raw[..., 1])) * stride
    bw = stride * np.exp(np.clip(box_raw[..., 2], -MAX_LOG_SCALE, MAX_LOG_SCALE))
    bh = stride * np.exp(np.clip(box_raw[..., 3], -MAX_LOG_SCALE, MAX_LOG_SCALE))
    return np.stack([cx, cy, bw, bh], axis=-1)


def box_raw_jacobian(box_raw: np.ndarray, boxes: np.ndarray, stride: int) -> np.ndarray:
    """Elementwise d(cx, cy, w, h) / d(tx, ty, tw, th)."""
    s_x = sigmoid_values(box_raw[..., 0])
    s_y = sigmoid_values(box_raw[..., 1])
    inside_w = np.abs(box_raw[..., 2]) < MAX_LOG_SCALE
    inside_h = np.abs(box_raw[..., 3]) < MAX_LOG_SCALE
    return np.stack([
        stride * s_x * (1.0 - s_x),
        stride * s_y * (1.0 - s_y),
        boxes[..., 2] * inside_w,
        boxes[..., 3] * inside_h,
    ], axis=-1)
