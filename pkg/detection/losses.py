"""
Detection loss as a single tape operation.

    total = objectness + classification + box

objectness      BCE of every cell, averaged separately over positive and
                negative cells and the two means added
classification  BCE summed over the K classes, averaged over positive cells
box             (1 - IoU) averaged over positive cells

A ground truth is a positive at the cell holding its centre on every level
whose stride s satisfies s/2 <= max(w, h) <= 4s. The box term goes through
a BoxRegressionLoss so other IoU variants can be plugged in.
"""

import logging
import math
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from fusion.pyramid import FUSED_LEVELS
from tensor_core.autodiff import SCALAR_SHAPE, Tensor, record
from tensor_core.exceptions import ShapeError
from tensor_core.ops import sigmoid_values

from .head import CLASS_OFFSET, LevelPrediction, OBJECTNESS, box_raw_jacobian, head_channels, level_stride
from .synth import SceneObject

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class CellTarget:
    image: int
    level: int
    row: int
    col: int
    class_id: int
    box: Tuple[float, float, float, float]  # cx, cy, w, h


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    objectness: float
    classification: float
    box: float
    num_positive: int


def levels_for_size(size: float, levels: Sequence[int] = FUSED_LEVELS) -> List[int]:
    matching = [level for level in levels if level_stride(level) / 2 <= size <= 4 * level_stride(level)]
    if matching:
        return matching
    return [levels[0]] if size < level_stride(levels[0]) / 2 else [levels[-1]]


def assign_targets(
    objects_per_image: Sequence[Sequence[SceneObject]],
    image_size: int,
    levels: Sequence[int] = FUSED_LEVELS,
) -> List[CellTarget]:
    """Centre-cell assignment; a cell already claimed keeps its first object."""
    targets = []
    taken = set()
    for image, objects in enumerate(objects_per_image):
        for obj in objects:
            for level in levels_for_size(max(obj.w, obj.h), levels):
                stride = level_stride(level)
                grid = image_size // stride
                row = min(int(obj.cy // stride), grid - 1)
                col = min(int(obj.cx // stride), grid - 1)
                key = (image, level, row, col)
                if key in taken:
                    logger.debug("Cell %s already holds a target; skipping class %d", key, obj.class_id)
                    continue
                taken.add(key)
                targets.append(CellTarget(image, level, row, col, obj.class_id, (obj.cx, obj.cy, float(obj.w), float(obj.h))))
    return targets


def bce_with_logits(logits: np.ndarray, targets: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Elementwise binary cross-entropy on logits and its derivative."""
    loss = np.maximum(logits, 0.0) - logits * targets + np.log1p(np.exp(-np.abs(logits)))
    return loss, sigmoid_values(logits) - targets


class BoxRegressionLoss(ABC):
    name = 'box'

    @abstractmethod
    def __call__(self, pred: np.ndarray, target: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """Per-box loss (P,) and its gradient w.r.t. pred (P, 4); rows are (cx, cy, w, h)."""


class IoULoss(BoxRegressionLoss):
    """1 - IoU of axis-aligned boxes."""
    name = 'iou'

    def __call__(self, pred, target):
        px1, px2 = pred[:, 0] - pred[:, 2] / 2, pred[:, 0] + pred[:, 2] / 2
        py1, py2 = pred[:, 1] - pred[:, 3] / 2, pred[:, 1] + pred[:, 3] / 2
        gx1, gx2 = target[:, 0] - target[:, 2] / 2, target[:, 0] + target[:, 2] / 2
        gy1, gy2 = target[:, 1] - target[:, 3] / 2, target[:, 1] + target[:, 3] / 2

        iw_raw = np.minimum(px2, gx2) - np.maximum(px1, gx1)
        ih_raw = np.minimum(py2, gy2) - np.maximum(py1, gy1)
        overlap = (iw_raw > 0) & (ih_raw > 0)
        iw, ih = np.where(overlap, iw_raw, 0.0), np.where(overlap, ih_raw, 0.0)
        inter = iw * ih
        area_p = pred[:, 2] * pred[:, 3]
        union = area_p + target[:, 2] * target[:, 3] - inter
        iou = inter / union

        d_inter = (union + inter) / union ** 2
        d_area = -inter / union ** 2
        d_px1 = -ih * (px1 > gx1)
        d_px2 = ih * (px2 < gx2)
        d_py1 = -iw * (py1 > gy1)
        d_py2 = iw * (py2 < gy2)
        grad_iou = np.stack([
            d_inter * (d_px1 + d_px2),
            d_inter * (d_py1 + d_py2),
            d_inter * (d_px2 - d_px1) / 2 + d_area * pred[:, 3],
            d_inter * (d_py2 - d_py1) / 2 + d_area * pred[:, 2],
        ], axis=1)
        return 1.0 - iou, -grad_iou


def _loss_vjp(grad, level_grads):
    scale = float(grad.reshape(-1)[0])
    return tuple(g * scale for g in level_grads)


def detection_loss(
    outputs: Mapping[int, Tensor],
    targets: Sequence[CellTarget],
    num_classes: int,
    box_loss: Optional[BoxRegressionLoss] = None,
) -> Tuple[Tensor, LossBreakdown]:
    box_loss = box_loss or IoULoss()
    levels = sorted(outputs)
    channels = head_channels(num_classes)
    preds: Dict[int, LevelPrediction] = {}
    for level in levels:
        raw = outputs[level]
        if raw.ndim != 4 or raw.shape[1] != channels:
            raise ShapeError(f"detection_loss: level P{level} output shape {raw.shape} needs {channels} channels")
        preds[level] = LevelPrediction.from_raw(raw.data, num_classes, level_stride(level))

    positive = {level: np.zeros(preds[level].objectness.shape, dtype=bool) for level in levels}
    for t in targets:
        positive[t.level][t.image, t.row, t.col] = True
    num_pos = int(sum(mask.sum() for mask in positive.values()))
    num_neg = int(sum(mask.size for mask in positive.values())) - num_pos

    # cell-major gradients, transposed back to (N, C, H, W) at the end
    cell_grads = {level: np.zeros(preds[level].objectness.shape + (channels,)) for level in levels}

    obj_loss = 0.0
    for level in levels:
        loss, grad = bce_with_logits(preds[level].objectness, positive[level].astype(float))
        mask = positive[level]
        weights = np.where(mask, 1.0 / max(num_pos, 1), 1.0 / max(num_neg, 1))
        obj_loss += float((loss * weights).sum())
        cell_grads[level][..., OBJECTNESS] = grad * weights

    cls_loss = 0.0
    box_value = 0.0
    if targets:
        index = [(t.level, t.image, t.row, t.col) for t in targets]
        logits = np.stack([preds[lv].classes[n, r, c] for lv, n, r, c in index])
        onehot = np.zeros_like(logits)
        onehot[np.arange(len(targets)), [t.class_id for t in targets]] = 1.0
        loss, grad = bce_with_logits(logits, onehot)
        cls_loss = float(loss.sum()) / len(targets)
        grad = grad / len(targets)

        raw_box = np.stack([preds[lv].box_raw[n, r, c] for lv, n, r, c in index])
        decoded_levels = {lv: preds[lv].boxes() for lv in {t.level for t in targets}}
        decoded = np.stack([decoded_levels[lv][n, r, c] for lv, n, r, c in index])
        strides = np.array([level_stride(lv) for lv, _, _, _ in index], dtype=float)
        box_losses, box_grad = box_loss(decoded, np.array([t.box for t in targets], dtype=float))
        box_value = float(box_losses.sum()) / len(targets)
        jac = box_raw_jacobian(raw_box, decoded, strides)
        raw_grad = box_grad * jac / len(targets)

        for k, (lv, n, r, c) in enumerate(index):
            cell_grads[lv][n, r, c, CLASS_OFFSET:CLASS_OFFSET + num_classes] = grad[k]
            cell_grads[lv][n, r, c, CLASS_OFFSET + num_classes:] = raw_grad[k]

    total = obj_loss + cls_loss + box_value
    breakdown = LossBreakdown(total, obj_loss, cls_loss, box_value, num_pos)
    level_grads = [np.ascontiguousarray(cell_grads[level].transpose(0, 3, 1, 2)) for level in levels]
    value = np.full(SCALAR_SHAPE, total)
    tensor = record('detection_loss', [outputs[level] for level in levels], value,
                    lambda grad: _loss_vjp(grad, level_grads))
    if not math.isfinite(total):
        logger.warning("Non-finite detection loss: %r", breakdown)
    return tensor, breakdown
