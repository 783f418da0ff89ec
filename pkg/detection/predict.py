"""
Decoding head outputs into scored detections, with class-aware greedy NMS.
"""

import logging
from typing import Dict, List, Sequence

import numpy as np

from evaluation.metrics import Box, Detection, iou_matrix
from tensor_core.autodiff import Tensor
from tensor_core.ops import sigmoid_values

from .head import LevelPrediction, level_stride
from .model import PacgDetector, batch_images
from .synth import Scene

logger = logging.getLogger(__name__)

DEFAULT_SCORE_THRESHOLD = 0.001
DEFAULT_NMS_IOU = 0.5


def nms(boxes: np.ndarray, scores: np.ndarray, iou_threshold: float = DEFAULT_NMS_IOU) -> List[int]:
    """
    Greedy suppression over (n, 4) corner boxes.

    Returns kept indices by descending score (ties keep input order); a box
    is dropped when its IoU with an already kept box exceeds iou_threshold.
    """
    order = np.argsort(-np.asarray(scores, dtype=float), kind='stable')
    keep = []
    while order.size > 0:
        i = int(order[0])
        keep.append(i)
        rest = order[1:]
        if rest.size == 0:
            break
        overlaps = iou_matrix(boxes[i:i + 1], boxes[rest])[0]
        order = rest[overlaps <= iou_threshold]
    return keep


def class_aware_nms(boxes: np.ndarray, scores: np.ndarray, classes: np.ndarray,
                    iou_threshold: float = DEFAULT_NMS_IOU) -> List[int]:
    keep = []
    for class_id in np.unique(classes):
        members = np.flatnonzero(classes == class_id)
        keep.extend(int(members[k]) for k in nms(boxes[members], scores[members], iou_threshold))
    return sorted(keep, key=lambda k: (-scores[k], k))


def decode_detections(
    outputs: Dict[int, Tensor],
    num_classes: int,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
) -> List[List[Detection]]:
    """Per-image detection lists for a batch of head outputs."""
    batch = next(iter(outputs.values())).shape[0]
    corners, scores, classes, images = [], [], [], []
    for level in sorted(outputs):
        pred = LevelPrediction.from_raw(outputs[level].data, num_classes, level_stride(level))
        centers = pred.boxes().reshape(-1, 4)
        objectness = sigmoid_values(pred.objectness).reshape(-1)
        class_probs = sigmoid_values(pred.classes).reshape(-1, num_classes)
        best = class_probs.argmax(axis=1)
        corners.append(np.stack([
            centers[:, 0] - centers[:, 2] / 2, centers[:, 1] - centers[:, 3] / 2,
            centers[:, 0] + centers[:, 2] / 2, centers[:, 1] + centers[:, 3] / 2,
        ], axis=1))
        scores.append(objectness * class_probs[np.arange(best.size), best])
        classes.append(best)
        images.append(np.repeat(np.arange(batch), pred.objectness[0].size))
    corners, scores = np.concatenate(corners), np.concatenate(scores)
    classes, images = np.concatenate(classes), np.concatenate(images)

    results: List[List[Detection]] = []
    for image in range(batch):
        candidates = np.flatnonzero((images == image) & (scores > score_threshold))
        kept = class_aware_nms(corners[candidates], scores[candidates], classes[candidates], nms_iou)
        results.append([
            Detection(int(classes[c]), float(scores[c]), Box(*corners[c].tolist()), image)
            for c in candidates[kept]
        ])
    return results


def predict(
    model: PacgDetector,
    scene: Scene,
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
) -> List[Detection]:
    return decode_detections(model(*batch_images([scene])), model.num_classes, score_threshold, nms_iou)[0]


def predict_scenes(
    model: PacgDetector,
    scenes: Sequence[Scene],
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
    batch_size: int = 8,
) -> List[List[Detection]]:
    results = []
    for start in range(0, len(scenes), batch_size):
        chunk = scenes[start:start + batch_size]
        results.extend(decode_detections(model(*batch_images(chunk)), model.num_classes, score_threshold, nms_iou))
    return results
