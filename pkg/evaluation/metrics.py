"""
Box overlap and average precision at a fixed IoU threshold.

AP uses all-point interpolation: precision/recall are taken at every
distinct score threshold (detections sharing a score enter together), the
precision curve is replaced by its monotone envelope and the area under it
is summed over the recall steps.
"""

import logging
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from core.exceptions import EvaluationError

logger = logging.getLogger(__name__)

IOU_THRESHOLD = 0.5


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in pixel coordinates, x1 < x2 and y1 < y2."""
    x1: float
    y1: float
    x2: float
    y2: float

    def __post_init__(self):
        values = (self.x1, self.y1, self.x2, self.y2)
        if not all(np.isfinite(values)):
            raise EvaluationError(f"Box coordinates must be finite: {values}")
        if not (self.x1 < self.x2 and self.y1 < self.y2):
            raise EvaluationError(f"Degenerate box {values}: need x1 < x2 and y1 < y2")

    @classmethod
    def from_center(cls, cx: float, cy: float, w: float, h: float) -> 'Box':
        return cls(cx - w / 2.0, cy - h / 2.0, cx + w / 2.0, cy + h / 2.0)

    @property
    def area(self) -> float:
        return (self.x2 - self.x1) * (self.y2 - self.y1)

    def as_tuple(self) -> Tuple[float, float, float, float]:
        return (self.x1, self.y1, self.x2, self.y2)


@dataclass(frozen=True)
class Detection:
    class_id: int
    score: float
    box: Box
    image_id: int = 0

    def __post_init__(self):
        if not (0.0 <= self.score <= 1.0):
            raise EvaluationError(f"Detection score must lie in [0, 1], got {self.score}")


@dataclass(frozen=True)
class GroundTruth:
    class_id: int
    box: Box
    image_id: int = 0


@dataclass(frozen=True)
class PRCurve:
    """Precision/recall at each distinct score threshold, highest threshold first."""
    thresholds: Tuple[float, ...]
    recall: Tuple[float, ...]
    precision: Tuple[float, ...]
    num_gt: int
    ap: Optional[float]


@dataclass
class EvaluationResult:
    per_class: Dict[int, Optional[float]] = field(default_factory=dict)
    map50: float = 0.0

    @property
    def scored_classes(self) -> List[int]:
        return [c for c, ap in self.per_class.items() if ap is not None]


def iou(a: Box, b: Box) -> float:
    iw = min(a.x2, b.x2) - max(a.x1, b.x1)
    ih = min(a.y2, b.y2) - max(a.y1, b.y1)
    if iw <= 0.0 or ih <= 0.0:
        return 0.0
    inter = iw * ih
    return inter / (a.area + b.area - inter)


def iou_matrix(boxes: np.ndarray, others: np.ndarray) -> np.ndarray:
    """Pairwise IoU of (n, 4) and (m, 4) corner arrays."""
    x1 = np.maximum(boxes[:, None, 0], others[None, :, 0])
    y1 = np.maximum(boxes[:, None, 1], others[None, :, 1])
    x2 = np.minimum(boxes[:, None, 2], others[None, :, 2])
    y2 = np.minimum(boxes[:, None, 3], others[None, :, 3])
    inter = np.maximum(0.0, x2 - x1) * np.maximum(0.0, y2 - y1)
    area_a = (boxes[:, 2] - boxes[:, 0]) * (boxes[:, 3] - boxes[:, 1])
    area_b = (others[:, 2] - others[:, 0]) * (others[:, 3] - others[:, 1])
    return inter / (area_a[:, None] + area_b[None, :] - inter)


def match_detections(
    detections: Sequence[Detection],
    ground_truths: Sequence[GroundTruth],
    iou_threshold: float = IOU_THRESHOLD,
) -> List[bool]:
    """
    Greedy matching in the given order: each detection claims the unmatched
    ground truth of its image with the highest IoU >= iou_threshold.
    Returns a true-positive flag per detection.
    """
    by_image: Dict[int, List[int]] = {}
    for index, gt in enumerate(ground_truths):
        by_image.setdefault(gt.image_id, []).append(index)
    matched = set()
    flags = []
    for det in detections:
        best, best_iou = None, iou_threshold
        for index in by_image.get(det.image_id, ()):
            if index in matched:
                continue
            overlap = iou(det.box, ground_truths[index].box)
            if overlap >= best_iou and (best is None or overlap > best_iou):
                best, best_iou = index, overlap
        if best is not None:
            matched.add(best)
        flags.append(best is not None)
    return flags


def envelope_area(recall: Sequence[float], precision: Sequence[float]) -> float:
    """Area under the monotone precision envelope, recall starting from 0."""
    if not recall:
        return 0.0
    mrec = np.concatenate(([0.0], np.asarray(recall, dtype=float)))
    mpre = np.maximum.accumulate(np.asarray(precision, dtype=float)[::-1])[::-1]
    return float(np.sum((mrec[1:] - mrec[:-1]) * mpre))


def average_precision(
    detections: Iterable[Detection],
    ground_truths: Iterable[GroundTruth],
    iou_threshold: float = IOU_THRESHOLD,
) -> PRCurve:
    """AP of a single class; `ap` is None when there is no ground truth."""
    detections = list(detections)
    ground_truths = list(ground_truths)
    for det in detections:
        if not np.isfinite(det.score):
            raise EvaluationError(f"Detection score must be finite, got {det.score}")

    order = sorted(range(len(detections)), key=lambda i: -detections[i].score)
    ranked = [detections[i] for i in order]
    flags = np.array(match_detections(ranked, ground_truths, iou_threshold), dtype=bool)
    num_gt = len(ground_truths)

    thresholds, recall, precision = [], [], []
    tp = np.cumsum(flags)
    for k, det in enumerate(ranked):
        last_of_tie = k + 1 == len(ranked) or ranked[k + 1].score != det.score
        if not last_of_tie:
            continue
        thresholds.append(det.score)
        recall.append(float(tp[k]) / num_gt if num_gt else 0.0)
        precision.append(float(tp[k]) / (k + 1))

    ap = envelope_area(recall, precision) if num_gt else None
    return PRCurve(tuple(thresholds), tuple(recall), tuple(precision), num_gt, ap)


def evaluate(
    detections: Iterable[Detection],
    ground_truths: Iterable[GroundTruth],
    classes: Iterable[int],
    iou_threshold: float = IOU_THRESHOLD,
) -> EvaluationResult:
    detections = list(detections)
    ground_truths = list(ground_truths)
    result = EvaluationResult()
    for class_id in sorted(set(classes)):
        curve = average_precision(
            [d for d in detections if d.class_id == class_id],
            [g for g in ground_truths if g.class_id == class_id],
            iou_threshold,
        )
        result.per_class[class_id] = curve.ap
    scored = [ap for ap in result.per_class.values() if ap is not None]
    if not scored:
        raise EvaluationError("mAP is undefined: no class has any ground truth")
    result.map50 = float(np.mean(scored))
    logger.debug("Evaluated %d classes (%d with ground truth): map50=%.4f",
                 len(result.per_class), len(scored), result.map50)
    return result


def map50(detections: Iterable[Detection], ground_truths: Iterable[GroundTruth], classes: Iterable[int]) -> float:
    """Mean AP at IoU 0.5 over the classes that have at least one ground truth."""
    return evaluate(detections, ground_truths, classes, IOU_THRESHOLD).map50
