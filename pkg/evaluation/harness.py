"""
Scoring a detector on a list of scenes.
"""

import dataclasses
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

from detection.model import PacgDetector
from detection.predict import DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD, predict_scenes
from detection.synth import Scene, Visibility

from .metrics import IOU_THRESHOLD, Detection, EvaluationResult, GroundTruth, evaluate, iou

RECALL_SCORE_THRESHOLD = 0.5


def collect(
    model: PacgDetector,
    scenes: Sequence[Scene],
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
) -> Tuple[List[Detection], List[GroundTruth]]:
    """Detections and ground truth of every scene, image_id = position in `scenes`."""
    detections: List[Detection] = []
    ground_truths: List[GroundTruth] = []
    per_image = predict_scenes(model, scenes, score_threshold, nms_iou)
    for image_id, (scene, found) in enumerate(zip(scenes, per_image)):
        detections.extend(dataclasses.replace(d, image_id=image_id) for d in found)
        ground_truths.extend(scene.ground_truths(image_id))
    return detections, ground_truths


def evaluate_scenes(
    model: PacgDetector,
    scenes: Sequence[Scene],
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
) -> EvaluationResult:
    detections, ground_truths = collect(model, scenes, score_threshold, nms_iou)
    return evaluate(detections, ground_truths, range(model.num_classes), IOU_THRESHOLD)


def recall_by_visibility(
    detections: Iterable[Detection],
    scenes: Sequence[Scene],
    score_threshold: float = RECALL_SCORE_THRESHOLD,
    iou_threshold: float = IOU_THRESHOLD,
) -> Dict[Visibility, Optional[float]]:
    """
    Fraction of the objects of each visibility mode that some detection of
    the same class and image recovers with IoU >= iou_threshold.

    A detection's image_id is the scene's position in `scenes`; detections
    scoring below `score_threshold` are ignored. A mode with no objects
    maps to None.
    """
    confident: Dict[Tuple[int, int], List[Detection]] = {}
    for det in detections:
        if det.score >= score_threshold:
            confident.setdefault((det.image_id, det.class_id), []).append(det)

    found = {mode: 0 for mode in Visibility}
    total = {mode: 0 for mode in Visibility}
    for image_id, scene in enumerate(scenes):
        for obj in scene.objects:
            total[obj.visibility] += 1
            candidates = confident.get((image_id, obj.class_id), ())
            if any(iou(det.box, obj.box) >= iou_threshold for det in candidates):
                found[obj.visibility] += 1
    return {mode: (found[mode] / total[mode] if total[mode] else None) for mode in Visibility}


def visibility_recall(
    model: PacgDetector,
    scenes: Sequence[Scene],
    score_threshold: float = RECALL_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
) -> Dict[Visibility, Optional[float]]:
    detections, _ = collect(model, scenes, score_threshold, nms_iou)
    return recall_by_visibility(detections, scenes, score_threshold)
