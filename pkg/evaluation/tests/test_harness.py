"""
Tests for per-visibility recall.
"""
import numpy as np
from django.test import SimpleTestCase

from detection.synth import Scene, SceneObject, Visibility
from evaluation.harness import recall_by_visibility
from evaluation.metrics import Box, Detection
from evaluation.report import format_recall


def scene(index, *objects):
    blank = np.zeros((1, 3, 32, 32))
    return Scene(index, blank, blank.copy(), list(objects))


def hit(obj, score=0.9, image_id=0, class_id=None):
    return Detection(obj.class_id if class_id is None else class_id, score, obj.box, image_id)


class RecallByVisibilityTest(SimpleTestCase):
    def setUp(self):
        self.both = SceneObject(0, 2, 2, 8, 8, Visibility.BOTH)
        self.rgb = SceneObject(1, 20, 2, 8, 8, Visibility.RGB_ONLY)
        self.ir = SceneObject(0, 2, 20, 8, 8, Visibility.IR_ONLY)
        self.other_ir = SceneObject(1, 18, 18, 10, 10, Visibility.IR_ONLY)
        self.scenes = [scene(0, self.both, self.rgb), scene(1, self.ir, self.other_ir)]

    def test_split_by_mode(self):
        detections = [hit(self.both), hit(self.rgb), hit(self.ir, image_id=1)]
        recall = recall_by_visibility(detections, self.scenes)
        self.assertEqual(recall, {Visibility.BOTH: 1.0, Visibility.RGB_ONLY: 1.0, Visibility.IR_ONLY: 0.5})

    def test_detection_must_match_image_and_class(self):
        detections = [hit(self.ir, image_id=0), hit(self.both, class_id=1)]
        recall = recall_by_visibility(detections, self.scenes)
        self.assertEqual(recall[Visibility.BOTH], 0.0)
        self.assertEqual(recall[Visibility.IR_ONLY], 0.0)

    def test_low_scores_ignored(self):
        recall = recall_by_visibility([hit(self.both, score=0.4)], self.scenes)
        self.assertEqual(recall[Visibility.BOTH], 0.0)
        recall = recall_by_visibility([hit(self.both, score=0.4)], self.scenes, score_threshold=0.3)
        self.assertEqual(recall[Visibility.BOTH], 1.0)

    def test_overlap_below_threshold_misses(self):
        shifted = Detection(0, 0.9, Box(6.0, 6.0, 14.0, 14.0), 0)
        self.assertEqual(recall_by_visibility([shifted], self.scenes)[Visibility.BOTH], 0.0)

    def test_mode_without_objects_is_undefined(self):
        recall = recall_by_visibility([], [scene(0, self.both)])
        self.assertEqual(recall[Visibility.BOTH], 0.0)
        self.assertIsNone(recall[Visibility.RGB_ONLY])
        self.assertIsNone(recall[Visibility.IR_ONLY])

    def test_report_lines(self):
        text = format_recall({Visibility.BOTH: 1.0, Visibility.RGB_ONLY: 0.25, Visibility.IR_ONLY: None})
        self.assertEqual(text, "recall both 1.0000\nrecall rgb-only 0.2500\nrecall ir-only n/a\n")
