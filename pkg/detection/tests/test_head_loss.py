"""
Tests for the detection head, box decoding, target assignment and loss.
"""
import math

import numpy as np
from django.test import SimpleTestCase

from detection.head import (
    MAX_LOG_SCALE, OBJECTNESS, OBJECTNESS_PRIOR, DetectionHead, LevelPrediction, box_raw_jacobian,
    decode_boxes, head_channels, level_stride,
)
from detection.losses import (
    CellTarget, IoULoss, assign_targets, bce_with_logits, detection_loss, levels_for_size,
)
from detection.synth import SceneObject
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import GradientTape, Tensor
from tensor_core.exceptions import ShapeError
from tensor_core.gradcheck import check_gradients

NUM_CLASSES = 2
IMAGE_SIZE = 32


def zero_outputs(image_size=IMAGE_SIZE, batch=1, requires_grad=False):
    return {
        level: Tensor(np.zeros((batch, head_channels(NUM_CLASSES), image_size // 2 ** level, image_size // 2 ** level)),
                      requires_grad=requires_grad)
        for level in (3, 4, 5)
    }


class HeadTest(SimpleTestCase):
    def test_channel_layout(self):
        self.assertEqual(head_channels(2), 7)
        self.assertEqual(head_channels(5), 10)
        self.assertEqual([level_stride(level) for level in (3, 4, 5)], [8, 16, 32])

    def test_objectness_prior(self):
        params = ParameterSet(seed=0)
        head = DetectionHead(params, {3: 4, 4: 8, 5: 16}, NUM_CLASSES)
        for conv in head.convs.values():
            bias = params[conv.bias_name].numpy()
            self.assertAlmostEqual(1.0 / (1.0 + math.exp(-bias[OBJECTNESS])), OBJECTNESS_PRIOR)
            self.assertTrue(np.all(bias[1:] == 0.0))

    def test_from_raw_splits_channels(self):
        raw = np.arange(7 * 4, dtype=float).reshape(1, 7, 2, 2)
        pred = LevelPrediction.from_raw(raw, NUM_CLASSES, 8)
        self.assertEqual(pred.objectness.shape, (1, 2, 2))
        self.assertEqual(pred.classes.shape, (1, 2, 2, 2))
        self.assertEqual(pred.box_raw.shape, (1, 2, 2, 4))
        self.assertEqual(pred.objectness[0, 1, 0], raw[0, 0, 1, 0])
        self.assertEqual(pred.box_raw[0, 0, 1, 3], raw[0, 6, 0, 1])


class DecodeTest(SimpleTestCase):
    def test_zero_offsets_give_cell_centres(self):
        boxes = decode_boxes(np.zeros((1, 2, 2, 4)), 8)
        np.testing.assert_allclose(boxes[0, 0, 1], [12.0, 4.0, 8.0, 8.0])
        np.testing.assert_allclose(boxes[0, 1, 0], [4.0, 12.0, 8.0, 8.0])

    def test_centre_stays_inside_its_cell(self):
        rng = np.random.default_rng(0)
        raw = rng.normal(0, 10, (2, 4, 4, 4))
        boxes = decode_boxes(raw, 16)
        cols = np.arange(4)[None, None, :]
        rows = np.arange(4)[None, :, None]
        self.assertTrue(np.all((boxes[..., 0] >= cols * 16) & (boxes[..., 0] <= (cols + 1) * 16)))
        self.assertTrue(np.all((boxes[..., 1] >= rows * 16) & (boxes[..., 1] <= (rows + 1) * 16)))
        self.assertTrue(np.all(boxes[..., 2:] > 0))

    def test_scale_is_clipped(self):
        raw = np.zeros((1, 1, 1, 4))
        raw[..., 2] = 100.0
        raw[..., 3] = -100.0
        boxes = decode_boxes(raw, 8)
        self.assertAlmostEqual(boxes[0, 0, 0, 2], 8 * math.exp(MAX_LOG_SCALE))
        self.assertAlmostEqual(boxes[0, 0, 0, 3], 8 * math.exp(-MAX_LOG_SCALE))
        jac = box_raw_jacobian(raw, boxes, 8)
        self.assertEqual(jac[0, 0, 0, 2], 0.0)
        self.assertEqual(jac[0, 0, 0, 3], 0.0)

    def test_jacobian_matches_differences(self):
        rng = np.random.default_rng(1)
        raw = rng.normal(0, 1, (1, 2, 2, 4))
        jac = box_raw_jacobian(raw, decode_boxes(raw, 8), 8)
        eps = 1e-6
        for k in range(4):
            up, down = raw.copy(), raw.copy()
            up[..., k] += eps
            down[..., k] -= eps
            numeric = (decode_boxes(up, 8)[..., k] - decode_boxes(down, 8)[..., k]) / (2 * eps)
            np.testing.assert_allclose(jac[..., k], numeric, rtol=1e-5)


class AssignmentTest(SimpleTestCase):
    def test_levels_for_size(self):
        self.assertEqual(levels_for_size(10), [3, 4])
        self.assertEqual(levels_for_size(20), [3, 4, 5])
        self.assertEqual(levels_for_size(4), [3])
        self.assertEqual(levels_for_size(100), [5])
        self.assertEqual(levels_for_size(2), [3])
        self.assertEqual(levels_for_size(500), [5])

    def test_centre_cell(self):
        targets = assign_targets([[SceneObject(1, 3, 5, 10, 8)]], IMAGE_SIZE)
        self.assertEqual(targets, [
            CellTarget(0, 3, 1, 1, 1, (8.0, 9.0, 10.0, 8.0)),
            CellTarget(0, 4, 0, 0, 1, (8.0, 9.0, 10.0, 8.0)),
        ])

    def test_first_object_keeps_cell(self):
        objects = [SceneObject(0, 0, 0, 6, 6), SceneObject(1, 1, 1, 5, 5)]
        targets = assign_targets([objects], IMAGE_SIZE)
        self.assertEqual([(t.level, t.row, t.col, t.class_id) for t in targets], [(3, 0, 0, 0)])

    def test_images_are_separate(self):
        obj = SceneObject(0, 0, 0, 6, 6)
        targets = assign_targets([[obj], [], [obj]], IMAGE_SIZE)
        self.assertEqual([t.image for t in targets], [0, 2])

    def test_centre_on_last_row_is_clamped(self):
        targets = assign_targets([[SceneObject(0, 24, 24, 8, 8)]], IMAGE_SIZE)
        self.assertTrue(all(t.row < IMAGE_SIZE // level_stride(t.level) for t in targets))


class BceTest(SimpleTestCase):
    def test_values(self):
        loss, grad = bce_with_logits(np.array([0.0, 0.0]), np.array([1.0, 0.0]))
        np.testing.assert_allclose(loss, [math.log(2), math.log(2)])
        np.testing.assert_allclose(grad, [-0.5, 0.5])

    def test_large_logits_are_finite(self):
        loss, grad = bce_with_logits(np.array([1000.0, -1000.0]), np.array([1.0, 1.0]))
        self.assertTrue(np.all(np.isfinite(loss)))
        self.assertAlmostEqual(loss[0], 0.0)
        self.assertAlmostEqual(loss[1], 1000.0)
        np.testing.assert_allclose(grad, [0.0, -1.0], atol=1e-12)


class IoULossTest(SimpleTestCase):
    def test_identical_boxes(self):
        box = np.array([[5.0, 5.0, 4.0, 6.0]])
        loss, _ = IoULoss()(box, box)
        self.assertAlmostEqual(loss[0], 0.0)

    def test_half_shifted(self):
        loss, _ = IoULoss()(np.array([[5.0, 5.0, 10.0, 10.0]]), np.array([[10.0, 5.0, 10.0, 10.0]]))
        self.assertAlmostEqual(loss[0], 2.0 / 3.0)

    def test_disjoint_boxes(self):
        loss, grad = IoULoss()(np.array([[5.0, 5.0, 4.0, 4.0]]), np.array([[50.0, 50.0, 4.0, 4.0]]))
        self.assertEqual(loss[0], 1.0)
        self.assertTrue(np.all(grad == 0.0))

    def test_gradient_matches_differences(self):
        rng = np.random.default_rng(2)
        target = np.column_stack([rng.uniform(10, 20, 6), rng.uniform(10, 20, 6), rng.uniform(6, 12, 6), rng.uniform(6, 12, 6)])
        pred = target + rng.uniform(-2, 2, target.shape)
        _, grad = IoULoss()(pred, target)
        eps = 1e-6
        for k in range(4):
            up, down = pred.copy(), pred.copy()
            up[:, k] += eps
            down[:, k] -= eps
            numeric = (IoULoss()(up, target)[0] - IoULoss()(down, target)[0]) / (2 * eps)
            np.testing.assert_allclose(grad[:, k], numeric, rtol=1e-4, atol=1e-8)


class DetectionLossTest(SimpleTestCase):
    def test_no_targets(self):
        loss, breakdown = detection_loss(zero_outputs(), [], NUM_CLASSES)
        self.assertEqual(breakdown.num_positive, 0)
        self.assertEqual(breakdown.classification, 0.0)
        self.assertEqual(breakdown.box, 0.0)
        self.assertAlmostEqual(breakdown.objectness, math.log(2))
        self.assertAlmostEqual(loss.item(), breakdown.total)

    def test_balanced_objectness_and_class_terms(self):
        targets = assign_targets([[SceneObject(1, 3, 5, 10, 8)]], IMAGE_SIZE)
        _, breakdown = detection_loss(zero_outputs(), targets, NUM_CLASSES)
        self.assertEqual(breakdown.num_positive, 2)
        self.assertAlmostEqual(breakdown.objectness, 2 * math.log(2))
        self.assertAlmostEqual(breakdown.classification, NUM_CLASSES * math.log(2))
        self.assertTrue(0.0 <= breakdown.box <= 1.0)
        self.assertAlmostEqual(breakdown.total, breakdown.objectness + breakdown.classification + breakdown.box)

    def test_wrong_channel_count(self):
        outputs = zero_outputs()
        outputs[3] = Tensor(np.zeros((1, 5, 4, 4)))
        with self.assertRaises(ShapeError):
            detection_loss(outputs, [], NUM_CLASSES)

    def test_only_present_levels_receive_gradient(self):
        outputs = zero_outputs(requires_grad=True)
        with GradientTape() as tape:
            loss, _ = detection_loss(outputs, [], NUM_CLASSES)
        grads = tape.gradient(loss)
        for level, tensor in outputs.items():
            grad = grads[tensor]
            self.assertTrue(np.all(grad[:, 1:] == 0.0), level)
            self.assertTrue(np.all(grad[:, 0] > 0.0), level)

    def test_gradients_match_central_differences(self):
        rng = np.random.default_rng(3)
        objects = [[SceneObject(0, 3, 5, 10, 8), SceneObject(1, 14, 12, 16, 18)], [SceneObject(1, 20, 2, 7, 9)]]
        targets = assign_targets(objects, IMAGE_SIZE)
        bound = {
            f"p{level}": Tensor(rng.normal(0, 0.5, tensor.shape), requires_grad=True)
            for level, tensor in zero_outputs(batch=2).items()
        }

        def loss():
            return detection_loss({level: bound[f"p{level}"] for level in (3, 4, 5)}, targets, NUM_CLASSES)[0]

        result = check_gradients('detection_loss', loss, [bound], rng=rng)
        self.assertTrue(result.passed, result)
