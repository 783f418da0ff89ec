"""
Synthetic paired RGB/IR scenes.

Objects are filled rectangles whose intensity depends on their class.
Each object is visible in both modalities, in RGB only or in IR only;
the background (flat level plus low-frequency clutter) is the same in
both images, so any difference between the two comes from the objects
and the per-image sensor noise.
"""

import logging
from dataclasses import asdict, dataclass, field
from enum import Enum
from typing import Dict, List, Tuple

import numpy as np

from core.exceptions import ConfigError
from evaluation.metrics import Box, GroundTruth

logger = logging.getLogger(__name__)

BACKGROUND_LEVEL = 0.2
CLUTTER_CELL = 8
MIN_OBJECT_SIZE = 4


class Visibility(str, Enum):
    BOTH = 'both'
    RGB_ONLY = 'rgb-only'
    IR_ONLY = 'ir-only'

    @property
    def in_rgb(self) -> bool:
        return self is not Visibility.IR_ONLY

    @property
    def in_ir(self) -> bool:
        return self is not Visibility.RGB_ONLY


@dataclass(frozen=True)
class SynthConfig:
    image_size: int = 64
    num_classes: int = 2
    objects_min: int = 1
    objects_max: int = 3
    object_size_min: int = 6
    object_size_max: int = 20
    p_both: float = 0.2
    p_rgb_only: float = 0.4
    p_ir_only: float = 0.4
    clutter: float = 0.05
    noise_sigma: float = 0.02
    max_place_retries: int = 50
    seed: int = 0

    def __post_init__(self):
        if self.image_size < 1:
            raise ConfigError(f"image_size must be positive, got {self.image_size}")
        if self.num_classes < 1:
            raise ConfigError(f"num_classes must be >= 1, got {self.num_classes}")
        if not 0 <= self.objects_min <= self.objects_max:
            raise ConfigError(f"need 0 <= objects_min <= objects_max, got {self.objects_min}..{self.objects_max}")
        if not MIN_OBJECT_SIZE <= self.object_size_min <= self.object_size_max <= self.image_size:
            raise ConfigError(
                f"need {MIN_OBJECT_SIZE} <= object_size_min <= object_size_max <= image_size, "
                f"got {self.object_size_min}..{self.object_size_max} for image_size {self.image_size}"
            )
        probabilities = self.visibility_probabilities
        if min(probabilities) < 0 or sum(probabilities) <= 0:
            raise ConfigError(f"visibility probabilities must be >= 0 with a positive sum, got {probabilities}")
        if self.clutter < 0 or self.noise_sigma < 0 or self.max_place_retries < 1:
            raise ConfigError("clutter and noise_sigma must be >= 0 and max_place_retries >= 1")

    @property
    def visibility_probabilities(self) -> Tuple[float, float, float]:
        return (self.p_both, self.p_rgb_only, self.p_ir_only)

    def to_items(self) -> Dict[str, object]:
        return asdict(self)


@dataclass(frozen=True)
class SceneObject:
    class_id: int
    x: int
    y: int
    w: int
    h: int
    visibility: Visibility = Visibility.BOTH

    @property
    def cx(self) -> float:
        return self.x + self.w / 2.0

    @property
    def cy(self) -> float:
        return self.y + self.h / 2.0

    @property
    def box(self) -> Box:
        return Box(float(self.x), float(self.y), float(self.x + self.w), float(self.y + self.h))

    def ground_truth(self, image_id: int = 0) -> GroundTruth:
        return GroundTruth(self.class_id, self.box, image_id)

    def overlaps(self, other: 'SceneObject') -> bool:
        return not (self.x + self.w <= other.x or other.x + other.w <= self.x
                    or self.y + self.h <= other.y or other.y + other.h <= self.y)


@dataclass
class Scene:
    """One RGB/IR pair; images are (1, 3, S, S) float arrays in [0, 1]."""
    index: int
    rgb: np.ndarray
    ir: np.ndarray
    objects: List[SceneObject] = field(default_factory=list)
    dropped: int = 0

    @property
    def image_size(self) -> int:
        return self.rgb.shape[-1]

    def ground_truths(self, image_id: int = 0) -> List[GroundTruth]:
        return [obj.ground_truth(image_id) for obj in self.objects]


def class_intensity(class_id: int, num_classes: int) -> float:
    """Fill level of a class; every class is brighter than the background."""
    return 0.55 + 0.4 * class_id / max(num_classes - 1, 1)


def _background(cfg: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    cells = -(-cfg.image_size // CLUTTER_CELL)
    coarse = rng.uniform(-1.0, 1.0, size=(cells, cells)) * cfg.clutter
    clutter = np.kron(coarse, np.ones((CLUTTER_CELL, CLUTTER_CELL)))[:cfg.image_size, :cfg.image_size]
    return np.broadcast_to(BACKGROUND_LEVEL + clutter, (3, cfg.image_size, cfg.image_size)).copy()


def _place_objects(cfg: SynthConfig, rng: np.random.Generator) -> Tuple[List[SceneObject], int]:
    wanted = int(rng.integers(cfg.objects_min, cfg.objects_max + 1))
    probabilities = np.asarray(cfg.visibility_probabilities, dtype=float)
    probabilities = probabilities / probabilities.sum()
    modes = list(Visibility)
    placed: List[SceneObject] = []
    dropped = 0
    for _ in range(wanted):
        class_id = int(rng.integers(cfg.num_classes))
        w = int(rng.integers(cfg.object_size_min, cfg.object_size_max + 1))
        h = int(rng.integers(cfg.object_size_min, cfg.object_size_max + 1))
        visibility = modes[int(rng.choice(len(modes), p=probabilities))]
        for _attempt in range(cfg.max_place_retries):
            x = int(rng.integers(0, cfg.image_size - w + 1))
            y = int(rng.integers(0, cfg.image_size - h + 1))
            candidate = SceneObject(class_id, x, y, w, h, visibility)
            if not any(candidate.overlaps(other) for other in placed):
                placed.append(candidate)
                break
        else:
            dropped += 1
    return placed, dropped


def render_scene(cfg: SynthConfig, rng: np.random.Generator, index: int) -> Scene:
    background = _background(cfg, rng)
    objects, dropped = _place_objects(cfg, rng)
    rgb, ir = background.copy(), background.copy()
    for obj in objects:
        level = class_intensity(obj.class_id, cfg.num_classes)
        region = (slice(None), slice(obj.y, obj.y + obj.h), slice(obj.x, obj.x + obj.w))
        if obj.visibility.in_rgb:
            rgb[region] = level
        if obj.visibility.in_ir:
            ir[region] = level
    rgb = rgb + rng.standard_normal(rgb.shape) * cfg.noise_sigma
    ir = ir + rng.standard_normal(ir.shape) * cfg.noise_sigma
    return Scene(
        index=index,
        rgb=np.clip(rgb, 0.0, 1.0)[None],
        ir=np.clip(ir, 0.0, 1.0)[None],
        objects=objects,
        dropped=dropped,
    )


def synth_generate(cfg: SynthConfig, count: int) -> List[Scene]:
    """Deterministic list of `count` scenes for cfg.seed."""
    if count < 0:
        raise ConfigError(f"scene count must be >= 0, got {count}")
    rng = np.random.default_rng(cfg.seed)
    scenes = [render_scene(cfg, rng, index) for index in range(count)]
    dropped = sum(scene.dropped for scene in scenes)
    if dropped:
        logger.info("Dropped %d object(s) that could not be placed after %d retries", dropped, cfg.max_place_retries)
    return scenes
