"""
SGD training loop.

Three parameter groups: conv weights (with weight decay), biases and norm
affine parameters (both without decay). The learning rate decays linearly
per epoch to lr * lrf. During warmup (measured in optimizer steps) the
weight/norm rate ramps up from 0, the bias rate ramps down from
warmup_bias_lr_factor * lr, and momentum ramps from warmup_momentum.
"""

import csv
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from core.exceptions import ConfigError, DatasetError, TrainingDiverged
from nn_blocks.checkpoint import save_checkpoint
from nn_blocks.parameters import ParameterSet
from tensor_core.autodiff import GradientTape

from .losses import BoxRegressionLoss, LossBreakdown, assign_targets, detection_loss
from .model import ModelConfig, PacgDetector, batch_images
from .synth import Scene

logger = logging.getLogger(__name__)

CHECKPOINT_FILE = 'checkpoint.txt'
LOSS_TRACE_FILE = 'loss_trace.csv'
LOSS_TRACE_HEADER = ['epoch', 'total', 'objectness', 'classification', 'box', 'lr']


@dataclass(frozen=True)
class TrainerConfig:
    epochs: int = 200
    batch_size: int = 8
    lr: float = 0.01
    lrf: float = 0.01
    momentum: float = 0.937
    weight_decay: float = 0.0005
    warmup_epochs: float = 3.0
    warmup_momentum: float = 0.8
    warmup_bias_lr_factor: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1:
            raise ConfigError(f"epochs and batch_size must be >= 1, got {self.epochs} and {self.batch_size}")
        if self.lr < 0 or self.weight_decay < 0 or self.warmup_epochs < 0:
            raise ConfigError("lr, weight_decay and warmup_epochs must be >= 0")
        if not 0 <= self.momentum < 1 or not 0 <= self.warmup_momentum < 1:
            raise ConfigError("momentum values must lie in [0, 1)")
        if not 0 < self.lrf <= 1:
            raise ConfigError(f"lrf must lie in (0, 1], got {self.lrf}")


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    total: float
    objectness: float
    classification: float
    box: float
    lr: float


def param_group(name: str) -> str:
    if name.endswith('.weight'):
        return 'weight'
    if name.endswith('.bias'):
        return 'bias'
    return 'norm'


class SGD:
    """Classic momentum: v = mu * v + (g + wd * p); p = p - lr * v."""

    def __init__(self, params: ParameterSet, weight_decay: float):
        self.params = params
        self.weight_decay = weight_decay
        self.velocity: Dict[str, np.ndarray] = {name: np.zeros(params[name].shape) for name in params}

    def step(self, lrs: Dict[str, float], momentum: float) -> None:
        for name in self.params:
            group = param_group(name)
            value = self.params[name].data
            grad = self.params.grad(name)
            if group == 'weight' and self.weight_decay:
                grad = grad + self.weight_decay * value
            self.velocity[name] = momentum * self.velocity[name] + grad
            lr = lrs[group]
            if lr:
                self.params[name] = value - lr * self.velocity[name]


class Trainer:
    def __init__(self, model: PacgDetector, config: TrainerConfig,
                 box_loss: Optional[BoxRegressionLoss] = None,
                 on_epoch: Optional[Callable[[EpochRecord], None]] = None):
        self.model = model
        self.config = config
        self.box_loss = box_loss
        self.on_epoch = on_epoch
        self.optimizer = SGD(model.params, config.weight_decay)
        self.rng = np.random.default_rng(config.seed)

    def epoch_lr(self, epoch: int) -> float:
        c = self.config
        return c.lr * ((1.0 - epoch / c.epochs) * (1.0 - c.lrf) + c.lrf)

    def schedule(self, step: int, epoch: int, warmup_steps: int):
        """Per-group learning rates and momentum for a global optimizer step."""
        c = self.config
        lr = self.epoch_lr(epoch)
        if step < warmup_steps:
            xp = [0, warmup_steps]
            lrs = {
                'weight': float(np.interp(step, xp, [0.0, lr])),
                'norm': float(np.interp(step, xp, [0.0, lr])),
                'bias': float(np.interp(step, xp, [c.warmup_bias_lr_factor * c.lr, lr])),
            }
            return lrs, float(np.interp(step, xp, [c.warmup_momentum, c.momentum]))
        return {'weight': lr, 'norm': lr, 'bias': lr}, c.momentum

    def train_step(self, batch: Sequence[Scene]) -> LossBreakdown:
        model = self.model
        targets = assign_targets([scene.objects for scene in batch], model.image_size)
        rgb, ir = batch_images(batch)
        with GradientTape() as tape:
            outputs = model(rgb, ir)
            loss, breakdown = detection_loss(outputs, targets, model.num_classes, self.box_loss)
        model.params.zero_grad()
        if math.isfinite(breakdown.total):
            model.params.accumulate(tape.gradient(loss))
        return breakdown

    def fit(self, scenes: Sequence[Scene]) -> List[EpochRecord]:
        if not scenes:
            raise DatasetError("Cannot train on an empty dataset")
        c = self.config
        batches_per_epoch = math.ceil(len(scenes) / c.batch_size)
        warmup_steps = int(round(c.warmup_epochs * batches_per_epoch))
        history: List[EpochRecord] = []
        step = 0
        for epoch in range(c.epochs):
            order = self.rng.permutation(len(scenes))
            parts = np.zeros(4)
            lrs = {}
            for start in range(0, len(scenes), c.batch_size):
                batch = [scenes[i] for i in order[start:start + c.batch_size]]
                breakdown = self.train_step(batch)
                if not math.isfinite(breakdown.total):
                    raise TrainingDiverged(step, breakdown.total)
                lrs, momentum = self.schedule(step, epoch, warmup_steps)
                self.optimizer.step(lrs, momentum)
                parts += (breakdown.total, breakdown.objectness, breakdown.classification, breakdown.box)
                step += 1
            mean = parts / batches_per_epoch
            record = EpochRecord(epoch, *(float(v) for v in mean), lr=lrs['weight'])
            history.append(record)
            logger.debug("epoch %d: total=%.6f lr=%.6g", epoch, record.total, record.lr)
            if self.on_epoch:
                self.on_epoch(record)
        return history


def train(model: PacgDetector, scenes: Sequence[Scene], config: TrainerConfig, **kwargs) -> List[EpochRecord]:
    return Trainer(model, config, **kwargs).fit(scenes)


def write_loss_trace(history: Sequence[EpochRecord], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(LOSS_TRACE_HEADER)
        for r in history:
            writer.writerow([r.epoch, repr(r.total), repr(r.objectness), repr(r.classification), repr(r.box), repr(r.lr)])
    return path


def train_to_directory(
    model_config: ModelConfig,
    config: TrainerConfig,
    scenes: Sequence[Scene],
    out_dir: Union[str, Path],
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> Tuple[PacgDetector, List[EpochRecord]]:
    """Train a fresh detector and write checkpoint.txt and loss_trace.csv into out_dir."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    model = PacgDetector(model_config)
    history = Trainer(model, config, on_epoch=on_epoch).fit(scenes)
    save_checkpoint(model.params, out_dir / CHECKPOINT_FILE)
    write_loss_trace(history, out_dir / LOSS_TRACE_FILE)
    return model, history
