"""
Run configuration: a flat `key=value` file read through django-environ.

Each command takes an optional `--config` file. Values are cast with an
`environ.Env` scheme, so booleans, integers, floats and comma-separated
integer lists accept the same literal forms as the process settings.
Every key has a default and unknown keys are rejected.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Mapping, Optional, Union

import environ
import numpy as np

from detection.model import ModelConfig
from detection.predict import DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD
from detection.synth import SynthConfig
from detection.trainer import TrainerConfig
from fusion.pyramid import BackboneConfig

from .exceptions import ConfigError

logger = logging.getLogger(__name__)

RESOLVED_FILE = 'config.resolved'

RUN_CONFIG_SCHEME = {
    'seed': (int, 0),
    'out_dir': (str, 'runs/default'),
    # Synthesis
    'image_size': (int, 64),
    'num_classes': (int, 2),
    'objects_min': (int, 1),
    'objects_max': (int, 3),
    'object_size_min': (int, 6),
    'object_size_max': (int, 20),
    'p_both': (float, 0.2),
    'p_rgb_only': (float, 0.4),
    'p_ir_only': (float, 0.4),
    'clutter': (float, 0.05),
    'noise_sigma': (float, 0.02),
    'max_place_retries': (int, 50),
    # Architecture
    'widths': ([int], [8, 16, 32, 64, 128]),
    'enable_scg': (bool, True),
    'enable_pfmg_gate': (bool, True),
    'modality': (str, 'both'),
    # Training
    'epochs': (int, 200),
    'batch_size': (int, 8),
    'lr': (float, 0.01),
    'lrf': (float, 0.01),
    'momentum': (float, 0.937),
    'weight_decay': (float, 0.0005),
    'warmup_epochs': (float, 3.0),
    'warmup_momentum': (float, 0.8),
    'warmup_bias_lr_factor': (float, 10.0),
    # Prediction
    'score_threshold': (float, DEFAULT_SCORE_THRESHOLD),
    'nms_iou': (float, DEFAULT_NMS_IOU),
}


def parse_pairs(text: str, source: str = '<string>') -> Dict[str, str]:
    """Raw `key=value` pairs; `#` lines and blank lines are skipped."""
    pairs: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith('#'):
            continue
        key, sep, value = line.partition('=')
        key, value = key.strip(), value.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected key=value, got {raw!r}")
        if key not in RUN_CONFIG_SCHEME:
            raise ConfigError(f"{source}:{number}: unknown key '{key}'")
        if key in pairs:
            raise ConfigError(f"{source}:{number}: duplicate key '{key}'")
        pairs[key] = value
    return pairs


def cast_values(pairs: Mapping[str, str], source: str = '<string>') -> Dict[str, object]:
    env = environ.Env(**RUN_CONFIG_SCHEME)
    env.ENVIRON = dict(pairs)
    values = {}
    for key in RUN_CONFIG_SCHEME:
        try:
            values[key] = env(key)
        except (ValueError, TypeError) as e:
            raise ConfigError(f"{source}: invalid value {pairs.get(key)!r} for '{key}': {e}") from e
    values['widths'] = tuple(values['widths'])
    return values


def format_value(value) -> str:
    if isinstance(value, bool):
        return 'true' if value else 'false'
    if isinstance(value, float):
        # positional notation; the float cast does not accept exponents
        return np.format_float_positional(value, trim='-')
    if isinstance(value, (list, tuple)):
        return ','.join(str(v) for v in value)
    return str(value)


@dataclass(frozen=True)
class RunConfig:
    values: Mapping[str, object] = field(default_factory=lambda: cast_values({}))
    source: Optional[str] = None

    def __post_init__(self):
        unknown = set(self.values) - set(RUN_CONFIG_SCHEME)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        missing = set(RUN_CONFIG_SCHEME) - set(self.values)
        if missing:
            raise ConfigError(f"missing config keys: {', '.join(sorted(missing))}")
        if not 0.0 <= self['score_threshold'] < 1.0 or not 0.0 < self['nms_iou'] <= 1.0:
            raise ConfigError("score_threshold must lie in [0, 1) and nms_iou in (0, 1]")
        # Building the component configs runs their own validation.
        self.synth_config()
        self.model_config()
        self.trainer_config()

    @classmethod
    def defaults(cls) -> 'RunConfig':
        return cls()

    @classmethod
    def from_text(cls, text: str, source: str = '<string>') -> 'RunConfig':
        return cls(cast_values(parse_pairs(text, source), source), source)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'RunConfig':
        path = Path(path)
        try:
            text = path.read_text(encoding='utf-8')
        except OSError as e:
            raise ConfigError(f"Cannot read config file {path}: {e}") from e
        config = cls.from_text(text, str(path))
        logger.debug("Loaded run config from %s", path)
        return config

    def __getitem__(self, key: str):
        return self.values[key]

    def replace(self, **overrides) -> 'RunConfig':
        unknown = set(overrides) - set(RUN_CONFIG_SCHEME)
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        return RunConfig({**self.values, **overrides}, self.source)

    def synth_config(self) -> SynthConfig:
        keys = [name for name in SynthConfig.__dataclass_fields__]
        return SynthConfig(**{key: self[key] for key in keys})

    def backbone_config(self) -> BackboneConfig:
        return BackboneConfig(
            image_size=self['image_size'],
            widths=self['widths'],
            enable_scg=self['enable_scg'],
            enable_pfmg=self['enable_pfmg_gate'],
            modality=self['modality'],
        )

    def model_config(self) -> ModelConfig:
        return ModelConfig(self.backbone_config(), self['num_classes'], self['seed'])

    def trainer_config(self) -> TrainerConfig:
        keys = [name for name in TrainerConfig.__dataclass_fields__]
        return TrainerConfig(**{key: self[key] for key in keys})

    def to_text(self) -> str:
        return ''.join(f"{key}={format_value(self.values[key])}\n" for key in sorted(self.values))

    def write_resolved(self, directory: Union[str, Path]) -> Path:
        path = Path(directory) / RESOLVED_FILE
        path.write_text(self.to_text(), encoding='utf-8')
        return path


def load_run_config(path: Optional[Union[str, Path]] = None) -> RunConfig:
    return RunConfig.from_file(path) if path else RunConfig.defaults()
