"""
Module ablation: baseline, +PFMG, +SCG and the full model trained on the
same split with the same seeds, scored on a held-out split.

The table is written as CSV:

    config,enable_pfmg,enable_scg,map50,params,flops,map50_seed0,...
    baseline,false,false,0.412300,...
    +PFMG,...
    +SCG,...
    full,...

One row per variant; `map50` is the mean over seeds. The ordering vote
is printed after the table: a seed votes for the ordering when the
baseline scores below both single-module variants and both of those
score below the full model.
"""

import csv
import dataclasses
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional, Sequence, Union

import numpy as np

from core.exceptions import ConfigError
from detection.model import ModelConfig
from detection.predict import DEFAULT_NMS_IOU, DEFAULT_SCORE_THRESHOLD
from detection.synth import Scene
from detection.trainer import TrainerConfig, train_to_directory
from fusion.pyramid import DUAL

from .harness import evaluate_scenes

logger = logging.getLogger(__name__)

ABLATION_FILE = 'ablation.csv'


@dataclass(frozen=True)
class AblationVariant:
    label: str
    slug: str
    enable_scg: bool
    enable_pfmg: bool


ABLATION_VARIANTS = (
    AblationVariant('baseline', 'baseline', enable_scg=False, enable_pfmg=False),
    AblationVariant('+PFMG', 'pfmg', enable_scg=False, enable_pfmg=True),
    AblationVariant('+SCG', 'scg', enable_scg=True, enable_pfmg=False),
    AblationVariant('full', 'full', enable_scg=True, enable_pfmg=True),
)


@dataclass
class AblationRow:
    variant: AblationVariant
    params: int = 0
    flops: int = 0
    map50_by_seed: Dict[int, float] = field(default_factory=dict)

    @property
    def map50(self) -> float:
        return float(np.mean(list(self.map50_by_seed.values())))


def variant_config(model_config: ModelConfig, variant: AblationVariant, seed: int) -> ModelConfig:
    backbone = dataclasses.replace(model_config.backbone, enable_scg=variant.enable_scg,
                                   enable_pfmg=variant.enable_pfmg, modality=DUAL)
    return dataclasses.replace(model_config, backbone=backbone, seed=seed)


def ordering_holds(scores: Dict[str, float]) -> bool:
    baseline, full = scores['baseline'], scores['full']
    singles = (scores['+PFMG'], scores['+SCG'])
    return all(baseline < s < full for s in singles)


def ordering_votes(rows: Sequence[AblationRow], seeds: Sequence[int]) -> int:
    return sum(ordering_holds({row.variant.label: row.map50_by_seed[seed] for row in rows}) for seed in seeds)


def format_votes(rows: Sequence[AblationRow], seeds: Sequence[int]) -> str:
    return f"ordering_votes {ordering_votes(rows, seeds)}/{len(seeds)}"


def run_ablation(
    model_config: ModelConfig,
    trainer_config: TrainerConfig,
    train_scenes: Sequence[Scene],
    test_scenes: Sequence[Scene],
    seeds: Sequence[int],
    out_dir: Union[str, Path],
    score_threshold: float = DEFAULT_SCORE_THRESHOLD,
    nms_iou: float = DEFAULT_NMS_IOU,
    on_run: Optional[Callable[[AblationVariant, int, float], None]] = None,
) -> List[AblationRow]:
    if not seeds:
        raise ConfigError("ablation needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigError(f"ablation seeds must be distinct, got {list(seeds)}")
    out_dir = Path(out_dir)
    rows = []
    for variant in ABLATION_VARIANTS:
        row = AblationRow(variant)
        for seed in seeds:
            config = variant_config(model_config, variant, seed)
            run_dir = out_dir / f"{variant.slug}_seed{seed}"
            model, _ = train_to_directory(config, dataclasses.replace(trainer_config, seed=seed), train_scenes, run_dir)
            score = evaluate_scenes(model, test_scenes, score_threshold, nms_iou).map50
            row.map50_by_seed[seed] = score
            row.params, row.flops = model.parameter_count(), model.flops()
            logger.info("ablation %s seed %d: map50=%.4f", variant.label, seed, score)
            if on_run:
                on_run(variant, seed, score)
        rows.append(row)
    return rows


def write_ablation_table(rows: Sequence[AblationRow], seeds: Sequence[int], path: Union[str, Path]) -> Path:
    path = Path(path)
    with open(path, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(['config', 'enable_pfmg', 'enable_scg', 'map50', 'params', 'flops']
                        + [f"map50_seed{seed}" for seed in seeds])
        for row in rows:
            writer.writerow(
                [row.variant.label, str(row.variant.enable_pfmg).lower(), str(row.variant.enable_scg).lower(),
                 f"{row.map50:.6f}", row.params, row.flops]
                + [f"{row.map50_by_seed[seed]:.6f}" for seed in seeds]
            )
    return path
