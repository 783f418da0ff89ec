"""
Fused-feature activation heatmaps.

The heatmap of a level is the per-pixel L2 norm over channels of its fused
map, min-max scaled to 0..255 for the PGM image; the CSV keeps the raw
magnitudes. A flat map scales to all zeros.
"""

import logging
from pathlib import Path
from typing import Dict, List, Union

import numpy as np

from fusion.pyramid import FUSED_LEVELS
from tensor_core.autodiff import Tensor

from .dataset import write_pgm
from .model import PacgDetector

logger = logging.getLogger(__name__)


def activation_magnitudes(model: PacgDetector, rgb: np.ndarray, ir: np.ndarray) -> Dict[int, np.ndarray]:
    """(H, W) channel-L2 magnitude of each fused level for a single image pair."""
    fused = model.features(Tensor(rgb), Tensor(ir))
    return {level: np.sqrt((fused[level].data[0] ** 2).sum(axis=0)) for level in FUSED_LEVELS}


def to_8bit(values: np.ndarray) -> np.ndarray:
    lo, hi = float(values.min()), float(values.max())
    if hi <= lo:
        return np.zeros(values.shape, dtype=np.uint8)
    return np.round((values - lo) / (hi - lo) * 255.0).astype(np.uint8)


def write_heatmaps(directory: Union[str, Path], magnitudes: Dict[int, np.ndarray], prefix: str = '') -> List[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for level, values in sorted(magnitudes.items()):
        stem = f"{prefix}P{level}"
        pgm = directory / f"{stem}.pgm"
        write_pgm(pgm, to_8bit(values))
        table = directory / f"{stem}.csv"
        table.write_text(''.join(','.join(repr(float(v)) for v in row) + '\n' for row in values), encoding='utf-8')
        written.extend([pgm, table])
    logger.debug("Wrote %d heatmap files to %s", len(written), directory)
    return written
