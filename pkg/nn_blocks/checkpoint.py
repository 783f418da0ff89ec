"""
Plain-text checkpoints.

Layout:
    pacg-ckpt v1
    <name> <d0>x<d1>x... <v0> <v1> ...
    ...
One record per parameter, sorted by name. Values use Python's shortest
round-trip float repr, so save -> load reproduces every bit.
"""

import logging
from pathlib import Path
from typing import Dict, Union

import numpy as np

from core.exceptions import CheckpointError, ParameterError
from tensor_core.autodiff import DTYPE
from tensor_core.exceptions import ShapeError

from .parameters import ParameterSet

logger = logging.getLogger(__name__)

CHECKPOINT_HEADER = 'pacg-ckpt v1'


def dumps(params: ParameterSet) -> str:
    lines = [CHECKPOINT_HEADER]
    arrays = params.arrays()
    for name in sorted(arrays):
        array = arrays[name]
        shape = 'x'.join(str(d) for d in array.shape)
        values = ' '.join(repr(v) for v in array.reshape(-1).tolist())
        lines.append(f"{name} {shape} {values}")
    return '\n'.join(lines) + '\n'


def loads(text: str) -> Dict[str, np.ndarray]:
    lines = text.splitlines()
    if not lines or lines[0].strip() != CHECKPOINT_HEADER:
        raise CheckpointError(f"Not a checkpoint: expected header '{CHECKPOINT_HEADER}'")
    arrays: Dict[str, np.ndarray] = {}
    for number, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        fields = line.split()
        if len(fields) < 2:
            raise CheckpointError(f"Line {number}: truncated record")
        name, shape_text, values = fields[0], fields[1], fields[2:]
        try:
            shape = tuple(int(d) for d in shape_text.split('x'))
            data = np.array([float(v) for v in values], dtype=DTYPE)
        except ValueError as e:
            raise CheckpointError(f"Line {number}: malformed record for '{name}': {e}") from e
        if data.size != int(np.prod(shape)):
            raise CheckpointError(f"Line {number}: '{name}' declares shape {shape} but has {data.size} values")
        if name in arrays:
            raise CheckpointError(f"Line {number}: duplicate record for '{name}'")
        arrays[name] = data.reshape(shape)
    return arrays


def save_checkpoint(params: ParameterSet, path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w', encoding='utf-8', newline='\n') as f:
        f.write(dumps(params))
    logger.debug("Wrote checkpoint with %d records to %s", len(params), path)
    return path


def load_checkpoint(params: ParameterSet, path: Union[str, Path]) -> ParameterSet:
    """Load values into an existing ParameterSet; names and shapes must match exactly."""
    path = Path(path)
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise CheckpointError(f"Cannot read checkpoint {path}: {e}") from e
    arrays = loads(text)
    try:
        params.load_arrays(arrays, strict=True)
    except (ParameterError, ShapeError) as e:
        raise CheckpointError(f"Checkpoint {path} does not match the model: {e}") from e
    return params
