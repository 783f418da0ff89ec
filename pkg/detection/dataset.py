"""
On-disk dataset split.

    <split>/meta.txt          generator settings, key=value
    <split>/sizes.csv         scene,class_id,w,h,visibility (one row per object)
    <split>/NNNN_rgb.ppm      binary PPM (P6), 8-bit
    <split>/NNNN_ir.ppm
    <split>/NNNN.txt          class_id cx cy w h per line, pixels
"""

import csv
import logging
import re
from pathlib import Path
from typing import Dict, List, Union

import numpy as np
from PIL import Image, UnidentifiedImageError

from core.exceptions import DatasetError

from .synth import Scene, SceneObject, SynthConfig, Visibility

logger = logging.getLogger(__name__)

META_FILE = 'meta.txt'
SIZES_FILE = 'sizes.csv'
SIZES_HEADER = ['scene', 'class_id', 'w', 'h', 'visibility']
SCENE_PATTERN = re.compile(r'^(\d{4,})\.txt$')


def scene_stem(index: int) -> str:
    return f"{index:04d}"


def _to_uint8(image: np.ndarray) -> np.ndarray:
    return np.round(np.clip(image, 0.0, 1.0) * 255.0).astype(np.uint8)


def write_ppm(path: Union[str, Path], image: np.ndarray) -> None:
    """Write a (3, H, W) or (1, 3, H, W) array in [0, 1] as binary PPM."""
    chw = image.reshape(image.shape[-3:])
    Image.fromarray(np.ascontiguousarray(_to_uint8(chw).transpose(1, 2, 0))).save(path, format='PPM')


def write_pgm(path: Union[str, Path], values: np.ndarray) -> None:
    """Write a (H, W) uint8 array as binary PGM."""
    Image.fromarray(np.ascontiguousarray(values.astype(np.uint8))).save(path, format='PPM')


def read_ppm(path: Union[str, Path]) -> np.ndarray:
    """Read a PPM file as a (1, 3, H, W) float array in [0, 1]."""
    try:
        with Image.open(path) as img:
            array = np.asarray(img.convert('RGB'), dtype=np.float64)
    except (OSError, UnidentifiedImageError) as e:
        raise DatasetError(f"Cannot read image {path}: {e}") from e
    return (array.transpose(2, 0, 1) / 255.0)[None]


def format_label(obj: SceneObject) -> str:
    return f"{obj.class_id} {obj.cx:g} {obj.cy:g} {obj.w:g} {obj.h:g}"


def parse_label(line: str, where: str) -> SceneObject:
    fields = line.split()
    if len(fields) != 5:
        raise DatasetError(f"{where}: expected 'class_id cx cy w h', got {line!r}")
    try:
        class_id = int(fields[0])
        cx, cy, w, h = (float(v) for v in fields[1:])
    except ValueError as e:
        raise DatasetError(f"{where}: malformed label {line!r}") from e
    if w <= 0 or h <= 0:
        raise DatasetError(f"{where}: box extents must be positive, got {line!r}")
    x, y = cx - w / 2.0, cy - h / 2.0
    return SceneObject(class_id, int(round(x)), int(round(y)), int(round(w)), int(round(h)))


def write_meta(directory: Path, cfg: SynthConfig, scenes: List[Scene]) -> None:
    lines = [f"{key}={value}" for key, value in sorted(cfg.to_items().items())]
    lines.append(f"scene_count={len(scenes)}")
    lines.append(f"dropped_objects={sum(s.dropped for s in scenes)}")
    lines.extend(f"dropped.{scene_stem(s.index)}={s.dropped}" for s in scenes if s.dropped)
    (directory / META_FILE).write_text('\n'.join(lines) + '\n', encoding='utf-8')


def read_meta(directory: Path) -> Dict[str, str]:
    path = directory / META_FILE
    try:
        text = path.read_text(encoding='utf-8')
    except OSError as e:
        raise DatasetError(f"Cannot read {path}: {e}") from e
    meta = {}
    for number, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        key, sep, value = line.partition('=')
        if not sep:
            raise DatasetError(f"{path}:{number}: expected key=value, got {line!r}")
        meta[key.strip()] = value.strip()
    return meta


def write_split(directory: Union[str, Path], cfg: SynthConfig, scenes: List[Scene]) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    with open(directory / SIZES_FILE, 'w', encoding='utf-8', newline='') as f:
        writer = csv.writer(f, lineterminator='\n')
        writer.writerow(SIZES_HEADER)
        for scene in scenes:
            stem = scene_stem(scene.index)
            write_ppm(directory / f"{stem}_rgb.ppm", scene.rgb)
            write_ppm(directory / f"{stem}_ir.ppm", scene.ir)
            labels = ''.join(format_label(obj) + '\n' for obj in scene.objects)
            (directory / f"{stem}.txt").write_text(labels, encoding='utf-8')
            for obj in scene.objects:
                writer.writerow([stem, obj.class_id, obj.w, obj.h, obj.visibility.value])
    write_meta(directory, cfg, scenes)
    logger.debug("Wrote %d scenes to %s", len(scenes), directory)
    return directory


def _read_visibilities(directory: Path) -> Dict[str, List[Visibility]]:
    path = directory / SIZES_FILE
    if not path.exists():
        return {}
    visibilities: Dict[str, List[Visibility]] = {}
    with open(path, encoding='utf-8', newline='') as f:
        for row in csv.DictReader(f):
            try:
                visibilities.setdefault(row['scene'], []).append(Visibility(row['visibility']))
            except (KeyError, ValueError) as e:
                raise DatasetError(f"{path}: malformed row {row}") from e
    return visibilities


def read_split(directory: Union[str, Path]) -> List[Scene]:
    """Load every scene of a split, ordered by index."""
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"Dataset directory {directory} does not exist")
    read_meta(directory)
    visibilities = _read_visibilities(directory)
    scenes = []
    for label_path in sorted(directory.iterdir()):
        match = SCENE_PATTERN.match(label_path.name)
        if not match:
            continue
        stem = match.group(1)
        objects = [
            parse_label(line, f"{label_path}:{number}")
            for number, line in enumerate(label_path.read_text(encoding='utf-8').splitlines(), start=1)
            if line.strip()
        ]
        modes = visibilities.get(stem)
        if modes is not None and len(modes) == len(objects):
            objects = [SceneObject(o.class_id, o.x, o.y, o.w, o.h, mode) for o, mode in zip(objects, modes)]
        rgb = read_ppm(directory / f"{stem}_rgb.ppm")
        ir = read_ppm(directory / f"{stem}_ir.ppm")
        if rgb.shape != ir.shape:
            raise DatasetError(f"Scene {stem}: rgb shape {rgb.shape} does not match ir shape {ir.shape}")
        scenes.append(Scene(index=int(stem), rgb=rgb, ir=ir, objects=objects))
    logger.debug("Read %d scenes from %s", len(scenes), directory)
    return scenes


def size_statistics(scenes: List[Scene]) -> Dict[str, float]:
    """min/median/max of max(w, h) over all objects of a split."""
    sizes = [max(obj.w, obj.h) for scene in scenes for obj in scene.objects]
    if not sizes:
        return {}
    return {'min': float(np.min(sizes)), 'median': float(np.median(sizes)), 'max': float(np.max(sizes))}


def check_compatible(scenes: List[Scene], image_size: int, num_classes: int, where: str = 'dataset') -> None:
    """Scenes must match the configured input size and class count."""
    for scene in scenes:
        if scene.rgb.shape[-2:] != (image_size, image_size):
            raise DatasetError(f"{where}: scene {scene_stem(scene.index)} is {scene.rgb.shape[-2:]}, config expects {image_size}px")
        for obj in scene.objects:
            if not 0 <= obj.class_id < num_classes:
                raise DatasetError(f"{where}: scene {scene_stem(scene.index)} has class {obj.class_id}, "
                                   f"config has num_classes={num_classes}")
