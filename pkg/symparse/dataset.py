"""
JSON-lines dataset manifests.

One record per line, image paths relative to the manifest's directory:

    {"image": "img_0001.pgm", "joints": [[x, y, visible], ... 14], "height_px": 150.0, "split": "train"}
    {"image": "neg_0001.pgm", "negative": true, "split": "train"}

Joints follow the order of ``skeleton.JOINT_NAMES``; datasets in another order
are remapped with a joint-map file ``{"order": [i0, ..., i13]}`` where entry k
is the source index of joint k. People are rescaled to a common height on load.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from pydantic import ValidationError
from scipy.ndimage import zoom

from .errors import DatasetError
from .fileio import PathLike, atomic_write_text
from .pnm import ImageBuffer, read_pnm
from .skeleton import NUM_JOINTS, Annotation
from .workers import map_jobs

log = logging.getLogger(__name__)

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")
DEFAULT_SPLIT = "train"


@dataclass(frozen=True)
class DatasetEntry:
    """
    ``annotation`` is in original image pixels (None for negatives); ``image`` and
    ``scaled`` are after rescaling by (scale_x, scale_y).
    """

    path: str
    split: str
    annotation: Optional[Annotation]
    image: ImageBuffer
    scaled: Optional[Annotation]
    scale: Tuple[float, float] = (1.0, 1.0)

    @property
    def image_id(self) -> str:
        return self.path

    @property
    def negative(self) -> bool:
        return self.annotation is None

    def to_original(self, x: float, y: float) -> Tuple[float, float]:
        """
        Map a rescaled pixel position back to the original image.
        """
        sx, sy = self.scale
        return (x + 0.5) / sx - 0.5, (y + 0.5) / sy - 0.5


@dataclass
class DatasetManifest:
    root: Path
    entries: List[DatasetEntry]

    def split(self, name: Optional[str]) -> List[DatasetEntry]:
        return [e for e in self.entries if name in (None, "all") or e.split == name]

    @property
    def positives(self) -> List[DatasetEntry]:
        return [e for e in self.entries if not e.negative]

    @property
    def negatives(self) -> List[DatasetEntry]:
        return [e for e in self.entries if e.negative]

    def annotations(self, split: Optional[str] = None) -> List[Annotation]:
        return [e.annotation for e in self.split(split) if e.annotation is not None]


def load_joint_map(path: PathLike) -> List[int]:
    try:
        raw = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, ValueError) as exc:
        raise DatasetError(f"cannot read joint map: {exc}", path=path) from exc
    order = raw.get("order") if isinstance(raw, dict) else None
    if not isinstance(order, list) or sorted(order) != list(range(NUM_JOINTS)):
        raise DatasetError(f"joint map 'order' must be a permutation of 0..{NUM_JOINTS - 1}", path=path)
    return [int(i) for i in order]


def rescale_image(image: ImageBuffer, factor: float) -> Tuple[ImageBuffer, Tuple[float, float]]:
    """
    Bicubic resize by ``factor``; returns the image and the exact per-axis scale
    of the output grid.
    """
    if factor == 1.0:
        return image, (1.0, 1.0)
    out_h = max(1, int(round(image.height * factor)))
    out_w = max(1, int(round(image.width * factor)))
    sy, sx = out_h / image.height, out_w / image.width
    data = image.data.astype(np.float64)
    zooms = (sy, sx) if data.ndim == 2 else (sy, sx, 1.0)
    out = zoom(data, zooms, order=3, mode="nearest", grid_mode=True)
    return ImageBuffer.from_float(out), (sx, sy)


def rescale_annotation(annotation: Annotation, scale: Tuple[float, float]) -> Annotation:
    sx, sy = scale
    joints = [((x + 0.5) * sx - 0.5, (y + 0.5) * sy - 0.5, v) for x, y, v in annotation.joints]
    return Annotation(image=annotation.image_id, joints=joints, height_px=annotation.height_px * sy)


def _parse_record(
    line: str, lineno: int, path: Path, joint_map: Optional[Sequence[int]]
) -> Tuple[dict, Optional[Annotation]]:
    try:
        record = json.loads(line)
    except ValueError as exc:
        raise DatasetError(f"malformed JSON: {exc}", line=lineno, path=path) from exc
    if not isinstance(record, dict) or not isinstance(record.get("image"), str):
        raise DatasetError("record needs an 'image' string", line=lineno, path=path)
    if record.get("negative"):
        return record, None
    joints = record.get("joints")
    if joint_map is not None and isinstance(joints, list) and len(joints) == NUM_JOINTS:
        record = dict(record, joints=[joints[i] for i in joint_map])
    try:
        annotation = Annotation.model_validate(record)
    except ValidationError as exc:
        first = exc.errors()[0]
        where = ".".join(str(p) for p in first["loc"])
        raise DatasetError(
            f"invalid record for {record['image']}: {where}: {first['msg']}", line=lineno, path=path
        ) from exc
    return record, annotation


def load_dataset(
    manifest: PathLike,
    joint_map: Optional[PathLike] = None,
    person_height: float = 150.0,
    threads: int = 1,
) -> DatasetManifest:
    """
    Read a manifest, load every image and rescale each annotated person to
    ``person_height`` pixels. Negatives keep their size.
    """
    path = Path(manifest)
    try:
        lines = path.read_text(encoding="utf-8").splitlines()
    except OSError as exc:
        raise DatasetError(f"cannot read manifest: {exc}", path=path) from exc
    order = load_joint_map(joint_map) if joint_map is not None else None
    root = path.parent

    parsed = []
    for lineno, line in enumerate(lines, start=1):
        if not line.strip():
            continue
        record, annotation = _parse_record(line, lineno, path, order)
        image_path = root / record["image"]
        if not image_path.is_file():
            raise DatasetError(f"missing image {image_path}", line=lineno, path=path)
        parsed.append((lineno, record, annotation, image_path))

    def load(item) -> DatasetEntry:
        lineno, record, annotation, image_path = item
        image = read_pnm(image_path)
        split = str(record.get("split", DEFAULT_SPLIT))
        if annotation is None:
            return DatasetEntry(record["image"], split, None, image, None)
        if not annotation.inside(image.width, image.height):
            raise DatasetError(
                f"joint outside image bounds {image.width}x{image.height} for {record['image']}",
                line=lineno,
                path=path,
            )
        scaled_image, scale = rescale_image(image, person_height / annotation.height_px)
        return DatasetEntry(
            record["image"], split, annotation, scaled_image, rescale_annotation(annotation, scale), scale
        )

    entries = map_jobs(load, parsed, threads)
    log.info(
        "loaded %d entries (%d negatives) from %s",
        len(entries), sum(e.negative for e in entries), path,
    )
    return DatasetManifest(root=root, entries=entries)


def load_image_dir(directory: PathLike, factor: float = 1.0) -> List[DatasetEntry]:
    """
    Every PNM image in ``directory`` as an unannotated entry, resized by ``factor``.
    """
    directory = Path(directory)
    if not directory.is_dir():
        raise DatasetError(f"image directory {directory} does not exist")
    files = sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)
    entries = []
    for p in files:
        image, scale = rescale_image(read_pnm(p), factor)
        entries.append(DatasetEntry(p.name, DEFAULT_SPLIT, None, image, None, scale))
    return entries


def canonical_record(entry_path: str, split: str, annotation: Optional[Annotation]) -> Dict:
    if annotation is None:
        return {"image": entry_path, "negative": True, "split": split}
    return {
        "image": entry_path,
        "joints": [[float(x), float(y), int(v)] for x, y, v in annotation.joints],
        "height_px": float(annotation.height_px),
        "split": split,
    }


def write_dataset(manifest: PathLike, dataset: DatasetManifest) -> None:
    """
    Canonical manifest for ``dataset``: original-pixel annotations, fixed key
    order, one record per line.
    """
    lines = [
        json.dumps(canonical_record(e.path, e.split, e.annotation)) for e in dataset.entries
    ]
    atomic_write_text(manifest, "".join(line + "\n" for line in lines))
