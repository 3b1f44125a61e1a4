"""
Minimal PGM/PPM codec. Other formats need an external converter
(e.g. ``convert in.jpg out.ppm``).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import List, Tuple

import numpy as np

from .errors import DatasetError
from .fileio import PathLike, atomic_write_bytes

LUMA = np.array([0.299, 0.587, 0.114])


@dataclass(frozen=True)
class ImageBuffer:
    """
    8-bit image, ``data`` shaped (height, width) or (height, width, 3).
    """

    data: np.ndarray

    def __post_init__(self) -> None:
        if self.data.dtype != np.uint8:
            raise ValueError(f"image data must be uint8, got {self.data.dtype}")
        if self.data.ndim not in (2, 3) or (self.data.ndim == 3 and self.data.shape[2] != 3):
            raise ValueError(f"image data must be HxW or HxWx3, got {self.data.shape}")

    @property
    def width(self) -> int:
        return int(self.data.shape[1])

    @property
    def height(self) -> int:
        return int(self.data.shape[0])

    @property
    def channels(self) -> int:
        return 1 if self.data.ndim == 2 else 3

    def gray(self) -> np.ndarray:
        """
        Float64 intensity; RGB converted by luma weights.
        """
        if self.channels == 1:
            return self.data.astype(np.float64)
        return self.data.astype(np.float64) @ LUMA

    @classmethod
    def from_float(cls, values: np.ndarray) -> "ImageBuffer":
        return cls(np.clip(np.rint(values), 0, 255).astype(np.uint8))


def _tokens(raw: bytes, count: int, start: int) -> Tuple[List[bytes], int]:
    out: List[bytes] = []
    pos = start
    n = len(raw)
    while len(out) < count:
        while pos < n and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < n and raw[pos : pos + 1] == b"#":
            while pos < n and raw[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        begin = pos
        while pos < n and not raw[pos : pos + 1].isspace() and raw[pos : pos + 1] != b"#":
            pos += 1
        if begin == pos:
            raise ValueError("truncated header")
        out.append(raw[begin:pos])
    return out, pos


def decode_pnm(raw: bytes) -> ImageBuffer:
    magic = raw[:2]
    if magic not in (b"P2", b"P3", b"P5", b"P6"):
        raise ValueError(f"unsupported image magic {magic!r}; convert to PGM/PPM first")
    (w, h, maxval), pos = _tokens(raw, 3, 2)
    width, height, maxval = int(w), int(h), int(maxval)
    if maxval <= 0 or maxval > 255:
        raise ValueError(f"only 8-bit images are supported (maxval {maxval})")
    channels = 3 if magic in (b"P3", b"P6") else 1
    count = width * height * channels
    if magic in (b"P5", b"P6"):
        body = raw[pos + 1 : pos + 1 + count]
        if len(body) != count:
            raise ValueError("truncated pixel data")
        values = np.frombuffer(body, dtype=np.uint8).astype(np.int32)
    else:
        toks, _ = _tokens(raw, count, pos)
        values = np.array([int(t) for t in toks], dtype=np.int32)
    if maxval != 255:
        values = np.rint(values * (255.0 / maxval)).astype(np.int32)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return ImageBuffer(values.reshape(shape).astype(np.uint8))


def encode_pnm(image: ImageBuffer) -> bytes:
    magic = b"P5" if image.channels == 1 else b"P6"
    header = magic + f"\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + np.ascontiguousarray(image.data).tobytes()


def read_pnm(path: PathLike) -> ImageBuffer:
    path = Path(path)
    if not path.exists():
        raise DatasetError("image not found", path=path)
    try:
        return decode_pnm(path.read_bytes())
    except ValueError as exc:
        raise DatasetError(str(exc), path=path) from exc


def write_pnm(path: PathLike, image: ImageBuffer) -> None:
    atomic_write_bytes(path, encode_pnm(image))
