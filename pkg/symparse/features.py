"""
Dense gradient-orientation features on a 4x4-pixel cell grid.

Each cell carries 31 values: 18 contrast-sensitive orientation bins, 9
contrast-insensitive bins and 4 gradient-energy (texture) channels, all computed
against the four 2x2-cell blocks that contain the cell, with per-entry clipping
at 0.2.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Tuple

import numpy as np
from scipy.signal import correlate

from .errors import FilterShapeError, ImageTooSmallError
from .pnm import ImageBuffer

SIGNED_BINS = 18
UNSIGNED_BINS = 9
TEXTURE_CHANNELS = 4
FEATURE_DIM = SIGNED_BINS + UNSIGNED_BINS + TEXTURE_CHANNELS

CLIP = 0.2
NORM_EPS = 1e-4
TEXTURE_SCALE = 0.2357

_ANGLES = np.arange(UNSIGNED_BINS) * np.pi / UNSIGNED_BINS
_UU = np.cos(_ANGLES)
_VV = np.sin(_ANGLES)


@dataclass(frozen=True)
class FeatureMap:
    """
    ``data`` is (cells_high, cells_wide, feature_dim), row-major by cell.
    """

    data: np.ndarray
    cell_size: int

    @property
    def cells_wide(self) -> int:
        return int(self.data.shape[1])

    @property
    def cells_high(self) -> int:
        return int(self.data.shape[0])

    @property
    def feature_dim(self) -> int:
        return int(self.data.shape[2])

    @property
    def shape(self) -> Tuple[int, int]:
        return self.cells_high, self.cells_wide


def _gradients(gray: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    dx = np.zeros_like(gray)
    dy = np.zeros_like(gray)
    dx[:, 1:-1] = gray[:, 2:] - gray[:, :-2]
    dy[1:-1, :] = gray[2:, :] - gray[:-2, :]
    return dx, dy


def _cell_histograms(gray: np.ndarray, cell_size: int) -> np.ndarray:
    ch, cw = gray.shape[0] // cell_size, gray.shape[1] // cell_size
    gray = gray[: ch * cell_size, : cw * cell_size]
    dx, dy = _gradients(gray)
    mag = np.sqrt(dx * dx + dy * dy)

    dots = _UU[:, None, None] * dx[None] + _VV[:, None, None] * dy[None]
    best = np.argmax(np.abs(dots), axis=0)
    picked = np.take_along_axis(dots, best[None], axis=0)[0]
    bins = best + UNSIGNED_BINS * (picked < 0)

    rows = np.arange(gray.shape[0]) // cell_size
    cols = np.arange(gray.shape[1]) // cell_size
    cell = rows[:, None] * cw + cols[None, :]
    index = cell * SIGNED_BINS + bins
    hist = np.bincount(index.ravel(), weights=mag.ravel(), minlength=ch * cw * SIGNED_BINS)
    return hist.reshape(ch, cw, SIGNED_BINS)


def _block_normalizers(hist: np.ndarray) -> np.ndarray:
    """
    Inverse L2 norms of the four blocks around each cell, ordered
    top-left, top-right, bottom-left, bottom-right; shape (4, ch, cw).
    """
    energy = (hist[..., :UNSIGNED_BINS] + hist[..., UNSIGNED_BINS:]) ** 2
    energy = energy.sum(axis=-1)
    padded = np.pad(energy, 1)
    blocks = padded[:-1, :-1] + padded[1:, :-1] + padded[:-1, 1:] + padded[1:, 1:]
    ch, cw = energy.shape
    sums = np.stack(
        [
            blocks[:ch, :cw],
            blocks[:ch, 1 : cw + 1],
            blocks[1 : ch + 1, :cw],
            blocks[1 : ch + 1, 1 : cw + 1],
        ]
    )
    return 1.0 / np.sqrt(sums + NORM_EPS)


def extract_features(image: ImageBuffer, cell_size: int = 4) -> FeatureMap:
    if cell_size < 2:
        raise ValueError(f"cell_size must be >= 2, got {cell_size}")
    if image.width < cell_size or image.height < cell_size:
        raise ImageTooSmallError(
            f"image too small: {image.width}x{image.height} px for {cell_size}-px cells"
        )
    hist = _cell_histograms(image.gray(), cell_size)
    norms = _block_normalizers(hist)

    signed = np.minimum(hist[None] * norms[..., None], CLIP)
    unsigned_hist = hist[..., :UNSIGNED_BINS] + hist[..., UNSIGNED_BINS:]
    unsigned = np.minimum(unsigned_hist[None] * norms[..., None], CLIP)
    texture = TEXTURE_SCALE * signed.sum(axis=-1)

    data = np.concatenate(
        [0.5 * signed.sum(axis=0), 0.5 * unsigned.sum(axis=0), np.moveaxis(texture, 0, -1)],
        axis=-1,
    )
    return FeatureMap(data=data, cell_size=cell_size)


def _box_origin(location: Tuple[int, int], box: Tuple[int, int]) -> Tuple[int, int]:
    return int(location[0]) - box[0] // 2, int(location[1]) - box[1] // 2


def crop_patch_feature(fmap: FeatureMap, location: Tuple[int, int], box: Tuple[int, int]) -> np.ndarray:
    """
    Features of the ``box`` = (w, h) cells centered at ``location`` = (x, y),
    flattened as (row, column, channel); cells outside the map are zero.
    """
    w, h = box
    x0, y0 = _box_origin(location, box)
    out = np.zeros((h, w, fmap.feature_dim))
    ys = slice(max(y0, 0), min(y0 + h, fmap.cells_high))
    xs = slice(max(x0, 0), min(x0 + w, fmap.cells_wide))
    if ys.start < ys.stop and xs.start < xs.stop:
        out[ys.start - y0 : ys.stop - y0, xs.start - x0 : xs.stop - x0] = fmap.data[ys, xs]
    return out.ravel()


def correlate_filter(fmap: FeatureMap, weights: np.ndarray, box: Tuple[int, int]) -> np.ndarray:
    """
    Dense appearance score at every cell, same zero-padding as ``crop_patch_feature``;
    returns a (cells_high, cells_wide) map.
    """
    w, h = box
    expected = w * h * fmap.feature_dim
    weights = np.asarray(weights, dtype=np.float64)
    if weights.size != expected:
        raise FilterShapeError(
            f"filter has {weights.size} weights, box {w}x{h} x {fmap.feature_dim} needs {expected}"
        )
    kernel = weights.reshape(h, w, fmap.feature_dim)
    padded = np.pad(
        fmap.data,
        ((h // 2, h - 1 - h // 2), (w // 2, w - 1 - w // 2), (0, 0)),
    )
    return correlate(padded, kernel, mode="valid")[..., 0]
