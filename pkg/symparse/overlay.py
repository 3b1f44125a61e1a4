"""
Pictures of parses and of learned symbol filters.
"""

from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Mapping, Tuple

import numpy as np

from .features import SIGNED_BINS, UNSIGNED_BINS
from .fileio import PathLike, atomic_write_text
from .model import ModelParams
from .pnm import ImageBuffer, write_pnm
from .skeleton import Level, SkeletonTree

log = logging.getLogger(__name__)

# part kind -> RGB; left limbs solid, right limbs dashed
PALETTE: Dict[str, Tuple[int, int, int]] = {
    "upper_body": (255, 255, 0),
    "lower_body": (255, 140, 0),
    "head": (255, 0, 0),
    "upper_arm": (0, 255, 255),
    "lower_arm": (255, 0, 255),
    "upper_leg": (0, 255, 0),
    "lower_leg": (0, 0, 255),
}
DASH = 3
GLYPH_CELL_PX = 10


def _kind(name: str) -> str:
    return name[2:] if name[:2] in ("l_", "r_") else name


def _rgb(image: ImageBuffer) -> np.ndarray:
    if image.channels == 3:
        return image.data.copy()
    return np.repeat(image.data[..., None], 3, axis=2)


def _draw_box(canvas: np.ndarray, x0: int, y0: int, x1: int, y1: int, color, dashed: bool) -> None:
    h, w = canvas.shape[:2]

    def put(xs: np.ndarray, ys: np.ndarray) -> None:
        keep = (xs >= 0) & (xs < w) & (ys >= 0) & (ys < h)
        if dashed:
            keep &= (np.arange(xs.size) // DASH) % 2 == 0
        canvas[ys[keep], xs[keep]] = color

    xs = np.arange(x0, x1 + 1)
    ys = np.arange(y0, y1 + 1)
    put(xs, np.full_like(xs, y0))
    put(xs, np.full_like(xs, y1))
    put(np.full_like(ys, x0), ys)
    put(np.full_like(ys, x1), ys)


def render_overlay(image: ImageBuffer, record: Mapping, tree: SkeletonTree, cell_size: int) -> ImageBuffer:
    """
    Draw the high- and mid-level part boxes of one parse record on ``image``.
    ``image`` is the grid the record's ``cell`` entries refer to.
    """
    canvas = _rgb(image)
    parts = record["parts"]
    for part in tree.parts:
        if part.level is Level.JOINT or part.name not in parts:
            continue
        color = PALETTE.get(_kind(part.name))
        if color is None:
            continue
        cx, cy = parts[part.name]["cell"]
        w, h = part.box_size
        x0 = (cx - w // 2) * cell_size
        y0 = (cy - h // 2) * cell_size
        x1, y1 = x0 + w * cell_size - 1, y0 + h * cell_size - 1
        _draw_box(canvas, x0, y0, x1, y1, color, dashed=part.name.startswith("r_"))
    return ImageBuffer(canvas)


def write_overlays(
    out_dir: PathLike,
    records: List[Mapping],
    images: Mapping[str, ImageBuffer],
    tree: SkeletonTree,
    cell_size: int,
) -> List[Path]:
    out = Path(out_dir)
    paths = []
    for record in records:
        image = images.get(record["image_id"])
        if image is None:
            continue
        stem = Path(record["image_id"]).stem
        path = out / f"{stem}_parse.ppm"
        if path in paths:
            path = out / f"{stem}_parse_{len(paths)}.ppm"
        write_pnm(path, render_overlay(image, record, tree, cell_size))
        paths.append(path)
    log.info("wrote %d overlays to %s", len(paths), out)
    return paths


def _orientation_strength(cell: np.ndarray) -> np.ndarray:
    signed = np.maximum(cell[:SIGNED_BINS], 0.0)
    unsigned = np.maximum(cell[SIGNED_BINS : SIGNED_BINS + UNSIGNED_BINS], 0.0)
    return signed[:UNSIGNED_BINS] + signed[UNSIGNED_BINS:] + unsigned


def render_filter_glyph(
    weights: np.ndarray, box: Tuple[int, int], feature_dim: int, cell_px: int = GLYPH_CELL_PX
) -> np.ndarray:
    """
    Float image of a filter's positive orientation weights: one stroke per
    orientation bin per cell, drawn along the edge the bin responds to.
    """
    w, h = box
    cells = np.asarray(weights, dtype=np.float64).reshape(h, w, feature_dim)
    glyph = np.zeros((h * cell_px, w * cell_px))
    r = (cell_px - 1) / 2.0
    t = np.linspace(-r, r, cell_px * 2)
    for b in range(UNSIGNED_BINS):
        # edge runs perpendicular to the gradient of bin b
        angle = b * np.pi / UNSIGNED_BINS + np.pi / 2
        dx = np.rint(r + t * np.cos(angle)).astype(int).clip(0, cell_px - 1)
        dy = np.rint(r + t * np.sin(angle)).astype(int).clip(0, cell_px - 1)
        for cy in range(h):
            for cx in range(w):
                v = _orientation_strength(cells[cy, cx])[b]
                if v <= 0:
                    continue
                ys, xs = cy * cell_px + dy, cx * cell_px + dx
                glyph[ys, xs] = np.maximum(glyph[ys, xs], v)
    return glyph


def symbol_sheet(params: ModelParams, part_id: int, cell_px: int = GLYPH_CELL_PX, gap: int = 2) -> ImageBuffer:
    """
    Glyphs of every symbol of one part side by side, scaled to the strongest weight.
    """
    part = params.tree.part(part_id)
    glyphs = [
        render_filter_glyph(params.filter(part_id, s), part.box_size, params.feature_dim, cell_px)
        for s in range(params.n_symbols(part_id))
    ]
    gh, gw = glyphs[0].shape
    sheet = np.zeros((gh, len(glyphs) * (gw + gap) - gap))
    for i, g in enumerate(glyphs):
        sheet[:, i * (gw + gap) : i * (gw + gap) + gw] = g
    peak = sheet.max()
    if peak > 0:
        sheet *= 255.0 / peak
    return ImageBuffer.from_float(sheet)


def write_symbol_glyphs(params: ModelParams, out_dir: PathLike, cell_px: int = GLYPH_CELL_PX) -> List[Path]:
    """
    One ``glyph_<part>.pgm`` per part plus ``glyphs.txt`` listing symbols per part.
    """
    out = Path(out_dir)
    paths: List[Path] = []
    lines = []
    for part in params.tree.parts:
        path = out / f"glyph_{part.name}.pgm"
        write_pnm(path, symbol_sheet(params, part.part_id, cell_px))
        paths.append(path)
        ids = params.symbols[part.part_id]
        types = sorted({s.geometric_type for s in ids})
        symbols = " ".join(f"{s.geometric_type}/{s.visual_category}" for s in ids)
        lines.append(f"{part.name}: {len(ids)} symbols over {len(types)} types [{symbols}]")
    summary = out / "glyphs.txt"
    atomic_write_text(summary, "\n".join(lines) + "\n")
    paths.append(summary)
    return paths
