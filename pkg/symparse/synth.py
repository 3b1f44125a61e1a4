"""
Synthetic stick figures with known joints.

Each body part is drawn as a capsule filled with its own stripe texture; the
stripes follow the limb axis, so a part looks alike in every pose. Angles are
in degrees, measured from straight down, positive toward the figure's outside.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field

from .errors import SynthError
from .fileio import PathLike, atomic_write_text
from .pnm import ImageBuffer, write_pnm
from .skeleton import JOINT_INDEX, JOINT_NAMES, Annotation, SkeletonTree, default_tree
from .workers import map_jobs

log = logging.getLogger(__name__)

BACKGROUND = 128.0
MARGIN_PX = 6

# fractions of person height (head top to ankles)
HEAD = 0.13
TORSO = 0.32
SHOULDER_HALF = 0.11
SHOULDER_DROP = 0.03
HIP_HALF = 0.07
UPPER_ARM = 0.17
LOWER_ARM = 0.15
UPPER_LEG = 0.26
LOWER_LEG = 0.29

Range = Tuple[float, float]


class SynthConfig(BaseModel):
    model_config = ConfigDict(frozen=True)

    seed: int = 0
    width: int = Field(176, ge=32)
    height: int = Field(200, ge=32)
    scale: float = Field(150.0, ge=100.0, le=150.0)
    limb_thickness: float = Field(7.0, gt=0.0)
    texture: str = Field("stripes", pattern="^(stripes|flat)$")
    lean: Range = (-8.0, 8.0)
    arm: Range = (10.0, 60.0)
    elbow: Range = (-40.0, 40.0)
    leg: Range = (0.0, 20.0)
    knee: Range = (-15.0, 15.0)
    clutter: float = Field(0.3, ge=0.0, le=1.0)
    negative_clutter: float = Field(0.6, ge=0.0, le=1.0)


@dataclass(frozen=True)
class PartStyle:
    intensity: float
    contrast: float
    period: float
    angle: float  # stripe direction relative to the limb axis


STYLES: Dict[str, PartStyle] = {
    "torso": PartStyle(205.0, 40.0, 6.0, 90.0),
    "head": PartStyle(230.0, 15.0, 4.0, 0.0),
    "upper_arm": PartStyle(60.0, 35.0, 4.0, 90.0),
    "lower_arm": PartStyle(170.0, 45.0, 3.0, 0.0),
    "upper_leg": PartStyle(40.0, 30.0, 5.0, 0.0),
    "lower_leg": PartStyle(150.0, 50.0, 4.0, 90.0),
}


@dataclass(frozen=True)
class SynthSample:
    image: ImageBuffer
    annotation: Annotation
    joints: np.ndarray  # (14, 2) float, before rounding
    part_centers: Dict[int, Tuple[float, float]]


def _direction(angle_deg: float) -> np.ndarray:
    a = math.radians(angle_deg)
    return np.array([math.sin(a), math.cos(a)])


def _check(config: SynthConfig) -> None:
    for name in ("lean", "arm", "elbow", "leg", "knee"):
        lo, hi = getattr(config, name)
        if lo > hi:
            raise SynthError(f"infeasible pose sampler range {name}: {lo} > {hi}")
    need_h = config.scale * (1.0 + HEAD * 0.2) + 2 * MARGIN_PX
    if config.height < need_h:
        raise SynthError(f"image height {config.height} cannot hold a {config.scale:.0f}-px person")
    reach = SHOULDER_HALF + UPPER_ARM + LOWER_ARM
    if config.width < 2 * reach * config.scale * 0.9 + 2 * MARGIN_PX:
        raise SynthError(f"image width {config.width} cannot hold arms of a {config.scale:.0f}-px person")


def sample_pose(config: SynthConfig, rng: np.random.Generator) -> np.ndarray:
    """
    Joint positions (14, 2) in pixels relative to the neck.
    """
    H = config.scale

    def u(r: Range) -> float:
        return float(rng.uniform(r[0], r[1]))

    lean = u(config.lean)
    down = _direction(lean)
    side = np.array([down[1], -down[0]])  # toward the figure's left (image right)

    j = np.zeros((len(JOINT_NAMES), 2))
    neck = np.zeros(2)
    j[JOINT_INDEX["neck"]] = neck
    j[JOINT_INDEX["head_top"]] = neck - HEAD * H * down
    pelvis = neck + TORSO * H * down
    shoulder_base = neck + SHOULDER_DROP * H * down
    for sign, prefix in ((1.0, "l_"), (-1.0, "r_")):
        shoulder = shoulder_base + sign * SHOULDER_HALF * H * side
        arm_angle = lean + sign * u(config.arm)
        elbow = shoulder + UPPER_ARM * H * _direction(arm_angle)
        wrist = elbow + LOWER_ARM * H * _direction(arm_angle + sign * u(config.elbow))
        hip = pelvis + sign * HIP_HALF * H * side
        leg_angle = lean + sign * u(config.leg)
        knee = hip + UPPER_LEG * H * _direction(leg_angle)
        ankle = knee + LOWER_LEG * H * _direction(leg_angle + sign * u(config.knee))
        for name, pt in (
            ("shoulder", shoulder), ("elbow", elbow), ("wrist", wrist),
            ("hip", hip), ("knee", knee), ("ankle", ankle),
        ):
            j[JOINT_INDEX[prefix + name]] = pt
    return j


def _segment_distance(
    xx: np.ndarray, yy: np.ndarray, a: np.ndarray, b: np.ndarray
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Distance from every pixel to segment ab, and the pixel's coordinate along
    and across the segment axis.
    """
    d = b - a
    length = float(np.hypot(*d)) or 1.0
    ux, uy = d / length
    px, py = xx - a[0], yy - a[1]
    along = px * ux + py * uy
    across = -px * uy + py * ux
    t = np.clip(along, 0.0, length)
    dist = np.hypot(px - t * ux, py - t * uy)
    return dist, np.stack([along, across])


def _paint(canvas: np.ndarray, mask: np.ndarray, coords: np.ndarray, style: PartStyle, texture: str) -> None:
    if texture == "flat":
        canvas[mask] = style.intensity
        return
    theta = math.radians(style.angle)
    proj = coords[0] * math.cos(theta) + coords[1] * math.sin(theta)
    stripe = np.where(np.sin(2 * math.pi * proj / style.period) >= 0, 1.0, -1.0)
    canvas[mask] = (style.intensity + style.contrast * stripe)[mask]


def _clutter(canvas: np.ndarray, density: float, rng: np.random.Generator) -> None:
    h, w = canvas.shape
    count = int(density * h * w / 400.0)
    yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
    for _ in range(count):
        value = rng.uniform(0.0, 255.0)
        if rng.random() < 0.5:
            x0, y0 = rng.uniform(0, w), rng.uniform(0, h)
            x1, y1 = x0 + rng.uniform(3, 25), y0 + rng.uniform(3, 25)
            canvas[(xx >= x0) & (xx < x1) & (yy >= y0) & (yy < y1)] = value
        else:
            a = np.array([rng.uniform(0, w), rng.uniform(0, h)])
            b = a + rng.uniform(-30, 30, size=2)
            dist, _ = _segment_distance(xx, yy, a, b)
            canvas[dist <= rng.uniform(0.5, 2.5)] = value


def _limbs(j: np.ndarray) -> List[Tuple[str, np.ndarray, np.ndarray, float]]:
    """
    Drawing order back to front: (style, start, end, thickness factor).
    """
    def g(name: str) -> np.ndarray:
        return j[JOINT_INDEX[name]]

    pelvis = 0.5 * (g("l_hip") + g("r_hip"))
    out = [("torso", g("neck"), pelvis, 3.2)]
    for p in ("l_", "r_"):
        out += [
            ("upper_leg", g(p + "hip"), g(p + "knee"), 1.3),
            ("lower_leg", g(p + "knee"), g(p + "ankle"), 1.1),
        ]
    out.append(("head", g("head_top"), g("neck"), 1.8))
    for p in ("l_", "r_"):
        out += [
            ("upper_arm", g(p + "shoulder"), g(p + "elbow"), 1.0),
            ("lower_arm", g(p + "elbow"), g(p + "wrist"), 0.9),
        ]
    return out


def part_centers(joints: np.ndarray, tree: SkeletonTree) -> Dict[int, Tuple[float, float]]:
    out = {}
    for part in tree.parts:
        c = joints[list(part.constituent_joints)].mean(axis=0)
        out[part.part_id] = (float(c[0]), float(c[1]))
    return out


def render_figure(config: SynthConfig, index: int, tree: SkeletonTree) -> SynthSample:
    rng = np.random.default_rng([config.seed, index])
    rel = sample_pose(config, rng)
    pad = config.limb_thickness * 3.2 * 0.5 + MARGIN_PX
    lo = rel.min(axis=0) - pad
    hi = rel.max(axis=0) + pad
    slack_x = config.width - (hi[0] - lo[0])
    slack_y = config.height - (hi[1] - lo[1])
    if slack_x < 0 or slack_y < 0:
        raise SynthError(f"figure {index} does not fit a {config.width}x{config.height} image")
    offset = np.array([rng.uniform(0, slack_x), rng.uniform(0, slack_y)]) - lo
    joints = rel + offset

    canvas = np.full((config.height, config.width), BACKGROUND)
    _clutter(canvas, config.clutter, rng)
    yy, xx = np.mgrid[0 : config.height, 0 : config.width].astype(np.float64)
    for style, a, b, thick in _limbs(joints):
        dist, coords = _segment_distance(xx, yy, a, b)
        _paint(canvas, dist <= 0.5 * config.limb_thickness * thick, coords, STYLES[style], config.texture)

    rounded = np.rint(joints)
    annotation = Annotation(
        image=f"img_{index:04d}.pgm",
        joints=[(float(x), float(y), 1) for x, y in rounded],
        height_px=config.scale,
    )
    return SynthSample(
        image=ImageBuffer.from_float(canvas),
        annotation=annotation,
        joints=joints,
        part_centers=part_centers(joints, tree),
    )


def generate_synthetic(config: SynthConfig, n: int, threads: int = 1) -> List[SynthSample]:
    """
    ``n`` figures; figure i depends only on (seed, i).
    """
    if n < 1:
        raise SynthError(f"n must be >= 1, got {n}")
    _check(config)
    tree = default_tree()
    return map_jobs(lambda i: render_figure(config, i, tree), list(range(n)), threads)


def generate_negatives(config: SynthConfig, n: int) -> List[ImageBuffer]:
    """
    Clutter-only images, seeded apart from the figures.
    """
    out = []
    for i in range(n):
        rng = np.random.default_rng([config.seed, 1_000_003, i])
        canvas = np.full((config.height, config.width), BACKGROUND)
        _clutter(canvas, config.negative_clutter, rng)
        out.append(ImageBuffer.from_float(canvas))
    return out


def write_synthetic(
    out_dir: PathLike, config: SynthConfig, n: int, n_negatives: int = 0, threads: int = 1
) -> Path:
    """
    Write images and ``manifest.jsonl``; the first half of the figures is the
    train split, the rest the test split. Returns the manifest path.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    samples = generate_synthetic(config, n, threads)
    lines = []
    n_train = (n + 1) // 2
    for i, sample in enumerate(samples):
        write_pnm(out / sample.annotation.image_id, sample.image)
        lines.append(
            json.dumps(
                {
                    "image": sample.annotation.image_id,
                    "joints": [[x, y, v] for x, y, v in sample.annotation.joints],
                    "height_px": float(sample.annotation.height_px),
                    "split": "train" if i < n_train else "test",
                }
            )
        )
    for i, image in enumerate(generate_negatives(config, n_negatives)):
        name = f"neg_{i:04d}.pgm"
        write_pnm(out / name, image)
        lines.append(json.dumps({"image": name, "negative": True, "split": "train"}))
    manifest = out / "manifest.jsonl"
    atomic_write_text(manifest, "".join(line + "\n" for line in lines))
    log.info("wrote %d figures and %d negatives to %s", n, n_negatives, out)
    return manifest
