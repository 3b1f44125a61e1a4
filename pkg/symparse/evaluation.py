"""
PCP (percentage of correct parts) over the ten standard limb segments.

A predicted segment is correct when each endpoint lies within ``fraction`` of
the ground-truth segment length from the matching truth endpoint. Endpoints are
matched in order, proximal joint first.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .fileio import PathLike, atomic_write_csv, atomic_write_text
from .skeleton import JOINT_INDEX, Annotation

log = logging.getLogger(__name__)

PCP_FRACTION = 0.5
COLUMNS = ("Torso", "Head", "Upper Leg", "Lower Leg", "U.Arm", "L.Arm")

Point = Tuple[float, float]


@dataclass(frozen=True)
class Segment:
    name: str
    a: Point
    b: Point

    @property
    def length(self) -> float:
        return float(np.hypot(self.b[0] - self.a[0], self.b[1] - self.a[1]))


@dataclass(frozen=True)
class SegmentDef:
    name: str
    column: str
    a: Tuple[str, ...]
    b: Tuple[str, ...]


# endpoints given as joint names; several names mean their midpoint
SEGMENTS: Tuple[SegmentDef, ...] = (
    SegmentDef("torso", "Torso", ("neck",), ("l_hip", "r_hip")),
    SegmentDef("head", "Head", ("head_top",), ("neck",)),
    SegmentDef("l_upper_leg", "Upper Leg", ("l_hip",), ("l_knee",)),
    SegmentDef("r_upper_leg", "Upper Leg", ("r_hip",), ("r_knee",)),
    SegmentDef("l_lower_leg", "Lower Leg", ("l_knee",), ("l_ankle",)),
    SegmentDef("r_lower_leg", "Lower Leg", ("r_knee",), ("r_ankle",)),
    SegmentDef("l_upper_arm", "U.Arm", ("l_shoulder",), ("l_elbow",)),
    SegmentDef("r_upper_arm", "U.Arm", ("r_shoulder",), ("r_elbow",)),
    SegmentDef("l_lower_arm", "L.Arm", ("l_elbow",), ("l_wrist",)),
    SegmentDef("r_lower_arm", "L.Arm", ("r_elbow",), ("r_wrist",)),
)


def pcp_correct(predicted: Segment, truth: Segment, fraction: float = PCP_FRACTION) -> bool:
    length = truth.length
    if not length > 0:
        raise ValueError(f"ground-truth segment {truth.name} has zero length")
    limit = fraction * length
    err_a = np.hypot(predicted.a[0] - truth.a[0], predicted.a[1] - truth.a[1])
    err_b = np.hypot(predicted.b[0] - truth.b[0], predicted.b[1] - truth.b[1])
    return bool(err_a <= limit and err_b <= limit)


@dataclass
class PcpReport:
    correct: Dict[str, int] = field(default_factory=lambda: {c: 0 for c in COLUMNS})
    total: Dict[str, int] = field(default_factory=lambda: {c: 0 for c in COLUMNS})

    def percentage(self, column: str) -> float:
        n = self.total[column]
        return 100.0 * self.correct[column] / n if n else 0.0

    @property
    def total_percentage(self) -> float:
        n = sum(self.total.values())
        return 100.0 * sum(self.correct.values()) / n if n else 0.0

    def row(self) -> List[float]:
        return [self.percentage(c) for c in COLUMNS] + [self.total_percentage]

    def table(self) -> str:
        header = " | ".join(f"{c:>9}" for c in (*COLUMNS, "Total"))
        values = " | ".join(f"{v:9.1f}" for v in self.row())
        counts = " | ".join(
            f"{self.correct[c]:>4}/{self.total[c]:<4}" for c in COLUMNS
        ) + f" | {sum(self.correct.values()):>4}/{sum(self.total.values()):<4}"
        return "\n".join([header, "-" * len(header), values, counts])

    def write_csv(self, path: PathLike) -> None:
        rows = [[c, self.correct[c], self.total[c], f"{self.percentage(c):.2f}"] for c in COLUMNS]
        rows.append(
            ["Total", sum(self.correct.values()), sum(self.total.values()), f"{self.total_percentage:.2f}"]
        )
        atomic_write_csv(path, ["column", "correct", "total", "percentage"], rows)

    def write_table(self, path: PathLike) -> None:
        atomic_write_text(path, self.table() + "\n")


def _endpoint(points: Mapping[str, Point], names: Sequence[str]) -> Optional[Point]:
    if any(n not in points for n in names):
        return None
    xs = [points[n][0] for n in names]
    ys = [points[n][1] for n in names]
    return float(np.mean(xs)), float(np.mean(ys))


def segments_from_points(points: Mapping[str, Point]) -> Dict[str, Segment]:
    """
    Evaluation segments from named joint positions; segments with a missing
    endpoint are left out.
    """
    out: Dict[str, Segment] = {}
    for sd in SEGMENTS:
        a, b = _endpoint(points, sd.a), _endpoint(points, sd.b)
        if a is not None and b is not None:
            out[sd.name] = Segment(sd.name, a, b)
    return out


def annotation_points(annotation: Annotation) -> Dict[str, Point]:
    pts = annotation.points()
    vis = annotation.visible()
    return {name: (float(pts[i, 0]), float(pts[i, 1])) for name, i in JOINT_INDEX.items() if vis[i]}


def prediction_points(record: Mapping) -> Dict[str, Point]:
    """
    Joint positions from a parse record (the JSON-lines output of ``parse``).
    """
    parts = record.get("parts", {})
    return {
        name: (float(parts[name]["location"][0]), float(parts[name]["location"][1]))
        for name in JOINT_INDEX
        if name in parts
    }


def evaluate(
    predictions: Mapping[str, Mapping[str, Point]],
    annotations: Sequence[Annotation],
    fraction: float = PCP_FRACTION,
) -> PcpReport:
    """
    ``predictions`` maps image id to predicted joint positions by name. An image
    without a prediction counts all its segments as incorrect; segments whose
    truth endpoints are not visible are not evaluated.
    """
    report = PcpReport()
    by_column = {sd.name: sd.column for sd in SEGMENTS}
    for ann in annotations:
        truth = segments_from_points(annotation_points(ann))
        pred_points = predictions.get(ann.image_id)
        if pred_points is None:
            log.warning("no prediction for %s", ann.image_id)
        predicted = segments_from_points(pred_points) if pred_points is not None else {}
        for name, seg in truth.items():
            if seg.length <= 0:
                log.warning("%s: zero-length %s segment skipped", ann.image_id, name)
                continue
            column = by_column[name]
            report.total[column] += 1
            pred = predicted.get(name)
            if pred is not None and pcp_correct(pred, seg, fraction):
                report.correct[column] += 1
    return report
