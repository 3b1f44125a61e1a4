"""
Part hierarchy and joint annotations.

The default tree has three levels: two high-level parts (upper body, drawn as
the torso, and lower body), nine mid-level limb/head parts, and the 14 joints.
Joint indices follow the LSP ordering listed in ``JOINT_NAMES``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from .errors import TreeError

JOINT_NAMES: Tuple[str, ...] = (
    "r_ankle",
    "r_knee",
    "r_hip",
    "l_hip",
    "l_knee",
    "l_ankle",
    "r_wrist",
    "r_elbow",
    "r_shoulder",
    "l_shoulder",
    "l_elbow",
    "l_wrist",
    "neck",
    "head_top",
)
NUM_JOINTS = len(JOINT_NAMES)
JOINT_INDEX: Dict[str, int] = {name: i for i, name in enumerate(JOINT_NAMES)}

JOINT_BOX = (5, 5)
MID_BOX = (6, 9)
HIGH_BOX = (9, 12)


class Level(str, Enum):
    HIGH = "high"
    MID = "mid"
    JOINT = "joint"


@dataclass(frozen=True)
class PartDef:
    part_id: int
    name: str
    level: Level
    box_size: Tuple[int, int]
    constituent_joints: Tuple[int, ...]

    @property
    def is_large(self) -> bool:
        return self.level is not Level.JOINT


@dataclass(frozen=True)
class SkeletonTree:
    parts: Tuple[PartDef, ...]
    edges: Tuple[Tuple[int, int], ...]
    root_id: int
    _by_id: Dict[int, PartDef] = field(init=False, repr=False, compare=False)
    _children: Dict[int, Tuple[int, ...]] = field(init=False, repr=False, compare=False)
    _parent: Dict[int, int] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        by_id: Dict[int, PartDef] = {}
        for part in self.parts:
            if part.part_id in by_id:
                raise TreeError(f"duplicate part id {part.part_id}")
            if part.box_size[0] < 1 or part.box_size[1] < 1:
                raise TreeError(f"part {part.name} has box {part.box_size}, need >= (1, 1)")
            if part.level is Level.JOINT and len(part.constituent_joints) != 1:
                raise TreeError(f"joint part {part.name} must have exactly one joint")
            if not part.constituent_joints:
                raise TreeError(f"part {part.name} has no constituent joints")
            by_id[part.part_id] = part
        if self.root_id not in by_id:
            raise TreeError(f"root {self.root_id} is not a part")
        if len(self.edges) != len(self.parts) - 1:
            raise TreeError(f"{len(self.edges)} edges for {len(self.parts)} parts, not a tree")

        children: Dict[int, List[int]] = {pid: [] for pid in by_id}
        parent: Dict[int, int] = {}
        for p, c in self.edges:
            if p not in by_id or c not in by_id:
                raise TreeError(f"edge ({p}, {c}) references an unknown part")
            if c in parent:
                raise TreeError(f"part {c} has two parents")
            if c == self.root_id:
                raise TreeError("root must not have a parent")
            parent[c] = p
            children[p].append(c)

        seen = set()
        stack = [self.root_id]
        while stack:
            pid = stack.pop()
            if pid in seen:
                raise TreeError("cycle in part graph")
            seen.add(pid)
            stack.extend(children[pid])
        if len(seen) != len(by_id):
            missing = sorted(set(by_id) - seen)
            raise TreeError(f"parts {missing} not reachable from root")

        object.__setattr__(self, "_by_id", by_id)
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})
        object.__setattr__(self, "_parent", parent)

    def part(self, part_id: int) -> PartDef:
        return self._by_id[part_id]

    def part_by_name(self, name: str) -> PartDef:
        for part in self.parts:
            if part.name == name:
                return part
        raise KeyError(name)

    def children(self, part_id: int) -> Tuple[int, ...]:
        return self._children[part_id]

    def parent(self, part_id: int) -> Optional[int]:
        return self._parent.get(part_id)

    @property
    def part_ids(self) -> List[int]:
        return [p.part_id for p in self.parts]

    def preorder(self) -> List[int]:
        order: List[int] = []
        stack = [self.root_id]
        while stack:
            pid = stack.pop()
            order.append(pid)
            stack.extend(reversed(self._children[pid]))
        return order

    def postorder(self) -> List[int]:
        """
        Children before parents; the leaf-to-root message schedule.
        """
        return list(reversed(self.preorder()))

    def joint_parts(self) -> Dict[int, int]:
        """
        Map joint index -> id of the joint-level part holding it.
        """
        return {
            p.constituent_joints[0]: p.part_id for p in self.parts if p.level is Level.JOINT
        }


def _joints(*names: str) -> Tuple[int, ...]:
    return tuple(JOINT_INDEX[n] for n in names)


def default_tree() -> SkeletonTree:
    """
    25-part tree rooted at the upper body.
    """
    specs: List[Tuple[str, Level, Tuple[int, ...]]] = [
        ("upper_body", Level.HIGH, _joints("neck", "r_shoulder", "l_shoulder", "r_hip", "l_hip")),
        ("lower_body", Level.HIGH, _joints("r_hip", "l_hip", "r_knee", "l_knee", "r_ankle", "l_ankle")),
        ("head", Level.MID, _joints("head_top", "neck")),
        ("l_upper_arm", Level.MID, _joints("l_shoulder", "l_elbow")),
        ("l_lower_arm", Level.MID, _joints("l_elbow", "l_wrist")),
        ("r_upper_arm", Level.MID, _joints("r_shoulder", "r_elbow")),
        ("r_lower_arm", Level.MID, _joints("r_elbow", "r_wrist")),
        ("l_upper_leg", Level.MID, _joints("l_hip", "l_knee")),
        ("l_lower_leg", Level.MID, _joints("l_knee", "l_ankle")),
        ("r_upper_leg", Level.MID, _joints("r_hip", "r_knee")),
        ("r_lower_leg", Level.MID, _joints("r_knee", "r_ankle")),
    ]
    specs += [(name, Level.JOINT, (JOINT_INDEX[name],)) for name in JOINT_NAMES]
    boxes = {Level.HIGH: HIGH_BOX, Level.MID: MID_BOX, Level.JOINT: JOINT_BOX}
    parts = tuple(
        PartDef(part_id=i, name=name, level=level, box_size=boxes[level], constituent_joints=joints)
        for i, (name, level, joints) in enumerate(specs)
    )
    ids = {p.name: p.part_id for p in parts}
    links = [
        ("upper_body", "head"),
        ("upper_body", "l_upper_arm"),
        ("upper_body", "r_upper_arm"),
        ("upper_body", "lower_body"),
        ("lower_body", "l_upper_leg"),
        ("lower_body", "r_upper_leg"),
        ("l_upper_arm", "l_lower_arm"),
        ("r_upper_arm", "r_lower_arm"),
        ("l_upper_leg", "l_lower_leg"),
        ("r_upper_leg", "r_lower_leg"),
        ("head", "head_top"),
        ("head", "neck"),
        ("l_upper_arm", "l_shoulder"),
        ("l_upper_arm", "l_elbow"),
        ("l_lower_arm", "l_wrist"),
        ("r_upper_arm", "r_shoulder"),
        ("r_upper_arm", "r_elbow"),
        ("r_lower_arm", "r_wrist"),
        ("l_upper_leg", "l_hip"),
        ("l_upper_leg", "l_knee"),
        ("l_lower_leg", "l_ankle"),
        ("r_upper_leg", "r_hip"),
        ("r_upper_leg", "r_knee"),
        ("r_lower_leg", "r_ankle"),
    ]
    edges = tuple((ids[a], ids[b]) for a, b in links)
    return SkeletonTree(parts=parts, edges=edges, root_id=ids["upper_body"])


class Annotation(BaseModel):
    """
    One annotated person: ``{"image": ..., "joints": [[x, y, visible] x 14], "height_px": h}``.
    """

    model_config = ConfigDict(populate_by_name=True, frozen=True)

    image_id: str = Field(alias="image")
    joints: List[Tuple[float, float, int]]
    height_px: float = Field(gt=0)

    @field_validator("joints")
    @classmethod
    def _check_joints(cls, value: List[Tuple[float, float, int]]) -> List[Tuple[float, float, int]]:
        if len(value) != NUM_JOINTS:
            raise ValueError(f"expected {NUM_JOINTS} joints, got {len(value)}")
        for x, y, vis in value:
            if vis not in (0, 1):
                raise ValueError(f"visibility flag must be 0 or 1, got {vis}")
            if not (np.isfinite(x) and np.isfinite(y)):
                raise ValueError("joint coordinates must be finite")
        return value

    def points(self) -> np.ndarray:
        return np.array([[x, y] for x, y, _ in self.joints], dtype=np.float64)

    def visible(self) -> np.ndarray:
        return np.array([bool(v) for _, _, v in self.joints])

    def scaled(self, factor: float) -> "Annotation":
        joints = [(x * factor, y * factor, v) for x, y, v in self.joints]
        return Annotation(image=self.image_id, joints=joints, height_px=self.height_px * factor)

    def inside(self, width: int, height: int) -> bool:
        pts = self.points()
        return bool(
            np.all(pts[:, 0] >= 0) and np.all(pts[:, 0] <= width - 1)
            and np.all(pts[:, 1] >= 0) and np.all(pts[:, 1] <= height - 1)
        )


def derive_part_instances(
    annotation: Annotation, tree: SkeletonTree
) -> Dict[int, Optional[np.ndarray]]:
    """
    Pixel location of every part: joints map to themselves, compositional parts
    to the centroid of their constituent joints. Parts with an invisible
    constituent are ``None`` (absent for that image).
    """
    pts = annotation.points()
    vis = annotation.visible()
    out: Dict[int, Optional[np.ndarray]] = {}
    for part in tree.parts:
        idx = list(part.constituent_joints)
        if not vis[idx].all():
            out[part.part_id] = None
            continue
        out[part.part_id] = pts[idx].mean(axis=0)
    return out
