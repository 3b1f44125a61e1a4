import numpy as np
import pytest
from pydantic import ValidationError

from conftest import make_annotation
from symparse.errors import TreeError
from symparse.skeleton import (
    JOINT_INDEX,
    NUM_JOINTS,
    Level,
    PartDef,
    SkeletonTree,
    derive_part_instances,
)


def test_default_tree_shape(tree):
    assert len(tree.parts) == 25
    assert len(tree.edges) == 24
    levels = [p.level for p in tree.parts]
    assert levels.count(Level.HIGH) == 2
    assert levels.count(Level.MID) == 9
    assert levels.count(Level.JOINT) == NUM_JOINTS
    assert tree.part(tree.root_id).name == "upper_body"
    assert tree.parent(tree.root_id) is None


def test_every_joint_hangs_under_a_part_that_contains_it(tree):
    for part in tree.parts:
        if part.level is not Level.JOINT:
            continue
        parent = tree.part(tree.parent(part.part_id))
        assert part.constituent_joints[0] in parent.constituent_joints


def test_orders_visit_parents_and_children_consistently(tree):
    pre = tree.preorder()
    post = tree.postorder()
    assert sorted(pre) == tree.part_ids
    assert pre[0] == tree.root_id and post[-1] == tree.root_id
    pos = {pid: i for i, pid in enumerate(post)}
    for p, c in tree.edges:
        assert pos[c] < pos[p]


def test_joint_parts_cover_all_joints(tree):
    mapping = tree.joint_parts()
    assert sorted(mapping) == list(range(NUM_JOINTS))
    assert tree.part(mapping[JOINT_INDEX["neck"]]).name == "neck"


def _part(i, level=Level.MID, joints=(0,)):
    return PartDef(part_id=i, name=f"p{i}", level=level, box_size=(1, 1), constituent_joints=joints)


def test_tree_rejects_cycles_and_orphans():
    parts = (_part(0), _part(1), _part(2))
    with pytest.raises(TreeError):
        SkeletonTree(parts=parts, edges=((0, 1), (1, 2), (2, 1)), root_id=0)
    with pytest.raises(TreeError):
        SkeletonTree(parts=parts, edges=((0, 1), (2, 1)), root_id=0)
    with pytest.raises(TreeError):
        SkeletonTree(parts=parts, edges=((0, 1),), root_id=0)


def test_tree_rejects_bad_parts():
    with pytest.raises(TreeError):
        SkeletonTree(parts=(_part(0), _part(0)), edges=((0, 0),), root_id=0)
    with pytest.raises(TreeError):
        SkeletonTree(parts=(_part(0), _part(1, Level.JOINT, (0, 1))), edges=((0, 1),), root_id=0)
    with pytest.raises(TreeError):
        SkeletonTree(parts=(_part(0),), edges=(), root_id=5)


def test_derive_part_instances_centroids(tree):
    ann = make_annotation()
    pts = ann.points()
    out = derive_part_instances(ann, tree)
    head = tree.part_by_name("head")
    expected = pts[[JOINT_INDEX["head_top"], JOINT_INDEX["neck"]]].mean(axis=0)
    np.testing.assert_allclose(out[head.part_id], expected)
    wrist = tree.part_by_name("l_wrist")
    np.testing.assert_allclose(out[wrist.part_id], pts[JOINT_INDEX["l_wrist"]])


def test_invisible_joint_makes_parts_absent(tree):
    vis = [1] * NUM_JOINTS
    vis[JOINT_INDEX["l_elbow"]] = 0
    out = derive_part_instances(make_annotation(visible=vis), tree)
    absent = {tree.part(pid).name for pid, loc in out.items() if loc is None}
    assert absent == {"l_elbow", "l_upper_arm", "l_lower_arm"}


def test_annotation_validation():
    with pytest.raises(ValidationError):
        make_annotation(points=np.zeros((NUM_JOINTS - 1, 2)), visible=[1] * (NUM_JOINTS - 1))
    with pytest.raises(ValidationError):
        make_annotation(visible=[2] + [1] * (NUM_JOINTS - 1))
    with pytest.raises(ValidationError):
        make_annotation(height=0.0)
    pts = np.zeros((NUM_JOINTS, 2))
    pts[3, 0] = np.nan
    with pytest.raises(ValidationError):
        make_annotation(points=pts)


def test_annotation_bounds():
    ann = make_annotation()
    assert ann.inside(100, 100)
    assert not ann.inside(30, 100)
