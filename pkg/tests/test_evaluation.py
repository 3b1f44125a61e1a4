import csv

import numpy as np
import pytest

from conftest import make_annotation
from symparse.evaluation import (
    COLUMNS,
    Segment,
    annotation_points,
    evaluate,
    pcp_correct,
    prediction_points,
    segments_from_points,
)
from symparse.skeleton import JOINT_INDEX


def test_pcp_threshold_is_inclusive():
    truth = Segment("s", (0.0, 0.0), (10.0, 0.0))
    assert pcp_correct(Segment("s", (0.0, 5.0), (10.0, 0.0)), truth)
    assert not pcp_correct(Segment("s", (0.0, 5.01), (10.0, 0.0)), truth)
    assert pcp_correct(Segment("s", (3.0, 0.0), (7.0, 0.0)), truth, fraction=0.3)
    # endpoints are matched in order, so a flipped segment is wrong
    assert not pcp_correct(Segment("s", (10.0, 0.0), (0.0, 0.0)), truth)
    with pytest.raises(ValueError):
        pcp_correct(truth, Segment("z", (1.0, 1.0), (1.0, 1.0)))


def test_small_offsets_on_a_long_segment_still_count():
    truth = Segment("s", (0.0, 0.0), (10.0, 0.0))
    assert pcp_correct(Segment("s", (0.0, 2.0), (10.0, 3.0)), truth)


def test_pcp_ignores_translation_and_scale():
    rng = np.random.default_rng(5)
    for _ in range(1000):
        t = rng.uniform(-50, 50, size=(2, 2))
        p = t + rng.normal(0, 8, size=(2, 2))
        if np.hypot(*(t[1] - t[0])) < 1e-3:
            continue
        shift, scale = rng.uniform(-200, 200, size=2), rng.uniform(0.1, 10.0)
        moved_t, moved_p = (t + shift) * scale, (p + shift) * scale
        expected = pcp_correct(Segment("s", tuple(p[0]), tuple(p[1])), Segment("s", tuple(t[0]), tuple(t[1])))
        got = pcp_correct(
            Segment("s", tuple(moved_p[0]), tuple(moved_p[1])), Segment("s", tuple(moved_t[0]), tuple(moved_t[1]))
        )
        assert got == expected


def test_torso_ends_at_the_hip_midpoint():
    ann = make_annotation()
    segs = segments_from_points(annotation_points(ann))
    pts = ann.points()
    np.testing.assert_allclose(segs["torso"].b, (pts[JOINT_INDEX["l_hip"]] + pts[JOINT_INDEX["r_hip"]]) / 2)
    assert len(segs) == 10


def test_perfect_predictions_score_one_hundred():
    anns = [make_annotation(image=f"{i}.pgm") for i in range(3)]
    preds = {a.image_id: annotation_points(a) for a in anns}
    report = evaluate(preds, anns)
    assert report.total_percentage == 100.0
    assert report.total["U.Arm"] == 6
    assert report.row() == [100.0] * 7


def test_moved_knee_breaks_both_left_leg_segments():
    ann = make_annotation()
    pred = annotation_points(ann)
    x, y = pred["l_knee"]
    pred["l_knee"] = (x + 40.0, y)
    report = evaluate({ann.image_id: pred}, [ann])
    assert report.percentage("Upper Leg") == 50.0
    assert report.percentage("Lower Leg") == 50.0
    assert report.percentage("Torso") == 100.0
    assert report.total_percentage == 80.0


def test_missing_prediction_counts_as_wrong_and_invisible_truth_is_skipped():
    visible = [1] * 14
    visible[JOINT_INDEX["r_wrist"]] = 0
    ann = make_annotation(visible=visible)
    report = evaluate({}, [ann])
    assert sum(report.total.values()) == 9
    assert sum(report.correct.values()) == 0
    assert report.total["L.Arm"] == 1


def test_prediction_points_from_a_parse_record():
    record = {
        "image_id": "a",
        "parts": {
            "neck": {"location": [3, 4]},
            "head": {"location": [9, 9]},
            "l_hip": {"location": [1.5, 2.5]},
        },
    }
    assert prediction_points(record) == {"neck": (3.0, 4.0), "l_hip": (1.5, 2.5)}


def test_report_table_and_csv(tmp_path):
    ann = make_annotation()
    report = evaluate({ann.image_id: annotation_points(ann)}, [ann])
    text = report.table()
    assert all(c in text for c in COLUMNS) and "Total" in text
    assert "100.0" in text
    report.write_csv(tmp_path / "pcp.csv")
    with open(tmp_path / "pcp.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["column"] for r in rows] == [*COLUMNS, "Total"]
    assert rows[-1]["correct"] == "10" and rows[-1]["percentage"] == "100.00"
