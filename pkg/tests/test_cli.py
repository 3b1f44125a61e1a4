import json
import struct

import pytest

from conftest import toy_params
from symparse.cli import main
from symparse.dataset import load_dataset
from symparse.evaluation import annotation_points
from symparse.features import FEATURE_DIM
from symparse.persistence import MAGIC, save_model


def _last_json(text):
    return json.loads(text.strip().splitlines()[-1])


@pytest.fixture
def synth_set(tmp_path, capsys):
    assert main(["synth", "--out", str(tmp_path / "data"), "--n", "3", "--negatives", "1", "--seed", "2"]) == 0
    out = _last_json(capsys.readouterr().out)
    return tmp_path / "data" / "manifest.jsonl", out


def test_synth_command(synth_set):
    manifest, summary = synth_set
    assert summary == {"manifest": str(manifest), "figures": 3, "negatives": 1}
    assert len(manifest.read_text().splitlines()) == 4


def test_eval_of_ground_truth_is_perfect(tmp_path, synth_set, capsys):
    manifest, _ = synth_set
    data = load_dataset(manifest)
    pred = tmp_path / "pred.jsonl"
    with open(pred, "w") as fh:
        for entry in data.positives:
            parts = {name: {"location": list(p)} for name, p in annotation_points(entry.annotation).items()}
            fh.write(json.dumps({"image_id": entry.image_id, "parts": parts, "total_score": 0.0}) + "\n")
    out = tmp_path / "pcp.csv"
    rc = main(["eval", "--pred", str(pred), "--truth", str(manifest), "--out", str(out), "--split", "all"])
    assert rc == 0
    table = capsys.readouterr().out
    assert "100.0" in table and "Total" in table
    assert out.exists() and out.with_suffix(".txt").exists()


def test_symbols_command(tmp_path, tree, rng, capsys):
    params = toy_params(tree, rng, {pid: 1 for pid in tree.part_ids}, feature_dim=FEATURE_DIM)
    model = tmp_path / "model.bin"
    save_model(params, model)
    assert main(["symbols", "--model", str(model), "--out", str(tmp_path / "glyphs")]) == 0
    assert capsys.readouterr().out.startswith("parts: 25")
    assert (tmp_path / "glyphs" / "glyph_head.pgm").exists()


def test_model_version_mismatch_is_reported(tmp_path, capsys):
    model = tmp_path / "old.bin"
    model.write_bytes(MAGIC + struct.pack("<I", 99) + b"\x00" * 16)
    assert main(["symbols", "--model", str(model)]) == 2
    err = capsys.readouterr().err
    assert err.strip().splitlines()[-1].startswith("error model_version_mismatch: model version mismatch")


def test_missing_manifest_is_a_dataset_error(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "none.jsonl"), "--out", str(tmp_path / "m.bin")])
    assert rc == 2
    assert "error dataset:" in capsys.readouterr().err


def test_invalid_setting_is_a_config_error(tmp_path, capsys):
    rc = main(["train", "--data", str(tmp_path / "d.jsonl"), "--out", str(tmp_path / "m.bin"), "--prune", "-1"])
    assert rc == 2
    assert "error config: prune" in capsys.readouterr().err


def test_parse_needs_exactly_one_input(tmp_path, capsys):
    rc = main(["parse", "--model", str(tmp_path / "m.bin"), "--out", str(tmp_path / "p.jsonl")])
    assert rc == 2
    assert "exactly one of --images or --data" in capsys.readouterr().err
