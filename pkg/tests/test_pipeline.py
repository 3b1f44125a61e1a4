import numpy as np
import pytest

from symparse.dataset import load_dataset
from symparse.errors import InsufficientSamplesError
from symparse.evaluation import evaluate, prediction_points
from symparse.features import FeatureMap, crop_patch_feature, extract_features
from symparse.pipeline import (
    clamp_types,
    parse_entries,
    sample_negative_patches,
    to_cell,
    train_pipeline,
    write_reports,
)
from symparse.settings import Settings
from symparse.skeleton import PartDef, SkeletonTree, default_tree, derive_part_instances
from symparse.symbols import PartSamples, cross_validate
from symparse.synth import SynthConfig, generate_negatives, generate_synthetic, write_synthetic


def _head_tree() -> SkeletonTree:
    full = default_tree()
    names = ("head", "head_top", "neck")
    parts = tuple(
        PartDef(i, p.name, p.level, p.box_size, p.constituent_joints)
        for i, p in enumerate(full.part_by_name(n) for n in names)
    )
    return SkeletonTree(parts=parts, edges=((0, 1), (0, 2)), root_id=0)


def _quick_settings(**kw) -> Settings:
    base = dict(
        k_large=2, k_small=2, sym_large=1, sym_small=1, cv_rounds=2, prune=0.0,
        epochs=2, negatives_per_part=30, svm_max_epochs=200,
    )
    base.update(kw)
    return Settings(**base)


def test_to_cell_floors_and_clips():
    fmap = FeatureMap(np.zeros((5, 6, 1)), cell_size=4)
    assert to_cell((7.9, 8.0), fmap) == (1, 2)
    assert to_cell((-3.0, 100.0), fmap) == (0, 4)


def test_clamp_types():
    assert clamp_types(100, 8, 2) == 8
    assert clamp_types(10, 8, 2) == 2
    assert clamp_types(1, 8, 4) == 1


def test_negative_patches_are_reproducible():
    maps = [FeatureMap(np.random.default_rng(i).normal(size=(6, 6, 2)), cell_size=4) for i in range(2)]
    a = sample_negative_patches(maps, (3, 2), 7, np.random.default_rng(0))
    b = sample_negative_patches(maps, (3, 2), 7, np.random.default_rng(0))
    assert a.shape == (7, 12)
    np.testing.assert_array_equal(a, b)


def test_small_tree_trains_and_parses(tmp_path):
    manifest = write_synthetic(tmp_path / "data", SynthConfig(seed=4), n=8, n_negatives=3)
    data = load_dataset(manifest)
    train_entries = [e for e in data.split("train") if not e.negative]
    result = train_pipeline(train_entries, data.negatives, _quick_settings(), tree=_head_tree())
    params = result.params
    assert [p.name for p in params.tree.parts] == ["head", "head_top", "neck"]
    assert all(params.n_symbols(pid) >= 1 for pid in params.tree.part_ids)
    assert result.training.reports
    for pid in (1, 2):
        assert 1 <= len({s.geometric_type for s in params.symbols[pid]}) <= 2

    paths = write_reports(result, tmp_path / "reports")
    assert [p.name for p in paths] == ["symbols_report.txt", "symbols_report.csv", "training_report.csv", "context.csv"]
    assert all(p.exists() for p in paths)

    test_entries = [e for e in data.split("test") if not e.negative]
    records = parse_entries(test_entries, params)
    assert [r["image_id"] for r in records] == [e.image_id for e in test_entries]
    for record in records:
        assert set(record["parts"]) == {"head", "head_top", "neck"}
        assert record["seconds"] >= 0
        x, y = record["parts"]["neck"]["location"]
        assert 0 <= x < 176 and 0 <= y < 200


def test_pipeline_without_negatives_fails(tmp_path):
    manifest = write_synthetic(tmp_path / "data", SynthConfig(seed=4), n=2)
    data = load_dataset(manifest)
    with pytest.raises(InsufficientSamplesError, match="no negative"):
        train_pipeline(data.positives, [], _quick_settings(), tree=_head_tree())


def test_default_symbol_settings_keep_root_symbols():
    settings = Settings()
    config = SynthConfig(seed=7)
    tree = default_tree()
    root = tree.part(tree.root_id)
    rows = []
    for sample in generate_synthetic(config, 20):
        fmap = extract_features(sample.image, settings.cell_size)
        pixel = derive_part_instances(sample.annotation, tree)[root.part_id]
        rows.append(crop_patch_feature(fmap, to_cell(pixel, fmap), root.box_size))
    negatives = [extract_features(im, settings.cell_size) for im in generate_negatives(config, 10)]
    neg = sample_negative_patches(
        negatives, root.box_size, settings.negatives_per_part, np.random.default_rng([settings.seed, root.part_id])
    )
    result = cross_validate(
        PartSamples(np.vstack(rows), neg),
        settings.sym_large,
        settings.cv_rounds,
        settings.prune,
        C=settings.lsvm_c,
        seed=settings.seed,
        part_id=root.part_id,
    )
    assert len(result.k_trace) == settings.cv_rounds
    assert 1 <= len(result.survivors) <= settings.sym_large
    assert all(s.detections > 0 for s in result.survivors)


@pytest.mark.slow
def test_full_tree_end_to_end(tmp_path):
    manifest = write_synthetic(tmp_path / "data", SynthConfig(seed=7), n=40, n_negatives=20, threads=2)
    data = load_dataset(manifest)
    result = train_pipeline(
        [e for e in data.split("train") if not e.negative], data.negatives, Settings(threads=2)
    )
    assert len(result.params.tree.parts) == 25
    test_entries = [e for e in data.split("test") if not e.negative]
    records = parse_entries(test_entries, result.params, threads=2)
    report = evaluate({r["image_id"]: prediction_points(r) for r in records}, data.annotations("test"))
    assert sum(report.total.values()) == 10 * len(test_entries) == 200
    assert report.total_percentage >= 90.0
