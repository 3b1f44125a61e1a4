import csv

import numpy as np
import pytest

from symparse.errors import DegenerateSymbolSetError, InsufficientSamplesError
from symparse.svm import train_linear_svm
from symparse.symbols import (
    PartSamples,
    SymbolSet,
    count_detections,
    cross_validate,
    hinge_weight,
    latent_objective,
    lsvm_categorize,
    surviving_mask,
    write_symbol_report,
)


def _cloud(rng, center, n, spread=0.3):
    return rng.normal(center, spread, size=(n, len(center)))


def _two_mode_split(rng, seed, n=24, n_rare=4):
    """
    Positives where the rare mode only lands in the first training half of
    ``cross_validate``'s permutation for ``seed``.
    """
    perm = np.random.default_rng(seed).permutation(n)
    pos = _cloud(rng, (6.0, 0.0), n)
    pos[perm[:n_rare]] = _cloud(rng, (0.0, 6.0), n_rare)
    neg = _cloud(rng, (0.0, 0.0), 20)
    return pos, neg


def test_single_category_is_a_plain_svm(rng):
    pos = _cloud(rng, (2.0, 1.0, 0.0), 15)
    neg = _cloud(rng, (-1.0, 0.0, 0.5), 20)
    cat = lsvm_categorize(pos, neg, K=1, C=0.5, seed=9)
    X = np.vstack([pos, neg])
    y = np.concatenate([np.ones(15), -np.ones(20)])
    svm = train_linear_svm(X, y, hinge_weight(0.5, 35), seed=9)
    assert cat.K == 1
    np.testing.assert_allclose(cat.filters[0], svm.weights, rtol=1e-4, atol=1e-12)
    assert cat.biases[0] == pytest.approx(svm.bias, rel=1e-4)
    assert np.all(cat.labels == 0)


def test_two_separable_modes_are_recovered(rng):
    pos = np.vstack([_cloud(rng, (5.0, 0.0), 12), _cloud(rng, (-5.0, 0.0), 12)])
    truth = np.repeat([0, 1], 12)
    neg = _cloud(rng, (0.0, 0.0), 20)
    cat = lsvm_categorize(pos, neg, K=2, C=1.0 / 44, seed=3)
    assert cat.K == 2
    for k in range(2):
        members = truth[cat.labels == k]
        assert members.size == 12 and np.all(members == members[0])


def test_objective_trace_never_increases():
    for trial in range(50):
        rng = np.random.default_rng(trial)
        pos = rng.normal(0.5, 1.0, size=(int(rng.integers(8, 20)), 3))
        neg = rng.normal(-0.5, 1.0, size=(12, 3))
        K = int(rng.integers(1, 4))
        cat = lsvm_categorize(pos, neg, K=K, C=0.2, seed=trial, max_epochs=200)
        trace = cat.objective_trace
        assert all(b <= a + 1e-9 * max(1.0, abs(a)) for a, b in zip(trace, trace[1:]))
        # dropping emptied categories at the end can only lower it
        final = latent_objective(cat.filters, cat.biases, cat.labels, pos, neg, 0.2)
        assert final <= trace[-1] + 1e-9 * abs(trace[-1])


def test_categorize_needs_samples(rng):
    with pytest.raises(InsufficientSamplesError):
        lsvm_categorize(np.zeros((2, 2)), np.zeros((3, 2)), K=3, C=1.0, seed=0)
    with pytest.raises(InsufficientSamplesError):
        lsvm_categorize(np.ones((4, 2)), np.zeros((0, 2)), K=1, C=1.0, seed=0)
    with pytest.raises(ValueError):
        lsvm_categorize(np.ones((4, 2)), np.zeros((3, 2)), K=0, C=1.0, seed=0)
    with pytest.raises(ValueError, match="C must be"):
        lsvm_categorize(np.ones((4, 2)), np.zeros((3, 2)), K=1, C=0.0, seed=0)


def test_hinge_weight_normalizes_by_instances():
    assert hinge_weight(0.002, 250) == pytest.approx(2.0)
    assert hinge_weight(0.5, 35) == pytest.approx(1.0 / 17.5)


def test_count_detections_uses_argmax_and_margin():
    filters = np.array([[1.0, 0.0], [0.0, 1.0]])
    biases = np.zeros(2)
    X = np.array([[2.0, 0.0], [0.0, 3.0], [-5.0, -5.0], [0.5, 0.2]])
    counts = count_detections(filters, biases, X)
    assert counts.tolist() == [2, 1]
    assert count_detections(filters, biases, np.zeros((0, 2))).tolist() == [0, 0]


def test_surviving_mask_threshold():
    counts = np.array([2, 1])
    assert surviving_mask(counts, 6, 0.8).tolist() == [False, False]
    assert surviving_mask(counts, 6, 0.5).tolist() == [True, False]
    assert surviving_mask(counts, 6, 0.0).tolist() == [True, True]
    assert surviving_mask(np.zeros(0, dtype=np.int64), 6, 0.5).size == 0


def test_classifier_without_held_out_detections_is_pruned(rng):
    pos, neg = _two_mode_split(rng, seed=5)
    result = cross_validate(
        PartSamples(pos, neg), K_in=2, rounds=1, prune_fraction=0.5, C=1.0 / 32, seed=5, part_id=7
    )
    assert result.part_id == 7
    assert result.k_trace == [1]
    assert len(result.symbols) == 2
    assert len(result.survivors) == 1
    pruned = next(s for s in result.symbols if not s.survived)
    assert pruned.detections == 0
    # the surviving classifier is the one for the common mode
    kept = result.survivors[0]
    assert float(kept.filter @ np.array([6.0, 0.0]) + kept.bias) > 0


def test_zero_pruning_keeps_every_classifier(rng):
    pos, neg = _two_mode_split(rng, seed=5)
    result = cross_validate(PartSamples(pos, neg), K_in=2, rounds=1, prune_fraction=0.0, C=1.0 / 32, seed=5)
    assert result.k_trace == [2]
    assert all(s.survived for s in result.symbols)


def _mode_templates(rng, n_per_mode=40, n_modes=3, block=12, n_neg=60):
    """
    Non-negative patch-like features: mode m lights up its own block of cells,
    negatives are weak clutter over every cell.
    """
    dim = n_modes * block
    pos, truth = [], []
    for m in range(n_modes):
        template = np.zeros(dim)
        template[m * block : (m + 1) * block] = 0.8
        pos.append(template + np.abs(rng.normal(0.0, 0.05, size=(n_per_mode, dim))))
        truth.append(np.full(n_per_mode, m))
    neg = rng.uniform(0.0, 0.25, size=(n_neg, dim))
    return np.vstack(pos), np.concatenate(truth), neg


def test_three_appearance_modes_keep_one_symbol_each(rng):
    pos, truth, neg = _mode_templates(rng)
    result = cross_validate(PartSamples(pos, neg), K_in=6, rounds=3, prune_fraction=0.3, C=0.01, seed=2)
    assert all(b <= a for a, b in zip(result.k_trace, result.k_trace[1:]))
    assert 3 <= len(result.survivors) <= 6
    assert [s.visual_category for s in result.symbols] == list(range(6))
    assert len(result.round_objectives) == 3

    filters = np.vstack([s.filter for s in result.survivors])
    biases = np.array([s.bias for s in result.survivors])
    scores = pos @ filters.T + biases
    best = np.argmax(scores, axis=1)
    detected = scores.max(axis=1) > -1.0
    assert detected.all()
    dominant = {}
    for k in range(filters.shape[0]):
        modes = truth[best == k]
        if modes.size:
            counts = np.bincount(modes, minlength=3)
            assert counts.max() > 0.5 * modes.size
            dominant[k] = int(np.argmax(counts))
    assert set(dominant.values()) == {0, 1, 2}


def test_cross_validate_is_deterministic(rng):
    pos = _cloud(rng, (3.0, 3.0), 30, spread=1.5)
    neg = _cloud(rng, (-2.0, -2.0), 20)
    a = cross_validate(PartSamples(pos, neg), K_in=3, rounds=2, prune_fraction=0.2, C=0.05, seed=4)
    b = cross_validate(PartSamples(pos, neg), K_in=3, rounds=2, prune_fraction=0.2, C=0.05, seed=4)
    assert a.k_trace == b.k_trace
    for x, y in zip(a.symbols, b.symbols):
        np.testing.assert_array_equal(x.filter, y.filter)
        assert (x.visual_category, x.survived) == (y.visual_category, y.survived)


def test_everything_pruned_is_degenerate(rng):
    # held-out positives sit on the far side of the negatives
    n = 20
    perm = np.random.default_rng(1).permutation(n)
    pos = np.empty((n, 2))
    pos[perm[: n // 2]] = _cloud(rng, (6.0, 0.0), n // 2)
    pos[perm[n // 2 :]] = _cloud(rng, (-6.0, 0.0), n // 2)
    neg = _cloud(rng, (0.0, 0.0), 20)
    with pytest.raises(DegenerateSymbolSetError):
        cross_validate(PartSamples(pos, neg), K_in=1, rounds=1, prune_fraction=0.5, C=1.0 / 30, seed=1)


def test_cross_validate_needs_two_samples_per_classifier(rng):
    with pytest.raises(InsufficientSamplesError):
        cross_validate(PartSamples(np.ones((5, 2)), np.zeros((4, 2))), K_in=3, rounds=1, prune_fraction=0.5)


def test_report_lists_rounds_symbols_and_warnings(tmp_path, rng):
    pos, neg = _two_mode_split(rng, seed=5)
    ss = cross_validate(
        PartSamples(pos, neg), K_in=2, rounds=1, prune_fraction=0.5, C=1.0 / 32, seed=5, part_id=2
    )
    empty = SymbolSet(part_id=3)
    text_path, csv_path = write_symbol_report(
        [ss, empty], {2: "head"}, tmp_path, notes=["head type 1: K lowered to 1"]
    )
    text = text_path.read_text()
    assert "head: 1 of 2 symbols survived" in text
    assert "pruned, 0 detections" in text
    assert "3: 0 of 0 symbols survived" in text
    assert text.rstrip().endswith("head type 1: K lowered to 1")
    with open(csv_path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert [r["kind"] for r in rows] == ["round", "symbol", "symbol"]
    assert rows[0]["k"] == "1"
    assert sorted(r["survived"] for r in rows[1:]) == ["0", "1"]
