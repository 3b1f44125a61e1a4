"""
Visual symbol discovery: latent-SVM subcategories within each geometric type,
refined by alternating-halves cross validation that prunes weak classifiers.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .errors import DegenerateSymbolSetError, InsufficientSamplesError
from .fileio import PathLike, atomic_write_csv, atomic_write_text
from .kmeans import kmeans
from .svm import LinearSVM, train_linear_svm
from .workers import map_jobs

log = logging.getLogger(__name__)

MAX_LSVM_ROUNDS = 20
DETECTION_MARGIN = -1.0


@dataclass(frozen=True)
class LatentCategorization:
    """
    K linear classifiers over positives of one geometric type. ``labels`` are
    0-based positions into ``filters``; ``category_ids`` keep each classifier's
    identity across warm-started runs.
    """

    filters: np.ndarray
    biases: np.ndarray
    labels: np.ndarray
    C: float
    objective_trace: Tuple[float, ...]
    category_ids: Tuple[int, ...]

    @property
    def K(self) -> int:
        return int(self.filters.shape[0])

    def scores(self, X: np.ndarray) -> np.ndarray:
        return np.asarray(X, dtype=np.float64) @ self.filters.T + self.biases


@dataclass(frozen=True)
class PartSamples:
    """
    Patch features of one part: positives of a geometric type and the part's
    shared negative set.
    """

    positives: np.ndarray
    negatives: np.ndarray


@dataclass(frozen=True)
class Symbol:
    geometric_type: int
    visual_category: int
    filter: np.ndarray
    bias: float
    survived: bool
    detections: int


@dataclass
class SymbolSet:
    part_id: int
    symbols: List[Symbol] = field(default_factory=list)
    k_trace: List[int] = field(default_factory=list)
    round_objectives: List[float] = field(default_factory=list)

    @property
    def survivors(self) -> List[Symbol]:
        return [s for s in self.symbols if s.survived]

    def merged(self, other: "SymbolSet") -> "SymbolSet":
        return SymbolSet(
            part_id=self.part_id,
            symbols=self.symbols + other.symbols,
            k_trace=self.k_trace + other.k_trace,
            round_objectives=self.round_objectives + other.round_objectives,
        )


def _hinge(margins: np.ndarray) -> float:
    return float(np.maximum(0.0, 1.0 - margins).sum())


def hinge_weight(C: float, n_instances: int) -> float:
    """
    Solver C for the instance-normalized objective C/2 |w|^2 + 1/N sum hinge,
    i.e. the same minimizer as 1/2 |w|^2 + 1/(C N) sum hinge.
    """
    if C <= 0:
        raise ValueError(f"C must be > 0, got {C}")
    return 1.0 / (C * n_instances)


def _category_objective(
    w: np.ndarray, b: float, pos: np.ndarray, neg: np.ndarray, C: float, n_instances: int
) -> float:
    reg = 0.5 * C * (float(w @ w) + b * b)
    pos_loss = _hinge(pos @ w + b) if pos.size else 0.0
    return reg + (pos_loss + _hinge(-(neg @ w + b))) / n_instances


def latent_objective(
    filters: np.ndarray, biases: np.ndarray, labels: np.ndarray, pos: np.ndarray, neg: np.ndarray, C: float
) -> float:
    """
    Latent-SVM objective normalized over the N = |pos| + |neg| instances: every
    classifier against all negatives, each positive against the classifier it
    is labelled with.
    """
    n = pos.shape[0] + neg.shape[0]
    return sum(
        _category_objective(filters[k], float(biases[k]), pos[labels == k], neg, C, n)
        for k in range(filters.shape[0])
    )


def _relabel(filters: np.ndarray, biases: np.ndarray, pos: np.ndarray) -> np.ndarray:
    return np.argmax(pos @ filters.T + biases, axis=1)


def _alternate(
    pos: np.ndarray,
    neg: np.ndarray,
    labels: np.ndarray,
    ids: List[int],
    C: float,
    seed: int,
    filters: Optional[np.ndarray],
    biases: Optional[np.ndarray],
    tol: float,
    max_epochs: int,
    threads: int,
) -> LatentCategorization:
    trace: List[float] = []
    y_neg = -np.ones(neg.shape[0])
    n = pos.shape[0] + neg.shape[0]
    svm_c = hinge_weight(C, n)
    for rnd in range(MAX_LSVM_ROUNDS):
        keep = [k for k in range(len(ids)) if np.any(labels == k)]
        if len(keep) < len(ids):
            dropped = [ids[k] for k in range(len(ids)) if k not in keep]
            log.debug("categories %s lost all positives", dropped)
            remap = {old: new for new, old in enumerate(keep)}
            labels = np.array([remap[int(l)] for l in labels], dtype=np.int64)
            ids = [ids[k] for k in keep]
            if filters is not None:
                filters, biases = filters[keep], biases[keep]

        def fit(k: int) -> LinearSVM:
            members = pos[labels == k]
            X = np.vstack([members, neg])
            y = np.concatenate([np.ones(members.shape[0]), y_neg])
            return train_linear_svm(X, y, svm_c, tol=tol, max_epochs=max_epochs, seed=seed + 7919 * rnd + k)

        fitted = map_jobs(fit, list(range(len(ids))), threads)

        new_filters = np.vstack([f.weights for f in fitted])
        new_biases = np.array([f.bias for f in fitted])
        if filters is not None:
            for k in range(len(ids)):
                members = pos[labels == k]
                old = _category_objective(filters[k], float(biases[k]), members, neg, C, n)
                new = _category_objective(new_filters[k], float(new_biases[k]), members, neg, C, n)
                if new > old:
                    new_filters[k], new_biases[k] = filters[k], biases[k]
        filters, biases = new_filters, new_biases

        new_labels = _relabel(filters, biases, pos)
        trace.append(latent_objective(filters, biases, new_labels, pos, neg, C))
        stable = np.array_equal(new_labels, labels)
        labels = new_labels
        if stable:
            break

    keep = [k for k in range(len(ids)) if np.any(labels == k)]
    if len(keep) < len(ids):
        remap = {old: new for new, old in enumerate(keep)}
        labels = np.array([remap[int(l)] for l in labels], dtype=np.int64)
        ids = [ids[k] for k in keep]
        filters, biases = filters[keep], biases[keep]
    return LatentCategorization(
        filters=filters,
        biases=biases,
        labels=labels,
        C=C,
        objective_trace=tuple(trace),
        category_ids=tuple(ids),
    )


def lsvm_categorize(
    pos: np.ndarray,
    neg: np.ndarray,
    K: int,
    C: float,
    seed: int,
    tol: float = 1e-3,
    max_epochs: int = 1000,
    threads: int = 1,
) -> LatentCategorization:
    """
    Learn K appearance subcategories of ``pos`` against ``neg``: k-means initial
    labels, then alternate per-category SVM training and argmax relabeling until
    the labels are stable (at most 20 rounds).
    """
    pos = np.asarray(pos, dtype=np.float64)
    neg = np.asarray(neg, dtype=np.float64)
    if K < 1:
        raise ValueError(f"K must be >= 1, got {K}")
    if pos.shape[0] < K:
        raise InsufficientSamplesError(f"insufficient samples: {pos.shape[0]} positives for K={K}")
    if neg.shape[0] < 1:
        raise InsufficientSamplesError("insufficient samples: no negatives")
    if K == 1:
        labels = np.zeros(pos.shape[0], dtype=np.int64)
    else:
        _, labels, _ = kmeans(pos, K, seed)
    return _alternate(pos, neg, labels, list(range(K)), C, seed, None, None, tol, max_epochs, threads)


def count_detections(filters: np.ndarray, biases: np.ndarray, X: np.ndarray) -> np.ndarray:
    """
    Held-out detections per classifier: a sample counts for classifier k when k
    is its argmax and the score clears the negative margin (-1).
    """
    if X.shape[0] == 0 or filters.shape[0] == 0:
        return np.zeros(filters.shape[0], dtype=np.int64)
    scores = X @ filters.T + biases
    best = np.argmax(scores, axis=1)
    hit = scores[np.arange(X.shape[0]), best] > DETECTION_MARGIN
    return np.bincount(best[hit], minlength=filters.shape[0])


def surviving_mask(counts: np.ndarray, n_holdout: int, prune_fraction: float) -> np.ndarray:
    """
    Keep classifiers detecting at least ``prune_fraction`` of a uniform share of
    the held-out half.
    """
    if counts.size == 0:
        return np.zeros(0, dtype=bool)
    threshold = prune_fraction * (n_holdout / counts.size)
    return counts >= threshold


def cross_validate(
    instances: PartSamples,
    K_in: int,
    rounds: int,
    prune_fraction: float,
    C: float = 0.002,
    seed: int = 0,
    part_id: int = -1,
    geometric_type: int = 0,
    tol: float = 1e-3,
    max_epochs: int = 1000,
    threads: int = 1,
) -> SymbolSet:
    """
    Split positives into halves H1/H2, train on H1, count detections on H2,
    drop classifiers below the pruning threshold, swap halves; repeat ``rounds``
    times. Later rounds warm-start from the surviving classifiers, so a removed
    classifier never comes back.
    """
    pos = np.asarray(instances.positives, dtype=np.float64)
    neg = np.asarray(instances.negatives, dtype=np.float64)
    n = pos.shape[0]
    if rounds < 1:
        raise ValueError(f"rounds must be >= 1, got {rounds}")
    if n < 2 * K_in:
        raise InsufficientSamplesError(f"insufficient samples: {n} positives for K_in={K_in}")

    rng = np.random.default_rng(seed)
    perm = rng.permutation(n)
    halves = [perm[: n // 2], perm[n // 2 :]]

    removed: Dict[int, Tuple[np.ndarray, float, int]] = {}
    cat: Optional[LatentCategorization] = None
    last_counts = np.zeros(0, dtype=np.int64)
    k_trace: List[int] = []
    objectives: List[float] = []
    for rnd in range(rounds):
        train_idx, hold_idx = halves[rnd % 2], halves[(rnd + 1) % 2]
        h1 = pos[train_idx]
        if cat is None:
            before = set(range(K_in))
            cat = lsvm_categorize(h1, neg, K_in, C, seed, tol=tol, max_epochs=max_epochs, threads=threads)
        else:
            labels = _relabel(cat.filters, cat.biases, h1)
            before = set(cat.category_ids)
            cat = _alternate(
                h1, neg, labels, list(cat.category_ids), C, seed + rnd, cat.filters, cat.biases,
                tol, max_epochs, threads,
            )
        # categories that lost every positive
        for cid in before - set(cat.category_ids):
            removed.setdefault(cid, (np.zeros(pos.shape[1]), 0.0, 0))
        counts = count_detections(cat.filters, cat.biases, pos[hold_idx])
        keep = surviving_mask(counts, len(hold_idx), prune_fraction)
        for pos_k in np.flatnonzero(~keep):
            cid = cat.category_ids[pos_k]
            removed[cid] = (cat.filters[pos_k].copy(), float(cat.biases[pos_k]), int(counts[pos_k]))
        if not keep.any():
            raise DegenerateSymbolSetError(
                f"degenerate symbol set: all classifiers pruned for part {part_id} type {geometric_type}"
            )
        cat = LatentCategorization(
            filters=cat.filters[keep],
            biases=cat.biases[keep],
            labels=cat.labels,
            C=C,
            objective_trace=cat.objective_trace,
            category_ids=tuple(c for c, k in zip(cat.category_ids, keep) if k),
        )
        last_counts = counts[keep]
        k_trace.append(cat.K)
        objectives.append(cat.objective_trace[-1] if cat.objective_trace else float("nan"))
        log.debug(
            "part %s type %s round %d: K=%d detections=%s",
            part_id, geometric_type, rnd + 1, cat.K, counts.tolist(),
        )

    symbols = [
        Symbol(geometric_type, cid, cat.filters[i].copy(), float(cat.biases[i]), True, int(last_counts[i]))
        for i, cid in enumerate(cat.category_ids)
    ]
    symbols += [
        Symbol(geometric_type, cid, w, b, False, cnt) for cid, (w, b, cnt) in sorted(removed.items())
    ]
    symbols.sort(key=lambda s: s.visual_category)
    return SymbolSet(part_id=part_id, symbols=symbols, k_trace=k_trace, round_objectives=objectives)


def write_symbol_report(
    symbol_sets: Sequence[SymbolSet],
    part_names: Dict[int, str],
    out_dir: PathLike,
    notes: Sequence[str] = (),
) -> Tuple[Path, Path]:
    """
    Plain-text summary plus CSV of per-round K/objective and per-symbol survival.
    """
    out_dir = Path(out_dir)
    rows = []
    lines = []
    for ss in symbol_sets:
        name = part_names.get(ss.part_id, str(ss.part_id))
        survivors = ss.survivors
        lines.append(f"{name}: {len(survivors)} of {len(ss.symbols)} symbols survived")
        for s in ss.symbols:
            state = "kept" if s.survived else "pruned"
            lines.append(
                f"  type {s.geometric_type} category {s.visual_category}: {state}, {s.detections} detections"
            )
        for rnd, (k, obj) in enumerate(zip(ss.k_trace, ss.round_objectives), start=1):
            rows.append([ss.part_id, name, "round", rnd, k, f"{obj:.6g}", "", "", ""])
        for s in ss.symbols:
            rows.append(
                [ss.part_id, name, "symbol", "", "", "", s.geometric_type, s.visual_category, int(s.survived)]
            )
    text_path = out_dir / "symbols_report.txt"
    csv_path = out_dir / "symbols_report.csv"
    if notes:
        lines += ["", "warnings:"] + [f"  {n}" for n in notes]
    atomic_write_text(text_path, "\n".join(lines) + "\n")
    atomic_write_csv(
        csv_path,
        ["part_id", "part", "kind", "round", "k", "objective", "geometric_type", "visual_category", "survived"],
        rows,
    )
    return text_path, csv_path
