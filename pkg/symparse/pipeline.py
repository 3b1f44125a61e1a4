"""
Staged training: part instances -> geometric types -> visual symbols ->
symbol-wise context -> joint learning.
"""

from __future__ import annotations

import logging
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from tqdm import tqdm

from .context import build_compatibility, write_context_csv
from .dataset import DatasetEntry
from .errors import InsufficientSamplesError, TrainingError
from .features import FeatureMap, crop_patch_feature, extract_features
from .fileio import PathLike
from .inference import detect_all, parse_record, timed_parse
from .kmeans import geometric_cluster
from .learning import TrainingExample, TrainingResult, train
from .model import Cell, ModelParams, SymbolId
from .settings import Settings
from .skeleton import PartDef, SkeletonTree, default_tree, derive_part_instances
from .symbols import PartSamples, Symbol, SymbolSet, cross_validate, lsvm_categorize, write_symbol_report
from .workers import map_jobs

log = logging.getLogger(__name__)


@dataclass
class PreparedImage:
    image_id: str
    features: FeatureMap
    pixels: Dict[int, Optional[np.ndarray]]
    cells: Dict[int, Optional[Cell]]


@dataclass
class PartSymbols:
    part_id: int
    symbol_set: SymbolSet
    survivors: List[Symbol]
    # image index -> symbol index into ``survivors``
    assignment: Dict[int, int] = field(default_factory=dict)


@dataclass
class PipelineResult:
    params: ModelParams
    symbol_sets: List[SymbolSet]
    training: TrainingResult
    notes: List[str] = field(default_factory=list)


def to_cell(pixel: Sequence[float], fmap: FeatureMap) -> Cell:
    x = int(np.clip(np.floor(pixel[0] / fmap.cell_size), 0, fmap.cells_wide - 1))
    y = int(np.clip(np.floor(pixel[1] / fmap.cell_size), 0, fmap.cells_high - 1))
    return x, y


def prepare_positives(
    entries: Sequence[DatasetEntry], tree: SkeletonTree, cell_size: int, threads: int = 1
) -> List[PreparedImage]:
    def prepare(entry: DatasetEntry) -> PreparedImage:
        fmap = extract_features(entry.image, cell_size)
        pixels = derive_part_instances(entry.scaled, tree)
        cells = {pid: (to_cell(p, fmap) if p is not None else None) for pid, p in pixels.items()}
        return PreparedImage(entry.image_id, fmap, pixels, cells)

    return map_jobs(prepare, [e for e in entries if not e.negative], threads)


def sample_negative_patches(
    negatives: Sequence[FeatureMap], box: Tuple[int, int], count: int, rng: np.random.Generator
) -> np.ndarray:
    rows = []
    for _ in range(count):
        fmap = negatives[int(rng.integers(len(negatives)))]
        loc = (int(rng.integers(fmap.cells_wide)), int(rng.integers(fmap.cells_high)))
        rows.append(crop_patch_feature(fmap, loc, box))
    return np.vstack(rows)


def clamp_types(n: int, k: int, K: int) -> int:
    """
    Geometric types a part with ``n`` instances can support at K symbols per type.
    """
    return min(k, max(1, n // (2 * K)))


def _symbols_for_type(
    samples: PartSamples, K: int, part: PartDef, g: int, settings: Settings, notes: List[str]
) -> SymbolSet:
    n_g = samples.positives.shape[0]
    K_g = min(K, max(1, n_g // 2))
    if K_g < K:
        note = f"{part.name} type {g}: {n_g} instances, symbols per type lowered {K} -> {K_g}"
        log.warning(note)
        notes.append(note)
    if n_g < 2 * K_g:
        cat = lsvm_categorize(
            samples.positives, samples.negatives, K_g, settings.lsvm_c, settings.seed,
            tol=settings.svm_tol, max_epochs=settings.svm_max_epochs,
        )
        symbols = [
            Symbol(g, cid, cat.filters[i].copy(), float(cat.biases[i]), True, int(np.sum(cat.labels == i)))
            for i, cid in enumerate(cat.category_ids)
        ]
        return SymbolSet(part_id=part.part_id, symbols=symbols)
    return cross_validate(
        samples,
        K_g,
        settings.cv_rounds,
        settings.prune,
        C=settings.lsvm_c,
        seed=settings.seed + 31 * part.part_id + g,
        part_id=part.part_id,
        geometric_type=g,
        tol=settings.svm_tol,
        max_epochs=settings.svm_max_epochs,
        threads=settings.threads,
    )


def learn_part_symbols(
    part: PartDef,
    tree: SkeletonTree,
    images: Sequence[PreparedImage],
    negatives: Sequence[FeatureMap],
    settings: Settings,
    notes: List[str],
) -> PartSymbols:
    pid = part.part_id
    parent = tree.parent(pid)
    members = [
        i for i, im in enumerate(images)
        if im.pixels[pid] is not None and (parent is None or im.pixels[parent] is not None)
    ]
    if not members:
        raise InsufficientSamplesError(f"insufficient samples: no annotated instance of {part.name}")
    feats = np.vstack([crop_patch_feature(images[i].features, images[i].cells[pid], part.box_size) for i in members])
    rng = np.random.default_rng([settings.seed, pid])
    neg = sample_negative_patches(negatives, part.box_size, settings.negatives_per_part, rng)

    k = settings.k_large if part.is_large else settings.k_small
    K = settings.sym_large if part.is_large else settings.sym_small
    if parent is None:
        types = np.zeros(len(members), dtype=np.int64)
        k_eff = 1
    else:
        k_eff = clamp_types(len(members), k, K)
        if k_eff < k:
            note = f"{part.name}: {len(members)} instances, geometric types lowered {k} -> {k_eff}"
            log.warning(note)
            notes.append(note)
        offsets = np.vstack([images[i].pixels[pid] - images[i].pixels[parent] for i in members])
        grouping = geometric_cluster(offsets, k_eff, settings.seed, part_id=pid, reference_part_id=parent)
        types = grouping.assignments

    sset = SymbolSet(part_id=pid)
    for g in range(k_eff):
        idx = np.flatnonzero(types == g)
        if idx.size == 0:
            continue
        sset = sset.merged(_symbols_for_type(PartSamples(feats[idx], neg), K, part, g, settings, notes))
    survivors = sorted(sset.survivors, key=lambda s: (s.geometric_type, s.visual_category))

    assignment: Dict[int, int] = {}
    for row, i in enumerate(members):
        candidates = [j for j, s in enumerate(survivors) if s.geometric_type == types[row]]
        scores = [survivors[j].filter @ feats[row] + survivors[j].bias for j in candidates]
        assignment[i] = candidates[int(np.argmax(scores))]
    log.info(
        "%s: %d instances, %d geometric types, %d symbols", part.name, len(members), k_eff, len(survivors)
    )
    return PartSymbols(part_id=pid, symbol_set=sset, survivors=survivors, assignment=assignment)


def train_pipeline(
    entries: Sequence[DatasetEntry],
    negative_entries: Sequence[DatasetEntry],
    settings: Settings,
    tree: Optional[SkeletonTree] = None,
) -> PipelineResult:
    tree = tree or default_tree()
    notes: List[str] = []
    images = prepare_positives(entries, tree, settings.cell_size, settings.threads)
    if not images:
        raise InsufficientSamplesError("insufficient samples: no annotated training images")
    negatives = map_jobs(
        lambda e: extract_features(e.image, settings.cell_size), list(negative_entries), settings.threads
    )
    if not negatives:
        raise InsufficientSamplesError("insufficient samples: no negative images")
    log.info("training on %d positives and %d negatives", len(images), len(negatives))

    learned: Dict[int, PartSymbols] = {}
    for part in tree.parts:
        learned[part.part_id] = learn_part_symbols(part, tree, images, negatives, settings, notes)

    symbols: Dict[int, Tuple[SymbolId, ...]] = {}
    filters: Dict[int, np.ndarray] = {}
    for pid, ps in learned.items():
        symbols[pid] = tuple(SymbolId(pid, s.geometric_type, s.visual_category) for s in ps.survivors)
        bank = np.vstack([s.filter for s in ps.survivors])
        filters[pid] = bank if settings.init_from_symbols else np.zeros_like(bank)

    assignments = []
    for i, im in enumerate(images):
        assignments.append(
            {pid: (im.cells[pid], ps.assignment[i]) for pid, ps in learned.items() if i in ps.assignment}
        )
    n_symbols = {pid: len(ps.survivors) for pid, ps in learned.items()}
    context = build_compatibility(assignments, tree, n_symbols, settings.min_cooccurrence)
    init = ModelParams(
        tree=tree, symbols=symbols, filters=filters, context=context, root_bias=0.0, cell_size=settings.cell_size
    )

    positives = [
        TrainingExample(features=im.features, configuration=assignments[i], image_id=im.image_id)
        for i, im in enumerate(images)
        if len(assignments[i]) == len(tree.parts)
    ]
    if not positives:
        raise TrainingError("no training image has every part annotated")
    result = train(
        positives,
        [TrainingExample(features=f) for f in negatives],
        init,
        settings.c,
        settings.epochs,
        tol=settings.svm_tol,
        max_epochs=settings.svm_max_epochs,
        seed=settings.seed,
        threads=settings.threads,
    )
    notes += [f"epoch {r.epoch}: {r.flag}" for r in result.reports if r.flag and r.flag != "converged"]
    return PipelineResult(
        params=result.params,
        symbol_sets=[learned[p.part_id].symbol_set for p in tree.parts],
        training=result,
        notes=notes,
    )


def write_reports(result: PipelineResult, out_dir: PathLike) -> List[Path]:
    out = Path(out_dir)
    tree = result.params.tree
    names = {p.part_id: p.name for p in tree.parts}
    text_path, csv_path = write_symbol_report(result.symbol_sets, names, out, notes=result.notes)
    training_path = out / "training_report.csv"
    result.training.write_report(training_path)
    context_path = out / "context.csv"
    write_context_csv(result.params.context, context_path)
    return [text_path, csv_path, training_path, context_path]


def _in_original_pixels(record: Dict, entry: DatasetEntry) -> Dict:
    for part in record["parts"].values():
        part["location"] = [float(v) for v in entry.to_original(*part["location"])]
    return record


def parse_entries(
    entries: Sequence[DatasetEntry], params: ModelParams, threads: int = 1
) -> List[Dict]:
    """
    Parse records for ``entries`` with part locations in original image pixels.
    """
    records = []
    for entry in tqdm(entries, desc="parse", unit="img", disable=not sys.stderr.isatty()):
        fmap = extract_features(entry.image, params.cell_size)
        result, seconds = timed_parse(fmap, params, threads, entry.image_id)
        records.append(_in_original_pixels(parse_record(result, params, seconds), entry))
    return records


def detect_entries(
    entries: Sequence[DatasetEntry], params: ModelParams, threshold: float, threads: int = 1
) -> List[Dict]:
    """
    Every detection above ``threshold`` in each entry, best first per image.
    """
    records = []
    for entry in tqdm(entries, desc="detect", unit="img", disable=not sys.stderr.isatty()):
        fmap = extract_features(entry.image, params.cell_size)
        for det in detect_all(fmap, params, threshold=threshold, threads=threads, image_id=entry.image_id):
            records.append(_in_original_pixels(parse_record(det, params), entry))
    return records
