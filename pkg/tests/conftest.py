from __future__ import annotations

import itertools
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import pytest

from symparse.context import ContextTable, PairContext
from symparse.features import FeatureMap
from symparse.model import ModelParams, SymbolId
from symparse.skeleton import NUM_JOINTS, Annotation, Level, PartDef, SkeletonTree, default_tree


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def tree() -> SkeletonTree:
    return default_tree()


def make_annotation(
    points: Optional[np.ndarray] = None,
    visible: Optional[Sequence[int]] = None,
    image: str = "img.pgm",
    height: float = 150.0,
) -> Annotation:
    if points is None:
        points = np.column_stack([np.arange(NUM_JOINTS) * 2.0 + 10.0, np.arange(NUM_JOINTS) * 3.0 + 5.0])
    if visible is None:
        visible = [1] * NUM_JOINTS
    joints = [(float(x), float(y), int(v)) for (x, y), v in zip(points, visible)]
    return Annotation(image=image, joints=joints, height_px=height)


def toy_tree(parents: Sequence[Optional[int]], box: Tuple[int, int] = (1, 1)) -> SkeletonTree:
    """
    Tree with one part per entry; ``parents[i]`` is the parent of part i (None for the root).
    """
    parts = tuple(
        PartDef(part_id=i, name=f"p{i}", level=Level.MID, box_size=box, constituent_joints=(i % NUM_JOINTS,))
        for i in range(len(parents))
    )
    edges = tuple((p, i) for i, p in enumerate(parents) if p is not None)
    root = next(i for i, p in enumerate(parents) if p is None)
    return SkeletonTree(parts=parts, edges=edges, root_id=root)


def toy_params(
    tree: SkeletonTree,
    rng: np.random.Generator,
    n_symbols: Dict[int, int],
    feature_dim: int = 2,
    keep_fraction: float = 1.0,
    root_bias: float = 0.0,
) -> ModelParams:
    """
    Random filters and deformations; each edge keeps a random subset of its
    symbol pairs (at least one).
    """
    filters = {}
    symbols = {}
    for part in tree.parts:
        w, h = part.box_size
        n = n_symbols[part.part_id]
        filters[part.part_id] = rng.normal(size=(n, w * h * feature_dim))
        symbols[part.part_id] = tuple(SymbolId(part.part_id, 0, s) for s in range(n))
    pairs = {}
    for p, c in tree.edges:
        all_pairs = list(itertools.product(range(n_symbols[p]), range(n_symbols[c])))
        chosen = [pair for pair in all_pairs if rng.random() < keep_fraction]
        if not chosen:
            chosen = [all_pairs[int(rng.integers(len(all_pairs)))]]
        pairs[(p, c)] = {
            pair: PairContext(
                weights=np.array(
                    [rng.normal(0, 0.3), rng.normal(0, 0.3), -rng.uniform(0.05, 0.6), -rng.uniform(0.05, 0.6)]
                ),
                bias=float(rng.normal()),
                anchor=(float(rng.integers(-2, 3)), float(rng.integers(-2, 3))),
                count=1,
            )
            for pair in chosen
        }
    context = ContextTable(n_symbols=dict(n_symbols), pairs=pairs)
    return ModelParams(
        tree=tree, symbols=symbols, filters=filters, context=context, root_bias=root_bias, feature_dim=feature_dim
    )


def random_features(rng: np.random.Generator, shape: Tuple[int, int], feature_dim: int = 2) -> FeatureMap:
    return FeatureMap(data=rng.normal(size=(*shape, feature_dim)), cell_size=4)


def all_configurations(params: ModelParams, shape: Tuple[int, int]) -> List[Dict[int, Tuple[Tuple[int, int], int]]]:
    h, w = shape
    cells = [(x, y) for y in range(h) for x in range(w)]
    ids = params.tree.part_ids
    choices = [[(c, s) for c in cells for s in range(params.n_symbols(pid))] for pid in ids]
    return [dict(zip(ids, combo)) for combo in itertools.product(*choices)]
