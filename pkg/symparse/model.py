"""
Model parameters, their flat vector layout, and parse results.

Within a part, symbols are addressed by their index into ``ModelParams.symbols``;
``SymbolId`` keeps the (geometric type, visual category) provenance.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Dict, Tuple

import numpy as np

from .context import ContextTable, Edge, PairContext, SymbolPair, compatibility_score
from .dt import MAX_QUADRATIC
from .errors import FilterShapeError, InfeasibleConfigurationError
from .features import FEATURE_DIM, FeatureMap, crop_patch_feature
from .skeleton import SkeletonTree

Cell = Tuple[int, int]

PAIR_SLOTS = 5  # w_dx, w_dy, w_dx2, w_dy2, bias


@dataclass(frozen=True, order=True)
class SymbolId:
    part_id: int
    geometric_type: int
    visual_category: int


@dataclass(frozen=True)
class ModelParams:
    """
    ``filters[part]`` is (n_symbols, box_w * box_h * feature_dim), rows aligned
    with ``symbols[part]``.
    """

    tree: SkeletonTree
    symbols: Dict[int, Tuple[SymbolId, ...]]
    filters: Dict[int, np.ndarray]
    context: ContextTable
    root_bias: float = 0.0
    cell_size: int = 4
    feature_dim: int = FEATURE_DIM

    def __post_init__(self) -> None:
        for part in self.tree.parts:
            pid = part.part_id
            syms = self.symbols.get(pid, ())
            if not syms:
                raise FilterShapeError(f"part {part.name} has no symbols")
            bank = self.filters.get(pid)
            w, h = part.box_size
            expected = (len(syms), w * h * self.feature_dim)
            if bank is None or bank.shape != expected:
                got = None if bank is None else bank.shape
                raise FilterShapeError(f"part {part.name}: filter bank {got}, expected {expected}")
            if self.context.n_symbols.get(pid) != len(syms):
                raise FilterShapeError(
                    f"part {part.name}: context knows {self.context.n_symbols.get(pid)} symbols, model has {len(syms)}"
                )

    def n_symbols(self, part_id: int) -> int:
        return len(self.symbols[part_id])

    def filter(self, part_id: int, symbol: int) -> np.ndarray:
        return self.filters[part_id][symbol]

    def replace(self, **changes) -> "ModelParams":
        values = {
            "tree": self.tree,
            "symbols": self.symbols,
            "filters": self.filters,
            "context": self.context,
            "root_bias": self.root_bias,
            "cell_size": self.cell_size,
            "feature_dim": self.feature_dim,
        }
        values.update(changes)
        return ModelParams(**values)

    def summary(self) -> str:
        layout = ParamLayout.of(self)
        lines = [f"parts: {len(self.tree.parts)}  cell_size: {self.cell_size}  parameters: {layout.size}"]
        for part in self.tree.parts:
            pid = part.part_id
            types = sorted({s.geometric_type for s in self.symbols[pid]})
            line = f"  {part.name:<12} {part.level.value:<5} symbols={self.n_symbols(pid):<3} types={len(types)}"
            parent = self.tree.parent(pid)
            if parent is not None:
                finite = len(self.context.pairs[(parent, pid)])
                total = self.n_symbols(parent) * self.n_symbols(pid)
                line += f"  pairs={finite}/{total}"
            lines.append(line)
        return "\n".join(lines)


@dataclass(frozen=True)
class ParamLayout:
    """
    Offsets of every parameter in the flat vector theta: filters per part and
    symbol, then per edge per finite symbol pair the 4 deformation weights and
    the bias, then the root bias. Incompatible pairs have no slots.
    """

    filter_offsets: Dict[Tuple[int, int], Tuple[int, int]]
    pair_offsets: Dict[Tuple[Edge, SymbolPair], int]
    root_index: int
    size: int

    @classmethod
    def of(cls, params: ModelParams) -> "ParamLayout":
        offset = 0
        filters: Dict[Tuple[int, int], Tuple[int, int]] = {}
        for part in params.tree.parts:
            bank = params.filters[part.part_id]
            for s in range(bank.shape[0]):
                filters[(part.part_id, s)] = (offset, offset + bank.shape[1])
                offset += bank.shape[1]
        pairs: Dict[Tuple[Edge, SymbolPair], int] = {}
        for edge in params.context.edges:
            for pair, _ in params.context.finite_pairs(edge):
                pairs[(edge, pair)] = offset
                offset += PAIR_SLOTS
        return cls(filter_offsets=filters, pair_offsets=pairs, root_index=offset, size=offset + 1)

    def quadratic_indices(self) -> np.ndarray:
        starts = np.array(sorted(self.pair_offsets.values()), dtype=np.int64)
        return np.sort(np.concatenate([starts + 2, starts + 3])) if starts.size else starts

    def flatten(self, params: ModelParams) -> np.ndarray:
        theta = np.zeros(self.size)
        for (pid, s), (lo, hi) in self.filter_offsets.items():
            theta[lo:hi] = params.filters[pid][s]
        for (edge, pair), lo in self.pair_offsets.items():
            ctx = params.context.pairs[edge][pair]
            theta[lo : lo + 4] = ctx.weights
            theta[lo + 4] = ctx.bias
        theta[self.root_index] = params.root_bias
        return theta

    def unflatten(self, theta: np.ndarray, template: ModelParams) -> ModelParams:
        """
        Parameters of ``template`` with values read from ``theta``; symbols,
        anchors and the set of finite pairs come from the template.
        """
        theta = np.asarray(theta, dtype=np.float64)
        if theta.shape != (self.size,):
            raise FilterShapeError(f"theta has shape {theta.shape}, layout needs ({self.size},)")
        filters = {pid: np.empty_like(bank) for pid, bank in template.filters.items()}
        for (pid, s), (lo, hi) in self.filter_offsets.items():
            filters[pid][s] = theta[lo:hi]
        updates: Dict[Edge, Dict[SymbolPair, PairContext]] = {}
        for (edge, pair), lo in self.pair_offsets.items():
            ctx = template.context.pairs[edge][pair]
            updates.setdefault(edge, {})[pair] = ctx.with_params(theta[lo : lo + 4], theta[lo + 4])
        return template.replace(
            filters=filters,
            context=template.context.replace(updates),
            root_bias=float(theta[self.root_index]),
        )


@dataclass(frozen=True)
class PartPlacement:
    part_id: int
    location: Cell
    symbol: int
    symbol_id: SymbolId
    unary_score: float
    pairwise_score: float


@dataclass(frozen=True)
class ParseResult:
    """
    One parse. The root placement's ``pairwise_score`` carries the root bias,
    so ``total_score`` is the sum of every unary and pairwise score.
    """

    placements: Dict[int, PartPlacement]
    total_score: float
    image_id: str = ""

    def location(self, part_id: int) -> Cell:
        return self.placements[part_id].location

    def pixel_location(self, part_id: int, cell_size: int) -> Tuple[float, float]:
        x, y = self.placements[part_id].location
        return (x + 0.5) * cell_size, (y + 0.5) * cell_size

    def configuration(self) -> Dict[int, Tuple[Cell, int]]:
        return {pid: (p.location, p.symbol) for pid, p in self.placements.items()}

    def with_image_id(self, image_id: str) -> "ParseResult":
        return ParseResult(placements=self.placements, total_score=self.total_score, image_id=image_id)


@dataclass(frozen=True)
class ScoreBreakdown:
    unary: Dict[int, float]
    pairwise: Dict[Edge, float]
    root_bias: float
    total: float


def score_decomposition(result: ParseResult, params: ModelParams, features: FeatureMap) -> ScoreBreakdown:
    """
    Recompute every appearance and deformation term of a parse from scratch.
    """
    return configuration_score(result.configuration(), params, features)


def configuration_score(
    configuration: Dict[int, Tuple[Cell, int]], params: ModelParams, features: FeatureMap
) -> ScoreBreakdown:
    tree = params.tree
    unary: Dict[int, float] = {}
    for part in tree.parts:
        loc, s = configuration[part.part_id]
        patch = crop_patch_feature(features, loc, part.box_size)
        unary[part.part_id] = float(params.filter(part.part_id, s) @ patch)
    pairwise: Dict[Edge, float] = {}
    for edge in tree.edges:
        (loc_p, s_p), (loc_c, s_c) = configuration[edge[0]], configuration[edge[1]]
        score = compatibility_score(edge, s_p, s_c, loc_p, loc_c, params.context)
        if score == float("-inf"):
            raise InfeasibleConfigurationError(
                f"infeasible configuration: symbols ({s_p}, {s_c}) never co-occur on edge {edge}"
            )
        pairwise[edge] = score
    total = sum(unary.values()) + sum(pairwise.values()) + params.root_bias
    return ScoreBreakdown(unary=unary, pairwise=pairwise, root_bias=params.root_bias, total=total)


def zero_params(params: ModelParams) -> ModelParams:
    """
    Same structure with every filter, linear weight and bias set to zero. Quadratic
    weights sit at MAX_QUADRATIC so the model stays concave and parseable.
    """
    layout = ParamLayout.of(params)
    theta = np.zeros(layout.size)
    theta[layout.quadratic_indices()] = MAX_QUADRATIC
    return layout.unflatten(theta, params)
