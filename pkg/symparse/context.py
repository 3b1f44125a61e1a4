"""
Symbol-wise geometric context: deformation features, pairwise compatibility
scores and the per-edge table of co-occurring symbol pairs.

Only pairs seen together in training are stored. A missing pair is an
incompatibility, reported as ``NEG_INF`` by ``compatibility_score`` and never
stored as a number.
"""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from .errors import DisconnectedContextError, UnknownSymbolError
from .fileio import PathLike, atomic_write_csv
from .skeleton import SkeletonTree

log = logging.getLogger(__name__)

NEG_INF = float("-inf")
INITIAL_WEIGHTS = (0.0, 0.0, -0.05, -0.05)

Edge = Tuple[int, int]
SymbolPair = Tuple[int, int]
Cell = Tuple[int, int]
# per part: (cell location, symbol index)
Assignment = Mapping[int, Tuple[Cell, int]]


@dataclass(frozen=True)
class PairContext:
    """
    Deformation weights over [dx, dy, dx^2, dy^2], bias and anchor (cells) for
    one co-occurring symbol pair on one edge.
    """

    weights: np.ndarray
    bias: float
    anchor: Tuple[float, float]
    count: int = 0

    def with_params(self, weights: np.ndarray, bias: float) -> "PairContext":
        return PairContext(
            weights=np.asarray(weights, dtype=np.float64).copy(),
            bias=float(bias),
            anchor=self.anchor,
            count=self.count,
        )


@dataclass(frozen=True)
class ContextTable:
    n_symbols: Dict[int, int]
    pairs: Dict[Edge, Dict[SymbolPair, PairContext]] = field(default_factory=dict)

    @property
    def edges(self) -> List[Edge]:
        return sorted(self.pairs)

    def _check(self, edge: Edge, s_i: int, s_j: int) -> None:
        if edge not in self.pairs:
            raise UnknownSymbolError(f"unknown edge {edge}")
        parent, child = edge
        if not 0 <= s_i < self.n_symbols.get(parent, 0):
            raise UnknownSymbolError(f"unknown symbol {s_i} for part {parent}")
        if not 0 <= s_j < self.n_symbols.get(child, 0):
            raise UnknownSymbolError(f"unknown symbol {s_j} for part {child}")

    def lookup(self, edge: Edge, s_i: int, s_j: int) -> Optional[PairContext]:
        """
        The pair's parameters, or None when the pair never co-occurred.
        """
        self._check(edge, s_i, s_j)
        return self.pairs[edge].get((s_i, s_j))

    def finite_pairs(self, edge: Edge) -> List[Tuple[SymbolPair, PairContext]]:
        return sorted(self.pairs[edge].items())

    def pairs_from(self, edge: Edge, s_i: int) -> List[Tuple[int, PairContext]]:
        return [(sj, ctx) for (si, sj), ctx in self.finite_pairs(edge) if si == s_i]

    def replace(self, updates: Mapping[Edge, Mapping[SymbolPair, PairContext]]) -> "ContextTable":
        pairs = {edge: dict(entries) for edge, entries in self.pairs.items()}
        for edge, entries in updates.items():
            pairs[edge].update(entries)
        return ContextTable(n_symbols=dict(self.n_symbols), pairs=pairs)


def deformation_feature(loc_i: Sequence[float], loc_j: Sequence[float], anchor: Sequence[float]) -> np.ndarray:
    """
    [dx, dy, dx^2, dy^2] with dx = (x_j - x_i) - anchor_x, child minus parent.
    """
    dx = (float(loc_j[0]) - float(loc_i[0])) - float(anchor[0])
    dy = (float(loc_j[1]) - float(loc_i[1])) - float(anchor[1])
    return np.array([dx, dy, dx * dx, dy * dy])


def compatibility_score(
    edge: Edge,
    s_i: int,
    s_j: int,
    loc_i: Sequence[float],
    loc_j: Sequence[float],
    table: ContextTable,
) -> float:
    ctx = table.lookup(edge, s_i, s_j)
    if ctx is None:
        return NEG_INF
    return float(ctx.weights @ deformation_feature(loc_i, loc_j, ctx.anchor) + ctx.bias)


def build_compatibility(
    assignments: Iterable[Assignment],
    tree: SkeletonTree,
    n_symbols: Mapping[int, int],
    min_count: int = 1,
) -> ContextTable:
    """
    One finite entry per symbol pair seen together on an edge in at least
    ``min_count`` training images, with weights [0, 0, -0.05, -0.05], bias 0
    and anchor at the pair's mean child-minus-parent offset.
    """
    offsets: Dict[Edge, Dict[SymbolPair, List[Tuple[float, float]]]] = {
        edge: defaultdict(list) for edge in tree.edges
    }
    for assignment in assignments:
        for parent, child in tree.edges:
            if parent not in assignment or child not in assignment:
                continue
            (loc_p, s_p), (loc_c, s_c) = assignment[parent], assignment[child]
            offsets[(parent, child)][(s_p, s_c)].append(
                (float(loc_c[0]) - float(loc_p[0]), float(loc_c[1]) - float(loc_p[1]))
            )

    pairs: Dict[Edge, Dict[SymbolPair, PairContext]] = {}
    for edge in tree.edges:
        entries: Dict[SymbolPair, PairContext] = {}
        for pair, seen in sorted(offsets[edge].items()):
            if len(seen) < min_count:
                continue
            mean = np.mean(np.asarray(seen), axis=0)
            entries[pair] = PairContext(
                weights=np.array(INITIAL_WEIGHTS),
                bias=0.0,
                anchor=(float(mean[0]), float(mean[1])),
                count=len(seen),
            )
        if not entries:
            raise DisconnectedContextError(
                f"disconnected context: edge {tree.part(edge[0]).name}->{tree.part(edge[1]).name} "
                "has no co-occurring symbol pair"
            )
        possible = n_symbols[edge[0]] * n_symbols[edge[1]]
        log.debug("edge %s: %d of %d symbol pairs finite", edge, len(entries), possible)
        pairs[edge] = entries
    return ContextTable(n_symbols={pid: int(n_symbols[pid]) for pid in tree.part_ids}, pairs=pairs)


def write_context_csv(table: ContextTable, path: PathLike) -> None:
    rows = []
    for edge in table.edges:
        for (s_i, s_j), ctx in table.finite_pairs(edge):
            rows.append(
                [
                    edge[0],
                    edge[1],
                    s_i,
                    s_j,
                    *(f"{w:.10g}" for w in ctx.weights),
                    f"{ctx.bias:.10g}",
                    f"{ctx.anchor[0]:.10g}",
                    f"{ctx.anchor[1]:.10g}",
                    ctx.count,
                ]
            )
    atomic_write_csv(
        path,
        [
            "edge_parent", "edge_child", "s_i", "s_j", "w_dx", "w_dy", "w_dx2", "w_dy2",
            "bias", "anchor_x", "anchor_y", "count",
        ],
        rows,
    )
