"""
Exact max-sum inference over the part tree.

Messages flow leaf to root. For every (edge, parent symbol) the child's maps are
distance-transformed once per compatible child symbol and reduced by an
elementwise max; incompatible pairs are skipped, never scored.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np
from scipy.ndimage import maximum_filter

from .context import Edge, compatibility_score
from .dt import distance_transform_2d
from .errors import DatasetError, InfeasibleModelError
from .features import FeatureMap, correlate_filter
from .fileio import PathLike, atomic_write_text
from .model import ModelParams, ParseResult, PartPlacement
from .skeleton import SkeletonTree
from .workers import map_jobs

log = logging.getLogger(__name__)

NMS_OVERLAP = 0.5


@dataclass(frozen=True)
class BackPointer:
    """
    For one (edge, parent symbol): best child symbol and child cell per parent cell.
    """

    symbol: np.ndarray
    src_x: np.ndarray
    src_y: np.ndarray


@dataclass
class ScoreMap:
    """
    ``scores[part][symbol]`` is unary plus incoming messages, (H, W); only
    feasible symbols are present. The root's maps include the root bias.
    """

    tree: SkeletonTree
    unary: Dict[int, Dict[int, np.ndarray]]
    scores: Dict[int, Dict[int, np.ndarray]]
    pointers: Dict[Tuple[Edge, int], BackPointer]

    @property
    def root_scores(self) -> Dict[int, np.ndarray]:
        return self.scores[self.tree.root_id]

    def best_root_map(self) -> Tuple[np.ndarray, np.ndarray]:
        """
        Max over root symbols per cell and the (lowest) symbol attaining it.
        """
        symbols = sorted(self.root_scores)
        stack = np.stack([self.root_scores[s] for s in symbols])
        best = np.argmax(stack, axis=0)
        return np.take_along_axis(stack, best[None], axis=0)[0], np.asarray(symbols)[best]


def unary_maps(features: FeatureMap, params: ModelParams, threads: int = 1) -> Dict[int, Dict[int, np.ndarray]]:
    jobs = [
        (part.part_id, s, part.box_size)
        for part in params.tree.parts
        for s in range(params.n_symbols(part.part_id))
    ]
    maps = map_jobs(lambda job: correlate_filter(features, params.filter(job[0], job[1]), job[2]), jobs, threads)
    out: Dict[int, Dict[int, np.ndarray]] = {}
    for (pid, s, _), score in zip(jobs, maps):
        out.setdefault(pid, {})[s] = score
    return out


def pass_messages(
    features: FeatureMap,
    params: ModelParams,
    tree: Optional[SkeletonTree] = None,
    threads: int = 1,
) -> ScoreMap:
    tree = tree or params.tree
    unary = unary_maps(features, params, threads)
    scores: Dict[int, Dict[int, np.ndarray]] = {}
    pointers: Dict[Tuple[Edge, int], BackPointer] = {}

    for pid in tree.postorder():
        children = tree.children(pid)
        # one distance transform per compatible (child symbol, parent symbol) pair
        jobs = []
        for child in children:
            edge = (pid, child)
            for (s_p, s_c), ctx in params.context.finite_pairs(edge):
                if s_c in scores[child]:
                    jobs.append((edge, s_p, s_c, ctx))

        def transform(job):
            edge, s_p, s_c, ctx = job
            w = ctx.weights
            ax, ay = ctx.anchor
            # child-minus-parent offsets: flip the linear terms and the anchor
            res = distance_transform_2d(scores[edge[1]][s_c], (-w[0], -w[1], w[2], w[3]), (-ax, -ay))
            return res.values + ctx.bias, res.sources

        transformed = map_jobs(transform, jobs, threads)

        best: Dict[Tuple[Edge, int], Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]] = {}
        for (edge, s_p, s_c, _), (values, sources) in zip(jobs, transformed):
            key = (edge, s_p)
            if key not in best:
                best[key] = (
                    values.copy(),
                    np.full(values.shape, s_c, dtype=np.int64),
                    sources[0].copy(),
                    sources[1].copy(),
                )
                continue
            cur, sym, sx, sy = best[key]
            better = values > cur
            cur[better] = values[better]
            sym[better] = s_c
            sx[better] = sources[0][better]
            sy[better] = sources[1][better]

        part_scores: Dict[int, np.ndarray] = {}
        for s in range(params.n_symbols(pid)):
            total = unary[pid][s].copy()
            feasible = True
            for child in children:
                entry = best.get(((pid, child), s))
                if entry is None:
                    feasible = False
                    break
                total += entry[0]
            if not feasible:
                continue
            for child in children:
                _, sym, sx, sy = best[((pid, child), s)]
                pointers[((pid, child), s)] = BackPointer(symbol=sym, src_x=sx, src_y=sy)
            part_scores[s] = total
        if not part_scores:
            raise InfeasibleModelError(
                f"infeasible model: no symbol of part {tree.part(pid).name} has a compatible child configuration"
            )
        if len(part_scores) < params.n_symbols(pid):
            log.debug("part %s: %d symbols unreachable", pid, params.n_symbols(pid) - len(part_scores))
        scores[pid] = part_scores

    root = tree.root_id
    scores[root] = {s: m + params.root_bias for s, m in scores[root].items()}
    return ScoreMap(tree=tree, unary=unary, scores=scores, pointers=pointers)


def backtrack(
    score_map: ScoreMap, params: ModelParams, root_cell: Tuple[int, int], root_symbol: int, image_id: str = ""
) -> ParseResult:
    tree = score_map.tree
    root = tree.root_id
    x, y = root_cell
    chosen: Dict[int, Tuple[Tuple[int, int], int]] = {root: ((x, y), root_symbol)}
    for pid in tree.preorder():
        (px, py), s_p = chosen[pid]
        for child in tree.children(pid):
            bp = score_map.pointers[((pid, child), s_p)]
            chosen[child] = ((int(bp.src_x[py, px]), int(bp.src_y[py, px])), int(bp.symbol[py, px]))

    placements: Dict[int, PartPlacement] = {}
    for pid, (loc, s) in chosen.items():
        parent = tree.parent(pid)
        if parent is None:
            pairwise = params.root_bias
        else:
            loc_p, s_p = chosen[parent]
            pairwise = compatibility_score((parent, pid), s_p, s, loc_p, loc, params.context)
        placements[pid] = PartPlacement(
            part_id=pid,
            location=loc,
            symbol=s,
            symbol_id=params.symbols[pid][s],
            unary_score=float(score_map.unary[pid][s][loc[1], loc[0]]),
            pairwise_score=float(pairwise),
        )
    total = float(score_map.root_scores[root_symbol][y, x])
    return ParseResult(placements=placements, total_score=total, image_id=image_id)


def parse(
    features: FeatureMap,
    params: ModelParams,
    tree: Optional[SkeletonTree] = None,
    threads: int = 1,
    image_id: str = "",
) -> ParseResult:
    """
    Highest-scoring configuration; ties go to the lowest root cell (row-major),
    then the lowest root symbol.
    """
    score_map = pass_messages(features, params, tree, threads)
    symbols = sorted(score_map.root_scores)
    # (cells, symbols) so argmax prefers the lowest cell, then the lowest symbol
    table = np.stack([score_map.root_scores[s].ravel() for s in symbols], axis=1)
    flat = int(np.argmax(table))
    cell, k = divmod(flat, len(symbols))
    width = features.cells_wide
    return backtrack(score_map, params, (cell % width, cell // width), symbols[k], image_id)


def _box_iou(a: Tuple[int, int], b: Tuple[int, int], box: Tuple[int, int]) -> float:
    w, h = box
    ix = max(0, w - abs(a[0] - b[0]))
    iy = max(0, h - abs(a[1] - b[1]))
    inter = ix * iy
    return inter / float(2 * w * h - inter)


def detect_all(
    features: FeatureMap,
    params: ModelParams,
    tree: Optional[SkeletonTree] = None,
    threshold: float = float("-inf"),
    threads: int = 1,
    image_id: str = "",
    overlap: float = NMS_OVERLAP,
) -> List[ParseResult]:
    """
    Every root local maximum scoring above ``threshold``, backtracked, with
    greedy suppression of root boxes overlapping a better detection by IoU > ``overlap``.
    """
    tree = tree or params.tree
    score_map = pass_messages(features, params, tree, threads)
    best, best_symbol = score_map.best_root_map()
    peaks = (maximum_filter(best, size=3, mode="constant", cval=-np.inf) == best) & (best > threshold)
    ys, xs = np.nonzero(peaks)
    if ys.size == 0:
        return []
    cells = ys * best.shape[1] + xs
    order = np.lexsort((cells, -best[ys, xs]))
    box = tree.part(tree.root_id).box_size

    kept: List[Tuple[int, int]] = []
    results: List[ParseResult] = []
    for i in order:
        cand = (int(xs[i]), int(ys[i]))
        if any(_box_iou(cand, k, box) > overlap for k in kept):
            continue
        kept.append(cand)
        results.append(backtrack(score_map, params, cand, int(best_symbol[cand[1], cand[0]]), image_id))
    return results


def parse_record(result: ParseResult, params: ModelParams, seconds: Optional[float] = None) -> Dict:
    """
    JSON-ready record: every part with its pixel location, symbol and score.
    """
    parts = {}
    for part in params.tree.parts:
        p = result.placements[part.part_id]
        px, py = result.pixel_location(part.part_id, params.cell_size)
        parts[part.name] = {
            "level": part.level.value,
            "location": [px, py],
            "cell": [int(p.location[0]), int(p.location[1])],
            "symbol": [p.symbol_id.geometric_type, p.symbol_id.visual_category],
            "score": p.unary_score + p.pairwise_score,
        }
    record = {"image_id": result.image_id, "parts": parts, "total_score": result.total_score}
    if seconds is not None:
        record["seconds"] = round(seconds, 6)
    return record


def write_parses(path: PathLike, records: Iterable[Dict]) -> None:
    lines = [json.dumps(r, sort_keys=True) for r in records]
    atomic_write_text(path, "".join(line + "\n" for line in lines))


def read_parses(path: PathLike) -> Dict[str, Dict]:
    """
    Parse records keyed by image id; the first record per image wins.
    """
    out: Dict[str, Dict] = {}
    try:
        fh = open(path, "r", encoding="utf-8")
    except OSError as exc:
        raise DatasetError(f"cannot read predictions: {exc}", path=path) from exc
    with fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                record = json.loads(line)
                image_id = record["image_id"]
                record["parts"]
            except (ValueError, KeyError, TypeError) as exc:
                raise DatasetError(f"malformed parse record: {exc}", line=lineno, path=path) from exc
            out.setdefault(image_id, record)
    return out


def timed_parse(
    features: FeatureMap, params: ModelParams, threads: int = 1, image_id: str = ""
) -> Tuple[ParseResult, float]:
    start = time.perf_counter()
    result = parse(features, params, threads=threads, image_id=image_id)
    elapsed = time.perf_counter() - start
    log.info("parsed %s in %.3fs (score %.4f)", image_id or "image", elapsed, result.total_score)
    return result, elapsed
