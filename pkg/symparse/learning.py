"""
Joint learning of filters, deformation weights and biases.

Cutting-plane training over a cache of constraints: positives keep their
annotated configuration, negatives contribute their current highest-scoring
parse whenever it beats the -1 margin (hard-negative mining). Every epoch
re-solves the shared-slack QP over the cache with the quadratic deformation
weights held at or below the concavity bound.
"""

from __future__ import annotations

import logging
import sys
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
import scipy.sparse as sp
from tqdm import tqdm

from .context import deformation_feature
from .dt import MAX_QUADRATIC
from .errors import InfeasibleConfigurationError, TrainingError
from .features import FeatureMap, crop_patch_feature
from .fileio import PathLike, atomic_write_csv
from .inference import parse
from .model import Cell, ModelParams, ParamLayout
from .svm import solve_shared_slack
from .workers import map_jobs

log = logging.getLogger(__name__)

NEGATIVE_MARGIN = -1.0
EVICT_MARGIN = 1.1
EVICT_AFTER = 2

Configuration = Dict[int, Tuple[Cell, int]]


@dataclass(frozen=True)
class TrainingExample:
    """
    A positive carries its part configuration (cell, symbol index per part);
    a negative has none.
    """

    features: FeatureMap
    configuration: Optional[Configuration] = None
    image_id: str = ""
    slack: float = 0.0

    @property
    def is_positive(self) -> bool:
        return self.configuration is not None


@dataclass
class CachedConstraint:
    phi: sp.csr_matrix
    sign: float
    group: int
    key: Tuple
    inactive: int = 0


@dataclass
class QPState:
    theta: np.ndarray
    constraints: List[CachedConstraint] = field(default_factory=list)
    alpha: np.ndarray = field(default_factory=lambda: np.zeros(0))
    objective: float = float("inf")
    iteration: int = 0

    def matrix(self) -> sp.csr_matrix:
        return sp.vstack([c.phi for c in self.constraints], format="csr")

    def margins(self) -> np.ndarray:
        if not self.constraints:
            return np.zeros(0)
        signs = np.array([c.sign for c in self.constraints])
        return signs * (self.matrix() @ self.theta)

    def group_slacks(self, n_groups: int) -> np.ndarray:
        slack = np.zeros(n_groups)
        for c, m in zip(self.constraints, self.margins()):
            slack[c.group] = max(slack[c.group], 1.0 - m)
        return slack


@dataclass(frozen=True)
class EpochReport:
    epoch: int
    cached_constraints: int
    objective: float
    violated_negatives: int
    wall_time: float
    flag: str = ""


@dataclass
class TrainingResult:
    params: ModelParams
    state: QPState
    reports: List[EpochReport]

    def write_report(self, path: PathLike) -> None:
        atomic_write_csv(
            path,
            ["epoch", "cached_constraints", "objective", "violated_negatives", "wall_time", "flag"],
            [
                [
                    r.epoch,
                    r.cached_constraints,
                    f"{r.objective:.10g}",
                    r.violated_negatives,
                    f"{r.wall_time:.3f}",
                    r.flag,
                ]
                for r in self.reports
            ],
        )


def feature_vector(
    features: FeatureMap,
    configuration: Configuration,
    params: ModelParams,
    layout: Optional[ParamLayout] = None,
) -> sp.csr_matrix:
    """
    Sparse joint feature row Phi with <theta, Phi> equal to the configuration's
    score: patch features in each chosen filter's slots, [dx, dy, dx^2, dy^2, 1]
    in each chosen pair's slots, 1 in the root-bias slot.
    """
    layout = layout or ParamLayout.of(params)
    cols: List[np.ndarray] = []
    vals: List[np.ndarray] = []
    for part in params.tree.parts:
        loc, s = configuration[part.part_id]
        lo, _ = layout.filter_offsets[(part.part_id, s)]
        patch = crop_patch_feature(features, loc, part.box_size)
        nz = np.flatnonzero(patch)
        cols.append(lo + nz)
        vals.append(patch[nz])
    for edge in params.tree.edges:
        (loc_p, s_p), (loc_c, s_c) = configuration[edge[0]], configuration[edge[1]]
        ctx = params.context.lookup(edge, s_p, s_c)
        if ctx is None:
            raise InfeasibleConfigurationError(
                f"infeasible configuration: symbols ({s_p}, {s_c}) never co-occur on edge {edge}"
            )
        lo = layout.pair_offsets[(edge, (s_p, s_c))]
        cols.append(np.arange(lo, lo + 5))
        vals.append(np.append(deformation_feature(loc_p, loc_c, ctx.anchor), 1.0))
    cols.append(np.array([layout.root_index]))
    vals.append(np.array([1.0]))
    col = np.concatenate(cols)
    val = np.concatenate(vals)
    return sp.csr_matrix((val, (np.zeros(col.size, dtype=np.int64), col)), shape=(1, layout.size))


def _config_key(group: int, configuration: Configuration) -> Tuple:
    return (group,) + tuple(
        (pid, int(loc[0]), int(loc[1]), int(s)) for pid, (loc, s) in sorted(configuration.items())
    )


def train(
    positives: Sequence[TrainingExample],
    negatives: Sequence[TrainingExample],
    init: ModelParams,
    C: float,
    epochs: int,
    tol: float = 1e-3,
    max_epochs: int = 1000,
    seed: int = 0,
    threads: int = 1,
) -> TrainingResult:
    """
    Hard-negative cutting-plane training. Stops when an epoch mines no new
    violated negative or after ``epochs`` epochs.
    """
    if not positives:
        raise TrainingError("no positive examples")
    if not negatives:
        raise TrainingError("no negative examples")
    if C < 0:
        raise TrainingError(f"C must be >= 0, got {C}")

    layout = ParamLayout.of(init)
    qidx = layout.quadratic_indices()
    theta = layout.flatten(init)
    theta[qidx] = np.minimum(theta[qidx], MAX_QUADRATIC)
    params = layout.unflatten(theta, init)
    state = QPState(theta=theta)

    n_pos = len(positives)
    n_groups = n_pos + len(negatives)
    for g, ex in enumerate(positives):
        if not ex.is_positive:
            raise TrainingError(f"example {ex.image_id or g} has no configuration")
        try:
            phi = feature_vector(ex.features, ex.configuration, params, layout)
        except InfeasibleConfigurationError as exc:
            log.warning("skipping positive %s: %s", ex.image_id or g, exc.message)
            continue
        state.constraints.append(CachedConstraint(phi=phi, sign=1.0, group=g, key=_config_key(g, ex.configuration)))
    if not state.constraints:
        raise TrainingError("no feasible positive example")
    state.alpha = np.zeros(len(state.constraints))

    reports: List[EpochReport] = []
    for epoch in range(1, epochs + 1):
        start = time.perf_counter()
        slacks = state.group_slacks(n_groups)
        known = {c.key for c in state.constraints}
        jobs = list(enumerate(negatives, start=n_pos))
        if threads <= 1:
            jobs_iter = tqdm(jobs, desc=f"epoch {epoch} mining", leave=False, disable=not sys.stderr.isatty())
            mined = [parse(ex.features, params) for _, ex in jobs_iter]
        else:
            mined = map_jobs(lambda job: parse(job[1].features, params), jobs, threads)

        violated = 0
        for (g, ex), result in zip(jobs, mined):
            if result.total_score <= NEGATIVE_MARGIN + slacks[g]:
                continue
            config = result.configuration()
            key = _config_key(g, config)
            if key in known:
                continue
            phi = feature_vector(ex.features, config, params, layout)
            state.constraints.append(CachedConstraint(phi=phi, sign=-1.0, group=g, key=key))
            known.add(key)
            violated += 1
        if epoch > 1 and violated == 0:
            reports.append(
                EpochReport(epoch, len(state.constraints), state.objective, 0, time.perf_counter() - start, "converged")
            )
            log.info("epoch %d: no new violated negatives, stopping", epoch)
            break

        state.alpha = np.concatenate([state.alpha, np.zeros(len(state.constraints) - state.alpha.size)])
        solution = solve_shared_slack(
            state.matrix(),
            np.array([c.sign for c in state.constraints]),
            np.array([c.group for c in state.constraints]),
            C,
            alpha0=state.alpha,
            tol=tol,
            max_epochs=max_epochs,
            seed=seed + epoch,
            upper_bounded=qidx,
            upper_bound=MAX_QUADRATIC,
        )
        flag = ""
        theta = solution.theta.copy()
        clamped = np.minimum(theta[qidx], MAX_QUADRATIC)
        if np.any(clamped < theta[qidx] - 1e-12):
            flag = "projected"
            log.warning("epoch %d: quadratic weights projected onto the concavity bound", epoch)
        theta[qidx] = clamped
        if solution.gap >= tol:
            flag = (flag + ";" if flag else "") + "gap_not_reached"
            log.warning("epoch %d: QP stopped at duality gap %.3g", epoch, solution.gap)

        state.theta = theta
        state.alpha = solution.alpha
        state.objective = solution.objective
        state.iteration = epoch
        params = layout.unflatten(theta, params)

        # evict negatives that have sat well outside the margin with no dual weight
        margins = state.margins()
        keep: List[int] = []
        for j, (c, m) in enumerate(zip(state.constraints, margins)):
            if c.sign < 0 and state.alpha[j] == 0.0 and m > EVICT_MARGIN:
                c.inactive += 1
            else:
                c.inactive = 0
            if c.inactive < EVICT_AFTER:
                keep.append(j)
        evicted = len(state.constraints) - len(keep)
        state.constraints = [state.constraints[j] for j in keep]
        state.alpha = state.alpha[keep]

        elapsed = time.perf_counter() - start
        reports.append(EpochReport(epoch, len(state.constraints), state.objective, violated, elapsed, flag))
        log.info(
            "epoch %d: objective %.6g, %d cached (%d evicted), %d new violated negatives, %.2fs",
            epoch, state.objective, len(state.constraints), evicted, violated, elapsed,
        )

    return TrainingResult(params=params, state=state, reports=reports)

