from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from sklearn.cluster import kmeans_plusplus

from .errors import InsufficientSamplesError

log = logging.getLogger(__name__)

MAX_LLOYD_ITERATIONS = 100


@dataclass(frozen=True)
class GeometricGrouping:
    part_id: int
    reference_part_id: Optional[int]
    k: int
    centroids: np.ndarray
    assignments: np.ndarray
    inertia_trace: Tuple[float, ...]

    def members(self, cluster: int) -> np.ndarray:
        return np.flatnonzero(self.assignments == cluster)


def _sq_dists(points: np.ndarray, centroids: np.ndarray) -> np.ndarray:
    diff = points[:, None, :] - centroids[None, :, :]
    return np.einsum("nkd,nkd->nk", diff, diff)


def kmeans(
    points: np.ndarray, k: int, seed: int, max_iter: int = MAX_LLOYD_ITERATIONS
) -> Tuple[np.ndarray, np.ndarray, Tuple[float, ...]]:
    """
    Lloyd iterations from k-means++ seeds. Returns (centroids, labels, inertia per
    assignment step). Ties go to the lowest cluster index; an empty cluster is
    reseeded at the point farthest from its current centroid.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim == 1:
        X = X[:, None]
    if k < 1:
        raise ValueError(f"k must be >= 1, got {k}")
    if X.shape[0] < k:
        raise InsufficientSamplesError(f"insufficient samples: {X.shape[0]} points for k={k}")

    centroids, _ = kmeans_plusplus(X, n_clusters=k, random_state=seed)
    centroids = centroids.astype(np.float64, copy=True)
    labels = np.full(X.shape[0], -1, dtype=np.int64)
    trace = []
    for _ in range(max_iter):
        d2 = _sq_dists(X, centroids)
        new_labels = np.argmin(d2, axis=1)
        trace.append(float(d2[np.arange(X.shape[0]), new_labels].sum()))
        if np.array_equal(new_labels, labels):
            break
        labels = new_labels
        counts = np.bincount(labels, minlength=k)
        for j in np.flatnonzero(counts):
            centroids[j] = X[labels == j].mean(axis=0)
        empty = np.flatnonzero(counts == 0)
        if empty.size:
            spread = ((X - centroids[labels]) ** 2).sum(axis=1)
            for j in empty:
                far = int(np.argmax(spread))
                centroids[j] = X[far]
                spread[far] = 0.0
            log.debug("reseeded %d empty clusters", empty.size)
    return centroids, labels, tuple(trace)


def geometric_cluster(
    offsets: np.ndarray,
    k: int,
    seed: int,
    part_id: int = -1,
    reference_part_id: Optional[int] = None,
) -> GeometricGrouping:
    """
    Group a part's offsets relative to its reference part into k geometric types.
    """
    centroids, labels, trace = kmeans(np.asarray(offsets, dtype=np.float64).reshape(-1, 2), k, seed)
    return GeometricGrouping(
        part_id=part_id,
        reference_part_id=reference_part_id,
        k=k,
        centroids=centroids,
        assignments=labels,
        inertia_trace=trace,
    )
