"""
Generalized distance transforms for concave quadratic deformation costs.

g(x) = max_x' f(x') + w_lin * d + w_quad * d**2, d = x - x' - anchor, computed
with the lower-envelope-of-parabolas sweep in linear time. The 2D transform
is separable because the deformation feature [dx, dy, dx^2, dy^2] is.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Tuple

import numpy as np
from numba import njit

from .errors import NonConcaveDeformationError

MAX_QUADRATIC = -0.01
_SLACK = 1e-12


@dataclass(frozen=True)
class DistanceTransformResult:
    """
    ``sources`` holds the argmax source per output cell: shape (n,) in 1D,
    (2, H, W) stacked as (x, y) in 2D.
    """

    values: np.ndarray
    sources: np.ndarray


@njit(cache=True, nogil=True)
def _intersect(fp, fq, p, q, a, b, anchor):
    # x where the parabolas sourced at p < q give equal scores
    return (fp - fq) / (2.0 * a * (q - p)) + 0.5 * (p + q) + anchor - b / (2.0 * a)


@njit(cache=True, nogil=True)
def _dt1d(src, w_lin, w_quad, anchor, dst, ptr):
    n = src.shape[0]
    a = -w_quad
    b = -w_lin
    v = np.empty(n, dtype=np.int64)
    z = np.empty(n + 1, dtype=np.float64)
    k = -1
    for q in range(n):
        fq = src[q]
        if fq == -np.inf:
            continue
        if k < 0:
            k = 0
            v[0] = q
            z[0] = -np.inf
            z[1] = np.inf
            continue
        s = _intersect(src[v[k]], fq, v[k], q, a, b, anchor)
        # z[0] = -inf stops the pop loop at the first parabola
        while s <= z[k]:
            k -= 1
            s = _intersect(src[v[k]], fq, v[k], q, a, b, anchor)
        k += 1
        v[k] = q
        z[k] = s
        z[k + 1] = np.inf
    if k < 0:
        for x in range(n):
            dst[x] = -np.inf
            ptr[x] = -1
        return
    k = 0
    for x in range(n):
        while z[k + 1] < x:
            k += 1
        d = x - v[k] - anchor
        dst[x] = src[v[k]] + w_lin * d + w_quad * d * d
        ptr[x] = v[k]


@njit(cache=True, nogil=True)
def _dt2d(src, wx_lin, wy_lin, wx_quad, wy_quad, ax, ay, dst, src_x, src_y):
    h, w = src.shape
    tmp = np.empty((h, w), dtype=np.float64)
    ix = np.empty((h, w), dtype=np.int64)
    iy = np.empty((h, w), dtype=np.int64)
    for y in range(h):
        _dt1d(src[y, :], wx_lin, wx_quad, ax, tmp[y, :], ix[y, :])
    col_in = np.empty(h, dtype=np.float64)
    col_out = np.empty(h, dtype=np.float64)
    col_ptr = np.empty(h, dtype=np.int64)
    for x in range(w):
        for y in range(h):
            col_in[y] = tmp[y, x]
        _dt1d(col_in, wy_lin, wy_quad, ay, col_out, col_ptr)
        for y in range(h):
            dst[y, x] = col_out[y]
            iy[y, x] = col_ptr[y]
    for y in range(h):
        for x in range(w):
            sy = iy[y, x]
            src_y[y, x] = sy
            src_x[y, x] = ix[sy, x] if sy >= 0 else -1


def _check_quadratic(*coeffs: float) -> None:
    for c in coeffs:
        if c > MAX_QUADRATIC + _SLACK:
            raise NonConcaveDeformationError(
                f"non-concave deformation: quadratic weight {c} > {MAX_QUADRATIC}"
            )


def distance_transform_1d(
    scores: np.ndarray, w_lin: float, w_quad: float, anchor: float = 0.0
) -> DistanceTransformResult:
    _check_quadratic(w_quad)
    src = np.ascontiguousarray(scores, dtype=np.float64)
    if src.ndim != 1 or src.size < 1:
        raise ValueError("scores must be a non-empty 1D array")
    dst = np.empty_like(src)
    ptr = np.empty(src.size, dtype=np.int64)
    _dt1d(src, float(w_lin), float(w_quad), float(anchor), dst, ptr)
    return DistanceTransformResult(values=dst, sources=ptr)


def distance_transform_2d(
    grid: np.ndarray, weights: Sequence[float], anchor: Tuple[float, float] = (0.0, 0.0)
) -> DistanceTransformResult:
    """
    ``weights`` = [w_dx, w_dy, w_dx2, w_dy2]; ``anchor`` = (x, y) in cells.
    Rows are transformed along x first, then columns along y.
    """
    w = np.asarray(weights, dtype=np.float64)
    _check_quadratic(w[2], w[3])
    src = np.ascontiguousarray(grid, dtype=np.float64)
    if src.ndim != 2 or src.size < 1:
        raise ValueError("grid must be a non-empty 2D array")
    dst = np.empty_like(src)
    src_x = np.empty(src.shape, dtype=np.int64)
    src_y = np.empty(src.shape, dtype=np.int64)
    _dt2d(src, w[0], w[1], w[2], w[3], float(anchor[0]), float(anchor[1]), dst, src_x, src_y)
    return DistanceTransformResult(values=dst, sources=np.stack([src_x, src_y]))
