"""
Dual coordinate descent solvers for hinge-loss linear SVMs.

``train_linear_svm`` solves min 1/2 |w|^2 + C sum_i max(0, 1 - y_i w.x_i) with the
bias carried as a regularized constant feature. ``solve_shared_slack`` solves the
same problem over sparse constraints that share one slack per example group,
which is the cached-constraint QP of joint model learning.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
from numba import njit

BIAS_FEATURE = 1.0


@dataclass(frozen=True)
class LinearSVM:
    weights: np.ndarray
    bias: float
    objective: float
    gap: float
    epochs: int

    def decision(self, X: np.ndarray) -> np.ndarray:
        return X @ self.weights + self.bias


@njit(cache=True, nogil=True)
def _dcd_hinge(X, y, C, tol, max_epochs, seed):
    n, d = X.shape
    w = np.zeros(d)
    alpha = np.zeros(n)
    qii = np.empty(n)
    for i in range(n):
        qii[i] = np.dot(X[i], X[i])
    order = np.arange(n)
    np.random.seed(seed)
    primal = 0.0
    gap = np.inf
    epoch = 0
    while epoch < max_epochs:
        epoch += 1
        np.random.shuffle(order)
        for t in range(n):
            i = order[t]
            if qii[i] <= 0.0:
                continue
            g = y[i] * np.dot(w, X[i]) - 1.0
            a_old = alpha[i]
            a_new = min(max(a_old - g / qii[i], 0.0), C)
            if a_new != a_old:
                w += (a_new - a_old) * y[i] * X[i]
                alpha[i] = a_new
        ww = np.dot(w, w)
        hinge = 0.0
        for i in range(n):
            m = 1.0 - y[i] * np.dot(w, X[i])
            if m > 0.0:
                hinge += m
        primal = 0.5 * ww + C * hinge
        gap = primal - (alpha.sum() - 0.5 * ww)
        if gap < tol:
            break
    return w, primal, gap, epoch


def hinge_objective(w: np.ndarray, bias: float, X: np.ndarray, y: np.ndarray, C: float) -> float:
    margins = y * (X @ w + bias)
    return float(0.5 * (w @ w + bias * bias) + C * np.maximum(0.0, 1.0 - margins).sum())


def train_linear_svm(
    X: np.ndarray,
    y: np.ndarray,
    C: float,
    tol: float = 1e-3,
    max_epochs: int = 1000,
    seed: int = 0,
) -> LinearSVM:
    """
    Hinge-loss linear SVM, stopping at duality gap < ``tol`` or ``max_epochs``.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    aug = np.ascontiguousarray(np.hstack([X, np.full((X.shape[0], 1), BIAS_FEATURE)]))
    w, primal, gap, epochs = _dcd_hinge(aug, y, float(C), float(tol), int(max_epochs), int(seed))
    return LinearSVM(
        weights=w[:-1].copy(),
        bias=float(w[-1] * BIAS_FEATURE),
        objective=float(primal),
        gap=float(gap),
        epochs=int(epochs),
    )


@njit(cache=True, nogil=True)
def _row_dot(indptr, indices, data, j, theta):
    s = 0.0
    for p in range(indptr[j], indptr[j + 1]):
        s += data[p] * theta[indices[p]]
    return s


@njit(cache=True, nogil=True)
def _rows_dot(indptr, indices, data, j, k):
    # indices sorted within each row
    s = 0.0
    a = indptr[j]
    b = indptr[k]
    ea = indptr[j + 1]
    eb = indptr[k + 1]
    while a < ea and b < eb:
        ia = indices[a]
        ib = indices[b]
        if ia == ib:
            s += data[a] * data[b]
            a += 1
            b += 1
        elif ia < ib:
            a += 1
        else:
            b += 1
    return s


@njit(cache=True, nogil=True)
def _row_update(indptr, indices, data, j, scale, u, theta, bounded, cap):
    # theta = u - beta, with beta_q = max(0, u_q - cap) on bounded coordinates
    for p in range(indptr[j], indptr[j + 1]):
        q = indices[p]
        u[q] += scale * data[p]
        if bounded[q] and u[q] > cap:
            theta[q] = cap
        else:
            theta[q] = u[q]


@njit(cache=True, nogil=True)
def _shared_slack_objective(indptr, indices, data, y, group, n_groups, C, u, theta, alpha, cap):
    worst = np.zeros(n_groups)
    for j in range(y.shape[0]):
        loss = 1.0 - y[j] * _row_dot(indptr, indices, data, j, theta)
        if loss > worst[group[j]]:
            worst[group[j]] = loss
    tt = np.dot(theta, theta)
    primal = 0.5 * tt + C * worst.sum()
    beta_sum = (u - theta).sum()
    dual = alpha.sum() - 0.5 * tt - cap * beta_sum
    return primal, primal - dual


@njit(cache=True, nogil=True)
def _dcd_shared_slack(
    indptr, indices, data, y, group, n_groups, C, u, theta, alpha, bounded, cap, tol, max_epochs, seed
):
    n = y.shape[0]
    qjj = np.empty(n)
    for j in range(n):
        qjj[j] = _rows_dot(indptr, indices, data, j, j)
    used = np.zeros(n_groups)
    for j in range(n):
        used[group[j]] += alpha[j]
    order = np.arange(n)
    np.random.seed(seed)
    primal, gap = _shared_slack_objective(indptr, indices, data, y, group, n_groups, C, u, theta, alpha, cap)
    epoch = 0
    while epoch < max_epochs and gap >= tol:
        epoch += 1
        np.random.shuffle(order)
        for t in range(n):
            j = order[t]
            if qjj[j] <= 0.0:
                continue
            margin = y[j] * _row_dot(indptr, indices, data, j, theta)
            room = C - used[group[j]] + alpha[j]
            a_new = min(max(alpha[j] + (1.0 - margin) / qjj[j], 0.0), room)
            delta = a_new - alpha[j]
            if delta != 0.0:
                _row_update(indptr, indices, data, j, delta * y[j], u, theta, bounded, cap)
                alpha[j] = a_new
                used[group[j]] += delta
            if a_new < room or margin >= 1.0:
                continue
            # slack budget exhausted: shift weight from the group's most
            # satisfied active constraint to this one
            margin = y[j] * _row_dot(indptr, indices, data, j, theta)
            best_k = -1
            best_margin = margin
            for k in range(n):
                if k == j or group[k] != group[j] or alpha[k] <= 0.0:
                    continue
                mk = y[k] * _row_dot(indptr, indices, data, k, theta)
                if mk > best_margin:
                    best_margin = mk
                    best_k = k
            if best_k < 0:
                continue
            k = best_k
            uu = qjj[j] + qjj[k] - 2.0 * y[j] * y[k] * _rows_dot(indptr, indices, data, j, k)
            if uu <= 0.0:
                continue
            step = min((best_margin - margin) / uu, alpha[k])
            if step > 0.0:
                _row_update(indptr, indices, data, j, step * y[j], u, theta, bounded, cap)
                _row_update(indptr, indices, data, k, -step * y[k], u, theta, bounded, cap)
                alpha[j] += step
                alpha[k] -= step
        primal, gap = _shared_slack_objective(indptr, indices, data, y, group, n_groups, C, u, theta, alpha, cap)
    return primal, gap, epoch


@dataclass
class SharedSlackSolution:
    theta: np.ndarray
    alpha: np.ndarray
    objective: float
    gap: float
    epochs: int


def solve_shared_slack(
    features: sp.csr_matrix,
    signs: np.ndarray,
    groups: np.ndarray,
    C: float,
    alpha0: Optional[np.ndarray] = None,
    tol: float = 1e-3,
    max_epochs: int = 1000,
    seed: int = 0,
    upper_bounded: Optional[np.ndarray] = None,
    upper_bound: float = 0.0,
) -> SharedSlackSolution:
    """
    min 1/2 |theta|^2 + C sum_g max(0, max_{j in g} 1 - y_j theta.Phi_j)
    s.t. theta_q <= upper_bound for every q flagged in ``upper_bounded``.

    ``features`` rows are the constraint vectors Phi_j; ``alpha0`` warm-starts the
    dual (theta is rebuilt from it so the primal/dual pair stays consistent).
    """
    Phi = sp.csr_matrix(features, dtype=np.float64)
    Phi.sum_duplicates()
    Phi.sort_indices()
    n_features = Phi.shape[1]
    y = np.ascontiguousarray(signs, dtype=np.float64)
    g = np.ascontiguousarray(groups, dtype=np.int64)
    n_groups = int(g.max()) + 1 if g.size else 0
    alpha = np.zeros(y.size) if alpha0 is None else np.array(alpha0, dtype=np.float64)
    u = np.asarray(Phi.T @ (alpha * y)).ravel() if y.size else np.zeros(n_features)
    u = np.ascontiguousarray(u, dtype=np.float64)
    bounded = np.zeros(n_features, dtype=np.bool_)
    if upper_bounded is not None:
        bounded[np.asarray(upper_bounded)] = True
    theta = np.where(bounded, np.minimum(u, upper_bound), u)
    primal, gap, epochs = _dcd_shared_slack(
        Phi.indptr.astype(np.int64),
        Phi.indices.astype(np.int64),
        Phi.data,
        y,
        g,
        n_groups,
        float(C),
        u,
        theta,
        alpha,
        bounded,
        float(upper_bound),
        float(tol),
        int(max_epochs),
        int(seed),
    )
    return SharedSlackSolution(theta=theta, alpha=alpha, objective=float(primal), gap=float(gap), epochs=int(epochs))
