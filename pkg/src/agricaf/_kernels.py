"""Hot numeric kernels with a numba fast path and a pure-numpy fallback.

The numba path is used when available; set ``AGRICAF_DISABLE_NUMBA=1`` to
force the numpy implementations (also selected automatically when numba is
not importable). Both variants stay importable so the benchmark in
``benchmarks/bench_kernels.py`` can compare them directly.

Kernels here dominate runtime: the regression-tree split search runs once
per node for every tree of every fold of every grid point, and the ARMA
residual recursion runs once per objective evaluation inside the optimizer.
"""

from __future__ import annotations

import os

import numpy as np


def _best_split_numpy(X, y, rows, feats, min_leaf):
    """Best SSE-reducing binary split over candidate features.

    Returns ``(feature, threshold, children_sse, n_left)``; feature is -1
    when no admissible split exists. Thresholds sit at midpoints between
    consecutive distinct values; ties resolve to the first feature in
    ``feats`` order, then the lowest threshold.
    """
    n = rows.shape[0]
    best_feat = -1
    best_thresh = 0.0
    best_sse = np.inf
    best_nleft = 0
    yv = y[rows]
    total = float(np.sum(yv))
    total_sq = float(np.sum(yv * yv))
    nl = np.arange(1, n)
    nr = n - nl
    for f in feats:
        xv = X[rows, f]
        order = np.argsort(xv, kind="mergesort")
        xs = xv[order]
        ys = yv[order]
        valid = (xs[:-1] < xs[1:]) & (nl >= min_leaf) & (nr >= min_leaf)
        if not valid.any():
            continue
        cs = np.cumsum(ys)[:-1]
        csq = np.cumsum(ys * ys)[:-1]
        left_sse = csq - cs * cs / nl
        rs = total - cs
        right_sse = (total_sq - csq) - rs * rs / nr
        sse = np.where(valid, left_sse + right_sse, np.inf)
        i = int(np.argmin(sse))
        if sse[i] < best_sse:
            best_feat = int(f)
            best_thresh = float((xs[i] + xs[i + 1]) / 2.0)
            best_sse = float(sse[i])
            best_nleft = i + 1
    return best_feat, best_thresh, best_sse, best_nleft


def _tree_predict_numpy(feature, threshold, left, right, value, X):
    """Route every row of X through an array-encoded tree; returns leaf values."""
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = feature[node] >= 0
    while active.any():
        idx = np.nonzero(active)[0]
        cur = node[idx]
        go_left = X[idx, feature[cur]] <= threshold[cur]
        node[idx] = np.where(go_left, left[cur], right[cur])
        active = feature[node] >= 0
    return value[node]


def _arma_residuals_numpy(x, phi, theta, burn):
    """Conditional ARMA residual recursion; residuals before ``burn`` are 0."""
    n = x.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    eps = np.zeros(n)
    if q == 0:
        acc = x[burn:].copy()
        for i in range(p):
            acc -= phi[i] * x[burn - 1 - i : n - 1 - i]
        eps[burn:] = acc
        return eps
    for t in range(burn, n):
        acc = x[t]
        for i in range(p):
            acc -= phi[i] * x[t - 1 - i]
        for j in range(q):
            k = t - 1 - j
            if k >= 0:
                acc -= theta[j] * eps[k]
        eps[t] = acc
    return eps


def _best_split_loop(X, y, rows, feats, min_leaf):
    n = rows.shape[0]
    best_feat = -1
    best_thresh = 0.0
    best_sse = np.inf
    best_nleft = 0
    total = 0.0
    total_sq = 0.0
    yv = np.empty(n)
    for i in range(n):
        v = y[rows[i]]
        yv[i] = v
        total += v
        total_sq += v * v
    xv = np.empty(n)
    for fi in range(feats.shape[0]):
        f = feats[fi]
        for i in range(n):
            xv[i] = X[rows[i], f]
        order = np.argsort(xv, kind="mergesort")
        s = 0.0
        sq = 0.0
        for i in range(n - 1):
            v = yv[order[i]]
            s += v
            sq += v * v
            n_left = i + 1
            n_right = n - n_left
            if n_left < min_leaf:
                continue
            if n_right < min_leaf:
                break
            lo = xv[order[i]]
            hi = xv[order[i + 1]]
            if not lo < hi:
                continue
            left_sse = sq - s * s / n_left
            rs = total - s
            right_sse = (total_sq - sq) - rs * rs / n_right
            sse = left_sse + right_sse
            if sse < best_sse:
                best_feat = f
                best_thresh = (lo + hi) / 2.0
                best_sse = sse
                best_nleft = n_left
    return best_feat, best_thresh, best_sse, best_nleft


def _tree_predict_loop(feature, threshold, left, right, value, X):
    n = X.shape[0]
    out = np.empty(n)
    for i in range(n):
        node = 0
        while feature[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = value[node]
    return out


def _arma_residuals_loop(x, phi, theta, burn):
    n = x.shape[0]
    p = phi.shape[0]
    q = theta.shape[0]
    eps = np.zeros(n)
    for t in range(burn, n):
        acc = x[t]
        for i in range(p):
            acc -= phi[i] * x[t - 1 - i]
        for j in range(q):
            k = t - 1 - j
            if k >= 0:
                acc -= theta[j] * eps[k]
        eps[t] = acc
    return eps


_disabled = os.environ.get("AGRICAF_DISABLE_NUMBA", "").strip().lower() in {"1", "true", "yes"}
HAVE_NUMBA = False
best_split_numba = None
tree_predict_numba = None
arma_residuals_numba = None

if not _disabled:
    try:
        from numba import njit

        best_split_numba = njit(cache=True)(_best_split_loop)
        tree_predict_numba = njit(cache=True)(_tree_predict_loop)
        arma_residuals_numba = njit(cache=True)(_arma_residuals_loop)
        HAVE_NUMBA = True
    except ImportError:
        HAVE_NUMBA = False

if HAVE_NUMBA:
    BACKEND = "numba"
    best_split = best_split_numba
    tree_predict = tree_predict_numba
    arma_residuals = arma_residuals_numba
else:
    BACKEND = "numpy"
    best_split = _best_split_numpy
    tree_predict = _tree_predict_numpy
    arma_residuals = _arma_residuals_numpy

best_split_numpy = _best_split_numpy
tree_predict_numpy = _tree_predict_numpy
arma_residuals_numpy = _arma_residuals_numpy
