"""Hot inner loops: scatter-add rows, sigmoid, segment softmax, BFS and PPR power iteration.

Each kernel has a numba ``@njit`` body and a pure-numpy twin. The numba path is
used when numba imports cleanly and ``KBIGER_DISABLE_NUMBA`` is unset or "0".
Both paths are importable directly (``*_numba`` / ``*_numpy``) so tests and the
benchmark can compare them.
"""
from __future__ import annotations

import os

import numpy as np

try:
    from numba import njit

    HAVE_NUMBA = True
except ImportError:  # pragma: no cover - numba is a declared dependency
    HAVE_NUMBA = False

USE_NUMBA = HAVE_NUMBA and os.environ.get("KBIGER_DISABLE_NUMBA", "0") in ("", "0")


# ---------------------------------------------------------------- numpy path


def scatter_add_rows_numpy(src, index, n):
    """out[index[i]] += src[i]; src is (m,) or (m, d)."""
    out = np.zeros((n,) + src.shape[1:], dtype=src.dtype)
    np.add.at(out, index, src)
    return out


def sigmoid_numpy(x):
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def segment_softmax_numpy(x, seg, nseg):
    seg_max = np.full(nseg, -np.inf, dtype=x.dtype)
    np.maximum.at(seg_max, seg, x)
    z = np.exp(x - seg_max[seg])
    denom = np.zeros(nseg, dtype=x.dtype)
    np.add.at(denom, seg, z)
    return z / denom[seg]


def segment_softmax_backward_numpy(y, g, seg, nseg):
    dot = np.zeros(nseg, dtype=y.dtype)
    np.add.at(dot, seg, g * y)
    return y * (g - dot[seg])


def bfs_distances_numpy(indptr, indices, sources, n, max_depth):
    dist = np.full(n, -1, dtype=np.int64)
    frontier = np.unique(np.asarray(sources, dtype=np.int64))
    dist[frontier] = 0
    depth = 0
    while frontier.size and depth < max_depth:
        depth += 1
        nbrs = np.concatenate([indices[indptr[u]:indptr[u + 1]] for u in frontier])
        nbrs = np.unique(nbrs)
        nbrs = nbrs[dist[nbrs] < 0]
        dist[nbrs] = depth
        frontier = nbrs
    return dist


def ppr_numpy(indptr, indices, weights, restart, damping, tol, max_iter):
    """Power iteration x <- d * P^T x + (1 - d) * restart over a CSR out-edge matrix.

    Rows of the CSR structure are sources; ``weights`` are row-stochastic.
    Dangling mass is returned to the restart distribution.
    """
    n = restart.shape[0]
    rows = np.repeat(np.arange(n), np.diff(indptr))
    dangling = np.diff(indptr) == 0
    x = restart.copy()
    iters = 0
    for iters in range(1, max_iter + 1):
        nxt = np.zeros(n)
        np.add.at(nxt, indices, weights * x[rows])
        nxt = damping * (nxt + x[dangling].sum() * restart) + (1.0 - damping) * restart
        resid = np.abs(nxt - x).sum()
        x = nxt
        if resid < tol:
            break
    return x, iters


# ---------------------------------------------------------------- numba path

if HAVE_NUMBA:

    @njit(cache=True)
    def _scatter_add_1d(src, index, n):
        out = np.zeros(n, dtype=src.dtype)
        for i in range(src.shape[0]):
            out[index[i]] += src[i]
        return out

    @njit(cache=True)
    def _scatter_add_2d(src, index, n):
        out = np.zeros((n, src.shape[1]), dtype=src.dtype)
        for i in range(src.shape[0]):
            r = index[i]
            for j in range(src.shape[1]):
                out[r, j] += src[i, j]
        return out

    def scatter_add_rows_numba(src, index, n):
        index = np.ascontiguousarray(index, dtype=np.int64)
        if src.ndim == 1:
            return _scatter_add_1d(np.ascontiguousarray(src), index, n)
        flat = np.ascontiguousarray(src.reshape(src.shape[0], -1))
        return _scatter_add_2d(flat, index, n).reshape((n,) + src.shape[1:])

    @njit(cache=True)
    def _sigmoid(flat):
        out = np.empty_like(flat)
        for i in range(flat.shape[0]):
            v = flat[i]
            if v >= 0:
                out[i] = 1.0 / (1.0 + np.exp(-v))
            else:
                ev = np.exp(v)
                out[i] = ev / (1.0 + ev)
        return out

    def sigmoid_numba(x):
        x = np.ascontiguousarray(x, dtype=np.float64)
        return _sigmoid(x.reshape(-1)).reshape(x.shape)

    @njit(cache=True)
    def _segment_softmax(x, seg, nseg):
        seg_max = np.full(nseg, -np.inf)
        for i in range(x.shape[0]):
            if x[i] > seg_max[seg[i]]:
                seg_max[seg[i]] = x[i]
        z = np.empty_like(x)
        denom = np.zeros(nseg)
        for i in range(x.shape[0]):
            z[i] = np.exp(x[i] - seg_max[seg[i]])
            denom[seg[i]] += z[i]
        for i in range(x.shape[0]):
            z[i] /= denom[seg[i]]
        return z

    @njit(cache=True)
    def _segment_softmax_backward(y, g, seg, nseg):
        dot = np.zeros(nseg)
        for i in range(y.shape[0]):
            dot[seg[i]] += g[i] * y[i]
        out = np.empty_like(y)
        for i in range(y.shape[0]):
            out[i] = y[i] * (g[i] - dot[seg[i]])
        return out

    def segment_softmax_numba(x, seg, nseg):
        return _segment_softmax(np.ascontiguousarray(x, dtype=np.float64),
                                np.ascontiguousarray(seg, dtype=np.int64), nseg)

    def segment_softmax_backward_numba(y, g, seg, nseg):
        return _segment_softmax_backward(np.ascontiguousarray(y, dtype=np.float64),
                                         np.ascontiguousarray(g, dtype=np.float64),
                                         np.ascontiguousarray(seg, dtype=np.int64), nseg)

    @njit(cache=True)
    def _bfs(indptr, indices, sources, n, max_depth):
        dist = np.full(n, -1, dtype=np.int64)
        queue = np.empty(n, dtype=np.int64)
        head = 0
        tail = 0
        for s in sources:
            if dist[s] < 0:
                dist[s] = 0
                queue[tail] = s
                tail += 1
        while head < tail:
            u = queue[head]
            head += 1
            if dist[u] >= max_depth:
                continue
            for p in range(indptr[u], indptr[u + 1]):
                v = indices[p]
                if dist[v] < 0:
                    dist[v] = dist[u] + 1
                    queue[tail] = v
                    tail += 1
        return dist

    def bfs_distances_numba(indptr, indices, sources, n, max_depth):
        return _bfs(np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
                    np.asarray(sources, dtype=np.int64), n, max_depth)

    @njit(cache=True)
    def _ppr(indptr, indices, weights, restart, damping, tol, max_iter):
        n = restart.shape[0]
        x = restart.copy()
        nxt = np.empty(n)
        iters = 0
        for it in range(1, max_iter + 1):
            iters = it
            nxt[:] = 0.0
            lost = 0.0
            for u in range(n):
                if indptr[u] == indptr[u + 1]:
                    lost += x[u]
                for p in range(indptr[u], indptr[u + 1]):
                    nxt[indices[p]] += weights[p] * x[u]
            resid = 0.0
            for u in range(n):
                v = damping * (nxt[u] + lost * restart[u]) + (1.0 - damping) * restart[u]
                resid += abs(v - x[u])
                nxt[u] = v
            x[:] = nxt
            if resid < tol:
                break
        return x, iters

    def ppr_numba(indptr, indices, weights, restart, damping, tol, max_iter):
        return _ppr(np.asarray(indptr, dtype=np.int64), np.asarray(indices, dtype=np.int64),
                    np.asarray(weights, dtype=np.float64), np.asarray(restart, dtype=np.float64),
                    float(damping), float(tol), int(max_iter))


if USE_NUMBA:
    scatter_add_rows = scatter_add_rows_numba
    sigmoid = sigmoid_numba
    segment_softmax = segment_softmax_numba
    segment_softmax_backward = segment_softmax_backward_numba
    bfs_distances = bfs_distances_numba
    ppr = ppr_numba
else:
    scatter_add_rows = scatter_add_rows_numpy
    sigmoid = sigmoid_numpy
    segment_softmax = segment_softmax_numpy
    segment_softmax_backward = segment_softmax_backward_numpy
    bfs_distances = bfs_distances_numpy
    ppr = ppr_numpy
