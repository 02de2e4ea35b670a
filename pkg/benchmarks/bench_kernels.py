"""Time the numba kernels against their pure-numpy twins.

    python3 benchmarks/bench_kernels.py [--repeat 20] [--scale 1.0]

Each row reports the best-of-``repeat`` wall time per call for both paths and
the speedup, after one warm-up call that also triggers numba compilation.
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from kbiger import _kernels as K


def _best(fn, repeat):
    fn()
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def _random_csr(rng, n, avg_degree):
    m = n * avg_degree
    src = rng.integers(n, size=m)
    dst = rng.integers(n, size=m)
    order = np.argsort(src, kind="stable")
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    np.cumsum(indptr, out=indptr)
    deg = np.diff(indptr)
    weights = 1.0 / deg[src]
    return indptr, dst.astype(np.int64), weights


def cases(scale, rng):
    n_rows = int(200_000 * scale)
    n_seg = int(2_000 * scale) or 1
    d = 64
    src = rng.standard_normal((n_rows, d))
    index = rng.integers(n_seg, size=n_rows)
    x = rng.standard_normal(n_rows)
    seg = np.sort(rng.integers(n_seg, size=n_rows))
    y = K.segment_softmax_numpy(x, seg, n_seg)
    g = rng.standard_normal(n_rows)
    big = rng.standard_normal(n_rows * 4)
    n_nodes = int(50_000 * scale) or 2
    indptr, indices, weights = _random_csr(rng, n_nodes, 8)
    restart = np.zeros(n_nodes)
    restart[:3] = 1.0 / 3
    sources = np.arange(3)
    return [
        ("scatter_add_rows", lambda m: getattr(K, f"scatter_add_rows_{m}")(src, index, n_seg)),
        ("sigmoid", lambda m: getattr(K, f"sigmoid_{m}")(big)),
        ("segment_softmax", lambda m: getattr(K, f"segment_softmax_{m}")(x, seg, n_seg)),
        ("segment_softmax_backward",
         lambda m: getattr(K, f"segment_softmax_backward_{m}")(y, g, seg, n_seg)),
        ("bfs_distances", lambda m: getattr(K, f"bfs_distances_{m}")(indptr, indices, sources, n_nodes, 4)),
        ("ppr", lambda m: getattr(K, f"ppr_{m}")(indptr, indices, weights, restart, 0.8, 1e-10, 100)),
    ]


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--scale", type=float, default=1.0)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if not K.HAVE_NUMBA:
        raise SystemExit("numba is not importable; nothing to compare")
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':<26}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    rows = []
    for name, call in cases(args.scale, rng):
        t_np = _best(lambda: call("numpy"), args.repeat)
        t_nb = _best(lambda: call("numba"), args.repeat)
        rows.append((name, t_np, t_nb))
        print(f"{name:<26}{t_np * 1e3:>12.3f}{t_nb * 1e3:>12.3f}{t_np / t_nb:>9.1f}x")
    return rows


if __name__ == "__main__":
    main()
