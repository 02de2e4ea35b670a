"""The numba and numpy kernel paths compute the same values."""
import os
import subprocess
import sys

import numpy as np
import pytest

from kbiger import _kernels as K

pytestmark = pytest.mark.skipif(not K.HAVE_NUMBA, reason="numba not importable")


@pytest.mark.parametrize("seed", range(5))
def test_scatter_add_rows_paths_agree(seed):
    rng = np.random.default_rng(seed)
    for shape in [(40,), (40, 3), (40, 2, 3)]:
        src = rng.standard_normal(shape)
        idx = rng.integers(7, size=shape[0])
        np.testing.assert_allclose(K.scatter_add_rows_numba(src, idx, 7),
                                   K.scatter_add_rows_numpy(src, idx, 7), rtol=0, atol=1e-12)


def test_sigmoid_paths_agree_and_saturate():
    x = np.concatenate([np.linspace(-40, 40, 1001), [-800.0, 800.0, 0.0]])
    a, b = K.sigmoid_numba(x), K.sigmoid_numpy(x)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)
    assert np.all(np.isfinite(a)) and a[-1] == 0.5
    assert a[-3] == 0.0 and a[-2] == 1.0


@pytest.mark.parametrize("seed", range(5))
def test_segment_softmax_paths_agree(seed):
    rng = np.random.default_rng(seed)
    seg = np.sort(rng.integers(5, size=60))
    x = rng.standard_normal(60) * 10
    g = rng.standard_normal(60)
    y1, y2 = K.segment_softmax_numba(x, seg, 5), K.segment_softmax_numpy(x, seg, 5)
    np.testing.assert_allclose(y1, y2, rtol=1e-12)
    np.testing.assert_allclose(K.segment_softmax_backward_numba(y1, g, seg, 5),
                               K.segment_softmax_backward_numpy(y1, g, seg, 5), atol=1e-12)


def _csr(rng, n, m):
    src = np.sort(rng.integers(n, size=m))
    dst = rng.integers(n, size=m)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, src + 1, 1)
    return np.cumsum(indptr), dst.astype(np.int64), src


@pytest.mark.parametrize("seed", range(5))
def test_bfs_paths_agree(seed):
    rng = np.random.default_rng(seed)
    indptr, dst, _ = _csr(rng, 30, 50)
    for depth in (0, 1, 2, 5):
        src = rng.integers(30, size=2)
        np.testing.assert_array_equal(K.bfs_distances_numba(indptr, dst, src, 30, depth),
                                      K.bfs_distances_numpy(indptr, dst, src, 30, depth))


@pytest.mark.parametrize("seed", range(5))
def test_ppr_paths_agree(seed):
    rng = np.random.default_rng(seed)
    indptr, dst, src = _csr(rng, 25, 60)
    deg = np.diff(indptr)
    w = 1.0 / deg[src]
    restart = np.zeros(25)
    restart[[0, 3]] = 0.5
    x1, it1 = K.ppr_numba(indptr, dst, w, restart, 0.8, 1e-12, 500)
    x2, it2 = K.ppr_numpy(indptr, dst, w, restart, 0.8, 1e-12, 500)
    np.testing.assert_allclose(x1, x2, atol=1e-12)
    assert it1 == it2
    assert abs(x1.sum() - 1.0) < 1e-9


def test_env_flag_selects_numpy_path():
    code = ("from kbiger import _kernels as K; "
            "print(K.USE_NUMBA, K.sigmoid is K.sigmoid_numpy)")
    env = dict(os.environ, KBIGER_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["False", "True"]
    env["KBIGER_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True,
                         check=True).stdout.split()
    assert out == ["True", "False"]
