"""Packed block-diagonal solvers backed by the compiled kernels when available.

The compiled module ``_kernels`` is used if it imports; otherwise the
pure-Python twin is used.  Setting ``MLFETIDP_PURE_PYTHON=1`` forces the
fallback.  Every class also accepts ``backend="python"|"cython"`` so both
paths can be exercised side by side in tests and benchmarks.
"""

from __future__ import annotations

import os

import numpy as np

from . import _kernels_py

try:
    if os.environ.get("MLFETIDP_PURE_PYTHON", "") not in ("", "0"):
        raise ImportError("pure Python requested")
    from . import _kernels as _compiled
except ImportError:
    _compiled = None

BACKEND = "cython" if _compiled is not None else "python"


def _impl(backend):
    if backend is None:
        backend = BACKEND
    if backend == "cython":
        if _compiled is None:
            raise RuntimeError("compiled kernels are not built")
        return _compiled
    if backend == "python":
        return _kernels_py
    raise ValueError(f"unknown backend {backend!r}")


def _pack(blocks):
    sizes = np.array([b.shape[0] for b in blocks], dtype=np.int64)
    vec_off = np.zeros(len(blocks) + 1, dtype=np.int64)
    np.cumsum(sizes, out=vec_off[1:])
    mat_off = np.zeros(len(blocks) + 1, dtype=np.int64)
    np.cumsum(sizes**2, out=mat_off[1:])
    flat = np.empty(int(mat_off[-1]))
    for b, blk in enumerate(blocks):
        flat[mat_off[b]:mat_off[b + 1]] = np.ascontiguousarray(blk).ravel()
    return flat, mat_off, vec_off


class _Packed:
    def __init__(self, blocks, backend=None):
        self.flat, self.mat_off, self.vec_off = _pack(blocks)
        self.n = int(self.vec_off[-1])
        self.nblocks = len(blocks)
        self._k = _impl(backend)

    def block_slice(self, b):
        return slice(int(self.vec_off[b]), int(self.vec_off[b + 1]))


class LUBlocks(_Packed):
    """Batched solves with LU factors from :func:`scipy.linalg.lu_factor`.

    Parameters
    ----------
    factors : list of (lu, piv)
    """

    def __init__(self, factors, backend=None):
        super().__init__([lu for lu, _ in factors], backend)
        self.piv = np.concatenate([np.asarray(p, dtype=np.int32) for _, p in factors]) \
            if factors else np.zeros(0, dtype=np.int32)

    def solve(self, rhs):
        x = np.array(rhs, dtype=float, copy=True)
        self._k.lu_solve_blocks(self.flat, self.piv, self.mat_off, self.vec_off, x)
        return x


class CholeskyBlocks(_Packed):
    """Batched solves with lower Cholesky factors."""

    def solve(self, rhs):
        x = np.array(rhs, dtype=float, copy=True)
        self._k.cho_solve_blocks(self.flat, self.mat_off, self.vec_off, x)
        return x


class DenseBlocks(_Packed):
    """Block-diagonal matrix with dense blocks."""

    def matvec(self, x):
        x = np.ascontiguousarray(x, dtype=float)
        y = np.empty_like(x)
        self._k.block_matvec(self.flat, self.mat_off, self.vec_off, x, y)
        return y
