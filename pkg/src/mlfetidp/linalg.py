"""Small dense factorizations and the linear-operator plumbing shared by all modules.

Dense blocks are plain ``numpy`` arrays and sparse maps are ``scipy.sparse``
matrices.  Operators follow the :class:`scipy.sparse.linalg.LinearOperator`
contract, so anything with ``shape`` and ``matvec`` can be passed around.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg as sla
from scipy.sparse.linalg import LinearOperator, aslinearoperator

__all__ = [
    "LinAlgError",
    "NotSPD",
    "Singular",
    "TooLarge",
    "SpdFactorization",
    "SymIndefFactorization",
    "cholesky_factor",
    "symindef_factor",
    "materialize",
    "as_operator",
    "CountingOperator",
    "MATERIALIZE_GUARD",
]

MATERIALIZE_GUARD = 20000
PIVOT_RTOL = 1e-12
SYMMETRY_RTOL = 1e-12


class LinAlgError(ValueError):
    """Base class for factorization failures."""


class NotSPD(LinAlgError):
    """Raised when a Cholesky pivot drops below the pivot tolerance."""


class Singular(LinAlgError):
    """Raised when a symmetric indefinite matrix is numerically rank deficient."""


class TooLarge(ValueError):
    """Raised when an operator is too big to be stored densely."""


def _check_square_symmetric(a):
    a = np.asarray(a, dtype=float)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ValueError(f"expected a square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = np.abs(a).max() if a.size else 0.0
    if a.size and np.abs(a - a.T).max() > SYMMETRY_RTOL * max(scale, 1.0):
        raise ValueError("matrix is not symmetric")
    return a


class SpdFactorization:
    """Cholesky factor ``A = L L^T`` of a symmetric positive definite matrix."""

    def __init__(self, lower):
        self.lower = lower
        self.n = lower.shape[0]

    def solve(self, b):
        return sla.cho_solve((self.lower, True), b, check_finite=False)


class SymIndefFactorization:
    """Partially pivoted LU of a symmetric indefinite (saddle-point) matrix.

    The ``lu``/``piv`` pair is exactly what :func:`scipy.linalg.lu_factor`
    returns, which is also what the batched kernels consume.
    """

    def __init__(self, lu, piv):
        self.lu = lu
        self.piv = piv
        self.n = lu.shape[0]

    def solve(self, b):
        return sla.lu_solve((self.lu, self.piv), b, check_finite=False)


def cholesky_factor(a) -> SpdFactorization:
    """Factor a symmetric positive definite matrix.

    Raises
    ------
    NotSPD
        If a pivot is not larger than ``1e-12 * max|diag(A)|``.  For local
        subdomain problems this usually means a rank deficient block, e.g. a
        floating subdomain without enough corner constraints.
    """
    a = _check_square_symmetric(a)
    n = a.shape[0]
    if n == 0:
        return SpdFactorization(np.zeros((0, 0)))
    tol = PIVOT_RTOL * np.abs(np.diag(a)).max()
    try:
        lower = np.linalg.cholesky(a)
    except np.linalg.LinAlgError as exc:
        raise NotSPD("matrix is not positive definite") from exc
    # the squared pivots are the Schur-complement diagonal entries
    if np.any(np.diag(lower) ** 2 <= tol):
        raise NotSPD("Cholesky pivot below tolerance")
    return SpdFactorization(lower)


def symindef_factor(k) -> SymIndefFactorization:
    """Factor a nonsingular symmetric indefinite matrix such as ``[[S, C^T], [C, 0]]``.

    Raises
    ------
    Singular
        If a pivot of the partially pivoted LU falls below
        ``1e-12 * max|K|`` (the saddle block has zero diagonal entries, so the
        scale is taken over all entries).
    """
    k = _check_square_symmetric(k)
    n = k.shape[0]
    if n == 0:
        return SymIndefFactorization(np.zeros((0, 0)), np.zeros(0, dtype=np.int32))
    with warnings.catch_warnings():
        # an exactly zero pivot is reported below as Singular
        warnings.simplefilter("ignore", sla.LinAlgWarning)
        lu, piv = sla.lu_factor(k, check_finite=False)
    tol = PIVOT_RTOL * np.abs(k).max()
    if np.any(np.abs(np.diag(lu)) <= tol):
        raise Singular("symmetric indefinite matrix is numerically singular")
    return SymIndefFactorization(lu, piv)


def as_operator(op) -> LinearOperator:
    """Wrap a dense/sparse matrix or callable-bearing object as a LinearOperator."""
    return aslinearoperator(op)


def materialize(op, guard: int = MATERIALIZE_GUARD) -> np.ndarray:
    """Return the dense matrix whose ``j``-th column is ``op`` applied to ``e_j``."""
    op = as_operator(op)
    m, n = op.shape
    if n > guard:
        raise TooLarge(f"operator has {n} columns, guard is {guard}")
    out = np.empty((m, n))
    e = np.zeros(n)
    for j in range(n):
        e[j] = 1.0
        out[:, j] = op.matvec(e)
        e[j] = 0.0
    return out


class CountingOperator(LinearOperator):
    """Delegating operator that counts how many times it was applied."""

    def __init__(self, op):
        self.inner = as_operator(op)
        self.calls = 0
        super().__init__(dtype=np.float64, shape=self.inner.shape)

    def _matvec(self, x):
        self.calls += 1
        return self.inner.matvec(x)

    def _rmatvec(self, x):
        return self.inner.rmatvec(x)
