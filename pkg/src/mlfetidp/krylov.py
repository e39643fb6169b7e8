"""Krylov solvers and eigenvalue estimates for preconditioned operators.

Both solvers start from a zero initial guess and stop on the relative
residual ``||b - A x|| / ||b||`` of the unpreconditioned system.  GMRES is
right preconditioned and never restarts.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla

from .linalg import as_operator, materialize

__all__ = [
    "KrylovError",
    "Breakdown",
    "Stagnation",
    "NoConvergence",
    "NotSymmetric",
    "KrylovReport",
    "SpectrumReport",
    "SpectrumMatch",
    "pcg",
    "gmres_right",
    "dense_spectrum",
    "arnoldi_topk",
    "compare_spectra",
    "check_symmetric",
]


class KrylovError(RuntimeError):
    pass


class Breakdown(KrylovError):
    """``p^T A p <= 0`` in CG: the operator or preconditioner is not SPD."""


class Stagnation(KrylovError):
    """GMRES exhausted its iteration budget without reaching the tolerance."""


class NoConvergence(KrylovError):
    """Ritz values did not settle before the Krylov space filled up."""


class NotSymmetric(KrylovError):
    pass


@dataclass
class KrylovReport:
    x: np.ndarray
    iterations: int
    residual_history: list = field(default_factory=list)
    converged: bool = False

    @property
    def final_residual(self) -> float:
        return self.residual_history[-1] if self.residual_history else np.nan


@dataclass
class SpectrumReport:
    """Eigenvalues sorted by decreasing magnitude."""

    eigenvalues: np.ndarray
    method: str
    k: int

    @property
    def lambda_max(self) -> float:
        return float(np.max(self.eigenvalues.real))


def _sort_by_magnitude(ev):
    ev = np.asarray(ev, dtype=complex)
    # ties (conjugate pairs, repeated values) broken by real then imaginary part
    order = np.lexsort((-ev.imag, -ev.real, -np.round(np.abs(ev), 12)))
    return ev[order]


def check_symmetric(op, n_probe: int = 3, rtol: float = 1e-8, seed: int = 0) -> bool:
    """Probe ``x^T A y == y^T A x`` on a few random pairs."""
    op = as_operator(op)
    rng = np.random.default_rng(seed)
    n = op.shape[0]
    for _ in range(n_probe):
        x, y = rng.standard_normal(n), rng.standard_normal(n)
        ax, ay = op.matvec(x), op.matvec(y)
        a, b = x @ ay, y @ ax
        if abs(a - b) > rtol * max(np.linalg.norm(ax) * np.linalg.norm(y), 1e-300):
            return False
    return True


def pcg(op, prec, b, tol: float = 1e-8, maxiter: int | None = None,
        check_symmetry: bool = True) -> KrylovReport:
    """Preconditioned conjugate gradients from ``x0 = 0``.

    Parameters
    ----------
    op, prec : LinearOperator
        Symmetric positive definite operator and preconditioner.  With
        ``check_symmetry`` both are probed on random vectors first and a
        nonsymmetric one is rejected with :class:`NotSymmetric`.
    maxiter : int, optional
        Defaults to ``2 * len(b)``; in floating point the finite termination
        of CG after ``n`` steps is lost, so allow some slack.
    """
    op = as_operator(op)
    prec = as_operator(prec) if prec is not None else None
    if check_symmetry:
        for name, o in (("operator", op), ("preconditioner", prec)):
            if o is not None and not check_symmetric(o):
                raise NotSymmetric(f"{name} is not symmetric; use GMRES instead")
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = 2 * n if maxiter is None else maxiter
    x = np.zeros(n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return KrylovReport(x, 0, [0.0], True)
    r = b.copy()
    hist = [1.0]
    z = prec.matvec(r) if prec is not None else r.copy()
    p = z.copy()
    rz = r @ z
    for it in range(1, maxiter + 1):
        q = op.matvec(p)
        pq = p @ q
        if pq <= 0.0:
            raise Breakdown(f"p^T A p = {pq:.3e} at iteration {it}")
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        hist.append(np.linalg.norm(r) / bnorm)
        if hist[-1] <= tol:
            return KrylovReport(x, it, hist, True)
        z = prec.matvec(r) if prec is not None else r.copy()
        rz_new = r @ z
        if rz_new <= 0.0:
            raise Breakdown(f"r^T M r = {rz_new:.3e} at iteration {it}")
        p = z + (rz_new / rz) * p
        rz = rz_new
    return KrylovReport(x, maxiter, hist, False)


def _orthogonalize(V, j, w):
    """Modified Gram-Schmidt of ``w`` against ``V[:j]`` with one reorthogonalization pass."""
    h = np.zeros(j)
    for _ in range(2):
        for i in range(j):
            c = V[i] @ w
            w -= c * V[i]
            h[i] += c
    return h, w


class _Hessenberg:
    """Upper Hessenberg matrix that grows by one column at a time."""

    def __init__(self, chunk=64):
        self.a = np.zeros((chunk + 1, chunk))

    def set_column(self, j, col):
        if j >= self.a.shape[1]:
            grow = self.a.shape[1]
            self.a = np.pad(self.a, ((0, grow), (0, grow)))
        self.a[:len(col), j] = col


def gmres_right(op, prec, b, tol: float = 1e-8, maxiter: int | None = None) -> KrylovReport:
    """Unrestarted right-preconditioned GMRES from ``x0 = 0``.

    Solves ``A M y = b`` and returns ``x = M y``.  The least-squares residual
    of the Arnoldi relation is the true residual of ``A x = b`` up to
    rounding; once it drops below ``tol`` the true residual is computed
    explicitly and the iteration only stops if that one passes as well.

    Raises
    ------
    Stagnation
        If ``maxiter`` (default ``len(b)``) steps do not reach ``tol``.
    """
    op = as_operator(op)
    prec = as_operator(prec) if prec is not None else None
    b = np.asarray(b, dtype=float)
    n = len(b)
    maxiter = n if maxiter is None else min(maxiter, n)
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return KrylovReport(np.zeros(n), 0, [0.0], True)

    def M(v):
        return prec.matvec(v) if prec is not None else v

    V = [b / bnorm]
    hess = _Hessenberg()
    cs, sn, g = [], [], [bnorm]
    hist = [1.0]

    def solution(j):
        y = sla.solve_triangular(hess.a[:j, :j], np.array(g[:j]))
        return M(np.column_stack(V[:j]) @ y)

    for j in range(maxiter):
        w = op.matvec(M(V[j]))
        h, w = _orthogonalize(V, j + 1, w)
        hn = np.linalg.norm(w)
        hess.set_column(j, np.append(h, hn))
        Hm = hess.a
        for i in range(j):
            t = cs[i] * Hm[i, j] + sn[i] * Hm[i + 1, j]
            Hm[i + 1, j] = -sn[i] * Hm[i, j] + cs[i] * Hm[i + 1, j]
            Hm[i, j] = t
        rho = np.hypot(Hm[j, j], Hm[j + 1, j])
        cs.append(Hm[j, j] / rho)
        sn.append(Hm[j + 1, j] / rho)
        Hm[j, j], Hm[j + 1, j] = rho, 0.0
        g.append(-sn[j] * g[j])
        g[j] = cs[j] * g[j]
        hist.append(abs(g[j + 1]) / bnorm)
        happy = hn <= 1e-14 * max(np.linalg.norm(h), 1e-300)
        if hist[-1] <= tol or happy:
            x = solution(j + 1)
            true_res = np.linalg.norm(b - op.matvec(x)) / bnorm
            if true_res <= tol:
                return KrylovReport(x, j + 1, hist, True)
            if happy:
                raise Stagnation(f"invariant subspace reached with residual {true_res:.3e}")
        if not happy:
            V.append(w / hn)
    raise Stagnation(f"GMRES did not reach tol={tol:g} in {maxiter} iterations "
                     f"(residual {hist[-1]:.3e})")


def dense_spectrum(op, guard: int | None = None) -> SpectrumReport:
    """All eigenvalues of the materialized operator."""
    A = materialize(op) if guard is None else materialize(op, guard)
    ev = sla.eigvals(A) if A.size else np.zeros(0, dtype=complex)
    return SpectrumReport(_sort_by_magnitude(ev), "dense", len(ev))


def arnoldi_topk(op, k: int = 1, tol: float = 1e-8, maxdim: int | None = None,
                 check_every: int = 5, seed: int = 0) -> SpectrumReport:
    """Largest-magnitude Ritz values from one growing Arnoldi factorization.

    The Krylov space is enlarged without restarting until the residual
    estimate ``|h_{m+1,m} e_m^T y|`` of each of the ``k`` leading Ritz pairs
    falls below ``tol * |theta|``.  The start vector is drawn from a seeded
    generator so repeated runs give identical results.
    """
    op = as_operator(op)
    n = op.shape[0]
    if not 1 <= k <= n:
        raise ValueError(f"need 1 <= k <= n={n}, got k={k}")
    maxdim = n if maxdim is None else min(maxdim, n)
    v0 = np.random.default_rng(seed).standard_normal(n)
    V = [v0 / np.linalg.norm(v0)]
    hess = _Hessenberg()
    for m in range(1, maxdim + 1):
        j = m - 1
        w = op.matvec(V[j])
        h, w = _orthogonalize(V, m, w)
        hn = np.linalg.norm(w)
        hess.set_column(j, np.append(h, hn))
        Hm = hess.a
        invariant = hn <= 1e-12 * max(np.abs(Hm[:m, :m]).max(), 1e-300)
        if m >= k and (m % check_every == 0 or invariant or m == maxdim):
            theta, Y = sla.eig(Hm[:m, :m])
            order = _order_index(theta)[:k]
            res = np.abs(hn * Y[m - 1, order])
            if invariant or np.all(res <= tol * np.maximum(np.abs(theta[order]), 1e-300)):
                return SpectrumReport(_sort_by_magnitude(theta[order]), "arnoldi", k)
        if invariant:
            break
        V.append(w / hn)
    raise NoConvergence(f"top-{k} Ritz values not converged within dimension {maxdim}")


def _order_index(ev):
    return np.lexsort((-ev.imag, -ev.real, -np.round(np.abs(ev), 12)))


@dataclass
class SpectrumMatch:
    matched: bool
    max_difference: float
    compared: int
    unmatched_a: np.ndarray
    unmatched_b: np.ndarray


def _drop(ev, values, drop_tol):
    ev = np.asarray(ev, dtype=complex)
    keep = np.ones(len(ev), dtype=bool)
    for v in values:
        keep &= np.abs(ev - v) > drop_tol
    return ev[keep]


def compare_spectra(a, b, drop=(0.0, 1.0), tol: float = 1e-8, drop_tol: float | None = None,
                    truncated: bool = False) -> SpectrumMatch:
    """Multiset comparison of two spectra after removing values near ``drop``.

    Parameters
    ----------
    a, b : SpectrumReport or array_like
    tol : float
        Pairwise tolerance (absolute, relative to ``max(1, |value|)``).
    drop_tol : float, optional
        Distance to a value in ``drop`` below which an eigenvalue is
        removed; defaults to ``tol``.
    truncated : bool
        The inputs are leading parts of longer spectra (e.g. top-k
        estimates).  Only the common leading segment is compared, since the
        tails of two truncated lists may legitimately differ.
    """
    ea = _sort_by_magnitude(a.eigenvalues if isinstance(a, SpectrumReport) else a)
    eb = _sort_by_magnitude(b.eigenvalues if isinstance(b, SpectrumReport) else b)
    drop_tol = tol if drop_tol is None else drop_tol
    ea, eb = _drop(ea, drop, drop_tol), _drop(eb, drop, drop_tol)
    if truncated:
        m = min(len(ea), len(eb))
        ea, eb = ea[:m], eb[:m]
    # greedy nearest matching in magnitude order
    used = np.zeros(len(eb), dtype=bool)
    left_a = []
    worst = 0.0
    for v in ea:
        d = np.abs(eb - v)
        d[used] = np.inf
        if len(d) == 0:
            left_a.append(v)
            continue
        i = int(np.argmin(d))
        if d[i] <= tol * max(1.0, abs(v)):
            used[i] = True
            worst = max(worst, d[i])
        else:
            left_a.append(v)
    left_a = np.array(left_a, dtype=complex)
    left_b = eb[~used]
    return SpectrumMatch(len(left_a) == 0 and len(left_b) == 0, float(worst),
                         int(used.sum()), left_a, left_b)
