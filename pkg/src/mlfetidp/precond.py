"""Substructuring operators and preconditioners built on a :class:`~mlfetidp.coarse.Multilevel`.

All operators are :class:`scipy.sparse.linalg.LinearOperator` objects acting
on one level:

* ``U_Gamma`` (assembled interface):  :class:`SchurOperator`, :class:`BddcPreconditioner`
* ``Lambda`` (multipliers):           :class:`DirichletPreconditioner`, :class:`FetiDpOperator`
* ``U_c x Lambda``:                   :class:`FetiDpSaddleSystem`, :class:`MFPreconditioner`

Coarse solvers act on ``U_c`` and approximate ``S_c^{-1}``.
"""

from __future__ import annotations

import numpy as np
from scipy.sparse.linalg import LinearOperator

from .coarse import Level, Multilevel
from .linalg import CountingOperator, cholesky_factor

__all__ = [
    "SchurOperator",
    "DirichletPreconditioner",
    "ExactCoarse",
    "StandinCoarse",
    "MultilevelCoarse",
    "make_coarse_solver",
    "HOperator",
    "BddcPreconditioner",
    "BddcFullPreconditioner",
    "FetiDpOperator",
    "FetiDpSaddleSystem",
    "MFPreconditioner",
    "assemble_saddle_system",
    "condensed_rhs",
    "recover_solution",
    "feti_dp_full_matrix",
]


class _Op(LinearOperator):
    def __init__(self, n, m=None):
        super().__init__(dtype=np.float64, shape=(n, n if m is None else m))


class SchurOperator(_Op):
    """Assembled interface Schur complement ``R^T S R``."""

    def __init__(self, level: Level):
        self.level = level
        self.R = level.maps.R
        super().__init__(level.maps.nGamma)

    def _matvec(self, x):
        return self.R.T @ self.level.S(self.R @ np.ravel(x))


class DirichletPreconditioner(_Op):
    """``M_D = B_D S B_D^T`` on the multiplier space."""

    def __init__(self, level: Level):
        self.level = level
        self.B_D = level.maps.B_D
        super().__init__(level.maps.nLambda)

    def _matvec(self, y):
        return self.B_D @ self.level.S(self.B_D.T @ np.ravel(y))


# coarse solvers ------------------------------------------------------------------

class ExactCoarse(_Op):
    """Cholesky solve with the (densified) coarse matrix."""

    def __init__(self, Sc, factor=None):
        self.factor = factor if factor is not None else cholesky_factor(
            Sc.toarray() if hasattr(Sc, "toarray") else np.asarray(Sc))
        super().__init__(self.factor.n)

    def _matvec(self, r):
        return self.factor.solve(np.ravel(r))


class StandinCoarse(_Op):
    """Scaled Jacobi ``omega * diag(S_c)^{-1}``; a cheap symmetric approximate coarse solve."""

    def __init__(self, Sc, omega=1.0):
        self.inv_diag = omega / Sc.diagonal()
        super().__init__(len(self.inv_diag))

    def _matvec(self, r):
        return self.inv_diag * np.ravel(r)


class MultilevelCoarse(_Op):
    """Approximate ``S_c^{-1}`` of level ``lv`` by one BDDC sweep on level ``lv + 1``."""

    def __init__(self, ml: Multilevel, lv: int):
        self.ml = ml
        self.lv = lv
        nxt = ml.level(lv + 1)
        self.inner = BddcFullPreconditioner(nxt, make_coarse_solver(ml, lv + 1, "multilevel"))
        super().__init__(nxt.mesh.ndof)

    def _matvec(self, r):
        return self.inner.matvec(np.ravel(r))


def make_coarse_solver(ml: Multilevel, lv: int = 1, kind: str = "multilevel", omega: float = 1.0):
    """Coarse solver for the coarse matrix of level ``lv``.

    ``kind`` is ``"exact"``, ``"multilevel"`` (exact at the top level) or ``"standin"``.
    """
    level = ml.level(lv)
    if kind == "standin":
        return StandinCoarse(level.coarse.Sc, omega)
    if lv == ml.L - 1:
        return ExactCoarse(level.coarse.Sc, ml.top_factor)
    if kind == "exact":
        return ExactCoarse(level.coarse.Sc)
    if kind == "multilevel":
        return MultilevelCoarse(ml, lv)
    raise ValueError(f"unknown coarse solver {kind!r}")


# BDDC ----------------------------------------------------------------------------

class HOperator(_Op):
    """``H = Psi M_c Psi^T + S_Delta^{-1}`` on the broken space ``W``."""

    def __init__(self, level: Level, coarse):
        self.level = level
        self.coarse = coarse
        self.Psi = level.coarse.Psi
        super().__init__(level.maps.nW)

    def _matvec(self, g):
        g = np.ravel(g)
        out = self.level.S_Delta_inv(g)
        if self.Psi.shape[1]:
            out += self.Psi @ self.coarse.matvec(self.Psi.T @ g)
        return out


class BddcPreconditioner(_Op):
    """BDDC for the interface problem: ``E H E^T`` (inexact if ``coarse`` is not exact)."""

    def __init__(self, level: Level, coarse):
        self.level = level
        self.h_op = HOperator(level, coarse)
        self.E = level.maps.E
        super().__init__(level.maps.nGamma)

    def _matvec(self, r):
        return self.E @ self.h_op.matvec(self.E.T @ np.ravel(r))


class BddcFullPreconditioner(_Op):
    """BDDC for ``A u = r`` on all dofs of a level.

    Interiors are condensed out of the residual, the interface correction
    ``E H E^T`` is applied, and interiors are recovered by a harmonic
    extension.
    """

    def __init__(self, level: Level, coarse):
        self.level = level
        self.interface = BddcPreconditioner(level, coarse)
        super().__init__(level.mesh.ndof)

    def _matvec(self, r):
        r_G, u_I0 = self.level.condense(np.ravel(r))
        w = self.interface.matvec(r_G) if len(r_G) else r_G
        return self.level.extend(w, u_I0)


# FETI-DP -------------------------------------------------------------------------

class FetiDpOperator(_Op):
    """``F = B H B^T`` (``F~`` when ``coarse`` is inexact)."""

    def __init__(self, level: Level, coarse):
        self.B = level.maps.B
        self.h_op = HOperator(level, coarse)
        super().__init__(level.maps.nLambda)

    def _matvec(self, lam):
        return self.B @ self.h_op.matvec(self.B.T @ np.ravel(lam))


class FetiDpSaddleSystem(_Op):
    """Saddle-point FETI-DP operator on ``(u_c, lambda)``::

        [[S_c,     Psi^T B^T         ],
         [B Psi,  -B S_Delta^{-1} B^T]]
    """

    def __init__(self, level: Level):
        self.level = level
        self.Sc = level.coarse.Sc
        self.Psi = level.coarse.Psi
        self.B = level.maps.B
        self.nc = self.Sc.shape[0]
        self.nl = self.B.shape[0]
        super().__init__(self.nc + self.nl)

    def split(self, x):
        x = np.ravel(x)
        return x[:self.nc], x[self.nc:]

    def _matvec(self, x):
        u, lam = self.split(x)
        Btl = self.B.T @ lam
        top = self.Sc @ u + self.Psi.T @ Btl
        bot = self.B @ (self.Psi @ u) - self.B @ self.level.S_Delta_inv(Btl)
        return np.concatenate([top, bot])

    def rhs(self, f_gamma):
        """``[Psi^T E^T f; -B S_Delta^{-1} E^T f]``."""
        g = self.level.maps.E.T @ f_gamma
        return np.concatenate([self.Psi.T @ g, -self.B @ self.level.S_Delta_inv(g)])


def assemble_saddle_system(level: Level, f_gamma):
    system = FetiDpSaddleSystem(level)
    return system, system.rhs(f_gamma)


class MFPreconditioner(_Op):
    """Block preconditioner for the saddle-point system.

    ``mode="triangular"`` is the lower block-triangular ``M_F``::

        u_c = M_c r_c;  x = B Psi u_c;  y = x - r_lambda;  lambda = M_D y

    ``mode="block_diagonal"`` returns ``(M_c r_c, -M_D r_lambda)``.
    Both ``M_c`` and ``M_D`` are wrapped in call counters.
    """

    def __init__(self, level: Level, coarse, mode="triangular", dirichlet=None):
        if mode not in ("triangular", "block_diagonal"):
            raise ValueError(f"unknown mode {mode!r}")
        self.mode = mode
        self.Mc = CountingOperator(coarse)
        self.MD = CountingOperator(dirichlet if dirichlet is not None else DirichletPreconditioner(level))
        self.BPsi = (level.maps.B @ level.coarse.Psi).tocsr()
        self.nc = level.coarse.Sc.shape[0]
        super().__init__(self.nc + level.maps.nLambda)

    def apply(self, r_c, r_lam):
        u_c = self.Mc.matvec(r_c)
        if self.mode == "block_diagonal":
            return u_c, -self.MD.matvec(r_lam)
        y = self.BPsi @ u_c - r_lam
        return u_c, self.MD.matvec(y)

    def _matvec(self, r):
        r = np.ravel(r)
        u_c, lam = self.apply(r[:self.nc], r[self.nc:])
        return np.concatenate([u_c, lam])


# right-hand sides and recovery -----------------------------------------------------

def condensed_rhs(level: Level, f):
    """Interface load ``f_Gamma = f_G - K_GI K_II^{-1} f_I`` and the interior part."""
    return level.condense(np.asarray(f, dtype=float))


def recover_solution(level: Level, u_c, lam, f_gamma, u_I0):
    """Interface field and full field from a saddle-point solution.

    Returns ``(w_hat, u)`` with ``w_hat`` on ``U_Gamma`` and ``u`` on all
    level-1 dofs.  ``u_I0 = K_II^{-1} f_I`` comes from :func:`condensed_rhs`.
    """
    maps, coarse = level.maps, level.coarse
    Psi_u = coarse.Psi @ u_c
    w_delta = level.S_Delta_inv(maps.E.T @ f_gamma - maps.B.T @ lam - level.S(Psi_u))
    w = Psi_u + w_delta
    w_hat = maps.E @ w
    return w_hat, level.extend(w_hat, u_I0), w


def feti_dp_full_matrix(level: Level, Phi=None):
    """Dense 4x4 block matrix in ``(w_Delta, mu, u_c, lambda)`` with a chosen coarse basis ``Phi``.

    Only meant as a direct-solve oracle on small problems.
    """
    S = level.schur.as_sparse().toarray()
    C = level.constraints.C.toarray()
    B = level.maps.B.toarray()
    if Phi is None:
        Phi = level.coarse.Psi.toarray()
    nW, nX, nc, nl = S.shape[0], C.shape[0], Phi.shape[1], B.shape[0]
    n = nW + nX + nc + nl
    K = np.zeros((n, n))
    a, b, c = nW, nW + nX, nW + nX + nc
    SPhi = S @ Phi
    K[:a, :a] = S
    K[:a, a:b] = C.T
    K[:a, b:c] = SPhi
    K[:a, c:] = B.T
    K[a:b, :a] = C
    K[b:c, :a] = SPhi.T
    K[b:c, b:c] = Phi.T @ SPhi
    K[b:c, c:] = (B @ Phi).T
    K[c:, :a] = B
    K[c:, b:c] = B @ Phi
    return K, (a, b, c)
