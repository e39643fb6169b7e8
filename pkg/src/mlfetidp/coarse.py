"""Constraints, energy-minimal coarse bases and coarse matrices for every level.

The coarse matrix of level ``l`` is the assembled operator of level ``l + 1``:
each level-``l`` subdomain turns into one level-``(l+1)`` element whose
matrix is its local coarse matrix ``Psi_i^T S_i Psi_i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .decomposition import (
    DecompositionHierarchy,
    InterfaceClassification,
    InterfaceMaps,
    LevelMesh,
    build_interface_maps,
    classify_interface,
    fine_level_mesh,
)
from .kernels import CholeskyBlocks, DenseBlocks, LUBlocks
from .linalg import NotSPD, Singular, cholesky_factor, symindef_factor

__all__ = [
    "SingularInterior",
    "Constraint",
    "ConstraintSet",
    "SchurComplementSet",
    "CoarseSpace",
    "Level",
    "Multilevel",
    "compute_schur_complements",
    "select_corners",
    "build_edge_averages",
    "make_constraint_set",
    "compute_coarse_basis",
    "coarse_level_mesh",
    "build_levels",
]

CONSTRAINT_SETS = ("c", "c+e")
EDGE_DOF_MODES = ("all", "edge")


class SingularInterior(NotSPD):
    """A subdomain interior block is not positive definite."""


@dataclass
class SchurComplementSet:
    """Dense Schur complements ``S_i`` of all subdomains of one level.

    ``interior`` holds batched Cholesky factors of the ``K_II`` blocks laid
    out like ``cls.interior_dofs``.
    """

    blocks: list
    interior: CholeskyBlocks
    S_apply: DenseBlocks

    def matvec(self, w):
        """Block-diagonal action of ``S`` on the broken space ``W``."""
        return self.S_apply.matvec(w)

    def as_sparse(self) -> sp.csr_matrix:
        return sp.block_diag(self.blocks, format="csr") if self.blocks else sp.csr_matrix((0, 0))


def compute_schur_complements(mesh: LevelMesh, cls: InterfaceClassification, backend=None):
    """``S_i = K_GG - K_GI K_II^{-1} K_IG`` for every subdomain (static condensation)."""
    blocks, chols = [], []
    for s in range(cls.nsub):
        dofs = cls.sub_dofs[s]
        Ks = np.zeros((len(dofs), len(dofs)))
        for e in cls.sub_elems[s]:
            idx = np.searchsorted(dofs, mesh.elem_dofs[e])
            Ks[np.ix_(idx, idx)] += mesh.elem_mats[e]
        gi = np.searchsorted(dofs, cls.sub_interface[s])
        ii = np.searchsorted(dofs, cls.sub_interior[s])
        Kgg = Ks[np.ix_(gi, gi)]
        if len(ii):
            Kii = Ks[np.ix_(ii, ii)]
            try:
                fac = cholesky_factor(Kii)
            except NotSPD as exc:
                raise SingularInterior(f"interior block of subdomain {s} is not SPD") from exc
            Kig = Ks[np.ix_(ii, gi)]
            S = Kgg - Kig.T @ fac.solve(Kig)
            chols.append(fac.lower)
        else:
            S = Kgg
            chols.append(np.zeros((0, 0)))
        blocks.append(0.5 * (S + S.T))
    return SchurComplementSet(blocks, CholeskyBlocks(chols, backend), DenseBlocks(blocks, backend))


@dataclass
class Constraint:
    """One coarse degree of freedom: a weighted functional of interface dofs.

    ``anchor`` is the doubled coordinate the dof inherits on the next level.
    """

    kind: str
    anchor: tuple
    dofs: np.ndarray
    weights: np.ndarray
    subdomains: np.ndarray


def _interface_index(cls, dofs):
    return np.searchsorted(cls.interface_dofs, dofs)


def select_corners(hierarchy: DecompositionHierarchy, level: int, mesh: LevelMesh, cls):
    """Interface dofs sitting on vertices of the level's subdomains."""
    step = 2 * hierarchy.H(level)
    xy = mesh.coords[cls.interface_dofs]
    hit = np.flatnonzero((xy[:, 0] % step == 0) & (xy[:, 1] % step == 0))
    out = []
    for k in hit:
        d = cls.interface_dofs[k]
        out.append(Constraint("corner", tuple(int(c) for c in mesh.coords[d]),
                              np.array([d]), np.ones(1), cls.owners(k).copy()))
    return out


def build_edge_averages(hierarchy: DecompositionHierarchy, level: int, mesh: LevelMesh, cls,
                        edge_dofs: str = "all"):
    """Arithmetic averages over the dofs shared by exactly two subdomains.

    On coarse levels an edge holds every dof of that level lying on it,
    whether it came from a corner or from an edge average below
    (``edge_dofs="all"``).  With ``edge_dofs="edge"`` only the dofs that
    came from edge averages are used there.
    """
    if edge_dofs not in EDGE_DOF_MODES:
        raise ValueError(f"edge_dofs must be one of {EDGE_DOF_MODES}, got {edge_dofs!r}")
    step = 2 * hierarchy.H(level)
    xy = mesh.coords[cls.interface_dofs]
    corner = (xy[:, 0] % step == 0) & (xy[:, 1] % step == 0)
    mult = np.diff(cls.owner_ptr)
    keep = (mult == 2) & ~corner
    if edge_dofs == "edge" and level > 1:
        keep &= mesh.kinds[cls.interface_dofs] == "edge"
    cand = np.flatnonzero(keep)
    if len(cand) == 0:
        return []
    pair = cls.owner_idx[cls.owner_ptr[cand]] * cls.nsub + cls.owner_idx[cls.owner_ptr[cand] + 1]
    order = np.argsort(pair, kind="stable")
    keys, starts = np.unique(pair[order], return_index=True)
    groups = np.split(order, starts[1:])
    H = hierarchy.H(level)
    out = []
    for key, grp in zip(keys, groups):
        s, t = divmod(int(key), cls.nsub)
        dofs = cls.interface_dofs[cand[grp]]
        sx, sy = hierarchy.position(level, s)
        tx, ty = hierarchy.position(level, t)
        if sx != tx:  # vertical shared side
            anchor = (2 * max(sx, tx) * H, (2 * sy + 1) * H)
        else:
            anchor = ((2 * sx + 1) * H, 2 * max(sy, ty) * H)
        out.append(Constraint("edge", (int(anchor[0]), int(anchor[1])), dofs,
                              np.full(len(dofs), 1.0 / len(dofs)), np.array([s, t])))
    return out


@dataclass
class ConstraintSet:
    """``C: W -> X`` and ``R_c: U_c -> X`` with rows grouped by subdomain."""

    C: sp.csr_matrix
    Rc: sp.csr_matrix
    x_off: np.ndarray
    kinds: np.ndarray  # per global coarse dof
    anchors: np.ndarray  # (nc, 2) doubled coordinates
    local_C: list
    local_cols: list  # global coarse dofs touched by each subdomain

    @property
    def nc(self) -> int:
        return self.Rc.shape[1]

    def scaled(self, alpha) -> "ConstraintSet":
        """Same constraints with every row of ``C`` and ``R_c`` multiplied by ``alpha``."""
        alpha = np.broadcast_to(np.asarray(alpha, dtype=float), (self.C.shape[0],))
        D = sp.diags(alpha)
        local = [alpha[self.x_off[s]:self.x_off[s + 1], None] * c for s, c in enumerate(self.local_C)]
        return ConstraintSet((D @ self.C).tocsr(), (D @ self.Rc).tocsr(), self.x_off,
                             self.kinds, self.anchors, local, self.local_cols)


def make_constraint_set(cls: InterfaceClassification, maps: InterfaceMaps, constraints):
    """Turn global constraints into the blockwise ``C`` and the coarse map ``R_c``."""
    constraints = sorted(constraints, key=lambda c: (c.anchor[1], c.anchor[0]))
    nc = len(constraints)
    per_sub = [[] for _ in range(cls.nsub)]
    for j, con in enumerate(constraints):
        for s in con.subdomains:
            per_sub[s].append(j)
    rows_c, cols_c, vals_c = [], [], []
    rows_r, cols_r = [], []
    x_off = np.zeros(cls.nsub + 1, dtype=np.int64)
    local_C, local_cols = [], []
    x = 0
    for s in range(cls.nsub):
        w0, w1 = maps.w_off[s], maps.w_off[s + 1]
        local_dofs = maps.w_dof[w0:w1]
        js = sorted(per_sub[s])
        Cs = np.zeros((len(js), w1 - w0))
        for r, j in enumerate(js):
            con = constraints[j]
            pos = np.searchsorted(local_dofs, con.dofs)
            Cs[r, pos] = con.weights
            rows_c.append(np.full(len(pos), x + r))
            cols_c.append(w0 + pos)
            vals_c.append(con.weights)
            rows_r.append(x + r)
            cols_r.append(j)
        local_C.append(Cs)
        local_cols.append(np.array(js, dtype=np.int64))
        x += len(js)
        x_off[s + 1] = x
    nW = maps.nW
    if rows_c:
        C = sp.csr_matrix((np.concatenate(vals_c), (np.concatenate(rows_c), np.concatenate(cols_c))),
                          shape=(x, nW))
    else:
        C = sp.csr_matrix((0, nW))
    Rc = sp.csr_matrix((np.ones(len(rows_r)), (rows_r, cols_r)), shape=(x, nc))
    kinds = np.array([c.kind for c in constraints], dtype=object)
    anchors = np.array([c.anchor for c in constraints], dtype=np.int64).reshape(nc, 2)
    return ConstraintSet(C, Rc, x_off, kinds, anchors, local_C, local_cols)


@dataclass
class CoarseSpace:
    """Energy-minimal coarse basis, coarse matrix and the constrained subdomain solver."""

    Psi: sp.csr_matrix  # |W| x |U_c|
    Sc: sp.csr_matrix  # assembled coarse matrix
    local_Psi: list
    local_Sc: list
    saddle: LUBlocks
    ext_w: np.ndarray  # position of each W entry inside the stacked saddle vectors
    ext_x: np.ndarray  # position of each constraint row

    def apply_S_Delta_inv(self, g):
        """First block of ``[[S, C^T], [C, 0]]^{-1} [g; 0]``, subdomain by subdomain."""
        ext = np.zeros(self.saddle.n)
        ext[self.ext_w] = g
        return self.saddle.solve(ext)[self.ext_w]

    def solve_saddle(self, g, r):
        """Full solution ``(w, mu)`` of ``[[S, C^T], [C, 0]] [w; mu] = [g; r]``."""
        ext = np.zeros(self.saddle.n)
        ext[self.ext_w] = g
        ext[self.ext_x] = r
        sol = self.saddle.solve(ext)
        return sol[self.ext_w], sol[self.ext_x]


def compute_coarse_basis(schur: SchurComplementSet, cons: ConstraintSet, maps: InterfaceMaps,
                         backend=None) -> CoarseSpace:
    """Solve ``[[S, C^T], [C, 0]] [Psi; Lambda] = [0; R_c]`` blockwise."""
    nsub = len(schur.blocks)
    factors, local_Psi, local_Sc = [], [], []
    ext_w, ext_x = [], []
    p_rows, p_cols, p_vals = [], [], []
    c_rows, c_cols, c_vals = [], [], []
    off = 0
    Rc = cons.Rc.tocsr()
    for s in range(nsub):
        S = schur.blocks[s]
        Cs = cons.local_C[s]
        nw, nx = S.shape[0], Cs.shape[0]
        K = np.zeros((nw + nx, nw + nx))
        K[:nw, :nw] = S
        K[nw:, :nw] = Cs
        K[:nw, nw:] = Cs.T
        try:
            fac = symindef_factor(K)
        except Singular as exc:
            raise Singular(f"constrained problem of subdomain {s} is singular") from exc
        factors.append((fac.lu, fac.piv))
        ext_w.append(off + np.arange(nw))
        ext_x.append(off + nw + np.arange(nx))
        off += nw + nx

        cols = cons.local_cols[s]
        x0, x1 = cons.x_off[s], cons.x_off[s + 1]
        Rloc = Rc[x0:x1][:, cols].toarray()
        rhs = np.vstack([np.zeros((nw, len(cols))), Rloc])
        psi = fac.solve(rhs)[:nw] if len(cols) else np.zeros((nw, 0))
        sc = psi.T @ S @ psi
        sc = 0.5 * (sc + sc.T)
        local_Psi.append(psi)
        local_Sc.append(sc)
        w0 = maps.w_off[s]
        p_rows.append(np.repeat(w0 + np.arange(nw), len(cols)))
        p_cols.append(np.tile(cols, nw))
        p_vals.append(psi.ravel())
        c_rows.append(np.repeat(cols, len(cols)))
        c_cols.append(np.tile(cols, len(cols)))
        c_vals.append(sc.ravel())
    nW, nc = maps.nW, cons.nc
    cat = lambda parts, dt=float: np.concatenate(parts).astype(dt) if parts else np.zeros(0, dt)  # noqa: E731
    Psi = sp.csr_matrix((cat(p_vals), (cat(p_rows, np.int64), cat(p_cols, np.int64))), shape=(nW, nc))
    Sc = sp.csr_matrix((cat(c_vals), (cat(c_rows, np.int64), cat(c_cols, np.int64))), shape=(nc, nc))
    Sc.sum_duplicates()
    return CoarseSpace(Psi, Sc, local_Psi, local_Sc, LUBlocks(factors, backend),
                       cat(ext_w, np.int64), cat(ext_x, np.int64))


def coarse_level_mesh(hierarchy, level: int, cons: ConstraintSet, coarse: CoarseSpace) -> LevelMesh:
    """Level-``(level+1)`` problem: subdomains become elements, coarse dofs become dofs."""
    nsub = len(coarse.local_Sc)
    sx, sy = hierarchy.position(level, np.arange(nsub))
    return LevelMesh(level + 1, cons.anchors.copy(), list(cons.local_cols), list(coarse.local_Sc),
                     np.stack([sx, sy], axis=1), cons.kinds.copy())


class Level:
    """All substructuring data of one decomposition level.

    ``A`` is the assembled matrix of this level (the fine stiffness for level
    1, the coarse matrix of the level below otherwise).
    """

    def __init__(self, hierarchy, level, mesh, constraints="c", backend=None, edge_dofs="all"):
        if constraints not in CONSTRAINT_SETS:
            raise ValueError(f"constraints must be one of {CONSTRAINT_SETS}, got {constraints!r}")
        self.hierarchy = hierarchy
        self.level = level
        self.mesh = mesh
        self.A = mesh.assemble()
        self.cls = classify_interface(hierarchy, level, mesh)
        self.maps = build_interface_maps(self.cls)
        self.schur = compute_schur_complements(mesh, self.cls, backend)
        cons = select_corners(hierarchy, level, mesh, self.cls)
        if constraints == "c+e":
            cons += build_edge_averages(hierarchy, level, mesh, self.cls, edge_dofs)
        self.constraints = make_constraint_set(self.cls, self.maps, cons)
        self.coarse = compute_coarse_basis(self.schur, self.constraints, self.maps, backend)

        self.gamma = self.cls.interface_dofs
        self.interior = self.cls.interior_dofs
        A = self.A.tocsr()
        self.A_IG = A[self.interior][:, self.gamma].tocsr()
        self.A_GI = self.A_IG.T.tocsr()

    # static condensation helpers -------------------------------------------------
    def solve_interior(self, r_I):
        return self.schur.interior.solve(r_I)

    def condense(self, r):
        """Interface residual ``r_G - A_GI A_II^{-1} r_I`` and the interior part ``A_II^{-1} r_I``."""
        u_I = self.solve_interior(r[self.interior])
        return r[self.gamma] - self.A_GI @ u_I, u_I

    def extend(self, w_gamma, u_I0):
        """Full vector with interface values ``w_gamma`` and discrete-harmonic interiors."""
        u = np.zeros(self.mesh.ndof)
        u[self.gamma] = w_gamma
        u[self.interior] = u_I0 - self.solve_interior(self.A_IG @ w_gamma)
        return u

    # operators on W -------------------------------------------------------------
    def S(self, w):
        return self.schur.matvec(w)

    def S_Delta_inv(self, g):
        return self.coarse.apply_S_Delta_inv(g)


class Multilevel:
    """Levels ``1..L-1`` of a decomposition plus the exact factor of the top coarse matrix."""

    def __init__(self, problem, hierarchy: DecompositionHierarchy, constraints="c", backend=None,
                 edge_dofs="all"):
        if problem.grid.n != hierarchy.n:
            raise ValueError("problem grid and hierarchy disagree on n")
        self.problem = problem
        self.hierarchy = hierarchy
        self.constraints = constraints
        self.levels = []
        mesh = fine_level_mesh(problem)
        for lv in range(1, hierarchy.L):
            level = Level(hierarchy, lv, mesh, constraints, backend, edge_dofs)
            self.levels.append(level)
            mesh = coarse_level_mesh(hierarchy, lv, level.constraints, level.coarse)
        top = self.levels[-1].coarse.Sc.toarray()
        self.top_factor = cholesky_factor(top)

    @property
    def L(self) -> int:
        return self.hierarchy.L

    def level(self, lv: int) -> Level:
        return self.levels[lv - 1]


def build_levels(problem, hierarchy, constraints="c", backend=None, edge_dofs="all") -> Multilevel:
    return Multilevel(problem, hierarchy, constraints, backend, edge_dofs)
