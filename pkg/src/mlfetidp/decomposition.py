"""Uniform multilevel decompositions and the interface operators of one level.

Coordinates are stored *doubled* (in units of h/2) so that edge midpoints of
coarse levels stay integral.  A level-``l`` problem is described by a
:class:`LevelMesh`: its "elements" are Q1 elements for ``l = 1`` and the
level-``(l-1)`` subdomains (with their coarse matrices) above that.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import prod

import numpy as np
import scipy.sparse as sp

__all__ = [
    "IncompatibleGrid",
    "ConstructionFailed",
    "DecompositionHierarchy",
    "LevelMesh",
    "InterfaceClassification",
    "InterfaceMaps",
    "build_hierarchy",
    "fine_level_mesh",
    "classify_interface",
    "build_interface_maps",
]


class IncompatibleGrid(ValueError):
    pass


class ConstructionFailed(RuntimeError):
    pass


@dataclass(frozen=True)
class DecompositionHierarchy:
    """Nested uniform partitions of an ``n x n`` element grid.

    ``ratios[l-1]`` is the number of level-``(l-1)`` cells along a
    level-``l`` subdomain side; level 0 cells are the finite elements.
    """

    n: int
    ratios: tuple

    @property
    def L(self) -> int:
        return len(self.ratios) + 1

    def H(self, level: int) -> int:
        """Subdomain side length at ``level`` in fine elements (``H(0) = 1``)."""
        return prod(self.ratios[:level])

    def side(self, level: int) -> int:
        """Number of level-``level`` subdomains along one side of the domain."""
        return self.n // self.H(level)

    def num_subdomains(self, level: int) -> int:
        return self.side(level) ** 2

    @property
    def nsub(self) -> str:
        return "/".join(str(self.num_subdomains(lv)) for lv in range(1, self.L))

    @property
    def ndof(self) -> int:
        return (self.n + 1) ** 2

    def subdomain_of(self, level: int, elem_pos) -> np.ndarray:
        """Level-``level`` subdomain index of elements at grid positions ``elem_pos``."""
        r = self.ratios[level - 1]
        pos = np.asarray(elem_pos) // r
        return pos[:, 1] * self.side(level) + pos[:, 0]

    def position(self, level: int, s):
        side = self.side(level)
        return np.asarray(s) % side, np.asarray(s) // side

    def box(self, level: int, s):
        """``(x0, y0, x1, y1)`` of subdomain ``s`` in fine element units."""
        sx, sy = self.position(level, s)
        H = self.H(level)
        return (sx * H, sy * H, (sx + 1) * H, (sy + 1) * H)


def build_hierarchy(L: int, ratios, n: int | None = None) -> DecompositionHierarchy:
    """Uniform hierarchy with ``L - 1`` decomposition levels.

    By default the top level consists of ``ratios[-1] x ratios[-1]``
    subdomains, so ``n = prod(ratios) * ratios[-1]``; e.g. ``L=3, ratios=[3, 3]``
    gives ``n = 27``, 81 level-1 and 9 level-2 subdomains.
    """
    ratios = tuple(int(r) for r in ratios)
    if L < 2 or len(ratios) != L - 1:
        raise ValueError(f"L={L} needs exactly L-1 ratios, got {len(ratios)}")
    if any(r < 2 for r in ratios):
        raise ValueError("every coarsening ratio must be at least 2")
    if n is None:
        n = prod(ratios) * ratios[-1]
    if n % prod(ratios):
        raise IncompatibleGrid(f"n={n} is not divisible by prod(ratios)={prod(ratios)}")
    return DecompositionHierarchy(int(n), ratios)


@dataclass
class LevelMesh:
    """A level problem: dofs with coordinates and element matrices on a square grid of elements."""

    level: int
    coords: np.ndarray  # (ndof, 2), doubled fine units
    elem_dofs: list
    elem_mats: list
    elem_pos: np.ndarray  # (nelem, 2) position in this level's element grid
    kinds: np.ndarray | None = None

    @property
    def ndof(self) -> int:
        return len(self.coords)

    def assemble(self) -> sp.csr_matrix:
        rows, cols, vals = [], [], []
        for d, m in zip(self.elem_dofs, self.elem_mats):
            rows.append(np.repeat(d, len(d)))
            cols.append(np.tile(d, len(d)))
            vals.append(np.asarray(m).ravel())
        n = self.ndof
        if not rows:
            return sp.csr_matrix((n, n))
        A = sp.csr_matrix(
            (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n)
        )
        A.sum_duplicates()
        return A


def fine_level_mesh(problem) -> LevelMesh:
    """Level-1 mesh of Q1 elements with Dirichlet nodes dropped from each element."""
    from .fem import q1_element_stiffness

    grid = problem.grid
    ke = q1_element_stiffness()
    dofs, mats, pos = [], [], []
    for ey in range(grid.n):
        for ex in range(grid.n):
            conn = problem.dofmap.node_to_dof[grid.element_nodes(ex, ey)]
            keep = conn >= 0
            dofs.append(conn[keep])
            mats.append(ke[np.ix_(keep, keep)])
            pos.append((ex, ey))
    coords = 2 * problem.dof_coords()
    kinds = np.full(len(coords), "node")
    return LevelMesh(1, coords, dofs, mats, np.array(pos), kinds)


@dataclass
class InterfaceClassification:
    """Ownership of the dofs of one level by the subdomains of that level."""

    level: int
    nsub: int
    multiplicity: np.ndarray
    elem_sub: np.ndarray
    sub_elems: list
    sub_dofs: list  # sorted global dofs of each subdomain
    sub_interface: list  # sorted global interface dofs of each subdomain
    sub_interior: list
    interface_dofs: np.ndarray
    owner_ptr: np.ndarray  # CSR-like owners of interface dofs (ordered as interface_dofs)
    owner_idx: np.ndarray

    def owners(self, k: int) -> np.ndarray:
        """Sorted owning subdomains of the ``k``-th interface dof."""
        return self.owner_idx[self.owner_ptr[k]:self.owner_ptr[k + 1]]

    @property
    def interior_dofs(self) -> np.ndarray:
        """All interior dofs, grouped by subdomain."""
        if not self.sub_interior:
            return np.zeros(0, dtype=np.int64)
        return np.concatenate(self.sub_interior).astype(np.int64)


def classify_interface(hierarchy: DecompositionHierarchy, level: int, mesh: LevelMesh):
    """Split the dofs of ``mesh`` into subdomain interiors and the interface.

    A dof is an interface dof iff it belongs to elements of at least two
    subdomains.  Dirichlet nodes never appear (they are not dofs).
    """
    nsub = hierarchy.num_subdomains(level)
    elem_sub = hierarchy.subdomain_of(level, mesh.elem_pos)
    ndof = mesh.ndof
    sub_of_entry = np.concatenate(
        [np.full(len(d), s) for d, s in zip(mesh.elem_dofs, elem_sub)]
    ).astype(np.int64)
    dof_of_entry = np.concatenate(mesh.elem_dofs).astype(np.int64)
    pairs = np.unique(sub_of_entry * ndof + dof_of_entry)
    p_sub, p_dof = pairs // ndof, pairs % ndof
    multiplicity = np.bincount(p_dof, minlength=ndof)
    if np.any(multiplicity == 0):
        raise ConstructionFailed("some dof is not covered by any element")

    bounds = np.searchsorted(p_sub, np.arange(nsub + 1))
    is_iface = multiplicity >= 2
    sub_dofs, sub_interface, sub_interior = [], [], []
    for s in range(nsub):
        d = p_dof[bounds[s]:bounds[s + 1]]
        sub_dofs.append(d)
        sub_interface.append(d[is_iface[d]])
        sub_interior.append(d[~is_iface[d]])
    eorder = np.argsort(elem_sub, kind="stable")
    sub_elems = np.split(eorder, np.searchsorted(elem_sub[eorder], np.arange(1, nsub)))

    interface_dofs = np.flatnonzero(is_iface)
    order = np.lexsort((p_sub, p_dof))
    o_dof, o_sub = p_dof[order], p_sub[order]
    sel = is_iface[o_dof]
    owner_idx = o_sub[sel]
    owner_ptr = np.zeros(len(interface_dofs) + 1, dtype=np.int64)
    np.cumsum(multiplicity[interface_dofs], out=owner_ptr[1:])
    return InterfaceClassification(
        level, nsub, multiplicity, elem_sub, sub_elems, sub_dofs, sub_interface,
        sub_interior, interface_dofs, owner_ptr, owner_idx,
    )


@dataclass
class InterfaceMaps:
    """Operators between the broken space ``W``, the interface ``U_Gamma`` and multipliers.

    ``W`` stacks the interface dofs of every subdomain, subdomain by
    subdomain, each block sorted by global dof number.
    """

    R: sp.csr_matrix
    D_P: sp.dia_matrix
    E: sp.csr_matrix
    B: sp.csr_matrix
    B_D: sp.csr_matrix
    w_dof: np.ndarray
    w_sub: np.ndarray
    w_off: np.ndarray
    w_gamma: np.ndarray
    lambda_node: np.ndarray = field(repr=False)

    @property
    def nW(self) -> int:
        return len(self.w_dof)

    @property
    def nGamma(self) -> int:
        return self.R.shape[1]

    @property
    def nLambda(self) -> int:
        return self.B.shape[0]


def _bd_node_block(d):
    """Node block of ``B_D^T`` for the star pattern with weights ``d``."""
    m = len(d)
    Bn = np.zeros((m - 1, m))
    Bn[:, 0] = 1.0
    Bn[np.arange(m - 1), np.arange(1, m)] = -1.0
    G = Bn @ Bn.T
    if abs(np.linalg.det(G)) < 1e-12:
        raise ConstructionFailed(f"singular nodewise system for multiplicity {m}")
    P = np.eye(m) - np.outer(np.ones(m), d)
    return P @ Bn.T @ np.linalg.inv(G)


def build_interface_maps(cls: InterfaceClassification, weights=None) -> InterfaceMaps:
    """Restriction, averaging and jump operators for one level.

    Parameters
    ----------
    weights : ndarray, optional
        Entries of ``D_P`` for every copy in ``W``.  Defaults to multiplicity
        scaling ``1/m``.  Weights of the copies of each node must sum to one.
    """
    w_dof = np.concatenate(cls.sub_interface).astype(np.int64) if cls.nsub else np.zeros(0, np.int64)
    w_sub = np.concatenate(
        [np.full(len(d), s) for s, d in enumerate(cls.sub_interface)]
    ).astype(np.int64) if cls.nsub else np.zeros(0, np.int64)
    w_off = np.zeros(cls.nsub + 1, dtype=np.int64)
    np.cumsum([len(d) for d in cls.sub_interface], out=w_off[1:])
    nW = len(w_dof)
    nG = len(cls.interface_dofs)
    w_gamma = np.searchsorted(cls.interface_dofs, w_dof)

    R = sp.csr_matrix((np.ones(nW), (np.arange(nW), w_gamma)), shape=(nW, nG))
    if weights is None:
        weights = 1.0 / cls.multiplicity[w_dof]
    weights = np.asarray(weights, dtype=float)
    wsum = np.bincount(w_gamma, weights=weights, minlength=nG)
    if nG and np.abs(wsum - 1.0).max() > 1e-12:
        raise ConstructionFailed("weights of the copies of a node must sum to one")
    D_P = sp.diags(weights)
    E = (R.T @ D_P).tocsr()

    # copies of each interface node, in subdomain order
    order = np.lexsort((w_sub, w_gamma))
    first = np.ones(nW, dtype=bool)
    first[1:] = w_gamma[order][1:] != w_gamma[order][:-1]
    head = order[first]  # copy in the minimal owner, one per node
    node_of = w_gamma[order]
    others = order[~first]
    nL = len(others)
    lambda_node = node_of[~first]
    rows = np.concatenate([np.arange(nL), np.arange(nL)])
    cols = np.concatenate([head[lambda_node], others])
    vals = np.concatenate([np.ones(nL), -np.ones(nL)])
    B = sp.csr_matrix((vals, (rows, cols)), shape=(nL, nW))

    # nodewise generalized inverse
    start = np.flatnonzero(first)
    stop = np.append(start[1:], nW)
    cache = {}
    bd_rows, bd_cols, bd_vals = [], [], []
    row0 = 0
    for a, b in zip(start, stop):
        copies = order[a:b]
        m = len(copies)
        key = tuple(np.round(weights[copies], 14))
        blk = cache.get(key)
        if blk is None:
            blk = cache[key] = _bd_node_block(weights[copies])
        # blk is m x (m-1) = node block of B_D^T
        bd_rows.append(np.repeat(np.arange(row0, row0 + m - 1), m))
        bd_cols.append(np.tile(copies, m - 1))
        bd_vals.append(blk.T.ravel())
        row0 += m - 1
    if bd_rows:
        B_D = sp.csr_matrix(
            (np.concatenate(bd_vals), (np.concatenate(bd_rows), np.concatenate(bd_cols))),
            shape=(nL, nW),
        )
    else:
        B_D = sp.csr_matrix((nL, nW))
    B_D.eliminate_zeros()
    return InterfaceMaps(R, D_P, E, B, B_D, w_dof, w_sub, w_off, w_gamma, lambda_node)
