"""Q1 finite elements for the Poisson problem on the unit square with zero Dirichlet data."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

__all__ = [
    "StructuredGrid",
    "DofMap",
    "AssembledProblem",
    "q1_element_stiffness",
    "q1_element_load",
    "assemble_global",
    "assemble_subdomain",
]


@dataclass(frozen=True)
class StructuredGrid:
    """Uniform ``n x n`` grid of square elements; node ``(i, j)`` sits at ``(i h, j h)``."""

    n: int

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("need at least one element per side")

    @property
    def h(self) -> float:
        return 1.0 / self.n

    @property
    def num_nodes(self) -> int:
        return (self.n + 1) ** 2

    def node(self, i, j):
        return np.asarray(j) * (self.n + 1) + np.asarray(i)

    def element_nodes(self, ex, ey):
        """Counter-clockwise corner nodes of element ``(ex, ey)``."""
        return self.node(np.array([ex, ex + 1, ex + 1, ex]), np.array([ey, ey, ey + 1, ey + 1]))

    def is_boundary(self, node):
        i = np.asarray(node) % (self.n + 1)
        j = np.asarray(node) // (self.n + 1)
        return (i == 0) | (j == 0) | (i == self.n) | (j == self.n)


@dataclass(frozen=True)
class DofMap:
    """Node to free-dof numbering; Dirichlet nodes map to ``-1``."""

    node_to_dof: np.ndarray
    dof_to_node: np.ndarray

    @classmethod
    def for_grid(cls, grid: StructuredGrid) -> "DofMap":
        nodes = np.arange(grid.num_nodes)
        free = ~grid.is_boundary(nodes)
        node_to_dof = np.full(grid.num_nodes, -1, dtype=np.int64)
        node_to_dof[free] = np.arange(free.sum())
        return cls(node_to_dof, nodes[free])

    @property
    def ndof(self) -> int:
        return len(self.dof_to_node)


@dataclass
class AssembledProblem:
    grid: StructuredGrid
    dofmap: DofMap
    K: sp.csr_matrix
    f: np.ndarray

    @property
    def ndof(self) -> int:
        # all grid nodes, Dirichlet included
        return self.grid.num_nodes

    def dof_coords(self) -> np.ndarray:
        """Integer lattice coordinates ``(i, j)`` of the free dofs."""
        nodes = self.dofmap.dof_to_node
        return np.stack([nodes % (self.grid.n + 1), nodes // (self.grid.n + 1)], axis=1)


def q1_element_stiffness() -> np.ndarray:
    """Laplace stiffness of a bilinear square element (independent of its size in 2D).

    Nodes are ordered counter-clockwise from the lower-left corner.
    """
    g = 1.0 / np.sqrt(3.0)
    pts = [(-g, -g), (g, -g), (g, g), (-g, g)]
    sx = np.array([-1.0, 1.0, 1.0, -1.0])
    sy = np.array([-1.0, -1.0, 1.0, 1.0])
    ke = np.zeros((4, 4))
    for xi, eta in pts:
        # reference square [-1, 1]^2, Jacobian cancels for the Laplacian in 2D
        dx = 0.25 * sx * (1.0 + sy * eta)
        dy = 0.25 * sy * (1.0 + sx * xi)
        ke += np.outer(dx, dx) + np.outer(dy, dy)
    return ke


def q1_element_load(h: float, load: float = 1.0) -> np.ndarray:
    """Consistent load of a constant source on one element: ``load h^2 / 4`` per node."""
    return np.full(4, load * h * h / 4.0)


def assemble_global(grid: StructuredGrid, load: float = 1.0) -> AssembledProblem:
    """Assemble stiffness and load over the free dofs of ``grid``."""
    if grid.n < 2:
        raise ValueError("need n >= 2 for an interior dof")
    dofmap = DofMap.for_grid(grid)
    ke = q1_element_stiffness()
    fe = q1_element_load(grid.h, load)
    ex, ey = np.meshgrid(np.arange(grid.n), np.arange(grid.n), indexing="ij")
    ex, ey = ex.ravel(), ey.ravel()
    conn = dofmap.node_to_dof[grid.element_nodes(ex, ey)].T  # (nelem, 4)
    rows = np.repeat(conn, 4, axis=1).ravel()
    cols = np.tile(conn, (1, 4)).ravel()
    vals = np.tile(ke.ravel(), len(conn))
    keep = (rows >= 0) & (cols >= 0)
    n = dofmap.ndof
    K = sp.csr_matrix((vals[keep], (rows[keep], cols[keep])), shape=(n, n))
    K.sum_duplicates()
    f = np.zeros(n)
    c = conn.ravel()
    np.add.at(f, c[c >= 0], np.tile(fe, len(conn))[c >= 0])
    return AssembledProblem(grid, dofmap, K, f)


def assemble_subdomain(grid: StructuredGrid, box, dofmap: DofMap | None = None):
    """Local stiffness of an axis-aligned block of elements.

    Parameters
    ----------
    box : (ex0, ey0, ex1, ey1)
        Element index range ``[ex0, ex1) x [ey0, ey1)``.

    Returns
    -------
    Ks : ndarray
        Dense stiffness over the non-Dirichlet nodes of the block.
    local_to_global : ndarray
        Global free-dof index of each local row.
    """
    if dofmap is None:
        dofmap = DofMap.for_grid(grid)
    ex0, ey0, ex1, ey1 = box
    ex, ey = np.meshgrid(np.arange(ex0, ex1), np.arange(ey0, ey1), indexing="ij")
    conn = dofmap.node_to_dof[grid.element_nodes(ex.ravel(), ey.ravel())].T
    local_to_global = np.unique(conn[conn >= 0])
    pos = np.searchsorted(local_to_global, conn)
    ke = q1_element_stiffness()
    m = len(local_to_global)
    Ks = np.zeros((m, m))
    for e in range(len(conn)):
        keep = conn[e] >= 0
        idx = pos[e][keep]
        Ks[np.ix_(idx, idx)] += ke[np.ix_(keep, keep)]
    return Ks, local_to_global
