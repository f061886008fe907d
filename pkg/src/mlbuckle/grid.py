"""Nested structured grids and the transfer operators between them.

Nodes are numbered column by column, ``node = i * (nely + 1) + j`` with ``i``
the x index and ``j`` the y index (y pointing up). Elements follow the same
pattern, ``e = ex * nely + ey``, so an element field reshapes to
``(nelx, nely)``. Level 0 is the finest grid.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatch, NonDivisibleDims


@dataclass(frozen=True, eq=False)
class GridLevel:
    """One structured 2D grid of square bilinear elements."""

    nelx: int
    nely: int
    h: float = 1.0
    fixed: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=np.int64))

    def __post_init__(self):
        if self.nelx < 1 or self.nely < 1:
            raise ValueError("a grid needs at least one element per direction")
        object.__setattr__(self, "fixed", np.unique(np.asarray(self.fixed, dtype=np.int64)))

    @property
    def num_elements(self) -> int:
        return self.nelx * self.nely

    @property
    def num_nodes(self) -> int:
        return (self.nelx + 1) * (self.nely + 1)

    @property
    def ndof(self) -> int:
        return 2 * self.num_nodes

    def node(self, i, j):
        return np.asarray(i) * (self.nely + 1) + np.asarray(j)

    @cached_property
    def free(self) -> np.ndarray:
        mask = np.ones(self.ndof, dtype=bool)
        mask[self.fixed] = False
        return np.flatnonzero(mask)

    @cached_property
    def fixed_mask(self) -> np.ndarray:
        mask = np.zeros(self.ndof, dtype=bool)
        mask[self.fixed] = True
        return mask

    @cached_property
    def edof(self) -> np.ndarray:
        """``(m, 8)`` global DOFs of each element, nodes counter-clockwise."""
        ex, ey = np.meshgrid(np.arange(self.nelx), np.arange(self.nely), indexing="ij")
        ex, ey = ex.ravel(), ey.ravel()
        n1 = self.node(ex, ey)
        n2 = self.node(ex + 1, ey)
        n3 = self.node(ex + 1, ey + 1)
        n4 = self.node(ex, ey + 1)
        nodes = np.stack([n1, n2, n3, n4], axis=1)
        out = np.empty((self.num_elements, 8), dtype=np.int64)
        out[:, 0::2] = 2 * nodes
        out[:, 1::2] = 2 * nodes + 1
        return out

    @cached_property
    def element_centers(self) -> np.ndarray:
        ex, ey = np.meshgrid(np.arange(self.nelx), np.arange(self.nely), indexing="ij")
        return np.stack([(ex.ravel() + 0.5) * self.h, (ey.ravel() + 0.5) * self.h], axis=1)

    @cached_property
    def node_coords(self) -> np.ndarray:
        i, j = np.meshgrid(np.arange(self.nelx + 1), np.arange(self.nely + 1), indexing="ij")
        return np.stack([i.ravel() * self.h, j.ravel() * self.h], axis=1)


def _prolongation_1d(nc: int) -> sp.csr_matrix:
    """Linear interpolation from ``nc + 1`` coarse nodes to ``2 nc + 1`` fine nodes."""
    rows, cols, vals = [], [], []
    for i in range(nc + 1):
        rows.append(2 * i)
        cols.append(i)
        vals.append(1.0)
    for i in range(nc):
        rows += [2 * i + 1, 2 * i + 1]
        cols += [i, i + 1]
        vals += [0.5, 0.5]
    return sp.csr_matrix((vals, (rows, cols)), shape=(2 * nc + 1, nc + 1))


def coarsen(level: GridLevel) -> GridLevel:
    """Half the element count; a coarse DOF is fixed when its coincident fine DOF is."""
    if level.nelx % 2 or level.nely % 2:
        raise NonDivisibleDims(f"cannot halve a {level.nelx}x{level.nely} grid")
    coarse = (level.nelx // 2, level.nely // 2)
    fnode = level.fixed // 2
    comp = level.fixed % 2
    fi, fj = np.divmod(fnode, level.nely + 1)
    on_coarse = (fi % 2 == 0) & (fj % 2 == 0)
    cnode = (fi[on_coarse] // 2) * (coarse[1] + 1) + fj[on_coarse] // 2
    return GridLevel(coarse[0], coarse[1], 2.0 * level.h, 2 * cnode + comp[on_coarse])


def prolongation_matrix(fine: GridLevel, coarse: GridLevel) -> sp.csr_matrix:
    """Bilinear DOF interpolation with zero rows/columns at fixed DOFs."""
    nodal = sp.kron(_prolongation_1d(coarse.nelx), _prolongation_1d(coarse.nely))
    P = sp.kron(nodal, sp.identity(2)).tocsr()
    keep_rows = sp.diags((~fine.fixed_mask).astype(float))
    keep_cols = sp.diags((~coarse.fixed_mask).astype(float))
    P = (keep_rows @ P @ keep_cols).tocsr()
    P.eliminate_zeros()
    return P


@dataclass(eq=False)
class GridHierarchy:
    """Fine-to-coarse list of grids with ``P[j]`` mapping level ``j+1`` to ``j``."""

    levels: list
    P: list

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def fine(self) -> GridLevel:
        return self.levels[0]

    def restriction(self, j: int) -> sp.csr_matrix:
        # variational pair: R = P^T (restriction scaling constant 1)
        return self.P[j].T.tocsr()

    def prolongate(self, j: int, V: np.ndarray) -> np.ndarray:
        return prolongate(self, j, V)

    def restrict(self, j: int, V: np.ndarray) -> np.ndarray:
        V = np.asarray(V)
        if V.shape[0] != self.levels[j].ndof:
            raise DimensionMismatch(
                f"restriction from level {j} expects {self.levels[j].ndof} rows, got {V.shape[0]}"
            )
        return self.P[j].T @ V

    def galerkin_project(self, j: int, A) -> sp.csr_matrix:
        return galerkin_project(self, j, A)

    def project_to(self, level: int, A) -> list:
        """Galerkin-project a fine operator down to ``level``; returns all levels."""
        ops = [sp.csr_matrix(A)]
        for j in range(level):
            ops.append(galerkin_project(self, j, ops[-1]))
        return ops


def build_hierarchy(fine_dims, num_levels: int, h: float = 1.0, fixed=None) -> GridHierarchy:
    """Nested grids obtained by repeated halving of ``fine_dims = (nelx, nely)``.

    Raises
    ------
    NonDivisibleDims
        If either count is not divisible by ``2**(num_levels - 1)``.
    """
    nelx, nely = (int(d) for d in fine_dims)
    if num_levels < 1:
        raise ValueError("num_levels must be >= 1")
    div = 2 ** (num_levels - 1)
    if nelx % div or nely % div:
        raise NonDivisibleDims(
            f"{nelx}x{nely} is not divisible by {div}; pad the grid or use fewer levels"
        )
    levels = [GridLevel(nelx, nely, h, np.zeros(0, np.int64) if fixed is None else fixed)]
    P = []
    for _ in range(num_levels - 1):
        coarse = coarsen(levels[-1])
        P.append(prolongation_matrix(levels[-1], coarse))
        levels.append(coarse)
    return GridHierarchy(levels, P)


def prolongate(hier: GridHierarchy, j: int, V: np.ndarray) -> np.ndarray:
    """Interpolate a (multi)vector from level ``j + 1`` to level ``j``."""
    V = np.asarray(V)
    expected = hier.levels[j + 1].ndof
    if V.shape[0] != expected:
        raise DimensionMismatch(f"level {j + 1} has {expected} DOFs, got {V.shape[0]}")
    return hier.P[j] @ V


def galerkin_project(hier: GridHierarchy, j: int, A) -> sp.csr_matrix:
    """``P^T A P`` onto level ``j + 1``; fixed rows and columns come out zero."""
    n = hier.levels[j].ndof
    if A.shape != (n, n):
        raise DimensionMismatch(f"operator shape {A.shape} does not match level {j} ({n} DOFs)")
    P = hier.P[j]
    Ac = (P.T @ (sp.csr_matrix(A) @ P)).tocsr()
    # round-off symmetrization; the product is symmetric in exact arithmetic
    Ac = (0.5 * (Ac + Ac.T)).tocsr()
    Ac.sort_indices()
    return Ac


def constrain(A, fixed, diag: float) -> sp.csr_matrix:
    """Zero fixed rows/columns and put ``diag`` on their diagonal."""
    A = sp.csr_matrix(A)
    n = A.shape[0]
    keep = np.ones(n)
    keep[fixed] = 0.0
    D = sp.diags(keep)
    out = D @ A @ D
    if diag != 0.0:
        fix = np.zeros(n)
        fix[fixed] = diag
        out = out + sp.diags(fix)
    out = sp.csr_matrix(out)
    out.eliminate_zeros()
    out.sort_indices()
    return out
