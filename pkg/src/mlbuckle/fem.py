"""Incompatible-mode quadrilaterals, SIMP interpolation and global assembly.

The element is the 4-node bilinear quadrilateral enriched with the Wilson
bubble modes ``1 - xi**2`` and ``1 - eta**2`` for each displacement
component. The four internal DOFs are condensed once on the unit-modulus
element, which is exact because the material is constant per element.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
import scipy.sparse as sp

from .errors import MissingDisplacement, OutOfRangeDensity
from .grid import GridLevel, constrain

_GAUSS = np.array([-1.0, 1.0]) / np.sqrt(3.0)
_XI_NODES = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]], dtype=float)


@dataclass(frozen=True)
class MaterialModel:
    """Young's moduli of solid/void/passive material, Poisson ratio and SIMP exponent."""

    E1: float = 1.0
    E0: float = 1e-6
    Ep: float = 1e3
    nu: float = 0.3
    p: float = 3.0

    def __post_init__(self):
        if not self.E1 >= self.E0 > 0:
            raise ValueError("need E1 >= E0 > 0")
        if not 1.0 <= self.p <= 6.0:
            raise ValueError("penalization p must lie in [1, 6]")


def _check_density(x):
    x = np.asarray(x, dtype=float)
    if np.any(x < 0.0) or np.any(x > 1.0) or not np.all(np.isfinite(x)):
        raise OutOfRangeDensity("physical densities must lie in [0, 1]")
    return x


def interpolate_stiffness(x, mat: MaterialModel):
    """``E0 + x**p (E1 - E0)``."""
    x = _check_density(x)
    return mat.E0 + x**mat.p * (mat.E1 - mat.E0)


def interpolate_stress_stiffness(x, mat: MaterialModel):
    """``x**p E1``; void carries no stress."""
    x = _check_density(x)
    return x**mat.p * mat.E1


def d_interpolate_stiffness(x, mat: MaterialModel):
    x = np.asarray(x, dtype=float)
    return mat.p * x ** (mat.p - 1.0) * (mat.E1 - mat.E0)


def d_interpolate_stress_stiffness(x, mat: MaterialModel):
    x = np.asarray(x, dtype=float)
    return mat.p * x ** (mat.p - 1.0) * mat.E1


def plane_stress(nu: float) -> np.ndarray:
    return np.array([[1.0, nu, 0.0], [nu, 1.0, 0.0], [0.0, 0.0, 0.5 * (1.0 - nu)]]) / (1.0 - nu**2)


def _shape_gradients(xi, eta, h):
    """Physical gradients of the 4 bilinear and 2 bubble functions, each ``(2, k)``."""
    dN = np.empty((2, 4))
    for a, (xa, ya) in enumerate(_XI_NODES):
        dN[0, a] = 0.25 * xa * (1.0 + ya * eta)
        dN[1, a] = 0.25 * ya * (1.0 + xa * xi)
    dP = np.array([[-2.0 * xi, 0.0], [0.0, -2.0 * eta]])
    scale = 2.0 / h
    return dN * scale, dP * scale


def _strain_ops(dN, dP):
    Bc = np.zeros((3, 8))
    Bc[0, 0::2] = dN[0]
    Bc[1, 1::2] = dN[1]
    Bc[2, 0::2] = dN[1]
    Bc[2, 1::2] = dN[0]
    # internal DOF order: (u, v) of bubble 1, then (u, v) of bubble 2
    Bi = np.zeros((3, 4))
    Bi[0, 0::2] = dP[0]
    Bi[1, 1::2] = dP[1]
    Bi[2, 0::2] = dP[1]
    Bi[2, 1::2] = dP[0]
    return Bc, Bi


def _gradient_ops(dN, dP):
    """Gradients of u and v, ``(2, 8)`` and ``(2, 4)`` blocks per component."""
    Gc_u = np.zeros((2, 8))
    Gc_v = np.zeros((2, 8))
    Gc_u[:, 0::2] = dN
    Gc_v[:, 1::2] = dN
    Gi_u = np.zeros((2, 4))
    Gi_v = np.zeros((2, 4))
    Gi_u[:, 0::2] = dP
    Gi_v[:, 1::2] = dP
    return Gc_u, Gc_v, Gi_u, Gi_v


@dataclass(frozen=True, eq=False)
class ElementKernel:
    """Unit-modulus matrices of the condensed incompatible element.

    ``G_e0[u_e] = sxx * Mxx + syy * Myy + sxy * Mxy`` with ``(sxx, syy, sxy) = S0 @ u_e``.
    """

    Ke0: np.ndarray
    Kq4: np.ndarray
    S0: np.ndarray
    Mxx: np.ndarray
    Myy: np.ndarray
    Mxy: np.ndarray
    T: np.ndarray
    h: float
    nu: float

    def stress(self, u_e):
        """Unit-modulus centroid stresses for one or many ``(.., 8)`` displacement rows."""
        return np.asarray(u_e) @ self.S0.T

    def stress_stiffness(self, u_e) -> np.ndarray:
        s = self.stress(u_e)
        return s[0] * self.Mxx + s[1] * self.Myy + s[2] * self.Mxy


@lru_cache(maxsize=16)
def element_kernel(nu: float = 0.3, h: float = 1.0) -> ElementKernel:
    D = plane_stress(nu)
    w = (h / 2.0) ** 2
    Kcc = np.zeros((8, 8))
    Kci = np.zeros((8, 4))
    Kii = np.zeros((4, 4))
    gauss = [(xi, eta) for xi in _GAUSS for eta in _GAUSS]
    for xi, eta in gauss:
        Bc, Bi = _strain_ops(*_shape_gradients(xi, eta, h))
        Kcc += Bc.T @ D @ Bc * w
        Kci += Bc.T @ D @ Bi * w
        Kii += Bi.T @ D @ Bi * w
    T = -np.linalg.solve(Kii, Kci.T)
    Ke0 = Kcc + Kci @ T
    Ke0 = 0.5 * (Ke0 + Ke0.T)

    Bc0, Bi0 = _strain_ops(*_shape_gradients(0.0, 0.0, h))
    S0 = D @ (Bc0 + Bi0 @ T)

    Mxx = np.zeros((8, 8))
    Myy = np.zeros((8, 8))
    Mxy = np.zeros((8, 8))
    for xi, eta in gauss:
        Gc_u, Gc_v, Gi_u, Gi_v = _gradient_ops(*_shape_gradients(xi, eta, h))
        Hu = Gc_u + Gi_u @ T
        Hv = Gc_v + Gi_v @ T
        for H in (Hu, Hv):
            Mxx += np.outer(H[0], H[0]) * w
            Myy += np.outer(H[1], H[1]) * w
            Mxy += (np.outer(H[0], H[1]) + np.outer(H[1], H[0])) * w
    return ElementKernel(Ke0, Kcc, S0, Mxx, Myy, Mxy, T, h, nu)


def element_stress_stiffness(u_e, kernel: ElementKernel) -> np.ndarray:
    """Unit-modulus stress stiffness of one element for displacements ``u_e``."""
    return kernel.stress_stiffness(np.asarray(u_e, dtype=float))


@dataclass(eq=False)
class OperatorPair:
    """Constrained stiffness ``K`` and (optional) stress stiffness ``G`` on one grid."""

    K: sp.csr_matrix
    G: sp.csr_matrix | None = None


class Assembler:
    """Scatter of per-element 8x8 blocks into a fixed CSR pattern."""

    def __init__(self, level: GridLevel):
        self.level = level
        edof = level.edof
        rows = np.repeat(edof, 8, axis=1).ravel()
        cols = np.tile(edof, (1, 8)).ravel()
        n = level.ndof
        key = rows * n + cols
        uniq, inverse = np.unique(key, return_inverse=True)
        self._slot = inverse.ravel()
        r, c = np.divmod(uniq, n)
        indptr = np.zeros(n + 1, dtype=np.int64)
        np.add.at(indptr, r + 1, 1)
        self._indptr = np.cumsum(indptr)
        self._indices = c
        self._nnz = uniq.size

    def __call__(self, blocks) -> sp.csr_matrix:
        """``blocks`` has shape ``(m, 8, 8)`` or ``(m, 64)``."""
        data = np.bincount(self._slot, weights=np.asarray(blocks).ravel(), minlength=self._nnz)
        n = self.level.ndof
        return sp.csr_matrix((data, self._indices.copy(), self._indptr.copy()), shape=(n, n))


class FEModel:
    """Plane-stress model on one structured grid.

    Parameters
    ----------
    level : GridLevel
        Grid carrying the fixed-DOF set.
    material : MaterialModel
    passive_solid : array of bool, optional
        Elements that always carry modulus ``Ep`` in both ``K`` and ``G``.
    """

    def __init__(self, level: GridLevel, material: MaterialModel, passive_solid=None):
        self.level = level
        self.material = material
        self.kernel = element_kernel(material.nu, level.h)
        self.assembler = Assembler(level)
        m = level.num_elements
        self.passive_solid = (
            np.zeros(m, dtype=bool) if passive_solid is None else np.asarray(passive_solid, bool)
        )

    def moduli(self, x_phys):
        Ek = interpolate_stiffness(x_phys, self.material)
        Es = interpolate_stress_stiffness(x_phys, self.material)
        Ek = np.where(self.passive_solid, self.material.Ep, Ek)
        Es = np.where(self.passive_solid, self.material.Ep, Es)
        return Ek, Es

    def dmoduli(self, x_phys):
        """Derivatives of ``(E_kappa, E_sigma)``; zero on passive elements."""
        dEk = d_interpolate_stiffness(x_phys, self.material)
        dEs = d_interpolate_stress_stiffness(x_phys, self.material)
        return np.where(self.passive_solid, 0.0, dEk), np.where(self.passive_solid, 0.0, dEs)

    def element_displacements(self, u) -> np.ndarray:
        """``(m, 8)`` or ``(m, 8, k)`` gather of global vectors."""
        return np.asarray(u)[self.level.edof]

    def element_stresses(self, u) -> np.ndarray:
        """Unit-modulus centroid stresses, ``(m, 3)``."""
        return self.element_displacements(u) @ self.kernel.S0.T

    def stiffness(self, x_phys) -> sp.csr_matrix:
        Ek, _ = self.moduli(x_phys)
        blocks = Ek[:, None] * self.kernel.Ke0.ravel()[None, :]
        return constrain(self.assembler(blocks), self.level.fixed, 1.0)

    def stress_stiffness(self, x_phys, u) -> sp.csr_matrix:
        _, Es = self.moduli(x_phys)
        s = self.element_stresses(u) * Es[:, None]
        k = self.kernel
        blocks = (
            s[:, 0, None] * k.Mxx.ravel()[None, :]
            + s[:, 1, None] * k.Myy.ravel()[None, :]
            + s[:, 2, None] * k.Mxy.ravel()[None, :]
        )
        return constrain(self.assembler(blocks), self.level.fixed, 0.0)

    def assemble(self, x_phys, u=None, with_G: bool = False) -> OperatorPair:
        if with_G and u is None:
            raise MissingDisplacement("G[x, u] needs the equilibrium displacement u")
        K = self.stiffness(x_phys)
        G = self.stress_stiffness(x_phys, u) if u is not None else None
        return OperatorPair(K, G)

    # element-wise bilinear forms used by sensitivities and diagnostics

    def element_energy(self, a, b=None) -> np.ndarray:
        """``a_e^T Ke0 b_e`` per element (unit modulus); columns summed if 2D."""
        ae = self.element_displacements(a)
        be = ae if b is None else self.element_displacements(b)
        if ae.ndim == 2:
            return np.einsum("ei,ij,ej->e", ae, self.kernel.Ke0, be)
        return np.einsum("eik,ij,ejk->ek", ae, self.kernel.Ke0, be)

    def element_geometric_energy(self, u, phi) -> np.ndarray:
        """``phi_e^T G_e0[u_e] phi_e`` per element (unit modulus)."""
        s = self.element_stresses(u)
        pe = self.element_displacements(phi)
        k = self.kernel
        if pe.ndim == 2:
            qxx = np.einsum("ei,ij,ej->e", pe, k.Mxx, pe)
            qyy = np.einsum("ei,ij,ej->e", pe, k.Myy, pe)
            qxy = np.einsum("ei,ij,ej->e", pe, k.Mxy, pe)
            return s[:, 0] * qxx + s[:, 1] * qyy + s[:, 2] * qxy
        qxx = np.einsum("eik,ij,ejk->ek", pe, k.Mxx, pe)
        qyy = np.einsum("eik,ij,ejk->ek", pe, k.Myy, pe)
        qxy = np.einsum("eik,ij,ejk->ek", pe, k.Mxy, pe)
        return s[:, 0, None] * qxx + s[:, 1, None] * qyy + s[:, 2, None] * qxy

    def geometric_quadratics(self, phi) -> np.ndarray:
        """``(m, 3[, k])`` values ``phi_e^T M_c phi_e`` for c in (xx, yy, xy)."""
        pe = self.element_displacements(phi)
        k = self.kernel
        sig = "ei,ij,ej->e" if pe.ndim == 2 else "eik,ij,ejk->ek"
        return np.stack(
            [np.einsum(sig, pe, M, pe) for M in (k.Mxx, k.Myy, k.Mxy)], axis=1
        )


def assemble(x_phys, model: FEModel, u=None, with_G: bool = False) -> OperatorPair:
    """Functional form of :meth:`FEModel.assemble`."""
    return model.assemble(x_phys, u, with_G)
