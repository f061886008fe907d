"""Design sensitivities of compliance, volume and buckling load factors.

For a pair ``(lam, phi)`` of ``(K + lam G) phi = 0`` with ``G = G[x, u(x)]``
and ``K u = f``::

    dlam/dx_e = -[phi^T (K' + lam dG/dx_e) phi - lam z^T K' u] / (phi^T G phi),
    K z = a,   a_k = phi^T (dG/du_k) phi.

The division by ``phi^T G phi`` makes the expression independent of the mode
scaling; for ``K``-normalized modes ``-1 / (phi^T G phi) = lam``.
"""
from __future__ import annotations

import csv
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import LinearOperator, minres, splu

from .errors import AdjointNotConverged, MaxIterationsExceeded
from .fem import FEModel
from .regularization import DesignField, DensityFilter, chain_rule

log = logging.getLogger(__name__)


@dataclass(eq=False)
class GradientBundle:
    """Gradients with respect to the active design variables."""

    dJ: np.ndarray | None
    dLambda: np.ndarray | None
    dV: np.ndarray
    reports: list = field(default_factory=list)


def compliance_gradient_phys(model: FEModel, x_phys, u) -> np.ndarray:
    """``dJ/dx_phys = -dE_kappa * u_e^T Ke0 u_e`` (elementwise, before the chain rule)."""
    dEk, _ = model.dmoduli(x_phys)
    return -dEk * model.element_energy(u)


def compliance_gradient(model: FEModel, field: DesignField, filt: DensityFilter, u) -> np.ndarray:
    return chain_rule(compliance_gradient_phys(model, field.x_phys, u), field, filt, design_only=True)


def volume_gradient(field: DesignField, filt: DensityFilter) -> np.ndarray:
    """Gradient of the mean physical density over the active elements."""
    active = field.active
    d = np.where(active, 1.0 / max(active.sum(), 1), 0.0)
    return chain_rule(d, field, filt, design_only=True)


def volume_fraction(field: DesignField) -> float:
    return float(field.x_phys[field.active].mean())


def assemble_dG_du_action(model: FEModel, x_phys, Phi) -> np.ndarray:
    """``a_k = phi^T (dG/du_k) phi`` for each column of ``Phi``.

    ``G`` is linear in ``u``, so the result does not depend on ``u``.
    Entries at fixed DOFs are zero.
    """
    Phi = np.asarray(Phi, dtype=float)
    one = Phi.ndim == 1
    if one:
        Phi = Phi[:, None]
    _, Es = model.moduli(x_phys)
    quad = model.geometric_quadratics(Phi)  # (m, 3, k)
    loc = np.einsum("ci,eck->eik", model.kernel.S0, quad) * Es[:, None, None]
    edof = model.level.edof
    n = model.level.ndof
    out = np.zeros((n, Phi.shape[1]))
    for k in range(Phi.shape[1]):
        out[:, k] = np.bincount(edof.ravel(), weights=loc[:, :, k].ravel(), minlength=n)
    out[model.level.fixed] = 0.0
    return out[:, 0] if one else out


def blf_gradients_phys(model: FEModel, x_phys, u, Phi, lam, G, solver, consistent: bool = False,
                       K=None, dy_dx=None, p_maxiter: int = 2000):
    """BLF gradients with respect to the physical densities, one column per mode.

    Parameters
    ----------
    solver : object with ``solve(F, phase)``
        ``K^{-1}`` for the adjoint block solve.
    consistent : bool
        Add the residual correction for approximate pairs; needs ``K`` and ``G``.
    dy_dx : callable, optional
        ``dy_dx(i) -> (n, m)`` explicit derivative of the residual ``y_i``
        held at fixed modes; omitted terms are taken as zero.
    """
    Phi = np.atleast_2d(np.asarray(Phi, dtype=float).T).T
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    dEk, dEs = model.dmoduli(x_phys)
    A = assemble_dG_du_action(model, x_phys, Phi)
    Z, rep = solver.solve(A, phase="ADJ")
    reports = [rep]
    if not rep.converged:
        raise AdjointNotConverged("adjoint block solve did not converge")
    kphi = model.element_energy(Phi)                     # (m, k)
    gphi = model.element_geometric_energy(u, Phi)        # (m, k)
    zku = model.element_energy(Z, np.repeat(u[:, None], Phi.shape[1], axis=1))
    GPhi = G @ Phi
    pgp = np.einsum("ij,ij->j", Phi, GPhi)
    bracket = dEk[:, None] * kphi + lam[None, :] * dEs[:, None] * gphi - lam[None, :] * dEk[:, None] * zku
    if not consistent:
        return -bracket / pgp[None, :], reports
    if K is None:
        raise ValueError("the consistent path needs K")
    out = np.empty_like(bracket)
    for i in range(Phi.shape[1]):
        phi = Phi[:, i]
        A_i = (K + lam[i] * G).tocsr()
        y = A_i @ phi
        p = _residual_adjoint(A_i, y, model.level.fixed, p_maxiter, K @ phi)
        if p is None:
            out[:, i] = -bracket[:, i] / pgp[i]
            continue
        corr = dEk * model.element_energy(p, phi) + lam[i] * dEs * _element_geometric_bilinear(model, u, p, phi)
        if dy_dx is not None:
            corr = corr - np.asarray(dy_dx(i)).T @ p
        den = 1.0 - p @ (G @ phi)
        out[:, i] = -(bracket[:, i] + corr) / (pgp[i] * den)
    return out, reports


def _residual_adjoint(A, y, fixed, maxiter, kphi=None):
    """``p = -2 A^{-1} y`` for the indefinite shifted operator; ``None`` on failure.

    ``A = K + lam G`` is singular along the mode itself when the pair is
    accurate. With ``kphi = K phi`` the solve is bordered by the gauge
    ``phi^T K p = 0``, which stays well posed and gives ``p -> 0`` as
    ``y -> 0``.
    """
    if not np.any(y):
        return np.zeros_like(y)
    free = np.setdiff1d(np.arange(A.shape[0]), fixed)
    Af = A[free][:, free]
    rhs = -2.0 * y[free]
    if kphi is not None:
        c = sp.csr_matrix(kphi[free][:, None])
        Af = sp.bmat([[Af, c], [c.T, None]])
        rhs = np.append(rhs, 0.0)
    Af = Af.tocsc()
    p = np.zeros_like(y)
    if free.size <= 50_000:
        try:
            p[free] = splu(Af).solve(rhs)[: free.size]
            return p
        except RuntimeError:
            log.warning("shifted operator singular; falling back to MINRES")
    sol, info = minres(Af, rhs, rtol=1e-10, maxiter=maxiter)
    if info != 0:
        log.warning("residual adjoint did not converge (info=%d); using the inconsistent gradient", info)
        return None
    p[free] = sol[: free.size]
    return p


def _element_geometric_bilinear(model: FEModel, u, a, b):
    """``a_e^T G_e0[u_e] b_e`` per element."""
    s = model.element_stresses(u)
    ae = model.element_displacements(a)
    be = model.element_displacements(b)
    k = model.kernel
    return sum(s[:, c] * np.einsum("ei,ij,ej->e", ae, M, be) for c, M in enumerate((k.Mxx, k.Myy, k.Mxy)))


def blf_gradients(model: FEModel, field: DesignField, filt: DensityFilter, u, Phi, lam, G, solver,
                  consistent: bool = False, K=None):
    """BLF gradients with respect to the active design variables, ``(m_active, k)``."""
    d, reports = blf_gradients_phys(model, field.x_phys, u, Phi, lam, G, solver, consistent, K)
    return chain_rule(d, field, filt, design_only=True), reports


# finite-difference verification


@dataclass
class GradientCheckRow:
    index: int
    analytic: float
    fd: float

    @property
    def rel_error(self) -> float:
        scale = max(abs(self.fd), abs(self.analytic), 1e-300)
        return abs(self.analytic - self.fd) / scale


def finite_difference_check(fun, x, grad, indices, step: float = 1e-6):
    """Central differences of a scalar ``fun`` at ``x`` against ``grad`` on ``indices``."""
    x = np.asarray(x, dtype=float)
    rows = []
    for i in indices:
        xp, xm = x.copy(), x.copy()
        xp[i] += step
        xm[i] -= step
        fd = (fun(xp) - fun(xm)) / (2.0 * step)
        rows.append(GradientCheckRow(int(i), float(grad[i]), float(fd)))
    return rows


def write_gradient_check(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["index", "analytic", "fd", "rel_error"])
        for r in rows:
            w.writerow([r.index, f"{r.analytic:.12e}", f"{r.fd:.12e}", f"{r.rel_error:.3e}"])
