"""Linearized buckling analysis with multilevel mode approximation.

``lba`` runs the linear analysis followed by the eigen-analysis. With a
single level the eigen-analysis is a true fine-grid eigensolve. With
``ell >= 2`` levels:

1. ``K`` and ``G`` are Galerkin-projected down to the coarse level, where
   the only converged eigensolve of the whole analysis happens;
2. the coarse modes are prolongated level by level; on each level they are
   smoothed by Kaczmarz sweeps on ``(K_j + s G_j) Psi = 0`` (``s`` the
   current lowest Ritz value) and Ritz-projected;
3. one inverse-iteration step ``K Phi = G Psi`` on the fine grid (block PCG);
4. load factors are the Rayleigh quotients of the ``K``-orthonormalized modes.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .eigen import solve_coarse
from .errors import ShiftBreakdown, ZeroGEnergy
from .fem import FEModel, OperatorPair
from .grid import GridHierarchy, build_hierarchy, constrain, galerkin_project
from .solvers import (DEFAULT_TOL, KaczmarzSmoother, MgPreconditioner, SolveReport, mg_block_pcg,
                      mg_pcg)

log = logging.getLogger(__name__)


@dataclass(eq=False)
class ModeSet:
    """Approximate buckling modes (columns) and their load-factor estimates."""

    modes: np.ndarray
    blf: np.ndarray
    residual_norms: np.ndarray
    normalized: bool
    source_level: int
    pre_step_blf: np.ndarray | None = None
    level_ritz: list = field(default_factory=list)
    swap_mac: np.ndarray | None = None

    @property
    def q(self) -> int:
        return self.blf.size


@dataclass(eq=False)
class LbaResult:
    u: np.ndarray
    ops: OperatorPair
    modes: ModeSet
    timing: dict
    reports: list
    solver: "LinearSolver"

    @property
    def compliance(self) -> float:
        return float(self.u @ (self.ops.K @ self.u))


class LinearSolver:
    """``K^{-1}`` for one stiffness matrix: sparse LU or multigrid PCG."""

    def __init__(self, K, hier: GridHierarchy | None = None, method: str = "mg",
                 tol: float = DEFAULT_TOL, mg_levels: int | None = None, maxiter: int = 500):
        self.K = sp.csr_matrix(K)
        self.method = method
        self.tol = tol
        self.maxiter = maxiter
        self.reports: list[SolveReport] = []
        if method == "direct":
            self.lu = splu(self.K.tocsc())
            self.prec = None
        elif method == "mg":
            if hier is None:
                raise ValueError("multigrid solves need a grid hierarchy")
            self.prec = MgPreconditioner(hier, self.K, num_levels=mg_levels)
            self.lu = None
        else:
            raise ValueError(f"unknown linear solver {method!r}")

    def solve(self, F, phase="LA", x0=None):
        t0 = time.perf_counter()
        F = np.asarray(F, dtype=float)
        if self.lu is not None:
            X = self.lu.solve(F)
            rep = SolveReport(0, 0.0, 0.0, True, 0.0, phase, time.perf_counter() - t0,
                              columns=1 if F.ndim == 1 else F.shape[1])
        elif F.ndim == 1:
            X, rep = mg_pcg(self.K, F, self.prec, self.tol, maxiter=self.maxiter, phase=phase)
        else:
            X, rep = mg_block_pcg(self.K, F, self.prec, self.tol, maxiter=self.maxiter, phase=phase, x0=x0)
        self.reports.append(rep)
        return X, rep

    def k_solve(self):
        return self.lu.solve if self.lu is not None else None


def default_mg_levels(nelx: int, nely: int, min_coarse_dof: int = 1000) -> int:
    levels = 1
    while nelx % 2 == 0 and nely % 2 == 0:
        cx, cy = nelx // 2, nely // 2
        if 2 * (cx + 1) * (cy + 1) < min_coarse_dof:
            break
        nelx, nely = cx, cy
        levels += 1
    return levels


def linear_analysis(model: FEModel, x_phys, f, hier: GridHierarchy | None = None,
                    method: str = "mg", tol: float = DEFAULT_TOL, mg_levels=None):
    """Solve ``K[x] u = f`` and assemble ``K`` and ``G[x, u]``.

    Returns ``(u, OperatorPair, SolveReport, LinearSolver)``.
    """
    K = model.stiffness(x_phys)
    solver = LinearSolver(K, hier, method, tol, mg_levels)
    u, rep = solver.solve(f, phase="LA")
    G = model.stress_stiffness(x_phys, u)
    return u, OperatorPair(K, G), rep, solver


def rayleigh_quotients(Phi, ops: OperatorPair, strict: bool = True):
    """Column-wise ``-(phi^T K phi) / (phi^T G phi)``.

    Columns with vanishing ``G`` energy raise :class:`ZeroGEnergy` unless
    ``strict`` is false, in which case they get ``inf``.
    """
    Phi = np.asarray(Phi, dtype=float)
    one = Phi.ndim == 1
    if one:
        Phi = Phi[:, None]
    kk = np.einsum("ij,ij->j", Phi, ops.K @ Phi)
    gg = np.einsum("ij,ij->j", Phi, ops.G @ Phi)
    tiny = np.abs(gg) <= 1e-14 * np.maximum(np.abs(kk), 1e-300)
    if np.any(tiny):
        if strict:
            raise ZeroGEnergy(f"modes {np.flatnonzero(tiny).tolist()} carry no stress-stiffness energy")
        log.warning("excluding %d modes with zero G energy", int(tiny.sum()))
    with np.errstate(divide="ignore"):
        out = np.where(tiny, np.inf, -kk / np.where(tiny, 1.0, gg))
    return out[0] if one else out


def eig_residual(phi, lam, ops: OperatorPair):
    """``y = (K + lam G) phi`` for one mode or column-wise for a block."""
    phi = np.asarray(phi, dtype=float)
    if phi.ndim == 1:
        return ops.K @ phi + lam * (ops.G @ phi)
    return ops.K @ phi + (ops.G @ phi) * np.asarray(lam)[None, :]


def ritz_project(K, G, Psi):
    """Ritz values/vectors of the pencil on ``span(Psi)``, ascending positive load factors.

    Vectors come back ``K``-orthonormal; directions with non-positive
    ``1/lam`` are put last with value ``inf``.
    """
    Kr = Psi.T @ (K @ Psi)
    Gr = Psi.T @ (G @ Psi)
    Kr = 0.5 * (Kr + Kr.T)
    Gr = 0.5 * (Gr + Gr.T)
    w, V = np.linalg.eigh(Kr)
    keep = w > 1e-12 * w.max()
    B = V[:, keep] / np.sqrt(w[keep])
    nu, C = np.linalg.eigh(-(B.T @ Gr @ B))
    order = np.argsort(-nu)
    nu, C = nu[order], C[:, order]
    with np.errstate(divide="ignore"):
        lam = np.where(nu > 0, 1.0 / np.where(nu > 0, nu, 1.0), np.inf)
    return lam, Psi @ (B @ C)


def _k_orthonormalize(Phi, K):
    M = Phi.T @ (K @ Phi)
    M = 0.5 * (M + M.T)
    L = np.linalg.cholesky(M)
    return sla.solve_triangular(L, Phi.T, lower=True).T


def _fix_signs(V):
    idx = np.argmax(np.abs(V), axis=0)
    s = np.sign(V[idx, np.arange(V.shape[1])])
    s[s == 0] = 1.0
    return V * s


def level_operators(ops: OperatorPair, hier: GridHierarchy, ell: int, K_levels=None):
    """Galerkin-projected ``(K_j, G_j)`` for ``j = 0 .. ell-1`` (``K_j`` with unit fixed diagonal)."""
    Ks = [ops.K]
    Gs = [ops.G]
    for j in range(ell - 1):
        if K_levels is not None and j + 1 < len(K_levels):
            Ks.append(K_levels[j + 1])
        else:
            Ks.append(constrain(galerkin_project(hier, j, Ks[-1]), hier.levels[j + 1].fixed, 1.0))
        Gs.append(galerkin_project(hier, j, Gs[-1]))
    return Ks, Gs


def finalize_modes(Phi, ops: OperatorPair, final: str = "diagonal"):
    """Sort by Rayleigh quotient, ``K``-orthonormalize and evaluate load factors."""
    if final == "ritz":
        lam, Phi = ritz_project(ops.K, ops.G, Phi)
    else:
        rq = rayleigh_quotients(Phi, ops, strict=False)
        order = np.argsort(rq, kind="stable")
        Phi = _k_orthonormalize(Phi[:, order], ops.K)
        lam = rayleigh_quotients(Phi, ops, strict=False)
        order = np.argsort(lam, kind="stable")
        Phi, lam = Phi[:, order], lam[order]
        if not np.all(np.isfinite(lam) & (lam > 0)):
            # orthonormalization can leave a tension-dominated column; the
            # Ritz projection of the same span cannot
            log.warning("non-positive diagonal quotient after orthonormalization; using Ritz values")
            lam, Phi = ritz_project(ops.K, ops.G, Phi)
    Phi = _fix_signs(Phi)
    res = np.linalg.norm(eig_residual(Phi, lam, ops), axis=0)
    return Phi, lam, res


def multilevel_modes(ops: OperatorPair, hier: GridHierarchy, q: int, ell: int | None = None,
                     sweeps: int = 3, solver: LinearSolver | None = None,
                     shift_margin: float = 1e-3, final: str = "diagonal", max_fine_steps: int = 1,
                     eig_tol: float = 1e-8, scaled_kaczmarz: bool = True):
    """Approximate the ``q`` lowest fine-grid buckling modes starting from level ``ell``.

    ``ell`` counts levels (1 = fine grid only, i.e. a true eigensolve);
    defaults to all levels of ``hier``.
    """
    ell = hier.num_levels if ell is None else ell
    if ell > hier.num_levels:
        raise ValueError(f"hierarchy has {hier.num_levels} levels, asked for ell = {ell}")
    reports = []
    if ell == 1:
        k_solve = solver.k_solve() if solver is not None else None
        pairs = solve_coarse(ops.K, ops.G, q, tol=eig_tol, k_solve=k_solve)
        Phi, lam = pairs.vectors, pairs.values
        res = np.linalg.norm(eig_residual(Phi, lam, ops), axis=0)
        return ModeSet(Phi, lam, res, True, 1, lam.copy(), [lam.copy()]), reports

    K_levels = solver.prec.ops if solver is not None and solver.prec is not None else None
    Ks, Gs = level_operators(ops, hier, ell, K_levels)
    pairs = solve_coarse(Ks[-1], Gs[-1], q, tol=eig_tol)
    Psi, ritz = pairs.vectors, pairs.values
    level_ritz = [ritz.copy()]
    for j in range(ell - 2, -1, -1):
        Psi = hier.P[j] @ Psi
        shift = np.min(ritz) * (1.0 - shift_margin)
        if not shift > 0:
            raise ShiftBreakdown(f"non-positive shift {shift:.3e} on level {j}")
        if sweeps > 0:
            A = (Ks[j] + shift * Gs[j]).tocsr()
            scale = Ks[j].diagonal() if scaled_kaczmarz else None
            Psi = KaczmarzSmoother(A, scale)(Psi, sweeps)
        ritz, Psi = ritz_project(Ks[j], Gs[j], Psi)
        if not np.all(ritz > 0):
            raise ShiftBreakdown(f"Ritz values lost positivity on level {j}")
        level_ritz.append(ritz.copy())
    pre = ritz.copy()
    Phi = Psi
    if solver is None:
        solver = LinearSolver(ops.K, hier, "mg")
    for step in range(max(1, max_fine_steps)):
        rhs = -(ops.G @ Phi)
        # -G psi = K psi / lam for an exact pair, so psi / lam starts the solve
        # at the previous iterate in the scaling of this right-hand side
        x0 = Phi / ritz if step == 0 else None
        Phi, rep = solver.solve(rhs, phase="EA", x0=x0)
        reports.append(rep)
        if step + 1 < max_fine_steps:
            Phi = _k_orthonormalize(Phi, ops.K)
    before = Psi
    Phi, lam, res = finalize_modes(Phi, ops, final)
    swap = np.abs(before.T @ (ops.K @ Phi))
    return ModeSet(Phi, lam, res, True, ell, pre, level_ritz, swap), reports


def lba(model: FEModel, x_phys, f, hier: GridHierarchy, q: int, ell: int | None = None,
        sweeps: int = 3, la_method: str | None = None, tol: float = DEFAULT_TOL,
        mg_levels: int | None = None, **kw) -> LbaResult:
    """Full linearized buckling analysis (linear + eigen analysis) with timings.

    The linear analysis uses multigrid PCG unless ``la_method="direct"``;
    keeping it the same for every ``ell`` makes ``eR`` compare eigen-analysis
    costs only.
    """
    ell = hier.num_levels if ell is None else ell
    method = la_method or "mg"
    t0 = time.perf_counter()
    K = model.stiffness(x_phys)
    solver = LinearSolver(K, hier, method, tol, mg_levels)
    u, rep = solver.solve(f, phase="LA")
    t1 = time.perf_counter()
    G = model.stress_stiffness(x_phys, u)
    ops = OperatorPair(K, G)
    modes, reps = multilevel_modes(ops, hier, q, ell, sweeps, solver, **kw)
    t2 = time.perf_counter()
    tla, tea = t1 - t0, t2 - t1
    timing = {"tLA": tla, "tEA": tea, "tLBA": tla + tea, "eR": tea / (tla + tea)}
    return LbaResult(u, ops, modes, timing, [rep] + reps, solver)


def make_hierarchy(structure, num_levels: int) -> GridHierarchy:
    return build_hierarchy((structure.nelx, structure.nely), num_levels, structure.h, structure.fixed)
