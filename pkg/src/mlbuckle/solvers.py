"""Multigrid-preconditioned CG (single and block) and the Kaczmarz smoother.

CG stops on the energy-norm error estimate built from its own coefficients:
with ``x0 = 0`` the squared energy norm of each update, ``alpha_i * rho_i``,
telescopes to ``||x_k||_K^2`` while the sum over a delay window of ``d``
later updates is a lower bound of ``||x_k - x||_K^2``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
from scipy.sparse.linalg import splu, spsolve_triangular

from .errors import BlockRankCollapse, BreakdownIndefinite, MaxIterationsExceeded
from .grid import GridHierarchy, constrain, galerkin_project

DEFAULT_TOL = 1e-5
DEFAULT_DELAY = 5
SAFETY = 2.0


@dataclass
class SolveReport:
    iterations: int = 0
    energy_error_estimate: float = 0.0
    relative_estimate: float = 0.0
    converged: bool = True
    residual_norm: float = 0.0
    phase: str = ""
    wall_time: float = 0.0
    deflated: int = 0
    columns: int = 1
    history: list = field(default_factory=list, repr=False)

    def row(self) -> list:
        return [self.phase, self.iterations, f"{self.energy_error_estimate:.6e}", f"{self.wall_time:.6f}"]


class MgPreconditioner:
    """Symmetric V-cycle with damped Jacobi smoothing and a dense coarse solve.

    Parameters
    ----------
    hier : GridHierarchy
        Supplies the prolongations; all its levels are used unless ``num_levels`` is given.
    K : sparse matrix
        Constrained fine stiffness (unit diagonal on fixed DOFs).
    """

    def __init__(self, hier: GridHierarchy, K, num_levels=None, omega=0.6, pre=2, post=2, ops=None):
        self.hier = hier
        self.num_levels = hier.num_levels if num_levels is None else num_levels
        self.omega, self.pre, self.post = omega, pre, post
        if ops is None:
            ops = [sp.csr_matrix(K)]
            for j in range(self.num_levels - 1):
                ops.append(galerkin_project(hier, j, ops[-1]))
        self.ops = [constrain(A, hier.levels[j].fixed, 1.0) if j else sp.csr_matrix(A)
                    for j, A in enumerate(ops[: self.num_levels])]
        self.dinv = [1.0 / A.diagonal() for A in self.ops]
        coarse = self.ops[-1]
        if coarse.shape[0] <= 4000:
            self._chol = sla.cho_factor(coarse.toarray())
            self._lu = None
        else:
            self._chol = None
            self._lu = splu(coarse.tocsc())

    @property
    def operator(self):
        return self.ops[0]

    def _coarse_solve(self, r):
        if self._chol is not None:
            return sla.cho_solve(self._chol, r, check_finite=False)
        return self._lu.solve(r)

    def _smooth(self, j, x, r, sweeps):
        A, d = self.ops[j], self.dinv[j]
        if r.ndim == 2:
            d = d[:, None]
        if x is None and sweeps > 0:
            # first sweep from a zero guess needs no matrix product
            x = self.omega * d * r
            sweeps -= 1
        elif x is None:
            x = np.zeros_like(r)
        for _ in range(sweeps):
            x = x + self.omega * d * (r - A @ x)
        return x

    def _vcycle(self, j, r):
        if j == self.num_levels - 1:
            return self._coarse_solve(r)
        x = self._smooth(j, None, r, self.pre)
        rc = self.hier.P[j].T @ (r - self.ops[j] @ x)
        x = x + self.hier.P[j] @ self._vcycle(j + 1, rc)
        return self._smooth(j, x, r, self.post)

    def __call__(self, r):
        return self._vcycle(0, np.asarray(r, dtype=float))

    apply = __call__


def _energy_check(hist, delay, tol):
    """``(converged, xi, ||x||_K)`` from the per-step energy increments."""
    if len(hist) < delay:
        return False, np.inf, np.sqrt(sum(hist))
    xi = np.sqrt(sum(hist[-delay:]))
    unorm = np.sqrt(sum(hist))
    return SAFETY * xi <= tol * unorm, xi, unorm


def mg_pcg(K, f, prec, tol=DEFAULT_TOL, delay=DEFAULT_DELAY, maxiter=500, phase="LA",
           raise_on_maxiter=True):
    """Preconditioned CG with the delayed energy-norm stopping rule.

    Returns ``(u, SolveReport)``. The reported estimate is the (absolute)
    energy-error estimate of the iterate ``delay`` steps back, an upper-side
    proxy for the error of the returned iterate.
    """
    t0 = time.perf_counter()
    f = np.asarray(f, dtype=float)
    x = np.zeros_like(f)
    fnorm = np.linalg.norm(f)
    if fnorm == 0.0:
        return x, SolveReport(0, 0.0, 0.0, True, 0.0, phase, time.perf_counter() - t0)
    r = f.copy()
    z = prec(r)
    p = z.copy()
    rho = r @ z
    hist = []
    xi = np.inf
    converged = False
    it = 0
    for it in range(1, maxiter + 1):
        q = K @ p
        pq = p @ q
        if pq <= 0.0:
            raise BreakdownIndefinite(f"p^T K p = {pq:.3e} at CG step {it}")
        alpha = rho / pq
        x += alpha * p
        r -= alpha * q
        hist.append(alpha * rho)
        ok, xi, unorm = _energy_check(hist, delay, tol)
        if ok:
            converged = True
            break
        if np.linalg.norm(r) <= 1e-15 * fnorm:
            converged, xi = True, np.sqrt(sum(hist[-delay:]))
            break
        z = prec(r)
        rho_new = r @ z
        p = z + (rho_new / rho) * p
        rho = rho_new
    unorm = np.sqrt(sum(hist))
    report = SolveReport(it, float(xi), float(xi / unorm) if unorm > 0 else 0.0, converged,
                         float(np.linalg.norm(r)), phase, time.perf_counter() - t0, history=hist)
    if not converged and raise_on_maxiter:
        raise MaxIterationsExceeded(f"mgPCG did not converge in {maxiter} steps", x, report)
    return x, report


def _block_energy(H, X, F, R, warm):
    """Column energy norms of the iterate: summed increments, or ``x . K x`` after a warm start."""
    if not warm:
        return np.sqrt(H.sum(axis=0))
    return np.sqrt(np.maximum(np.einsum("ij,ij->j", X, F - R), 0.0))


def mg_block_pcg(K, F, prec, tol=DEFAULT_TOL, delay=DEFAULT_DELAY, maxiter=500, phase="BLOCK",
                 raise_on_maxiter=True, drop_tol=1e-10, x0=None):
    """Block PCG for ``K U = F`` with per-step rank deflation of the search block.

    Search directions are re-orthonormalized in the ``K`` inner product every
    step; directions whose ``K``-Gram eigenvalue falls below ``drop_tol``
    (relative) are dropped for that step. Each column stops on its own
    delayed energy estimate, the solve ends when all have. With a starting
    block ``x0`` the estimate is compared against ``||x_k||_K`` evaluated as
    ``x_k . (F - R_k)``, since the increments no longer add up to it.
    """
    t0 = time.perf_counter()
    F = np.asarray(F, dtype=float)
    squeeze = F.ndim == 1
    if squeeze:
        F = F[:, None]
    n, q = F.shape
    scale = np.linalg.norm(F, axis=0)
    live = scale > 0.0
    X = np.zeros_like(F)
    if not live.any():
        return (X[:, 0] if squeeze else X), SolveReport(0, 0.0, 0.0, True, 0.0, phase,
                                                       time.perf_counter() - t0, columns=q)
    Fs = F[:, live] / scale[live]
    if x0 is None:
        Xs = np.zeros_like(Fs)
        R = Fs.copy()
    else:
        X0 = np.asarray(x0, dtype=float).reshape(n, q)
        Xs = X0[:, live] / scale[live]
        R = Fs - K @ Xs
    Z = prec(R)
    P = Z.copy()
    hist = []
    deflated = 0
    converged = False
    xi = np.full(Fs.shape[1], np.inf)
    it = 0
    for it in range(1, maxiter + 1):
        Q = K @ P
        gram = P.T @ Q
        gram = 0.5 * (gram + gram.T)
        d = np.diag(gram).copy()
        if np.any(d < -1e-14 * max(np.abs(d).max(), 1e-300)):
            raise BreakdownIndefinite("negative curvature in block CG")
        keep = d > 1e-24 * d.max() if d.max() > 0 else np.zeros_like(d, bool)
        if not keep.any():
            raise BlockRankCollapse("all block directions vanished before convergence")
        s = 1.0 / np.sqrt(d[keep])
        Pk, Qk = P[:, keep] * s, Q[:, keep] * s
        w, V = np.linalg.eigh((gram[np.ix_(keep, keep)] * s[:, None]) * s[None, :])
        good = w > drop_tol * w.max()
        deflated = max(deflated, int(P.shape[1] - good.sum()))
        S = V[:, good] / np.sqrt(w[good])
        Pk, Qk = Pk @ S, Qk @ S
        alpha = Pk.T @ R
        Xs += Pk @ alpha
        R -= Qk @ alpha
        hist.append(np.sum(alpha**2, axis=0))
        if len(hist) >= delay:
            H = np.array(hist)
            xi = np.sqrt(H[-delay:].sum(axis=0))
            unorm = _block_energy(H, Xs, Fs, R, x0 is not None)
            if np.all(SAFETY * xi <= tol * unorm):
                converged = True
                break
        if np.all(np.linalg.norm(R, axis=0) <= 1e-15):
            converged = True
            xi = np.sqrt(np.array(hist)[-delay:].sum(axis=0))
            break
        Z = prec(R)
        P = Z - Pk @ (Qk.T @ Z)
    H = np.array(hist)
    unorm = _block_energy(H, Xs, Fs, R, x0 is not None)
    X[:, live] = Xs * scale[live]
    rel = xi / np.where(unorm > 0, unorm, 1.0)
    report = SolveReport(it, float(np.max(xi * scale[live])), float(np.max(rel)), converged,
                         float(np.max(np.linalg.norm(R, axis=0) * scale[live])), phase,
                         time.perf_counter() - t0, deflated, q)
    out = X[:, 0] if squeeze else X
    if not converged and raise_on_maxiter:
        raise MaxIterationsExceeded(f"block PCG did not converge in {maxiter} steps", out, report)
    return out, report


class KaczmarzSmoother:
    """Row-projection sweeps for ``A v = b`` with ``A`` symmetric, possibly indefinite.

    A forward sweep over the rows is applied in closed form: with
    ``A A^T = L + D + L^T``, the sweep is ``v += A^T (L + D)^{-1} (b - A v)``,
    i.e. one Gauss-Seidel sweep on ``A A^T y = b`` for ``v = A^T y``.

    ``scale`` (positive, typically ``diag(K)``) runs the sweeps on
    ``S A S`` with ``S = diag(scale)^(-1/2)``. Plain row projections treat
    the rows of near-void DOFs like solid ones and pollute the solid DOFs
    they couple to; the scaled system weights rows by their stiffness.
    """

    def __init__(self, A, scale=None):
        A = sp.csr_matrix(A)
        if scale is None:
            self.s = None
        else:
            scale = np.asarray(scale, dtype=float)
            if np.any(~(scale > 0)):
                raise ValueError("Kaczmarz scaling must be positive")
            self.s = 1.0 / np.sqrt(scale)
            S = sp.diags(self.s)
            A = (S @ A @ S).tocsr()
        self.A = A
        AAt = (self.A @ self.A.T).tocsr()
        self.lower = sp.tril(AAt, format="csr")
        self.upper = sp.triu(AAt, format="csr")

    def forward(self, V, B=None):
        res = (0.0 if B is None else B) - self.A @ V
        return V + self.A.T @ spsolve_triangular(self.lower, res, lower=True)

    def backward(self, V, B=None):
        res = (0.0 if B is None else B) - self.A @ V
        return V + self.A.T @ spsolve_triangular(self.upper, res, lower=False)

    def __call__(self, V, sweeps=3, B=None, symmetric=True):
        V = np.array(V, dtype=float)
        if self.s is not None:
            s = self.s if V.ndim == 1 else self.s[:, None]
            V = V / s
            if B is not None:
                B = np.asarray(B, dtype=float) * s
        for _ in range(sweeps):
            V = self.forward(V, B)
            if symmetric:
                V = self.backward(V, B)
        if self.s is not None:
            V = V * s
        return V


def kaczmarz_smooth(A, V, sweeps=3, B=None, symmetric=True, scale=None):
    """Apply ``sweeps`` Kaczmarz sweeps (forward+backward if ``symmetric``) to ``A V = B``."""
    if sweeps <= 0:
        return np.array(V, dtype=float)
    return KaczmarzSmoother(A, scale)(V, sweeps, B, symmetric)


def kaczmarz_rowwise(A, v, b=None):
    """Reference single forward sweep, one explicit row projection at a time."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    v = np.array(v, dtype=float)
    b = np.zeros(A.shape[0]) if b is None else np.asarray(b, dtype=float)
    for i in range(A.shape[0]):
        a = A[i]
        v += (b[i] - a @ v) / (a @ a) * a
    return v
