"""Small built-in oracle checks, run by ``mlbuckle selftest`` (a few seconds in total)."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import spsolve

from .eigen import dense_oracle
from .fem import FEModel, MaterialModel
from .grid import build_hierarchy
from .pipeline import lba, make_hierarchy
from .problems import cantilever_column, rectangle
from .regularization import Regularizer
from .sensitivity import compliance_gradient, finite_difference_check
from .solvers import MgPreconditioner, kaczmarz_smooth, mg_pcg


def gauss_seidel_sweep(M, y, b):
    """One explicit forward Gauss-Seidel sweep on ``M y = b`` (dense reference)."""
    y = np.array(y, dtype=float)
    for i in range(M.shape[0]):
        y[i] += (b[i] - M[i] @ y) / M[i, i]
    return y


def check_kaczmarz(seed=0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((10, 10))
    A = A + A.T
    b = rng.standard_normal(10)
    y0 = rng.standard_normal(10)
    v = kaczmarz_smooth(A, A.T @ y0, sweeps=1, B=b, symmetric=False)
    ref = A.T @ gauss_seidel_sweep(A @ A.T, y0, b)
    err = float(np.abs(v - ref).max())
    return err <= 1e-12, f"max |kaczmarz - A^T GS(AA^T)| = {err:.1e}"


def check_euler(nelx=4, nely=96):
    s = cantilever_column(nelx, nely, width=1.0, P=1.0)
    model = FEModel(s.level, MaterialModel(), s.passive_solid)
    hier = make_hierarchy(s, 1)
    res = lba(model, np.ones(s.num_elements), s.f, hier, 1, ell=1)
    rel = float(res.modes.blf[0] / s.meta["euler_blf"] - 1.0)
    return abs(rel) <= 0.03, f"clamped-free column lam_1 / Euler - 1 = {rel:+.4f}"


def check_multilevel(nelx=8, nely=96):
    s = cantilever_column(nelx, nely, width=1.0, P=1.0)
    model = FEModel(s.level, MaterialModel(), s.passive_solid)
    x = np.ones(s.num_elements)
    hier = make_hierarchy(s, 2)
    res = lba(model, x, s.f, hier, 4, ell=2)
    ref = dense_oracle(res.ops.K, res.ops.G, 1, fixed=s.fixed)
    err = float(abs(1.0 - res.modes.blf[0] / ref.values[0]))
    return err <= 0.02, f"ell=2 |1 - lam_1 / dense lam_1| = {err:.2e}"


def check_mg(nelx=64, nely=32):
    s = rectangle(nelx, nely)
    model = FEModel(s.level, MaterialModel(), s.passive_solid)
    x = np.full(s.num_elements, 0.5)
    K = model.stiffness(x)
    hier = build_hierarchy((nelx, nely), 4, s.h, s.fixed)
    u, rep = mg_pcg(K, s.f, MgPreconditioner(hier, K), tol=1e-5)
    ue = spsolve(sp.csc_matrix(K), s.f)
    e = u - ue
    err = float(np.sqrt(e @ (K @ e)))
    ok = rep.iterations <= 30 and err <= 2.0 * rep.energy_error_estimate
    return ok, f"{rep.iterations} iterations, energy error {err:.2e} vs estimate {rep.energy_error_estimate:.2e}"


def check_gradient(nelx=12, nely=6):
    s = rectangle(nelx, nely)
    mat = MaterialModel(p=3.0)
    model = FEModel(s.level, mat, s.passive_solid)
    reg = Regularizer(nelx, nely, 1.5)
    rng = np.random.default_rng(1)
    x0 = rng.uniform(0.3, 0.9, s.num_elements)

    def J(xh):
        fld = reg(xh, beta=2.0)
        K = model.stiffness(fld.x_phys)
        return float(s.f @ spsolve(sp.csc_matrix(K), s.f))

    fld = reg(x0, beta=2.0)
    u = spsolve(sp.csc_matrix(model.stiffness(fld.x_phys)), s.f)
    g = compliance_gradient(model, fld, reg.filter, u)
    rows = finite_difference_check(J, x0, g, range(0, s.num_elements, 7))
    worst = max(r.rel_error for r in rows)
    return worst <= 1e-4, f"compliance gradient vs central FD, worst relative error {worst:.1e}"


CHECKS = {
    "kaczmarz_gauss_seidel": check_kaczmarz,
    "euler_column": check_euler,
    "multilevel_vs_dense": check_multilevel,
    "mg_pcg": check_mg,
    "compliance_gradient": check_gradient,
}


def run_all():
    """``[(name, passed, detail), ...]``; exceptions count as failures."""
    out = []
    for name, fn in CHECKS.items():
        try:
            ok, detail = fn()
        except Exception as exc:  # report, do not abort the remaining checks
            ok, detail = False, f"{type(exc).__name__}: {exc}"
        out.append((name, bool(ok), detail))
    return out
