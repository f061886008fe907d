import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import spsolve

from mlbuckle.fem import FEModel, MaterialModel
from mlbuckle.grid import build_hierarchy
from mlbuckle.problems import rectangle
from mlbuckle.selftest import gauss_seidel_sweep
from mlbuckle.solvers import MgPreconditioner, kaczmarz_rowwise, kaczmarz_smooth, mg_block_pcg, mg_pcg


def _system(nelx=32, nely=16, seed=0):
    s = rectangle(nelx, nely)
    model = FEModel(s.level, MaterialModel())
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.05, 1.0, s.num_elements)
    K = model.stiffness(x)
    return s, K, build_hierarchy((nelx, nely), 3, s.h, s.fixed)


def test_kaczmarz_equals_gauss_seidel():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((10, 10))
    A = A + A.T
    b = rng.standard_normal(10)
    y0 = rng.standard_normal(10)
    v = kaczmarz_smooth(A, A.T @ y0, sweeps=1, B=b, symmetric=False)
    ref = A.T @ gauss_seidel_sweep(A @ A.T, y0, b)
    assert np.abs(v - ref).max() <= 1e-12
    assert np.abs(kaczmarz_rowwise(A, A.T @ y0, b) - ref).max() <= 1e-12


def test_kaczmarz_zero_sweeps():
    A = np.eye(3)
    V = np.arange(6.0).reshape(3, 2)
    assert np.array_equal(kaczmarz_smooth(A, V, sweeps=0), V)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_kaczmarz_error_non_increasing(seed):
    """Row projections never increase the Euclidean distance to the solution set."""
    rng = np.random.default_rng(seed)
    n = 30
    A = rng.standard_normal((n, n))
    A = A + A.T
    xs = rng.standard_normal(n)
    b = A @ xs
    v = rng.standard_normal(n)
    err = [np.linalg.norm(v - xs)]
    for _ in range(5):
        v = kaczmarz_smooth(A, v, sweeps=1, B=b)
        err.append(np.linalg.norm(v - xs))
    assert np.all(np.diff(err) <= 1e-12 * err[0])


def test_kaczmarz_scaled_same_fixed_point():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((12, 12))
    A = A @ A.T + 10 * np.diag(rng.uniform(1, 100, 12))
    b = rng.standard_normal(12)
    xs = np.linalg.solve(A, b)
    d = np.diag(A)
    assert np.allclose(kaczmarz_smooth(A, xs, sweeps=3, B=b, scale=d), xs, atol=1e-13)
    v = kaczmarz_smooth(A, np.zeros(12), sweeps=100, B=b, scale=d)
    assert np.allclose(v, xs, atol=1e-10)


def test_mg_pcg_energy_error():
    s, K, hier = _system()
    u, rep = mg_pcg(K, s.f, MgPreconditioner(hier, K), tol=1e-5)
    ue = spsolve(sp.csc_matrix(K), s.f)
    e = u - ue
    assert rep.iterations <= 30
    assert np.sqrt(e @ (K @ e)) <= 2.0 * rep.energy_error_estimate


def test_block_pcg_duplicate_column():
    s, K, hier = _system(16, 8)
    F = np.column_stack([s.f, s.f, np.roll(s.f, 3)])
    F[s.fixed] = 0.0
    U, rep = mg_block_pcg(K, F, MgPreconditioner(hier, K), tol=1e-8)
    ref = spsolve(sp.csc_matrix(K), F)
    assert np.allclose(U[:, 0], U[:, 1])
    assert np.allclose(U, ref, rtol=1e-5, atol=1e-6 * np.abs(ref).max())
    assert rep.deflated >= 1
