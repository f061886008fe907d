import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from mlbuckle.eigen import dense_oracle, solve_coarse
from mlbuckle.errors import TooLarge, ZeroGEnergy
from mlbuckle.fem import FEModel, MaterialModel
from mlbuckle.pipeline import (eig_residual, finalize_modes, lba, linear_analysis, make_hierarchy,
                               multilevel_modes, rayleigh_quotients, ritz_project)
from mlbuckle.problems import cantilever_column, rectangle


@pytest.fixture(scope="module")
def col_ops(column, column_hier):
    s, model, x = column
    u, ops, rep, solver = linear_analysis(model, x, s.f, column_hier, "direct")
    return s, ops, solver


@pytest.fixture(scope="module")
def col_oracle(col_ops):
    s, ops, _ = col_ops
    return dense_oracle(ops.K, ops.G, 24, fixed=s.fixed)


def test_linear_analysis_matches_direct(column, column_hier):
    s, model, x = column
    u_mg, _, rep, _ = linear_analysis(model, x, s.f, column_hier, "mg", tol=1e-8)
    u_d, _, _, _ = linear_analysis(model, x, s.f, column_hier, "direct")
    assert np.abs(u_mg - u_d).max() <= 1e-6 * np.abs(u_d).max()


def test_solve_coarse_matches_dense(col_ops, col_oracle):
    s, ops, _ = col_ops
    pairs = solve_coarse(ops.K, ops.G, 12)
    assert np.allclose(pairs.values, col_oracle.values[:12], rtol=1e-8)
    V = pairs.vectors
    assert np.allclose(V.T @ (ops.K @ V), np.eye(12), atol=1e-8)
    assert pairs.residuals.max() < 1e-6


def test_solve_coarse_random_pencils():
    rng = np.random.default_rng(4)
    n = 200
    B = rng.standard_normal((n, n))
    K = sp.csr_matrix(B @ B.T + n * np.eye(n))
    C = rng.standard_normal((n, n))
    G = sp.csr_matrix(-(C @ C.T) / n + 0.2 * np.eye(n))
    a = solve_coarse(K, G, 6, buffer=False)
    b = dense_oracle(K, G, 6)
    assert np.allclose(a.values, b.values, rtol=1e-8)


def test_dense_oracle_size_guard():
    K = sp.identity(30000, format="csr")
    with pytest.raises(TooLarge):
        dense_oracle(K, -K, 1)


def test_ritz_on_exact_subspace(col_ops, col_oracle):
    s, ops, _ = col_ops
    V = col_oracle.vectors[:, :4] @ np.random.default_rng(0).standard_normal((4, 4))
    lam, Phi = ritz_project(ops.K, ops.G, V)
    assert np.allclose(lam, col_oracle.values[:4], rtol=1e-10)
    assert np.allclose(Phi.T @ (ops.K @ Phi), np.eye(4), atol=1e-10)


def test_residual_vanishes_at_eigenpairs(col_ops, col_oracle):
    s, ops, _ = col_ops
    y = eig_residual(col_oracle.vectors[:, :3], col_oracle.values[:3], ops)
    assert np.abs(y).max() < 1e-8


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1))
def test_rayleigh_quotient_bounds_lambda1(seed):
    s = cantilever_column(2, 16)
    model = FEModel(s.level, MaterialModel())
    x = np.ones(s.num_elements)
    u = np.linalg.solve(model.stiffness(x).toarray(), s.f)
    ops = model.assemble(x, u, with_G=True)
    lam1 = dense_oracle(ops.K, ops.G, 1, fixed=s.fixed).values[0]
    v = np.random.default_rng(seed).standard_normal(s.level.ndof)
    v[s.fixed] = 0.0
    rq = rayleigh_quotients(v, ops)
    assert rq >= lam1 * (1 - 1e-10) or rq < 0


def test_zero_g_energy_raises(col_ops):
    s, ops, _ = col_ops
    v = np.zeros(ops.K.shape[0])
    v[s.fixed[0]] = 1.0
    with pytest.raises(ZeroGEnergy):
        rayleigh_quotients(v, ops)
    assert rayleigh_quotients(v, ops, strict=False) == np.inf


@pytest.mark.parametrize("ell", [2, 3])
def test_multilevel_fundamental(col_ops, col_oracle, column_hier, ell):
    s, ops, solver = col_ops
    modes, _ = multilevel_modes(ops, column_hier, 12, ell=ell, solver=solver)
    assert abs(1 - modes.blf[0] / col_oracle.values[0]) <= 0.02
    assert np.all(modes.blf >= col_oracle.values[:12] * (1 - 1e-8))
    # one inverse-iteration step only improves the quotients
    assert np.all(modes.blf <= modes.pre_step_blf * (1 + 1e-10))
    assert np.allclose(np.einsum("ij,ij->j", modes.modes, ops.K @ modes.modes), 1.0)


def test_finalize_ritz_mode(col_ops, col_oracle):
    s, ops, _ = col_ops
    Phi, lam, res = finalize_modes(col_oracle.vectors[:, :3] + 1e-3 * col_oracle.vectors[:, 3:6], ops, "ritz")
    assert np.all(np.diff(lam) >= 0)
    assert lam[0] >= col_oracle.values[0] * (1 - 1e-12)


def test_lba_timing_keys(column, column_hier):
    s, model, x = column
    r = lba(model, x, s.f, column_hier, 4, ell=2)
    assert set(r.timing) == {"tLA", "tEA", "tLBA", "eR"}
    assert 0 < r.timing["eR"] < 1
    assert r.compliance == pytest.approx(float(s.f @ r.u), rel=1e-6)


def test_ell_too_large(col_ops, column_hier):
    with pytest.raises(ValueError):
        multilevel_modes(col_ops[1], column_hier, 4, ell=5)
