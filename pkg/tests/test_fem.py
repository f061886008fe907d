import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st
from scipy.sparse.linalg import spsolve

from mlbuckle.errors import MissingDisplacement, OutOfRangeDensity
from mlbuckle.fem import (FEModel, MaterialModel, element_kernel, interpolate_stiffness,
                          interpolate_stress_stiffness, d_interpolate_stiffness, plane_stress)
from mlbuckle.grid import GridLevel
from mlbuckle.problems import rectangle


def test_simp_value():
    mat = MaterialModel(p=3.0)
    assert interpolate_stiffness(np.array([0.5]), mat)[0] == pytest.approx(1e-6 + 0.125 * (1 - 1e-6), rel=1e-15)
    assert interpolate_stress_stiffness(np.array([0.5]), mat)[0] == pytest.approx(0.125, rel=1e-15)


def test_density_range_checked():
    with pytest.raises(OutOfRangeDensity):
        interpolate_stiffness(np.array([1.2]), MaterialModel())


@settings(max_examples=30, deadline=None)
@given(st.floats(0.01, 0.99), st.floats(1.0, 6.0))
def test_interpolation_derivative(x, p):
    mat = MaterialModel(p=p)
    h = 1e-6
    fd = (interpolate_stiffness(np.array([x + h]), mat) - interpolate_stiffness(np.array([x - h]), mat)) / (2 * h)
    assert d_interpolate_stiffness(np.array([x]), mat)[0] == pytest.approx(fd[0], rel=1e-6)


def test_element_stiffness_rigid_modes():
    Ke = element_kernel(0.3, 1.0).Ke0
    assert np.allclose(Ke, Ke.T)
    w = np.linalg.eigvalsh(Ke)
    assert np.sum(np.abs(w) < 1e-10) == 3
    assert np.all(w > -1e-10)


def test_constant_strain_patch():
    """Linear displacement fields give the exact constant stress."""
    k = element_kernel(0.3, 2.0)
    xy = np.array([[0, 0], [2, 0], [2, 2], [0, 2]], float)
    eps = np.array([1e-3, -2e-3, 5e-4])  # exx, eyy, gxy
    u = np.zeros(8)
    u[0::2] = eps[0] * xy[:, 0] + 0.5 * eps[2] * xy[:, 1]
    u[1::2] = eps[1] * xy[:, 1] + 0.5 * eps[2] * xy[:, 0]
    sig = k.S0 @ u
    assert np.allclose(sig, plane_stress(0.3) @ eps, rtol=1e-12, atol=1e-16)


def test_geometric_stiffness_compression_negative():
    """Unit element under sigma_xx = -1; transverse field v = x has quadratic form -1 exactly."""
    k = element_kernel(0.3, 1.0)
    phi = np.zeros(8)
    phi[1::2] = [0.0, 1.0, 1.0, 0.0]
    Ge = -1.0 * k.Mxx
    assert phi @ Ge @ phi == pytest.approx(-1.0, rel=1e-12)


def test_stress_stiffness_needs_u():
    s = rectangle(4, 2)
    model = FEModel(s.level, MaterialModel())
    with pytest.raises(MissingDisplacement):
        model.assemble(np.ones(8), with_G=True)


def test_passive_modulus():
    s = rectangle(4, 2)
    solid = np.zeros(8, bool)
    solid[0] = True
    model = FEModel(s.level, MaterialModel(), solid)
    Ek, Es = model.moduli(np.full(8, 0.5))
    assert Ek[0] == Es[0] == 1e3
    assert Ek[1] < 1.0


def test_cantilever_deflection():
    """Slender cantilever, tip load: beam theory plus shear within 1.5%."""
    L, H = 64, 4
    s = rectangle(L, H, clamp="left", load="tip", F=1.0)
    model = FEModel(s.level, MaterialModel())
    K = model.stiffness(np.ones(s.num_elements))
    u = spsolve(sp.csc_matrix(K), s.f)
    tip = 2 * s.level.node(L, H // 2) + 1
    E, nu = 1.0, 0.3
    ref = 4.0 * L**3 / (E * H**3) + L / (5.0 / 6.0 * E / (2 * (1 + nu)) * H)
    assert -u[tip] == pytest.approx(ref, rel=0.015)


@settings(max_examples=10, deadline=None)
@given(st.floats(-2, 2), st.floats(-2, 2))
def test_stress_stiffness_linear_in_u(a, b):
    s = rectangle(6, 3)
    model = FEModel(s.level, MaterialModel())
    x = np.linspace(0.2, 1.0, s.num_elements)
    rng = np.random.default_rng(3)
    u1, u2 = rng.standard_normal((2, s.level.ndof))
    G = model.stress_stiffness(x, a * u1 + b * u2)
    Gs = a * model.stress_stiffness(x, u1) + b * model.stress_stiffness(x, u2)
    assert abs(G - Gs).max() <= 1e-12 * max(1.0, abs(Gs).max())
    assert abs(G - G.T).max() <= 1e-14 * max(1.0, abs(G).max())


def test_dense_grid_fixed_rows():
    s = rectangle(4, 2)
    model = FEModel(s.level, MaterialModel())
    x = np.ones(8)
    K = model.stiffness(x).toarray()
    u = np.linalg.solve(K, s.f)
    G = model.stress_stiffness(x, u).toarray()
    for i in s.fixed:
        assert K[i, i] == 1.0 and np.count_nonzero(K[i]) == 1
        assert not np.any(G[i]) and not np.any(G[:, i])
