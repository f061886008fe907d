import numpy as np
import pytest
import scipy.linalg as sla
from hypothesis import given, settings, strategies as st

from mlbuckle.errors import DimensionMismatch, NonDivisibleDims
from mlbuckle.fem import FEModel, MaterialModel
from mlbuckle.grid import GridLevel, build_hierarchy, coarsen, constrain, galerkin_project, prolongate


def test_odd_dimensions_rejected():
    with pytest.raises(NonDivisibleDims):
        build_hierarchy((10, 6), 3)
    with pytest.raises(NonDivisibleDims):
        coarsen(GridLevel(3, 4))


def test_dof_reduction_by_level():
    hier = build_hierarchy((840, 360), 3)
    n = [lv.ndof for lv in hier.levels]
    assert (hier.levels[2].nelx, hier.levels[2].nely) == (210, 90)
    assert hier.levels[0].num_elements == 16 * hier.levels[2].num_elements
    # nodal counts carry the extra boundary row and column
    assert n[0] / n[2] == pytest.approx(16, rel=0.02)


def test_hat_function():
    hier = build_hierarchy((4, 4), 2)
    coarse = hier.levels[1]
    v = np.zeros(coarse.ndof)
    v[2 * coarse.node(1, 1)] = 1.0
    fine = hier.levels[0]
    u = prolongate(hier, 0, v)[0::2].reshape(5, 5)
    expected = np.zeros((5, 5))
    expected[1:4, 1:4] = np.outer([0.5, 1.0, 0.5], [0.5, 1.0, 0.5])
    assert np.allclose(u, expected)
    assert fine.ndof == u.size * 2


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=4, max_size=4))
def test_prolongation_reproduces_bilinear_fields(c):
    hier = build_hierarchy((8, 4), 2)
    cx = hier.levels[1].node_coords
    fx = hier.levels[0].node_coords

    def field(xy):
        x, y = xy[:, 0], xy[:, 1]
        return c[0] + c[1] * x + c[2] * y + c[3] * x * y

    v = np.zeros(hier.levels[1].ndof)
    v[1::2] = field(cx)
    u = prolongate(hier, 0, v)
    # bilinear on each coarse cell is exact; products x*y stay exact cell-wise
    assert np.allclose(u[1::2], field(fx), atol=1e-12)
    assert np.allclose(u[0::2], 0.0)


def test_fixed_dofs_inherited():
    fixed = np.array([0, 1, 2, 3])  # nodes 0 and 1 on the left edge
    hier = build_hierarchy((4, 4), 2, fixed=fixed)
    # only fine node 0 coincides with a coarse node
    assert list(hier.levels[1].fixed) == [0, 1]
    P = hier.P[0]
    assert P[fixed].nnz == 0


def test_restrict_dimension_check():
    hier = build_hierarchy((4, 4), 2)
    with pytest.raises(DimensionMismatch):
        hier.restrict(0, np.zeros(7))


def test_galerkin_interlacing():
    """Galerkin coarse pencils are Ritz projections: coarse load factors bound the fine ones from above."""
    from mlbuckle.problems import cantilever_column

    s = cantilever_column(4, 16, width=1.0)
    model = FEModel(s.level, MaterialModel(), s.passive_solid)
    x = np.ones(s.num_elements)
    K = model.stiffness(x)
    u = np.linalg.solve(K.toarray(), s.f)
    G = model.stress_stiffness(x, u)
    hier = build_hierarchy((4, 16), 2, fixed=s.fixed)

    def blf(K, G, fixed):
        free = np.setdiff1d(np.arange(K.shape[0]), fixed)
        nu = sla.eigh(-G.toarray()[np.ix_(free, free)], K.toarray()[np.ix_(free, free)], eigvals_only=True)
        return np.sort(1.0 / nu[nu > 1e-12])

    lf = blf(K, G, s.fixed)
    Kc = constrain(galerkin_project(hier, 0, K), hier.levels[1].fixed, 1.0)
    Gc = galerkin_project(hier, 0, G)
    lc = blf(Kc, Gc, hier.levels[1].fixed)
    k = min(6, lc.size)
    assert np.all(lc[:k] >= lf[:k] * (1 - 1e-10))
