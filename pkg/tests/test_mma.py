import numpy as np
import pytest

from mlbuckle.mma import MMAState, mma_step, update_asymptotes


def _solve(f, df, g, dg, x0, xmin, xmax, iters=60):
    x = np.array(x0, float)
    st = MMAState(x.size, len(g(x)))
    for _ in range(iters):
        x = mma_step(st, x, xmin, xmax, f(x), df(x), g(x), dg(x))
    return x


def test_reciprocal_constraint_kkt():
    """min c x  s.t.  a / x <= 1 has the solution x = a."""
    a, c = 0.37, 2.0
    x = _solve(lambda x: c * x[0], lambda x: np.array([c]),
               lambda x: np.array([a / x[0] - 1.0]), lambda x: np.array([[-a / x[0] ** 2]]),
               [0.9], np.array([0.01]), np.array([1.0]))
    assert x[0] == pytest.approx(a, rel=1e-5)


def test_quadratic_with_linear_constraint():
    x = _solve(lambda x: float(x @ x), lambda x: 2 * x,
               lambda x: np.array([1.0 - x.sum()]), lambda x: -np.ones((1, 2)),
               [0.9, 0.1], np.zeros(2), np.ones(2))
    assert np.allclose(x, [0.5, 0.5], atol=1e-5)


def test_asymptote_oscillation_damping():
    st = MMAState(2, 1, iteration=3)
    st.xold2 = np.array([0.5, 0.5])
    st.xold1 = np.array([0.6, 0.6])
    st.low = np.array([0.2, 0.2])
    st.upp = np.array([1.0, 1.0])
    x = np.array([0.7, 0.5])  # first keeps moving up, second reverses
    low, upp = update_asymptotes(st, x, np.zeros(2), np.ones(2))
    assert low[0] == pytest.approx(0.7 - 1.2 * 0.4)
    assert upp[0] == pytest.approx(0.7 + 1.2 * 0.4)
    assert low[1] == pytest.approx(0.5 - 0.7 * 0.4)
    assert upp[1] == pytest.approx(0.5 + 0.7 * 0.4)


def test_move_limit_and_bounds():
    st = MMAState(3, 1, move=0.1)
    x = np.array([0.5, 0.05, 0.95])
    xn = mma_step(st, x, np.zeros(3), np.ones(3), 0.0, np.array([1.0, 1.0, -1.0]),
                  np.array([-1.0]), np.zeros((1, 3)))
    assert np.all(np.abs(xn - x) <= 0.1 + 1e-12)
    assert np.all((xn >= 0) & (xn <= 1))


def test_state_roundtrip():
    st = MMAState(2, 1)
    mma_step(st, np.array([0.3, 0.4]), np.zeros(2), np.ones(2), 1.0, np.ones(2), np.array([-1.0]),
             np.ones((1, 2)))
    st2 = MMAState(2, 1)
    st2.load_arrays(st.to_arrays())
    assert st2.iteration == st.iteration
    assert np.array_equal(st2.low, st.low) and st2.xold2 is None


def test_gradient_shape_checked():
    with pytest.raises(ValueError):
        mma_step(MMAState(2, 1), np.zeros(2), np.zeros(2), np.ones(2), 0.0, np.zeros(2),
                 np.zeros(1), np.zeros((2, 2)))
