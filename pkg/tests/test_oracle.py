import numpy as np
import pytest

from pael import oracle
from pael.errors import SingularityError
from pael.model import HypothesisSpec
from pael.principal import solve_principal_from_residuals


def test_zero_weighted_moment_instance():
    ref = oracle.grid_lambda(np.array([0.5, 0.5]), np.array([[1.0, 1.0], [-1.0, -1.0]]))
    assert ref.feasible and np.abs(ref.lam).max() <= 1e-4


def test_analytic_instance():
    ref = oracle.grid_lambda(np.array([0.75, 0.25]), np.array([[1.0, 0.0], [-1.0, 0.0]]))
    assert abs(ref.lam[0] - 0.5) <= 1e-3 and abs(ref.lam[1]) <= 1e-12


def test_identical_moments_reported_infeasible():
    ref = oracle.grid_lambda(np.array([0.5, 0.5]), np.array([[1.0, 2.0], [1.0, 2.0]]))
    assert not ref.feasible and ref.reason


def test_frozen_grid_value():
    ref = oracle.grid_lambda(np.array([0.5, 0.3, 0.2]), np.array([[1, -0.5], [-1.2, 0.4], [0.3, 0.9]]))
    np.testing.assert_allclose(ref.lam, [17 / 24, 11 / 8], atol=1e-4)
    assert abs(ref.value - 0.08252476533107535) <= 1e-9


def test_hull_verdict_margin_sign():
    assert oracle.hull_verdict([1 / 3] * 3, [[1, 0], [-1, 1], [-1, -1]])[0]
    ok, margin = oracle.hull_verdict([1 / 3] * 3, [[1, 0], [2, 1], [3, -1]])
    assert not ok and margin < 0


def test_uniform_grid_beta_near_moment_matching():
    r = np.array([0.2, -0.5, 0.9, 0.1])
    mu, s2, _, bad = oracle.grid_beta_from_residuals(np.full((4, 4), 0.25), r)
    assert bad == 0
    assert abs(mu - r.mean()) <= 1e-3 and abs(s2 - r.var()) <= 1e-3


def test_single_agent_grid_beta():
    mu, s2, _, _ = oracle.grid_beta_from_residuals(np.ones((1, 1)), np.array([0.37]))
    assert abs(mu - 0.37) <= 0.5


def test_grid_beta_agrees_with_solver():
    # For k = 2 the feasible set is a curve that a planar grid misses, so start at 3.
    g = oracle.OUTER_GRID
    rng = np.random.default_rng(3)
    checked = 0
    for _ in range(20):
        k = int(rng.integers(3, 5))
        w = rng.dirichlet(np.ones(k) * 4, size=k)
        r = rng.normal(size=k)
        sol = solve_principal_from_residuals(w, r)
        assert sol.cause == "ok"
        mu, s2, _, bad = oracle.grid_beta_from_residuals(w, r)
        assert bad == 0
        final = [np.ptp(r) / (g.points - 1) / g.refine**g.levels, np.ptp(r) ** 2 / (g.points - 1) / g.refine**g.levels]
        assert abs(mu - sol.beta.mu) <= 10 * final[0]
        assert abs(s2 - sol.beta.sigma2) <= 10 * final[1]
        checked += 1
    assert checked == 20


def test_least_squares_examples():
    spec = HypothesisSpec()
    X = np.array([[0.0], [1.0], [2.0], [3.0]])
    np.testing.assert_allclose(oracle.least_squares(X, 0.5 - 2 * X[:, 0], spec), [0.5, -2.0], atol=1e-10)
    np.testing.assert_allclose(oracle.least_squares(X[:2] + 1, np.array([3.0, 1.0]), spec), [5.0, -2.0], atol=1e-12)
    rng = np.random.default_rng(0)
    Xr, y = rng.uniform(-2, 2, (30, 1)), rng.normal(size=30)
    theta = oracle.least_squares(Xr, y, spec)
    D = oracle.design_matrix(spec, Xr)
    assert np.abs(D.T @ (y - D @ theta)).max() <= 1e-8
    with pytest.raises(SingularityError):
        oracle.least_squares(np.ones((3, 1)), np.arange(3.0), spec)
