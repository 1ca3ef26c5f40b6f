import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from pael.agents import AgentState, StepSchedule, aggregate_estimates, agent_step
from pael.errors import AgentDivergenceError, InvalidArgumentError
from pael.model import HypothesisSpec, LocalObjective


class Shard:
    def __init__(self, X, y):
        self.X, self.y = np.asarray(X, float), np.asarray(y, float)


def _agent(X, y, theta=(0.0, 0.0)):
    return AgentState(np.asarray(theta, float), 1, LocalObjective(Shard(X, y), HypothesisSpec()))


def test_aggregation_examples():
    thetas = np.array([[0.0, 0.0], [2.0, 4.0]])
    np.testing.assert_array_equal(aggregate_estimates(np.eye(2), thetas), thetas)
    np.testing.assert_array_equal(aggregate_estimates(np.full((2, 2), 0.5), thetas), [[1.0, 2.0]] * 2)
    with pytest.raises(InvalidArgumentError):
        aggregate_estimates(np.eye(3), thetas)


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 5).flatmap(lambda k: st.tuples(
    arrays(float, (k, k), elements=st.floats(0.01, 1)), arrays(float, (k, 3), elements=st.floats(-10, 10)))))
def test_aggregate_inside_convex_hull(args):
    P, thetas = args
    P = P / P.sum(axis=1, keepdims=True)
    bar = aggregate_estimates(P, thetas)
    assert np.all(bar <= thetas.max(axis=0) + 1e-9) and np.all(bar >= thetas.min(axis=0) - 1e-9)


def test_single_gradient_step():
    agent = _agent([[1.0]], [2.0])
    np.testing.assert_allclose(agent_step(agent, np.zeros(2), 0.1), [0.4, 0.4], rtol=1e-15)


def test_stationary_point_and_zero_step():
    agent = _agent([[0.0], [1.0]], [1.0, 3.0])
    np.testing.assert_array_equal(agent_step(agent, [1.0, 2.0], 0.3), [1.0, 2.0])
    np.testing.assert_array_equal(agent_step(agent, [5.0, -1.0], 0.0), [5.0, -1.0])
    with pytest.raises(InvalidArgumentError):
        agent_step(agent, [0.0, 0.0], -1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 1000))
def test_small_steps_descend(seed):
    rng = np.random.default_rng(seed)
    X = rng.uniform(-2, 2, (20, 1))
    agent = _agent(X, rng.normal(size=20))
    theta = rng.normal(size=2) * 3
    new = agent_step(agent, theta, 0.05)
    assert agent.objective.risk(new) <= agent.objective.risk(theta) + 1e-12


def test_divergence_reported():
    agent = _agent([[100.0]], [1.0])
    theta = np.zeros(2)
    with pytest.raises(AgentDivergenceError):
        for _ in range(200):
            theta = agent_step(agent, theta, 10.0)


def test_schedule():
    s = StepSchedule(T=10.0, N=200)
    assert s.gamma == 0.05
    assert s.times()[-1] == pytest.approx(10.0)
    with pytest.raises(InvalidArgumentError):
        StepSchedule(N=0)
