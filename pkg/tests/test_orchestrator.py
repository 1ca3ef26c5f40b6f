from dataclasses import replace

import numpy as np
import pytest

from pael.agents import StepSchedule
from pael.data import GeneratorConfig
from pael.errors import InvalidArgumentError, RunFailure
from pael.orchestrator import RunConfig, initialize, run, run_baseline
from pael.smoothing import KernelSpec

DATA = GeneratorConfig(theta_star=(0.5, -1.0), n=120, k=4, heldout_size=30, seed=4)


def test_initial_state():
    state = initialize(RunConfig(DATA))
    assert np.all(state.p_hat == 0.25)
    again = initialize(RunConfig(DATA))
    assert np.array_equal(state.w, again.w) and np.array_equal(state.thetas, again.thetas)
    single = initialize(RunConfig(replace(DATA, k=1)))
    assert single.p_hat.tolist() == [[1.0]] and single.w.tolist() == [[1.0]]


def test_single_round():
    result = run(RunConfig(DATA, schedule=StepSchedule(T=0.05, N=1)))
    assert len(result.records) == 1 and result.reason == "max-rounds"


def test_single_agent_run_is_gradient_descent():
    cfg = RunConfig(replace(DATA, k=1), schedule=StepSchedule(T=1.0, N=20))
    a, b = run(cfg), run_baseline(cfg, "isolated")
    # The likelihood is identically zero, so the tolerance rule ends the run early.
    assert a.reason == "tol-met"
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.theta_bar, rb.theta_bar)


def test_uniform_matches_isolated_on_identical_shards():
    cfg = RunConfig(replace(DATA, shard_mode="replicate"), schedule=StepSchedule(T=1.0, N=20))
    a, b = run_baseline(cfg, "uniform-averaging"), run_baseline(cfg, "isolated")
    np.testing.assert_allclose(a.theta_bar, b.theta_bar, rtol=1e-13)


def test_run_records_are_consistent():
    result = run(RunConfig(DATA, schedule=StepSchedule(T=2.0, N=30), tol=1e-14))
    for rec in result.records:
        assert np.abs(rec.p_hat.sum(axis=1) - 1).max() <= 1e-8
        assert rec.beta.sigma2 > 0
    assert result.loglik == result.records[-1].loglik
    again = run(RunConfig(DATA, schedule=StepSchedule(T=2.0, N=30), tol=1e-14))
    assert np.array_equal(result.theta_bar, again.theta_bar)


def test_baselines_attached():
    result = run(RunConfig(DATA, schedule=StepSchedule(T=1.0, N=5), baselines=("uniform", "centralized")))
    assert set(result.baselines) == {"uniform-averaging", "centralized"}


def test_persistent_unbounded_rows_abort():
    cfg = RunConfig(replace(DATA, signals="iid-gaussian", signal_dim=3, seed=1),
                    kernel=KernelSpec("epanechnikov", h=0.3), schedule=StepSchedule(T=1.0, N=20))
    with pytest.raises(RunFailure) as info:
        run(cfg)
    assert info.value.report()["cause"] == "principal-degenerate"


def test_invalid_run_config():
    with pytest.raises(InvalidArgumentError):
        RunConfig(DATA, baselines=("ensemble",))
    with pytest.raises(InvalidArgumentError):
        RunConfig(DATA, outer="bfgs")
