"""Round loop: agents step, the principal re-weights, agents receive mixed estimates."""

import time
from dataclasses import dataclass, field, replace

import numpy as np

from pael.agents import AgentState, StepSchedule, agent_step, aggregate_estimates
from pael.data import DataShard, GeneratorConfig, SyntheticData, generate, heldout_index, pooled
from pael.errors import AgentDivergenceError, InvalidArgumentError, RunFailure
from pael.model import HypothesisSpec, LocalObjective, check_parameter, features, predict_many
from pael.principal import OUTER_METHODS, BetaParams, solve_principal
from pael.smoothing import KernelSpec, kernel_weights

BASELINES = ("uniform-averaging", "isolated", "centralized")
BASELINE_ALIASES = {"uniform": "uniform-averaging", "isolated": "isolated", "centralized": "centralized"}


@dataclass(frozen=True)
class RunConfig:
    data: GeneratorConfig
    model: HypothesisSpec = None
    kernel: KernelSpec = KernelSpec()
    schedule: StepSchedule = StepSchedule()
    theta0: tuple = None
    tol: float = 1e-10
    max_sweeps: int = 100
    sweep_tol: float = 1e-8
    abort_after: int = 3
    baselines: tuple = ()
    outer: str = "newton"

    def __post_init__(self):
        if self.model is None:
            object.__setattr__(self, "model", self.data.spec)
        theta0 = np.zeros(self.model.n_params) if self.theta0 is None else self.theta0
        object.__setattr__(self, "theta0", tuple(float(v) for v in check_parameter(self.model, theta0)))
        if not self.tol > 0:
            raise InvalidArgumentError("tol must be > 0")
        if self.outer not in OUTER_METHODS:
            raise InvalidArgumentError(f"unknown outer method {self.outer!r}")
        if self.abort_after < 1:
            raise InvalidArgumentError("abort_after must be >= 1")
        kinds = tuple(BASELINE_ALIASES.get(b, b) for b in self.baselines)
        for kind in kinds:
            if kind not in BASELINES:
                raise InvalidArgumentError(f"unknown baseline {kind!r}")
        object.__setattr__(self, "baselines", kinds)

    @property
    def seed(self) -> int:
        return self.data.seed

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, data=replace(self.data, seed=int(seed)))


@dataclass(frozen=True)
class RunState:
    data: SyntheticData
    objectives: tuple
    w: np.ndarray
    p_hat: np.ndarray
    thetas: np.ndarray
    theta_bar: np.ndarray


@dataclass(frozen=True, eq=False)
class RoundRecord:
    t: int
    theta: np.ndarray
    theta_bar: np.ndarray
    local_risk: np.ndarray
    heldout_index: int
    heldout_sqerr: np.ndarray
    p_hat: np.ndarray
    beta: BetaParams = None
    loglik: float = None
    lam: np.ndarray = None
    moments: np.ndarray = None
    residuals: np.ndarray = None
    constraint_residuals: np.ndarray = None
    degenerate_rows: tuple = ()
    cause: str = ""
    wall_time: float = 0.0


@dataclass(frozen=True, eq=False)
class RunResult:
    kind: str
    theta_bar: np.ndarray
    loglik: float
    reason: str
    records: tuple
    w: np.ndarray
    heldout_mse: np.ndarray
    pooled_risk: np.ndarray
    config: RunConfig
    baselines: dict = field(default_factory=dict)
    wall_time: float = 0.0

    @property
    def degenerate_rounds(self) -> list:
        return [rec.t for rec in self.records if rec.degenerate_rows]


def initialize(config: RunConfig, data: SyntheticData = None) -> RunState:
    """Generate data, compute kernel weights once and put every agent at ``theta0``."""
    data = generate(config.data) if data is None else data
    k = len(data.shards)
    if data.signals.k != k:
        raise InvalidArgumentError("need one private signal per shard")
    objectives = tuple(LocalObjective(shard, config.model) for shard in data.shards)
    thetas = np.tile(np.asarray(config.theta0, dtype=float), (k, 1))
    p_hat = np.full((k, k), 1.0 / k)
    w = kernel_weights(data.signals, config.kernel)
    return RunState(data, objectives, w, p_hat, thetas, aggregate_estimates(p_hat, thetas))


def _step_all(state, theta_bar, gamma, t):
    out = []
    for i, obj in enumerate(state.objectives):
        agent = AgentState(state.thetas[i], obj.shard.shard_id, obj)
        try:
            out.append(agent_step(agent, theta_bar[i], gamma))
        except AgentDivergenceError as exc:
            raise RunFailure(t, "agent-divergence", str(exc)) from exc
    return np.vstack(out)


def _heldout_mse(spec, thetas, stream):
    return np.array([np.mean((stream.y - predict_many(spec, th, stream.X)) ** 2) for th in thetas])


def _pooled_risk(spec, thetas, shards):
    X, y = pooled(shards)
    return np.array([np.mean((y - predict_many(spec, th, X)) ** 2) for th in thetas])


def _local_risks(state, thetas):
    return np.array([obj.risk(th) for obj, th in zip(state.objectives, thetas)])


def _finish(kind, config, state, theta_bar, loglik, reason, records, started):
    return RunResult(
        kind=kind,
        theta_bar=theta_bar,
        loglik=loglik,
        reason=reason,
        records=tuple(records),
        w=state.w,
        heldout_mse=_heldout_mse(config.model, theta_bar, state.data.heldout),
        pooled_risk=_pooled_risk(config.model, theta_bar, state.data.shards),
        config=config,
        wall_time=time.perf_counter() - started,
    )


def run(config: RunConfig, data: SyntheticData = None) -> RunResult:
    """Execute the principal-agent loop for up to ``N`` rounds.

    Stops early when two consecutive non-degenerate rounds change the
    smoothed log-likelihood by at most ``tol``. Raises :class:`RunFailure`
    on agent divergence or after ``abort_after`` consecutive rounds in which
    every principal row is unbounded for a reason other than tied residuals.
    """
    started = time.perf_counter()
    state = initialize(config, data)
    gamma = config.schedule.gamma
    stream = state.data.heldout
    theta_bar = state.theta_bar
    records = []
    reason = "max-rounds"
    prev = None
    streak = 0

    for t in range(config.schedule.N):
        t0 = time.perf_counter()
        thetas = _step_all(state, theta_bar, gamma, t)
        state = replace(state, thetas=thetas)
        idx = heldout_index(stream, t)
        datum = (stream.X[idx], stream.y[idx])
        sol = solve_principal(
            state.w,
            thetas,
            datum,
            config.model,
            max_sweeps=config.max_sweeps,
            sweep_tol=config.sweep_tol,
            method=config.outer,
        )
        streak = streak + 1 if sol.cause == "all-rows-unbounded" else 0
        if streak >= config.abort_after:
            raise RunFailure(t, "principal-degenerate", f"every row unbounded for {streak} consecutive rounds")
        theta_bar = aggregate_estimates(sol.p_hat, thetas)
        state = replace(state, p_hat=sol.p_hat, theta_bar=theta_bar)
        rec = RoundRecord(
            t=t,
            theta=thetas,
            theta_bar=theta_bar,
            local_risk=_local_risks(state, thetas),
            heldout_index=idx,
            heldout_sqerr=sol.residuals**2,
            p_hat=sol.p_hat,
            beta=sol.beta,
            loglik=sol.loglik,
            lam=sol.lam,
            moments=sol.moments,
            residuals=sol.residuals,
            constraint_residuals=sol.constraint_residuals,
            degenerate_rows=sol.degenerate_rows,
            cause=sol.cause,
            wall_time=time.perf_counter() - t0,
        )
        records.append(rec)
        if prev is not None and not prev.degenerate_rows and not rec.degenerate_rows:
            if abs(rec.loglik - prev.loglik) <= config.tol:
                reason = "tol-met"
                break
        prev = rec

    result = _finish("principal", config, state, theta_bar, records[-1].loglik, reason, records, started)
    for kind in config.baselines:
        result.baselines[kind] = run_baseline(config, kind, state.data)
    return result


def centralized_fit(config: RunConfig, shards) -> np.ndarray:
    """Pooled least squares (linear-basis) or pooled gradient descent for ``N`` steps."""
    X, y = pooled(shards)
    if config.model.family == "linear-basis":
        theta, *_ = np.linalg.lstsq(features(config.model, X), y, rcond=None)
        return theta
    obj = LocalObjective(DataShard(X, y, shard_id=0), config.model)
    theta = np.asarray(config.theta0, dtype=float)
    gamma = config.schedule.gamma
    for _ in range(config.schedule.N):
        theta = theta - gamma * obj.gradient(theta)
    return theta


def run_baseline(config: RunConfig, baseline: str, data: SyntheticData = None) -> RunResult:
    """Comparison runs: fixed uniform mixing, no mixing, or one pooled learner."""
    kind = BASELINE_ALIASES.get(baseline, baseline)
    if kind not in BASELINES:
        raise InvalidArgumentError(f"unknown baseline {baseline!r}")
    started = time.perf_counter()
    state = initialize(config, data)
    k = len(state.objectives)

    if kind == "centralized":
        theta = centralized_fit(config, state.data.shards)
        reason = "closed-form" if config.model.family == "linear-basis" else "max-rounds"
        return _finish(kind, config, state, np.tile(theta, (k, 1)), None, reason, [], started)

    P = np.full((k, k), 1.0 / k) if kind == "uniform-averaging" else np.eye(k)
    gamma = config.schedule.gamma
    stream = state.data.heldout
    theta_bar = aggregate_estimates(P, state.thetas)
    records = []
    for t in range(config.schedule.N):
        t0 = time.perf_counter()
        thetas = _step_all(state, theta_bar, gamma, t)
        state = replace(state, thetas=thetas)
        theta_bar = aggregate_estimates(P, thetas)
        idx = heldout_index(stream, t)
        pred = np.array([predict_many(config.model, th, stream.X[idx : idx + 1])[0] for th in thetas])
        records.append(
            RoundRecord(
                t=t,
                theta=thetas,
                theta_bar=theta_bar,
                local_risk=_local_risks(state, thetas),
                heldout_index=idx,
                heldout_sqerr=(stream.y[idx] - pred) ** 2,
                p_hat=P,
                wall_time=time.perf_counter() - t0,
            )
        )
    return _finish(kind, config, state, theta_bar, None, "max-rounds", records, started)
