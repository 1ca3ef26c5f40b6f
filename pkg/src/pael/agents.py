"""Agents' update: mix estimates with the principal's masses, then take one gradient step."""

from dataclasses import dataclass

import numpy as np

from pael.errors import AgentDivergenceError, InvalidArgumentError, NumericOverflowError
from pael.model import LocalObjective

DIVERGENCE_NORM = 1e10


@dataclass(frozen=True)
class StepSchedule:
    """Equidistant grid on ``[0, T]`` with ``N`` steps of size ``T / N``."""

    T: float = 10.0
    N: int = 200

    def __post_init__(self):
        if int(self.N) < 1:
            raise InvalidArgumentError("N must be >= 1")
        if not self.T > 0:
            raise InvalidArgumentError("T must be > 0")

    @property
    def gamma(self) -> float:
        return self.T / self.N

    def times(self) -> np.ndarray:
        return self.gamma * np.arange(self.N + 1)


@dataclass(frozen=True)
class AgentState:
    theta: np.ndarray
    shard_id: int
    objective: LocalObjective


def aggregate_estimates(p_hat, thetas) -> np.ndarray:
    """Row ``i`` of the result is ``sum_j p_ij theta_j``."""
    P = np.atleast_2d(np.asarray(p_hat, dtype=float))
    Theta = np.atleast_2d(np.asarray(thetas, dtype=float))
    if P.shape[1] != Theta.shape[0]:
        raise InvalidArgumentError(f"masses of shape {P.shape} cannot mix {Theta.shape[0]} estimates")
    return P @ Theta


def agent_step(state: AgentState, theta_bar, gamma: float) -> np.ndarray:
    """``theta_bar - gamma * grad J(theta_bar)``; the gradient is taken at the mixed point."""
    if gamma < 0:
        raise InvalidArgumentError("step size must be >= 0")
    theta_bar = np.asarray(theta_bar, dtype=float)
    try:
        grad = state.objective.gradient(theta_bar)
    except NumericOverflowError as exc:
        raise AgentDivergenceError(f"agent {state.shard_id}: {exc}") from exc
    new = theta_bar - gamma * grad
    if not np.all(np.isfinite(new)) or np.linalg.norm(new) > DIVERGENCE_NORM:
        raise AgentDivergenceError(f"agent {state.shard_id}: |theta| exceeded {DIVERGENCE_NORM:g}")
    return new
