"""Principal-agent learning with kernel-smoothed empirical likelihood aggregation."""

from pael.agents import StepSchedule, aggregate_estimates, agent_step
from pael.data import GeneratorConfig, draw_heldout, generate
from pael.model import HypothesisSpec, LocalObjective, local_risk, predict, risk_gradient
from pael.orchestrator import RunConfig, run, run_baseline
from pael.principal import BetaParams, solve_lambda_row, solve_principal
from pael.smoothing import KernelSpec, kernel_weights

__all__ = [
    "BetaParams",
    "GeneratorConfig",
    "HypothesisSpec",
    "KernelSpec",
    "LocalObjective",
    "RunConfig",
    "StepSchedule",
    "agent_step",
    "aggregate_estimates",
    "draw_heldout",
    "generate",
    "kernel_weights",
    "local_risk",
    "predict",
    "risk_gradient",
    "run",
    "run_baseline",
    "solve_lambda_row",
    "solve_principal",
]

__version__ = "0.1.0"
