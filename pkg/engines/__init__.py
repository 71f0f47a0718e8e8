"""Strategy engines: closed form, leading order, FBSDE, deep hedging and pasting."""

from engines.base import Policy, Simulation, StrategyEngine, ZeroRateEngine, simulate
from engines.closed_form import ClosedFormEngine, ground_truth_quadratic_strategy, quadratic_finite_horizon_g
from engines.ergodic import (
    ErgodicSolution,
    LeadingOrderEngine,
    ShootingConfig,
    leading_order_rate,
    simulate_delta_sde,
    solve_ergodic_ode,
)

__all__ = [
    "ClosedFormEngine",
    "ErgodicSolution",
    "LeadingOrderEngine",
    "Policy",
    "ShootingConfig",
    "Simulation",
    "StrategyEngine",
    "ZeroRateEngine",
    "ground_truth_quadratic_strategy",
    "leading_order_rate",
    "quadratic_finite_horizon_g",
    "simulate",
    "simulate_delta_sde",
    "solve_ergodic_ode",
]
