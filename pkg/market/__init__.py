"""Cost functions, market parameters, time grids and path primitives."""

from market.costs import (
    cost_legendre,
    cost_legendre_inverse,
    cost_level,
    cost_marginal,
    cost_marginal_inverse,
    cost_value,
    liquidity_level,
)
from market.frictionless import (
    calibrated_market,
    endowment_volatility,
    frictionless_path,
    frictionless_position,
    goal_integrand,
    initial_deviation,
    target_volatility,
)
from market.paths import PathBatch, PathState, TimeGrid, sample_brownian

__all__ = [
    "PathBatch",
    "PathState",
    "TimeGrid",
    "calibrated_market",
    "cost_legendre",
    "cost_legendre_inverse",
    "cost_level",
    "cost_marginal",
    "cost_marginal_inverse",
    "cost_value",
    "endowment_volatility",
    "frictionless_path",
    "frictionless_position",
    "goal_integrand",
    "initial_deviation",
    "liquidity_level",
    "sample_brownian",
    "target_volatility",
]
