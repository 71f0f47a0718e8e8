"""Shared fixtures: calibrated markets, cost specs and small grids."""

import pytest

from engines.ergodic import ShootingConfig, solve_for_market
from market.frictionless import POWER_LAMBDA, POWER_XI, QUADRATIC_LAMBDA, calibrated_market
from market.paths import TimeGrid
from shared.schemas import CostSpec


@pytest.fixture
def quadratic_cost():
    return CostSpec(kind="quadratic", lam=QUADRATIC_LAMBDA)


@pytest.fixture
def power_cost():
    return CostSpec(kind="power", q=1.5, lam=POWER_LAMBDA)


@pytest.fixture
def market_t10():
    """Calibrated quadratic-cost market over 10 trading days."""
    return calibrated_market(10.0)


@pytest.fixture
def power_market_t10():
    return calibrated_market(10.0, xi_vol=POWER_XI)


@pytest.fixture
def grid_t10():
    return TimeGrid(50, 10.0)


@pytest.fixture(scope="session")
def quadratic_solution():
    """Ergodic solution for quadratic costs, solved once per session."""
    market = calibrated_market(10.0)
    return solve_for_market(market, CostSpec(kind="quadratic", lam=QUADRATIC_LAMBDA), ShootingConfig())


@pytest.fixture(scope="session")
def power_solution():
    market = calibrated_market(10.0, xi_vol=POWER_XI)
    return solve_for_market(market, CostSpec(kind="power", q=1.5, lam=POWER_LAMBDA), ShootingConfig())
