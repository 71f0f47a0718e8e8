"""Strategy engine interface and the shared path simulator."""

import logging
from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Optional

import numpy as np

from market.costs import cost_level
from market.frictionless import endowment_volatility, frictionless_position, goal_integrand
from market.paths import PathBatch, PathState, TimeGrid
from shared.errors import DimensionMismatch, NonFiniteError
from shared.schemas import CostSpec, MarketParams

logger = logging.getLogger(__name__)


class Policy(ABC):
    """Per-batch trading policy; may carry state between steps."""

    @abstractmethod
    def rate(self, state: PathState) -> np.ndarray:
        """Trading rate φ̇ for every path at ``state.m``."""

    def advance(self, state: PathState, dW: np.ndarray) -> None:
        """Observe the increment ΔW_m after the rate at ``state`` was applied."""


class StrategyEngine(ABC):
    """Produces a trading rate from the path state at each grid time.

    Engines are immutable once built and may be shared across worker
    processes; per-batch state lives in the :class:`Policy` they hand out.
    """

    name: str = "engine"

    def __init__(self, market: MarketParams, cost: CostSpec, grid: TimeGrid):
        self.market = market
        self.cost = cost
        self.grid = grid

    @abstractmethod
    def policy(self, n_paths: int) -> Policy:
        """Fresh policy for a batch of ``n_paths`` paths starting at t = 0."""

    def check_grid(self, grid: TimeGrid) -> None:
        """Raise DimensionMismatch when evaluated on a different grid."""
        if grid.n_steps != self.grid.n_steps or grid.horizon != self.grid.horizon:
            raise DimensionMismatch(
                f"{self.name} engine built for N={self.grid.n_steps}, T={self.grid.horizon}; "
                f"got N={grid.n_steps}, T={grid.horizon}"
            )


class _ZeroPolicy(Policy):
    def rate(self, state: PathState) -> np.ndarray:
        return np.zeros_like(state.phi)


class ZeroRateEngine(StrategyEngine):
    """Never trades; the position stays at φ₀₋."""

    name = "zero"

    def policy(self, n_paths: int) -> Policy:
        return _ZeroPolicy()


@dataclass
class Simulation:
    """Per-path outcome of running one engine over a batch.

    Attributes:
        goal: Per-path discretized goal J (length n_paths).
        terminal_rate: Last emitted rate φ̇_{t_{N-1}}.
        rates: (n_paths, N) emitted rates, when recorded.
        positions: (n_paths, N+1) positions, when recorded.
    """

    goal: np.ndarray
    terminal_rate: np.ndarray
    rates: Optional[np.ndarray] = None
    positions: Optional[np.ndarray] = None


def simulate(
    engine: StrategyEngine,
    batch: PathBatch,
    record: bool = False,
) -> Simulation:
    """Run ``engine`` along ``batch`` and accumulate the goal functional.

    J = 1/(N+1)·Σ_{m=0}^{N} integrand_m, the mean over the N+1 grid points,
    with the rate at t_N set to 0.

    Raises:
        NonFiniteError: If a rate or position becomes NaN or infinite.
    """
    market, cost, grid = engine.market, engine.cost, engine.grid
    n, N = batch.n_paths, grid.n_steps
    if batch.n_steps != N:
        raise DimensionMismatch(f"batch has {batch.n_steps} steps, grid has {N}")
    dt = grid.dt
    policy = engine.policy(n)
    W = np.zeros(n)
    phi = np.full(n, market.phi_init)
    goal = np.zeros(n)
    rate = np.zeros(n)
    rates = np.empty((n, N)) if record else None
    positions = np.empty((n, N + 1)) if record else None

    for m in range(N):
        t = grid.times[m]
        xi = endowment_volatility(market, W)
        lam_t = cost_level(cost, t)
        state = PathState(m, t, W, phi, xi, frictionless_position(market, xi), lam_t)
        rate = policy.rate(state)
        if not np.all(np.isfinite(rate)):
            raise NonFiniteError(f"{engine.name}.simulate", step=m)
        goal = goal + goal_integrand(market, cost, phi, xi, rate, lam_t)
        if record:
            rates[:, m] = rate
            positions[:, m] = phi
        phi = phi + rate * dt
        dW = batch.increments[:, m]
        policy.advance(state, dW)
        W = W + dW

    xi = endowment_volatility(market, W)
    goal = goal + goal_integrand(market, cost, phi, xi, np.zeros(n), cost_level(cost, grid.horizon))
    goal = goal / (N + 1)
    if record:
        positions[:, N] = phi
    if not np.all(np.isfinite(goal)):
        raise NonFiniteError(f"{engine.name}.simulate", step=N)
    return Simulation(goal=goal, terminal_rate=rate, rates=rates, positions=positions)
