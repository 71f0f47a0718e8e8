"""Quadratic-cost closed forms: finite-horizon g(t, x) and the optimal strategy."""

import logging
from typing import Tuple, Union

import numpy as np

from market.frictionless import initial_deviation, target_volatility
from market.paths import PathBatch, PathState, TimeGrid
from engines.base import Policy, StrategyEngine, simulate
from shared.schemas import ClosedFormMode, CostSpec, LiquidityKind, MarketParams

logger = logging.getLogger(__name__)


def _require_quadratic(cost: CostSpec) -> None:
    if not cost.is_quadratic:
        raise ValueError(f"closed form needs quadratic costs, got {cost.kind.value}")


def quadratic_finite_horizon_g(
    cost: CostSpec,
    t: Union[float, np.ndarray],
    x: Union[float, np.ndarray],
    gamma: float,
    sigma: float,
    lam: float,
    horizon: float,
) -> Union[float, np.ndarray]:
    """g(t, x) = −√(γσ²λ)·x·tanh(√(γσ²/λ)(T − t))."""
    _require_quadratic(cost)
    k = np.sqrt(gamma * sigma**2 / lam)
    return -np.sqrt(gamma * sigma**2 * lam) * x * np.tanh(k * (horizon - t))


class _FeedbackPolicy(Policy):
    def __init__(self, engine: "ClosedFormEngine"):
        self.engine = engine

    def rate(self, state: PathState) -> np.ndarray:
        e = self.engine
        g = quadratic_finite_horizon_g(
            e.cost, state.t, state.phi - state.phi_bar, e.market.gamma, e.market.sigma, e.cost.lam, e.grid.horizon
        )
        return g / e.cost.lam


class _ExplicitPolicy(Policy):
    """Carries the left-point sum Σ ā·ΔW_u / cosh(k(T − u)) per path."""

    def __init__(self, engine: "ClosedFormEngine", n_paths: int):
        self.engine = engine
        self.integral = np.zeros(n_paths)

    def rate(self, state: PathState) -> np.ndarray:
        e = self.engine
        k, T = e.k, e.grid.horizon
        return -k * np.sinh(k * (T - state.t)) * (e.delta0 / np.cosh(k * T) - self.integral)

    def advance(self, state: PathState, dW: np.ndarray) -> None:
        e = self.engine
        self.integral = self.integral + e.a_bar * dW / np.cosh(e.k * (e.grid.horizon - state.t))


class ClosedFormEngine(StrategyEngine):
    """Optimal strategy for quadratic costs and constant liquidity.

    ``feedback`` mode applies φ̇ = g(t, φ − φ̄)/λ; ``explicit`` mode
    evaluates φ̇_t = −k·sinh(k(T−t))·[Δφ₀/cosh(kT) − Σ_{u<t} āΔW_u/cosh(k(T−u))]
    with k = √(γσ²/λ). Both discretize the same continuous strategy and
    agree to first order in Δt.
    """

    name = "closed_form"

    def __init__(
        self,
        market: MarketParams,
        cost: CostSpec,
        grid: TimeGrid,
        mode: Union[ClosedFormMode, str] = ClosedFormMode.FEEDBACK,
    ):
        _require_quadratic(cost)
        if cost.liquidity.kind != LiquidityKind.CONSTANT or cost.liquidity.value != 1.0:
            raise ValueError("closed form assumes constant liquidity Λ ≡ 1")
        if cost.lam <= 0:
            raise ValueError("closed form needs λ > 0")
        super().__init__(market, cost, grid)
        self.mode = ClosedFormMode(mode)
        self.k = float(np.sqrt(market.gamma * market.sigma**2 / cost.lam))
        self.a_bar = target_volatility(market)
        self.delta0 = initial_deviation(market)

    def policy(self, n_paths: int) -> Policy:
        if self.mode == ClosedFormMode.EXPLICIT:
            return _ExplicitPolicy(self, n_paths)
        return _FeedbackPolicy(self)


def ground_truth_quadratic_strategy(
    market: MarketParams,
    cost: CostSpec,
    batch: PathBatch,
    mode: Union[ClosedFormMode, str] = ClosedFormMode.EXPLICIT,
) -> Tuple[ClosedFormEngine, np.ndarray]:
    """Closed-form engine on the batch grid plus its (n_paths, N) rates."""
    grid = TimeGrid(batch.n_steps, market.horizon)
    engine = ClosedFormEngine(market, cost, grid, mode)
    rates = simulate(engine, batch, record=True).rates
    return engine, rates
