"""Deep hedging: one rate network per step trained on the discretized goal."""

import logging
from dataclasses import dataclass
from typing import Callable, List, Optional

import numpy as np

from autodiff.checkpoint import optim_to_file, spec_from_file, spec_to_file, store_from_file, store_to_file
from autodiff.nets import EVAL, TRAIN, NetSpec, ParamStore, apply_net, init_params
from autodiff.tape import Tensor, mean, stack_columns, take
from market.costs import cost_level
from market.frictionless import endowment_volatility, frictionless_position, goal_integrand
from market.paths import PathBatch, PathState, TimeGrid
from engines.base import Policy, StrategyEngine
from engines.training import TrainConfig, TrainOutcome, run_training
from shared.errors import DimensionMismatch, NonFiniteError
from shared.schemas import CheckpointFile, CostSpec, EngineKind, InitScheme, MarketParams

logger = logging.getLogger(__name__)

# Phase-1 rate: (phi, phi_bar, lam_t) -> rate, evaluated without gradients.
LeadRate = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass
class DeepHedgeModel:
    """One rate network per time step on inputs (t/T, W/√T, φ/s).

    The network output is a normalized rate; the emitted rate is output·s/T.
    """

    market: MarketParams
    cost: CostSpec
    grid: TimeGrid
    spec: NetSpec
    nets: List[ParamStore]
    bn_momentum: float = 0.1

    def __post_init__(self):
        if len(self.nets) != self.grid.n_steps:
            raise DimensionMismatch(f"{len(self.nets)} networks for {self.grid.n_steps} steps")

    @classmethod
    def create(
        cls,
        market: MarketParams,
        cost: CostSpec,
        grid: TimeGrid,
        hidden=(10, 15, 10),
        init: InitScheme = InitScheme.ZERO_OUTPUT,
        seed: int = 0,
        bn_momentum: float = 0.1,
    ) -> "DeepHedgeModel":
        spec = NetSpec.deep_hedging(tuple(hidden))
        nets = [init_params(spec, init, seed, m) for m in range(grid.n_steps)]
        return cls(market, cost, grid, spec, nets, bn_momentum)

    @property
    def rate_scale(self) -> float:
        return self.market.shares / self.grid.horizon

    @property
    def goal_scale(self) -> float:
        """γσ²s², the order of magnitude of J; divides the training loss."""
        return self.market.gamma * self.market.sigma**2 * self.market.shares**2

    def copy(self) -> "DeepHedgeModel":
        return DeepHedgeModel(self.market, self.cost, self.grid, self.spec, [n.copy() for n in self.nets], self.bn_momentum)


def network_rate(model: DeepHedgeModel, m: int, t: float, W, phi, mode: str):
    """Rate emitted by network m; a tensor when ``phi`` is one."""
    n = len(W)
    T = model.grid.horizon
    inputs = stack_columns([np.full(n, t / T), W / np.sqrt(T), phi * (1.0 / model.market.shares)])
    out = apply_net(model.spec, model.nets[m], inputs, mode, model.bn_momentum)
    return take(out, (slice(None), 0)) * model.rate_scale


@dataclass
class HedgeRollout:
    """Rates, positions and per-path goal of one rollout.

    Attributes:
        rates: (n, N) emitted rates.
        positions: (n, N+1) positions.
        path_goal: Per-path J; a tensor once the network phase has started.
    """

    rates: np.ndarray
    positions: np.ndarray
    path_goal: object

    def goal_values(self) -> np.ndarray:
        return self.path_goal.data if isinstance(self.path_goal, Tensor) else np.asarray(self.path_goal)


def policy_rollout(
    model: DeepHedgeModel,
    batch: PathBatch,
    mode: str = TRAIN,
    switch: int = 0,
    lead_rate: Optional[LeadRate] = None,
) -> HedgeRollout:
    """Unroll φ_{m+1} = φ_m + φ̇_m·Δt and accumulate the goal per path.

    Steps m < ``switch`` use ``lead_rate`` on plain arrays; later steps use
    the networks and are recorded on the active tape.

    Raises:
        DimensionMismatch: If the batch and the model grids differ.
        NonFiniteError: If a rate or the goal becomes NaN or infinite.
    """
    market, cost, grid = model.market, model.cost, model.grid
    if batch.n_steps != grid.n_steps:
        raise DimensionMismatch(f"batch has {batch.n_steps} steps, model has {grid.n_steps}")
    if switch > 0 and lead_rate is None:
        raise ValueError("a lead-phase rate is required when switch > 0")
    n, N = batch.n_paths, grid.n_steps
    dt = grid.dt
    levels = batch.levels()
    rates = np.empty((n, N))
    positions = np.empty((n, N + 1))

    phi = np.full(n, market.phi_init)
    goal = np.zeros(n)
    for m in range(N):
        t = grid.times[m]
        W = levels[:, m]
        xi = endowment_volatility(market, W)
        lam_t = cost_level(cost, t)
        if m < switch:
            rate = lead_rate(phi, frictionless_position(market, xi), lam_t)
        else:
            rate = network_rate(model, m, t, W, phi, mode)
        rate_values = rate.data if isinstance(rate, Tensor) else rate
        if not np.all(np.isfinite(rate_values)):
            raise NonFiniteError("deephedge.rollout", step=m)
        goal = goal + goal_integrand(market, cost, phi, xi, rate, lam_t)
        rates[:, m] = rate_values
        positions[:, m] = phi.data if isinstance(phi, Tensor) else phi
        phi = phi + rate * dt

    xi = endowment_volatility(market, levels[:, N])
    goal = goal + goal_integrand(market, cost, phi, xi, np.zeros(n), cost_level(cost, grid.horizon))
    goal = goal / (N + 1)
    positions[:, N] = phi.data if isinstance(phi, Tensor) else phi
    goal_values = goal.data if isinstance(goal, Tensor) else goal
    if not np.all(np.isfinite(goal_values)):
        raise NonFiniteError("deephedge.rollout", step=N)
    return HedgeRollout(rates=rates, positions=positions, path_goal=goal)


def rollout(model: DeepHedgeModel, batch: PathBatch, mode: str = TRAIN) -> HedgeRollout:
    return policy_rollout(model, batch, mode)


def goal_loss(result: HedgeRollout) -> Tensor:
    """−(batch mean of the per-path goal), in raw units."""
    goal = result.path_goal
    return -mean(goal if isinstance(goal, Tensor) else Tensor(goal))


def train_networks(
    name: str,
    model: DeepHedgeModel,
    stores: List[ParamStore],
    config: TrainConfig,
    switch: int = 0,
    lead_rate: Optional[LeadRate] = None,
) -> TrainOutcome:
    """Maximize the goal over ``stores`` (a subset of the model's networks)."""
    scale = model.goal_scale

    def loss_fn(batch: PathBatch):
        loss = goal_loss(policy_rollout(model, batch, TRAIN, switch, lead_rate))
        return loss * (1.0 / scale), float(loss.data)

    return run_training(name, stores, loss_fn, model.grid, config)


def train(model: DeepHedgeModel, config: TrainConfig) -> TrainOutcome:
    """Adam then SGD fine-tuning on all networks. Updates ``model`` in place."""
    return train_networks("deephedge", model, list(model.nets), config)


class _DeepHedgePolicy(Policy):
    def __init__(self, model: DeepHedgeModel):
        self.model = model

    def rate(self, state: PathState) -> np.ndarray:
        return network_rate(self.model, state.m, state.t, state.W, state.phi, EVAL).data


class DeepHedgeEngine(StrategyEngine):
    """Stateless map from (t, W, φ) to the learned rate, eval-mode BN."""

    name = "deephedge"

    def __init__(self, model: DeepHedgeModel):
        super().__init__(model.market, model.cost, model.grid)
        self.model = model

    def policy(self, n_paths: int) -> Policy:
        return _DeepHedgePolicy(self.model)


def strategy(model: DeepHedgeModel) -> DeepHedgeEngine:
    return DeepHedgeEngine(model)


def to_checkpoint(model: DeepHedgeModel, outcome: Optional[TrainOutcome] = None, kind: EngineKind = EngineKind.DEEPHEDGE, **extra) -> CheckpointFile:
    return CheckpointFile(
        kind=kind,
        market=model.market,
        cost=model.cost,
        n_steps=model.grid.n_steps,
        net_spec=spec_to_file(model.spec),
        nets=[store_to_file(n) for n in model.nets],
        bn_momentum=model.bn_momentum,
        optimizer=optim_to_file(outcome.optimizer) if outcome is not None else None,
        **extra,
    )


def from_checkpoint(checkpoint: CheckpointFile) -> DeepHedgeModel:
    grid = TimeGrid(checkpoint.n_steps, checkpoint.market.horizon)
    return DeepHedgeModel(
        market=checkpoint.market,
        cost=checkpoint.cost,
        grid=grid,
        spec=spec_from_file(checkpoint.net_spec),
        nets=[store_from_file(n) for n in checkpoint.nets],
        bn_momentum=checkpoint.bn_momentum,
    )
