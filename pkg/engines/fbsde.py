"""Deep FBSDE solver for the frictional deviation Δφ and marginal cost Y.

Discrete system on the grid, driven by the batch increments ΔW_m:

    Y_{m+1}  = Y_m + γσ²·Δφ_m·Δt + Z_m·ΔW_m
    Δφ_{m+1} = Δφ_m + (G′)⁻¹(Y_m/λ_m)·Δt − ā·ΔW_m

with Z_m = F^{θ_m}(W_m, Δφ_m), learnable Y_0 and loss mean(Y_N²). The state
is carried in normalized units d = Δφ/s, y = Y/Y_s, z = Z·√T/Y_s with
Y_s = λ·G′(k·s), k = √(γσ²/λ); for quadratic costs Y_s = √(γσ²λ)·s.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional

import numpy as np

from autodiff.checkpoint import optim_to_file, spec_from_file, spec_to_file, store_from_file, store_to_file
from autodiff.nets import EVAL, TRAIN, NetSpec, ParamStore, apply_net, init_params
from autodiff.tape import Tensor, active_tape, mean, stack_columns, take
from market.costs import cost_marginal, cost_marginal_inverse, liquidity_level
from market.frictionless import initial_deviation, target_volatility
from market.paths import PathBatch, PathState, TimeGrid
from engines.base import Policy, StrategyEngine
from engines.training import TrainConfig, TrainOutcome, run_training
from shared.errors import DimensionMismatch, NonFiniteError
from shared.schemas import CheckpointFile, CostSpec, EngineKind, InitScheme, MarketParams

logger = logging.getLogger(__name__)


@dataclass
class FbsdeModel:
    """Learnable Y_0 plus one Z network per time step."""

    market: MarketParams
    cost: CostSpec
    grid: TimeGrid
    spec: NetSpec
    nets: List[ParamStore]
    y0: ParamStore
    bn_momentum: float = 0.1

    def __post_init__(self):
        if len(self.nets) != self.grid.n_steps:
            raise DimensionMismatch(f"{len(self.nets)} networks for {self.grid.n_steps} steps")
        if self.cost.lam <= 0:
            raise ValueError("FBSDE solver needs λ > 0")

    @classmethod
    def create(
        cls,
        market: MarketParams,
        cost: CostSpec,
        grid: TimeGrid,
        hidden=(15,),
        init: InitScheme = InitScheme.ZERO_OUTPUT,
        seed: int = 0,
        bn_momentum: float = 0.1,
    ) -> "FbsdeModel":
        spec = NetSpec.fbsde(tuple(hidden))
        nets = [init_params(spec, init, seed, m) for m in range(grid.n_steps)]
        return cls(market, cost, grid, spec, nets, ParamStore([("y0", (1,))]), bn_momentum)

    @property
    def k(self) -> float:
        return float(np.sqrt(self.market.gamma * self.market.sigma**2 / self.cost.lam))

    @property
    def y_scale(self) -> float:
        return float(self.cost.lam * cost_marginal(self.cost, self.k * self.market.shares))

    @property
    def z_scale(self) -> float:
        return self.y_scale / np.sqrt(self.grid.horizon)

    @property
    def delta0(self) -> float:
        return initial_deviation(self.market)

    def copy(self) -> "FbsdeModel":
        return FbsdeModel(
            self.market, self.cost, self.grid, self.spec, [n.copy() for n in self.nets], self.y0.copy(), self.bn_momentum
        )


@dataclass
class _Coefficients:
    y_from_d: float
    d_from_rate: float
    d_from_dw: float
    sqrt_t: float
    liquidity: np.ndarray


def _coefficients(model: FbsdeModel) -> _Coefficients:
    market, grid = model.market, model.grid
    s = market.shares
    return _Coefficients(
        y_from_d=market.gamma * market.sigma**2 * s * grid.dt / model.y_scale,
        d_from_rate=model.k * grid.dt,
        d_from_dw=-target_volatility(market) / s,
        sqrt_t=float(np.sqrt(grid.horizon)),
        liquidity=np.asarray(liquidity_level(model.cost.liquidity, grid.times), dtype=np.float64),
    )


def _step(model: FbsdeModel, c: _Coefficients, m: int, d, y, z, dW: np.ndarray):
    """One step of the normalized system; works on arrays and tensors."""
    y_next = y + c.y_from_d * d + z * (dW / c.sqrt_t)
    rate = cost_marginal_inverse(model.cost, y * (1.0 / c.liquidity[m]))
    d_next = d + c.d_from_rate * rate + c.d_from_dw * dW
    return d_next, y_next


@dataclass
class FbsdeRollout:
    """Normalized trajectories of one rollout.

    Attributes:
        delta: (n, N+1) Δφ/s.
        y: (n, N+1) Y/Y_s.
        z: (n, N) Z·√T/Y_s.
        y_terminal: Y_N/Y_s as a tensor (carries gradients when recorded).
        y_scale: Y_s, to convert back to raw units.
    """

    delta: np.ndarray
    y: np.ndarray
    z: np.ndarray
    y_terminal: Tensor
    y_scale: float


def rollout(model: FbsdeModel, batch: PathBatch, mode: str = TRAIN) -> FbsdeRollout:
    """Unroll the discrete forward/backward system along ``batch``.

    Raises:
        DimensionMismatch: If the batch and the model grids differ.
        NonFiniteError: If any state becomes NaN or infinite.
    """
    grid = model.grid
    if batch.n_steps != grid.n_steps:
        raise DimensionMismatch(f"batch has {batch.n_steps} steps, model has {grid.n_steps}")
    n, N = batch.n_paths, grid.n_steps
    c = _coefficients(model)
    levels = batch.levels()

    leaves = model.y0.leaves()
    tape = active_tape()
    if tape is not None:
        tape.watch(model.y0, leaves)
    y = leaves["y0"] * np.ones(n)
    d = Tensor(np.full(n, model.delta0 / model.market.shares))

    deltas = np.empty((n, N + 1))
    ys = np.empty((n, N + 1))
    zs = np.empty((n, N))
    deltas[:, 0], ys[:, 0] = d.data, y.data
    for m in range(N):
        inputs = stack_columns([levels[:, m] / c.sqrt_t, d])
        z = take(apply_net(model.spec, model.nets[m], inputs, mode, model.bn_momentum), (slice(None), 0))
        d, y = _step(model, c, m, d, y, z, batch.increments[:, m])
        if not (np.all(np.isfinite(d.data)) and np.all(np.isfinite(y.data))):
            raise NonFiniteError("fbsde.rollout", step=m + 1)
        zs[:, m] = z.data
        deltas[:, m + 1], ys[:, m + 1] = d.data, y.data
    return FbsdeRollout(deltas, ys, zs, y, model.y_scale)


def terminal_loss(result: FbsdeRollout) -> Tensor:
    """mean(Y_N²) in normalized units; multiply by Y_s² for the raw value."""
    return mean(result.y_terminal * result.y_terminal)


def raw_terminal_loss(result: FbsdeRollout) -> float:
    return float(np.mean(result.y[:, -1] ** 2)) * result.y_scale**2


def train(model: FbsdeModel, config: TrainConfig) -> TrainOutcome:
    """Fit Y_0 and the Z networks so that Y_N ≈ 0. Updates ``model`` in place."""

    def loss_fn(batch: PathBatch):
        result = rollout(model, batch, TRAIN)
        return terminal_loss(result), raw_terminal_loss(result)

    return run_training("fbsde", [model.y0, *model.nets], loss_fn, model.grid, config)


class _FbsdePolicy(Policy):
    def __init__(self, engine: "FbsdeEngine", n_paths: int):
        self.engine = engine
        model = engine.model
        self.d = np.full(n_paths, model.delta0 / model.market.shares)
        self.y = np.full(n_paths, float(model.y0["y0"][0]))

    def rate(self, state: PathState) -> np.ndarray:
        model = self.engine.model
        return cost_marginal_inverse(model.cost, self.y * model.y_scale / state.lam_t)

    def advance(self, state: PathState, dW: np.ndarray) -> None:
        model, c = self.engine.model, self.engine.coefficients
        inputs = np.stack([state.W / c.sqrt_t, self.d], axis=1)
        z = apply_net(model.spec, model.nets[state.m], inputs, EVAL, model.bn_momentum).data[:, 0]
        self.d, self.y = _step(model, c, state.m, self.d, self.y, z, dW)


class FbsdeEngine(StrategyEngine):
    """Trading rate φ̇ = (G′)⁻¹(Y/λ_t) from a trained FBSDE model.

    The policy advances its own (Δφ, Y) alongside the evaluated path using
    eval-mode batch normalization.
    """

    name = "fbsde"

    def __init__(self, model: FbsdeModel):
        super().__init__(model.market, model.cost, model.grid)
        self.model = model
        self.coefficients = _coefficients(model)

    def policy(self, n_paths: int) -> Policy:
        return _FbsdePolicy(self, n_paths)


def strategy(model: FbsdeModel) -> FbsdeEngine:
    return FbsdeEngine(model)


def to_checkpoint(model: FbsdeModel, outcome: Optional[TrainOutcome] = None) -> CheckpointFile:
    return CheckpointFile(
        kind=EngineKind.FBSDE,
        market=model.market,
        cost=model.cost,
        n_steps=model.grid.n_steps,
        net_spec=spec_to_file(model.spec),
        nets=[store_to_file(n) for n in model.nets],
        y0=store_to_file(model.y0),
        bn_momentum=model.bn_momentum,
        optimizer=optim_to_file(outcome.optimizer) if outcome is not None else None,
    )


def from_checkpoint(checkpoint: CheckpointFile) -> FbsdeModel:
    if checkpoint.kind != EngineKind.FBSDE or checkpoint.y0 is None:
        raise ValueError(f"not an FBSDE checkpoint: {checkpoint.kind.value}")
    grid = TimeGrid(checkpoint.n_steps, checkpoint.market.horizon)
    return FbsdeModel(
        market=checkpoint.market,
        cost=checkpoint.cost,
        grid=grid,
        spec=spec_from_file(checkpoint.net_spec),
        nets=[store_from_file(n) for n in checkpoint.nets],
        y0=store_from_file(checkpoint.y0),
        bn_momentum=checkpoint.bn_momentum,
    )
