"""Leading-order strategy until T − t < κ√λ, learned networks afterwards."""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from autodiff.nets import EVAL, TRAIN
from market.paths import PathBatch, PathState, TimeGrid
from engines.base import Policy, StrategyEngine
from engines.deephedge import DeepHedgeModel, HedgeRollout, network_rate, policy_rollout, to_checkpoint, train_networks
from engines.ergodic import LeadingOrderEngine
from engines.training import TrainConfig, TrainOutcome
from shared.schemas import CheckpointFile, EngineKind

logger = logging.getLogger(__name__)

WINDOW_ROUNDING = 1e-9


def default_kappa(grid: TimeGrid, lam: float) -> float:
    """κ leaving a learned window of max(1 day, 10Δt) before the horizon."""
    return max(1.0, 10.0 * grid.dt) / np.sqrt(lam)


def switch_index(grid: TimeGrid, kappa: float, lam: float) -> int:
    """M = min{m : T − t_m < κ√λ}, in 0..N."""
    if kappa <= 0:
        raise ValueError(f"kappa must be > 0, got {kappa}")
    window_steps = kappa * np.sqrt(lam) / grid.dt
    steps_left = grid.n_steps - np.arange(grid.n_steps + 1)
    # T − t_m counted in whole steps; a window of exactly k steps is not crossed at k
    hits = np.flatnonzero(steps_left < window_steps - WINDOW_ROUNDING)
    return int(hits[0]) if hits.size else grid.n_steps


@dataclass
class PastingModel:
    """Terminal-phase networks plus the leading-order engine before the seam."""

    deep: DeepHedgeModel
    lead: LeadingOrderEngine
    kappa: float

    @property
    def switch(self) -> int:
        return switch_index(self.deep.grid, self.kappa, self.deep.cost.lam)

    @property
    def trainable(self):
        return self.deep.nets[self.switch :]

    @classmethod
    def create(cls, deep: DeepHedgeModel, lead: LeadingOrderEngine, kappa: Optional[float] = None) -> "PastingModel":
        if kappa is None:
            kappa = default_kappa(deep.grid, deep.cost.lam)
        model = cls(deep, lead, kappa)
        logger.info(f"Pasting switch at step {model.switch} of {deep.grid.n_steps} (kappa={kappa:.4g})")
        return model


def pasted_rollout(model: PastingModel, batch: PathBatch, mode: str = TRAIN) -> HedgeRollout:
    """Full-horizon rollout; only steps m ≥ M reach the tape."""
    return policy_rollout(model.deep, batch, mode, model.switch, model.lead.rate)


def train_pasted(model: PastingModel, config: TrainConfig) -> TrainOutcome:
    """Train networks M..N−1 on the full-horizon goal."""
    return train_networks("pasting", model.deep, list(model.trainable), config, model.switch, model.lead.rate)


class _PastingPolicy(Policy):
    def __init__(self, model: PastingModel):
        self.model = model
        self.switch = model.switch

    def rate(self, state: PathState) -> np.ndarray:
        if state.m < self.switch:
            return self.model.lead.rate(state.phi, state.phi_bar, state.lam_t)
        return network_rate(self.model.deep, state.m, state.t, state.W, state.phi, EVAL).data


class PastingEngine(StrategyEngine):
    name = "pasting"

    def __init__(self, model: PastingModel):
        super().__init__(model.deep.market, model.deep.cost, model.deep.grid)
        self.model = model

    def policy(self, n_paths: int) -> Policy:
        return _PastingPolicy(self.model)


def pasting_checkpoint(model: PastingModel, outcome: Optional[TrainOutcome] = None) -> CheckpointFile:
    return to_checkpoint(model.deep, outcome, kind=EngineKind.PASTING, switch_index=model.switch, kappa=model.kappa)
