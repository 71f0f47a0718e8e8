"""Optimizer loop shared by the FBSDE, deep hedging and pasting learners."""

import logging
import time
from dataclasses import dataclass
from typing import Callable, List, Sequence, Tuple

import numpy as np

from autodiff.nets import ParamStore
from autodiff.optim import OptimState, optimizer_step
from autodiff.tape import Tape, Tensor
from market.paths import PathBatch, TimeGrid, sample_brownian
from shared.errors import DivergenceError, NonFiniteError
from shared.schemas import TrainRecord, TrainSection

logger = logging.getLogger(__name__)

LossFn = Callable[[PathBatch], Tuple[Tensor, float]]


@dataclass(frozen=True)
class TrainConfig:
    """Hyperparameters of one training run."""

    epochs: int = 2000
    batch_size: int = 256
    learning_rate: float = 1e-3
    sgd_learning_rate: float = 1e-4
    sgd_fraction: float = 0.0
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    log_every: int = 100
    divergence_factor: float = 1e6

    @classmethod
    def from_section(cls, section: TrainSection) -> "TrainConfig":
        return cls(
            epochs=section.epochs,
            batch_size=section.batch_size,
            learning_rate=section.learning_rate,
            sgd_learning_rate=section.sgd_learning_rate,
            sgd_fraction=section.sgd_fraction,
            beta1=section.beta1,
            beta2=section.beta2,
            adam_eps=section.adam_eps,
            seed=section.seed,
            log_every=section.log_every,
            divergence_factor=section.divergence_factor,
        )

    @property
    def adam_epochs(self) -> int:
        return self.epochs - int(round(self.sgd_fraction * self.epochs))


@dataclass
class TrainOutcome:
    """History and the optimizer state left by the last epoch."""

    history: List[TrainRecord]
    optimizer: OptimState


def training_batch(grid: TimeGrid, config: TrainConfig, epoch: int) -> PathBatch:
    """Paths of one epoch; epoch e reads path indices e·batch .. (e+1)·batch − 1."""
    return sample_brownian(grid, config.batch_size, config.seed, start=epoch * config.batch_size)


def run_training(
    name: str,
    stores: Sequence[ParamStore],
    loss_fn: LossFn,
    grid: TimeGrid,
    config: TrainConfig,
) -> TrainOutcome:
    """Sample → loss → backward → update for ``config.epochs`` epochs.

    Args:
        name: Learner name used in logs and error stages.
        stores: Trainable parameter stores, updated in place.
        loss_fn: Builds the normalized loss tensor (and its raw value) for a
            batch inside the active tape.
        grid: Time grid of the model.
        config: Hyperparameters.

    Raises:
        NonFiniteError: If a loss or gradient is NaN or infinite.
        DivergenceError: If the loss exceeds divergence_factor × initial loss.
    """
    optimizer = OptimState.adam(stores, config.learning_rate, config.beta1, config.beta2, config.adam_eps)
    history: List[TrainRecord] = []
    initial_loss = None
    started = time.perf_counter()
    logger.info(f"Training {name}: {config.epochs} epochs, batch {config.batch_size}, seed {config.seed}")

    for epoch in range(config.epochs):
        if epoch == config.adam_epochs:
            logger.info(f"{name}: switching to SGD fine-tuning at epoch {epoch}")
            optimizer = OptimState.sgd(config.sgd_learning_rate, step=optimizer.step)
        phase = optimizer.algorithm.value

        batch = training_batch(grid, config, epoch)
        with Tape() as tape:
            loss, raw_loss = loss_fn(batch)
        value = float(loss.data)
        if not np.isfinite(value):
            raise NonFiniteError(f"{name}.train", epoch=epoch, detail="loss")
        if initial_loss is None:
            initial_loss = abs(value)
        elif initial_loss > 0 and abs(value) > config.divergence_factor * initial_loss:
            raise DivergenceError(
                f"{name}.train", epoch=epoch, detail=f"loss {value:.4g} exceeds {config.divergence_factor:g}× initial"
            )

        tape.backward(loss)
        grads = [tape.param_grads(store) for store in stores]
        try:
            optimizer_step(optimizer, stores, grads)
        except NonFiniteError as exc:
            raise NonFiniteError(f"{name}.train", epoch=epoch, detail="gradient") from exc

        history.append(
            TrainRecord(
                epoch=epoch,
                loss=value,
                raw_loss=float(raw_loss),
                phase=phase,
                wall_time=time.perf_counter() - started,
            )
        )
        if epoch % config.log_every == 0 or epoch == config.epochs - 1:
            logger.info(f"{name} epoch {epoch}: loss={value:.6e} raw={raw_loss:.6e} ({phase})")

    return TrainOutcome(history=history, optimizer=optimizer)
