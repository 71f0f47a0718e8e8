"""Adam and SGD updates over a list of flat parameter stores."""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import List, Sequence

import numpy as np

from autodiff.nets import ParamStore
from shared.errors import DimensionMismatch, NonFiniteError

logger = logging.getLogger(__name__)


class OptimAlgorithm(str, Enum):
    ADAM = "adam"
    SGD = "sgd"


@dataclass
class OptimState:
    """Optimizer hyperparameters, moment buffers and step counter.

    Moment buffers hold one array per store, congruent with ``store.flat``.
    """

    algorithm: OptimAlgorithm
    learning_rate: float
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    first_moment: List[np.ndarray] = field(default_factory=list)
    second_moment: List[np.ndarray] = field(default_factory=list)

    @classmethod
    def adam(
        cls,
        stores: Sequence[ParamStore],
        learning_rate: float = 1e-3,
        beta1: float = 0.9,
        beta2: float = 0.999,
        eps: float = 1e-8,
    ) -> "OptimState":
        return cls(
            algorithm=OptimAlgorithm.ADAM,
            learning_rate=learning_rate,
            beta1=beta1,
            beta2=beta2,
            eps=eps,
            first_moment=[np.zeros(s.size) for s in stores],
            second_moment=[np.zeros(s.size) for s in stores],
        )

    @classmethod
    def sgd(cls, learning_rate: float = 1e-2, step: int = 0) -> "OptimState":
        return cls(algorithm=OptimAlgorithm.SGD, learning_rate=learning_rate, step=step)


def optimizer_step(state: OptimState, stores: Sequence[ParamStore], grads: Sequence[np.ndarray]) -> Sequence[ParamStore]:
    """Apply one in-place update to every store.

    Raises:
        DimensionMismatch: If gradients are not congruent with the stores.
        NonFiniteError: If any gradient entry is NaN or infinite.
    """
    if len(grads) != len(stores):
        raise DimensionMismatch(f"{len(grads)} gradients for {len(stores)} parameter stores")
    for store, grad in zip(stores, grads):
        if np.shape(grad) != store.flat.shape:
            raise DimensionMismatch(f"gradient shape {np.shape(grad)} != parameter shape {store.flat.shape}")
        if not np.all(np.isfinite(grad)):
            raise NonFiniteError("optimizer", step=state.step, detail="gradient")

    state.step += 1
    if state.algorithm == OptimAlgorithm.SGD:
        for store, grad in zip(stores, grads):
            store.flat -= state.learning_rate * grad
        return stores

    if len(state.first_moment) != len(stores):
        raise DimensionMismatch("Adam moment buffers do not match the parameter stores")
    bias1 = 1.0 - state.beta1**state.step
    bias2 = 1.0 - state.beta2**state.step
    for store, grad, m, v in zip(stores, grads, state.first_moment, state.second_moment):
        m *= state.beta1
        m += (1.0 - state.beta1) * grad
        v *= state.beta2
        v += (1.0 - state.beta2) * grad * grad
        store.flat -= state.learning_rate * (m / bias1) / (np.sqrt(v / bias2) + state.eps)
    return stores
