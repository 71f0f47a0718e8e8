"""Reverse-mode autodiff, per-step networks, optimizers and checkpoints."""

from autodiff.nets import EVAL, TRAIN, NetSpec, ParamStore, apply_net, backward, forward, init_params
from autodiff.optim import OptimAlgorithm, OptimState, optimizer_step
from autodiff.tape import Tape, Tensor

__all__ = [
    "EVAL",
    "TRAIN",
    "NetSpec",
    "OptimAlgorithm",
    "OptimState",
    "ParamStore",
    "Tape",
    "Tensor",
    "apply_net",
    "backward",
    "forward",
    "init_params",
    "optimizer_step",
]
