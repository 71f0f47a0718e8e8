"""JSON (de)serialization of parameter stores, optimizer state and checkpoints."""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np

from autodiff.nets import NetSpec, ParamStore
from autodiff.optim import OptimAlgorithm, OptimState
from shared.schemas import CheckpointFile, NetSpecFile, OptimStateFile, ParamStoreFile

logger = logging.getLogger(__name__)


def store_to_file(store: ParamStore) -> ParamStoreFile:
    return ParamStoreFile(
        layout=[(name, list(shape)) for name, shape in store.layout],
        values=store.flat.tolist(),
        buffers={name: value.tolist() for name, value in store.buffers.items()},
    )


def store_from_file(model: ParamStoreFile) -> ParamStore:
    store = ParamStore([(name, tuple(shape)) for name, shape in model.layout], np.asarray(model.values))
    store.buffers = {name: np.asarray(values, dtype=np.float64) for name, values in model.buffers.items()}
    return store


def spec_to_file(spec: NetSpec) -> NetSpecFile:
    return NetSpecFile(
        input_dim=spec.input_dim,
        hidden=list(spec.hidden),
        output_dim=spec.output_dim,
        batchnorm=list(spec.batchnorm),
    )


def spec_from_file(model: NetSpecFile) -> NetSpec:
    return NetSpec(model.input_dim, tuple(model.hidden), model.output_dim, tuple(model.batchnorm))


def optim_to_file(state: OptimState) -> OptimStateFile:
    return OptimStateFile(
        algorithm=state.algorithm.value,
        learning_rate=state.learning_rate,
        beta1=state.beta1,
        beta2=state.beta2,
        eps=state.eps,
        step=state.step,
        first_moment=[m.tolist() for m in state.first_moment],
        second_moment=[v.tolist() for v in state.second_moment],
    )


def optim_from_file(model: OptimStateFile) -> OptimState:
    return OptimState(
        algorithm=OptimAlgorithm(model.algorithm),
        learning_rate=model.learning_rate,
        beta1=model.beta1,
        beta2=model.beta2,
        eps=model.eps,
        step=model.step,
        first_moment=[np.asarray(m, dtype=np.float64) for m in model.first_moment],
        second_moment=[np.asarray(v, dtype=np.float64) for v in model.second_moment],
    )


def save_checkpoint(checkpoint: CheckpointFile, path: Union[str, Path]) -> Path:
    """Write a checkpoint as JSON; floats use shortest round-trip repr."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(checkpoint.model_dump_json(by_alias=True, indent=1), encoding="utf-8")
    logger.info(f"Saved {checkpoint.kind.value} checkpoint with {len(checkpoint.nets)} networks to {path}")
    return path


def load_checkpoint(path: Union[str, Path], kind: Optional[str] = None) -> CheckpointFile:
    """Read a checkpoint, optionally checking its learner kind.

    Raises:
        FileNotFoundError: If the file does not exist.
        ValueError: If the stored kind differs from ``kind``.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"checkpoint not found: {path}")
    checkpoint = CheckpointFile.model_validate_json(path.read_text(encoding="utf-8"))
    if kind is not None and checkpoint.kind.value != kind:
        raise ValueError(f"checkpoint {path} holds a {checkpoint.kind.value} model, expected {kind}")
    logger.info(f"Loaded {checkpoint.kind.value} checkpoint from {path}")
    return checkpoint
