"""Per-time-step MLPs with batch normalization backed by flat parameter stores."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Tuple, Union

import numpy as np

from autodiff.tape import Tape, Tensor, active_tape, affine, batch_norm, relu
from shared.errors import DimensionMismatch
from shared.schemas import InitScheme

logger = logging.getLogger(__name__)

TRAIN = "train"
EVAL = "eval"

Layout = List[Tuple[str, Tuple[int, ...]]]


@dataclass(frozen=True)
class NetSpec:
    """Architecture: input → (affine → [BN] → ReLU)* → affine → output."""

    input_dim: int
    hidden: Tuple[int, ...]
    output_dim: int
    batchnorm: Tuple[bool, ...]

    def __post_init__(self):
        object.__setattr__(self, "hidden", tuple(self.hidden))
        object.__setattr__(self, "batchnorm", tuple(self.batchnorm))
        if len(self.batchnorm) != len(self.hidden):
            raise ValueError("batchnorm needs one flag per hidden layer")
        if self.input_dim < 1 or self.output_dim < 1 or any(w < 1 for w in self.hidden):
            raise ValueError("layer widths must be positive")

    @classmethod
    def fbsde(cls, hidden: Tuple[int, ...] = (15,)) -> "NetSpec":
        """Z network on (W, Δφ)."""
        return cls(2, tuple(hidden), 1, (True,) * len(hidden))

    @classmethod
    def deep_hedging(cls, hidden: Tuple[int, ...] = (10, 15, 10)) -> "NetSpec":
        """Rate network on (t, W, φ)."""
        return cls(3, tuple(hidden), 1, (True,) * len(hidden))

    @property
    def widths(self) -> List[int]:
        return [self.input_dim, *self.hidden, self.output_dim]

    def layout(self) -> Layout:
        """Named parameter shapes in storage order."""
        layout: Layout = []
        widths = self.widths
        for layer in range(len(widths) - 1):
            fan_in, fan_out = widths[layer], widths[layer + 1]
            layout.append((f"w{layer + 1}", (fan_out, fan_in)))
            layout.append((f"b{layer + 1}", (fan_out,)))
            if layer < len(self.hidden) and self.batchnorm[layer]:
                layout.append((f"bn{layer + 1}.gamma", (fan_out,)))
                layout.append((f"bn{layer + 1}.beta", (fan_out,)))
        return layout


class ParamStore:
    """Flat float64 parameter vector with named reshaped views.

    Batch-normalization running statistics live in ``buffers`` and are not
    trainable.
    """

    def __init__(self, layout: Layout, values: Optional[np.ndarray] = None):
        self.layout = [(name, tuple(shape)) for name, shape in layout]
        size = sum(int(np.prod(shape)) for _, shape in self.layout)
        if values is None:
            self.flat = np.zeros(size)
        else:
            values = np.asarray(values, dtype=np.float64)
            if values.shape != (size,):
                raise DimensionMismatch(f"expected {size} parameter values, got {values.shape}")
            self.flat = values.copy()
        self.views: Dict[str, np.ndarray] = {}
        offset = 0
        for name, shape in self.layout:
            count = int(np.prod(shape))
            self.views[name] = self.flat[offset : offset + count].reshape(shape)
            offset += count
        self.buffers: Dict[str, np.ndarray] = {}

    @property
    def size(self) -> int:
        return self.flat.size

    def __getitem__(self, name: str) -> np.ndarray:
        return self.views[name]

    def __contains__(self, name: str) -> bool:
        return name in self.views

    def leaves(self) -> Dict[str, Tensor]:
        """Fresh gradient-tracking tensors viewing the stored values."""
        return {name: Tensor(view, requires_grad=True) for name, view in self.views.items()}

    def flatten_grads(self, leaves: Dict[str, Tensor]) -> np.ndarray:
        flat = np.zeros(self.size)
        offset = 0
        for name, shape in self.layout:
            count = int(np.prod(shape))
            grad = leaves[name].grad
            if grad is not None:
                flat[offset : offset + count] = grad.reshape(-1)
            offset += count
        return flat

    def copy(self) -> "ParamStore":
        clone = ParamStore(self.layout, self.flat)
        clone.buffers = {name: value.copy() for name, value in self.buffers.items()}
        return clone


def init_params(spec: NetSpec, scheme: Union[InitScheme, str] = InitScheme.GLOROT, seed: int = 0, index: int = 0) -> ParamStore:
    """Create the parameter store of one network.

    Weights are uniform on ±√(6/(fan_in+fan_out)), biases zero, BN scale 1
    and shift 0. ``zero_output`` also zeroes the output layer so the network
    emits 0 while staying trainable.

    Args:
        spec: Architecture.
        scheme: Initialization scheme.
        seed: Stream key shared by all networks of a model.
        index: Network index (time step), selecting its own stream.
    """
    scheme = InitScheme(scheme)
    store = ParamStore(spec.layout())
    widths = spec.widths
    n_layers = len(widths) - 1
    rng = np.random.Generator(np.random.Philox(key=seed, counter=index << 128))
    for layer in range(n_layers):
        fan_in, fan_out = widths[layer], widths[layer + 1]
        weight = store[f"w{layer + 1}"]
        is_output = layer == n_layers - 1
        if scheme == InitScheme.ZEROS or (scheme == InitScheme.ZERO_OUTPUT and is_output):
            weight[...] = 0.0
        else:
            limit = np.sqrt(6.0 / (fan_in + fan_out))
            weight[...] = rng.uniform(-limit, limit, size=weight.shape)
        if layer < len(spec.hidden) and spec.batchnorm[layer]:
            store[f"bn{layer + 1}.gamma"][...] = 1.0
            store.buffers[f"bn{layer + 1}.mean"] = np.zeros(fan_out)
            store.buffers[f"bn{layer + 1}.var"] = np.ones(fan_out)
    return store


def apply_net(
    spec: NetSpec,
    params: ParamStore,
    inputs: Union[Tensor, np.ndarray],
    mode: str = TRAIN,
    momentum: float = 0.1,
    eps: float = 1e-5,
) -> Tensor:
    """Evaluate the network inside the active tape (if any).

    Train mode normalizes with batch statistics and updates the running
    statistics in ``params.buffers``; eval mode uses the running statistics.

    Raises:
        DimensionMismatch: If the input width differs from ``spec.input_dim``.
        DegenerateBatch: On a train-mode batch of one row with BN layers.
    """
    x = inputs if isinstance(inputs, Tensor) else Tensor(inputs)
    if x.ndim != 2 or x.shape[1] != spec.input_dim:
        raise DimensionMismatch(f"expected (batch, {spec.input_dim}) inputs, got {x.shape}")
    if mode not in (TRAIN, EVAL):
        raise ValueError(f"unknown mode {mode!r}")

    leaves = params.leaves()
    tape = active_tape()
    if tape is not None:
        tape.watch(params, leaves)

    n_layers = len(spec.widths) - 1
    h = x
    for layer in range(n_layers):
        h = affine(h, leaves[f"w{layer + 1}"], leaves[f"b{layer + 1}"])
        if layer == n_layers - 1:
            break
        if spec.batchnorm[layer]:
            key = f"bn{layer + 1}"
            if mode == TRAIN:
                h, batch_mean, batch_var = batch_norm(h, leaves[f"{key}.gamma"], leaves[f"{key}.beta"], eps)
                running_mean = params.buffers[f"{key}.mean"]
                running_var = params.buffers[f"{key}.var"]
                running_mean *= 1.0 - momentum
                running_mean += momentum * batch_mean
                running_var *= 1.0 - momentum
                running_var += momentum * batch_var
            else:
                inv_std = 1.0 / np.sqrt(params.buffers[f"{key}.var"] + eps)
                h = (h - params.buffers[f"{key}.mean"]) * inv_std * leaves[f"{key}.gamma"] + leaves[f"{key}.beta"]
        h = relu(h)
    return h


def forward(
    spec: NetSpec,
    params: ParamStore,
    inputs: np.ndarray,
    mode: str = TRAIN,
    momentum: float = 0.1,
) -> Tuple[Tensor, Tape]:
    """Run one network on its own tape, tracking input gradients too."""
    with Tape() as tape:
        x = Tensor(inputs, requires_grad=True)
        tape.inputs = x
        tape.result = apply_net(spec, params, x, mode, momentum)
    return tape.result, tape


@dataclass
class NetGradients:
    """Gradients of a single-network tape."""

    params: np.ndarray
    inputs: np.ndarray


def backward(tape: Tape, params: ParamStore, output_grad: np.ndarray) -> NetGradients:
    """Jacobian-transpose product of a tape produced by :func:`forward`."""
    tape.backward(tape.result, output_grad)
    input_grad = tape.inputs.grad if tape.inputs.grad is not None else np.zeros_like(tape.inputs.data)
    return NetGradients(params=tape.param_grads(params), inputs=input_grad)
