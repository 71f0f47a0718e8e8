"""Reverse-mode automatic differentiation over NumPy arrays.

Operations on :class:`Tensor` values are recorded on the innermost active
:class:`Tape` in execution order, which is a topological order of the
computation. ``Tape.backward`` walks the records once in reverse and adds
each contribution into the input gradients.

The elementwise helpers (``signed_pow``, ``abs_pow``) also accept plain
arrays and floats; both branches evaluate the same NumPy expression so a
recorded computation and an unrecorded one produce identical values.
"""

import logging
from typing import Callable, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from shared.errors import DegenerateBatch, DimensionMismatch

logger = logging.getLogger(__name__)

Operand = Union["Tensor", np.ndarray, float, int]
BackwardFn = Callable[[np.ndarray], Sequence[Optional[np.ndarray]]]

_ACTIVE_TAPES: List["Tape"] = []


def active_tape() -> Optional["Tape"]:
    """Return the innermost tape, or None when nothing is recording."""
    return _ACTIVE_TAPES[-1] if _ACTIVE_TAPES else None


class Tensor:
    """Array value that records differentiable operations.

    Attributes:
        data: float64 array holding the value.
        requires_grad: Whether gradients flow into this value.
        grad: Accumulated gradient after ``Tape.backward``.
    """

    __array_ufunc__ = None

    def __init__(self, data: Union[np.ndarray, float], requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = requires_grad
        self.grad: Optional[np.ndarray] = None

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __add__(self, other: Operand) -> "Tensor":
        return add(self, other)

    def __radd__(self, other: Operand) -> "Tensor":
        return add(other, self)

    def __sub__(self, other: Operand) -> "Tensor":
        return sub(self, other)

    def __rsub__(self, other: Operand) -> "Tensor":
        return sub(other, self)

    def __mul__(self, other: Operand) -> "Tensor":
        return mul(self, other)

    def __rmul__(self, other: Operand) -> "Tensor":
        return mul(other, self)

    def __truediv__(self, other: Operand) -> "Tensor":
        return div(self, other)

    def __neg__(self) -> "Tensor":
        return neg(self)

    def __pow__(self, exponent: float) -> "Tensor":
        return power(self, exponent)

    def __getitem__(self, index) -> "Tensor":
        return take(self, index)


class _Record:
    __slots__ = ("output", "inputs", "backward")

    def __init__(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn):
        self.output = output
        self.inputs = inputs
        self.backward = backward


class Tape:
    """Context manager recording tensor operations for one backward pass.

    Parameter stores used inside the tape register their leaf tensors with
    :meth:`watch`; :meth:`param_grads` then returns the flat gradient of a
    store summed over every place it was used.
    """

    def __init__(self):
        self.records: List[_Record] = []
        self.result: Optional[Tensor] = None
        self.inputs: Optional[Tensor] = None
        self._watched: List[Tuple[object, Dict[str, Tensor]]] = []
        self._consumed = False

    def __enter__(self) -> "Tape":
        _ACTIVE_TAPES.append(self)
        return self

    def __exit__(self, exc_type, exc, tb) -> None:
        _ACTIVE_TAPES.remove(self)

    def __len__(self) -> int:
        return len(self.records)

    def record(self, output: Tensor, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> None:
        self.records.append(_Record(output, inputs, backward))

    def watch(self, store: object, leaves: Dict[str, Tensor]) -> None:
        """Register the leaf tensors created from a parameter store."""
        self._watched.append((store, leaves))

    def backward(self, output: Optional[Tensor] = None, output_grad: Optional[np.ndarray] = None) -> None:
        """Propagate ``output_grad`` from ``output`` back to every leaf.

        Args:
            output: Tensor to differentiate; defaults to ``self.result``.
            output_grad: Seed gradient; defaults to ones (scalar losses).

        Raises:
            DimensionMismatch: If the seed shape differs from the output shape.
            RuntimeError: If the tape was already consumed.
        """
        if self._consumed:
            raise RuntimeError("tape already used for a backward pass")
        output = self.result if output is None else output
        if output is None:
            raise ValueError("no output to differentiate")
        if output_grad is None:
            seed = np.ones_like(output.data)
        else:
            seed = np.asarray(output_grad, dtype=np.float64)
            if seed.shape != output.shape:
                raise DimensionMismatch(f"output gradient shape {seed.shape} != output shape {output.shape}")
        self._consumed = True
        output.grad = seed.copy()

        for node in reversed(self.records):
            grad = node.output.grad
            if grad is None:
                continue
            for inp, contribution in zip(node.inputs, node.backward(grad)):
                if contribution is None or not inp.requires_grad:
                    continue
                if inp.grad is None:
                    inp.grad = np.array(contribution, dtype=np.float64)
                else:
                    inp.grad = inp.grad + contribution

    def param_grads(self, store) -> np.ndarray:
        """Flat gradient of ``store`` summed over all its watched uses."""
        flat = np.zeros(store.size)
        for watched, leaves in self._watched:
            if watched is store:
                flat += store.flatten_grads(leaves)
        return flat


def as_tensor(value: Operand) -> Tensor:
    return value if isinstance(value, Tensor) else Tensor(value)


def _emit(data: np.ndarray, inputs: Tuple[Tensor, ...], backward: BackwardFn) -> Tensor:
    tape = active_tape()
    requires = tape is not None and any(t.requires_grad for t in inputs)
    out = Tensor(data, requires_grad=requires)
    if requires:
        tape.record(out, inputs, backward)
    return out


def _unbroadcast(grad: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for axis, dim in enumerate(shape):
        if dim == 1 and grad.shape[axis] != 1:
            grad = grad.sum(axis=axis, keepdims=True)
    return grad


def add(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)),
    )


def sub(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)),
    )


def neg(a: Operand) -> Tensor:
    a = as_tensor(a)
    return _emit(-a.data, (a,), lambda g: (-g,))


def mul(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data * b.data,
        (a, b),
        lambda g: (_unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)),
    )


def div(a: Operand, b: Operand) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    return _emit(
        a.data / b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.data, a.shape),
            _unbroadcast(-g * a.data / (b.data * b.data), b.shape),
        ),
    )


def power(a: Operand, exponent: float) -> Tensor:
    """Constant-exponent power; exponent 2 is computed as ``a * a``."""
    a = as_tensor(a)
    if exponent == 2:
        return _emit(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))
    return _emit(
        a.data**exponent,
        (a,),
        lambda g: (exponent * a.data ** (exponent - 1) * g,),
    )


def square(a: Operand) -> Tensor:
    return power(a, 2)


def affine(x: Operand, weight: Operand, bias: Operand) -> Tensor:
    """Batch affine map ``x @ weight.T + bias``."""
    x, weight, bias = as_tensor(x), as_tensor(weight), as_tensor(bias)
    if x.ndim != 2 or x.shape[1] != weight.shape[1]:
        raise DimensionMismatch(f"input shape {x.shape} incompatible with weight {weight.shape}")
    return _emit(
        x.data @ weight.data.T + bias.data,
        (x, weight, bias),
        lambda g: (g @ weight.data, g.T @ x.data, g.sum(axis=0)),
    )


def relu(x: Operand) -> Tensor:
    """Rectifier with derivative 0 at exactly 0."""
    x = as_tensor(x)
    active = x.data > 0
    return _emit(np.where(active, x.data, 0.0), (x,), lambda g: (g * active,))


def batch_norm(x: Operand, scale: Operand, shift: Operand, eps: float = 1e-5) -> Tuple[Tensor, np.ndarray, np.ndarray]:
    """Train-mode batch normalization of a (batch, features) matrix.

    Returns:
        Normalized output, batch mean and unbiased batch variance (for the
        running statistics).

    Raises:
        DegenerateBatch: If the batch has a single row.
    """
    x, scale, shift = as_tensor(x), as_tensor(scale), as_tensor(shift)
    n = x.shape[0]
    if n < 2:
        raise DegenerateBatch("batch normalization needs at least 2 rows in train mode")
    mean = x.data.mean(axis=0)
    centered = x.data - mean
    var = (centered * centered).mean(axis=0)
    inv_std = 1.0 / np.sqrt(var + eps)
    x_hat = centered * inv_std

    def backward(g: np.ndarray):
        d_hat = g * scale.data
        dx = inv_std / n * (n * d_hat - d_hat.sum(axis=0) - x_hat * (d_hat * x_hat).sum(axis=0))
        return dx, (g * x_hat).sum(axis=0), g.sum(axis=0)

    out = _emit(x_hat * scale.data + shift.data, (x, scale, shift), backward)
    return out, mean, var * n / (n - 1)


def signed_pow(x: Operand, r: float):
    """``sign(x)·|x|^r``; identity when r = 1."""
    if r == 1.0:
        return x
    if not isinstance(x, Tensor):
        return np.sign(x) * np.abs(x) ** r
    value = np.sign(x.data) * np.abs(x.data) ** r
    return _emit(value, (x,), lambda g: (r * np.abs(x.data) ** (r - 1.0) * g,))


def abs_pow(x: Operand, q: float):
    """``|x|^q`` for q > 1."""
    if not isinstance(x, Tensor):
        return np.abs(x) ** q
    value = np.abs(x.data) ** q
    return _emit(value, (x,), lambda g: (q * np.sign(x.data) * np.abs(x.data) ** (q - 1.0) * g,))


def total(x: Operand, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    shape = x.shape

    def backward(g: np.ndarray):
        if axis is None:
            return (np.broadcast_to(g, shape).copy(),)
        return (np.broadcast_to(np.expand_dims(g, axis), shape).copy(),)

    return _emit(x.data.sum(axis=axis), (x,), backward)


def mean(x: Operand, axis: Optional[int] = None) -> Tensor:
    x = as_tensor(x)
    count = x.data.size if axis is None else x.shape[axis]
    return total(x, axis) / float(count)


def stack_columns(columns: Sequence[Operand]) -> Tensor:
    """Stack equal-length vectors into a (batch, k) matrix."""
    tensors = tuple(as_tensor(c) for c in columns)
    data = np.stack([t.data for t in tensors], axis=1)
    return _emit(data, tensors, lambda g: tuple(g[:, j] for j in range(len(tensors))))


def take(x: Operand, index) -> Tensor:
    x = as_tensor(x)

    def backward(g: np.ndarray):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _emit(x.data[index], (x,), backward)
