"""Transaction cost shapes G, their marginals, inverses and Legendre transforms."""

from typing import Union

import numpy as np

from autodiff.tape import Tensor, abs_pow, signed_pow
from shared.schemas import CostSpec, LiquidityKind, LiquiditySpec

Value = Union[float, np.ndarray, Tensor]


def conjugate_exponent(spec: CostSpec) -> float:
    """p = q/(q−1), the exponent of the Legendre transform G*."""
    q = spec.exponent
    return q / (q - 1.0)


def cost_value(spec: CostSpec, x: Value) -> Value:
    """G(x): x²/2 for quadratic costs, |x|^q/q for power costs."""
    if spec.is_quadratic:
        return 0.5 * x * x
    q = spec.exponent
    return abs_pow(x, q) * (1.0 / q)


def cost_marginal(spec: CostSpec, x: Value) -> Value:
    """G′(x) = sign(x)|x|^{q−1}."""
    if spec.is_quadratic:
        return x
    return signed_pow(x, spec.exponent - 1.0)


def cost_marginal_inverse(spec: CostSpec, y: Value) -> Value:
    """(G′)⁻¹(y) = sign(y)|y|^{1/(q−1)}."""
    if spec.is_quadratic:
        return y
    return signed_pow(y, 1.0 / (spec.exponent - 1.0))


def cost_legendre(spec: CostSpec, y: Value) -> Value:
    """G*(y) = |y|^p/p."""
    p = conjugate_exponent(spec)
    if spec.is_quadratic:
        return 0.5 * y * y
    return abs_pow(y, p) * (1.0 / p)


def cost_legendre_inverse(spec: CostSpec, v: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """(G*)⁻¹(v) = (p·v)^{1/p} on v ≥ 0.

    Raises:
        ValueError: If any v is negative.
    """
    v = np.asarray(v, dtype=np.float64)
    if np.any(v < 0):
        raise ValueError("Legendre inverse is defined for v ≥ 0 only")
    p = conjugate_exponent(spec)
    out = np.sqrt(2.0 * v) if spec.is_quadratic else (p * v) ** (1.0 / p)
    return float(out) if out.ndim == 0 else out


def liquidity_level(spec: LiquiditySpec, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """Λ_t for a deterministic schedule."""
    if spec.kind == LiquidityKind.CONSTANT:
        return spec.value if np.ndim(t) == 0 else np.full(np.shape(t), spec.value)
    index = np.searchsorted(np.asarray(spec.breakpoints), t, side="right")
    levels = np.asarray(spec.levels)[index]
    return float(levels) if np.ndim(t) == 0 else levels


def cost_level(spec: CostSpec, t: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
    """λ_t = λ·Λ_t."""
    return spec.lam * liquidity_level(spec.liquidity, t)
