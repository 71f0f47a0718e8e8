"""Frictionless target position and the goal functional integrand."""

from dataclasses import dataclass
from typing import Union

import numpy as np

from autodiff.tape import Tensor
from market.costs import cost_value
from market.paths import PathBatch
from shared.schemas import CostSpec, MarketParams

Value = Union[float, np.ndarray, Tensor]

# Calibration used by the shipped experiments (per trading day).
CALIBRATED_GAMMA = 1.66e-13
CALIBRATED_SHARES = 2.46e11
CALIBRATED_SIGMA = 1.88
QUADRATIC_XI = 2.19e10
QUADRATIC_LAMBDA = 1.08e-10
POWER_XI = 2.33e10
POWER_LAMBDA = 5.22e-6


def calibrated_market(horizon: float, xi_vol: float = QUADRATIC_XI, phi_init: float = None) -> MarketParams:
    """Market with the calibrated γ, σ, s and equilibrium return μ = ½γσ²s."""
    return MarketParams(
        sigma=CALIBRATED_SIGMA,
        gamma=CALIBRATED_GAMMA,
        shares=CALIBRATED_SHARES,
        xi_vol=xi_vol,
        phi_init=phi_init,
        horizon=horizon,
    )


def endowment_volatility(params: MarketParams, W: Value) -> Value:
    """ξ_t = ξ·W_t."""
    return params.xi_vol * W


def frictionless_position(params: MarketParams, xi: Value) -> Value:
    """φ̄ = μ/(γσ²) − ξ_t/σ."""
    return params.mu / (params.gamma * params.sigma**2) - xi / params.sigma


def target_volatility(params: MarketParams) -> float:
    """ā = −ξ/σ, the constant diffusion coefficient of φ̄."""
    return -params.xi_vol / params.sigma


def initial_deviation(params: MarketParams, xi0: float = 0.0) -> float:
    """Δφ₀ = φ₀₋ + ξ₀/σ − μ/(γσ²)."""
    return params.phi_init + xi0 / params.sigma - params.mu / (params.gamma * params.sigma**2)


@dataclass(frozen=True)
class FrictionlessPath:
    """Frictionless target along a batch: φ̄ levels, drift b̄ and diffusion ā."""

    phi_bar: np.ndarray
    b_bar: float
    a_bar: float


def frictionless_path(params: MarketParams, batch: PathBatch) -> FrictionlessPath:
    xi = endowment_volatility(params, batch.levels())
    return FrictionlessPath(
        phi_bar=frictionless_position(params, xi),
        b_bar=0.0,
        a_bar=target_volatility(params),
    )


def goal_integrand(params: MarketParams, cost: CostSpec, phi: Value, xi: Value, rate: Value, lam_t: float) -> Value:
    """φμ − (γ/2)(σφ + ξ)² − λ_t·G(φ̇), elementwise over paths."""
    exposure = params.sigma * phi + xi
    return phi * params.mu - (0.5 * params.gamma) * (exposure * exposure) - lam_t * cost_value(cost, rate)
