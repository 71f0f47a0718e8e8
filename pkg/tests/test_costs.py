"""Tests for cost shapes, Legendre transforms and liquidity schedules."""

import logging

import numpy as np
import pytest

from market.costs import (
    conjugate_exponent,
    cost_legendre,
    cost_legendre_inverse,
    cost_level,
    cost_marginal,
    cost_marginal_inverse,
    cost_value,
    liquidity_level,
)
from shared.schemas import CostSpec, LiquiditySpec

# Configure logging for test output.
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


@pytest.fixture(params=[2.0, 1.5, 1.2])
def cost(request):
    """Quadratic and two power-cost shapes."""
    if request.param == 2.0:
        return CostSpec(kind="quadratic", lam=1.0)
    return CostSpec(kind="power", q=request.param, lam=1.0)


class TestCostShapes:
    """Values, marginals and inverses of G."""

    def test_quadratic_values(self):
        """Quadratic G, G′ and G* on known points."""
        cost = CostSpec(kind="quadratic", lam=1.0)
        assert cost_value(cost, 3.0) == pytest.approx(4.5)
        assert cost_marginal(cost, -2.0) == -2.0
        assert conjugate_exponent(cost) == 2.0

    def test_power_values(self):
        """Power G, G′ and G* on known points."""
        cost = CostSpec(kind="power", q=1.5, lam=1.0)
        assert cost_value(cost, 4.0) == pytest.approx(8.0 / 1.5)
        assert cost_marginal(cost, -4.0) == pytest.approx(-2.0)
        assert conjugate_exponent(cost) == pytest.approx(3.0)

    def test_power_with_q_two_matches_quadratic(self):
        """q = 2 power costs equal quadratic costs."""
        x = np.linspace(-3, 3, 13)
        power = CostSpec(kind="power", q=2.0, lam=1.0)
        quadratic = CostSpec(kind="quadratic", lam=1.0)
        np.testing.assert_allclose(cost_value(power, x), cost_value(quadratic, x), rtol=1e-14)
        np.testing.assert_allclose(cost_marginal_inverse(power, x), x, rtol=1e-14)

    def test_marginal_inverse_round_trip(self, cost):
        """(G′)⁻¹ inverts G′ to 1e-12."""
        x = np.random.default_rng(3).normal(scale=5.0, size=200)
        recovered = cost_marginal_inverse(cost, cost_marginal(cost, x))
        np.testing.assert_allclose(recovered, x, rtol=1e-12)

    def test_fenchel_young_identity(self, cost):
        """G(x) + G*(G′(x)) = x·G′(x)."""
        x = np.random.default_rng(4).normal(scale=3.0, size=200)
        y = cost_marginal(cost, x)
        np.testing.assert_allclose(cost_value(cost, x) + cost_legendre(cost, y), x * y, rtol=1e-10)

    def test_legendre_inverse(self, cost):
        """(G*)⁻¹ inverts G*."""
        y = np.abs(np.random.default_rng(5).normal(size=50))
        np.testing.assert_allclose(cost_legendre_inverse(cost, cost_legendre(cost, y)), y, rtol=1e-12)

    def test_legendre_inverse_scalar_returns_float(self, cost):
        """Scalars in give floats out."""
        assert isinstance(cost_legendre_inverse(cost, 0.5), float)

    def test_legendre_inverse_rejects_negative(self, cost):
        """(G*)⁻¹ is undefined below 0."""
        with pytest.raises(ValueError):
            cost_legendre_inverse(cost, -1e-3)

    def test_marginal_is_odd_and_increasing(self, cost):
        """G′ is odd and increasing."""
        x = np.linspace(-4, 4, 81)
        y = cost_marginal(cost, x)
        np.testing.assert_allclose(y, -cost_marginal(cost, -x), rtol=1e-14)
        assert np.all(np.diff(y) > 0)


class TestLiquidity:
    """Deterministic liquidity schedules."""

    def test_constant(self):
        """Constant liquidity is flat in time."""
        spec = LiquiditySpec(value=2.0)
        assert liquidity_level(spec, 3.0) == 2.0
        np.testing.assert_array_equal(liquidity_level(spec, np.array([0.0, 1.0])), [2.0, 2.0])

    def test_piecewise(self):
        """Piecewise liquidity steps at its breakpoints."""
        spec = LiquiditySpec(kind="piecewise", breakpoints=[5.0], levels=[1.0, 3.0])
        assert liquidity_level(spec, 4.0) == 1.0
        assert liquidity_level(spec, 5.0) == 3.0
        np.testing.assert_array_equal(liquidity_level(spec, np.array([0.0, 9.0])), [1.0, 3.0])

    def test_cost_level_scales_lambda(self):
        """λ_t = λ·Λ_t."""
        cost = CostSpec(kind="quadratic", lam=0.5, liquidity=LiquiditySpec(value=4.0))
        assert cost_level(cost, 1.0) == pytest.approx(2.0)

    def test_piecewise_needs_matching_levels(self):
        """Breakpoints and levels must line up."""
        with pytest.raises(ValueError):
            LiquiditySpec(kind="piecewise", breakpoints=[1.0, 2.0], levels=[1.0])
