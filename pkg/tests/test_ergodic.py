"""Tests for the ergodic ODE solver and the leading-order engine."""

import logging

import numpy as np
import pytest

from engines.base import simulate
from engines.closed_form import ClosedFormEngine
from engines.ergodic import (
    ErgodicSolution,
    LeadingOrderEngine,
    ShootingConfig,
    leading_order_rate,
    ode_scales,
    simulate_delta_sde,
    solve_ergodic_ode,
)
from evaluation.evaluator import evaluate
from market.frictionless import QUADRATIC_LAMBDA, calibrated_market
from market.paths import TimeGrid, sample_brownian
from shared.errors import BracketFailure, ExtrapolationBeyondGrid
from shared.schemas import CostSpec

# Configure logging for test output.
logging.basicConfig(level=logging.INFO, format="%(asctime)s - %(name)s - %(levelname)s - %(message)s")
logger = logging.getLogger(__name__)


class TestQuadraticCase:
    """For quadratic costs g(x) = −√(γσ²λ)x."""

    def test_slope_is_minus_one(self, quadratic_solution):
        """The normalized slope at 0 is −1."""
        assert quadratic_solution.slope == pytest.approx(-1.0, abs=1e-8)

    def test_matches_linear_solution(self, quadratic_solution):
        """g matches −√(γσ²λ)x to 1e-6."""
        sol = quadratic_solution
        x = sol.abscissae[1:]
        exact = -np.sqrt(sol.gamma * sol.sigma**2 * sol.lam) * x
        np.testing.assert_allclose(sol.values[1:], exact, rtol=1e-6)

    def test_scales_reduce_to_linear_coefficient(self):
        """The ODE scales reduce to √(γσ²λ) for q = 2."""
        market = calibrated_market(10.0)
        cost = CostSpec(kind="quadratic", lam=QUADRATIC_LAMBDA)
        a_bar = -market.xi_vol / market.sigma
        scales = ode_scales(cost, market.gamma, market.sigma, a_bar, cost.lam)
        coefficient = np.sqrt(market.gamma * market.sigma**2 * cost.lam)
        assert scales.scale_g / scales.scale_x == pytest.approx(coefficient, rel=1e-12)
        assert scales.p == 2.0

    def test_leading_order_rate_is_linear_feedback(self, quadratic_solution):
        """The leading-order rate is −kΔφ for quadratic costs."""
        sol = quadratic_solution
        delta = np.array([-0.5, 0.25]) * sol.x_max
        rate = leading_order_rate(sol, delta, 0.0, sol.lam)
        k = np.sqrt(sol.gamma * sol.sigma**2 / sol.lam)
        np.testing.assert_allclose(rate, -k * delta, rtol=1e-6)


class TestPowerCase:
    """q = 3/2 has no closed form; check structure and accuracy."""

    def test_growth_ratio_near_one(self, power_solution):
        """g meets its asymptote at x_max within 5%."""
        assert power_solution.growth_ratio() == pytest.approx(1.0, abs=0.05)

    def test_residual_is_small(self, power_solution):
        """The ODE residual and the seam error are below 1e-6."""
        assert power_solution.residual < 1e-6
        assert power_solution.seam < 1e-6

    def test_odd_and_non_increasing(self, power_solution):
        """g is odd, non-increasing and negative for x > 0."""
        sol = power_solution
        x = np.linspace(-0.9 * sol.x_max, 0.9 * sol.x_max, 401)
        g = sol.g(x)
        np.testing.assert_array_equal(g, -sol.g(-x))
        assert np.all(np.diff(g) <= 0)
        assert sol.g(0.0) == 0.0
        assert np.all(g[x > 0] < 0)

    def test_node_values_are_monotone(self, power_solution):
        """Node values and slopes are non-increasing."""
        assert np.all(np.diff(power_solution.v) <= 0)
        assert np.all(power_solution.dv <= 0)

    @pytest.mark.parametrize("name", ["quadratic_solution", "power_solution"])
    def test_slope_is_bounded(self, request, name):
        """max|g′| on the grid stays below 10·√(γσ²λ)."""
        sol = request.getfixturevalue(name)
        bound = 10.0 * np.sqrt(sol.gamma * sol.sigma**2 * sol.lam)
        assert np.max(np.abs(sol.derivatives)) <= bound

    def test_derivative_is_negative(self, power_solution):
        """g′ < 0 away from the origin."""
        x = np.linspace(0.01, 0.9, 50) * power_solution.x_max
        assert np.all(power_solution.g_prime(x) < 0)

    def test_rate_pulls_towards_target(self, power_solution):
        """Rates point back to the target symmetrically."""
        sol = power_solution
        phi_bar = np.array([1e10, 1e10])
        phi = phi_bar + np.array([1e8, -1e8])
        rate = leading_order_rate(sol, phi, phi_bar, sol.lam)
        assert rate[0] < 0 < rate[1]
        assert rate[0] == pytest.approx(-rate[1])


class TestSolutionHandling:
    """Extrapolation, regrowth and table files."""

    def test_query_past_grid_raises(self, quadratic_solution):
        """Queries past x_max raise."""
        with pytest.raises(ExtrapolationBeyondGrid):
            quadratic_solution.g(2.0 * quadratic_solution.x_max)

    def test_table_round_trip(self, power_solution, tmp_path):
        """A saved table reloads to the same g."""
        path = power_solution.save(tmp_path / "ergodic.json")
        loaded = ErgodicSolution.load(path)
        x = np.linspace(-0.5, 0.5, 11) * power_solution.x_max
        np.testing.assert_array_equal(loaded.g(x), power_solution.g(x))
        assert loaded.slope == power_solution.slope

    def test_load_missing_file(self, tmp_path):
        """Loading a missing table raises."""
        with pytest.raises(FileNotFoundError):
            ErgodicSolution.load(tmp_path / "missing.json")

    def test_engine_regrows_on_large_deviation(self, market_t10, quadratic_cost):
        """The engine extends the grid for deviations past x_max."""
        small = solve_ergodic_ode(
            quadratic_cost,
            market_t10.gamma,
            market_t10.sigma,
            -market_t10.xi_vol / market_t10.sigma,
            quadratic_cost.lam,
            ShootingConfig(x_max=4.0, step=1e-2),
        )
        engine = LeadingOrderEngine(market_t10, quadratic_cost, TimeGrid(10, 10.0), small)
        far = np.array([1.5 * small.x_max])
        rate = engine.rate(far, np.zeros(1), quadratic_cost.lam)
        assert engine.solution.x_max > small.x_max
        k = np.sqrt(market_t10.gamma * market_t10.sigma**2 / quadratic_cost.lam)
        np.testing.assert_allclose(rate, -k * far, rtol=1e-4)

    def test_engine_without_regrow_raises(self, market_t10, quadratic_cost, quadratic_solution):
        """Without regrowth large deviations raise."""
        engine = LeadingOrderEngine(market_t10, quadratic_cost, TimeGrid(10, 10.0), quadratic_solution, regrow=False)
        with pytest.raises(ExtrapolationBeyondGrid):
            engine.rate(np.array([3.0 * quadratic_solution.x_max]), np.zeros(1), quadratic_cost.lam)


class TestSolverErrors:
    """Argument and bracket errors."""

    def test_zero_target_volatility(self, quadratic_cost):
        """ā = 0 is rejected."""
        with pytest.raises(ValueError):
            solve_ergodic_ode(quadratic_cost, 1.0, 1.0, 0.0, 1.0)

    def test_zero_lambda(self):
        """λ = 0 is rejected."""
        cost = CostSpec(kind="quadratic", lam=0.0)
        with pytest.raises(ValueError):
            solve_ergodic_ode(cost, 1.0, 1.0, 1.0, 0.0)

    def test_bracket_must_straddle(self, quadratic_cost):
        """A slope bracket that does not straddle the root raises."""
        config = ShootingConfig(x_max=4.0, step=1e-2, slope_bracket=(-0.5, -0.1))
        with pytest.raises(BracketFailure):
            solve_ergodic_ode(quadratic_cost, 1.0, 1.0, 1.0, 1.0, config)

    def test_bad_bracket_is_rejected(self):
        """The bracket must be ordered."""
        with pytest.raises(ValueError):
            ShootingConfig(slope_bracket=(0.0, -1.0))


class TestFastMeanReversion:
    """Stationary behavior of dΔ = (G′)⁻¹(g(Δ)/λ)dt − ā dW."""

    def test_quadratic_stationary_variance(self, quadratic_solution):
        """Δ settles at the Ornstein-Uhlenbeck variance ā²/(2k)."""
        sol = quadratic_solution
        k = np.sqrt(sol.gamma * sol.sigma**2 / sol.lam)
        horizon = 20.0 / k
        grid = TimeGrid(400, horizon)
        batch = sample_brownian(grid, 4000, seed=9)
        paths = simulate_delta_sde(sol, batch, 0.0)
        stationary = sol.a_bar**2 / (2.0 * k)
        assert paths[:, -1].var() == pytest.approx(stationary, rel=0.1)
        assert abs(paths[:, -1].mean()) < 0.1 * np.sqrt(stationary)


class TestLeadingOrderEngine:
    """The leading-order engine inside the path simulator."""

    def test_terminal_rate_does_not_vanish(self, market_t10, quadratic_cost, quadratic_solution):
        """E[|φ̇_T|²/s²] on the 168-step grid sits within a factor 2 of 6.40e-5."""
        grid = TimeGrid(168, 10.0)
        engine = LeadingOrderEngine(market_t10, quadratic_cost, grid, quadratic_solution)
        result = simulate(engine, sample_brownian(grid, 4000, seed=4))
        mse = float(np.mean((result.terminal_rate / market_t10.shares) ** 2))
        assert 6.40e-5 / 2 < mse < 6.40e-5 * 2


@pytest.mark.slow
class TestGapTrend:
    """The leading-order shortfall closes as the horizon grows."""

    def _relative_gap(self, horizon, n_steps, solution, n_paths=100_000):
        market = calibrated_market(horizon)
        cost = CostSpec(kind="quadratic", lam=QUADRATIC_LAMBDA)
        grid = TimeGrid(n_steps, horizon)
        truth = evaluate(ClosedFormEngine(market, cost, grid, "explicit"), n_paths, seed=20240101)
        lead = evaluate(LeadingOrderEngine(market, cost, grid, solution), n_paths, seed=20240101)
        logger.info(f"T={horizon:g}: truth J={truth.j_mean:.4e}, leading order J={lead.j_mean:.4e}")
        return (truth.j_mean - lead.j_mean) / abs(truth.j_mean), truth.j_stderr / abs(truth.j_mean)

    def test_gap_shrinks_with_the_horizon(self, quadratic_solution):
        """Relative gap falls across T = 10, 21 and 42 on the 100-step grid."""
        gaps = [self._relative_gap(horizon, 100, quadratic_solution)[0] for horizon in (10.0, 21.0, 42.0)]
        assert gaps[0] > gaps[1] > gaps[2] > 0

    def test_gap_vanishes_at_long_horizon(self, quadratic_solution):
        """At T = 2520 on 500 steps the two agree to three significant digits."""
        gap, _ = self._relative_gap(2520.0, 500, quadratic_solution)
        assert abs(gap) < 1e-3
