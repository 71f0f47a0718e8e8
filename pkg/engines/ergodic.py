"""Ergodic ODE for the leading-order strategy and the fast mean-reverting SDE.

The ODE (G′)⁻¹(g/λ)g′ + (ā²/2)g″ = γσ²x is solved in normalized units
x = B·u, g = A·v where it reads φ(v)v′ + v″ = u with φ(v) = sign(v)|v|^r,
r = 1/(q−1). Integrating once gives the first-order form

    v′ = u²/2 + s − |v|^p/p,   v(0) = 0,   s = v′(0),   p = r + 1,

which is shot forward from u = 0 to bracket s and then rebuilt by a
backward sweep from the large-u asymptote, the stable direction.
"""

import logging
import math
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path
from typing import Tuple, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from market.costs import cost_legendre_inverse, cost_marginal_inverse
from market.paths import PathBatch, PathState, TimeGrid
from engines.base import Policy, StrategyEngine
from shared.errors import BracketFailure, ExtrapolationBeyondGrid, NoConvergence
from shared.schemas import CostSpec, ErgodicTableFile, LeadingOrderSection, MarketParams

logger = logging.getLogger(__name__)

SEAM_TOLERANCE = 1e-6

_TOO_HIGH = 1
_TOO_LOW = -1


@dataclass(frozen=True)
class ShootingConfig:
    """Shooting options in normalized units."""

    x_max: float = 12.0
    step: float = 1e-3
    slope_bracket: Tuple[float, float] = (-10.0, 0.0)
    tolerance: float = 1e-14
    max_iter: int = 200
    blowup_factor: float = 2.0

    def __post_init__(self):
        low, high = self.slope_bracket
        if not (low < high <= 0):
            raise ValueError("slope bracket must satisfy a < b ≤ 0")
        if self.step <= 0 or self.x_max <= self.step:
            raise ValueError("need 0 < step < x_max")
        if self.blowup_factor <= 1:
            raise ValueError("blowup_factor must exceed 1")

    @classmethod
    def from_section(cls, section: LeadingOrderSection) -> "ShootingConfig":
        return cls(
            x_max=section.x_max,
            step=section.step,
            slope_bracket=tuple(section.slope_bracket),
            tolerance=section.tolerance,
            max_iter=section.max_iter,
            blowup_factor=section.blowup_factor,
        )

    def widened(self, factor: float = 2.0) -> "ShootingConfig":
        return ShootingConfig(
            self.x_max * factor, self.step, self.slope_bracket, self.tolerance, self.max_iter, self.blowup_factor
        )


@dataclass(frozen=True)
class OdeScales:
    """x = scale_x·u and g = scale_g·v."""

    scale_x: float
    scale_g: float
    r: float
    p: float


def ode_scales(cost: CostSpec, gamma: float, sigma: float, a_bar: float, lam: float) -> OdeScales:
    """Scales making the ergodic ODE parameter free apart from q.

    B^{3r+1} = γσ²λ^r(ā²/(2γσ²))^{r+1} and A = 2γσ²B³/ā², evaluated in
    log space since λ and γ are tiny.
    """
    q = cost.exponent
    r = 1.0 / (q - 1.0)
    c = gamma * sigma**2
    log_b = (math.log(c) + r * math.log(lam) + (r + 1.0) * math.log(a_bar**2 / (2.0 * c))) / (3.0 * r + 1.0)
    scale_x = math.exp(log_b)
    scale_g = math.exp(math.log(2.0 * c) + 3.0 * log_b - math.log(a_bar**2))
    return OdeScales(scale_x=scale_x, scale_g=scale_g, r=r, p=r + 1.0)


def _envelope(u: float, p: float) -> float:
    return -((p * u * u / 2.0) ** (1.0 / p))


def _classify(slope: float, p: float, config: ShootingConfig) -> int:
    """Shoot forward with fixed-step RK4 and report which side ``slope`` is on."""
    h = config.step
    n = int(round(config.x_max / h))
    half = 0.5 * h

    def f(u: float, v: float) -> float:
        return 0.5 * u * u + slope - abs(v) ** p / p

    u, v = 0.0, 0.0
    for i in range(n):
        k1 = f(u, v)
        k2 = f(u + half, v + half * k1)
        k3 = f(u + half, v + half * k2)
        k4 = f(u + h, v + h * k3)
        v += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        u = (i + 1) * h
        if not math.isfinite(v):
            return _TOO_LOW
        if v > 0.0:
            return _TOO_HIGH
        if v < config.blowup_factor * _envelope(u, p):
            return _TOO_LOW
    return _TOO_HIGH if v > _envelope(u, p) else _TOO_LOW


def _shoot_slope(p: float, config: ShootingConfig) -> float:
    """Bisect on s = v′(0) until the bracket is within tolerance."""
    low, high = config.slope_bracket
    if _classify(low, p, config) != _TOO_LOW or _classify(high, p, config) != _TOO_HIGH:
        raise BracketFailure(f"slope bracket [{low}, {high}] does not straddle the solution (p={p:.6g})")
    for iteration in range(config.max_iter):
        if high - low <= config.tolerance * max(1.0, abs(low)):
            return 0.5 * (low + high)
        mid = 0.5 * (low + high)
        if mid <= low or mid >= high:
            return mid
        if _classify(mid, p, config) == _TOO_HIGH:
            high = mid
        else:
            low = mid
        logger.debug(f"Bisection {iteration}: slope in [{low:.16g}, {high:.16g}]")
    raise NoConvergence(f"bisection on the initial slope exhausted {config.max_iter} iterations")


def _sweep_backward(slope: float, p: float, u: np.ndarray) -> np.ndarray:
    """Integrate v′ = u²/2 + s − |v|^p/p from the asymptote down to u = 0."""
    h = u[1] - u[0]
    half = 0.5 * h

    def f(x: float, v: float) -> float:
        return 0.5 * x * x + slope - abs(v) ** p / p

    top = u[-1]
    # Envelope slope d/du[-(p u²/2)^{1/p}] refines the starting value.
    envelope_slope = -((p / 2.0) ** (1.0 / p)) * (2.0 / p) * top ** (2.0 / p - 1.0)
    v = np.empty_like(u)
    v[-1] = -((p * (0.5 * top * top + slope - envelope_slope)) ** (1.0 / p))
    value = float(v[-1])
    for i in range(len(u) - 1, 0, -1):
        x = float(u[i])
        k1 = f(x, value)
        k2 = f(x - half, value - half * k1)
        k3 = f(x - half, value - half * k2)
        k4 = f(x - h, value - h * k3)
        value -= h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        v[i - 1] = value
    return v


def _monotone_slopes(u: np.ndarray, v: np.ndarray, dv: np.ndarray) -> np.ndarray:
    """Keep exact slopes where the Fritsch–Carlson condition holds, PCHIP elsewhere."""
    secant = np.diff(v) / np.diff(u)
    with np.errstate(divide="ignore", invalid="ignore"):
        alpha = np.where(secant != 0, dv[:-1] / secant, 0.0)
        beta = np.where(secant != 0, dv[1:] / secant, 0.0)
    bad = (alpha < 0) | (beta < 0) | (alpha**2 + beta**2 > 9.0)
    if not np.any(bad):
        return dv
    logger.debug(f"Replacing slopes on {int(bad.sum())} non-monotone intervals with PCHIP slopes")
    pchip = PchipInterpolator(u, v).derivative()(u)
    slopes = dv.copy()
    nodes = np.zeros(len(u), dtype=bool)
    nodes[:-1] |= bad
    nodes[1:] |= bad
    slopes[nodes] = pchip[nodes]
    return slopes


@dataclass(frozen=True, eq=False)
class ErgodicSolution:
    """Odd, non-increasing solution g of the ergodic ODE.

    Values are stored in normalized units (u, v, v′) on [0, u_max]; raw
    values are g(x) = scale_g·v(|x|/scale_x)·sign(x).
    """

    cost: CostSpec
    gamma: float
    sigma: float
    a_bar: float
    lam: float
    scale_x: float
    scale_g: float
    slope: float
    residual: float
    seam: float
    config: ShootingConfig
    u: np.ndarray = field(repr=False)
    v: np.ndarray = field(repr=False)
    dv: np.ndarray = field(repr=False)

    @cached_property
    def _spline(self) -> CubicHermiteSpline:
        return CubicHermiteSpline(self.u, self.v, _monotone_slopes(self.u, self.v, self.dv))

    @property
    def p(self) -> float:
        q = self.cost.exponent
        return q / (q - 1.0)

    @property
    def x_max(self) -> float:
        """Largest raw |x| covered by the grid."""
        return self.scale_x * float(self.u[-1])

    @property
    def abscissae(self) -> np.ndarray:
        return self.scale_x * self.u

    @property
    def values(self) -> np.ndarray:
        return self.scale_g * self.v

    @property
    def derivatives(self) -> np.ndarray:
        return (self.scale_g / self.scale_x) * self.dv

    def _normalized(self, x: Union[float, np.ndarray]) -> np.ndarray:
        u = np.abs(np.asarray(x, dtype=np.float64)) / self.scale_x
        top = float(self.u[-1])
        if np.any(u > top):
            raise ExtrapolationBeyondGrid(float(np.max(u)) * self.scale_x, self.x_max)
        return u

    def g(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """g(x) with odd extension; raises ExtrapolationBeyondGrid past x_max."""
        u = self._normalized(x)
        out = np.sign(x) * self.scale_g * self._spline(u)
        return float(out) if np.ndim(out) == 0 else out

    def g_prime(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        u = self._normalized(x)
        out = (self.scale_g / self.scale_x) * self._spline(u, 1)
        return float(out) if np.ndim(out) == 0 else out

    def asymptote(self, x: Union[float, np.ndarray]) -> Union[float, np.ndarray]:
        """−λ(G*)⁻¹(γσ²x²/(2λ)), the large-|x| growth of g on x ≥ 0."""
        x = np.asarray(x, dtype=np.float64)
        out = -self.lam * cost_legendre_inverse(self.cost, self.gamma * self.sigma**2 * x * x / (2.0 * self.lam))
        return out

    def growth_ratio(self) -> float:
        """g(x_max) divided by the asymptote at x_max."""
        return float(self.scale_g * self.v[-1] / self.asymptote(self.x_max))

    def residual_at(self, u: np.ndarray) -> np.ndarray:
        """First-integral residual v′ − (u²/2 + s − |v|^p/p) at normalized points."""
        u = np.asarray(u, dtype=np.float64)
        v = self._spline(u)
        dv = self._spline(u, 1)
        return dv - (0.5 * u * u + self.slope - np.abs(v) ** self.p / self.p)

    def regrow(self, factor: float = 2.0) -> "ErgodicSolution":
        """Re-solve on a grid ``factor`` times wider."""
        logger.warning(f"Regrowing ergodic grid from u_max={self.u[-1]:.4g} to {self.u[-1] * factor:.4g}")
        return solve_ergodic_ode(self.cost, self.gamma, self.sigma, self.a_bar, self.lam, self.config.widened(factor))

    def to_table(self) -> ErgodicTableFile:
        return ErgodicTableFile(
            cost=self.cost,
            gamma=self.gamma,
            sigma=self.sigma,
            a_bar=self.a_bar,
            lam=self.lam,
            scale_x=self.scale_x,
            scale_g=self.scale_g,
            slope=self.slope,
            residual=self.residual,
            seam=self.seam,
            step=self.config.step,
            u=self.u.tolist(),
            v=self.v.tolist(),
            dv=self.dv.tolist(),
        )

    @classmethod
    def from_table(cls, table: ErgodicTableFile) -> "ErgodicSolution":
        u = np.asarray(table.u, dtype=np.float64)
        return cls(
            cost=table.cost,
            gamma=table.gamma,
            sigma=table.sigma,
            a_bar=table.a_bar,
            lam=table.lam,
            scale_x=table.scale_x,
            scale_g=table.scale_g,
            slope=table.slope,
            residual=table.residual,
            seam=table.seam,
            config=ShootingConfig(x_max=float(u[-1]), step=table.step),
            u=u,
            v=np.asarray(table.v, dtype=np.float64),
            dv=np.asarray(table.dv, dtype=np.float64),
        )

    def save(self, path: Union[str, Path]) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(self.to_table().model_dump_json(by_alias=True), encoding="utf-8")
        logger.info(f"Wrote ergodic table ({len(self.u)} nodes) to {path}")
        return path

    @classmethod
    def load(cls, path: Union[str, Path]) -> "ErgodicSolution":
        path = Path(path)
        if not path.exists():
            raise FileNotFoundError(f"ergodic table not found: {path}")
        return cls.from_table(ErgodicTableFile.model_validate_json(path.read_text(encoding="utf-8")))


def solve_ergodic_ode(
    cost: CostSpec,
    gamma: float,
    sigma: float,
    a_bar: float,
    lam: float,
    config: ShootingConfig = ShootingConfig(),
) -> ErgodicSolution:
    """Solve the ergodic ODE by shooting on g′(0).

    Args:
        cost: Cost shape (only its exponent matters).
        gamma: Risk aversion γ.
        sigma: Volatility σ.
        a_bar: Diffusion coefficient ā of the frictionless target.
        lam: Cost magnitude λ.
        config: Shooting options in normalized units.

    Returns:
        The solution on the grid u_i = i·h, i = 0..round(x_max/h).

    Raises:
        ValueError: If ā = 0 or λ ≤ 0.
        BracketFailure: If the slope bracket is misplaced.
        NoConvergence: If bisection or the rebuilt solution fails its checks.
    """
    if a_bar == 0:
        raise ValueError("ā must be nonzero for the ergodic ODE")
    if lam <= 0:
        raise ValueError("λ must be positive for the ergodic ODE")
    scales = ode_scales(cost, gamma, sigma, a_bar, lam)
    p = scales.p
    slope = _shoot_slope(p, config)

    n = int(round(config.x_max / config.step))
    u = np.arange(n + 1) * config.step
    v = _sweep_backward(slope, p, u)
    seam = abs(float(v[0]))
    if seam > SEAM_TOLERANCE:
        raise NoConvergence(f"backward sweep misses g(0) = 0 by {seam:.3g}")
    v[0] = 0.0
    v = np.minimum.accumulate(v)
    dv = np.minimum(0.5 * u * u + slope - np.abs(v) ** p / p, 0.0)

    solution = ErgodicSolution(
        cost=cost,
        gamma=gamma,
        sigma=sigma,
        a_bar=a_bar,
        lam=lam,
        scale_x=scales.scale_x,
        scale_g=scales.scale_g,
        slope=slope,
        residual=0.0,
        seam=seam,
        config=config,
        u=u,
        v=v,
        dv=dv,
    )
    midpoints = u[:-1] + 0.5 * config.step
    residual = float(np.max(np.abs(solution.residual_at(midpoints))))
    object.__setattr__(solution, "residual", residual)

    ratio = solution.growth_ratio()
    if not 0.9 <= ratio <= 1.1:
        raise NoConvergence(f"asymptote ratio {ratio:.4f} at x_max outside [0.9, 1.1]")
    logger.info(
        f"Solved ergodic ODE: q={cost.exponent:g}, slope={slope:.12g}, "
        f"B={scales.scale_x:.4g}, A={scales.scale_g:.4g}, residual={residual:.2e}, seam={seam:.2e}"
    )
    return solution


def leading_order_rate(
    sol: ErgodicSolution, phi: Union[float, np.ndarray], phi_bar: Union[float, np.ndarray], lam_t: float
) -> Union[float, np.ndarray]:
    """φ̇ = (G′)⁻¹(g(φ − φ̄)/λ_t), which pulls φ toward φ̄."""
    return cost_marginal_inverse(sol.cost, sol.g(phi - phi_bar) / lam_t)


def simulate_delta_sde(sol: ErgodicSolution, batch: PathBatch, delta0: float) -> np.ndarray:
    """Euler–Maruyama for dΔ = (G′)⁻¹(g(Δ)/λ)dt − ā dW on the batch grid.

    Returns:
        (n_paths, N+1) matrix of Δ.
    """
    n, N = batch.n_paths, batch.n_steps
    paths = np.empty((n, N + 1))
    delta = np.full(n, float(delta0))
    paths[:, 0] = delta
    for m in range(N):
        drift = cost_marginal_inverse(sol.cost, sol.g(delta) / sol.lam)
        delta = delta + drift * batch.dt - sol.a_bar * batch.increments[:, m]
        paths[:, m + 1] = delta
    return paths


class _LeadingOrderPolicy(Policy):
    def __init__(self, engine: "LeadingOrderEngine"):
        self.engine = engine

    def rate(self, state: PathState) -> np.ndarray:
        return self.engine.rate(state.phi, state.phi_bar, state.lam_t)


class LeadingOrderEngine(StrategyEngine):
    """Stateless feedback φ̇ = (G′)⁻¹(g(φ − φ̄)/λ_t).

    When a deviation outruns the grid the solution is re-solved on a wider
    grid (if ``regrow``) and the query repeated.
    """

    name = "leading_order"

    def __init__(self, market: MarketParams, cost: CostSpec, grid: TimeGrid, solution: ErgodicSolution, regrow: bool = True):
        super().__init__(market, cost, grid)
        self.solution = solution
        self.regrow = regrow

    def rate(self, phi: np.ndarray, phi_bar: np.ndarray, lam_t: float) -> np.ndarray:
        while True:
            try:
                return leading_order_rate(self.solution, phi, phi_bar, lam_t)
            except ExtrapolationBeyondGrid:
                if not self.regrow:
                    raise
                self.solution = self.solution.regrow()

    def policy(self, n_paths: int) -> Policy:
        return _LeadingOrderPolicy(self)


def solve_for_market(market: MarketParams, cost: CostSpec, config: ShootingConfig = ShootingConfig()) -> ErgodicSolution:
    """Ergodic solution for the market's ā = −ξ/σ and the base λ."""
    a_bar = -market.xi_vol / market.sigma
    return solve_ergodic_ode(cost, market.gamma, market.sigma, a_bar, cost.lam, config)


def build_leading_order(
    market: MarketParams, cost: CostSpec, grid: TimeGrid, config: ShootingConfig = ShootingConfig(), solution_path: str = None
) -> LeadingOrderEngine:
    """Leading-order engine from a stored table or a fresh solve."""
    if solution_path:
        solution = ErgodicSolution.load(solution_path)
    else:
        solution = solve_for_market(market, cost, config)
    return LeadingOrderEngine(market, cost, grid, solution)

