"""Shared data schemas for run configuration, reports and stored artifacts."""

from enum import Enum
from typing import Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator


class CostKind(str, Enum):
    """Shape of the instantaneous transaction cost G."""

    QUADRATIC = "quadratic"
    POWER = "power"


class LiquidityKind(str, Enum):
    """Deterministic liquidity multiplier schedules."""

    CONSTANT = "constant"
    PIECEWISE = "piecewise"


class EngineKind(str, Enum):
    """Strategy engines selectable from a run configuration."""

    CLOSED_FORM = "closed_form"
    LEADING_ORDER = "leading_order"
    FBSDE = "fbsde"
    DEEPHEDGE = "deephedge"
    PASTING = "pasting"
    ZERO = "zero"


class ClosedFormMode(str, Enum):
    """Evaluation form of the quadratic ground truth."""

    FEEDBACK = "feedback"
    EXPLICIT = "explicit"


class InitScheme(str, Enum):
    """Parameter initialization for per-step networks."""

    GLOROT = "glorot"
    ZERO_OUTPUT = "zero_output"
    ZEROS = "zeros"


class LiquiditySpec(BaseModel):
    """Liquidity multiplier Λ_t.

    A piecewise schedule holds ``levels[i]`` from ``breakpoints[i-1]`` (or 0)
    up to ``breakpoints[i]``; the final level holds to the horizon.
    """

    model_config = ConfigDict(frozen=True)

    kind: LiquidityKind = LiquidityKind.CONSTANT
    value: float = Field(1.0, gt=0, description="Level of a constant schedule")
    breakpoints: List[float] = Field(default_factory=list)
    levels: List[float] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_schedule(self) -> "LiquiditySpec":
        if self.kind == LiquidityKind.PIECEWISE:
            if len(self.levels) != len(self.breakpoints) + 1:
                raise ValueError("piecewise liquidity needs len(levels) = len(breakpoints) + 1")
            if any(level <= 0 for level in self.levels):
                raise ValueError("liquidity levels must be > 0")
            if any(b <= a for a, b in zip(self.breakpoints, self.breakpoints[1:])):
                raise ValueError("liquidity breakpoints must be strictly increasing")
        return self


class CostSpec(BaseModel):
    """Transaction cost shape, magnitude λ and liquidity multiplier."""

    model_config = ConfigDict(frozen=True, populate_by_name=True)

    kind: CostKind = CostKind.QUADRATIC
    q: Optional[float] = Field(None, description="Power exponent, required for power costs")
    lam: float = Field(..., alias="lambda", ge=0, description="Cost magnitude λ")
    liquidity: LiquiditySpec = Field(default_factory=LiquiditySpec)

    @model_validator(mode="after")
    def _check_exponent(self) -> "CostSpec":
        if self.kind == CostKind.POWER:
            if self.q is None or not (1.0 < self.q <= 2.0):
                raise ValueError("q ∈ (1,2]")
        elif self.q is not None and self.q != 2.0:
            raise ValueError("quadratic cost takes no exponent other than q = 2")
        return self

    @property
    def exponent(self) -> float:
        """Exponent q of G, 2 for quadratic costs."""
        return 2.0 if self.kind == CostKind.QUADRATIC else float(self.q)

    @property
    def is_quadratic(self) -> bool:
        return self.kind == CostKind.QUADRATIC


class MarketParams(BaseModel):
    """Bachelier market and preference parameters (times in trading days)."""

    model_config = ConfigDict(frozen=True)

    mu: float = Field(..., description="Expected return per day; null means ½γσ²s")
    sigma: float = Field(..., gt=0)
    gamma: float = Field(..., gt=0)
    shares: float = Field(..., gt=0)
    xi_vol: float = Field(0.0, description="Endowment volatility coefficient ξ")
    phi_init: float = Field(..., description="Initial position φ₀₋; null means s/2")
    horizon: float = Field(..., gt=0)

    @model_validator(mode="before")
    @classmethod
    def _fill_equilibrium(cls, data):
        if not isinstance(data, dict):
            return data
        data = dict(data)
        try:
            if data.get("mu") is None:
                data["mu"] = 0.5 * float(data["gamma"]) * float(data["sigma"]) ** 2 * float(data["shares"])
            if data.get("phi_init") is None:
                data["phi_init"] = 0.5 * float(data["shares"])
        except (KeyError, TypeError, ValueError):
            # Missing or malformed inputs are reported by field validation.
            pass
        return data


class GridSpec(BaseModel):
    """Time discretization; the horizon lives in the market section."""

    model_config = ConfigDict(frozen=True)

    n_steps: int = Field(..., ge=1)


class ClosedFormSection(BaseModel):
    """Quadratic ground-truth engine options."""

    mode: ClosedFormMode = ClosedFormMode.FEEDBACK


class LeadingOrderSection(BaseModel):
    """Ergodic ODE shooting options (normalized units)."""

    x_max: float = Field(12.0, gt=0)
    step: float = Field(1e-3, gt=0)
    slope_bracket: Tuple[float, float] = (-10.0, 0.0)
    tolerance: float = Field(1e-14, gt=0)
    max_iter: int = Field(200, ge=1)
    blowup_factor: float = Field(2.0, gt=1)
    solution_path: Optional[str] = Field(None, description="Reuse a solved ergodic table file")

    @field_validator("slope_bracket")
    @classmethod
    def _check_bracket(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        low, high = value
        if not (low < high <= 0):
            raise ValueError("slope bracket must satisfy a < b ≤ 0")
        return value


class TrainSection(BaseModel):
    """Optimizer loop options shared by every learner."""

    epochs: int = Field(2000, ge=0)
    batch_size: int = Field(256, ge=2)
    learning_rate: float = Field(1e-3, gt=0)
    sgd_learning_rate: float = Field(1e-4, gt=0)
    sgd_fraction: float = Field(0.0, ge=0, le=1)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    bn_momentum: float = Field(0.1, gt=0, le=1)
    seed: int = Field(0, ge=0)
    init: InitScheme = InitScheme.ZERO_OUTPUT
    log_every: int = Field(100, ge=1)
    divergence_factor: float = Field(1e6, gt=1)
    checkpoint: Optional[str] = Field(None, description="Load a trained checkpoint instead of training")


class FbsdeSection(TrainSection):
    """Deep FBSDE solver options."""

    hidden: List[int] = Field(default_factory=lambda: [15])


class DeepHedgeSection(TrainSection):
    """Deep hedging policy options."""

    hidden: List[int] = Field(default_factory=lambda: [10, 15, 10])
    sgd_fraction: float = Field(0.1, ge=0, le=1)


class PastingSection(BaseModel):
    """Pasting of the leading-order strategy with a learned terminal phase."""

    kappa: Optional[float] = Field(None, gt=0, description="Threshold multiplier; null picks the default window")
    deephedge: DeepHedgeSection = Field(default_factory=DeepHedgeSection)
    checkpoint: Optional[str] = None


class EvaluationSection(BaseModel):
    """Monte Carlo evaluation options."""

    n_paths: int = Field(100_000, ge=1)
    seed: int = Field(20240101, ge=0)
    block_size: Optional[int] = Field(None, ge=1, description="Reduction block; null uses the settings default")


class CompareSection(BaseModel):
    """Engines compared on common paths."""

    engines: List[EngineKind] = Field(default_factory=list)

    @field_validator("engines")
    @classmethod
    def _check_engines(cls, value: List[EngineKind]) -> List[EngineKind]:
        if value and len(value) < 2:
            raise ValueError("compare needs at least 2 engines")
        return value


class OutputSection(BaseModel):
    """Where artifacts are written."""

    dir: Optional[str] = None


class PaperScale(BaseModel):
    """Overrides applied by --paper-scale."""

    n_steps: Optional[int] = Field(None, ge=1)
    n_paths: Optional[int] = Field(None, ge=1)
    epochs: Optional[int] = Field(None, ge=0)


class RunConfig(BaseModel):
    """Complete experiment description read from a JSON file."""

    model_config = ConfigDict(populate_by_name=True)

    name: str = "run"
    market: MarketParams
    cost: CostSpec
    grid: GridSpec
    engine: EngineKind
    closed_form: ClosedFormSection = Field(default_factory=ClosedFormSection)
    leading_order: LeadingOrderSection = Field(default_factory=LeadingOrderSection)
    fbsde: FbsdeSection = Field(default_factory=FbsdeSection)
    deephedge: DeepHedgeSection = Field(default_factory=DeepHedgeSection)
    pasting: PastingSection = Field(default_factory=PastingSection)
    evaluation: EvaluationSection = Field(default_factory=EvaluationSection)
    compare: CompareSection = Field(default_factory=CompareSection)
    output: OutputSection = Field(default_factory=OutputSection)
    paper_scale: PaperScale = Field(default_factory=PaperScale)


# Reports and stored artifacts

class EvalReport(BaseModel):
    """Monte Carlo estimate of the goal functional for one strategy.

    A failed engine is reported with ``failed`` set and null statistics,
    which the table writers print as NaN.
    """

    strategy: str
    n_paths: int
    seed: int
    n_steps: int
    horizon: float
    j_mean: Optional[float] = None
    j_std: Optional[float] = None
    j_stderr: Optional[float] = None
    terminal_mse: Optional[float] = None
    failed: bool = False
    diagnostic: Optional[str] = None


class TrainRecord(BaseModel):
    """One row of a training history."""

    epoch: int
    loss: float
    raw_loss: float
    phase: str
    wall_time: float


class ParamStoreFile(BaseModel):
    """Serialized parameter store: flat values plus named layout."""

    layout: List[Tuple[str, List[int]]]
    values: List[float]
    buffers: Dict[str, List[float]] = Field(default_factory=dict)


class OptimStateFile(BaseModel):
    """Serialized optimizer state."""

    algorithm: str
    learning_rate: float
    beta1: float
    beta2: float
    eps: float
    step: int
    first_moment: List[List[float]]
    second_moment: List[List[float]]


class NetSpecFile(BaseModel):
    """Serialized network architecture."""

    input_dim: int
    hidden: List[int]
    output_dim: int
    batchnorm: List[bool]


class CheckpointFile(BaseModel):
    """Trained learner with grid metadata."""

    kind: EngineKind
    market: MarketParams
    cost: CostSpec
    n_steps: int
    net_spec: NetSpecFile
    nets: List[ParamStoreFile]
    y0: Optional[ParamStoreFile] = None
    bn_momentum: float = 0.1
    switch_index: Optional[int] = None
    kappa: Optional[float] = None
    optimizer: Optional[OptimStateFile] = None


class ErgodicTableFile(BaseModel):
    """Solved ergodic ODE in normalized units with its scales."""

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
    step: float
    u: List[float]
    v: List[float]
    dv: List[float]
