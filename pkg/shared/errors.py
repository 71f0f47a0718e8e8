"""Exception hierarchy shared by every hedging package."""

from typing import List, Optional


class HedgingError(Exception):
    """Base class for all library failures."""


class NonFiniteError(HedgingError):
    """A state, loss or gradient became NaN or infinite.

    Attributes:
        stage: Where the value appeared (e.g. "fbsde.rollout", "optimizer").
        epoch: Training epoch, if raised during training.
        step: Time index on the grid, if known.
    """

    def __init__(self, stage: str, epoch: Optional[int] = None, step: Optional[int] = None, detail: str = ""):
        self.stage = stage
        self.epoch = epoch
        self.step = step
        self.detail = detail
        parts = [f"non-finite value in {stage}"]
        if epoch is not None:
            parts.append(f"epoch={epoch}")
        if step is not None:
            parts.append(f"step={step}")
        if detail:
            parts.append(detail)
        super().__init__(", ".join(parts))


class DivergenceError(NonFiniteError):
    """Training loss grew past the configured divergence factor."""


class BracketFailure(HedgingError):
    """Shooting slope bracket does not straddle the solution."""


class NoConvergence(HedgingError):
    """Iterative solve exhausted its budget without converging."""


class ExtrapolationBeyondGrid(HedgingError):
    """Ergodic solution queried outside its abscissa range."""

    def __init__(self, requested: float, x_max: float):
        self.requested = requested
        self.x_max = x_max
        super().__init__(f"|x|={requested:.6g} exceeds grid limit {x_max:.6g}")


class DimensionMismatch(HedgingError):
    """Array shapes do not match the declared layout."""


class DegenerateBatch(HedgingError):
    """Batch statistics are undefined (train-mode batch of size 1)."""


class ConfigError(HedgingError):
    """Run configuration failed validation.

    Attributes:
        violations: Human readable violations with dotted field paths.
    """

    def __init__(self, violations: List[str]):
        self.violations = violations
        super().__init__("invalid configuration: " + "; ".join(violations))


class ZeroDenominator(HedgingError):
    """Reference strategy never trades, so a relative distance is undefined."""
