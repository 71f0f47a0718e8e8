"""Mergeable running moments for block-wise Monte Carlo reduction."""

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class RunningMoments:
    """Count, mean and sum of squared deviations (M2) of a sample."""

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    @classmethod
    def from_values(cls, values: np.ndarray) -> "RunningMoments":
        values = np.asarray(values, dtype=np.float64)
        if values.size == 0:
            return cls()
        mean = float(values.mean())
        centered = values - mean
        return cls(int(values.size), mean, float(np.dot(centered, centered)))

    def update(self, value: float) -> "RunningMoments":
        """Welford update with a single observation."""
        count = self.count + 1
        delta = value - self.mean
        mean = self.mean + delta / count
        return RunningMoments(count, mean, self.m2 + delta * (value - mean))

    def merge(self, other: "RunningMoments") -> "RunningMoments":
        """Combine two disjoint samples (parallel Welford update)."""
        if other.count == 0:
            return self
        if self.count == 0:
            return other
        count = self.count + other.count
        delta = other.mean - self.mean
        ratio = other.count / count
        mean = self.mean + delta * ratio
        m2 = self.m2 + other.m2 + delta * delta * self.count * ratio
        return RunningMoments(count, mean, m2)

    @property
    def variance(self) -> float:
        """Unbiased sample variance."""
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def std(self) -> float:
        return float(np.sqrt(self.variance))

    @property
    def stderr(self) -> float:
        return self.std / np.sqrt(self.count) if self.count else float("nan")
