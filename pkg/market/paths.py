"""Time grids, Brownian path batches and per-step path state."""

import logging
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimeGrid:
    """Uniform grid t_m = m·T/N on [0, T]."""

    n_steps: int
    horizon: float

    def __post_init__(self):
        if self.n_steps < 1:
            raise ValueError(f"n_steps must be >= 1, got {self.n_steps}")
        if not self.horizon > 0:
            raise ValueError(f"horizon must be > 0, got {self.horizon}")

    @property
    def dt(self) -> float:
        return self.horizon / self.n_steps

    @cached_property
    def times(self) -> np.ndarray:
        times = np.arange(self.n_steps + 1) * self.horizon / self.n_steps
        times[-1] = self.horizon
        times.flags.writeable = False
        return times


def path_generator(seed: int, path_index: int) -> np.random.Generator:
    """Philox stream owned by one path: key = seed, counter = index·2¹²⁸."""
    return np.random.Generator(np.random.Philox(key=seed, counter=path_index << 128))


@dataclass(frozen=True)
class PathBatch:
    """Brownian increments for a contiguous range of path indices.

    Attributes:
        increments: (n_paths, N) matrix of ΔW_m, read-only.
        seed: Stream key.
        start: Absolute index of the first path.
        dt: Grid step the increments were drawn for.
    """

    increments: np.ndarray
    seed: int
    start: int
    dt: float

    @property
    def n_paths(self) -> int:
        return self.increments.shape[0]

    @property
    def n_steps(self) -> int:
        return self.increments.shape[1]

    def levels(self) -> np.ndarray:
        """(n_paths, N+1) Brownian levels with W_0 = 0."""
        levels = np.zeros((self.n_paths, self.n_steps + 1))
        np.cumsum(self.increments, axis=1, out=levels[:, 1:])
        return levels


def sample_brownian(grid: TimeGrid, n_paths: int, seed: int, start: int = 0) -> PathBatch:
    """Draw increments for paths ``start .. start+n_paths-1``.

    Each path reads its own Philox stream, so any subset of paths is
    reproducible regardless of how the paths are batched.

    Raises:
        ValueError: If n_paths < 1 or the seed/start are negative.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if seed < 0 or start < 0:
        raise ValueError("seed and start must be non-negative")
    scale = np.sqrt(grid.dt)
    increments = np.empty((n_paths, grid.n_steps))
    for row in range(n_paths):
        increments[row] = path_generator(seed, start + row).standard_normal(grid.n_steps) * scale
    increments.flags.writeable = False
    return PathBatch(increments, seed, start, grid.dt)


@dataclass(frozen=True)
class PathState:
    """Vectorized state of a path batch at grid index m."""

    m: int
    t: float
    W: np.ndarray
    phi: np.ndarray
    xi: np.ndarray
    phi_bar: np.ndarray
    lam_t: float = field(default=0.0)
