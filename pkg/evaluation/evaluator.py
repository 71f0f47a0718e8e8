"""Monte Carlo evaluation of strategy engines on common random numbers."""

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from functools import partial
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from engines.base import StrategyEngine, simulate
from evaluation.stats import RunningMoments
from market.paths import PathBatch, TimeGrid, sample_brownian
from shared.errors import HedgingError, ZeroDenominator
from shared.schemas import EvalReport

logger = logging.getLogger(__name__)

DEFAULT_BLOCK_SIZE = 4096


@dataclass(frozen=True)
class BlockResult:
    """Goal moments and Σ(φ̇_T/s)² of one block of paths."""

    start: int
    moments: RunningMoments
    terminal_sq_sum: float


def evaluate_block(engine: StrategyEngine, seed: int, start: int, stop: int) -> BlockResult:
    """Simulate paths ``start .. stop-1`` and reduce them."""
    batch = sample_brownian(engine.grid, stop - start, seed, start=start)
    result = simulate(engine, batch)
    scaled = result.terminal_rate / engine.market.shares
    return BlockResult(start, RunningMoments.from_values(result.goal), float(np.dot(scaled, scaled)))


def _evaluate_chunk(engine: StrategyEngine, seed: int, ranges: Sequence[Tuple[int, int]]) -> List[BlockResult]:
    return [evaluate_block(engine, seed, start, stop) for start, stop in ranges]


def block_ranges(n_paths: int, block_size: int) -> List[Tuple[int, int]]:
    """Reduction blocks aligned to absolute path indices."""
    return [(start, min(start + block_size, n_paths)) for start in range(0, n_paths, block_size)]


def evaluate(
    engine: StrategyEngine,
    n_paths: int,
    seed: int,
    grid: Optional[TimeGrid] = None,
    workers: int = 1,
    block_size: Optional[int] = None,
    chunk_blocks: Optional[int] = None,
) -> EvalReport:
    """Estimate J_T and E[|φ̇_T|²/s²] for ``engine``.

    Paths are reduced per fixed block and the blocks are merged in index
    order, so the report does not depend on ``workers`` or ``chunk_blocks``.
    Changing ``block_size`` regroups the sums and moves j_mean in its last
    bits.

    Args:
        engine: Strategy to evaluate.
        n_paths: Number of Monte Carlo paths.
        seed: Path stream key.
        grid: Optional grid to check the engine against.
        workers: Worker processes; 1 runs in-process.
        block_size: Paths per reduction block.
        chunk_blocks: Blocks per worker task.

    Raises:
        ValueError: If n_paths < 1.
        NonFiniteError: If any path goal or rate is NaN or infinite.
    """
    if n_paths < 1:
        raise ValueError(f"n_paths must be >= 1, got {n_paths}")
    if grid is not None:
        engine.check_grid(grid)
    block_size = block_size or DEFAULT_BLOCK_SIZE
    ranges = block_ranges(n_paths, block_size)
    if chunk_blocks is None:
        chunk_blocks = max(1, math.ceil(len(ranges) / max(1, workers)))
    chunks = [ranges[i : i + chunk_blocks] for i in range(0, len(ranges), chunk_blocks)]
    task = partial(_evaluate_chunk, engine, seed)

    logger.info(f"Evaluating {engine.name}: {n_paths} paths in {len(ranges)} blocks, {workers} worker(s)")
    if workers > 1 and len(chunks) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = [block for chunk in pool.map(task, chunks) for block in chunk]
    else:
        results = [block for chunk in chunks for block in task(chunk)]

    moments = RunningMoments()
    terminal_sum = 0.0
    for block in results:
        moments = moments.merge(block.moments)
        terminal_sum += block.terminal_sq_sum
        logger.debug(f"Merged block at path {block.start}: running mean {moments.mean:.6e}")

    report = EvalReport(
        strategy=engine.name,
        n_paths=n_paths,
        seed=seed,
        n_steps=engine.grid.n_steps,
        horizon=engine.grid.horizon,
        j_mean=moments.mean,
        j_std=moments.std,
        j_stderr=moments.stderr,
        terminal_mse=terminal_sum / n_paths,
    )
    logger.info(
        f"{engine.name}: J={report.j_mean:.6e} ± {report.j_std:.4e} "
        f"(stderr {report.j_stderr:.3e}), terminal MSE {report.terminal_mse:.3e}"
    )
    return report


def failed_report(name: str, n_paths: int, seed: int, grid: TimeGrid, error: Exception) -> EvalReport:
    """NaN row for an engine that could not be trained or evaluated."""
    return EvalReport(
        strategy=name,
        n_paths=n_paths,
        seed=seed,
        n_steps=grid.n_steps,
        horizon=grid.horizon,
        failed=True,
        diagnostic=str(error),
    )


@dataclass
class Comparison:
    """Reports on common paths and the gap J_best − J_engine per engine."""

    rows: List[EvalReport]
    gaps: Dict[str, Optional[float]] = field(default_factory=dict)

    def row(self, name: str) -> EvalReport:
        return next(r for r in self.rows if r.strategy == name)


def compare(
    engines: Sequence[StrategyEngine],
    n_paths: int,
    seed: int,
    workers: int = 1,
    block_size: Optional[int] = None,
) -> Comparison:
    """Evaluate several engines on the same paths; failures become NaN rows."""
    if len(engines) < 2:
        raise ValueError("compare needs at least 2 engines")
    grid = engines[0].grid
    rows: List[EvalReport] = []
    for engine in engines:
        try:
            rows.append(evaluate(engine, n_paths, seed, grid=grid, workers=workers, block_size=block_size))
        except HedgingError as exc:
            logger.warning(f"Engine {engine.name} failed during compare: {exc}")
            rows.append(failed_report(engine.name, n_paths, seed, grid, exc))

    finite = [r.j_mean for r in rows if not r.failed]
    best = max(finite) if finite else None
    gaps = {r.strategy: (None if r.failed or best is None else best - r.j_mean) for r in rows}
    return Comparison(rows=rows, gaps=gaps)


@dataclass(frozen=True)
class GapPoint:
    """Gap between a reference and a target engine at one horizon."""

    horizon: float
    lam: float
    reference_j: float
    target_j: float
    stderr: float

    @property
    def gap(self) -> float:
        return self.reference_j - self.target_j

    @property
    def rate(self) -> float:
        """√λ/T, the order of the leading-order gap."""
        return math.sqrt(self.lam) / self.horizon

    @property
    def relative_gap(self) -> float:
        return self.gap / abs(self.reference_j)


def gap_point(comparison: Comparison, reference: str, target: str, lam: float) -> GapPoint:
    ref, tgt = comparison.row(reference), comparison.row(target)
    return GapPoint(ref.horizon, lam, ref.j_mean, tgt.j_mean, ref.j_stderr)


def pathwise_distance(engine_a: StrategyEngine, engine_b: StrategyEngine, batch: PathBatch) -> float:
    """E[∫(φ̇ᵃ − φ̇ᵇ)²dt] / E[∫(φ̇ᵇ)²dt] on common paths.

    Raises:
        ZeroDenominator: If ``engine_b`` never trades on the batch.
    """
    engine_a.check_grid(engine_b.grid)
    rates_a = simulate(engine_a, batch, record=True).rates
    rates_b = simulate(engine_b, batch, record=True).rates
    dt = engine_b.grid.dt
    denominator = float(np.sum(rates_b * rates_b)) * dt
    if denominator == 0.0:
        raise ZeroDenominator(f"{engine_b.name} never trades on this batch")
    diff = rates_a - rates_b
    return float(np.sum(diff * diff)) * dt / denominator
