"""CSV/JSON writers for reports, histories, path profiles and gap series."""

import logging
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np
import pandas as pd

from engines.base import StrategyEngine, simulate
from evaluation.evaluator import GapPoint
from market.paths import PathBatch
from shared.schemas import EvalReport, TrainRecord

logger = logging.getLogger(__name__)

PROFILE_QUANTILES = (5, 25, 50, 75, 95)
REPORT_COLUMNS = ["method", "n_steps", "horizon", "j_mean", "j_std", "j_stderr", "terminal_mse", "n_paths", "seed", "diagnostic"]


def _prepare(path: Union[str, Path]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    return path


def report_frame(reports: Iterable[EvalReport]) -> pd.DataFrame:
    """One row per report; failed engines carry NaN statistics."""
    rows = [
        {
            "method": r.strategy,
            "n_steps": r.n_steps,
            "horizon": r.horizon,
            "j_mean": np.nan if r.j_mean is None else r.j_mean,
            "j_std": np.nan if r.j_std is None else r.j_std,
            "j_stderr": np.nan if r.j_stderr is None else r.j_stderr,
            "terminal_mse": np.nan if r.terminal_mse is None else r.terminal_mse,
            "n_paths": r.n_paths,
            "seed": r.seed,
            "diagnostic": r.diagnostic or "",
        }
        for r in reports
    ]
    return pd.DataFrame(rows, columns=REPORT_COLUMNS)


def write_reports_csv(reports: Sequence[EvalReport], path: Union[str, Path]) -> Path:
    path = _prepare(path)
    report_frame(reports).to_csv(path, index=False, na_rep="NaN", float_format="%.10g")
    logger.info(f"Wrote {len(reports)} report row(s) to {path}")
    return path


def write_report_json(report: EvalReport, path: Union[str, Path]) -> Path:
    path = _prepare(path)
    path.write_text(report.model_dump_json(indent=2), encoding="utf-8")
    return path


def write_history_csv(history: Sequence[TrainRecord], path: Union[str, Path]) -> Path:
    path = _prepare(path)
    frame = pd.DataFrame([r.model_dump() for r in history], columns=["epoch", "loss", "raw_loss", "phase", "wall_time"])
    frame.to_csv(path, index=False, float_format="%.10g")
    logger.info(f"Wrote training history ({len(history)} epochs) to {path}")
    return path


def path_profile(engine: StrategyEngine, batch: PathBatch) -> pd.DataFrame:
    """Per-step mean and quantiles of the rate and the position over paths."""
    result = simulate(engine, batch, record=True)
    grid = engine.grid
    rates = np.concatenate([result.rates, np.zeros((batch.n_paths, 1))], axis=1)
    frame = pd.DataFrame({"t": grid.times})
    for label, values in (("rate", rates), ("position", result.positions)):
        frame[f"{label}_mean"] = values.mean(axis=0)
        for q, row in zip(PROFILE_QUANTILES, np.percentile(values, PROFILE_QUANTILES, axis=0)):
            frame[f"{label}_q{q:02d}"] = row
    return frame


def write_profile_csv(frame: pd.DataFrame, path: Union[str, Path]) -> Path:
    path = _prepare(path)
    frame.to_csv(path, index=False, float_format="%.10g")
    logger.info(f"Wrote path profile ({len(frame)} steps) to {path}")
    return path


def gap_frame(points: List[GapPoint]) -> pd.DataFrame:
    return pd.DataFrame(
        [
            {
                "horizon": p.horizon,
                "sqrt_lam_over_T": p.rate,
                "reference_j": p.reference_j,
                "target_j": p.target_j,
                "gap": p.gap,
                "relative_gap": p.relative_gap,
                "stderr": p.stderr,
            }
            for p in sorted(points, key=lambda p: p.horizon)
        ]
    )


def write_gap_csv(points: List[GapPoint], path: Union[str, Path]) -> Path:
    path = _prepare(path)
    gap_frame(points).to_csv(path, index=False, float_format="%.10g")
    return path
