"""Subcommands of the experiment runner.

Each command takes a validated ``RunConfig`` and the resolved ``Options``,
writes its artifacts under ``options.out`` and returns an exit status.
"""

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

from autodiff.checkpoint import load_checkpoint, save_checkpoint
from engines import deephedge, fbsde, pasting
from engines.base import StrategyEngine, ZeroRateEngine
from engines.closed_form import ClosedFormEngine
from engines.ergodic import LeadingOrderEngine, ShootingConfig, build_leading_order, solve_for_market
from engines.training import TrainConfig
from evaluation.evaluator import GapPoint, compare, evaluate, failed_report
from evaluation.export import path_profile, write_gap_csv, write_history_csv, write_profile_csv, write_report_json, write_reports_csv
from market.paths import TimeGrid, sample_brownian
from runner.validation import with_horizon
from shared.errors import ConfigError, HedgingError
from shared.schemas import CheckpointFile, EngineKind, EvalReport, RunConfig, TrainRecord

logger = logging.getLogger(__name__)

PROFILE_PATHS = 10_000


@dataclass
class Options:
    """CLI options resolved against the settings."""

    out: Path
    workers: int = 1
    block_size: Optional[int] = None
    horizons: List[float] = field(default_factory=list)
    profile_paths: int = PROFILE_PATHS


@dataclass
class BuiltEngine:
    """An engine plus what training left behind, if it was trained here."""

    engine: StrategyEngine
    history: List[TrainRecord] = field(default_factory=list)
    checkpoint: Optional[CheckpointFile] = None


def run_grid(config: RunConfig) -> TimeGrid:
    return TimeGrid(config.grid.n_steps, config.market.horizon)


def _check_checkpoint_grid(checkpoint: CheckpointFile, config: RunConfig, path: str) -> None:
    if checkpoint.n_steps != config.grid.n_steps or checkpoint.market.horizon != config.market.horizon:
        raise ConfigError(
            [f"checkpoint: {path} was trained on N={checkpoint.n_steps}, T={checkpoint.market.horizon}, "
             f"config has N={config.grid.n_steps}, T={config.market.horizon}"]
        )


def leading_order_engine(config: RunConfig) -> LeadingOrderEngine:
    section = config.leading_order
    return build_leading_order(
        config.market, config.cost, run_grid(config), ShootingConfig.from_section(section), section.solution_path
    )


def _build_fbsde(config: RunConfig) -> BuiltEngine:
    section = config.fbsde
    if section.checkpoint:
        checkpoint = load_checkpoint(section.checkpoint, EngineKind.FBSDE)
        _check_checkpoint_grid(checkpoint, config, section.checkpoint)
        return BuiltEngine(fbsde.strategy(fbsde.from_checkpoint(checkpoint)))
    model = fbsde.FbsdeModel.create(
        config.market, config.cost, run_grid(config), section.hidden, section.init, section.seed, section.bn_momentum
    )
    outcome = fbsde.train(model, TrainConfig.from_section(section))
    return BuiltEngine(fbsde.strategy(model), outcome.history, fbsde.to_checkpoint(model, outcome))


def _build_deephedge(config: RunConfig) -> BuiltEngine:
    section = config.deephedge
    if section.checkpoint:
        checkpoint = load_checkpoint(section.checkpoint, EngineKind.DEEPHEDGE)
        _check_checkpoint_grid(checkpoint, config, section.checkpoint)
        return BuiltEngine(deephedge.strategy(deephedge.from_checkpoint(checkpoint)))
    model = deephedge.DeepHedgeModel.create(
        config.market, config.cost, run_grid(config), section.hidden, section.init, section.seed, section.bn_momentum
    )
    outcome = deephedge.train(model, TrainConfig.from_section(section))
    return BuiltEngine(deephedge.strategy(model), outcome.history, deephedge.to_checkpoint(model, outcome))


def _build_pasting(config: RunConfig) -> BuiltEngine:
    section = config.pasting
    lead = leading_order_engine(config)
    if section.checkpoint:
        checkpoint = load_checkpoint(section.checkpoint, EngineKind.PASTING)
        _check_checkpoint_grid(checkpoint, config, section.checkpoint)
        model = pasting.PastingModel.create(deephedge.from_checkpoint(checkpoint), lead, checkpoint.kappa)
        return BuiltEngine(pasting.PastingEngine(model))
    net = section.deephedge
    deep = deephedge.DeepHedgeModel.create(
        config.market, config.cost, run_grid(config), net.hidden, net.init, net.seed, net.bn_momentum
    )
    model = pasting.PastingModel.create(deep, lead, section.kappa)
    outcome = pasting.train_pasted(model, TrainConfig.from_section(net))
    return BuiltEngine(pasting.PastingEngine(model), outcome.history, pasting.pasting_checkpoint(model, outcome))


BUILDERS: Dict[EngineKind, Callable[[RunConfig], BuiltEngine]] = {
    EngineKind.ZERO: lambda c: BuiltEngine(ZeroRateEngine(c.market, c.cost, run_grid(c))),
    EngineKind.CLOSED_FORM: lambda c: BuiltEngine(ClosedFormEngine(c.market, c.cost, run_grid(c), c.closed_form.mode)),
    EngineKind.LEADING_ORDER: lambda c: BuiltEngine(leading_order_engine(c)),
    EngineKind.FBSDE: _build_fbsde,
    EngineKind.DEEPHEDGE: _build_deephedge,
    EngineKind.PASTING: _build_pasting,
}


def build_engine(config: RunConfig, kind: Optional[EngineKind] = None) -> BuiltEngine:
    """Engine ``kind`` (default: the configured one), loaded or trained in-process."""
    kind = EngineKind(kind or config.engine)
    logger.info(f"Building {kind.value} engine for T={config.market.horizon}, N={config.grid.n_steps}")
    return BUILDERS[kind](config)


def _failure_row(config: RunConfig, name: str, options: Options, error: Exception) -> int:
    report = failed_report(name, config.evaluation.n_paths, config.evaluation.seed, run_grid(config), error)
    write_reports_csv([report], options.out / "report.csv")
    write_report_json(report, options.out / "report.json")
    return 1


def solve_ode(config: RunConfig, options: Options) -> int:
    """Solve the ergodic ODE and store its table."""
    solution = solve_for_market(config.market, config.cost, ShootingConfig.from_section(config.leading_order))
    path = solution.save(options.out / "ergodic.json")
    logger.info(f"Ergodic solution (growth ratio {solution.growth_ratio():.4f}) written to {path}")
    return 0


def _train(kind: EngineKind) -> Callable[[RunConfig, Options], int]:
    def command(config: RunConfig, options: Options) -> int:
        # Loading a checkpoint here would train nothing.
        data = config.model_dump(by_alias=True)
        section = data["pasting"] if kind == EngineKind.PASTING else data[kind.value]
        section["checkpoint"] = None
        config_fresh = RunConfig.model_validate(data)
        try:
            built = build_engine(config_fresh, kind)
        except ConfigError:
            raise
        except HedgingError as exc:
            logger.error(f"Training {kind.value} failed: {exc}", exc_info=True)
            return _failure_row(config, kind.value, options, exc)
        save_checkpoint(built.checkpoint, options.out / f"{kind.value}_checkpoint.json")
        write_history_csv(built.history, options.out / f"{kind.value}_history.csv")
        return 0

    command.__name__ = f"train_{kind.value}"
    command.__doc__ = f"Train the {kind.value} networks and write checkpoint plus loss history."
    return command


train_fbsde = _train(EngineKind.FBSDE)
train_deephedge = _train(EngineKind.DEEPHEDGE)
train_pasting = _train(EngineKind.PASTING)


def evaluate_command(config: RunConfig, options: Options) -> int:
    """Evaluate the configured engine; a failing engine leaves a NaN row."""
    try:
        built = build_engine(config)
        report = evaluate(
            built.engine,
            config.evaluation.n_paths,
            config.evaluation.seed,
            workers=options.workers,
            block_size=config.evaluation.block_size or options.block_size,
        )
    except ConfigError:
        raise
    except HedgingError as exc:
        logger.error(f"Evaluation of {config.engine.value} failed: {exc}", exc_info=True)
        return _failure_row(config, config.engine.value, options, exc)
    write_reports_csv([report], options.out / "report.csv")
    write_report_json(report, options.out / "report.json")
    if built.checkpoint is not None:
        save_checkpoint(built.checkpoint, options.out / f"{config.engine.value}_checkpoint.json")
    return 0


def _compare_rows(config: RunConfig, options: Options) -> List[EvalReport]:
    built, failures = [], {}
    for kind in config.compare.engines:
        try:
            built.append(build_engine(config, kind).engine)
        except ConfigError:
            raise
        except HedgingError as exc:
            logger.warning(f"Engine {kind.value} could not be built: {exc}")
            failures[kind.value] = failed_report(
                kind.value, config.evaluation.n_paths, config.evaluation.seed, run_grid(config), exc
            )
    block_size = config.evaluation.block_size or options.block_size
    if len(built) >= 2:
        rows = compare(built, config.evaluation.n_paths, config.evaluation.seed, options.workers, block_size).rows
    else:
        rows = [
            evaluate(e, config.evaluation.n_paths, config.evaluation.seed, workers=options.workers, block_size=block_size)
            for e in built
        ]
    by_name = {r.strategy: r for r in rows}
    by_name.update(failures)
    return [by_name[kind.value] for kind in config.compare.engines]


def compare_command(config: RunConfig, options: Options) -> int:
    """Evaluate ``compare.engines`` on common paths, optionally over several horizons.

    The first listed engine is the gap reference, the second the target.
    """
    if len(config.compare.engines) < 2:
        raise ConfigError(["compare.engines: need at least 2 engines"])
    horizons = options.horizons or [config.market.horizon]
    reports, points = [], []
    for horizon in horizons:
        run = with_horizon(config, horizon) if horizon != config.market.horizon else config
        rows = _compare_rows(run, options)
        reports.extend(rows)
        reference, target = rows[0], rows[1]
        if not (reference.failed or target.failed):
            points.append(
                GapPoint(run.market.horizon, run.cost.lam, reference.j_mean, target.j_mean, reference.j_stderr)
            )
    write_reports_csv(reports, options.out / "compare.csv")
    if len(horizons) > 1:
        write_gap_csv(points, options.out / "gaps.csv")
    return 1 if any(r.failed for r in reports) else 0


def export_paths(config: RunConfig, options: Options) -> int:
    """Per-step rate and position profiles of the configured engine."""
    try:
        engine = build_engine(config).engine
        batch = sample_brownian(engine.grid, options.profile_paths, config.evaluation.seed)
        frame = path_profile(engine, batch)
    except ConfigError:
        raise
    except HedgingError as exc:
        logger.error(f"Path export for {config.engine.value} failed: {exc}", exc_info=True)
        return _failure_row(config, config.engine.value, options, exc)
    write_profile_csv(frame, options.out / f"{config.engine.value}_profile.csv")
    return 0


COMMANDS: Dict[str, Callable[[RunConfig, Options], int]] = {
    "solve-ode": solve_ode,
    "train-fbsde": train_fbsde,
    "train-deephedge": train_deephedge,
    "train-pasting": train_pasting,
    "evaluate": evaluate_command,
    "compare": compare_command,
    "export-paths": export_paths,
}
