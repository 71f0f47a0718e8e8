"""Loading, validating and overriding run configurations."""

import json
import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Union

from pydantic import ValidationError

from shared.errors import ConfigError
from shared.schemas import EngineKind, RunConfig

logger = logging.getLogger(__name__)


def format_violations(error: ValidationError) -> List[str]:
    """Turn pydantic errors into "dotted.path: message" strings."""
    violations = []
    for item in error.errors():
        location = ".".join(str(part) for part in item["loc"]) or "<root>"
        message = item["msg"]
        if message.startswith("Value error, "):
            message = message[len("Value error, ") :]
        violations.append(f"{location}: {message}")
    return violations


def _missing_files(config: RunConfig) -> List[str]:
    engines = set(config.compare.engines) | {config.engine}
    references = []
    if EngineKind.FBSDE in engines:
        references.append(("fbsde.checkpoint", config.fbsde.checkpoint))
    if EngineKind.DEEPHEDGE in engines:
        references.append(("deephedge.checkpoint", config.deephedge.checkpoint))
    if EngineKind.PASTING in engines:
        references.append(("pasting.checkpoint", config.pasting.checkpoint))
    if engines & {EngineKind.LEADING_ORDER, EngineKind.PASTING}:
        references.append(("leading_order.solution_path", config.leading_order.solution_path))
    return [f"{field}: file not found: {path}" for field, path in references if path and not Path(path).exists()]


def validate(config: Union[Dict[str, Any], RunConfig]) -> List[str]:
    """Return the list of violations; empty means the config is usable.

    Pure check: nothing is written and no engine is built.
    """
    if isinstance(config, RunConfig):
        config = config.model_dump(by_alias=True, mode="json")
    try:
        parsed = RunConfig.model_validate(config)
    except ValidationError as exc:
        return format_violations(exc)
    violations = _missing_files(parsed)
    if parsed.engine == EngineKind.CLOSED_FORM and not parsed.cost.is_quadratic:
        violations.append("engine: closed_form needs quadratic costs")
    return violations


def read_raw(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    if not path.exists():
        raise ConfigError([f"config: file not found: {path}"])
    try:
        return json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ConfigError([f"config: invalid JSON ({exc})"]) from exc


def load_config(path: Union[str, Path]) -> RunConfig:
    """Read and validate a JSON run configuration.

    Raises:
        ConfigError: With every violation found.
    """
    raw = read_raw(path)
    violations = validate(raw)
    if violations:
        raise ConfigError(violations)
    config = RunConfig.model_validate(raw)
    logger.info(f"Loaded config {config.name!r} from {path} (engine={config.engine.value})")
    return config


def apply_overrides(config: RunConfig, seed: Optional[int] = None, paper_scale: bool = False) -> RunConfig:
    """Apply --seed and --paper-scale to a validated config."""
    data = config.model_dump(by_alias=True)
    if paper_scale:
        overrides = config.paper_scale
        if overrides.n_steps is not None:
            data["grid"]["n_steps"] = overrides.n_steps
        if overrides.n_paths is not None:
            data["evaluation"]["n_paths"] = overrides.n_paths
        if overrides.epochs is not None:
            for section in ("fbsde", "deephedge"):
                data[section]["epochs"] = overrides.epochs
            data["pasting"]["deephedge"]["epochs"] = overrides.epochs
        logger.info("Applied paper-scale overrides")
    if seed is not None:
        data["evaluation"]["seed"] = seed
    return RunConfig.model_validate(data)


def with_horizon(config: RunConfig, horizon: float) -> RunConfig:
    """Same experiment at another horizon (grid step count unchanged)."""
    data = config.model_dump(by_alias=True)
    data["market"]["horizon"] = horizon
    return RunConfig.model_validate(data)
