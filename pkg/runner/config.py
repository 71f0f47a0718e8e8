"""Process settings for the experiment runner."""

import os
from pathlib import Path

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict

# Find the .env file relative to the project root.
PROJECT_ROOT = Path(__file__).parent.parent
ENV_FILE = PROJECT_ROOT / ".env"


class Settings(BaseSettings):
    """Runner settings read from the environment and .env."""

    model_config = SettingsConfigDict(env_file=str(ENV_FILE), env_file_encoding="utf-8", extra="ignore")

    # Logging
    log_level: str = "INFO"

    # Evaluation
    runner_workers: int = Field(default_factory=lambda: os.cpu_count() or 1)
    runner_block_size: int = 4096

    # Output
    runner_out_dir: str = "runs"


settings = Settings()
