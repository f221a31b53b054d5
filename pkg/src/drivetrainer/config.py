"""
Centralized configuration loaded from .env via Pydantic Settings.

Runtime knobs (log rendering, output folders, default scale) live in
`Settings`. Experiment configuration (scenario, observation, network,
trainer) lives in the pydantic models of each module and is read from
YAML files through `load_yaml_config`.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Literal, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ValidationError
from pydantic_settings import BaseSettings, SettingsConfigDict

from drivetrainer.errors import ConfigError

# Project root is two levels up from this file (src/drivetrainer/config.py → project root)
PROJECT_ROOT = Path(__file__).resolve().parent.parent.parent
CONFIGS_DIR = PROJECT_ROOT / "configs"

load_dotenv(PROJECT_ROOT / ".env")

# Training episodes draw seeds below this bound, evaluation at or above it.
TRAIN_SEED_LIMIT = 1_000_000_000


class Settings(BaseSettings):
    """Application-wide settings sourced from environment / .env file."""

    model_config = SettingsConfigDict(
        env_file=str(PROJECT_ROOT / ".env"),
        env_file_encoding="utf-8",
        env_prefix="DRIVETRAINER_",
        extra="ignore",
    )

    # ── Path Utils ───────────────────────────────────────
    PROJECT_ROOT: Path = PROJECT_ROOT
    runs_dir: Path = PROJECT_ROOT / "runs"

    # ── Logging ──────────────────────────────────────────
    environment: Literal["dev", "prod"] = "dev"
    log_level: str = "INFO"

    # ── Experiment defaults ──────────────────────────────
    scale: Literal["desk", "full"] = "desk"
    eval_workers: int = 4
    eval_seed_offset: int = TRAIN_SEED_LIMIT
    eval_trials: int = 100


# Singleton — import `settings` from anywhere
settings = Settings()


ModelT = TypeVar("ModelT", bound=BaseModel)


def load_yaml_config(path: str | Path, model: type[ModelT]) -> ModelT:
    """Read a YAML key-value document and validate it against `model`."""
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as e:
        raise ConfigError(f"cannot read config {path}: {e}") from e
    except yaml.YAMLError as e:
        raise ConfigError(f"config {path} is not valid YAML: {e}") from e
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config {path} must be a key-value document")
    try:
        return model.model_validate(raw)
    except ValidationError as e:
        raise ConfigError(f"config {path} failed validation: {e}") from e


def config_hash(model: BaseModel) -> str:
    """Stable SHA-256 over the canonical JSON form of a config model."""
    canonical = json.dumps(model.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()
