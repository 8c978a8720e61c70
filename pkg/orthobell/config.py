"""Configuration and path management for orthobell.

This module handles:
- Loading configuration from ~/.config/orthobell/config.py
- Overrides from ORTHOBELL_* environment variables
- Path management for the run registry and output files
"""

import importlib.util
import os
from pathlib import Path
from typing import Optional

from .types import Config

ENV_PREFIX = "ORTHOBELL_"

# Upper-case names accepted in config.py, mapped to Config fields
CONFIG_KEYS = {
    "ROOT_SCAN_STEP": "root_scan_step",
    "ROOT_TOL": "root_tol",
    "SERIES_REL_TOL": "series_rel_tol",
    "SERIES_MAX_TERMS": "series_max_terms",
    "T_SOLVER_MAX_ITER": "t_solver_max_iter",
    "GRID_POINTS": "grid_points",
    "DEFAULT_SEED": "default_seed",
    "WORKERS": "workers",
    "CHUNK_PATHS": "chunk_paths",
    "OUTPUT_DIR": "output_dir",
}

# Environment overrides, e.g. ORTHOBELL_SEED=7
ENV_KEYS = {
    "SEED": "default_seed",
    "WORKERS": "workers",
    "OUTPUT_DIR": "output_dir",
}


def get_config_dir() -> Path:
    """Get the configuration directory path.

    Uses XDG_CONFIG_HOME if set, otherwise defaults to ~/.config/orthobell/
    """
    if config_home := os.getenv("XDG_CONFIG_HOME"):
        return Path(config_home) / "orthobell"
    return Path.home() / ".config" / "orthobell"


def get_data_dir() -> Path:
    """Get the data directory path.

    Uses XDG_DATA_HOME if set, otherwise defaults to ~/.local/share/orthobell/
    """
    if data_home := os.getenv("XDG_DATA_HOME"):
        return Path(data_home) / "orthobell"
    return Path.home() / ".local" / "share" / "orthobell"


def get_db_path() -> Path:
    """Path of the run registry database."""
    return get_data_dir() / "runs.db"


def ensure_data_dir() -> Path:
    data_dir = get_data_dir()
    data_dir.mkdir(parents=True, exist_ok=True)
    return data_dir


def ensure_output_dir(output_dir: str | Path) -> Path:
    """Create the output directory if it doesn't exist.

    Args:
        output_dir: Directory for CSV/JSON outputs and manifests

    Returns:
        The directory as a Path
    """
    path = Path(output_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def load_user_config() -> Optional[dict]:
    """Load user configuration from ~/.config/orthobell/config.py

    Returns:
        Dictionary with configuration values, or None if file doesn't exist
    """
    config_file = get_config_dir() / "config.py"

    if not config_file.exists():
        return None

    spec = importlib.util.spec_from_file_location("orthobell_user_config", config_file)
    if spec is None or spec.loader is None:
        raise ValueError(f"Cannot load config from {config_file}")

    config_module = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(config_module)

    return {attr: getattr(config_module, attr) for attr in dir(config_module) if not attr.startswith("_")}


def load_env_config() -> dict:
    """Collect ORTHOBELL_* overrides from the environment."""
    values = {}
    for env_name, field in ENV_KEYS.items():
        raw = os.getenv(ENV_PREFIX + env_name)
        if raw is not None and raw != "":
            values[field] = raw
    return values


def get_config(**overrides) -> Config:
    """Get application configuration.

    Priority order (highest first):
    1. Keyword overrides (e.g. from CLI options)
    2. Environment variables
    3. ~/.config/orthobell/config.py
    4. Default values

    Raises:
        pydantic.ValidationError: If a configured value is out of range
    """
    values = {}
    user_config = load_user_config() or {}
    for key, field in CONFIG_KEYS.items():
        if key in user_config:
            values[field] = user_config[key]
    values.update(load_env_config())
    values.update({k: v for k, v in overrides.items() if v is not None})
    return Config(**values)
