"""Shared utilities for the disorder-detection server and CLI."""

import logging
import os
from typing import Any, Optional

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, ValidationError

from disorder.errors import ConfigError

ENV_PREFIX = "QDD_"
DEFAULT_CONFIG = "kmcp.yaml"


def load_config(config_path: str) -> dict[str, Any]:
    """Load configuration from YAML file.

    Args:
        config_path: Path to the configuration file

    Returns:
        Configuration dictionary, empty when the file is missing or unreadable
    """
    try:
        with open(config_path) as f:
            return yaml.safe_load(f) or {}
    except FileNotFoundError:
        return {}
    except Exception as e:
        logging.error(f"Error loading config from {config_path}: {e}")
        return {}


def config_path() -> str:
    return os.environ.get(f"{ENV_PREFIX}CONFIG", DEFAULT_CONFIG)


def get_shared_config() -> dict[str, Any]:
    """Get shared configuration that tools can access.

    Returns:
        The ``tools:`` section of the configuration file
    """
    config = load_config(config_path())
    tools_config = config.get("tools", {})
    if isinstance(tools_config, dict):
        return tools_config
    return {}


def get_tool_config(tool_name: str) -> dict[str, Any]:
    """Get configuration for a specific tool.

    Args:
        tool_name: Name of the tool

    Returns:
        Tool-specific configuration
    """
    shared_config = get_shared_config()
    tool_config = shared_config.get(tool_name, {})
    if isinstance(tool_config, dict):
        return tool_config
    return {}


class ToolkitSettings(BaseModel):
    """Numerical defaults shared by the CLI, the tools and the experiments."""

    model_config = ConfigDict(extra="forbid", frozen=True)

    dt: float = 1e-3
    horizon_mean_disorder_times: float = 8.0
    n_paths: int = 200_000
    batch_size: int = 256
    workers: int = 1
    ci_z: float = 3.0
    scan_points: int = 61
    refine_iterations: int = 12
    discretization_allowance: float = 2e-3
    sqrt_dt_allowance: float = 0.25
    dp_h_1d: float = 1.0 / 2000
    dp_h_2d: float = 1.0 / 400
    dp_dt: float = 1e-3
    dp_tol: float = 1e-7
    dp_max_iterations: int = 100_000
    shiryaev_resolution: int = 2001


def _env_overrides() -> dict[str, str]:
    overrides = {}
    for name in ToolkitSettings.model_fields:
        value = os.environ.get(f"{ENV_PREFIX}{name.upper()}")
        if value is not None:
            overrides[name] = value
    return overrides


def get_toolkit_settings(path: Optional[str] = None) -> ToolkitSettings:
    """Read the ``toolkit:`` section, then apply ``QDD_<FIELD>`` overrides.

    A local ``.env`` file is loaded first so overrides can live there.

    Raises:
        ConfigError: if the section or an override does not validate
    """
    load_dotenv(override=False)
    section = load_config(path or config_path()).get("toolkit", {}) or {}
    if not isinstance(section, dict):
        raise ConfigError("the toolkit section must be a mapping")
    try:
        return ToolkitSettings.model_validate({**section, **_env_overrides()})
    except ValidationError as e:
        raise ConfigError(f"invalid toolkit settings: {e}") from e
