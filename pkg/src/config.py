"""Configuration module for loading and validating engine settings from YAML."""

import logging
import os
import re
from collections.abc import Mapping
from pathlib import Path
from typing import Self, TypedDict, cast

import yaml
from pydantic import BaseModel, ConfigDict, Field, field_validator

# Type definitions for configuration


class ConfigInput(TypedDict, total=False):
    log_level: str
    logger_levels: dict[str, str]
    point_count_threshold: int
    bsgs_max_points: int
    irreducibility_search_bound: int
    prime_budget: int
    c1: float
    tolerance: float
    workers: int
    cache_dir: str
    records_path: str | None
    seed: int | None


logger = logging.getLogger(__name__)

# Constants
ENV_VAR_PATTERN = re.compile(r"\$\{[^}]+\}")
DEFAULT_CONFIG_PATH = "configs/config.yml"
CACHE_DIR_ENV = "ECSTAB_CACHE_DIR"
DEFAULT_CACHE_DIR = Path.home() / ".cache" / "ec-stability"

type ConfigScalar = str | int | float | bool | None
type ConfigValue = ConfigScalar | list["ConfigValue"] | dict[str, "ConfigValue"]

_VALID_LOG_LEVELS = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]


def _validate_log_level_str(v: str) -> str:
    """
    Validate and normalise a log level string.

    Args:
        v: Raw log level string

    Returns:
        Uppercased, validated log level string

    Raises:
        ValueError: If the value is not a recognised Python logging level
    """
    v_upper = v.upper()
    if v_upper not in _VALID_LOG_LEVELS:
        raise ValueError(f"log_level must be one of {_VALID_LOG_LEVELS}, got '{v}'")
    return v_upper


def _is_env_var_reference(value: str) -> bool:
    """Check if a string value contains a ${VAR} reference."""
    return isinstance(value, str) and bool(ENV_VAR_PATTERN.search(value))


def _expand_env_vars(data: Mapping[str, ConfigValue]) -> dict[str, ConfigValue]:
    """
    Recursively expand ${VAR} references in dictionary values.

    - Undefined env vars: the key is silently omitted (pydantic defaults apply)
    - Empty env vars: logs WARNING and the key is omitted (likely a config mistake)

    Args:
        data: Dictionary with potential ${VAR} references

    Returns:
        Dictionary with environment variables expanded
    """
    expanded: dict[str, ConfigValue] = {}
    for key, value in data.items():
        if isinstance(value, str):
            is_env_var_ref = _is_env_var_reference(value)
            expanded_value = os.path.expandvars(value)

            if ENV_VAR_PATTERN.search(expanded_value):
                continue
            if is_env_var_ref and expanded_value == "":
                logger.warning(
                    "Environment variable for field '%s' is defined but empty. Using default value instead.",
                    key,
                )
                continue
            expanded[key] = expanded_value
        elif isinstance(value, dict):
            expanded[key] = _expand_env_vars(value)
        elif isinstance(value, list):
            expanded[key] = [os.path.expandvars(item) if isinstance(item, str) else item for item in value]
        else:
            expanded[key] = value

    return expanded


def default_cache_dir() -> Path:
    env_value = os.environ.get(CACHE_DIR_ENV, "").strip()
    return Path(env_value) if env_value else DEFAULT_CACHE_DIR


class Config(BaseModel):
    """
    Engine configuration with validation.

    Values come from config.yml (with ${VAR} interpolation), then command-line
    overrides via with_overrides().
    """

    model_config = ConfigDict(frozen=True)

    log_level: str = Field("INFO", description="Logging verbosity level")
    logger_levels: dict[str, str] = Field(default_factory=dict, description="Per-module logging levels")

    # Point counting
    point_count_threshold: int = Field(
        10_000, ge=50, description="Exhaustive count below this prime, baby-step giant-step above it"
    )
    bsgs_max_points: int = Field(16, ge=1, le=64, description="Random points sampled before falling back")

    # Certificates
    irreducibility_search_bound: int = Field(1_000, ge=3, description="Search ceiling for the E[p] certificate")
    prime_budget: int = Field(1_000_000, ge=10, description="Search ceiling for ramified primes")

    # Density statistics
    c1: float = Field(1.0, gt=0, description="Constant of the curve-count bound")
    tolerance: float = Field(1e-12, gt=0, le=1e-3, description="Truncation tolerance for series")
    workers: int = Field(1, ge=1, le=256, description="Worker processes for prime sweeps")

    # Data
    cache_dir: Path = Field(default_factory=default_cache_dir, description="Sweep cache directory")
    records_path: Path | None = Field(None, description="JSON-lines curve record file")
    seed: int | None = Field(None, description="Seed for randomized point sampling")

    @field_validator("log_level")
    @classmethod
    def validate_log_level(cls, v: str) -> str:
        """Validate log level is one of the standard Python logging levels."""
        return _validate_log_level_str(v)

    @field_validator("logger_levels")
    @classmethod
    def validate_logger_levels(cls, v: dict[str, str]) -> dict[str, str]:
        """Validate every per-module level the same way as log_level."""
        return {name: _validate_log_level_str(level) for name, level in v.items()}

    def with_overrides(self, **overrides: object) -> Self:
        """
        Return a validated copy with command-line overrides applied.

        None values mean "flag not given" and are skipped.
        """
        updates = {key: value for key, value in overrides.items() if value is not None}
        if not updates:
            return self
        return type(self).model_validate({**self.model_dump(), **updates})


def load_config(config_path: str = DEFAULT_CONFIG_PATH) -> Config:
    """
    Load and validate configuration from YAML file.

    Args:
        config_path: Path to config.yml file (default: configs/config.yml)

    Returns:
        Validated Config instance

    Raises:
        FileNotFoundError: If config file doesn't exist
        yaml.YAMLError: If YAML parsing fails
        ValueError: If the file is empty or its root is not a mapping
        pydantic.ValidationError: If configuration validation fails
    """
    config_file = Path(config_path)

    if not config_file.exists():
        raise FileNotFoundError(f"Configuration file not found: {config_path}")

    logger.debug("Loading configuration from %s", config_path)
    with config_file.open("r") as f:
        raw_config = yaml.safe_load(f)

    if raw_config is None:
        raise ValueError("Configuration file is empty")
    if not isinstance(raw_config, dict):
        raise ValueError("config.yml must contain a mapping/object at the root (not a list, string, or other type)")

    expanded_config = cast(ConfigInput, _expand_env_vars(raw_config))
    config = Config.model_validate(expanded_config)

    logger.debug(
        "Config: threshold=%d, prime_budget=%d, c1=%g, tolerance=%g, workers=%d, cache_dir=%s",
        config.point_count_threshold,
        config.prime_budget,
        config.c1,
        config.tolerance,
        config.workers,
        config.cache_dir,
    )
    return config


def get_bootstrap_log_level(config_path: str = DEFAULT_CONFIG_PATH) -> str:
    """
    Read log_level from config file before full validation.

    Falls back to INFO for any missing/invalid/unreadable value.
    """
    try:
        config_file = Path(config_path)
        if not config_file.exists():
            return "INFO"

        with config_file.open("r") as f:
            raw_config = yaml.safe_load(f)

        if not isinstance(raw_config, dict):
            return "INFO"

        expanded = _expand_env_vars({"log_level": raw_config.get("log_level", "INFO")})
        level = expanded.get("log_level", "INFO")

        if not isinstance(level, str):
            return "INFO"

        return _validate_log_level_str(level.strip())
    except Exception:
        return "INFO"
