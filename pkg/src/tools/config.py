import os
from pathlib import Path
from typing import Mapping, Optional

from dotenv import dotenv_values, load_dotenv
from mcp.server.fastmcp import FastMCP
from pydantic import BaseModel, ValidationError

from src.models.experiment_models import ExperimentConfig
from src.utils.exceptions import ConfigError
from src.utils.logger import logger

SECTIONS = ("robot", "sensor", "filter", "learning", "evaluation", "run")


def load_environment_config() -> tuple[str, FastMCP]:
    """Load environment configuration and initialize the MCP server.

    Variables are read from a .env file when present.

    Returns:
        tuple[str, FastMCP]: A tuple containing:
            - OUTPUT_DIR (str): Default directory for run artifacts (SNAKE_LAB_OUTPUT_DIR, default "runs")
            - mcp (FastMCP): Configured FastMCP server instance

    Example:
        output_dir, server = load_environment_config()
    """
    load_dotenv()

    output_dir = os.getenv("SNAKE_LAB_OUTPUT_DIR", "runs")
    mcp_server = FastMCP("Snake_Lab")

    return output_dir, mcp_server


def _field_lookup(section: str) -> dict[str, str]:
    model = ExperimentConfig.model_fields[section].annotation
    return {name.upper(): name for name in model.model_fields}


def parse_experiment_config(values: Mapping[str, Optional[str]]) -> ExperimentConfig:
    """Build an ExperimentConfig from flat ``SECTION__FIELD`` keys.

    Raises:
        ConfigError: On unknown sections or fields, missing values or invalid settings
    """
    nested: dict[str, dict[str, str]] = {}
    for key, value in values.items():
        section, sep, field = key.partition("__")
        section = section.lower()
        if not sep or section not in SECTIONS:
            raise ConfigError(f"unknown config key '{key}', expected SECTION__FIELD with SECTION in {SECTIONS}")
        lookup = _field_lookup(section)
        if field.upper() not in lookup:
            raise ConfigError(f"unknown field '{field}' in section '{section}'")
        if value is None or value == "":
            raise ConfigError(f"config key '{key}' has no value")
        nested.setdefault(section, {})[lookup[field.upper()]] = value

    try:
        return ExperimentConfig.model_validate(nested)
    except ValidationError as e:
        raise ConfigError(f"invalid experiment configuration: {e}") from e


def load_experiment_config(path: Optional[Path] = None) -> ExperimentConfig:
    """Read a config file, or return the defaults when no path is given.

    Raises:
        ConfigError: If the file is missing or invalid
    """
    if path is None:
        return ExperimentConfig()
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    try:
        cfg = parse_experiment_config(dotenv_values(path))
        logger.info(f"Loaded experiment config from {path}")
        return cfg
    except ConfigError as e:
        logger.error(f"Failed to load config {path}: {e}", exc_info=True)
        raise


def _format(value) -> str:
    if isinstance(value, tuple):
        return ",".join(repr(item) if isinstance(item, float) else str(item) for item in value)
    if isinstance(value, bool):
        return str(value).lower()
    if isinstance(value, float):
        return repr(value)
    if hasattr(value, "value"):
        return str(value.value)
    if isinstance(value, str):
        return f'"{value}"'
    return str(value)


def dump_experiment_config(cfg: ExperimentConfig, path: Optional[Path] = None) -> str:
    """Serialize every setting as ``SECTION__FIELD=value`` lines, grouped under ``# [section]`` headers."""
    lines = []
    for section in SECTIONS:
        model: BaseModel = getattr(cfg, section)
        lines.append(f"# [{section}]")
        for name in type(model).model_fields:
            lines.append(f"{section.upper()}__{name.upper()}={_format(getattr(model, name))}")
        lines.append("")
    text = "\n".join(lines)
    if path is not None:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(text)
        logger.info(f"Wrote experiment config to {path}")
    return text


def apply_overrides(
    cfg: ExperimentConfig,
    seed: Optional[int] = None,
    episodes: Optional[int] = None,
    periods: Optional[int] = None,
    output_dir: Optional[str] = None,
) -> ExperimentConfig:
    """Copy of ``cfg`` with command-line overrides applied and revalidated."""
    data = cfg.model_dump()
    if seed is not None:
        data["run"]["seed"] = seed
    if output_dir is not None:
        data["run"]["output_dir"] = str(output_dir)
    if episodes is not None:
        data["learning"]["n_e"] = episodes
    if periods is not None:
        data["evaluation"]["periods"] = periods
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid override: {e}") from e


# Load configuration
OUTPUT_DIR, mcp = load_environment_config()
