"""
Configuration loading for waveshape-nilm.

Documents are YAML (JSON is accepted as a YAML subset) validated into pydantic
models. Process settings come from the environment, optionally seeded from a
.env file in the project root.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Optional, Type, TypeVar

import yaml
from dotenv import load_dotenv
from pydantic import BaseModel, Field, ValidationError

from .errors import ConfigError
from .utils import get_env_file

logger = logging.getLogger(__name__)

ModelT = TypeVar("ModelT", bound=BaseModel)


class Settings(BaseModel):
    """Process-wide settings resolved from the environment."""

    log_level: str = "WARNING"
    workers: int = Field(default=1, ge=1)

    @classmethod
    def from_env(cls, env_file: Optional[Path] = None) -> "Settings":
        """Load settings, reading a .env file first when one exists."""
        env_path = Path(env_file) if env_file else get_env_file()
        if env_path.exists():
            load_dotenv(dotenv_path=env_path, override=False)

        values: Dict[str, Any] = {}
        if os.getenv("WSNILM_LOG_LEVEL"):
            values["log_level"] = os.environ["WSNILM_LOG_LEVEL"].upper()
        if os.getenv("WSNILM_WORKERS"):
            values["workers"] = os.environ["WSNILM_WORKERS"]
        try:
            return cls.model_validate(values)
        except ValidationError as e:
            raise ConfigError(f"Invalid environment settings: {e}") from e


def read_document(path: Path) -> Dict[str, Any]:
    """Read a key-value document (YAML or JSON) into a dict."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"Config file not found: {path}")

    try:
        with open(path, "r", encoding="utf-8") as f:
            data = yaml.safe_load(f)
    except yaml.YAMLError as e:
        raise ConfigError(f"Could not parse {path}: {e}") from e

    if data is None:
        return {}
    if not isinstance(data, dict):
        raise ConfigError(f"Config document {path} must be a mapping, got {type(data).__name__}")
    return data


def validate_config(data: Dict[str, Any], model: Type[ModelT]) -> ModelT:
    """Validate a plain mapping into a config model, raising ConfigError."""
    try:
        return model.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid {model.__name__}:\n{e}") from e


def load_config(path: Path, model: Type[ModelT], overrides: Optional[Dict[str, Any]] = None) -> ModelT:
    """
    Load and validate a config document.

    Args:
        path: YAML/JSON document
        model: pydantic model class to validate into
        overrides: top-level keys replacing document values (e.g. CLI --seed)

    Returns:
        Validated model instance
    """
    data = read_document(path)
    if overrides:
        data.update({k: v for k, v in overrides.items() if v is not None})
    config = validate_config(data, model)
    logger.info(f"Loaded {model.__name__} from {path}")
    return config
