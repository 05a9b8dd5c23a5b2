"""Configuration loader for JSON and TOML config files."""

import json
import sys
from pathlib import Path
from typing import Any, Dict

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError


def _normalize(section: Any) -> Any:
    # kebab-case to snake_case, recursively
    if isinstance(section, dict):
        return {str(k).replace("-", "_"): _normalize(v) for k, v in section.items()}
    return section


def load_config(path: Path) -> Dict[str, Any]:
    """Load a configuration document from a `.json` or `.toml` file.

    Returns a dictionary with keys normalized (dashes replaced by underscores).
    TOML files may hold the settings at top level or under `[tool.kglp]`.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigurationError(f"config file {path} does not exist", "Check the --config path.")

    try:
        if path.suffix.lower() == ".toml":
            with open(path, "rb") as f:
                data = tomllib.load(f)
            # Accept either a bare document or a [tool.kglp] table
            data = data.get("tool", {}).get("kglp", data)
        else:
            with open(path, "r", encoding="utf-8") as f:
                data = json.load(f)
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as e:
        raise ConfigurationError(f"cannot parse {path}: {e}") from e

    if not isinstance(data, dict):
        raise ConfigurationError(f"{path} must contain an object at top level")

    return _normalize(data)
