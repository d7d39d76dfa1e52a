"""Run configuration: defaults, a key=value file, environment overrides.

Precedence, lowest to highest: built-in defaults, config file,
``HUBTRENDS_*`` environment variables, explicit flag overrides.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from pathlib import Path

from .errors import FormatError

ENV_PREFIX = "HUBTRENDS_"

_KEYS = {
    "base_url": "base_url",
    "store": "store_dir",
    "registry": "registry_path",
    "alias_table": "alias_table",
    "format": "output_format",
}


@dataclass
class Config:
    base_url: str = "https://huggingface.co"
    store_dir: str | None = None
    registry_path: str | None = None
    alias_table: str | None = None
    output_format: str = "csv"


def _parse_config_file(path: str | Path) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise FormatError(f"{path}:{lineno}: expected key=value, got {raw!r}")
        key, _, value = line.partition("=")
        key = key.strip()
        if key not in _KEYS:
            raise FormatError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value.strip()
    return values


def load_config(
    path: str | Path | None = None,
    env: dict[str, str] | None = None,
    overrides: dict[str, str | None] | None = None,
) -> Config:
    """Merge the config sources; ``None`` overrides are skipped."""
    env = os.environ if env is None else env
    config = Config()
    if path is not None:
        for key, value in _parse_config_file(path).items():
            setattr(config, _KEYS[key], value)
    for key, attr in _KEYS.items():
        env_value = env.get(ENV_PREFIX + key.upper())
        if env_value is not None:
            setattr(config, attr, env_value)
    for attr, value in (overrides or {}).items():
        if value is None:
            continue
        if attr not in {f.name for f in fields(Config)}:
            raise FormatError(f"unknown config attribute {attr!r}")
        setattr(config, attr, value)
    return config
