"""Tool configuration: one flat JSON file, every field overridable via
PATHFORGE_<FIELD> environment variables."""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Union

from .errors import ConfigError
from .extraction import ProviderConfig, ProviderKind
from .validation import (
    CONDITIONAL_MARKERS,
    DEFAULT_COVERAGE_THRESHOLD,
    DEFAULT_GROUNDING_THRESHOLD,
)

ENV_PREFIX = "PATHFORGE_"

_PROVIDER_FIELDS = {
    "provider_kind": str,
    "model_name": str,
    "temperature": float,
    "max_parallel": int,
    "retry_limit": int,
    "timeout_seconds": float,
    "credentials_env_var": str,
    "endpoint_url": str,
    "store_dir": str,
    "record": bool,
}
_TOOL_FIELDS = {
    "grounding_threshold": float,
    "coverage_threshold": float,
    "conditional_markers": dict,
    "data_dir": str,
    "listen_address": str,
    "blind_seed": int,
}


@dataclass
class ToolConfig:
    provider: ProviderConfig = field(default_factory=ProviderConfig)
    grounding_threshold: float = DEFAULT_GROUNDING_THRESHOLD
    coverage_threshold: float = DEFAULT_COVERAGE_THRESHOLD
    conditional_markers: dict[str, list[str]] = field(
        default_factory=lambda: {k: list(v) for k, v in CONDITIONAL_MARKERS.items()})
    data_dir: Path = Path("data")
    listen_address: str = "127.0.0.1:8571"
    blind_seed: int = 0

    def __post_init__(self):
        for name in ("grounding_threshold", "coverage_threshold"):
            value = getattr(self, name)
            if not (0.0 <= value <= 1.0):
                raise ConfigError(f"{name} must be within [0, 1], got {value}")
        self.data_dir = Path(self.data_dir)

    @property
    def all_markers(self) -> list[str]:
        out: list[str] = []
        for markers in self.conditional_markers.values():
            out.extend(markers)
        return out

    def host_port(self) -> tuple[str, int]:
        host, _, port = self.listen_address.rpartition(":")
        if not host or not port.isdigit():
            raise ConfigError(f"listen_address must be host:port, got {self.listen_address!r}")
        return host, int(port)


def _coerce(raw: str, target_type, name: str):
    try:
        if target_type is bool:
            lowered = raw.strip().lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if target_type is dict:
            value = json.loads(raw)
            if not isinstance(value, dict):
                raise ValueError(raw)
            return value
        return target_type(raw)
    except (ValueError, json.JSONDecodeError):
        raise ConfigError(f"cannot parse {ENV_PREFIX}{name.upper()}={raw!r}") from None


def load_config(path: Optional[Union[str, Path]] = None,
                env: Optional[dict] = None) -> ToolConfig:
    """Build a ToolConfig from defaults <- JSON file <- environment."""
    env = os.environ if env is None else env
    values: dict = {}
    if path is not None:
        file_path = Path(path)
        try:
            loaded = json.loads(file_path.read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file {file_path} does not exist") from None
        except (json.JSONDecodeError, UnicodeDecodeError) as exc:
            raise ConfigError(f"config file {file_path}: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigError(f"config file {file_path} must hold a JSON object")
        known = set(_PROVIDER_FIELDS) | set(_TOOL_FIELDS)
        unknown = set(loaded) - known
        if unknown:
            raise ConfigError(f"unknown config field(s): {', '.join(sorted(unknown))}")
        values.update(loaded)

    for name, target_type in {**_PROVIDER_FIELDS, **_TOOL_FIELDS}.items():
        raw = env.get(f"{ENV_PREFIX}{name.upper()}")
        if raw is not None:
            values[name] = _coerce(raw, target_type, name)

    provider_kwargs = {k: values[k] for k in _PROVIDER_FIELDS if k in values}
    if "provider_kind" in provider_kwargs:
        try:
            provider_kwargs["provider_kind"] = ProviderKind(provider_kwargs["provider_kind"])
        except ValueError:
            raise ConfigError(
                f"provider_kind must be one of {[k.value for k in ProviderKind]}") from None
    if "store_dir" in provider_kwargs and provider_kwargs["store_dir"] is not None:
        provider_kwargs["store_dir"] = Path(provider_kwargs["store_dir"])

    tool_kwargs = {k: values[k] for k in _TOOL_FIELDS if k in values}
    if "data_dir" in tool_kwargs:
        tool_kwargs["data_dir"] = Path(tool_kwargs["data_dir"])
    if "conditional_markers" in tool_kwargs:
        markers = tool_kwargs["conditional_markers"]
        if not all(isinstance(v, list) and all(isinstance(m, str) for m in v)
                   for v in markers.values()):
            raise ConfigError("conditional_markers must map language to a list of strings")

    return ToolConfig(provider=ProviderConfig(**provider_kwargs), **tool_kwargs)
