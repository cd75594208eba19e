"""
Configuration management for SpadVision.

Process-wide settings (worker pool size, chunk size, numeric debug checks)
plus the ``key = value`` configuration-file layer used by the command line.
"""

import logging
import os
from pathlib import Path
from typing import Any, Dict, Iterable, Mapping, Optional, Union

from .errors import ConfigError, DatasetError
from .io.manifest import parse_manifest

logger = logging.getLogger(__name__)

_ERROR_STRATEGIES = ("raise", "skip")


def _env_int(name: str, default: int) -> int:
    raw = os.environ.get(name)
    if raw is None:
        return default
    try:
        value = int(raw)
    except ValueError:
        raise ConfigError(f"{name} must be an integer, got {raw!r}") from None
    if value < 0:
        raise ConfigError(f"{name} must be >= 0, got {value}")
    return value


_settings = {
    "worker_count": _env_int("SPADVISION_WORKERS", os.cpu_count() or 1) or (os.cpu_count() or 1),
    "chunk_size": _env_int("SPADVISION_CHUNK_SIZE", 0),
    "error_strategy": "raise",
    "debug_checks": os.environ.get("SPADVISION_DEBUG_CHECKS", "0") not in ("", "0", "false"),
}


def set_worker_count(count: int) -> None:
    """
    Set the number of workers used by frame-parallel operations.

    Args:
        count: Number of workers (must be > 0)

    Example:
        >>> from spadvision import set_worker_count
        >>> set_worker_count(1)  # deterministic single-threaded runs
    """
    if int(count) <= 0:
        raise ConfigError(f"worker count must be > 0, got {count}")
    _settings["worker_count"] = int(count)


def get_worker_count() -> int:
    """Return the current number of workers."""
    return _settings["worker_count"]


def set_chunk_size(size: int) -> None:
    """
    Set the default chunk size for parallel operations.

    Args:
        size: Chunk size, 0 lets parallel_map pick one from the input length
    """
    if int(size) < 0:
        raise ConfigError(f"chunk size must be >= 0, got {size}")
    _settings["chunk_size"] = int(size)


def get_chunk_size() -> int:
    """Return the default chunk size (0 = automatic)."""
    return _settings["chunk_size"]


def set_debug_checks(enabled: bool) -> None:
    """Turn the NaN/Inf assertions of the tensor engine on or off."""
    _settings["debug_checks"] = bool(enabled)


def debug_checks_enabled() -> bool:
    return _settings["debug_checks"]


def get_error_strategy() -> str:
    return _settings["error_strategy"]


class Config:
    """
    Configuration object for managing global SpadVision settings.

    Example:
        >>> from spadvision import Config
        >>> config = Config(worker_count=4, chunk_size=8, error_strategy='raise')
        >>> config.apply()  # Apply settings globally
    """

    def __init__(self, worker_count=None, chunk_size=None, error_strategy=None, debug_checks=None):
        """
        Initialize configuration. Unset fields keep the current global value.

        Args:
            worker_count: Number of workers
            chunk_size: Default chunk size (0 = automatic)
            error_strategy: Per-frame failure handling during simulation ('raise' or 'skip')
            debug_checks: Enable finite-value assertions in the tensor engine
        """
        self.worker_count = get_worker_count() if worker_count is None else worker_count
        self.chunk_size = get_chunk_size() if chunk_size is None else chunk_size
        self.error_strategy = get_error_strategy() if error_strategy is None else error_strategy
        self.debug_checks = debug_checks_enabled() if debug_checks is None else debug_checks

    @property
    def error_strategy(self):
        return self._error_strategy

    @error_strategy.setter
    def error_strategy(self, value):
        if value not in _ERROR_STRATEGIES:
            raise ConfigError(f"error_strategy must be one of {_ERROR_STRATEGIES}, got {value!r}")
        self._error_strategy = value

    def apply(self):
        """Apply the configuration globally."""
        set_worker_count(self.worker_count)
        set_chunk_size(self.chunk_size)
        set_debug_checks(self.debug_checks)
        _settings["error_strategy"] = self.error_strategy
        logger.debug("Applied %r", self)

    def __repr__(self):
        return (
            f"Config(worker_count={self.worker_count}, chunk_size={self.chunk_size}, "
            f"error_strategy={self.error_strategy!r}, debug_checks={self.debug_checks})"
        )


def coerce_value(raw: str) -> Any:
    """
    Convert a config-file string to int, float, bool, list or str.

    Comma-separated values become lists of coerced items.
    """
    text = raw.strip()
    if "," in text:
        return [coerce_value(part) for part in text.split(",") if part.strip()]
    lowered = text.lower()
    if lowered in ("true", "yes", "on"):
        return True
    if lowered in ("false", "no", "off"):
        return False
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def parse_config_text(text: str) -> Dict[str, Any]:
    """
    Parse configuration text into a flat dict.

    ``[section]`` headers flatten into dotted keys, so ``bins = 16`` under
    ``[timing]`` becomes ``timing.bins``.
    """
    try:
        manifest = parse_manifest(text)
    except DatasetError as exc:
        raise ConfigError(f"invalid config: {exc}") from None
    values = {key: coerce_value(value) for key, value in manifest.header.items()}
    for section in manifest.sections:
        for key, value in section.entries.items():
            dotted = f"{section.name}.{key}"
            if dotted in values:
                raise ConfigError(f"duplicate config key {dotted!r}")
            values[dotted] = coerce_value(value)
    return values


def load_config(path: Union[str, Path]) -> Dict[str, Any]:
    """Read and parse a configuration file."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from None
    return parse_config_text(text)


def _format_value(value: Any) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, (list, tuple)):
        return ",".join(_format_value(item) for item in value)
    if isinstance(value, Path):
        return str(value)
    return str(value)


def dump_config(values: Mapping[str, Any]) -> str:
    """Render a flat config dict as sorted ``key = value`` text; unset (None) keys are left out."""
    return "".join(f"{key} = {_format_value(values[key])}\n" for key in sorted(values) if values[key] is not None)


class RunConfig:
    """
    Resolved parameters of one command invocation.

    Values come from an optional config file and are overridden by
    explicitly given command-line flags (flags win). The resolved set is
    echoed into every run directory as ``config.resolved``.
    """

    def __init__(self, command: str, values: Optional[Mapping[str, Any]] = None):
        self.command = command
        self._values: Dict[str, Any] = dict(values or {})

    @classmethod
    def resolve(cls, command: str, defaults: Mapping[str, Any],
                file_values: Optional[Mapping[str, Any]] = None,
                flag_values: Optional[Mapping[str, Any]] = None) -> "RunConfig":
        values = dict(defaults)
        for key, value in (file_values or {}).items():
            if key not in defaults:
                logger.warning("Ignoring unknown config key %r for %s", key, command)
                continue
            values[key] = value
        for key, value in (flag_values or {}).items():
            if value is not None:
                values[key] = value
        return cls(command, values)

    def __getitem__(self, key: str) -> Any:
        try:
            return self._values[key]
        except KeyError:
            raise ConfigError(f"{self.command}: missing parameter {key!r}") from None

    def get(self, key: str, default: Any = None) -> Any:
        return self._values.get(key, default)

    def require(self, keys: Iterable[str]) -> None:
        missing = [key for key in keys if self._values.get(key) in (None, "")]
        if missing:
            raise ConfigError(f"{self.command}: missing required parameter(s) {', '.join(missing)}")

    def as_dict(self) -> Dict[str, Any]:
        return dict(self._values, command=self.command)

    def write(self, run_dir: Union[str, Path]) -> Path:
        """Write ``config.resolved`` into the run directory."""
        path = Path(run_dir) / "config.resolved"
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(dump_config(self.as_dict()), encoding="utf-8")
        return path

    def __repr__(self):
        return f"RunConfig({self.command!r}, {self._values!r})"


__all__ = [
    "set_worker_count",
    "get_worker_count",
    "set_chunk_size",
    "get_chunk_size",
    "set_debug_checks",
    "debug_checks_enabled",
    "Config",
    "RunConfig",
    "coerce_value",
    "parse_config_text",
    "load_config",
    "dump_config",
]
