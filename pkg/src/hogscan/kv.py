"""
Flat ``key = value`` text codec shared by model files and run configuration files.
"""

from __future__ import annotations

from typing import Dict, Iterable, Optional, Tuple

from hogscan.errors import ConfigError

_TRUE = {"1", "true", "yes", "on"}
_FALSE = {"0", "false", "no", "off"}
_DISABLED = {"off", "none", "disabled"}


def parse_key_values(text: str, source: str = "<text>") -> Dict[str, str]:
    """
    Parse a flat key-value block.

    Blank lines and lines starting with ``#`` are skipped. Keys keep their
    first-seen order.

    Raises:
        ConfigError: On a line without ``=``, an empty key, or a repeated key.
    """
    values: Dict[str, str] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        key = key.strip()
        if not sep or not key:
            raise ConfigError(f"{source}:{number}: expected 'key = value', got {raw!r}")
        if key in values:
            raise ConfigError(f"{source}:{number}: duplicate key {key!r}")
        values[key] = value.strip()
    return values


def format_key_values(pairs: Iterable[Tuple[str, str]]) -> str:
    """Render pairs as ``key = value`` lines, newline-terminated."""
    return "".join(f"{key} = {value}\n" for key, value in pairs)


def format_float(value: float) -> str:
    """Shortest text that parses back to the same float."""
    return repr(float(value))


def format_exact(value: float) -> str:
    """17 significant digits: always round-trips a 64-bit float."""
    return f"{float(value):.17g}"


def parse_int(key: str, text: str) -> int:
    try:
        return int(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected an integer, got {text!r}") from exc


def parse_float(key: str, text: str) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ConfigError(f"{key}: expected a number, got {text!r}") from exc


def parse_optional_float(key: str, text: str) -> Optional[float]:
    """Like parse_float, but ``off``/``none``/``disabled`` yield None."""
    if text.strip().lower() in _DISABLED:
        return None
    return parse_float(key, text)


def parse_bool(key: str, text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in _TRUE:
        return True
    if lowered in _FALSE:
        return False
    raise ConfigError(f"{key}: expected true/false, got {text!r}")
