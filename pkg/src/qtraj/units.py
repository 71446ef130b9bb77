"""Parsing of dimensionful config values written with explicit unit suffixes.

Durations: ``"400ns"``, ``"1.28us"``, ``"20 µs"``, ``"inf"``.
Rates (s^-1): ``"1.3e6/s"``, ``"1.3/us"``, ``"2.7e-7 s^-1"``.
Angular frequencies (rad/s): ``"0.4MHz"`` means a cyclic frequency, so the
value is multiplied by 2*pi; ``"2.5e6rad/s"`` is taken as is.
"""

from __future__ import annotations

import math
import re

from .core import ConfigError

_NUMBER = r"[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?"
_QUANTITY = re.compile(rf"^\s*({_NUMBER})\s*([^\s\d].*?)?\s*$")

_TIME = {"s": 1.0, "ms": 1e-3, "us": 1e-6, "µs": 1e-6, "μs": 1e-6, "ns": 1e-9, "ps": 1e-12}
_PER_TIME = {f"/{u}": 1.0 / f for u, f in _TIME.items()}
_PER_TIME.update({f"1/{u}": 1.0 / f for u, f in _TIME.items()})
_PER_TIME.update({f"{u}^-1": 1.0 / f for u, f in _TIME.items()})
_PER_TIME.update({f"{u}-1": 1.0 / f for u, f in _TIME.items()})
_CYCLIC = {"hz": 1.0, "khz": 1e3, "mhz": 1e6, "ghz": 1e9}
_ANGULAR = {f"rad{k}": v for k, v in _PER_TIME.items()}


def _split(value, field: str) -> tuple[float, str]:
    if isinstance(value, bool) or isinstance(value, (int, float)):
        raise ConfigError(f"{field}: bare number {value!r} is ambiguous; add a unit suffix")
    if not isinstance(value, str):
        raise ConfigError(f"{field}: expected a string with units, got {value!r}")
    text = value.strip()
    if text.lower() in ("inf", "infinity"):
        return math.inf, ""
    match = _QUANTITY.match(text)
    if not match or not match.group(2):
        raise ConfigError(f"{field}: cannot parse {value!r}; expected e.g. '400ns', '1.3e6/s', '0.4MHz'")
    return float(match.group(1)), match.group(2).replace(" ", "")


def parse_time(value, field: str = "duration") -> float:
    number, unit = _split(value, field)
    if math.isinf(number):
        return number
    if unit not in _TIME:
        raise ConfigError(f"{field}: unknown time unit {unit!r}")
    return number * _TIME[unit]


def parse_rate(value, field: str = "rate") -> float:
    """Rate in s^-1; Hz is accepted as s^-1 without a 2*pi factor."""
    number, unit = _split(value, field)
    if unit in _PER_TIME:
        return number * _PER_TIME[unit]
    if unit.lower() in _CYCLIC:
        return number * _CYCLIC[unit.lower()]
    raise ConfigError(f"{field}: unknown rate unit {unit!r}")


def parse_angular(value, field: str = "angular frequency") -> float:
    """Angular frequency in rad/s; Hz-family units are cyclic and get a 2*pi factor."""
    number, unit = _split(value, field)
    if unit.lower() in _CYCLIC:
        return 2 * math.pi * number * _CYCLIC[unit.lower()]
    if unit in _ANGULAR:
        return number * _ANGULAR[unit]
    raise ConfigError(f"{field}: unknown angular-frequency unit {unit!r}")


def format_time(seconds: float) -> str:
    if math.isinf(seconds):
        return "inf"
    return f"{seconds!r}s"
