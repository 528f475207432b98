"""Flat ``key = value`` configuration files.

The format is the flat subset of TOML: strings, numbers, booleans and 1-D
arrays, one assignment per line, ``#`` comments. Tables are rejected.
Command-line overrides ``key=value`` are applied after the file; their value
is read as a TOML value and falls back to a bare string.
"""

import math
import re

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from .edm import EdmConfig
from .errors import ParseError, ValidationError
from .scan import ScanConfig

_LINE_RE = re.compile(r"line (\d+)")

SCAN_TYPES = {
    "mode": str,
    "omega_bar0": float,
    "drive_strength": float,
    "t_or_T": float,
    "tau": float,
    "pulse_area": float,
    "omega_min": float,
    "omega_max": float,
    "steps": int,
    "epsilon": float,
    "epsilon_regions": str,
}
SCAN_REQUIRED = ("mode", "omega_bar0", "drive_strength", "t_or_T", "omega_min", "omega_max", "steps")

EDM_TYPES = {
    "omega_bar0": float,
    "d_n": float,
    "e_field": float,
    "T": float,
    "tau": float,
    "n_bar": float,
    "n_cycles": int,
    "seed": int,
    "p_i": float,
    "eps_f": float,
    "delta_omega_list": [float],
    "field_pattern": [int],
    "cycles_per_run": int,
    "omega_ref": float,
    "omega2_tau": float,
}
EDM_REQUIRED = ("omega_bar0", "d_n", "e_field", "T", "tau", "n_bar", "n_cycles", "seed")

KINDS = {
    "scan": (ScanConfig, SCAN_TYPES, SCAN_REQUIRED),
    "edm": (EdmConfig, EDM_TYPES, EDM_REQUIRED),
}


def _key_line(text, key):
    # line of the assignment or table header that introduced key, 0 if not found
    pattern = re.compile(rf"^\s*(?:{re.escape(key)}\s*=|\[\s*{re.escape(key)}\s*\])", re.MULTILINE)
    m = pattern.search(text)
    return text.count("\n", 0, m.start()) + 1 if m else 0


def parse_text(text):
    """Parse flat ``key = value`` text into a dict; raises :class:`ParseError`."""
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        m = _LINE_RE.search(str(exc))
        raise ParseError(int(m.group(1)) if m else 0, str(exc)) from None
    for key, value in data.items():
        if isinstance(value, dict):
            raise ParseError(_key_line(text, key), f"nested table {key!r} not allowed")
        if isinstance(value, list) and any(isinstance(v, (list, dict)) for v in value):
            raise ParseError(_key_line(text, key), f"{key!r} must be a flat array")
    return data


def parse_override(item):
    if "=" not in item:
        raise ParseError(0, f"override {item!r} is not key=value")
    key, raw = item.split("=", 1)
    key, raw = key.strip(), raw.strip()
    if not key:
        raise ParseError(0, f"override {item!r} has an empty key")
    try:
        value = tomllib.loads(f"v = {raw}")["v"]
    except tomllib.TOMLDecodeError:
        value = raw
    return key, value


def _coerce(key, value, kind, problems):
    if isinstance(kind, list):
        if not isinstance(value, list):
            problems.append((key, "must be an array"))
            return None
        return [_coerce(key, v, kind[0], problems) for v in value]
    if kind is str:
        if not isinstance(value, str):
            problems.append((key, "must be a string"))
        return value
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        problems.append((key, "must be a number"))
        return None
    if kind is int:
        if isinstance(value, float):
            if not value.is_integer():
                problems.append((key, "must be an integer"))
                return None
            value = int(value)
        return value
    value = float(value)
    if not math.isfinite(value):
        problems.append((key, "must be finite"))
    return value


def build_config(values, kind):
    """Typed and validated config object from a dict of raw values."""
    cls, types, required = KINDS[kind]
    problems = []
    for key in values:
        if key not in types:
            problems.append((key, "unknown key"))
    for key in required:
        if key not in values:
            problems.append((key, "required"))
    typed = {}
    for key, value in values.items():
        if key in types:
            typed[key] = _coerce(key, value, types[key], problems)
    if problems:
        raise ValidationError(problems)
    try:
        config = cls(**typed)
    except (TypeError, ValueError) as exc:
        raise ValidationError([("config", str(exc))]) from None
    config.validate()
    return config


def parse_config(file_text, overrides=(), kind="scan"):
    """Parse ``file_text``, apply ``key=value`` overrides and validate.

    Raises :class:`ParseError` for malformed text and
    :class:`ValidationError` naming every offending key.
    """
    if kind not in KINDS:
        raise ValueError(f"unknown config kind {kind!r}")
    values = parse_text(file_text)
    for item in overrides:
        key, value = parse_override(item)
        values[key] = value
    return build_config(values, kind)
