"""Flat-key pipeline configuration with fail-fast validation.

Precedence, lowest to highest: built-in defaults, config file (--config or
the PVMAP_CONFIG environment variable), explicit command-line flags. Unknown
keys are rejected by name — a typo like "thresold" must fail loudly, not
fall back to a default.
"""

from __future__ import annotations

import json
import os
from pathlib import Path

from .errors import ConfigError

ENV_CONFIG = "PVMAP_CONFIG"

DEFAULTS: dict = {
    "threshold": 0.5,
    "merge_distance": 1.8,
    "min_installation_pixels": 4,
    "iou_min": 0.5,
    "gsd": 0.3,
    "workers": 1,
    "seed": 0,
    "learning_rate": 0.5,
    "epochs": 200,
    "l2": 0.0,
    "class_weighting": True,
    "window_radius": 2,
    "folds": 2,
    "z_threshold": 3.0,
    "crop_padding_m": 20.0,
}

_BOOL_KEYS = {"class_weighting"}
_INT_KEYS = {"min_installation_pixels", "workers", "seed", "epochs", "window_radius", "folds"}
_FLOAT_KEYS = {
    "threshold",
    "merge_distance",
    "iou_min",
    "gsd",
    "learning_rate",
    "l2",
    "z_threshold",
    "crop_padding_m",
}

# (low, high, low_inclusive, high_inclusive); None = unbounded
_RANGES = {
    "threshold": (0.0, 1.0, True, True),
    "merge_distance": (0.0, None, True, True),
    "min_installation_pixels": (0, None, True, True),
    "iou_min": (0.0, 1.0, False, True),
    "gsd": (0.0, None, False, True),
    "workers": (1, None, True, True),
    "learning_rate": (0.0, None, False, True),
    "l2": (0.0, None, True, True),
    "epochs": (0, None, True, True),
    "window_radius": (0, None, True, True),
    "folds": (2, None, True, True),
    "z_threshold": (0.0, None, False, True),
    "crop_padding_m": (0.0, None, True, True),
}


def _coerce(key: str, value):
    try:
        if key in _BOOL_KEYS:
            if isinstance(value, bool):
                return value
            raise ConfigError(f"config key {key!r} must be a boolean, got {value!r}")
        if key in _INT_KEYS:
            if isinstance(value, bool) or int(value) != value:
                raise ConfigError(f"config key {key!r} must be an integer, got {value!r}")
            return int(value)
        if key in _FLOAT_KEYS:
            if isinstance(value, bool):
                raise ConfigError(f"config key {key!r} must be a number, got {value!r}")
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"config key {key!r} has non-numeric value {value!r}") from None
    raise ConfigError(f"unknown config key {key!r}")


def _check_range(key: str, value) -> None:
    if key not in _RANGES:
        return
    low, high, low_inc, high_inc = _RANGES[key]
    ok = True
    if low is not None:
        ok = ok and (value >= low if low_inc else value > low)
    if high is not None:
        ok = ok and (value <= high if high_inc else value < high)
    if not ok:
        lo = "[" if low_inc else "("
        hi = "]" if high_inc else ")"
        raise ConfigError(
            f"config key {key!r} = {value!r} outside valid range "
            f"{lo}{low if low is not None else '-inf'}, {high if high is not None else 'inf'}{hi}"
        )


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Resolve the effective configuration.

    path: explicit config file; when None, PVMAP_CONFIG is consulted.
    overrides: flag values (None entries are ignored — flag not given).
    """
    cfg = dict(DEFAULTS)
    if path is None:
        env = os.environ.get(ENV_CONFIG)
        if env:
            path = env
    if path is not None:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        try:
            loaded = json.loads(p.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{p}: malformed JSON: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError(f"{p}: config must be a JSON object")
        for key, value in loaded.items():
            if key not in DEFAULTS:
                raise ConfigError(f"{p}: unknown config key {key!r}")
            cfg[key] = _coerce(key, value)
    for key, value in (overrides or {}).items():
        if value is None:
            continue
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key {key!r}")
        cfg[key] = _coerce(key, value)
    for key, value in cfg.items():
        _check_range(key, value)
    return cfg
