"""Structured configuration: JSON file, flag overrides, environment.

Precedence, highest first: environment variable, command-line flag, config
file, built-in default.
"""

from __future__ import annotations

import json
import os

from .errors import ConfigError
from .match import PipelineConfig
from .viewgen import ENDPOINT_ENV_VAR

_SCALAR_KEYS = {
    "s_v": int,
    "n_views": int,
    "steps_orient": int,
    "steps_generate": int,
    "refine_iters": int,
    "scorer": str,
    "backend": str,
    "seed": int,
    "workers": int,
    "refine_radius_deg": float,
}


def load_config_file(path) -> dict:
    """Load and validate a JSON config file; unknown keys are rejected."""
    try:
        with open(path, encoding="utf-8") as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError("config root must be a JSON object")
    unknown = set(doc) - set(_SCALAR_KEYS) - {"generator"}
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    for key, caster in _SCALAR_KEYS.items():
        if key in doc:
            try:
                doc[key] = caster(doc[key])
            except (TypeError, ValueError):
                raise ConfigError(f"config key {key} must be {caster.__name__}") from None
    gen = doc.get("generator", {})
    if not isinstance(gen, dict) or set(gen) - {"endpoint"}:
        raise ConfigError("generator section accepts only the endpoint key")
    return doc


def build_pipeline_config(
    config_path=None, flag_overrides: dict | None = None
) -> PipelineConfig:
    """Merge defaults, config file, flags, and environment into a validated
    PipelineConfig."""
    merged: dict = {}
    if config_path:
        doc = load_config_file(config_path)
        endpoint = doc.pop("generator", {}).get("endpoint")
        merged.update(doc)
        if endpoint:
            merged["endpoint"] = endpoint
    for key, value in (flag_overrides or {}).items():
        if value is not None:
            merged[key] = value
    env_endpoint = os.environ.get(ENDPOINT_ENV_VAR)
    if env_endpoint:
        merged["endpoint"] = env_endpoint
    try:
        return PipelineConfig(**merged)
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc
