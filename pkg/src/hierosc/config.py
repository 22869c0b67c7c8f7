"""Experiment configuration: a single YAML document with a schema version.

Validation errors name the offending key path; YAML syntax errors keep the
parser's line/column mark.  A config round-trips unchanged through
dump/load (criterion for reproducible experiment records).
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field
from typing import Optional

import yaml

__all__ = ["ExperimentConfig", "ConfigError", "load_config", "dump_config", "default_config"]

SCHEMA_VERSION = 1


class ConfigError(ValueError):
    pass


@dataclass
class ExperimentConfig:
    schema_version: int = SCHEMA_VERSION
    hierarchy: dict = dc_field(default_factory=lambda: {"kappa": 2, "delta": 0.25})
    model: dict = dc_field(
        default_factory=lambda: {"mass": 1.0, "a": 1.0, "b": 0.0, "gaussian_mode": True}
    )
    beta: float = 1.0
    beta_grid: Optional[list] = None
    spectral: dict = dc_field(default_factory=lambda: {"kappa_max": 8, "basis_size": None})
    mc: dict = dc_field(
        default_factory=lambda: {
            "level": 0,
            "n_slices": 64,
            "sweeps": 20000,
            "seeds": [1],
            "thin": 2,
            "kappa_max": 4,
        }
    )
    rg: dict = dc_field(
        default_factory=lambda: {"pop": 20000, "cutoff": 16, "n_max": 6, "seeds": [1, 2, 3, 4], "tilt": None}
    )
    bounds: dict = dc_field(
        default_factory=lambda: {
            "epsilon": 0.05,
            "tol": 1e-5,
            "n_levels": 12,
            "deep_horizon": 96,
            "beta_lo": 0.02,
            "beta_hi": 10.0,
        }
    )
    output: str = "out"

    def as_dict(self) -> dict:
        return {
            "schema_version": self.schema_version,
            "hierarchy": dict(self.hierarchy),
            "model": dict(self.model),
            "beta": self.beta,
            "beta_grid": list(self.beta_grid) if self.beta_grid is not None else None,
            "spectral": dict(self.spectral),
            "mc": dict(self.mc),
            "rg": dict(self.rg),
            "bounds": dict(self.bounds),
            "output": self.output,
        }

    def betas(self) -> list:
        return list(self.beta_grid) if self.beta_grid else [self.beta]


_VALIDATORS = {
    "hierarchy.kappa": lambda v: isinstance(v, int) and v >= 2,
    "hierarchy.delta": lambda v: isinstance(v, (int, float)) and 0.0 < v < 0.5,
    "model.mass": lambda v: isinstance(v, (int, float)) and v > 0,
    "model.b": lambda v: isinstance(v, (int, float)) and v >= 0,
    "beta": lambda v: isinstance(v, (int, float)) and v > 0,
    "mc.n_slices": lambda v: isinstance(v, int) and v >= 2 and v % 2 == 0,
    "mc.sweeps": lambda v: isinstance(v, int) and v >= 10_000,
    "rg.pop": lambda v: isinstance(v, int) and v >= 1000,
    "bounds.epsilon": lambda v: isinstance(v, (int, float)) and v > 0,
    "bounds.tol": lambda v: isinstance(v, (int, float)) and 0 < v < 0.1,
}


def _validate(cfg: ExperimentConfig) -> ExperimentConfig:
    if cfg.schema_version != SCHEMA_VERSION:
        raise ConfigError(f"schema_version: expected {SCHEMA_VERSION}, got {cfg.schema_version!r}")
    data = cfg.as_dict()
    for path, ok in _VALIDATORS.items():
        node = data
        for part in path.split("."):
            if not isinstance(node, dict) or part not in node:
                raise ConfigError(f"{path}: missing required key")
            node = node[part]
        if not ok(node):
            raise ConfigError(f"{path}: invalid value {node!r}")
    eps_max = (1.0 - 2.0 * data["hierarchy"]["delta"]) / 4.0
    if not data["bounds"]["epsilon"] < eps_max:
        raise ConfigError(f"bounds.epsilon: must be below (1-2*delta)/4 = {eps_max}")
    if data["beta_grid"] is not None:
        if not all(isinstance(b, (int, float)) and b > 0 for b in data["beta_grid"]):
            raise ConfigError("beta_grid: entries must be positive numbers")
    return cfg


def load_config(path: str) -> ExperimentConfig:
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        where = f" at line {mark.line + 1}, column {mark.column + 1}" if mark else ""
        raise ConfigError(f"{path}: YAML parse error{where}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    known = set(ExperimentConfig.__dataclass_fields__)
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    base = ExperimentConfig()
    for key, value in raw.items():
        current = getattr(base, key)
        if isinstance(current, dict) and isinstance(value, dict):
            merged = dict(current)
            merged.update(value)
            setattr(base, key, merged)
        else:
            setattr(base, key, value)
    return _validate(base)


def dump_config(cfg: ExperimentConfig, path: str) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.as_dict(), fh, sort_keys=True)


def default_config() -> ExperimentConfig:
    return _validate(ExperimentConfig())
