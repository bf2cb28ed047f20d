"""Experiment configuration: a published JSON schema, TOML/JSON loading and hashing."""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from dataclasses import dataclass
from pathlib import Path

import jsonschema

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .grid import GridSpec, TimeGrid

__all__ = ["SCHEMA", "DEFAULTS", "ConfigError", "ExperimentConfig", "load_config"]

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}

SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "wl3lab experiment",
    "type": "object",
    "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "grid": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "L": _pos,
                "N": {"type": "integer", "minimum": 8, "multipleOf": 2},
                "offset": {"type": "array", "items": _num, "minItems": 3, "maxItems": 3},
                "half_shifted": {"type": "boolean"},
            },
        },
        "time": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "t0": {"type": "number", "minimum": 0, "maximum": 1},
                "t1": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "steps": {"type": "integer", "minimum": 2},
            },
        },
        "flow": {
            "type": "object",
            "additionalProperties": False,
            "required": ["name"],
            "properties": {
                "name": {"enum": ["zero", "serrin", "landau", "rotating", "random"]},
                "g": {"type": "string"},
                "h": {"type": "string"},
                "amplitude": _num,
                "epsilon": _pos,
                "a": {"type": "number", "exclusiveMinimum": 1},
            },
        },
        "norms": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"radius": _pos, "m": {"type": "number", "minimum": 1}},
        },
        "picard": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "max_iters": {"type": "integer", "minimum": 1},
                "rel_tolerance": _pos,
                "divergence_cap": {"type": "number", "exclusiveMinimum": 1},
                "metric": {"enum": ["X3", "Y"]},
                "delta": _pos,
            },
        },
        "scan": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "amplitudes": {"type": "array", "items": {"type": "number", "minimum": 0}, "minItems": 2},
                "bisection_steps": {"type": "integer", "minimum": 0},
                "max_iters": {"type": "integer", "minimum": 2},
            },
        },
        "residual": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "n_space": {"type": "integer", "minimum": 4},
                "n_time": {"type": "integer", "minimum": 2},
                "tol": _pos,
                "solenoidal": {"type": "boolean"},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "grid": {"L": 8.0, "N": 48, "offset": [0.0, 0.0, 0.0], "half_shifted": False},
    "time": {"t0": 0.0, "t1": 1.0, "steps": 64},
    "flow": {"name": "serrin", "g": "t", "h": "x1*x2", "amplitude": 1.0},
    "norms": {"radius": 2.0, "m": 3},
    "picard": {"max_iters": 100, "rel_tolerance": 1e-10, "divergence_cap": 1e6, "metric": "X3", "delta": 0.5},
    "scan": {"amplitudes": [0, 1, 3, 10, 30, 100], "bisection_steps": 8, "max_iters": 4},
    "residual": {"n_space": 48, "n_time": 64, "tol": 1e-6, "solenoidal": False},
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` locates the offending entry."""

    def __init__(self, message: str, path: str = "$"):
        super().__init__(f"{path}: {message}")
        self.path = path


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


@dataclass(frozen=True)
class ExperimentConfig:
    data: dict

    @classmethod
    def from_dict(cls, raw: dict) -> "ExperimentConfig":
        try:
            jsonschema.validate(raw, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "$" + "".join(f"[{p!r}]" if isinstance(p, int) else f".{p}" for p in exc.absolute_path)
            raise ConfigError(exc.message, path) from None
        data = _merge(DEFAULTS, raw)
        t = data["time"]
        if not t["t0"] < t["t1"]:
            raise ConfigError("t0 must be below t1", "$.time")
        return cls(data)

    def with_overrides(self, seed=None, grid_n=None, time_steps=None) -> "ExperimentConfig":
        d = copy.deepcopy(self.data)
        if seed is not None:
            d["seed"] = seed
        if grid_n is not None:
            d["grid"]["N"] = grid_n
        if time_steps is not None:
            d["time"]["steps"] = time_steps
        return ExperimentConfig.from_dict(d)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def grid(self) -> GridSpec:
        g = self.data["grid"]
        if g["half_shifted"]:
            return GridSpec.half_shifted(g["L"], g["N"])
        return GridSpec(g["L"], g["N"], tuple(g["offset"]))

    @property
    def time(self) -> TimeGrid:
        t = self.data["time"]
        return TimeGrid(t["t0"], t["t1"], t["steps"])

    def canonical_json(self) -> str:
        return json.dumps(self.data, sort_keys=True, separators=(",", ":"))

    @property
    def hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()


def load_config(path=None) -> ExperimentConfig:
    """Read a ``.toml`` or ``.json`` file (``None`` gives the defaults)."""
    if path is None:
        return ExperimentConfig.from_dict({})
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = tomllib.loads(text) if path.suffix == ".toml" else json.loads(text)
    except (tomllib.TOMLDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot parse {path.name}: {exc}") from None
    if not isinstance(raw, dict):
        raise ConfigError("top level must be a table/object")
    return ExperimentConfig.from_dict(raw)
