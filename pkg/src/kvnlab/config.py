"""Experiment configuration: schema validation, defaults and flag overrides."""

from __future__ import annotations

import copy
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Optional

import jsonschema

from .errors import ConfigError

KINDS = ("cesaro", "kvn", "counterexample", "ceps", "classical", "verify-forward")

_SCALAR = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*-?\d+(\s*/\s*\d+|\.\d*)?\s*$"}]}
_VECTOR = {"type": "array", "items": _SCALAR, "minItems": 1}
_SOURCE = {
    "type": "object",
    "oneOf": [
        {"required": ["csv"], "properties": {"csv": {"type": "string", "minLength": 1}}, "additionalProperties": False},
        {"required": ["generator"], "properties": {"generator": {
            "type": "object", "required": ["name"], "properties": {"name": {"type": "string"}}}},
         "additionalProperties": False},
    ],
}
_INTERVALS = {"type": "array", "items": {"type": "array", "items": _SCALAR, "minItems": 2, "maxItems": 2}}

SCHEMA: dict = {
    "type": "object",
    "required": ["kind"],
    "additionalProperties": False,
    "properties": {
        "kind": {"enum": list(KINDS)},
        "description": {"type": "string"},
        "backend": {"enum": ["exact", "float"]},
        "params": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "horizon": {"type": "integer", "minimum": 2, "maximum": 10_000_000},
                "tolerance": {"type": "number", "exclusiveMinimum": 0, "maximum": 1e6},
                "level_cap": {"type": "integer", "minimum": 2, "maximum": 4096},
                "eps": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "p": {"type": "number", "exclusiveMinimum": 1, "maximum": 100},
                "audit": {"type": "boolean"},
                "seed": {"type": "integer", "minimum": 0},
            },
        },
        "input": _SOURCE,
        "projections": _SOURCE,
        "unit": _VECTOR,
        "bound": _VECTOR,
        "system": {
            "type": "object",
            "required": ["weights", "blocks", "sigma"],
            "additionalProperties": False,
            "properties": {
                "weights": _VECTOR,
                "blocks": {"type": "array", "minItems": 1,
                           "items": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}}},
                "sigma": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 0}},
                "unit": _VECTOR,
            },
        },
        "pairs": {"type": "array", "minItems": 1, "items": {
            "type": "array", "minItems": 2, "maxItems": 2,
            "items": {"type": "array", "items": {"type": "integer", "enum": [0, 1]}}}},
        "ee_check": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "f": _VECTOR,
                "g": _VECTOR,
                "random_pairs": {"type": "integer", "minimum": 0, "maximum": 1000},
            },
        },
        "map": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["rotation", "doubling"]},
                "alpha": {"oneOf": [_SCALAR, {"const": "golden"}]},
            },
        },
        "A": _INTERVALS,
        "B": _INTERVALS,
        "output": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "dir": {"type": "string"},
                "name": {"type": "string", "pattern": r"^[^/\\]+$"},
                "csv_dump": {"type": "boolean"},
            },
        },
    },
    "allOf": [
        {"if": {"properties": {"kind": {"enum": ["cesaro", "kvn"]}}},
         "then": {"required": ["input"]}},
        {"if": {"properties": {"kind": {"const": "verify-forward"}}},
         "then": {"required": ["input", "projections", "bound"]}},
        {"if": {"properties": {"kind": {"const": "counterexample"}}},
         "then": {"required": ["params"], "properties": {"params": {"required": ["p"]}}}},
        {"if": {"properties": {"kind": {"const": "ceps"}}},
         "then": {"required": ["system"]}},
        {"if": {"properties": {"kind": {"const": "classical"}}},
         "then": {"required": ["map", "A", "B"]}},
    ],
}

# horizon has no default here: CSV inputs use their own length, other
# inputs fall back to the runner's default
DEFAULT_PARAMS = {
    "tolerance": 0.05,
    "level_cap": 64,
    "eps": 0.01,
    "audit": True,
    "seed": 0,
}


@dataclass(frozen=True)
class ExperimentConfig:
    """A validated configuration with defaults filled and overrides applied."""

    data: dict
    base_dir: Path

    @property
    def kind(self) -> str:
        return self.data["kind"]

    @property
    def backend(self) -> str:
        return self.data["backend"]

    @property
    def params(self) -> dict:
        return self.data["params"]

    @property
    def output_dir(self) -> Path:
        out = Path(self.data["output"]["dir"])
        return out if out.is_absolute() else self.base_dir / out

    @property
    def report_path(self) -> Path:
        return self.output_dir / self.data["output"]["name"]

    def resolve(self, path: str) -> Path:
        p = Path(path)
        return p if p.is_absolute() else self.base_dir / p


def _path_of(error: jsonschema.ValidationError) -> str:
    parts = "".join(f"[{p}]" if isinstance(p, int) else f".{p}" for p in error.absolute_path)
    return "$" + parts


def validate(data: Any) -> None:
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(data), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if errors:
        err = jsonschema.exceptions.best_match(errors)
        raise ConfigError(f"config error at {_path_of(err)}: {err.message}")


def build_config(data: dict, base_dir: Path | str = ".", horizon: Optional[int] = None,
                 tol: Optional[float] = None, out: Optional[str] = None) -> ExperimentConfig:
    """Validate ``data``, fill defaults and apply flag overrides."""
    validate(data)
    resolved = copy.deepcopy(data)
    params = dict(DEFAULT_PARAMS)
    params.update(resolved.get("params", {}))
    if horizon is not None:
        params["horizon"] = horizon
    if tol is not None:
        params["tolerance"] = tol
    resolved["params"] = params
    default_backend = "exact" if resolved["kind"] == "classical" and resolved["map"]["kind"] == "doubling" else "float"
    resolved.setdefault("backend", default_backend)
    output = {"dir": ".", "name": f"{resolved['kind']}-report.json", "csv_dump": False}
    output.update(resolved.get("output", {}))
    if out is not None:
        output["dir"] = out
    resolved["output"] = output
    validate(resolved)
    return ExperimentConfig(resolved, Path(base_dir))


def load_config(path, horizon: Optional[int] = None, tol: Optional[float] = None,
                out: Optional[str] = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        data = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from None
    return build_config(data, path.parent, horizon, tol, out)
