"""Run configuration: JSON schema, defaults and builders for the module objects."""

from __future__ import annotations

import copy
import json
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

import jsonschema

from ._validation import ValidationError
from .asymptotics import FlowOptions
from .coefficients import CartesianCoefficients, coefficients_from_json
from .geometry import InitialDataFunctions, chart_with_unit_peak, initial_data_from_config
from .solver import SolverConfig
from .state import RadialChart
from .system import FuchsianParameters, select_parameters

SCHEMA_VERSION = 1

_number_or_fraction = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^\s*-?\d+\s*/\s*\d+\s*$"}]}
_profile = {
    "type": "object",
    "properties": {
        "profile": {"enum": ["zero", "gaussian_in_inverse_r", "power_tail", "outgoing"]},
        "A": {"oneOf": [{"type": "number"}, {"type": "array", "items": {"type": "number"}}]},
        "c": {"type": "number"}, "w": {"type": "number"},
        "p_tail": {"type": "number"}, "r_core": {"type": "number", "minimum": 0},
    },
    "required": ["profile"],
    "additionalProperties": False,
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "fuchsnull run configuration",
    "type": "object",
    "required": ["schema_version", "coefficients"],
    "additionalProperties": False,
    "properties": {
        "schema_version": {"const": SCHEMA_VERSION},
        "coefficients": {
            "type": "object",
            "properties": {
                "a_hat": {"type": "array"},
                "I_bar": {"type": "array"},
                "C_bar": {"type": "array"},
                "zero": {"type": "boolean"},
                "n_fields": {"type": "integer", "minimum": 1},
            },
            "additionalProperties": False,
        },
        "chart": {
            "type": "object",
            "properties": {
                "m": {"type": "integer", "minimum": 1},
                "rho0": {"type": "number", "exclusiveMinimum": 0},
                "unit_peak": {"type": "boolean"},
            },
            "additionalProperties": False,
        },
        "parameters": {
            "type": "object",
            "properties": {
                "epsilon": _number_or_fraction,
                "z": _number_or_fraction,
                "kappa": _number_or_fraction,
                "nu": _number_or_fraction,
                "recipe": {"enum": ["auto", "preset", "scaled"]},
            },
            "additionalProperties": False,
        },
        "data": {
            "type": "object",
            "properties": {
                "vbar": _profile,
                "wbar": _profile,
                "delta": {"type": "number"},
                "taper_width": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "solver": {
            "type": "object",
            "properties": {
                "n_rho": {"type": "integer", "minimum": 16},
                "t_min": {"type": "number"},
                "delta_tau": {"type": "number", "exclusiveMinimum": 0},
                "cfl": {"type": "number", "exclusiveMinimum": 0},
                "dealias": {"type": "boolean"},
                "snapshot_stride": {"type": "integer", "minimum": 1},
                "blowup_threshold": {"type": "number", "exclusiveMinimum": 0},
            },
            "additionalProperties": False,
        },
        "analyzer": {
            "type": "object",
            "properties": {
                "R": {"type": "number", "exclusiveMinimum": 0},
                "n_xi": {"type": "integer", "minimum": 1},
                "n_y": {"type": "integer", "minimum": 1},
                "tau_min": {"type": "number", "exclusiveMaximum": 0},
                "blowup_threshold": {"type": "number", "minimum": 1000},
                "rel_tol": {"type": "number"},
                "abs_tol": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "diagnostics": {
            "type": "object",
            "properties": {
                "k": {"type": "integer", "minimum": 0},
                "z_pointwise": {"type": "number"},
                "ceiling_factor": {"type": "number", "exclusiveMinimum": 0},
                "fit_window": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                "wave_residual_t": {"type": "number"},
            },
            "additionalProperties": False,
        },
        "output": {
            "type": "object",
            "properties": {
                "directory": {"type": "string"},
                "formats": {"type": "array", "items": {"enum": ["json", "csv"]}},
            },
            "additionalProperties": False,
        },
    },
}

DEFAULTS: dict[str, Any] = {
    "chart": {"m": 1, "rho0": 1.0},
    "parameters": {"epsilon": "1/11", "recipe": "auto"},
    "data": {"vbar": {"profile": "zero"}, "wbar": {"profile": "zero"}, "delta": 1.0},
    "solver": {"n_rho": 128, "t_min": 0.25, "delta_tau": 1e-3, "cfl": 0.5, "dealias": False,
               "snapshot_stride": 10, "blowup_threshold": 1e8},
    "analyzer": {"R": 1.0, "n_xi": 8, "n_y": 9, "tau_min": -10.0, "blowup_threshold": 1e6,
                 "rel_tol": 1e-11, "abs_tol": 1e-13},
    "diagnostics": {"k": 1, "ceiling_factor": 100.0, "fit_window": [0.02, 0.5]},
    "output": {"directory": "out", "formats": ["json", "csv"]},
}


def _json_path(parts) -> str:
    out = "$"
    for p in parts:
        out += f"[{p}]" if isinstance(p, int) else f".{p}"
    return out


def validate_config(doc: Mapping) -> dict:
    """Schema-check ``doc`` and merge defaults; errors carry a JSON path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(doc), key=lambda e: list(e.absolute_path))
    if errors:
        e = errors[0]
        raise ValidationError(e.message, _json_path(e.absolute_path))
    cfg = copy.deepcopy(DEFAULTS)
    for key, value in doc.items():
        if isinstance(value, dict) and key in cfg and key not in ("data",):
            cfg[key] = {**cfg[key], **value}
        else:
            cfg[key] = copy.deepcopy(value)
    return cfg


def load_config(path: str | Path) -> dict:
    try:
        doc = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ValidationError(f"config file {path} not found", "$") from None
    except json.JSONDecodeError as exc:
        raise ValidationError(f"invalid JSON ({exc.msg} at line {exc.lineno})", "$") from None
    return validate_config(doc)


def _frac(value) -> float:
    if isinstance(value, str):
        return float(Fraction(value.replace(" ", "")))
    return float(value)


def build_coefficients(cfg: Mapping) -> CartesianCoefficients:
    return coefficients_from_json(cfg["coefficients"], "$.coefficients")


def build_chart(cfg: Mapping) -> RadialChart:
    block = cfg["chart"]
    try:
        if block.get("unit_peak"):
            return chart_with_unit_peak(int(block.get("m", 1)))
        return RadialChart(int(block["m"]), float(block["rho0"]))
    except ValidationError as exc:
        raise ValidationError(exc.message, "$.chart") from None


def build_parameters(cfg: Mapping, m: int = 1) -> FuchsianParameters:
    block = cfg["parameters"]
    try:
        if "kappa" in block or "nu" in block:
            missing = [k for k in ("epsilon", "kappa", "nu", "z") if k not in block]
            if missing:
                raise ValidationError("explicit parameters need " + ", ".join(missing), "$.parameters")
            return FuchsianParameters(_frac(block["epsilon"]), _frac(block["kappa"]), _frac(block["nu"]),
                                      _frac(block["z"]), m).validate()
        z = _frac(block["z"]) if "z" in block else None
        return select_parameters(_frac(block["epsilon"]), z, block.get("recipe", "auto"), m)
    except ValidationError as exc:
        raise ValidationError(exc.message, "$.parameters") from None


def build_data(cfg: Mapping, n_fields: int) -> InitialDataFunctions:
    return initial_data_from_config(cfg["data"], n_fields, "$.data")


def build_solver(cfg: Mapping) -> tuple[SolverConfig, int]:
    b = cfg["solver"]
    try:
        sc = SolverConfig(t_min=float(b["t_min"]), delta_tau=float(b["delta_tau"]), cfl=float(b["cfl"]),
                          dealias=bool(b["dealias"]), snapshot_stride=int(b["snapshot_stride"]),
                          blowup_threshold=float(b["blowup_threshold"]))
    except ValidationError as exc:
        raise ValidationError(exc.message, "$." + (exc.path or "solver")) from None
    return sc, int(b["n_rho"])


def build_flow_options(cfg: Mapping) -> FlowOptions:
    b = cfg["analyzer"]
    try:
        return FlowOptions(float(b["rel_tol"]), float(b["abs_tol"]), float(b["tau_min"]),
                           float(b["blowup_threshold"]))
    except ValidationError as exc:
        raise ValidationError(exc.message, "$." + (exc.path or "analyzer")) from None
