import json

import pytest

from fuchsnull._validation import ValidationError
from fuchsnull.config import (DEFAULTS, SCHEMA, build_chart, build_coefficients, build_data, build_flow_options,
                              build_parameters, build_solver, load_config, validate_config)

from conftest import CONFIGS

BASE = {"schema_version": 1, "coefficients": {"zero": True, "n_fields": 1}}


def _with(**blocks):
    return {**BASE, **blocks}


@pytest.mark.parametrize("path", sorted(CONFIGS.glob("*.json")), ids=lambda p: p.stem)
def test_shipped_configs_validate_and_build(path):
    cfg = load_config(path)
    coeffs = build_coefficients(cfg)
    chart = build_chart(cfg)
    build_parameters(cfg, chart.m)
    build_data(cfg, coeffs.n_fields)
    build_solver(cfg)
    build_flow_options(cfg)


def test_defaults_are_merged():
    cfg = validate_config(_with(solver={"n_rho": 64}))
    assert cfg["solver"]["n_rho"] == 64
    assert cfg["solver"]["t_min"] == DEFAULTS["solver"]["t_min"]
    assert cfg["chart"] == DEFAULTS["chart"]


def test_fraction_strings_are_exact():
    p = build_parameters(validate_config(_with(parameters={"epsilon": "1/11"})))
    assert (p.kappa, p.nu, p.z) == (5 / 22, 1 / 11, 1 / 11)


@pytest.mark.parametrize("doc,path", [
    (_with(solver={"n_rho": 4}), "$.solver.n_rho"),
    (_with(solver={"typo": 1}), "$.solver"),
    (_with(data={"vbar": {"profile": "sinc"}}), "$.data.vbar.profile"),
    ({"coefficients": {}}, "$"),
    (_with(schema_version=2), "$.schema_version"),
])
def test_schema_errors_carry_json_path(doc, path):
    with pytest.raises(ValidationError) as exc:
        validate_config(doc)
    assert exc.value.path == path


def test_builder_errors_carry_json_path():
    with pytest.raises(ValidationError) as exc:
        build_solver(validate_config(_with(solver={"t_min": 2.0})))
    assert exc.value.path == "$.solver.t_min"
    with pytest.raises(ValidationError) as exc:
        build_parameters(validate_config(_with(parameters={"epsilon": 0.05, "kappa": 0.2})))
    assert exc.value.path == "$.parameters"


def test_missing_and_malformed_files(tmp_path):
    with pytest.raises(ValidationError, match="not found"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{")
    with pytest.raises(ValidationError, match="invalid JSON"):
        load_config(bad)


def test_published_schema_matches_module():
    doc = json.loads((CONFIGS.parent / "docs" / "config_schema.json").read_text())
    assert doc == json.loads(json.dumps(SCHEMA))
