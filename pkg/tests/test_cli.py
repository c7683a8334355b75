import json
import subprocess
import sys

import numpy as np
import pytest

from fuchsnull.cli import main, oracle_tables
from fuchsnull.solver import read_snapshots

from conftest import CONFIGS


def _write(tmp_path, doc, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(doc))
    return str(p)


def _config(name):
    return json.loads((CONFIGS / name).read_text())


SMALL_WAVE = {**_config("free_wave.json"),
              "solver": {"n_rho": 64, "t_min": 0.6, "delta_tau": 4e-3, "snapshot_stride": 5},
              "diagnostics": {"k": 1, "fit_window": [0.6, 1.0], "wave_residual_t": 0.8}}


def test_module_entry_point_runs():
    out = subprocess.run([sys.executable, "-m", "fuchsnull", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "fuchsnull" in out.stdout


def _code(argv):
    try:
        return main(argv)
    except SystemExit as exc:
        return exc.code


def test_usage_errors_exit_one(tmp_path, capsys):
    assert _code(["bogus"]) == 1
    assert _code(["evolve", "--nope"]) == 1
    assert main(["evolve"]) == 1
    assert main(["evolve", "--config", str(tmp_path / "missing.json")]) == 1
    bad = _write(tmp_path, {**SMALL_WAVE, "solver": {"n_rho": 4}})
    assert main(["evolve", "--config", bad, "--out", str(tmp_path)]) == 1
    assert "$.solver.n_rho" in capsys.readouterr().err
    assert main(["oracle", "--threads", "0"]) == 1


def test_analyze_exit_codes(tmp_path, capsys):
    assert main(["analyze", "--config", str(CONFIGS / "null_form.json"), "--out", str(tmp_path)]) == 0
    assert json.loads(capsys.readouterr().out)["classification"] == "Null"
    assert (tmp_path / "flow_report.json").exists() and (tmp_path / "flow_samples.csv").exists()
    cfg = {**_config("scalar_blowup.json"), "analyzer": {"R": 1.0, "n_xi": 2, "n_y": 3}}
    assert main(["analyze", "--config", _write(tmp_path, cfg), "--out", str(tmp_path / "b")]) == 3


def test_evolve_outputs_are_byte_identical_on_rerun(tmp_path):
    cfg = _write(tmp_path, SMALL_WAVE)
    for d in ("a", "b"):
        assert main(["evolve", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for name in ("report.json", "diagnostics.csv"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
    report = json.loads((tmp_path / "a" / "report.json").read_text())
    assert report["oracle"]["max_error"] < 1e-4
    assert "wave_residual" in report


def test_zero_data_evolve_gives_zero_snapshots(tmp_path):
    doc = {**SMALL_WAVE, "data": {"vbar": {"profile": "zero"}, "wbar": {"profile": "zero"}}}
    assert main(["evolve", "--config", _write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    snaps = read_snapshots(tmp_path / "snapshots")
    assert len(snaps) > 2 and all(not np.any(f.values) for f in snaps)


def test_verify_reports_known_failures_and_fault(tmp_path, capsys):
    assert main(["verify", "--quick", "--out", str(tmp_path)]) == 4
    first = json.loads((tmp_path / "verify.json").read_text())
    assert set(first["failed"]) == {"B0Bcbnd", "B0Bcbnd_worst_case", "kappabnd_worst_case"}
    assert main(["verify", "--quick", "--fault", "flip_Bcal"]) == 4
    assert "FAIL  B0Bcbnd_sharp" in capsys.readouterr().out


def test_verify_verdicts_do_not_depend_on_seed(tmp_path):
    verdicts = []
    for seed in (0, 3):
        main(["verify", "--quick", "--seed", str(seed), "--out", str(tmp_path / str(seed))])
        doc = json.loads((tmp_path / str(seed) / "verify.json").read_text())
        verdicts.append({r["name"]: r["passed"] for r in doc["results"]})
    assert verdicts[0] == verdicts[1]


def test_convergence_on_zero_data_is_exact(tmp_path):
    doc = {**SMALL_WAVE, "data": {"vbar": {"profile": "zero"}, "wbar": {"profile": "zero"}}}
    assert main(["convergence", "--config", _write(tmp_path, doc), "--out", str(tmp_path)]) == 0
    assert json.loads((tmp_path / "convergence.json").read_text())["time"]["order"] == "exact"


def test_underresolved_data_fail_with_aliasing_note(tmp_path, capsys):
    assert main(["convergence", "--config", str(CONFIGS / "underresolved.json"), "--out", str(tmp_path)]) == 4
    study = json.loads((tmp_path / "convergence.json").read_text())
    assert not study["space"]["pass"]
    assert any("aliasing" in n for n in study["space"]["notes"])


def test_oracle_tables():
    tab = oracle_tables(-1.0, 1.0)
    half = min(tab["riccati"], key=lambda r: abs(r["t"] - 0.5))
    assert tab["dflow_t_half"] == pytest.approx(1.0 / (1.0 + np.log(3.0)) ** 2, abs=1e-8)
    for row in tab["riccati"]:
        assert row["computed"] == pytest.approx(row["exact"], abs=1e-8)
    assert half is not None
    assert oracle_tables(1.0, 1.0)["blowup_t_exact"] == pytest.approx(2.0 / (1.0 + np.e))


def test_oracle_command_with_free_wave(tmp_path):
    assert main(["oracle", "--config", str(CONFIGS / "free_wave.json"), "--out", str(tmp_path),
                 "--times", "1.0", "0.5"]) == 0
    doc = json.loads((tmp_path / "oracle.json").read_text())
    assert [r["t"] for r in doc["free_wave"]] == [1.0, 0.5]
