import time
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

from fuchsnull.coefficients import CartesianCoefficients, model_condition_h
from fuchsnull.geometry import extend_to_S, initial_data_from_config
from fuchsnull.solver import SolverConfig, evolve
from fuchsnull.state import RadialChart

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"

CRITERIA = {
    1: "algebraic identity suite",
    2: "null-contraction consistency",
    3: "asymptotic-flow oracles",
    4: "parameter recipe",
    5: "linear solver oracle",
    6: "extension independence",
    7: "nonlinear small-data run",
    8: "classification regression",
    9: "Fuchsian reconstruction",
}

_outcomes: dict[int, list] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.failed):
        return
    n = dict(report.user_properties).get("criterion")
    if n is not None:
        detail = dict(report.user_properties).get("detail", "")
        _outcomes[n].append((report.nodeid.split("::")[-1], report.passed, detail))


@pytest.fixture(autouse=True)
def _tag_criterion(request, record_property):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        record_property("criterion", marker.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(CRITERIA):
        runs = _outcomes.get(n)
        if not runs:
            continue
        ok = all(p for _, p, _ in runs)
        terminalreporter.write_line(f"criterion {n}: {'PASS' if ok else 'FAIL'}  {CRITERIA[n]}")
        for name, passed, detail in runs:
            terminalreporter.write_line(f"    {'ok  ' if passed else 'FAIL'} {name}  {detail}")


CONDITION_H_C = np.zeros((2, 2, 2))
CONDITION_H_C[0, 1, 0], CONDITION_H_C[1, 0, 0] = 1.0, -1.0


def condition_h_coefficients() -> CartesianCoefficients:
    return model_condition_h(np.eye(2), CONDITION_H_C)


FREE_WAVE_DATA = {"vbar": {"profile": "power_tail", "p_tail": 5, "r_core": 3},
                  "wbar": {"profile": "outgoing"}}
CONDITION_H_DATA = {"vbar": {"profile": "power_tail", "p_tail": 5, "r_core": 3, "A": [150.0, 75.0]},
                    "wbar": {"profile": "zero"}, "delta": 1e-2}


class Run:
    def __init__(self, coeffs, data, chart, result, seconds):
        self.coeffs, self.data, self.chart, self.result, self.seconds = coeffs, data, chart, result, seconds


@pytest.fixture(scope="session")
def free_wave_run():
    chart = RadialChart(1, 1.0)
    data = initial_data_from_config(FREE_WAVE_DATA, 1)
    coeffs = CartesianCoefficients.zeros(1)
    start = time.perf_counter()
    res = evolve(extend_to_S(data, chart, 128), coeffs, SolverConfig(t_min=0.25, delta_tau=1e-3, snapshot_stride=10))
    return Run(coeffs, data, chart, res, time.perf_counter() - start)


@pytest.fixture(scope="session")
def condition_h_run():
    chart = RadialChart(1, 1.0)
    data = initial_data_from_config(CONDITION_H_DATA, 2)
    coeffs = condition_h_coefficients()
    start = time.perf_counter()
    res = evolve(extend_to_S(data, chart, 128), coeffs,
                 SolverConfig(t_min=1e-2, delta_tau=1e-3, snapshot_stride=20))
    return Run(coeffs, data, chart, res, time.perf_counter() - start)


@pytest.fixture(scope="session")
def condition_h_series(condition_h_run):
    from fuchsnull.diagnostics import build_series
    from fuchsnull.system import select_parameters

    params = select_parameters(1 / 11)
    return params, build_series(condition_h_run.result.history, condition_h_run.coeffs, params, k=1,
                                z_pointwise=0.1)
