import numpy as np
import pytest

from fuchsnull._validation import ValidationError
from fuchsnull.coefficients import AngularPoint, CartesianCoefficients
from fuchsnull.diagnostics import physical_mask
from fuchsnull.geometry import extend_to_S, initial_data_from_config, outgoing_wave_state
from fuchsnull.solver import (BlowUpError, ReducedSystem, SolverConfig, evolve, read_snapshots, rhs,
                              step_size, validate_reduced, write_snapshots)
from fuchsnull.state import I0, GridField, RadialChart
from fuchsnull.system import source_extended

from conftest import FREE_WAVE_DATA, condition_h_coefficients


def _free_wave(n, h, t_min=0.25):
    chart = RadialChart(1, 1.0)
    data = initial_data_from_config(FREE_WAVE_DATA, 1)
    res = evolve(extend_to_S(data, chart, n), CartesianCoefficients.zeros(1),
                 SolverConfig(t_min=t_min, delta_tau=h, snapshot_stride=10**6))
    return data, chart, res


def test_zero_data_stays_zero():
    chart = RadialChart(1, 1.0)
    f0 = GridField(1.0, chart, np.zeros((2, 5, 64)))
    res = evolve(f0, condition_h_coefficients(), SolverConfig(t_min=0.5, snapshot_stride=50))
    assert res.status == "ok"
    assert all(not np.any(f.values) for f in res.history)
    assert res.final.t == pytest.approx(0.5, rel=1e-12)


def test_free_wave_matches_exact_solution(free_wave_run):
    r = free_wave_run
    for f in r.result.history:
        mask = physical_mask(f.t, r.chart, f.rho)
        exact = outgoing_wave_state(r.data, r.chart, f.t, f.rho[mask])
        assert np.abs(f.values[..., mask] - exact).max() < 1e-6


def test_free_wave_spatial_convergence():
    errs = []
    for n in (64, 128):
        data, chart, res = _free_wave(n, 1e-3)
        f = res.final
        mask = physical_mask(f.t, chart, f.rho)
        errs.append(np.abs(f.values[..., mask] - outgoing_wave_state(data, chart, f.t, f.rho[mask])).max())
    assert errs[1] < errs[0] / 100


def test_time_self_convergence_is_fourth_order():
    sols = []
    for h in (0.008, 0.004, 0.002):
        _, chart, res = _free_wave(128, h, t_min=0.5)
        sols.append(res.final.values)
    order = np.log2(np.abs(sols[0] - sols[1]).max() / np.abs(sols[1] - sols[2]).max())
    assert 3.5 <= order <= 4.5


def test_step_size_respects_cfl_and_reaches_t_min():
    chart = RadialChart(1, 1.0)
    system = ReducedSystem(CartesianCoefficients.zeros(1), chart, 256)
    cfg = SolverConfig(t_min=0.1, delta_tau=1.0, cfl=0.5)
    h, n = step_size(system, cfg)
    assert h <= 0.5 * chart.period / 256 / system.max_speed + 1e-15
    from fuchsnull.asymptotics import tau_of_t
    assert n * h == pytest.approx(-tau_of_t(0.1), rel=1e-12)


def test_blowup_is_reported():
    chart = RadialChart(1, 1.0)
    data = initial_data_from_config({"vbar": {"profile": "power_tail", "p_tail": 5, "r_core": 3, "A": 1e3},
                                     "wbar": {"profile": "zero"}}, 1)
    f0 = extend_to_S(data, chart, 64)
    cfg = SolverConfig(t_min=0.5, blowup_threshold=2.0 * np.abs(f0.values).max())
    a = np.zeros((1, 1, 1, 4, 4))
    a[0, 0, 0, 0, 0] = 1.0
    res = evolve(f0, CartesianCoefficients(a), cfg)
    assert res.status == "blowup" and res.t_blowup is not None
    with pytest.raises(BlowUpError) as exc:
        evolve(f0, CartesianCoefficients(a), cfg, raise_on_blowup=True)
    assert exc.value.history


def test_reduced_sector_validation():
    validate_reduced(condition_h_coefficients())
    validate_reduced(CartesianCoefficients.from_metric_like(np.diag([-1.0, 1, 1, 1])))
    a = np.zeros((1, 1, 1, 4, 4))
    a[0, 0, 0, 1, 2] = 1.0
    with pytest.raises(ValidationError, match=r"\(0, 0, 0, 1, 2\)"):
        validate_reduced(CartesianCoefficients(a))


def test_rhs_of_zero_is_zero():
    f = GridField(0.7, RadialChart(), np.zeros((1, 5, 32)))
    assert not np.any(rhs(f, CartesianCoefficients.zeros(1)).values)


def test_snapshot_roundtrip(tmp_path, free_wave_run):
    hist = free_wave_run.result.history[:3]
    write_snapshots(hist, tmp_path, {"note": "x"})
    back = read_snapshots(tmp_path)
    assert [f.t for f in back] == [f.t for f in hist]
    for a, b in zip(hist, back):
        assert np.array_equal(a.values, b.values)


def test_source_leading_part_when_projection_vanishes():
    """With only V0 nonzero, t F0 tends to the leading quadratic part."""
    chart = RadialChart(1, 1.0)
    coeffs = condition_h_coefficients()
    V = np.zeros((2, 5))
    V[:, I0] = [0.3, -0.2]
    gaps = []
    for t in (1e-3, 1e-5):
        Q, G = source_extended(coeffs, chart, t, 0.5, AngularPoint(np.pi / 2, 0.0), V)
        gaps.append(np.abs(t * (G[:, I0] + Q / t) - Q).max() / np.abs(Q).max())
    assert gaps[1] <= 1e-4
    # first order in t
    assert gaps[0] / gaps[1] == pytest.approx(100.0, rel=0.05)


def test_source_leading_part_converges_at_half_order():
    chart = RadialChart(1, 1.0)
    coeffs = condition_h_coefficients()
    V = np.random.default_rng(0).standard_normal((2, 5)) * 0.1
    gaps = []
    for t in (1e-4, 1e-6):
        Q, G = source_extended(coeffs, chart, t, 0.5, AngularPoint(np.pi / 2, 0.0), V)
        gaps.append(np.abs(t * (G[:, I0] + Q / t) - Q).max())
    assert gaps[0] / gaps[1] == pytest.approx(10.0, rel=0.05)
