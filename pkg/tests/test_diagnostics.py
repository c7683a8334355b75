import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fuchsnull._validation import ValidationError
from fuchsnull.coefficients import CartesianCoefficients
from fuchsnull.diagnostics import (bound_check, build_series, decay_fit, fuchsian_variables, hk_norm, l2_norm,
                                   physical_mask, pointwise_ratio, source_projection_defect, wave_residual,
                                   y_roundtrip_error)
from fuchsnull.state import I4, GridField, RadialChart
from fuchsnull.system import select_parameters

PARAMS = select_parameters(1 / 11)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3.0, 3.0), st.floats(0.1, 10.0))
def test_decay_fit_recovers_exact_power_law(p, c):
    t = np.geomspace(0.01, 1.0, 20)
    fit = decay_fit(t, c * t**p)
    assert fit.exponent == pytest.approx(p, abs=1e-10)
    if abs(p) > 1e-3:
        assert fit.r2 == pytest.approx(1.0, abs=1e-12)


def test_decay_fit_window_and_errors():
    t = np.geomspace(0.01, 1.0, 20)
    assert decay_fit(t, t**0.5, (0.05, 0.6)).n == ((t >= 0.05) & (t <= 0.6)).sum()
    with pytest.raises(ValidationError):
        decay_fit(t[:3], t[:3])
    with pytest.raises(ValidationError):
        decay_fit(t, -t)


def test_sobolev_norm_of_a_trig_mode():
    chart = RadialChart(1, 1.0)
    rho = chart.nodes(64)
    k = 2 * np.pi * 2 / chart.period
    f = np.sin(k * rho)
    l2 = np.sqrt(chart.period / 2)
    assert l2_norm(f, chart) == pytest.approx(l2, rel=1e-12)
    assert hk_norm(f, chart, 1) == pytest.approx(l2 * np.sqrt(1 + k**2), rel=1e-12)


def test_pointwise_ratio_in_compact_variables():
    chart = RadialChart(1, 1.0)
    rho = chart.nodes(32)
    V = np.zeros((1, 5, 32))
    V[:, I4] = 1.0
    f = GridField(0.25, chart, V)
    assert pointwise_ratio(f, 0.1) == pytest.approx(1.75 * 0.25 ** (0.1 - 0.5), rel=1e-12)
    assert not np.any(physical_mask(0.25, chart, rho) & (rho <= 0))


def test_free_wave_has_trivial_fuchsian_reconstruction(free_wave_run):
    coeffs = free_wave_run.coeffs
    f = free_wave_run.result.final
    snap = fuchsian_variables(f, PARAMS, coeffs)
    # with zero coefficients the asymptotic flow is the identity
    np.testing.assert_array_equal(snap.Y, f.values[:, 0])
    assert y_roundtrip_error(f, snap, coeffs) == 0.0
    assert source_projection_defect(f, PARAMS, coeffs) == (0.0, 0.0)


def test_nonlinear_projection_defect_and_roundtrip(condition_h_run):
    f = condition_h_run.result.history[len(condition_h_run.result.history) // 2]
    defect, qn = source_projection_defect(f, PARAMS, condition_h_run.coeffs)
    assert qn > 0 and defect <= 1e-12 * qn
    snap = fuchsian_variables(f, PARAMS, condition_h_run.coeffs)
    assert y_roundtrip_error(f, snap, condition_h_run.coeffs) <= 1e-7


def test_bounds_pass_for_the_free_wave(free_wave_run):
    series = build_series(free_wave_run.result.history, free_wave_run.coeffs, PARAMS)
    verdicts = bound_check(series, PARAMS)
    assert all(v.passed for v in verdicts), [v for v in verdicts if not v.passed]


def test_bounds_fail_for_a_growing_series():
    chart = RadialChart(1, 1.0)
    rho = chart.nodes(32)
    hist = []
    for t in np.geomspace(1.0, 0.01, 12):
        V = np.zeros((1, 5, 32))
        V[:, 0] = np.cos(np.pi * rho) / t**1.5
        hist.append(GridField(float(t), chart, V))
    verdicts = {v.name: v for v in bound_check(build_series(hist, CartesianCoefficients.zeros(1), PARAMS), PARAMS)}
    assert not verdicts["V0_sup"].passed


def test_wave_residual_small_for_exact_wave(free_wave_run):
    res = wave_residual(free_wave_run.result.history, free_wave_run.coeffs, 0.5)
    assert res.max_abs < 1e-4


def test_wave_residual_detects_a_corrupted_snapshot(free_wave_run):
    hist = list(free_wave_run.result.history)
    base = wave_residual(hist, free_wave_run.coeffs, 0.5)
    j = int(np.argmin([abs(f.t - base.t) for f in hist]))
    bad = hist[j].values.copy()
    bad[:, I4] *= 1.0 + 1e-3
    hist[j] = GridField(hist[j].t, hist[j].chart, bad)
    assert wave_residual(hist, free_wave_run.coeffs, 0.5).max_abs > 100 * base.max_abs


def test_wave_residual_needs_three_snapshots(free_wave_run):
    with pytest.raises(ValidationError):
        wave_residual(free_wave_run.result.history[:2], free_wave_run.coeffs, 0.5)
