import numpy as np
import pytest
import sympy as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from fuchsnull._validation import DomainError, ValidationError
from fuchsnull.asymptotics import (BlowUpAt, FlowOptions, check_bounded_weak_null, dflow, dflow_inverse_direct,
                                   flow, flow_nodes, flow_trajectory, lmap, q_jacobian, q_map, t_of_tau,
                                   tau_of_t)
from fuchsnull.coefficients import AngularPoint, CartesianCoefficients, bbar_at, model_condition_h
from fuchsnull.geometry import chart_with_unit_peak

ONE = np.ones((1, 1, 1))


def riccati(t, xi0, c=1.0):
    return xi0 / (1.0 + c * xi0 * np.log(t / (2.0 - t)))


def test_closed_form_solves_the_asymptotic_equation_symbolically():
    tau, xi0, c = sp.symbols("tau xi0 c")
    t = 1 + sp.tanh(tau)
    xi = xi0 / (1 + c * xi0 * sp.log(t / (2 - t)))
    assert sp.simplify(sp.diff(xi, tau) + 2 * c * xi**2) == 0
    assert sp.simplify(sp.diff(t, tau) - t * (2 - t)) == 0


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-6, 1.0))
def test_time_variable_roundtrip(t):
    assert t_of_tau(tau_of_t(t)) == pytest.approx(t, rel=1e-12)


def test_riccati_reference_value():
    assert flow(0.5, 1.0, ONE, [-1.0])[0] == pytest.approx(riccati(0.5, -1.0), abs=1e-8)


@pytest.mark.parametrize("xi0", [-2.0, -1.0, -0.1, 0.05])
def test_riccati_over_range(xi0):
    for t in np.geomspace(1e-4, 1.0, 15):
        assert flow(float(t), 1.0, ONE, [xi0])[0] == pytest.approx(riccati(t, xi0), abs=1e-8)


def test_blowup_time():
    b = flow(1e-3, 1.0, ONE, [1.0])
    assert isinstance(b, BlowUpAt)
    assert b.t_star == pytest.approx(2.0 / (1.0 + np.e), abs=1e-4)
    assert b.t_cross > b.t_star


def test_variational_value_matches_derivative_of_closed_form():
    L = np.log(1.0 / 3.0)
    D, Dinv = dflow(0.5, 1.0, ONE, [-1.0])
    assert D[0, 0] == pytest.approx(1.0 / (1.0 - L) ** 2, abs=1e-8)
    assert lmap(0.5, ONE, [-1.0])[0, 0] == pytest.approx((1.0 - L) ** 2, abs=1e-7)
    # reference value: (1 + ln 3)^2
    assert lmap(0.5, ONE, [-1.0])[0, 0] == pytest.approx(4.404174, abs=1e-5)


def test_variational_inverse_two_routes():
    rng = np.random.default_rng(3)
    c = 0.3 * rng.standard_normal((3, 3, 3))
    xi = 0.2 * rng.standard_normal(3)
    _, Dinv = dflow(0.2, 1.0, c, xi)
    np.testing.assert_allclose(Dinv, dflow_inverse_direct(0.2, 1.0, c, xi), atol=1e-8)


def test_variational_through_blowup_raises():
    with pytest.raises(DomainError):
        dflow(1e-3, 1.0, ONE, [1.0])


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.05, 0.95), st.floats(0.05, 0.95))
def test_group_law(seed, a, b):
    rng = np.random.default_rng(seed)
    c = 0.3 * rng.standard_normal((2, 2, 2))
    xi = 0.2 * rng.standard_normal(2)
    t1, t2 = max(a, b), min(a, b)
    mid = flow(t1, 1.0, c, xi)
    np.testing.assert_allclose(flow(t2, t1, c, mid), flow(t2, 1.0, c, xi), atol=1e-8)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31), st.floats(0.1, 1.0), st.floats(-3.0, -0.1))
def test_quadratic_scaling_law(seed, lam, tau):
    rng = np.random.default_rng(seed)
    c = 0.3 * rng.standard_normal((2, 2, 2))
    xi = 0.2 * rng.standard_normal(2)
    lhs = flow(t_of_tau(tau), 1.0, c, lam * xi)
    rhs = lam * flow(t_of_tau(lam * tau), 1.0, c, xi)
    np.testing.assert_allclose(lhs, rhs, atol=1e-8)


def test_condition_h_norm_is_conserved():
    Ibar = np.array([[2.0, 0.5], [0.5, 1.0]])
    C = np.zeros((2, 2, 2))
    C[0, 1, 0], C[1, 0, 0] = 1.0, -1.0
    b = bbar_at(model_condition_h(Ibar, C), AngularPoint(0.8, 2.0))
    sol = flow_trajectory(1.0, b, [0.3, -0.4], tau_end=float(tau_of_t(1e-4)))
    e = np.einsum("in,ij,jn->n", sol.y, np.linalg.inv(Ibar), sol.y)
    assert np.abs(e - e[0]).max() < 1e-10


def test_q_jacobian_matches_finite_difference():
    rng = np.random.default_rng(1)
    c = rng.standard_normal((3, 3, 3))
    xi = rng.standard_normal(3)
    h = 1e-6
    fd = np.column_stack([(q_map(c, xi + h * e) - q_map(c, xi - h * e)) / (2 * h) for e in np.eye(3)])
    np.testing.assert_allclose(q_jacobian(c, xi), fd, atol=1e-8)


def test_flow_nodes_matches_single_flows():
    rng = np.random.default_rng(2)
    cn = 0.2 * rng.standard_normal((4, 2, 2, 2))
    xn = 0.2 * rng.standard_normal((2, 4))
    vals, ok = flow_nodes(0.1, 1.0, cn, xn)
    assert ok.all()
    for j in range(4):
        np.testing.assert_allclose(vals[:, j], flow(0.1, 1.0, cn[j], xn[:, j]), atol=1e-9)


def test_flow_options_validation():
    with pytest.raises(ValidationError):
        FlowOptions(tau_min=1.0)
    with pytest.raises(ValidationError):
        FlowOptions(rel_tol=0.5)


def test_classification_null_form():
    c = CartesianCoefficients.from_metric_like(np.diag([-1.0, 1, 1, 1]))
    assert check_bounded_weak_null(c).classification == "Null"


def test_classification_is_seed_deterministic():
    C = np.zeros((2, 2, 2))
    C[0, 1, 0], C[1, 0, 0] = 1.0, -1.0
    coeffs = model_condition_h(np.eye(2), C)
    a = check_bounded_weak_null(coeffs, radius=0.3, n_xi=3, n_y=3, seed=4)
    b = check_bounded_weak_null(coeffs, radius=0.3, n_xi=3, n_y=3, seed=4, n_jobs=2)
    assert a.to_dict() == b.to_dict()
    assert a.classification == "Bounded"


def test_scalar_small_radius_is_bounded_on_the_window():
    """Below R = 1/(2 |tau_min|) the Riccati singularity lies beyond the window.

    The largest norm is reached by xi0 = R at the peak weight: R / (1 - 2 R |tau_min|).
    """
    a = np.zeros((1, 1, 1, 4, 4))
    a[0, 0, 0, 0, 0] = 1.0
    R = 0.04
    rep = check_bounded_weak_null(CartesianCoefficients(a), radius=R, n_xi=2, n_y=3,
                                  chart=chart_with_unit_peak(1))
    assert rep.classification == "Bounded"
    assert rep.sup_bound == pytest.approx(R / (1.0 - 2.0 * R * 10.0), rel=1e-8)
