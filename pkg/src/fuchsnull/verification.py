"""Self-contained verification suites: coefficient consistency and flow oracles.

The operator identities live in :func:`fuchsnull.system.identity_suite`; this
module adds the checks that compare computed objects with independent routes.
"""

from __future__ import annotations

import numpy as np

from .asymptotics import BlowUpAt, FlowOptions, dflow, flow, flow_trajectory, tau_of_t, t_of_tau
from .coefficients import (AngularPoint, CartesianCoefficients, atilde_components, bbar_at,
                           model_condition_h, spherical_components)
from .system import IdentityResult, identity_suite


def _random_point(rng) -> AngularPoint:
    return AngularPoint(float(rng.uniform(0.05, np.pi - 0.05)), float(rng.uniform(0, 2 * np.pi)))


def pushforward_atilde(c: CartesianCoefficients, t: float, r: float, p: AngularPoint) -> np.ndarray:
    """``a~`` from the spherical components at the preimage point and the map's Jacobian.

    The Jacobian is written in physical variables: ``t = 1 - tbar/rbar`` and
    ``r = rbar/(rbar^2 - tbar^2)``; angles are unchanged.
    """
    rbar = 1.0 / (r * t * (2.0 - t))
    tbar = (1.0 - t) * rbar
    ab = spherical_components(c, rbar, p)
    d = rbar**2 - tbar**2
    J = np.eye(4)
    J[0, 0] = -1.0 / rbar
    J[0, 1] = tbar / rbar**2
    J[1, 0] = 2.0 * rbar * tbar / d**2
    J[1, 1] = -(rbar**2 + tbar**2) / d**2
    return np.einsum("am,kijmn,bn->kijab", J, ab, J)


def coefficient_consistency(n_points: int = 40, n_fields: int = 2, seed: int = 0) -> list[IdentityResult]:
    rng = np.random.default_rng(seed)
    worst_b = worst_a = 0.0
    L = np.array([1.0, -1.0, 0.0, 0.0])
    for _ in range(n_points):
        c = CartesianCoefficients(rng.standard_normal((n_fields,) * 3 + (4, 4)))
        p = _random_point(rng)
        rbar = float(rng.uniform(0.5, 50.0))
        ab = spherical_components(c, rbar, p)
        contraction = np.einsum("a,kijab,b->kij", L, ab, L)
        worst_b = max(worst_b, float(np.max(np.abs(contraction - bbar_at(c, p)))))
        t = float(rng.uniform(0.05, 1.0))
        r = float(rng.uniform(0.05, 2.0))
        mine = atilde_components(c, t, r, p)
        ref = pushforward_atilde(c, t, r, p)
        scale = np.max(np.abs(ref))
        worst_a = max(worst_a, float(np.max(np.abs(mine - ref)) / scale))
    return [
        IdentityResult("bbar_is_null_contraction", worst_b <= 1e-12, worst_b),
        IdentityResult("atilde_pushforward", worst_a <= 1e-10, worst_a, "relative to max |a~|"),
    ]


def flow_oracles(seed: int = 0, opts: FlowOptions | None = None) -> list[IdentityResult]:
    """Riccati closed form, blow-up time, group and scaling laws, conservation, variational check."""
    opts = opts or FlowOptions()
    rng = np.random.default_rng(seed)
    out = []
    one = np.ones((1, 1, 1))

    worst = 0.0
    for t in np.geomspace(1e-4, 1.0, 25):
        L = np.log(t / (2.0 - t))
        for xi0 in (-1.0, -0.3, 0.05):
            exact = xi0 / (1.0 + xi0 * L)
            got = flow(float(t), 1.0, one, [xi0], opts)
            worst = max(worst, abs(float(got[0]) - exact))
    out.append(IdentityResult("riccati_closed_form", worst <= 1e-8, worst))

    b = flow(1e-3, 1.0, one, [1.0], opts)
    err = abs(b.t_star - 2.0 / (1.0 + np.e)) if isinstance(b, BlowUpAt) else float("inf")
    out.append(IdentityResult("riccati_blowup_time", err <= 1e-4, err))

    c = 0.3 * rng.standard_normal((3, 3, 3))
    worst_g = worst_s = 0.0
    for _ in range(5):
        xi = 0.2 * rng.standard_normal(3)
        t0, t1, t2 = sorted(rng.uniform(0.05, 1.0, 3))[::-1]
        a = flow(t2, t1, c, flow(t1, t0, c, xi, opts), opts)
        direct = flow(t2, t0, c, xi, opts)
        worst_g = max(worst_g, float(np.max(np.abs(a - direct))))
        # trajectory from ratio*xi equals ratio * xi(ratio * tau)
        ratio = float(rng.uniform(0.2, 1.0))
        tau = float(rng.uniform(-3.0, -0.1))
        lhs = flow(t_of_tau(tau), 1.0, c, ratio * xi, opts)
        rhs = ratio * flow(t_of_tau(ratio * tau), 1.0, c, xi, opts)
        worst_s = max(worst_s, float(np.max(np.abs(lhs - rhs))))
    out.append(IdentityResult("flow_group_law", worst_g <= 1e-8, worst_g))
    out.append(IdentityResult("flow_scaling_law", worst_s <= 1e-8, worst_s))

    Cbar = np.zeros((2, 2, 2))
    Cbar[0, 1, 0], Cbar[1, 0, 0] = 1.0, -1.0
    Ibar = np.array([[2.0, 0.5], [0.5, 1.0]])
    model = model_condition_h(Ibar, Cbar)
    bb = bbar_at(model, AngularPoint(1.0, 0.3))
    Icheck = np.linalg.inv(Ibar)
    worst_e = 0.0
    for _ in range(5):
        xi = 0.5 * rng.standard_normal(2)
        sol = flow_trajectory(1.0, bb, xi, opts, tau_end=float(tau_of_t(1e-3)))
        e = np.einsum("in,ij,jn->n", sol.y, Icheck, sol.y)
        worst_e = max(worst_e, float(np.max(np.abs(e - e[0]))))
    out.append(IdentityResult("condition_h_conservation", worst_e <= 1e-10, worst_e))

    worst_d = 0.0
    h = 1e-5
    for _ in range(3):
        xi = 0.2 * rng.standard_normal(3)
        t = float(rng.uniform(0.05, 0.9))
        D, _ = dflow(t, 1.0, c, xi, opts)
        fd = np.empty_like(D)
        for j in range(3):
            e = np.zeros(3)
            e[j] = h
            fd[:, j] = (flow(t, 1.0, c, xi + e, opts) - flow(t, 1.0, c, xi - e, opts)) / (2 * h)
        worst_d = max(worst_d, float(np.max(np.abs(D - fd))))
    out.append(IdentityResult("dflow_finite_difference", worst_d <= 1e-5, worst_d))
    return out


def run_all(seed: int = 0, fault: str | None = None, quick: bool = False) -> list[IdentityResult]:
    """Every suite; ``quick`` shrinks the random-vector counts."""
    kw = {"n_vectors": 40, "t_values": np.linspace(0.02, 1.0, 10)} if quick else {}
    results = identity_suite(seed=seed, fault=fault, **kw)
    results += coefficient_consistency(seed=seed)
    results += flow_oracles(seed=seed)
    return results
