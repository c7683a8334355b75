"""The asymptotic ODE, its flow and the bounded weak null classifier.

The asymptotic equation ``(2 - t) d_t xi = Q(xi)/t`` becomes autonomous in
``tau = log(t/(2 - t))/2``: ``d_tau xi = Q(xi)`` with ``Q^K = -2 c^K_IJ xi^I xi^J``
and ``c = chi(rho) rho^m bbar`` frozen at a spatial point.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.integrate import solve_ivp

from ._validation import DomainError, ValidationError, as_finite_array, check_positive_int
from .coefficients import AngularPoint, CartesianCoefficients, bbar_at, max_abs_bbar, sphere_samples
from .geometry import cutoff_chi, peak_effective_radius
from .state import RadialChart

log = logging.getLogger(__name__)

NULL_TOL = 1e-13


class FlowIntegrationError(RuntimeError):
    """The adaptive integrator gave up; ``state`` and ``tau`` are the last accepted values."""

    def __init__(self, message: str, tau: float, state: np.ndarray):
        super().__init__(message)
        self.tau = tau
        self.state = state


class IllConditionedError(RuntimeError):
    pass


@dataclass(frozen=True)
class FlowOptions:
    rel_tol: float = 1e-11
    abs_tol: float = 1e-13
    tau_min: float = -10.0
    blowup_threshold: float = 1e6

    def __post_init__(self):
        for name in ("rel_tol", "abs_tol"):
            v = getattr(self, name)
            if not (0.0 < v <= 1e-2):
                raise ValidationError(f"{name}={v!r} must lie in (0, 1e-2]", f"analyzer.{name}")
        if not self.tau_min < 0:
            raise ValidationError("tau_min must be negative", "analyzer.tau_min")
        if not self.blowup_threshold >= 1e3:
            raise ValidationError("blowup_threshold must be at least 1e3", "analyzer.blowup_threshold")


@dataclass(frozen=True)
class BlowUpAt:
    """Norm crossed the threshold at ``tau_cross``; ``t_star`` is the extrapolated singular time."""

    t_star: float
    tau_star: float
    t_cross: float
    tau_cross: float
    state: np.ndarray


# ---------------------------------------------------------------- basic maps

def effective_coefficient(coeffs: CartesianCoefficients, chart: RadialChart, rho: float,
                          p: AngularPoint) -> np.ndarray:
    """``chi(rho) rho^m bbar(theta, phi)``, shape ``(N, N, N)``."""
    weight = float(cutoff_chi(rho, chart)) * float(rho) ** chart.m
    if weight == 0.0:
        return np.zeros((coeffs.n_fields,) * 3)
    return weight * bbar_at(coeffs, p)


def q_map(c: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """``Q^K = -2 c^K_IJ xi^I xi^J``."""
    return -2.0 * np.einsum("kij,i,j->k", c, xi, xi)


def q_jacobian(c: np.ndarray, xi: np.ndarray) -> np.ndarray:
    """Derivative of :func:`q_map` with respect to ``xi``."""
    return -2.0 * (np.einsum("kij,j->ki", c, xi) + np.einsum("kji,j->ki", c, xi))


def tau_of_t(t):
    t = np.asarray(t, dtype=float)
    if np.any(t <= 0) or np.any(t > 1):
        raise DomainError("tau_of_t needs t in (0, 1]")
    out = 0.5 * np.log(t / (2.0 - t))
    return out if out.ndim else float(out)


def t_of_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(tau > 0):
        raise DomainError("t_of_tau needs tau <= 0")
    # 2 e^{2 tau} / (1 + e^{2 tau}) = 1 + tanh(tau)
    out = 1.0 + np.tanh(tau)
    return out if out.ndim else float(out)


def _check_time(t, name):
    if not (np.isfinite(t) and 0.0 < t <= 1.0):
        raise DomainError(f"{name}={t!r} must lie in (0, 1]")


# ---------------------------------------------------------------- flow

def _integrate(rhs, tau0: float, tau1: float, y0: np.ndarray, opts: FlowOptions,
               norm_of=None, dense: bool = False):
    """Run DOP853 with a terminal event on ``norm_of(y) = blowup_threshold``."""
    norm_of = norm_of or np.linalg.norm

    def event(_, y):
        return norm_of(y) - opts.blowup_threshold

    event.terminal = True
    event.direction = 1.0
    sol = solve_ivp(rhs, (tau0, tau1), y0, method="DOP853", rtol=opts.rel_tol,
                    atol=opts.abs_tol, events=event, dense_output=dense)
    if sol.status == -1:
        raise FlowIntegrationError(sol.message, float(sol.t[-1]), sol.y[:, -1])
    return sol


def _blowup_from(sol, c: np.ndarray, n: int) -> BlowUpAt:
    tau_c = float(sol.t_events[0][0])
    xi = sol.y_events[0][0][:n]
    growth = float(np.dot(xi, q_map(c, xi)))
    # near a quadratic blow-up |xi| ~ 1/(a |tau - tau*|), so the remaining
    # interval is |xi|^2 / <xi, Q(xi)> in the direction of integration
    direction = np.sign(sol.t[-1] - sol.t[0]) or -1.0
    gap = float(np.dot(xi, xi)) / abs(growth) if growth != 0 else 0.0
    tau_s = min(tau_c + direction * gap, 0.0)
    return BlowUpAt(t_of_tau(tau_s), tau_s, t_of_tau(min(tau_c, 0.0)), tau_c, xi.copy())


def flow(t: float, t0: float, c, xi0, opts: FlowOptions | None = None):
    """``F(t, t0, y, xi0)``: solution at ``t`` of the asymptotic equation started at ``t0``.

    Returns the state, or :class:`BlowUpAt` when the norm crosses the threshold.
    """
    opts = opts or FlowOptions()
    _check_time(t, "t")
    _check_time(t0, "t0")
    c = as_finite_array(c, "c", ndim=3)
    xi0 = as_finite_array(xi0, "xi0", ndim=1)
    if t == t0:
        return xi0.copy()
    sol = _integrate(lambda _, y: q_map(c, y), tau_of_t(t0), tau_of_t(t), xi0, opts)
    if sol.status == 1:
        return _blowup_from(sol, c, xi0.size)
    return sol.y[:, -1].copy()


def flow_trajectory(t0: float, c, xi0, opts: FlowOptions | None = None, tau_end: float | None = None):
    """Integrate from ``t0`` to ``tau_end`` (default ``opts.tau_min``); returns the solve_ivp result."""
    opts = opts or FlowOptions()
    _check_time(t0, "t0")
    c = np.asarray(c, dtype=float)
    tau_end = opts.tau_min if tau_end is None else tau_end
    return _integrate(lambda _, y: q_map(c, y), tau_of_t(t0), tau_end,
                      np.asarray(xi0, dtype=float), opts, dense=True)


def dflow(t: float, t0: float, c, xi0, opts: FlowOptions | None = None,
          cond_limit: float = 1e12) -> tuple[np.ndarray, np.ndarray]:
    """``D_xi F`` and its inverse, from the variational equation ``d_tau D = DQ(xi) D``."""
    opts = opts or FlowOptions()
    _check_time(t, "t")
    _check_time(t0, "t0")
    c = as_finite_array(c, "c", ndim=3)
    xi0 = as_finite_array(xi0, "xi0", ndim=1)
    n = xi0.size
    if t == t0:
        return np.eye(n), np.eye(n)

    def rhs(_, y):
        xi, D = y[:n], y[n:].reshape(n, n)
        return np.concatenate([q_map(c, xi), (q_jacobian(c, xi) @ D).ravel()])

    y0 = np.concatenate([xi0, np.eye(n).ravel()])
    sol = _integrate(rhs, tau_of_t(t0), tau_of_t(t), y0, opts, norm_of=lambda y: np.linalg.norm(y[:n]))
    if sol.status == 1:
        raise DomainError(f"flow blows up at t={_blowup_from(sol, c, n).t_star:.6g}; "
                          "variational matrix undefined")
    D = sol.y[n:, -1].reshape(n, n)
    cond = np.linalg.cond(D)
    if not np.isfinite(cond) or cond > cond_limit:
        raise IllConditionedError(f"variational matrix condition number {cond:.3g} exceeds {cond_limit:.3g}")
    return D, np.linalg.inv(D)


def dflow_inverse_direct(t: float, t0: float, c, xi0, opts: FlowOptions | None = None) -> np.ndarray:
    """``(D_xi F)^{-1}`` from its own equation ``d_tau L = -L DQ(xi)``; a cross-check of :func:`dflow`."""
    opts = opts or FlowOptions()
    c = as_finite_array(c, "c", ndim=3)
    xi0 = as_finite_array(xi0, "xi0", ndim=1)
    n = xi0.size
    if t == t0:
        return np.eye(n)

    def rhs(_, y):
        xi, L = y[:n], y[n:].reshape(n, n)
        return np.concatenate([q_map(c, xi), (-L @ q_jacobian(c, xi)).ravel()])

    y0 = np.concatenate([xi0, np.eye(n).ravel()])
    sol = _integrate(rhs, tau_of_t(t0), tau_of_t(t), y0, opts, norm_of=lambda y: np.linalg.norm(y[:n]))
    if sol.status == 1:
        raise DomainError("flow blows up before t")
    return sol.y[n:, -1].reshape(n, n)


def lmap(t: float, c, y_state, opts: FlowOptions | None = None) -> np.ndarray:
    """``(D_xi F(t, 1, y, Y))^{-1}``."""
    return dflow(t, 1.0, c, y_state, opts)[1]


def flow_nodes(t: float, t0: float, c_nodes: np.ndarray, xi_nodes: np.ndarray,
               opts: FlowOptions | None = None) -> tuple[np.ndarray, np.ndarray]:
    """``F(t, t0, y, xi(y))`` at many nodes in one integration.

    ``c_nodes`` has shape ``(n, N, N, N)`` and ``xi_nodes`` shape ``(N, n)``.
    Returns ``(values, ok)``; nodes whose flow crosses the blow-up threshold
    are NaN with ``ok`` False.
    """
    opts = opts or FlowOptions()
    _check_time(t, "t")
    _check_time(t0, "t0")
    n_fields, n = xi_nodes.shape
    out = np.array(xi_nodes, dtype=float, copy=True)
    ok = np.ones(n, dtype=bool)
    live = np.array([bool(np.any(c_nodes[j])) and bool(np.any(xi_nodes[:, j])) for j in range(n)])
    if t == t0 or not np.any(live):
        return out, ok
    c = c_nodes[live]
    m = int(live.sum())

    def rhs(_, y):
        xi = y.reshape(n_fields, m)
        return (-2.0 * np.einsum("nkij,in,jn->kn", c, xi, xi)).ravel()

    def max_norm(y):
        return float(np.max(np.linalg.norm(y.reshape(n_fields, m), axis=0)))

    sol = _integrate(rhs, tau_of_t(t0), tau_of_t(t), xi_nodes[:, live].ravel(), opts, norm_of=max_norm)
    if sol.status != 1:
        out[:, live] = sol.y[:, -1].reshape(n_fields, m)
        return out, ok
    # some node blows up: integrate nodes one at a time
    for j in np.flatnonzero(live):
        res = flow(t, t0, c_nodes[j], xi_nodes[:, j], opts)
        if isinstance(res, BlowUpAt):
            out[:, j] = np.nan
            ok[j] = False
        else:
            out[:, j] = res
    return out, ok


# ---------------------------------------------------------------- classifier

@dataclass
class FlowSample:
    rho: float
    theta: float
    phi: float
    xi0: list
    outcome: str
    sup_norm: float | None = None
    blowup_t: float | None = None
    final_norm: float | None = None
    message: str = ""


@dataclass
class FlowReport:
    classification: str
    sup_bound: float | None
    earliest_blowup_t: float | None
    samples: int
    records: list = field(default_factory=list)
    settings: dict = field(default_factory=dict)

    def to_dict(self, include_records: bool = False) -> dict:
        out = {
            "classification": self.classification,
            "sup_bound": self.sup_bound,
            "earliest_blowup_t": self.earliest_blowup_t,
            "samples": self.samples,
            "outcomes": self.outcome_counts(),
            "settings": self.settings,
        }
        if include_records:
            out["records"] = [asdict(r) for r in self.records]
        return out

    def outcome_counts(self) -> dict:
        counts: dict[str, int] = {}
        for r in self.records:
            counts[r.outcome] = counts.get(r.outcome, 0) + 1
        return dict(sorted(counts.items()))

    def write_json(self, path: Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")

    def write_csv(self, path: Path) -> None:
        n = max((len(r.xi0) for r in self.records), default=0)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["rho", "theta", "phi"] + [f"xi0_{k}" for k in range(n)]
                       + ["outcome", "sup_norm", "blowup_t"])
            for r in self.records:
                w.writerow([repr(r.rho), repr(r.theta), repr(r.phi)] + [repr(x) for x in r.xi0]
                           + [r.outcome, "" if r.sup_norm is None else repr(r.sup_norm),
                              "" if r.blowup_t is None else repr(r.blowup_t)])


def _rho_samples(chart: RadialChart, n_y: int) -> np.ndarray:
    """Open grid over the support of the cutoff plus the maximisers of ``|chi rho^m|``."""
    edge = 2.0 * chart.rho0
    grid = np.linspace(-edge, edge, n_y + 2)[1:-1]
    _, arg = peak_effective_radius(chart)
    extra = [arg, -arg]
    return np.unique(np.concatenate([extra, grid]))


def _xi_samples(n_fields: int, radius: float, n_xi: int, rng: np.random.Generator) -> list[np.ndarray]:
    """Directions ``+-e_K`` first, then seeded random unit vectors; on radii R/4, R/2, 3R/4, R."""
    dirs = []
    for k in range(n_fields):
        for s in (1.0, -1.0):
            e = np.zeros(n_fields)
            e[k] = s
            dirs.append(e)
    dirs = dirs[:n_xi]
    while len(dirs) < n_xi:
        v = rng.standard_normal(n_fields)
        nv = np.linalg.norm(v)
        if nv > 1e-12:
            dirs.append(v / nv)
    return [frac * radius * d for frac in (0.25, 0.5, 0.75, 1.0) for d in dirs]


def _run_sample(c: np.ndarray, xi0: np.ndarray, opts: FlowOptions) -> tuple[str, float | None, float | None, float | None, str]:
    if not np.any(c):
        nrm = float(np.linalg.norm(xi0))
        return "Bounded", nrm, None, nrm, ""
    try:
        sol = flow_trajectory(1.0, c, xi0, opts)
    except FlowIntegrationError as exc:
        return "Inconclusive", None, None, None, str(exc)
    norms = np.linalg.norm(sol.y, axis=0)
    if sol.status == 1:
        b = _blowup_from(sol, c, xi0.size)
        return "BlowUp", float(norms.max()), b.t_star, None, ""
    return "Bounded", float(norms.max()), None, float(norms[-1]), ""


def check_bounded_weak_null(coeffs: CartesianCoefficients, m: int = 1, rho0: float = 1.0,
                            radius: float = 1.0, n_xi: int = 8, n_y: int = 9,
                            opts: FlowOptions | None = None, seed: int = 0, n_jobs: int = 1,
                            chart: RadialChart | None = None) -> FlowReport:
    """Sample the asymptotic flow over points ``y`` and initial values ``|xi0| <= R``.

    Classification: ``Null`` when ``max |bbar| < 1e-13``, ``BlowUp`` if any
    sample crosses the threshold before ``tau_min``, ``Inconclusive`` if any
    sample fails to integrate, ``Bounded`` otherwise.
    """
    opts = opts or FlowOptions()
    check_positive_int(n_xi, "analyzer.n_xi")
    check_positive_int(n_y, "analyzer.n_y")
    if not radius > 0:
        raise ValidationError("R must be positive", "analyzer.R")
    chart = chart or RadialChart(m, rho0)
    settings = {"m": chart.m, "rho0": chart.rho0, "R": radius, "n_xi": n_xi, "n_y": n_y,
                "tau_min": opts.tau_min, "blowup_threshold": opts.blowup_threshold,
                "rel_tol": opts.rel_tol, "abs_tol": opts.abs_tol, "seed": seed}
    bmax = max_abs_bbar(coeffs)
    settings["max_abs_bbar"] = bmax
    if bmax < NULL_TOL:
        return FlowReport("Null", None, None, 0, [], settings)

    angles = sphere_samples(n_y)
    bvals = [bbar_at(coeffs, p) for p in angles]
    if all(np.allclose(b, bvals[0], rtol=0, atol=1e-12) for b in bvals):
        angles, bvals = angles[:1], bvals[:1]

    rng = np.random.default_rng(seed)
    xis = _xi_samples(coeffs.n_fields, radius, n_xi, rng)
    jobs = []
    for rho in _rho_samples(chart, n_y):
        weight = float(cutoff_chi(rho, chart)) * rho**chart.m
        for p, b in zip(angles, bvals):
            for xi0 in xis:
                jobs.append((float(rho), p, weight * b, xi0))

    def work(job):
        rho, p, c, xi0 = job
        return FlowSample(rho, p.theta, p.phi, [float(x) for x in xi0], *_run_sample(c, xi0, opts))

    if n_jobs > 1:
        with ThreadPoolExecutor(max_workers=n_jobs) as ex:
            records = list(ex.map(work, jobs))
    else:
        records = [work(j) for j in jobs]

    blow = [r.blowup_t for r in records if r.outcome == "BlowUp"]
    failed = any(r.outcome == "Inconclusive" for r in records)
    sup = max((r.sup_norm for r in records if r.sup_norm is not None), default=None)
    if blow:
        cls = "BlowUp"
    elif failed:
        cls = "Inconclusive"
    else:
        cls = "Bounded"
    log.info("analyzer: %d samples, classification %s", len(records), cls)
    return FlowReport(cls, sup if cls == "Bounded" else None,
                      max(blow) if blow else None, len(records), records, settings)


# ---------------------------------------------------------------- flow assumptions

def flow_assumption_probe(coeffs: CartesianCoefficients, chart: RadialChart, radius: float,
                          epsilon: float, radii_factors: Sequence[float] = (1.0, 0.5, 0.25),
                          n_t: int = 12, n_xi: int = 4, n_y: int = 5, seed: int = 0,
                          opts: FlowOptions | None = None, xi_sign: float | None = None) -> dict:
    """Measured sup of ``|F|``, ``t^eps |D F|`` and ``t^eps |(D F)^-1|`` over sampled ``(t, y, xi)``.

    ``omega`` lists ``sup |F|`` for the decreasing radius sequence
    ``radius * radii_factors``. ``xi_sign`` restricts scalar samples to one sign.
    """
    opts = opts or FlowOptions()
    t_grid = np.geomspace(1e-3, 1.0, n_t)
    rng = np.random.default_rng(seed)
    angles = sphere_samples(n_y)
    rhos = _rho_samples(chart, n_y)
    cs = [effective_coefficient(coeffs, chart, r, p) for r in rhos for p in angles]
    omega, rows = [], []
    sup_d = sup_dinv = 0.0
    for factor in radii_factors:
        R = radius * factor
        xis = _xi_samples(coeffs.n_fields, R, n_xi, rng)
        if xi_sign is not None:
            xis = [x for x in xis if np.all(np.sign(x) == np.sign(xi_sign))]
        sup_f = 0.0
        for c in cs:
            for xi0 in xis:
                sol = flow_trajectory(1.0, c, xi0, opts, tau_end=float(tau_of_t(t_grid[0])))
                if sol.status == 1:
                    raise DomainError(f"flow blows up for |xi0| = {np.linalg.norm(xi0):.3g}; "
                                      "probe needs a bounded system")
                sup_f = max(sup_f, float(np.linalg.norm(sol.y, axis=0).max()))
                if factor == radii_factors[0]:
                    for t in t_grid[::3]:
                        D, Dinv = dflow(float(t), 1.0, c, xi0, opts)
                        w = t**epsilon
                        sup_d = max(sup_d, w * np.linalg.norm(D, 2))
                        sup_dinv = max(sup_dinv, w * np.linalg.norm(Dinv, 2))
        omega.append(sup_f)
        rows.append({"R": R, "omega": sup_f, "omega_over_R": sup_f / R})
    monotone = all(a >= b for a, b in zip(omega, omega[1:]))
    return {"epsilon": epsilon, "sup_F": max(omega), "sup_t_eps_DF": sup_d,
            "sup_t_eps_DF_inv": sup_dinv, "omega": rows, "omega_monotone_decreasing": monotone}
