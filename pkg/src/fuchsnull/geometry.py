"""Compactification near spatial infinity, cutoff, initial data and reconstruction.

Physical Minkowski coordinates ``(tbar, rbar)`` are mapped to compact
coordinates ``(t, r)`` with ``t = 1 - tbar/rbar`` and ``r = rbar/(rbar^2 - tbar^2)``.
Future null infinity sits at ``t = 0``; the initial slice ``tbar = 0`` is ``t = 1``.
The radial coordinate of the evolution grid is ``rho`` with ``r = rho**m``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Mapping, Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from ._validation import DomainError, ValidationError
from .coefficients import EQUATOR, AngularPoint
from .state import FIBER_DIM, I0, I1, I4, IPH, ITH, GridField, RadialChart, spectral_interpolate

__all__ = [
    "PhysicalPoint", "CompactPoint", "RadialChart", "InitialDataFunctions",
    "psi", "psi_inverse", "conformal_factor", "cutoff_chi", "smooth_step",
    "initial_data_transform", "extend_to_S", "constraint_residual", "reconstruct_ubar",
    "in_compact_domain", "in_physical_domain", "make_profile", "initial_data_from_config",
    "outgoing_wave_state", "peak_effective_radius", "chart_with_unit_peak",
]


@dataclass(frozen=True)
class PhysicalPoint:
    tbar: float
    rbar: float
    angular: AngularPoint = EQUATOR


@dataclass(frozen=True)
class CompactPoint:
    t: float
    r: float
    angular: AngularPoint = EQUATOR


def psi(p: PhysicalPoint) -> CompactPoint:
    if not (p.rbar > 0 and p.tbar >= 0 and p.rbar**2 - p.tbar**2 > 0):
        raise DomainError(f"point (tbar={p.tbar}, rbar={p.rbar}) is not inside rbar > tbar >= 0")
    return CompactPoint(1.0 - p.tbar / p.rbar, p.rbar / (p.rbar**2 - p.tbar**2), p.angular)


def _check_compact(t, r):
    if not (0.0 < t < 2.0 and r > 0):
        raise DomainError(f"point (t={t}, r={r}) needs t in (0, 2) and r > 0")


def psi_inverse(q: CompactPoint) -> PhysicalPoint:
    _check_compact(q.t, q.r)
    denom = q.r * q.t * (2.0 - q.t)
    return PhysicalPoint((1.0 - q.t) / denom, 1.0 / denom, q.angular)


def conformal_factor(q: CompactPoint) -> float:
    _check_compact(q.t, q.r)
    return 1.0 / (q.r * (2.0 - q.t) * q.t)


def in_physical_domain(p: PhysicalPoint, chart: RadialChart) -> bool:
    """Membership in ``0 < tbar < rbar - 1/r0``, ``rbar > 1/r0``."""
    r0 = chart.r0
    return bool(p.rbar > 1.0 / r0 and 0.0 < p.tbar < p.rbar - 1.0 / r0)


def in_compact_domain(t, rho, chart: RadialChart):
    """Membership in ``0 < t < 1``, ``0 < rho < rho0``, ``t > 2 - (rho0/rho)^m``."""
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho, dtype=float)
    with np.errstate(divide="ignore"):
        bound = 2.0 - (chart.rho0 / np.where(rho > 0, rho, np.nan)) ** chart.m
    return (t > 0) & (t < 1) & (rho > 0) & (rho < chart.rho0) & (t > bound)


def smooth_step(x):
    """C-infinity step: 0 for x <= 0, 1 for x >= 1, exponential transition between."""
    x = np.asarray(x, dtype=float)
    out = np.where(x >= 1.0, 1.0, 0.0)
    mid = (x > 0.0) & (x < 1.0)
    xm = x[mid]
    a = np.exp(-1.0 / xm)
    b = np.exp(-1.0 / (1.0 - xm))
    out[mid] = a / (a + b)
    return out


def cutoff_chi(rho, chart: RadialChart):
    """Cutoff equal to 1 on ``|rho| <= rho0`` and 0 for ``|rho| >= 2 rho0`` (periodic)."""
    rho = np.abs(chart.wrap(rho))
    out = smooth_step((2.0 * chart.rho0 - rho) / chart.rho0)
    return out if out.ndim else float(out)


def peak_effective_radius(chart: RadialChart) -> tuple[float, float]:
    """Maximum of ``chi(rho) rho^m`` over ``rho > 0`` and its location."""
    f = lambda x: -float(cutoff_chi(x, chart)) * x**chart.m
    res = minimize_scalar(f, bounds=(chart.rho0, 2.0 * chart.rho0), method="bounded",
                          options={"xatol": 1e-13 * chart.rho0})
    return -float(res.fun), float(res.x)


def chart_with_unit_peak(m: int) -> RadialChart:
    """Chart whose ``max chi(rho) rho^m`` equals one."""
    peak, _ = peak_effective_radius(RadialChart(m, 1.0))
    return RadialChart(m, peak ** (-1.0 / m))


# ---------------------------------------------------------------- initial data

RadialFunction = Callable[[np.ndarray, float, float], np.ndarray]


@dataclass(frozen=True)
class InitialDataFunctions:
    """Analytic closures ``f(rbar, theta, phi) -> array (N,) + rbar.shape``.

    ``dr_vbar`` is the radial derivative of ``vbar``. Angular derivatives fall
    back to central differences of width 1e-6 when not supplied.
    """

    n_fields: int
    vbar: RadialFunction
    wbar: RadialFunction
    dr_vbar: RadialFunction
    dtheta_vbar: RadialFunction | None = None
    dphi_vbar: RadialFunction | None = None
    description: Mapping | None = None

    def angular_derivatives(self, rbar, p: AngularPoint):
        h = 1e-6
        if self.dtheta_vbar is not None:
            dth = self.dtheta_vbar(rbar, p.theta, p.phi)
        else:
            dth = (self.vbar(rbar, p.theta + h, p.phi) - self.vbar(rbar, p.theta - h, p.phi)) / (2 * h)
        if self.dphi_vbar is not None:
            dph = self.dphi_vbar(rbar, p.theta, p.phi)
        else:
            dph = (self.vbar(rbar, p.theta, p.phi + h) - self.vbar(rbar, p.theta, p.phi - h)) / (2 * h)
        return dth, dph


def _fiber_from_data(data: InitialDataFunctions, chart: RadialChart, rho, p: AngularPoint) -> np.ndarray:
    """Transformed data at ``t = 1`` for an array of ``rho`` (sign unrestricted); shape (N, 5, n)."""
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    rbar = 1.0 / rho**chart.m
    n = data.n_fields
    v = np.broadcast_to(data.vbar(rbar, p.theta, p.phi), (n,) + rbar.shape)
    w = np.broadcast_to(data.wbar(rbar, p.theta, p.phi), (n,) + rbar.shape)
    dv = np.broadcast_to(data.dr_vbar(rbar, p.theta, p.phi), (n,) + rbar.shape)
    dth, dph = data.angular_derivatives(rbar, p)
    out = np.zeros((n, FIBER_DIM) + rbar.shape)
    out[:, I0] = rbar * (rbar * dv + v - rbar * w)
    out[:, I1] = -rbar * (rbar * dv + v + rbar * w)
    out[:, ITH] = np.sqrt(2.0) * rbar * np.broadcast_to(dth, (n,) + rbar.shape)
    out[:, IPH] = np.sqrt(2.0) * rbar * np.broadcast_to(dph, (n,) + rbar.shape) / np.sin(p.theta)
    out[:, I4] = rbar * v
    return out


def initial_data_transform(data: InitialDataFunctions, chart: RadialChart, rho: float,
                           p: AngularPoint = EQUATOR) -> np.ndarray:
    """Fiber state ``(N, 5)`` at ``t = 1`` and radial coordinate ``rho > 0``."""
    if not rho > 0:
        raise DomainError(f"rho={rho!r} must be positive")
    if p.is_pole:
        raise DomainError("initial data transform needs sin(theta) != 0")
    return _fiber_from_data(data, chart, [rho], p)[..., 0]


def extend_to_S(data: InitialDataFunctions, chart: RadialChart, n_rho: int,
                p: AngularPoint = EQUATOR, taper_width: float | None = None) -> GridField:
    """Transformed data on the whole torus.

    Inside the physical band ``0 < rho <= rho0`` the transformed data is used
    unchanged. On ``rho0 < |rho| < rho0 + taper_width`` it is multiplied by a
    smooth taper, and it is exactly zero beyond. For ``rho < 0`` the same
    closures are evaluated at negative ``rbar`` (non-finite values are zeroed),
    which keeps analytic data smooth across ``rho = 0``.
    """
    width = 0.9 * chart.rho0 if taper_width is None else float(taper_width)
    rho = chart.nodes(n_rho)
    taper = smooth_step((chart.rho0 + width - np.abs(rho)) / width)
    values = np.zeros((data.n_fields, FIBER_DIM, n_rho))
    live = (taper > 0) & (rho != 0)
    with np.errstate(all="ignore"):
        fib = _fiber_from_data(data, chart, rho[live], p)
    fib = np.where(np.isfinite(fib), fib, 0.0)
    values[..., live] = fib * taper[live]
    return GridField(1.0, chart, values, {"taper_width": width})


def constraint_residual(field: GridField, t: float | None = None) -> np.ndarray:
    """Pointwise constraint violation, shape ``(N, n_rho)``.

    Radial part ``(rho/m) d_rho V4 - (V1 - (2-t) sqrt(t) V0)/2``; angular part
    ``-V_Lambda/p(t)`` since angular derivatives vanish for angle-independent fields.
    """
    from .state import spectral_derivative
    from .system import ptt

    t = field.t if t is None else float(t)
    v = field.values
    rho = field.rho
    radial = (rho / field.chart.m) * spectral_derivative(v[:, I4], field.chart) \
        - 0.5 * (v[:, I1] - (2.0 - t) * np.sqrt(t) * v[:, I0])
    ang = v[:, ITH:IPH + 1] / ptt(t)
    return np.sqrt(radial**2 + np.sum(ang**2, axis=1))


def reconstruct_ubar(history: Sequence[GridField], chart: RadialChart, p: PhysicalPoint) -> np.ndarray:
    """Physical solution at a point of the physical domain from stored snapshots."""
    q = psi(p)
    rho = q.r ** (1.0 / chart.m)
    times = np.array([f.t for f in history])
    if not (rho <= chart.rho0 and times.min() <= q.t <= times.max()):
        raise DomainError(
            f"point maps to (t={q.t:.6g}, rho={rho:.6g}) outside the evolved region "
            f"t in [{times.min():.6g}, {times.max():.6g}], rho in (0, {chart.rho0}]"
        )
    order = np.argsort(times)
    times = times[order]
    j = int(np.clip(np.searchsorted(times, q.t), 1, len(times) - 1))
    lo, hi = history[order[j - 1]], history[order[j]]
    v_lo = spectral_interpolate(lo.values[:, I4], chart, rho)[:, 0]
    v_hi = spectral_interpolate(hi.values[:, I4], chart, rho)[:, 0]
    span = hi.t - lo.t
    lam = 0.0 if span == 0 else (q.t - lo.t) / span
    v4 = (1 - lam) * v_lo + lam * v_hi
    x = p.tbar / p.rbar
    return p.rbar / (p.rbar**2 - p.tbar**2) * np.sqrt(1.0 - x) * (1.0 + x) * v4


# ---------------------------------------------------------------- data profiles

def _per_field(value, n_fields: int, name: str) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(value, dtype=float))
    if arr.size == 1:
        arr = np.full(n_fields, arr.item())
    if arr.shape != (n_fields,):
        raise ValidationError(f"expected scalar or length-{n_fields} list", name)
    return arr


def make_profile(spec: Mapping, n_fields: int, path: str = "profile"):
    """Return ``(f, df)`` radial closures for a named profile.

    ``zero``; ``gaussian_in_inverse_r``: ``A exp(-(rbar - c)^2 / w^2)``;
    ``power_tail``: ``A rbar^(-p_tail) exp(-(r_core/rbar)^2)`` with ``r_core`` default 0.
    """
    name = spec.get("profile", "zero")
    shape = lambda rbar: (n_fields,) + np.shape(rbar)
    col = lambda a, rbar: a.reshape((n_fields,) + (1,) * np.ndim(rbar))
    if name == "zero":
        z = lambda rbar, th, ph: np.zeros(shape(rbar))
        return z, z
    if name == "gaussian_in_inverse_r":
        A = _per_field(spec.get("A", 1.0), n_fields, f"{path}.A")
        c, w = float(spec.get("c", 0.0)), float(spec.get("w", 1.0))
        if w <= 0:
            raise ValidationError("w must be positive", f"{path}.w")

        def f(rbar, th, ph):
            return col(A, rbar) * np.exp(-((rbar - c) / w) ** 2)

        def df(rbar, th, ph):
            return f(rbar, th, ph) * (-2.0 * (rbar - c) / w**2)

        return f, df
    if name == "power_tail":
        A = _per_field(spec.get("A", 1.0), n_fields, f"{path}.A")
        p = float(spec.get("p_tail", 1.0))
        rc = float(spec.get("r_core", 0.0))

        def f(rbar, th, ph):
            with np.errstate(invalid="ignore"):
                base = np.power(np.asarray(rbar, dtype=float), -p)
            return col(A, rbar) * base * np.exp(-(rc / rbar) ** 2)

        def df(rbar, th, ph):
            return f(rbar, th, ph) * (-p / rbar + 2.0 * rc**2 / rbar**3)

        return f, df
    raise ValidationError(f"unknown profile {name!r}", f"{path}.profile")


def initial_data_from_config(block: Mapping, n_fields: int, path: str = "data") -> InitialDataFunctions:
    """Build closures from a data block ``{"vbar": {...}, "wbar": {...}, "delta": s}``.

    ``wbar`` may use the extra profile ``outgoing``: ``wbar = -vbar/rbar - d vbar/d rbar``,
    which makes the data a purely outgoing spherical wave.
    """
    delta = float(block.get("delta", 1.0))
    vspec = block.get("vbar", {"profile": "zero"})
    wspec = block.get("wbar", {"profile": "zero"})
    v, dv = make_profile(vspec, n_fields, f"{path}.vbar")
    vbar = lambda rbar, th, ph: delta * v(rbar, th, ph)
    dr_vbar = lambda rbar, th, ph: delta * dv(rbar, th, ph)
    if wspec.get("profile") == "outgoing":
        def wbar(rbar, th, ph):
            return -vbar(rbar, th, ph) / rbar - dr_vbar(rbar, th, ph)
    else:
        w, _ = make_profile(wspec, n_fields, f"{path}.wbar")
        wbar = lambda rbar, th, ph: delta * w(rbar, th, ph)
    zero_ang = lambda rbar, th, ph: np.zeros((n_fields,) + np.shape(rbar))
    return InitialDataFunctions(n_fields, vbar, wbar, dr_vbar, zero_ang, zero_ang,
                                description={"vbar": dict(vspec), "wbar": dict(wspec), "delta": delta})


def outgoing_wave_state(data: InitialDataFunctions, chart: RadialChart, t: float, rho) -> np.ndarray:
    """Exact flat-space state for outgoing data, shape ``(N, 5, n)``.

    With ``F(s) = s vbar(s)`` the solution is ``ubar = F(rbar - tbar)/rbar``; in
    compact variables ``u = F(s)``, ``s = 1/(r (2 - t))``, giving
    ``V0 = 2 s F'(s)/(2 - t)``, ``V1 = 0`` and ``V4 = sqrt(t) F(s)``.
    """
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    s = 1.0 / (rho**chart.m * (2.0 - t))
    v = data.vbar(s, np.pi / 2, 0.0)
    dv = data.dr_vbar(s, np.pi / 2, 0.0)
    out = np.zeros((data.n_fields, FIBER_DIM) + rho.shape)
    out[:, I0] = 2.0 * s * (v + s * dv) / (2.0 - t)
    out[:, I4] = np.sqrt(t) * s * v
    return out
