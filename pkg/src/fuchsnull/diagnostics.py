"""Fuchsian variables, norms, residuals, decay fits and bound verdicts for evolved solutions."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import stats

from ._validation import ValidationError
from .asymptotics import FlowOptions, flow_nodes
from .coefficients import EQUATOR, CartesianCoefficients, bbar_at
from .state import FIBER_DIM, I0, I4, IPH, ITH, GridField, RadialChart, spectral_derivative
from .system import FuchsianParameters, effective_radius, operator_set, ptt, source_from_u


# ---------------------------------------------------------------- norms

def l2_norm(values: np.ndarray, chart: RadialChart) -> float:
    """Grid L2 norm over the torus; all leading axes are summed with the Euclidean fiber product."""
    n = values.shape[-1]
    return float(np.sqrt(np.sum(np.asarray(values) ** 2) * chart.period / n))


def hk_norm(values: np.ndarray, chart: RadialChart, k: int = 1) -> float:
    total = 0.0
    for j in range(k + 1):
        d = values if j == 0 else spectral_derivative(values, chart, j)
        total += l2_norm(d, chart) ** 2
    return math.sqrt(total)


def projected(values: np.ndarray) -> np.ndarray:
    """``P V``: the fiber state with ``V0`` removed."""
    out = values.copy()
    out[:, I0] = 0.0
    return out


# ---------------------------------------------------------------- Fuchsian variables

@dataclass
class FuchsianSnapshot:
    t: float
    W: np.ndarray   # t^kappa d_rho V, shape (N, 5, n)
    X: np.ndarray   # t^-nu P V, shape (N, 5, n)
    Y: np.ndarray   # F(1, t, y, V0), shape (N, n); NaN where the backward flow blows up
    ok: np.ndarray  # (n,) bool


def _node_coefficients(coeffs: CartesianCoefficients, chart: RadialChart, rho: np.ndarray) -> np.ndarray:
    b = bbar_at(coeffs, EQUATOR)
    return effective_radius(rho, chart)[:, None, None, None] * b[None]


def fuchsian_variables(field: GridField, params: FuchsianParameters, coeffs: CartesianCoefficients,
                       opts: FlowOptions | None = None) -> FuchsianSnapshot:
    """``W``, ``X`` and ``Y`` of a reduced-sector snapshot."""
    t = field.t
    if not t > 0:
        raise ValidationError("Fuchsian variables need t > 0", "t")
    V = field.values
    W = t**params.kappa * spectral_derivative(V, field.chart)
    X = t ** (-params.nu) * projected(V)
    c = _node_coefficients(coeffs, field.chart, field.rho)
    Y, ok = flow_nodes(1.0, t, c, V[:, I0], opts)
    return FuchsianSnapshot(t, W, X, Y, ok)


def y_roundtrip_error(field: GridField, snap: FuchsianSnapshot, coeffs: CartesianCoefficients,
                      opts: FlowOptions | None = None) -> float:
    """``max |F(t, 1, y, Y) - V0|`` over nodes where ``Y`` is defined."""
    c = _node_coefficients(coeffs, field.chart, field.rho)
    Y = np.where(np.isfinite(snap.Y), snap.Y, 0.0)
    back, ok = flow_nodes(field.t, 1.0, c, Y, opts)
    good = ok & snap.ok
    if not np.any(good):
        return float("nan")
    return float(np.max(np.abs(back[:, good] - field.values[:, I0][:, good]), initial=0.0))


def source_projection_defect(field: GridField, params: FuchsianParameters,
                             coeffs: CartesianCoefficients) -> tuple[float, float]:
    """``max |Pi Qcal - Qcal|`` and ``||Qcal||_L2`` for the singular source of the Z system."""
    t, V, chart = field.t, field.values, field.chart
    n_fields = field.n_fields
    b = bbar_at(coeffs, EQUATOR)
    reff = effective_radius(field.rho, chart)
    prod = np.einsum("in,jn->ijn", V[:, I0], V[:, I0])
    dprod = spectral_derivative(prod, chart)
    Qw = np.zeros((n_fields, FIBER_DIM, field.n_rho))
    Qw[:, I0] = -(t**params.kappa) * 2.0 * reff * np.einsum("kij,ijn->kn", b, dprod)
    # stacked (W, X, Y) vector per node with one derivative slot
    stacked = np.concatenate([Qw.reshape(n_fields * FIBER_DIM, -1),
                              np.zeros((n_fields * FIBER_DIM, field.n_rho)),
                              np.zeros((n_fields, field.n_rho))])
    Pi = operator_set(t).blocks(n_fields, params.kappa, params.nu, n_derivs=1)["Pi"]
    defect = float(np.max(np.abs(Pi @ stacked - stacked), initial=0.0))
    return defect, l2_norm(Qw, chart)


def energy(snap: FuchsianSnapshot, chart: RadialChart) -> float:
    """``sum h(Z, A0 Z) d rho``; nodes without ``Y`` count only their ``W``, ``X`` parts."""
    ops = operator_set(snap.t)
    d = np.diag(ops.B0)[None, :, None]
    dz = chart.period / snap.W.shape[-1]
    y = np.where(np.isfinite(snap.Y), snap.Y, 0.0)
    return float((np.sum(d * snap.W**2) + np.sum(d * snap.X**2)
                  + (2.0 - snap.t) * np.sum(y**2)) * dz)


def physical_mask(t: float, chart: RadialChart, rho: np.ndarray) -> np.ndarray:
    """Nodes of the grid inside the physical domain at time ``t``."""
    rho = np.asarray(rho)
    with np.errstate(divide="ignore"):
        return (rho > 0) & (rho < chart.rho0) & (rho**chart.m < chart.r0 / (2.0 - t))


def pointwise_ratio(field: GridField, z: float) -> float:
    """``max |ubar| / ([rbar/(rbar^2 - tbar^2)] (1 - tbar/rbar)^(1 - z))`` over physical nodes.

    In compact variables ``ubar = r sqrt(t) (2 - t) V4`` and the weight is ``r t^(1 - z)``.
    """
    t = field.t
    mask = physical_mask(t, field.chart, field.rho)
    if not np.any(mask):
        return 0.0
    v4 = np.abs(field.values[:, I4][:, mask])
    return float(np.max((2.0 - t) * v4 * t ** (z - 0.5)))


# ---------------------------------------------------------------- series

SERIES_COLUMNS = ("t", "V0_sup", "V0_L2", "V0_Hk", "PV_L2", "PV_Hk", "DV_L2", "DV_Hk",
                  "W_L2", "X_L2", "Y_L2", "Y_sup", "PiZ_L2", "PiZ_Hk", "energy",
                  "constraint_max", "Qcal_L2", "PiQ_defect", "Y_roundtrip", "Y_defined_fraction",
                  "ubar_ratio")


@dataclass
class DiagnosticsSeries:
    rows: list
    Y: list = field(default_factory=list)
    params: dict = field(default_factory=dict)
    k: int = 1

    def column(self, name: str) -> np.ndarray:
        return np.array([r[name] for r in self.rows], dtype=float)

    def write_csv(self, path: Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(SERIES_COLUMNS)
            for r in self.rows:
                w.writerow([repr(float(r[c])) for c in SERIES_COLUMNS])


def build_series(history: Sequence[GridField], coeffs: CartesianCoefficients, params: FuchsianParameters,
                 k: int = 1, z_pointwise: float | None = None, opts: FlowOptions | None = None,
                 roundtrip: bool = True) -> DiagnosticsSeries:
    from .geometry import constraint_residual

    z = params.z if z_pointwise is None else z_pointwise
    rows, Ys = [], []
    for f in history:
        chart = f.chart
        snap = fuchsian_variables(f, params, coeffs, opts)
        V = f.values
        PV = projected(V)
        DV = spectral_derivative(V, chart)
        Y = np.where(np.isfinite(snap.Y), snap.Y, 0.0)
        defect, qn = source_projection_defect(f, params, coeffs)
        piz = np.concatenate([snap.W, snap.X], axis=1)
        rows.append({
            "t": f.t,
            "V0_sup": float(np.max(np.abs(V[:, I0]))),
            "V0_L2": l2_norm(V[:, I0], chart),
            "V0_Hk": hk_norm(V[:, I0], chart, k),
            "PV_L2": l2_norm(PV, chart),
            "PV_Hk": hk_norm(PV, chart, k),
            "DV_L2": l2_norm(DV, chart),
            "DV_Hk": hk_norm(DV, chart, k),
            "W_L2": l2_norm(snap.W, chart),
            "X_L2": l2_norm(snap.X, chart),
            "Y_L2": l2_norm(Y, chart),
            "Y_sup": float(np.max(np.abs(Y))),
            "PiZ_L2": l2_norm(piz, chart),
            "PiZ_Hk": hk_norm(piz, chart, k),
            "energy": energy(snap, chart),
            "constraint_max": float(np.max(constraint_residual(f))),
            "Qcal_L2": qn,
            "PiQ_defect": defect,
            "Y_roundtrip": y_roundtrip_error(f, snap, coeffs, opts) if roundtrip else float("nan"),
            "Y_defined_fraction": float(np.mean(snap.ok)),
            "ubar_ratio": pointwise_ratio(f, z),
        })
        Ys.append(Y)
    return DiagnosticsSeries(rows, Ys, asdict(params) | {"z_pointwise": z}, k)


# ---------------------------------------------------------------- fits and verdicts

@dataclass
class DecayFit:
    exponent: float
    intercept: float
    r2: float
    ci95: tuple
    n: int


def decay_fit(times, values, t_window: tuple[float, float] | None = None, min_samples: int = 8) -> DecayFit:
    """Least-squares slope of ``log(value)`` against ``log(t)``."""
    t = np.asarray(times, dtype=float)
    v = np.asarray(values, dtype=float)
    if t_window is not None:
        sel = (t >= t_window[0]) & (t <= t_window[1])
        t, v = t[sel], v[sel]
    if t.size < min_samples:
        raise ValidationError(f"decay fit needs at least {min_samples} samples, got {t.size}", "t_window")
    if np.any(v <= 0) or np.any(t <= 0):
        raise ValidationError("decay fit needs positive values", "values")
    res = stats.linregress(np.log(t), np.log(v))
    half = float(stats.t.ppf(0.975, t.size - 2) * res.stderr) if t.size > 2 else float("inf")
    return DecayFit(float(res.slope), float(res.intercept), float(res.rvalue**2),
                    (float(res.slope) - half, float(res.slope) + half), int(t.size))


@dataclass
class BoundVerdict:
    name: str
    exponent: float
    constant: float
    ceiling: float
    passed: bool
    detail: str = ""


def _best_constant(t: np.ndarray, norm: np.ndarray, exponent: float) -> tuple[float, float]:
    """``C = max norm / t^exponent`` over the series and the same ratio at ``t = 1``."""
    ratio = norm / t**exponent
    at_one = float(ratio[np.argmax(t)])
    return float(np.max(ratio)), at_one


def bound_check(series: DiagnosticsSeries, params: FuchsianParameters, ceiling_factor: float = 100.0,
                t_window: tuple[float, float] | None = None) -> list[BoundVerdict]:
    """Best constants for the decay bounds; PASS when ``C <= ceiling_factor * (t = 1 value)``."""
    t = series.column("t")
    sel = np.ones(t.size, dtype=bool) if t_window is None else (t >= t_window[0]) & (t <= t_window[1])
    sel |= t == t.max()
    e, k, n, z = params.epsilon, params.kappa, params.nu, params.z
    out = []
    specs = [("V0_sup", "V0_sup", 0.0), ("V0_Hk", "V0_Hk", -e), ("PV_Hk", "PV_Hk", n),
             ("DV_Hk", "DV_Hk", -k), ("PiZ_Hk", "PiZ_Hk", k - z)]
    for name, col, p in specs:
        C, ref = _best_constant(t[sel], series.column(col)[sel], p)
        ceiling = ceiling_factor * ref
        out.append(BoundVerdict(name, p, C, ceiling, bool(C <= ceiling)))

    # Cauchy property of the Y component
    order = np.argsort(t)
    Ys = [series.Y[i] for i in order]
    ts = t[order]
    worst = 0.0
    for j in range(len(ts)):
        s = ts[j]
        if t_window is not None and not sel[order[j]]:
            continue
        diffs = [np.sqrt(np.mean((Ys[i] - Ys[j]) ** 2)) for i in range(j)]
        if diffs:
            worst = max(worst, max(diffs) / s ** (k - z))
    y_ref = float(np.sqrt(np.mean(Ys[-1] ** 2))) if Ys else 0.0
    out.append(BoundVerdict("Y_cauchy", k - z, worst, ceiling_factor * y_ref,
                            bool(worst <= ceiling_factor * y_ref),
                            "RMS over nodes; ceiling relative to the RMS of Y at t = 1"))

    ratio = series.column("ubar_ratio")
    C = float(np.max(ratio[sel]))
    ref = float(ratio[np.argmax(t)])
    out.append(BoundVerdict("ubar_pointwise", 1.0 - series.params.get("z_pointwise", z), C,
                            ceiling_factor * ref, bool(C <= ceiling_factor * ref)))
    return out


def energy_growth_constant(series: DiagnosticsSeries) -> tuple[float, bool]:
    """Smallest ``C`` with ``E(t) <= exp(C (1 - t)) E(1)``; verdict False only when not finite."""
    t = series.column("t")
    E = series.column("energy")
    e1 = E[np.argmax(t)]
    mask = t < t.max()
    if e1 <= 0 or not np.any(mask):
        ok = bool(np.all(np.isfinite(E)))
        return (0.0 if ok else float("inf")), ok
    with np.errstate(divide="ignore"):
        C = float(np.max(np.log(E[mask] / e1) / (1.0 - t[mask])))
    C = max(C, 0.0)
    return C, bool(np.isfinite(C))


# ---------------------------------------------------------------- wave residual

@dataclass
class WaveResidual:
    t: float
    rho: np.ndarray
    values: np.ndarray  # (N, n_band)

    @property
    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values), initial=0.0))


def _three_point(ts, ys):
    """First and second derivatives at ``ts[1]`` from three nonuniform samples."""
    t0, t1, t2 = ts
    h1, h2 = t1 - t0, t2 - t1
    d1 = (-h2 / (h1 * (h1 + h2))) * ys[0] + ((h2 - h1) / (h1 * h2)) * ys[1] + (h1 / (h2 * (h1 + h2))) * ys[2]
    d2 = 2.0 * (ys[0] / (h1 * (h1 + h2)) - ys[1] / (h1 * h2) + ys[2] / (h2 * (h1 + h2)))
    return d1, d2


def wave_residual(history: Sequence[GridField], coeffs: CartesianCoefficients, t_check: float) -> WaveResidual:
    """Second-order conformal wave operator applied to ``u = V4/sqrt(t)`` minus the source.

    Uses the stored snapshot nearest ``t_check`` and its two neighbours, and
    evaluates on physical-band nodes (where the cutoff equals one).
    """
    if len(history) < 3:
        raise ValidationError("wave residual needs at least three snapshots", "history")
    hist = sorted(history, key=lambda f: f.t)
    times = np.array([f.t for f in hist])
    j = int(np.clip(np.argmin(np.abs(times - t_check)), 1, len(hist) - 2))
    trio = hist[j - 1:j + 2]
    ts = [f.t for f in trio]
    mid = trio[1]
    chart = mid.chart
    m = chart.m
    rho = mid.rho
    us = [f.values[:, I4] / np.sqrt(f.t) for f in trio]
    rdr = [(rho / m) * spectral_derivative(u, chart) for u in us]
    u_t, u_tt = _three_point(ts, us)
    rdr_t, _ = _three_point(ts, rdr)
    rdr_u = rdr[1]
    r2_urr = (rho / m) * spectral_derivative(rdr_u, chart) - rdr_u
    t = mid.t
    op = (t - 2.0) * t * u_tt + r2_urr + 2.0 * (1.0 - t) * rdr_t + 2.0 * (t - 1.0) * u_t
    mask = physical_mask(t, chart, rho)
    r = rho[mask] ** m
    # source from the finite-difference derivatives of u, not from the first-order variables
    st = np.sqrt(t)
    uang = mid.values[:, ITH:IPH + 1][..., mask] / ptt(t)
    f = source_from_u(coeffs.values, t, r, EQUATOR.theta, EQUATOR.phi, t * u_t[:, mask],
                      st * rdr_u[:, mask], uang, st * us[1][:, mask])
    return WaveResidual(t, rho[mask], op[:, mask] - f)


# ---------------------------------------------------------------- reports

def verdict_report(series: DiagnosticsSeries, verdicts: Sequence[BoundVerdict],
                   fits: dict | None = None, extra: dict | None = None) -> dict:
    C, ok = energy_growth_constant(series)
    return {
        "bounds": [asdict(v) for v in verdicts],
        "all_pass": bool(all(v.passed for v in verdicts) and ok),
        "energy_growth_constant": C,
        "energy_bounded": ok,
        "fits": {k: asdict(v) for k, v in (fits or {}).items()},
        "max_PiQ_defect": float(np.max(series.column("PiQ_defect"), initial=0.0)),
        "max_Y_roundtrip": float(np.nanmax(series.column("Y_roundtrip"))) if series.rows else 0.0,
        "parameters": series.params,
        **(extra or {}),
    }


def write_verdicts(report: dict, path: Path) -> None:
    Path(path).write_text(json.dumps(report, indent=2, sort_keys=True, default=float) + "\n")
