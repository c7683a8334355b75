"""Backward evolution of the extended first-order system in the reduced sector.

Fields are angle independent and the coefficients rotationally invariant, so
the angular derivative terms vanish and the system is 1+1 dimensional on the
periodic radial grid. Time stepping is classic RK4 with uniform steps in
``tau = log(t/(2 - t))/2``, for which ``dt/dtau = t (2 - t)``.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from ._validation import ValidationError, format_indices
from .asymptotics import t_of_tau, tau_of_t
from .coefficients import EQUATOR, AngularPoint, CartesianCoefficients, _atilde_unchecked, bbar_at, sphere_samples
from .geometry import cutoff_chi
from .state import COMPONENT_NAMES, FIBER_DIM, GridField, RadialChart, spectral_derivative
from .system import _source_nodes, fiber_source, operator_set

log = logging.getLogger(__name__)


class BlowUpError(RuntimeError):
    """Non-finite or over-threshold state; ``history`` holds the snapshots taken so far."""

    def __init__(self, message: str, t: float, history: list):
        super().__init__(message)
        self.t = t
        self.history = history


@dataclass(frozen=True)
class SolverConfig:
    t_min: float = 0.25
    delta_tau: float = 1e-3
    cfl: float = 0.5
    dealias: bool = False
    snapshot_stride: int = 10
    blowup_threshold: float = 1e8

    def __post_init__(self):
        if not (1e-4 <= self.t_min < 1.0):
            raise ValidationError(f"t_min={self.t_min!r} must lie in [1e-4, 1)", "solver.t_min")
        if not self.delta_tau > 0:
            raise ValidationError("delta_tau must be positive", "solver.delta_tau")
        if not self.cfl > 0:
            raise ValidationError("cfl must be positive", "solver.cfl")
        if int(self.snapshot_stride) < 1:
            raise ValidationError("snapshot_stride must be at least 1", "solver.snapshot_stride")


# ---------------------------------------------------------------- reduced sector

def validate_reduced(coeffs: CartesianCoefficients, tol: float = 1e-12) -> None:
    """Accept only ``a^{0i} = a^{i0} = 0`` and ``a^{ij} = b delta^{ij}`` for every ``(K, I, J)``."""
    a = coeffs.values
    bad = []
    for idx in np.ndindex(a.shape[:3]):
        m = a[idx]
        for i in range(1, 4):
            if abs(m[0, i]) > tol:
                bad.append(idx + (0, i))
            if abs(m[i, 0]) > tol:
                bad.append(idx + (i, 0))
        spatial = m[1:, 1:]
        b = spatial[0, 0]
        for i in range(3):
            for j in range(3):
                target = b if i == j else 0.0
                if abs(spatial[i, j] - target) > tol:
                    bad.append(idx + (i + 1, j + 1))
    if bad:
        raise ValidationError(
            "coefficients are not rotationally invariant; offending [K][I][J][mu][nu] entries: "
            + format_indices(bad), "coefficients")
    # consequences checked directly
    pts = sphere_samples(12)
    b0 = bbar_at(coeffs, pts[0])
    for p in pts[1:]:
        if np.max(np.abs(bbar_at(coeffs, p) - b0)) > tol * max(1.0, np.max(np.abs(a))):
            raise ValidationError("null contraction varies over the sphere", "coefficients")
    for p in pts[:4]:
        at = _atilde_unchecked(a, 0.5, np.array([0.7]), p.theta, p.phi)
        mixed = np.concatenate([at[..., 0, 2:].ravel(), at[..., 2:, 0].ravel(),
                                at[..., 1, 2:].ravel(), at[..., 2:, 1].ravel()])
        if np.max(np.abs(mixed), initial=0.0) > 1e-10 * max(1.0, np.max(np.abs(a))):
            raise ValidationError("mixed radial-angular components do not vanish", "coefficients")


# ---------------------------------------------------------------- right-hand side

class ReducedSystem:
    """Right-hand side of the extended system on a fixed grid."""

    def __init__(self, coeffs: CartesianCoefficients, chart: RadialChart, n_rho: int,
                 dealias: bool = False, angle: AngularPoint = EQUATOR):
        self.coeffs = coeffs
        self.chart = chart
        self.n_rho = n_rho
        self.rho = chart.nodes(n_rho)
        chi = cutoff_chi(self.rho, chart)
        self.advect = chi * self.rho / chart.m
        self.reff = chi * self.rho**chart.m
        self.angle = angle
        self.linear = not np.any(coeffs.values)
        self.dealias = dealias
        k = np.arange(n_rho // 2 + 1)
        self._keep = k <= n_rho // 3
        self.max_speed = 2.0 * float(np.max(np.abs(self.advect)))

    def source(self, t: float, V: np.ndarray) -> np.ndarray:
        if self.linear or not np.any(V):
            return np.zeros_like(V)
        f = _source_nodes(self.coeffs.values, t, self.reff, self.angle.theta, self.angle.phi, V)
        if self.dealias:
            spec = np.fft.rfft(f, axis=-1)
            spec[..., ~self._keep] = 0.0
            f = np.fft.irfft(spec, n=self.n_rho, axis=-1)
        return fiber_source(f, t)

    def dt(self, t: float, V: np.ndarray) -> np.ndarray:
        """``d_t V``."""
        ops = operator_set(t)
        dV = spectral_derivative(V, self.chart)
        term = (-(1.0 / t) * self.advect * np.einsum("ab,kbn->kan", ops.B1, dV)
                + (1.0 / t) * np.einsum("ab,kbn->kan", ops.Bcal @ ops.P, V)
                + np.einsum("ab,kbn->kan", ops.Ccal, V)
                + self.source(t, V))
        inv = 1.0 / np.diag(ops.B0)
        return inv[None, :, None] * term

    def dtau(self, tau: float, V: np.ndarray) -> np.ndarray:
        t = t_of_tau(tau)
        return t * (2.0 - t) * self.dt(t, V)


def rhs(field: GridField, coeffs: CartesianCoefficients, dealias: bool = False) -> GridField:
    """Time derivative ``d_t V`` of a grid field, returned as a :class:`GridField`."""
    system = ReducedSystem(coeffs, field.chart, field.n_rho, dealias)
    out = system.dt(field.t, field.values)
    if not np.all(np.isfinite(out)):
        raise BlowUpError(f"non-finite right-hand side at t={field.t:.6g}", field.t, [])
    return field.copy(values=out)


# ---------------------------------------------------------------- evolution

@dataclass
class EvolutionResult:
    history: list
    status: str
    delta_tau: float
    n_steps: int
    t_blowup: float | None = None

    @property
    def final(self) -> GridField:
        return self.history[-1]

    def times(self) -> np.ndarray:
        return np.array([f.t for f in self.history])


def step_size(system: ReducedSystem, config: SolverConfig) -> tuple[float, int]:
    """Uniform ``tau`` step reaching ``tau(t_min)`` exactly, capped by the CFL bound."""
    span = -tau_of_t(config.t_min)
    d = config.delta_tau
    if system.max_speed > 0:
        drho = system.chart.period / system.n_rho
        d = min(d, config.cfl * drho / system.max_speed)
    n = max(1, math.ceil(span / d - 1e-9))
    return span / n, n


def evolve(initial: GridField, coeffs: CartesianCoefficients, config: SolverConfig,
           system: ReducedSystem | None = None, raise_on_blowup: bool = False) -> EvolutionResult:
    """Integrate from ``t = 1`` down to ``config.t_min`` with RK4 in ``tau``."""
    if not np.all(np.isfinite(initial.values)):
        raise ValidationError("initial data has non-finite entries", "data")
    system = system or ReducedSystem(coeffs, initial.chart, initial.n_rho, config.dealias)
    h, n_steps = step_size(system, config)
    tau0 = tau_of_t(initial.t)
    V = initial.values.copy()
    history = [initial.copy(values=V.copy())]
    history[0].meta["tau"] = tau0
    stride = int(config.snapshot_stride)
    log.info("evolve: %d steps of dtau=%.3e to t_min=%.3e", n_steps, h, config.t_min)
    for i in range(n_steps):
        tau = tau0 - i * h
        k1 = system.dtau(tau, V)
        k2 = system.dtau(tau - 0.5 * h, V - 0.5 * h * k1)
        k3 = system.dtau(tau - 0.5 * h, V - 0.5 * h * k2)
        k4 = system.dtau(tau - h, V - h * k3)
        V = V - (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        tau_new = tau0 - (i + 1) * h
        t_new = t_of_tau(min(tau_new, 0.0))
        if not np.all(np.isfinite(V)) or np.max(np.abs(V)) > config.blowup_threshold:
            msg = f"solution blew up near t={t_new:.6g}"
            log.warning(msg)
            if raise_on_blowup:
                raise BlowUpError(msg, t_new, history)
            return EvolutionResult(history, "blowup", h, i + 1, t_new)
        if (i + 1) % stride == 0 or i + 1 == n_steps:
            snap = GridField(t_new, initial.chart, V.copy(), dict(initial.meta))
            snap.meta["tau"] = tau_new
            history.append(snap)
    return EvolutionResult(history, "ok", h, n_steps)


# ---------------------------------------------------------------- output

def write_snapshots(history: Sequence[GridField], out_dir: Path, parameters: dict | None = None,
                    prefix: str = "snapshot") -> Path:
    """CSV per snapshot (``rho`` then ``V*_K`` columns) plus ``manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    files = []
    for i, f in enumerate(history):
        name = f"{prefix}_{i:05d}.csv"
        with open(out_dir / name, "w", newline="") as fh:
            w = csv.writer(fh)
            cols = [f"{c}_{k}" for k in range(f.n_fields) for c in COMPONENT_NAMES]
            w.writerow(["rho"] + cols)
            vals = f.values.reshape(f.n_fields * FIBER_DIM, f.n_rho)
            for j, r in enumerate(f.rho):
                w.writerow([repr(float(r))] + [repr(float(x)) for x in vals[:, j]])
        files.append(name)
    chart = history[0].chart if history else None
    manifest = {
        "times": [float(f.t) for f in history],
        "files": files,
        "grid": None if chart is None else {"m": chart.m, "rho0": chart.rho0,
                                            "n_rho": history[0].n_rho, "period": chart.period},
        "components": list(COMPONENT_NAMES),
        "parameters": parameters or {},
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return path


def read_snapshots(out_dir: Path) -> list[GridField]:
    """Inverse of :func:`write_snapshots`."""
    out_dir = Path(out_dir)
    manifest = json.loads((out_dir / "manifest.json").read_text())
    g = manifest["grid"]
    chart = RadialChart(g["m"], g["rho0"])
    out = []
    for t, name in zip(manifest["times"], manifest["files"]):
        data = np.loadtxt(out_dir / name, delimiter=",", skiprows=1, ndmin=2)
        vals = data[:, 1:].T.reshape(-1, FIBER_DIM, data.shape[0])
        out.append(GridField(t, chart, vals))
    return out
