"""Fiber states and gridded fields on the periodic radial grid."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._validation import ValidationError, check_positive_int

# Fiber component indices (V0, V1, V_theta, V_phi, V4); angular entries are
# orthonormal-frame components on the unit sphere.
I0, I1, ITH, IPH, I4 = 0, 1, 2, 3, 4
FIBER_DIM = 5
COMPONENT_NAMES = ("V0", "V1", "Vtheta", "Vphi", "V4")


def zero_fiber(n_fields: int) -> np.ndarray:
    """A fiber state: array of shape ``(N, 5)``."""
    return np.zeros((n_fields, FIBER_DIM))


@dataclass(frozen=True)
class RadialChart:
    """Radial coordinate ``r = rho**m`` on the torus ``[-3 rho0, 3 rho0)``."""

    m: int = 1
    rho0: float = 1.0

    def __post_init__(self):
        check_positive_int(self.m, "chart.m")
        if not (np.isfinite(self.rho0) and self.rho0 > 0):
            raise ValidationError(f"rho0={self.rho0!r} must be positive", "chart.rho0")

    @property
    def period(self) -> float:
        return 6.0 * self.rho0

    @property
    def r0(self) -> float:
        return self.rho0**self.m

    def nodes(self, n_rho: int) -> np.ndarray:
        return -3.0 * self.rho0 + self.period * np.arange(n_rho) / n_rho

    def wrap(self, rho):
        rho = np.asarray(rho, dtype=float)
        return np.mod(rho + 3.0 * self.rho0, self.period) - 3.0 * self.rho0

    def radius(self, rho):
        return np.asarray(rho, dtype=float) ** self.m

    def wavenumbers(self, n_rho: int) -> np.ndarray:
        return 2.0 * np.pi * np.fft.rfftfreq(n_rho, d=self.period / n_rho)


@dataclass
class GridField:
    """Fiber states on the uniform periodic grid; ``values`` has shape ``(N, 5, n_rho)``."""

    t: float
    chart: RadialChart
    values: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 3 or v.shape[1] != FIBER_DIM:
            raise ValidationError(f"values shape {v.shape} is not (N, 5, n_rho)", "values")
        if v.shape[2] < 16:
            raise ValidationError("n_rho must be at least 16", "values")
        self.values = v

    @property
    def n_fields(self) -> int:
        return self.values.shape[0]

    @property
    def n_rho(self) -> int:
        return self.values.shape[2]

    @property
    def rho(self) -> np.ndarray:
        return self.chart.nodes(self.n_rho)

    def copy(self, values=None, t=None) -> "GridField":
        return GridField(self.t if t is None else t, self.chart,
                         self.values.copy() if values is None else values, dict(self.meta))


def spectral_derivative(values: np.ndarray, chart: RadialChart, order: int = 1) -> np.ndarray:
    """Fourier derivative along the last axis on the chart's torus."""
    n = values.shape[-1]
    k = chart.wavenumbers(n)
    spec = np.fft.rfft(values, axis=-1) * (1j * k) ** order
    if n % 2 == 0 and order % 2 == 1:
        spec[..., -1] = 0.0
    return np.fft.irfft(spec, n=n, axis=-1)


def spectral_interpolate(values: np.ndarray, chart: RadialChart, rho) -> np.ndarray:
    """Evaluate the trigonometric interpolant of ``values`` (last axis) at ``rho``."""
    n = values.shape[-1]
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    spec = np.fft.fft(values, axis=-1) / n
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=chart.period / n)
    if n % 2 == 0:
        # split the Nyquist mode symmetrically so the interpolant is real
        k = k.copy()
        k[n // 2] = abs(k[n // 2])
        spec = spec.copy()
        spec[..., n // 2] *= 0.5
        phase_nyq = np.exp(-1j * k[n // 2] * (rho[:, None] + 3.0 * chart.rho0))
    phase = np.exp(1j * np.outer(rho + 3.0 * chart.rho0, k))
    out = spec @ phase.T
    if n % 2 == 0:
        out = out + spec[..., n // 2, None] * phase_nyq[:, 0]
    return out.real
