"""Constant Cartesian coefficients and the point-dependent objects built from them.

The semilinear system is fixed by a constant array ``a_hat[K, I, J, mu, nu]``.
Everything else in this module (spherical components, the outgoing null
contraction, the leading radial coefficients and the compactified components)
is an evaluation of that array at a point.

Angular components produced by :func:`spherical_components` and
:func:`atilde_components` are *coordinate* components in the ``(theta, phi)``
chart. Index ordering of a coefficient matrix set is ``[..., K, I, J, alpha, beta]``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Mapping

import numpy as np

from ._validation import (
    DomainError,
    ValidationError,
    as_finite_array,
    format_indices,
)

# A coefficient matrix set is a plain array indexed [..., K, I, J, alpha, beta].
CoefficientMatrixSet = np.ndarray

_POLE_TOL = 1e-14


@dataclass(frozen=True)
class AngularPoint:
    theta: float
    phi: float

    def __post_init__(self):
        th, ph = float(self.theta), float(self.phi)
        if not (np.isfinite(th) and 0.0 <= th <= np.pi):
            raise ValidationError(f"theta={th!r} not in [0, pi]", "theta")
        if not (np.isfinite(ph) and 0.0 <= ph < 2 * np.pi):
            raise ValidationError(f"phi={ph!r} not in [0, 2pi)", "phi")

    @property
    def is_pole(self) -> bool:
        return abs(np.sin(self.theta)) < _POLE_TOL


EQUATOR = AngularPoint(np.pi / 2, 0.0)


@dataclass(frozen=True)
class CartesianCoefficients:
    """Constant coefficients ``values[K, I, J, mu, nu]`` of the quadratic nonlinearity."""

    values: np.ndarray

    def __post_init__(self):
        arr = as_finite_array(self.values, "a_hat", ndim=5)
        n = arr.shape[0]
        if n < 1 or arr.shape != (n, n, n, 4, 4):
            raise ValidationError(f"shape {arr.shape} is not N x N x N x 4 x 4", "a_hat")
        arr = arr.copy()
        arr.setflags(write=False)
        object.__setattr__(self, "values", arr)

    @property
    def n_fields(self) -> int:
        return self.values.shape[0]

    @classmethod
    def zeros(cls, n_fields: int) -> "CartesianCoefficients":
        return cls(np.zeros((n_fields,) * 3 + (4, 4)))

    @classmethod
    def from_metric_like(cls, matrix, n_fields: int = 1) -> "CartesianCoefficients":
        """Place the same 4x4 matrix at every (K, I, J)."""
        m = np.asarray(matrix, dtype=float).reshape(4, 4)
        return cls(np.broadcast_to(m, (n_fields,) * 3 + (4, 4)).copy())


def _jacobian_arrays(rbar, theta: float, phi: float) -> np.ndarray:
    """Unchecked Jacobian, broadcasting over ``rbar``; shape ``rbar.shape + (4, 4)``."""
    rbar = np.asarray(rbar, dtype=float)
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    inv = 1.0 / rbar
    jac = np.zeros(rbar.shape + (4, 4))
    jac[..., 0, 0] = 1.0
    jac[..., 1, 1] = st * cp
    jac[..., 1, 2] = st * sp
    jac[..., 1, 3] = ct
    jac[..., 2, 1] = ct * cp * inv
    jac[..., 2, 2] = ct * sp * inv
    jac[..., 2, 3] = -st * inv
    jac[..., 3, 1] = -sp / st * inv
    jac[..., 3, 2] = cp / st * inv
    return jac


def _require_regular(p: AngularPoint) -> None:
    if p.is_pole:
        raise DomainError(
            f"theta={p.theta!r} is a pole: rows 3 and 4 of the Jacobian contain csc(theta)"
        )


def jacobian(rbar, p: AngularPoint) -> np.ndarray:
    """Jacobian from Cartesian to spherical components, rows ``alpha``, columns ``mu``."""
    rbar = np.asarray(rbar, dtype=float)
    if np.any(~(rbar > 0)):
        raise DomainError("rbar must be positive")
    _require_regular(p)
    return _jacobian_arrays(rbar, p.theta, p.phi)


def _transform(values: np.ndarray, jac: np.ndarray) -> np.ndarray:
    # jac has shape S + (4, 4); result has shape S + (N, N, N, 4, 4)
    return np.einsum("...am,kijmn,...bn->...kijab", jac, values, jac, optimize=True)


def spherical_components(c: CartesianCoefficients, rbar, p: AngularPoint) -> CoefficientMatrixSet:
    """Components in Minkowski spherical coordinates, ``J a_hat J^T`` per (K, I, J)."""
    return _transform(c.values, jacobian(rbar, p))


def bbar_at(c: CartesianCoefficients, p: AngularPoint) -> np.ndarray:
    """Contraction of the coefficients with the outgoing null direction, ``[K, I, J]``."""
    a = c.values
    st, ct = np.sin(p.theta), np.cos(p.theta)
    sp, cp = np.sin(p.phi), np.cos(p.phi)
    return (
        a[..., 0, 0]
        - st * (a[..., 0, 1] * cp + a[..., 0, 2] * sp)
        - a[..., 0, 3] * ct
        - st * (a[..., 1, 0] * cp + a[..., 2, 0] * sp)
        + st**2 * (a[..., 1, 1] * cp**2 + (a[..., 1, 2] + a[..., 2, 1]) * sp * cp
                   + a[..., 2, 2] * sp**2)
        + st * ct * ((a[..., 1, 3] + a[..., 3, 1]) * cp + (a[..., 2, 3] + a[..., 3, 2]) * sp)
        - a[..., 3, 0] * ct
        + a[..., 3, 3] * ct**2
    )


def cbar_at(c: CartesianCoefficients, p: AngularPoint) -> np.ndarray:
    """Large-radius limit of the time/radial block, shape ``[K, I, J, 2, 2]``."""
    a = c.values
    st, ct = np.sin(p.theta), np.cos(p.theta)
    sp, cp = np.sin(p.phi), np.cos(p.phi)
    out = np.empty(a.shape[:3] + (2, 2))
    out[..., 0, 0] = a[..., 0, 0]
    out[..., 0, 1] = st * (a[..., 0, 1] * cp + a[..., 0, 2] * sp) + a[..., 0, 3] * ct
    out[..., 1, 0] = st * (a[..., 1, 0] * cp + a[..., 2, 0] * sp) + a[..., 3, 0] * ct
    out[..., 1, 1] = (
        st**2 * (a[..., 1, 1] * cp**2 + (a[..., 1, 2] + a[..., 2, 1]) * sp * cp + a[..., 2, 2] * sp**2)
        + st * ct * ((a[..., 1, 3] + a[..., 3, 1]) * cp + (a[..., 2, 3] + a[..., 3, 2]) * sp)
        + a[..., 3, 3] * ct**2
    )
    return out


def _atilde_from_abar(ab: np.ndarray, t, r) -> np.ndarray:
    """Compactified components from spherical components already composed with the inverse map.

    ``ab`` has shape ``S + (N, N, N, 4, 4)``; ``t`` and ``r`` broadcast against ``S``.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    extra = (np.newaxis,) * 3
    t = t[(...,) + extra]
    r = r[(...,) + extra]
    a00, a01, a10, a11 = ab[..., 0, 0], ab[..., 0, 1], ab[..., 1, 0], ab[..., 1, 1]
    b = a00 - a01 - a10 + a11
    c00 = (-4 * (a00 - 2 * a01 - 2 * a10 + 3 * a11)
           + t * (a00 - 5 * a01 - 5 * a10 + 13 * a11)
           + t**2 * (a01 + a10 - 6 * a11) + t**3 * a11)
    c01 = (2 * (3 * a00 - 3 * a01 - 5 * a10 + 5 * a11)
           - 2 * t * (a00 - 2 * a01 - 4 * a10 + 5 * a11)
           - t**2 * (a01 + 2 * a10 - 5 * a11) - t**3 * a11)
    c10 = (2 * (3 * a00 - 5 * a01 - 3 * a10 + 5 * a11)
           - 2 * t * (a00 - 4 * a01 - 2 * a10 + 5 * a11)
           - t**2 * (2 * a01 + a10 - 5 * a11) - t**3 * a11)
    c11 = (2 * (2 * a00 - 3 * a01 - 3 * a10 + 4 * a11)
           + 2 * t * (a01 + a10 - 2 * a11) + t**2 * a11)

    out = np.empty_like(ab)
    out[..., 0, 0] = 4 * t**2 * r**2 * b + t**3 * r**2 * c00
    out[..., 0, 1] = -4 * t * r**3 * b + t**2 * r**3 * c01
    out[..., 1, 0] = -4 * t * r**3 * b + t**2 * r**3 * c10
    out[..., 1, 1] = 4 * r**4 * (1 - 2 * t) * b + t**2 * r**4 * c11
    for lam in (2, 3):
        a0l, a1l = ab[..., 0, lam], ab[..., 1, lam]
        al0, al1 = ab[..., lam, 0], ab[..., lam, 1]
        out[..., 0, lam] = -2 * t * r * (a0l - a1l) + t**2 * r * (a0l - 3 * a1l) + t**3 * r * a1l
        out[..., lam, 0] = -2 * t * r * (al0 - al1) + t**2 * r * (al0 - 3 * al1) + t**3 * r * al1
        out[..., 1, lam] = 2 * r**2 * (a0l - a1l) - 2 * t * r**2 * (a0l - a1l) - t**2 * r**2 * a1l
        out[..., lam, 1] = 2 * r**2 * (al0 - al1) - 2 * t * r**2 * (al0 - al1) - t**2 * r**2 * al1
    out[..., 2:, 2:] = ab[..., 2:, 2:]
    return out


def _atilde_unchecked(values: np.ndarray, t, r, theta: float, phi: float) -> np.ndarray:
    """Compactified components for any nonzero ``r`` (negative radii allowed)."""
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    rbar = 1.0 / (t * r * (2.0 - t))
    ab = _transform(values, _jacobian_arrays(rbar, theta, phi))
    return _atilde_from_abar(ab, t, r)


def atilde_components(c: CartesianCoefficients, t, r, p: AngularPoint) -> CoefficientMatrixSet:
    """Components of the coefficients in the compactified coordinates ``(t, r, theta, phi)``.

    The spherical components are evaluated at the preimage point of the
    compactification (they do not depend on the physical time), then combined
    with the polynomial-in-``t`` factors of the coordinate change.
    """
    t = np.asarray(t, dtype=float)
    r = np.asarray(r, dtype=float)
    if np.any(~((t > 0) & (t <= 1))):
        raise DomainError("t must lie in (0, 1]")
    if np.any(~(r > 0)):
        raise DomainError("r must be positive")
    _require_regular(p)
    return _atilde_unchecked(c.values, t, r, p.theta, p.phi)


def model_condition_h(Ibar, Cbar) -> CartesianCoefficients:
    """Coefficients ``a_hat[K,I,J,0,0] = Ibar[K,L] Cbar[L,I,J]``, all other entries zero."""
    Ibar = as_finite_array(Ibar, "I_bar", ndim=2)
    Cbar = as_finite_array(Cbar, "C_bar", ndim=3)
    n = Ibar.shape[0]
    if Ibar.shape != (n, n):
        raise ValidationError(f"shape {Ibar.shape} is not square", "I_bar")
    if Cbar.shape != (n, n, n):
        raise ValidationError(f"shape {Cbar.shape} does not match N={n}", "C_bar")
    asym = np.argwhere(np.abs(Ibar - Ibar.T) > 1e-14 * max(1.0, np.abs(Ibar).max()))
    if asym.size:
        raise ValidationError("not symmetric at " + format_indices(asym), "I_bar")
    if np.linalg.eigvalsh(Ibar).min() <= 0:
        raise ValidationError("not positive definite", "I_bar")
    bad = np.argwhere(Cbar != -np.swapaxes(Cbar, 0, 1))
    if bad.size:
        raise ValidationError(
            "C_bar[L, I, J] != -C_bar[I, L, J] at " + format_indices(bad), "C_bar"
        )
    values = np.zeros((n, n, n, 4, 4))
    values[..., 0, 0] = np.einsum("kl,lij->kij", Ibar, Cbar)
    return CartesianCoefficients(values)


def coefficients_from_json(doc: Mapping[str, Any], path: str = "coefficients") -> CartesianCoefficients:
    """Build coefficients from ``{"a_hat": [...]}``, ``{"I_bar": [...], "C_bar": [...]}``
    or ``{"zero": true, "n_fields": N}``."""
    if not isinstance(doc, Mapping):
        raise ValidationError("expected an object", path)
    if doc.get("zero"):
        n = doc.get("n_fields", 1)
        if not isinstance(n, int) or isinstance(n, bool) or n < 1:
            raise ValidationError("n_fields must be a positive integer", f"{path}.n_fields")
        return CartesianCoefficients.zeros(n)
    if "a_hat" in doc:
        try:
            arr = np.asarray(doc["a_hat"], dtype=float)
        except (TypeError, ValueError) as exc:
            raise ValidationError(f"not a numeric array ({exc})", f"{path}.a_hat") from None
        try:
            return CartesianCoefficients(arr)
        except ValidationError as exc:
            raise ValidationError(str(exc), f"{path}.a_hat") from None
    if "I_bar" in doc and "C_bar" in doc:
        try:
            return model_condition_h(doc["I_bar"], doc["C_bar"])
        except ValidationError as exc:
            sub = exc.path or "I_bar"
            raise ValidationError(exc.message, f"{path}.{sub}") from None
        except (TypeError, ValueError) as exc:
            raise ValidationError(str(exc), path) from None
    raise ValidationError('expected key "a_hat", keys "I_bar" and "C_bar", or "zero"', path)


def coefficients_to_json(c: CartesianCoefficients) -> dict:
    return {"a_hat": c.values.tolist()}


def is_null_form(c: CartesianCoefficients, n_samples: int = 64, tol: float = 1e-13) -> bool:
    """True if the null contraction vanishes at a fixed set of sample directions."""
    return max_abs_bbar(c, n_samples) < tol


def max_abs_bbar(c: CartesianCoefficients, n_samples: int = 64) -> float:
    best = 0.0
    for p in sphere_samples(n_samples):
        best = max(best, float(np.abs(bbar_at(c, p)).max()))
    return best


def sphere_samples(n: int) -> list[AngularPoint]:
    """Deterministic near-uniform points on the sphere avoiding the poles (Fibonacci lattice)."""
    k = np.arange(n) + 0.5
    theta = np.arccos(1 - 2 * k / n)
    phi = np.mod(np.pi * (1 + 5**0.5) * k, 2 * np.pi)
    return [AngularPoint(float(a), float(b)) for a, b in zip(theta, phi)]
