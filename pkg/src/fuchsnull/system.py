"""First-order operators, the nonlinear source, parameters and the identity suite.

The fiber is ordered ``(V0, V1, V_theta, V_phi, V4)`` with angular entries in an
orthonormal frame of the unit sphere, so the fiber inner product is Euclidean.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from ._validation import DomainError, ValidationError
from .coefficients import AngularPoint, CartesianCoefficients, _atilde_unchecked, bbar_at
from .geometry import cutoff_chi
from .state import FIBER_DIM, I0, I1, I4, IPH, ITH, RadialChart


def qtt(t):
    t = np.asarray(t, dtype=float)
    out = (-1.0 + 2.0 * t**2 - t**3) / (1.0 + 4.0 * t - 4.0 * t**2 + t**3)
    return out if out.ndim else float(out)


def ptt(t):
    t = np.asarray(t, dtype=float)
    out = np.sqrt((1.0 + 4.0 * t - 4.0 * t**2 + t**3) / (2.0 - t))
    return out if out.ndim else float(out)


def angular_damping(t):
    """The angular diagonal entry of the lower-order matrix."""
    return (9 - 16 * t + 10 * t**2 - 2 * t**3) / (2 * (1 + 4 * t - 4 * t**2 + t**3))


# ---------------------------------------------------------------- parameters

@dataclass(frozen=True)
class FuchsianParameters:
    epsilon: float
    kappa: float
    nu: float
    z: float
    m: int = 1

    def violations(self) -> list[str]:
        e, k, n, z = self.epsilon, self.kappa, self.nu, self.z
        checks = [
            (2 * e < k, "2*epsilon < kappa"),
            (k < 1 - e, "kappa < 1 - epsilon"),
            (k + n < 0.5 - e, "kappa + nu < 1/2 - epsilon"),
            (e < 2 * n, "epsilon < 2*nu"),
            (k <= 1.0 / 3.0, "kappa <= 1/3"),
            (0 < z < k, "0 < z < kappa"),
        ]
        return [name for ok, name in checks if not ok]

    def validate(self) -> "FuchsianParameters":
        bad = self.violations()
        if bad:
            raise ValidationError("violated: " + "; ".join(bad), "parameters")
        return self



def select_parameters(epsilon: float, z: float | None = None, recipe: str = "auto",
                      m: int = 1) -> FuchsianParameters:
    """Choose ``(kappa, nu, z)`` for a given ``epsilon``.

    ``recipe="preset"`` (the ``auto`` choice at epsilon = 1/11) returns
    kappa = 5/22, nu = 1/11. ``recipe="scaled"`` (``auto`` otherwise) uses
    z = epsilon, nu = 1/2 - 5 z, kappa = 3 z. Inequalities are checked in
    exact rational arithmetic when the inputs are simple fractions.
    """
    if not (0.0 < epsilon < 0.1):
        raise ValidationError(f"epsilon={epsilon!r} must lie in (0, 1/10)", "parameters.epsilon")
    eps_q = Fraction(epsilon).limit_denominator(10**6)
    exact = abs(float(eps_q) - epsilon) < 1e-15
    if recipe == "auto":
        recipe = "preset" if eps_q == Fraction(1, 11) else "scaled"
    if recipe == "preset":
        if eps_q != Fraction(1, 11):
            raise ValidationError("the preset is defined for epsilon = 1/11 only",
                                  "parameters.recipe")
        kq, nq = Fraction(5, 22), Fraction(1, 11)
        zq = Fraction(z).limit_denominator(10**6) if z is not None else eps_q
    elif recipe == "scaled":
        zq = Fraction(z).limit_denominator(10**6) if z is not None else eps_q
        kq, nq = 3 * zq, Fraction(1, 2) - 5 * zq
    else:
        raise ValidationError(f"unknown recipe {recipe!r}", "parameters.recipe")

    if exact:
        e = eps_q
        checks = [
            (2 * e < kq, "2*epsilon < kappa"),
            (kq < 1 - e, "kappa < 1 - epsilon"),
            (kq + nq < Fraction(1, 2) - e, "kappa + nu < 1/2 - epsilon"),
            (e < 2 * nq, "epsilon < 2*nu"),
            (kq <= Fraction(1, 3), "kappa <= 1/3"),
            (0 < zq < kq, "0 < z < kappa"),
        ]
        bad = [name for ok, name in checks if not ok]
        if bad:
            raise ValidationError("violated: " + "; ".join(bad), "parameters")
    params = FuchsianParameters(float(epsilon), float(kq), float(nq), float(zq), m)
    return params if exact else params.validate()


# ---------------------------------------------------------------- operators

@dataclass(frozen=True)
class OperatorSet:
    """Fiber matrices at time ``t``; block operators via :meth:`blocks`."""

    t: float
    B0: np.ndarray
    B1: np.ndarray
    Bcal: np.ndarray
    Ccal: np.ndarray
    P: np.ndarray

    def Bsigma(self, direction) -> np.ndarray:
        """Angular principal matrix contracted with a frame covector ``(eta_theta, eta_phi)``."""
        t = self.t
        eta = np.asarray(direction, dtype=float)
        p = ptt(t)
        out = np.zeros((FIBER_DIM, FIBER_DIM))
        for s, idx in enumerate((ITH, IPH)):
            out[I0, idx] = out[idx, I0] = -eta[s] / p
            out[I1, idx] = out[idx, I1] = -(2 - t) * np.sqrt(t) * eta[s] / p
        return out

    def blocks(self, n_fields: int, kappa: float, nu: float, n_derivs: int = 3) -> dict:
        """Block operators on ``Z = (W_j^K, X^K, Y)`` with ``n_derivs`` derivative slots."""
        nw = n_derivs * n_fields
        iw, ix, iy = np.eye(nw), np.eye(n_fields), np.eye(n_fields)
        zero = np.zeros((n_fields, n_fields))

        def diag3(a, b, c):
            from scipy.linalg import block_diag
            return block_diag(np.kron(iw, a), np.kron(ix, b), c)

        t = self.t
        A0 = diag3(self.B0, self.B0, (2 - t) * iy)
        A1 = diag3(self.B1, self.B1, zero)
        Acal = diag3(self.Bcal @ self.P + kappa * self.B0, self.Bcal - nu * self.B0, 2 * iy)
        Pi = diag3(np.eye(FIBER_DIM), np.eye(FIBER_DIM), zero)
        return {"A0": A0, "A1": A1, "Acal": Acal, "Pi": Pi,
                "Asigma": lambda eta: diag3(self.Bsigma(eta), self.Bsigma(eta), zero)}


def operator_set(t: float, params: FuchsianParameters | None = None,
                 fault: str | None = None) -> OperatorSet:
    """Matrices of the first-order system at time ``t``.

    ``fault="flip_Bcal"`` flips the sign of the leading entry of the damping
    matrix; it exists only so that the verification suite can be mutation tested.
    """
    if not (0.0 < t <= 1.0):
        raise DomainError(f"t={t!r} must lie in (0, 1]")
    a = 2.0 - t
    q = qtt(t)
    B0 = np.diag([a, a, a, a, 1.0])
    B1 = np.diag([t, -a, a * q, a * q, 0.0])
    Bcal = np.diag([2.0, a / 2, a / 2, a / 2, 0.5])
    Bcal[I4, I1] = 0.5
    if fault == "flip_Bcal":
        Bcal[I0, I0] = -Bcal[I0, I0]
    c = angular_damping(t)
    Ccal = np.diag([1.0, 0.0, c, c, 0.0])
    Ccal[I4, I0] = 0.5 * np.sqrt(t)
    P = np.diag([0.0, 1.0, 1.0, 1.0, 1.0])
    return OperatorSet(t, B0, B1, Bcal, Ccal, P)


def boundary_symbol(t: float, which: str, chart: RadialChart | None = None) -> np.ndarray:
    """Principal symbol on the inner boundary (``"minus"``) or the outer boundary (``"plus"``).

    Both are built from the definition ``n_0 B0 + n_1 (chi rho/m) B1`` with the
    conormals ``-d rho`` at ``rho = 0`` and ``-dt + m rho0^m/rho^(m+1) d rho`` on
    ``t = 2 - (rho0/rho)^m``, where the cutoff equals one.
    """
    chart = chart or RadialChart()
    ops = operator_set(t)
    if which in ("minus", "Gamma-", "-"):
        rho = 0.0
        return -(rho / chart.m) * ops.B1
    if which in ("plus", "Gamma+", "+"):
        if not (0.0 < t < 1.0):
            raise DomainError("the outer boundary exists for t in (0, 1)")
        rho = chart.rho0 / (2.0 - t) ** (1.0 / chart.m)
        n0 = -1.0
        n1 = chart.m * chart.rho0**chart.m / rho ** (chart.m + 1)
        chi = float(cutoff_chi(rho, chart))
        return n0 * ops.B0 + n1 * (chi * rho / chart.m) * ops.B1
    raise ValidationError(f"unknown boundary {which!r}", "which")


# ---------------------------------------------------------------- sources

def _u_from_v(V: np.ndarray, t: float):
    """Inverse variable change; ``V`` has fiber axis 1 (shape ``(N, 5, ...)``)."""
    st = np.sqrt(t)
    # from V0 = U0 - U1/sqrt(t) and V1 = 2 U1 + (2-t) sqrt(t) V0
    U0 = V[:, I1] / (2.0 * st) + 0.5 * t * V[:, I0]
    U1 = 0.5 * (V[:, I1] - (2.0 - t) * st * V[:, I0])
    p = ptt(t)
    Uang = V[:, ITH:IPH + 1] / p
    return U0, U1, Uang, V[:, I4]


_R_FLOOR = 1e-30


def _source_nodes(values: np.ndarray, t: float, r: np.ndarray, theta: float, phi: float,
                  V: np.ndarray) -> np.ndarray:
    """Source ``f`` for fiber data ``V`` of shape ``(N, 5, n)`` at radii ``r`` (shape ``(n,)``).

    With ``w = r t (2 - t)`` (the reciprocal conformal factor) the source is
    ``a~^{mu nu} d_mu(w u^I) d_nu(w u^J) / w^3``; expanding the product gives
    the gradient-gradient, mixed and undifferentiated groups. Radii with
    ``|r| < 1e-30`` return zero, the limit of the source there.
    """
    return source_from_u(values, t, r, theta, phi, *_u_from_v(np.asarray(V, dtype=float), t))


def source_from_u(values: np.ndarray, t: float, r: np.ndarray, theta: float, phi: float,
                  U0: np.ndarray, U1: np.ndarray, Uang: np.ndarray, U4: np.ndarray) -> np.ndarray:
    """Source from ``U0 = t d_t u``, ``U1 = sqrt(t) r d_r u``, frame angular derivatives
    ``sqrt(t) grad u`` (shape ``(N, 2, n)``) and ``U4 = sqrt(t) u``."""
    r = np.asarray(r, dtype=float)
    out = np.zeros((values.shape[0],) + r.shape)
    live = np.abs(r) >= _R_FLOOR
    if not np.any(live) or not np.any(values):
        return out
    rl = r[live]
    U0, U1, Uang, U4 = U0[..., live], U1[..., live], Uang[..., live], U4[..., live]
    st = np.sqrt(t)
    a = 2.0 - t
    n_fields = values.shape[0]
    D = np.empty((n_fields, 4, rl.size))
    D[:, 0] = rl * a * U0 + 2.0 * rl * (1.0 - t) * U4 / st
    D[:, 1] = st * a * (U1 + U4)
    D[:, 2:] = rl * st * a * Uang
    at = _atilde_unchecked(values, t, rl, theta, phi)  # (n, K, I, J, 4, 4)
    # coordinate phi components to orthonormal frame
    s = np.sin(theta)
    at = at.copy()
    at[..., 3, :] *= s
    at[..., :, 3] *= s
    w = rl * t * a
    out[:, live] = np.einsum("nkijab,ian,jbn->kn", at, D, D, optimize=True) / w**3
    return out


def source_f(coeffs: CartesianCoefficients, t: float, r: float, p: AngularPoint,
             V: np.ndarray) -> np.ndarray:
    """Nonlinear source ``f^K`` at one point from the fiber state ``V`` of shape ``(N, 5)``."""
    if not (0.0 < t <= 1.0) or not r > 0:
        raise DomainError("source needs t in (0, 1] and r > 0")
    if p.is_pole:
        raise DomainError("source evaluation needs sin(theta) != 0")
    V = np.asarray(V, dtype=float)
    return _source_nodes(coeffs.values, t, np.array([r]), p.theta, p.phi, V[..., None])[:, 0]


def fiber_source(f: np.ndarray, t: float) -> np.ndarray:
    """``F = (-f, -(2-t) sqrt(t) f, 0, 0, 0)``; ``f`` has shape ``(N, ...)``."""
    out = np.zeros((f.shape[0], FIBER_DIM) + f.shape[1:])
    out[:, I0] = -f
    out[:, I1] = -(2.0 - t) * np.sqrt(t) * f
    return out


def effective_radius(rho, chart: RadialChart):
    rho = np.asarray(rho, dtype=float)
    return cutoff_chi(rho, chart) * rho**chart.m


def source_extended(coeffs: CartesianCoefficients, chart: RadialChart, t: float, rho,
                    p: AngularPoint, V: np.ndarray):
    """Split source of the extended system.

    Returns ``(Qpart, Gpart)`` with ``Qpart = -2 bbar chi rho^m V0 V0`` and
    ``Gpart = F - Qpart e0 / t``; every occurrence of ``rho^m`` in ``F`` is
    replaced by ``chi(rho) rho^m``. Works on a single fiber ``(N, 5)`` or on
    node arrays ``(N, 5, n)`` with ``rho`` of shape ``(n,)``.
    """
    V = np.asarray(V, dtype=float)
    single = V.ndim == 2
    if single:
        V = V[..., None]
    rho = np.atleast_1d(np.asarray(rho, dtype=float))
    reff = effective_radius(rho, chart)
    b = bbar_at(coeffs, p)
    Q = -2.0 * np.einsum("kij,in,jn->kn", b, V[:, I0], V[:, I0]) * reff
    F = fiber_source(_source_nodes(coeffs.values, t, reff, p.theta, p.phi, V), t)
    G = F.copy()
    G[:, I0] -= Q / t
    if single:
        return Q[:, 0], G[..., 0]
    return Q, G


# ---------------------------------------------------------------- identity suite

@dataclass
class IdentityResult:
    name: str
    passed: bool
    max_violation: float
    detail: str = ""


def _sym_part(a):
    return 0.5 * (a + a.T)


def _min_eig(a) -> float:
    return float(np.linalg.eigvalsh(_sym_part(a)).min())


def bcal_b0_sharp_constant(t: float) -> float:
    """Smallest ``c`` with ``h(Y, B0 Y) <= c h(Y, Bcal Y)``: ``1/(1/2 - 1/(4 sqrt(2-t)))``."""
    return 1.0 / (0.5 - 0.25 / np.sqrt(2.0 - t))


def identity_suite(n_vectors: int = 200, t_values=None, n_fields: int = 2, seed: int = 0,
                   tol: float = 1e-12, fault: str | None = None,
                   kappa_nu_samples=None, include_sharp: bool = True) -> list[IdentityResult]:
    """Check the algebraic identities of the operators on random fiber vectors.

    Statements are checked exactly as formulated; ``*_sharp`` entries check the
    best constants derived from the matrices themselves.
    """
    rng = np.random.default_rng(seed)
    if t_values is None:
        t_values = np.linspace(0.02, 1.0, 50)
    if kappa_nu_samples is None:
        kr = np.random.default_rng(seed + 1)
        kappa_nu_samples = []
        while len(kappa_nu_samples) < 20:
            k, n = kr.uniform(0, 0.5, 2)
            if k + n <= 0.5:
                kappa_nu_samples.append((float(k), float(n)))

    worst: dict[str, float] = {}
    notes: dict[str, str] = {}

    def record(name, viol, note=""):
        if viol > worst.get(name, -np.inf):
            worst[name] = float(viol)
            if note:
                notes[name] = note

    Y = rng.standard_normal((n_vectors, FIBER_DIM))
    for t in t_values:
        t = float(t)
        ops = operator_set(t, fault=fault)
        P, B0, B1, Bc = ops.P, ops.B0, ops.B1, ops.Bcal
        eta = rng.standard_normal(2)
        Bs = ops.Bsigma(eta)
        record("P_idempotent", np.abs(P @ P - P).max())
        record("P_symmetric", np.abs(P - P.T).max())
        record("B0_P_commute", np.abs(B0 @ P - P @ B0).max())
        record("B1_P_commute", np.abs(B1 @ P - P @ B1).max())
        record("Bcal_P_commute", np.abs(Bc @ P - P @ Bc).max())
        record("B0_symmetric", np.abs(B0 - B0.T).max())
        record("B1_symmetric", np.abs(B1 - B1.T).max())
        record("Bsigma_symmetric", np.abs(Bs - Bs.T).max())
        hYY = np.einsum("ni,ni->n", Y, Y)
        hB0 = np.einsum("ni,ij,nj->n", Y, B0, Y)
        hBc = np.einsum("ni,ij,nj->n", Y, Bc, Y)
        scale = np.maximum(1.0, hYY)
        record("B0_lower_bound", np.max((hYY - hB0) / scale))
        v = (hB0 - 2.0 * hBc) / scale
        i = int(np.argmax(v))
        record("B0Bcbnd", v[i], f"t={t:.4g}, Y={np.round(Y[i], 4).tolist()}")
        # exact worst case over all unit vectors
        record("B0_lower_bound_worst_case", -_min_eig(B0 - np.eye(FIBER_DIM)))
        record("B0Bcbnd_worst_case", -_min_eig(2.0 * Bc - B0), f"t={t:.4g}")
        if include_sharp:
            c = bcal_b0_sharp_constant(t)
            record("B0Bcbnd_sharp", np.max((hB0 - c * hBc) / scale) - 1e-15)
            record("B0Bcbnd_sharp_worst_case", -_min_eig(c * Bc - B0) - 1e-13)

        blk = ops.blocks(n_fields, 0.0, 0.0)
        dim = blk["A0"].shape[0]
        Z = rng.standard_normal((n_vectors, dim))
        A0, A1, Pi = blk["A0"], blk["A1"], blk["Pi"]
        As = blk["Asigma"](eta)
        record("Pi_idempotent", np.abs(Pi @ Pi - Pi).max())
        record("Pi_symmetric", np.abs(Pi - Pi.T).max())
        record("A0_Pi_commute", np.abs(A0 @ Pi - Pi @ A0).max())
        record("Pi_A1", max(np.abs(Pi @ A1 - A1).max(), np.abs(A1 @ Pi - A1).max()))
        record("Pi_Asigma", max(np.abs(Pi @ As - As).max(), np.abs(As @ Pi - As).max()))
        Pperp = np.eye(dim) - Pi
        record("Piperp_annihilates",
               max(np.abs(Pperp @ A1).max(), np.abs(A1 @ Pperp).max(),
                   np.abs(Pperp @ As).max(), np.abs(As @ Pperp).max()))
        record("A_symmetric", max(np.abs(A0 - A0.T).max(), np.abs(A1 - A1.T).max(),
                                  np.abs(As - As.T).max()))
        zz = np.einsum("ni,ni->n", Z, Z)
        zA0 = np.einsum("ni,ij,nj->n", Z, A0, Z)
        zscale = np.maximum(1.0, zz)
        record("gammabnd", np.max((zz - zA0) / zscale))
        record("gammabnd_worst_case", -_min_eig(A0 - np.eye(dim)))
        lam_min = 0.5 - 0.25 / np.sqrt(2.0 - t)
        for k, n in kappa_nu_samples:
            b = ops.blocks(n_fields, k, n)
            record("Acal_Pi_commute", np.abs(b["Acal"] @ Pi - Pi @ b["Acal"]).max())
            zAc = np.einsum("ni,ij,nj->n", Z, b["Acal"], Z)
            v = (k * zA0 - zAc) / zscale
            j = int(np.argmax(v))
            record("kappabnd", v[j], f"t={t:.4g}, kappa={k:.4f}, nu={n:.4f}")
            worst_case = -_min_eig(b["Acal"] - k * A0)
            record("kappabnd_worst_case", worst_case, f"t={t:.4g}, kappa={k:.4f}, nu={n:.4f}")
            if include_sharp and k + n <= lam_min:
                record("kappabnd_sharp", max(float(np.max(v)), worst_case - 1e-13))

    results = []
    for name, viol in worst.items():
        results.append(IdentityResult(name, bool(viol <= tol), viol, notes.get(name, "")))

    # boundary symbols: negative semidefinite on a t-grid
    chart = RadialChart()
    tg = np.linspace(0.0, 1.0, 102)[1:-1]
    emax_plus = max(np.linalg.eigvalsh(_sym_part(boundary_symbol(t, "plus", chart))).max() for t in tg)
    emax_minus = max(np.linalg.eigvalsh(_sym_part(boundary_symbol(t, "minus", chart))).max() for t in tg)
    results.append(IdentityResult("wspacelike_minus", bool(emax_minus <= tol), float(emax_minus)))
    results.append(IdentityResult("wspacelike_plus", bool(emax_plus <= tol), float(emax_plus)))
    return results


def principal_derivative_sup(chart: RadialChart, n_rho: int = 1024) -> float:
    """``sup |d_rho((chi rho/m) B1)|`` over the grid and ``t in [0, 1]`` (operator 2-norm)."""
    rho = chart.nodes(n_rho)
    g = cutoff_chi(rho, chart) * rho / chart.m
    h = chart.period / n_rho
    dg = (np.roll(g, -1) - np.roll(g, 1)) / (2 * h)
    b1max = max(np.abs(np.diag(operator_set(t).B1)).max() for t in np.linspace(1e-3, 1, 50))
    return float(np.abs(dg).max() * b1max)
