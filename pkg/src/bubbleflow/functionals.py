"""Scalar functionals: Dirichlet energy, critical mass, K0, deficit, J, I and dissipation.

Every functional accepts a planar ModalField or a ZonalSphereField.  On the
sphere the Dirichlet energy is replaced by the conformal energy
int |grad v|^2 + n(n-2)/4 v^2 and Delta by Delta_S - n(n-2)/4, which is what
the stereographic dictionary turns the planar quantities into.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Dimension, ModalField, ZonalSphereField
from .grid import (
    AngularGrid,
    conformal_energy,
    dirichlet_form,
    gegenbauer_table,
    laplacian,
    make_angular_grid,
    sphere_abs_power,
    synthesize,
    tensor_abs_power,
    tensor_integral,
)


class _Planar:
    def __init__(self, u: ModalField, ang: AngularGrid | None = None):
        self.dim = u.dim
        self.field = u
        self.ang = ang or make_angular_grid(u.dim.n, u.lmax)

    def values(self, f: ModalField) -> np.ndarray:
        return synthesize(f, self.ang)

    def integrate(self, vals: np.ndarray) -> float:
        return tensor_integral(vals, self.field.grid, self.ang, self.dim)

    def energy(self, f, g=None) -> float:
        return dirichlet_form(f, f if g is None else g)

    def abs_power(self, vals: np.ndarray, q: float) -> float:
        return tensor_abs_power(vals, self.field.grid, self.ang, self.dim, q)

    def operator(self, f: ModalField) -> np.ndarray:
        return synthesize(laplacian(f), self.ang)


class _Sphere:
    def __init__(self, v: ZonalSphereField):
        self.dim = v.dim
        self.field = v
        self.shift = float(v.dim.sphere_shift)

    def values(self, f: ZonalSphereField) -> np.ndarray:
        return f.samples

    def integrate(self, vals: np.ndarray) -> float:
        return self.field.grid.integrate(vals)

    def energy(self, f, g=None) -> float:
        return conformal_energy(f, g)

    def abs_power(self, vals: np.ndarray, q: float) -> float:
        return sphere_abs_power(vals, self.field.grid, q)

    def operator(self, f: ZonalSphereField) -> np.ndarray:
        return f.grid.laplacian_matrix @ f.samples - self.shift * f.samples


def _evaluator(u, ang=None):
    if isinstance(u, ModalField):
        return _Planar(u, ang)
    if isinstance(u, ZonalSphereField):
        return _Sphere(u)
    raise TypeError(f"unsupported field type {type(u).__name__}")


def _positive_values(ev, u) -> np.ndarray:
    vals = ev.values(u)
    if not np.all(np.isfinite(vals)):
        raise ValueError("field has non-finite values")
    if np.any(vals <= 0):
        raise ValueError("field must be positive on the grid")
    return vals


def dirichlet(u, ang=None) -> float:
    return _evaluator(u, ang).energy(u)


def critical_mass(u, ang=None) -> float:
    """int u^{2*} (u must be positive)."""
    ev = _evaluator(u, ang)
    return ev.integrate(_positive_values(ev, u) ** float(u.dim.two_star))


def lp_norm(u, q: float, ang=None) -> float:
    ev = _evaluator(u, ang)
    return ev.integrate(np.abs(ev.values(u)) ** q) ** (1 / q)


def k0(u, ang=None) -> float:
    """K0(u) = int |grad u|^2 / int u^{2*}."""
    ev = _evaluator(u, ang)
    vals = _positive_values(ev, u)
    return ev.energy(u) / ev.integrate(vals ** float(u.dim.two_star))


def deficit(u, K=None, ang=None) -> float:
    """delta(u) = || K u^p - K0(u) u^p ||_{L^{2n/(n+2)}}.

    Without ``K`` the curvature is -Delta u / u^p and the residual
    Delta u + K0 u^p is integrated directly.  With ``K`` (a ModalField on the
    same grid) the residual is (K - K0) u^p with K0 = int K u^{2*} / int u^{2*}.
    The exponent 2n/(n+2) < 2 puts a kink at sign changes of the residual;
    the quadrature splits there (see ``tensor_abs_power``).
    """
    ev = _evaluator(u, ang)
    vals = _positive_values(ev, u)
    dim = u.dim
    p, ts, q = float(dim.p), float(dim.two_star), float(dim.dual_exponent)
    mass = ev.integrate(vals**ts)
    up = vals**p
    if K is None:
        kz = ev.energy(u) / mass
        lap = laplacian(u) if isinstance(u, ModalField) else None
        res = ev.operator(u) + kz * up
    else:
        kv = ev.values(K)
        kz = ev.integrate(kv * vals**ts) / mass
        res = (kv - kz) * up
    if not np.all(np.isfinite(res)):
        raise ValueError("deficit integrand is not finite")
    if isinstance(ev, _Planar) and u.lmax > 0:

        def column(t):
            uc = _column(u, t)
            if K is None:
                return _column(lap, t) + kz * np.abs(uc) ** p
            return (_column(K, t) - kz) * np.abs(uc) ** p

        return tensor_abs_power(res, u.grid, ev.ang, dim, q, column) ** (1 / q)
    return ev.abs_power(res, q) ** (1 / q)


def _column(f: ModalField, t) -> np.ndarray:
    """Values on the radial nodes along directions with axis cosines ``t``, shape (N, len(t))."""
    return f.profiles.T @ gegenbauer_table((f.dim.n - 2) / 2, np.asarray(t, dtype=float), f.lmax)


def flow_energy_J(w, ang=None) -> float:
    """J[w] = int |grad w|^2 / 2 - (1/(1-m)) int w^{2*} / 2*."""
    ev = _evaluator(w, ang)
    vals = _positive_values(ev, w)
    dim = w.dim
    c, ts = float(dim.c_flow), float(dim.two_star)
    return 0.5 * ev.energy(w) - c / ts * ev.integrate(vals**ts)


def stationary_energy(dim: Dimension) -> float:
    """J on the stationary family: S^n kappa^{-(n-2)/2} (1/2 - 1/2*) with kappa = (n+2)/4."""
    c = float(dim.c_flow)
    return dim.sobolev_power * c ** (-(dim.n - 2) / 2) * (0.5 - 1 / float(dim.two_star))


def _excess_power(x: np.ndarray, q: float) -> np.ndarray:
    # (1+x)^q - 1 - q x without cancellation for small x
    return np.expm1(q * np.log1p(x)) - q * x


def energy_gap_I(w, reference, ang=None) -> float:
    """I = J[w] - J[W] for a stationary reference W, expanded around W.

    Uses the exact rewriting J[W + rho] - J[W] = 1/2 D(rho) + (D(W, rho) -
    c int W^p rho) - c/2* int W^{2*} g(rho / W), g(x) = (1+x)^{2*} - 1 - 2* x,
    which keeps relative precision when rho is small.
    """
    if ang is None and isinstance(w, ModalField):
        ang = make_angular_grid(w.dim.n, max(w.lmax, reference.lmax))
    ev = _evaluator(w, ang)
    wv = _positive_values(ev, w)
    Wv = _positive_values(ev, reference)
    rho = w - reference
    rv = wv - Wv
    dim = w.dim
    c, ts, p = float(dim.c_flow), float(dim.two_star), float(dim.p)
    linear = ev.energy(reference, rho) - c * ev.integrate(Wv**p * rv)
    quad = 0.5 * ev.energy(rho)
    higher = ev.integrate(Wv**ts * _excess_power(rv / Wv, ts))
    return quad + linear - c / ts * higher


def dissipation(w, ang=None) -> float:
    """(1/p) int (Delta w / w^p + 1/(1-m))^2 w^{2*}, the decay rate of J along the flow."""
    ev = _evaluator(w, ang)
    wv = _positive_values(ev, w)
    dim = w.dim
    c, ts, p = float(dim.c_flow), float(dim.two_star), float(dim.p)
    g = ev.operator(w) / wv**p + c
    return ev.integrate(g * g * wv**ts) / p


def dissipation_bound(w, ang=None) -> tuple[float, float]:
    """Both sides of delta^2 <= (int w^{2*})^{2/n} int (Delta w / w^p + c)^2 w^{2*}."""
    ev = _evaluator(w, ang)
    wv = _positive_values(ev, w)
    dim = w.dim
    ts = float(dim.two_star)
    mass = ev.integrate(wv**ts)
    d = deficit(w, ang=ang)
    return d * d, mass ** (2 / dim.n) * float(dim.p) * dissipation(w, ang)


@dataclass(frozen=True)
class FunctionalReport:
    dirichlet: float
    mass: float
    K0: float
    delta: float
    J: float
    I: float | None = None


def functional_report(u, K=None, reference=None, ang=None) -> FunctionalReport:
    d = dirichlet(u, ang)
    m = critical_mass(u, ang)
    return FunctionalReport(
        dirichlet=d,
        mass=m,
        K0=d / m,
        delta=deficit(u, K, ang),
        J=flow_energy_J(u, ang),
        I=None if reference is None else energy_gap_I(u, reference, ang),
    )
