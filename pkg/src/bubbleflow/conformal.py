"""Stereographic dictionary between radial fields on R^n and zonal fields on S^n.

Convention: F(x) = (2x/(1+|x|^2), (|x|^2-1)/(1+|x|^2)) and the polar angle is
measured from F(infinity), so cos(theta) = (r^2-1)/(r^2+1), r = cot(theta/2),
and the origin sits at theta = pi.  With Omega = 2/(1+r^2),

    u(x) = Omega^{(n-2)/2} v(F(x)),
    Delta u = Omega^{(n+2)/2} (Delta_S v - n(n-2)/4 v),
    u^{2*} dx = v^{2*} dvol_S.

Zonal fields about the polar axis correspond to radial planar fields.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.interpolate import BarycentricInterpolator

from .bubble import bubble_rt
from .core import Dimension, ModalField, ZonalSphereField
from .grid import RadialGrid, SphereGrid, make_radial_grid, make_sphere_grid


@dataclass(frozen=True)
class StereographicMap:
    dim: Dimension

    def forward(self, x) -> np.ndarray:
        """F(x) in R^{n+1} for points x with trailing dimension n."""
        x = np.asarray(x, dtype=float)
        s = np.sum(x * x, axis=-1, keepdims=True)
        return np.concatenate([2 * x / (1 + s), (s - 1) / (1 + s)], axis=-1)

    def inverse(self, y) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return y[..., :-1] / (1 - y[..., -1:])

    @staticmethod
    def conformal_factor(r):
        return 2 / (1 + np.asarray(r) ** 2)

    @staticmethod
    def cos_theta(r):
        r = np.asarray(r, dtype=float)
        return (r * r - 1) / (r * r + 1)

    @staticmethod
    def radius(cos_theta):
        x = np.asarray(cos_theta, dtype=float)
        return np.sqrt((1 + x) / (1 - x))


def _weight_exponent(dim: Dimension) -> float:
    return (dim.n - 2) / 2


def _check_radial(u: ModalField, tol: float):
    if u.lmax == 0:
        return
    top = float(np.max(np.abs(u.profiles[0]))) or 1.0
    if np.max(np.abs(u.profiles[1:])) > tol * top:
        raise ValueError("field is not radial: it is not zonal about the polar axis")


def plane_to_sphere(u: ModalField, sphere: SphereGrid | None = None, tol: float = 1e-8) -> ZonalSphereField:
    """v(F(x)) = Omega^{-(n-2)/2} u(x), resampled at the sphere nodes.

    Interpolation runs panel by panel in the radial map variable on the smooth
    product u * Omega^{-(n-2)/2}; raises when the last Legendre coefficient of
    some panel exceeds ``tol`` relative to the field (pole region unresolved).
    """
    dim = u.dim
    sphere = sphere or make_sphere_grid(dim.n)
    if sphere.n != dim.n:
        raise ValueError("sphere grid has the wrong dimension")
    _check_radial(u, tol)
    g = u.grid
    beta = _weight_exponent(dim)
    vals = u.profiles[0] * StereographicMap.conformal_factor(g.r) ** (-beta)
    blocks = vals.reshape(g.panels, g.nodes_per_panel)
    xib = np.asarray(g.xi).reshape(g.panels, g.nodes_per_panel)
    scale = float(np.max(np.abs(vals))) or 1.0
    _check_panels(xib, blocks, scale, tol)

    r = StereographicMap.radius(sphere.x)
    xi = r / (g.map_scale + r)
    panel = g.panel_of(xi)
    out = np.empty(sphere.size)
    for k in np.unique(panel):
        sel = panel == k
        out[sel] = BarycentricInterpolator(xib[k], blocks[k])(xi[sel])
    return ZonalSphereField(dim, sphere, out)


def _check_panels(xib, blocks, scale, tol):
    # trailing Legendre coefficient per panel as a resolution indicator
    m = xib.shape[1]
    x, _ = np.polynomial.legendre.leggauss(m)
    V = np.polynomial.legendre.legvander(x, m - 1)
    coef = np.linalg.solve(V, blocks.T)
    tail = np.max(np.abs(coef[-1]))
    if tail > tol * scale:
        raise ValueError(f"field not resolved near the poles (panel tail {tail / scale:.2e})")


def sphere_to_plane(v: ZonalSphereField, grid: RadialGrid | None = None) -> ModalField:
    """u(x) = Omega^{(n-2)/2} v(F(x)) on the radial grid, by zonal harmonic synthesis."""
    dim = v.dim
    grid = grid or make_radial_grid()
    x = StereographicMap.cos_theta(grid.r)
    vals = v.grid.interpolate(v.samples, x)
    beta = _weight_exponent(dim)
    return ModalField.radial(dim, grid, StereographicMap.conformal_factor(grid.r) ** beta * vals)


def sphere_constant(dim: Dimension) -> float:
    """(n(n-2)/(n+2))^{(n-2)/4}, the constant stationary state on S^n."""
    n = dim.n
    return (n * (n - 2) / (n + 2)) ** ((n - 2) / 4)


def stationary_on_sphere(dim: Dimension, sphere: SphereGrid | None = None, lam: float = 1.0) -> ZonalSphereField:
    """The stationary profile v_{(n+2)/4}[0, lam] seen on the sphere (closed form)."""
    sphere = sphere or make_sphere_grid(dim.n)
    kappa = float(dim.c_flow)
    beta = _weight_exponent(dim)
    # Omega^{-beta} v_kappa[0, lam] simplifies to a power of a linear function of cos(theta)
    base = 1 - sphere.x + lam * lam * (1 + sphere.x)
    vals = bubble_rt(dim, 0.0, 0.0, kappa) * lam**beta * base ** (-beta)
    return ZonalSphereField(dim, sphere, vals)
