"""The bubble family v_kappa[z, lambda], its parameter derivatives and test scenarios."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import BubbleParams, Dimension, ModalField
from .grid import (
    AngularGrid,
    RadialGrid,
    analyze,
    dirichlet_form,
    laplacian,
    make_angular_grid,
    make_radial_grid,
    radial_integral,
    synthesize,
    tensor_points,
)


def bubble_constant(dim: Dimension, kappa: float) -> float:
    """Peak value (n(n-2)/kappa)^{(n-2)/4} of the centered unit-scale bubble."""
    n = dim.n
    return (n * (n - 2) / kappa) ** ((n - 2) / 4)


def _quadratic(r, t, z):
    # |x - z e|^2 with x = r (..., t)
    return r * r - 2 * r * z * t + z * z


def bubble_rt(dim: Dimension, r, t, kappa=1.0, z=0.0, lam=1.0, amplitude=1.0):
    """Bubble values at radius ``r`` and axis cosine ``t`` (center on the axis)."""
    beta = (dim.n - 2) / 2
    q = _quadratic(r, t, z)
    return amplitude * bubble_constant(dim, kappa) * lam**beta * (1 + lam * lam * q) ** (-beta)


def bubble_dlam_rt(dim: Dimension, r, t, kappa=1.0, z=0.0, lam=1.0):
    """d/d lambda of the unit-amplitude bubble."""
    beta = (dim.n - 2) / 2
    q = _quadratic(r, t, z)
    v = bubble_rt(dim, r, t, kappa, z, lam)
    return v * beta * (1 - lam * lam * q) / (lam * (1 + lam * lam * q))


def bubble_dz_rt(dim: Dimension, r, t, kappa=1.0, z=0.0, lam=1.0):
    """d/dz (axial center) of the unit-amplitude bubble."""
    beta = (dim.n - 2) / 2
    q = _quadratic(r, t, z)
    v = bubble_rt(dim, r, t, kappa, z, lam)
    return v * 2 * beta * lam * lam * (r * t - z) / (1 + lam * lam * q)


def eval_bubble(params: BubbleParams, dim: Dimension, where, lmax: int | None = None,
                angular_size: int | None = None):
    """Evaluate ``amplitude * v_kappa[z, lambda]``.

    ``where`` is either an array of points with trailing dimension n (returns
    values) or a RadialGrid (returns a ModalField; the center must lie on the
    symmetry axis).
    """
    if isinstance(where, RadialGrid):
        z = params.axial_center(dim)
        ang = _angular(dim, z, lmax, angular_size, params.scale)
        r, t = tensor_points(where, ang)
        vals = bubble_rt(dim, r, t, params.kappa, z, params.scale, params.amplitude)
        return ModalField(dim, where, analyze(vals, ang))
    x = np.asarray(where, dtype=float)
    if x.shape[-1] != dim.n:
        raise ValueError(f"points must have {dim.n} coordinates")
    zc = params.center_vector(dim)
    q = np.sum((x - zc) ** 2, axis=-1)
    beta = (dim.n - 2) / 2
    lam = params.scale
    return params.amplitude * bubble_constant(dim, params.kappa) * lam**beta * (1 + lam * lam * q) ** (-beta)


def _angular(dim, z, lmax, size, lam=1.0) -> AngularGrid:
    if lmax is None:
        lmax, auto = offset_resolution(z * lam)
        size = size or auto
    return make_angular_grid(dim.n, lmax, size)


@dataclass(frozen=True)
class BubbleBasis:
    """The bubble U = v_1[z, lambda] and its tangent fields V = dU/dlambda, W = dU/dz."""

    U: ModalField
    V: ModalField
    W: ModalField
    params: BubbleParams


def bubble_basis(dim: Dimension, grid: RadialGrid, z: float = 0.0, lam: float = 1.0,
                 lmax: int = 2, angular_size: int | None = None) -> BubbleBasis:
    lmax = max(lmax, 1)
    ang = make_angular_grid(dim.n, lmax, angular_size)
    r, t = tensor_points(grid, ang)
    fields = [
        ModalField(dim, grid, analyze(f(dim, r, t, 1.0, z, lam), ang))
        for f in (bubble_rt, bubble_dlam_rt, bubble_dz_rt)
    ]
    return BubbleBasis(*fields, BubbleParams(1.0, z, lam))


@dataclass(frozen=True)
class BubbleIdentities:
    dirichlet: float
    mass: float
    sobolev: float
    mismatch: float
    resolved: bool

    @property
    def ratio(self) -> float:
        return self.dirichlet / self.mass


def bubble_identities(dim: Dimension, kappa: float = 1.0, grid: RadialGrid | None = None,
                      tol: float = 1e-8) -> BubbleIdentities:
    """Dirichlet energy and critical mass of v_kappa with the Sobolev constant they imply.

    The two identities ``int |grad v|^2 = S^n / kappa^{(n-2)/2}`` and
    ``int v^{2*} = S^n / kappa^{n/2}`` are compared; ``resolved`` is False when
    they disagree by more than ``tol`` (under-resolved grid).
    """
    grid = grid or make_radial_grid()
    n = dim.n
    v = bubble_rt(dim, grid.r, 0.0, kappa)
    u = ModalField.radial(dim, grid, v)
    dirichlet = dirichlet_form(u, u)
    mass = radial_integral(v ** float(dim.two_star), grid, dim)
    s_from_energy = kappa ** ((n - 2) / 2) * dirichlet
    s_from_mass = kappa ** (n / 2) * mass
    mismatch = abs(s_from_energy / s_from_mass - 1)
    return BubbleIdentities(dirichlet, mass, s_from_energy ** (1 / n), mismatch, mismatch <= tol)


def stationary_residual(dim: Dimension, kappa: float = 1.0, grid: RadialGrid | None = None) -> float:
    """Weighted L2 norm of Delta v_kappa + kappa v_kappa^p on the grid."""
    grid = grid or make_radial_grid()
    v = ModalField.radial(dim, grid, bubble_rt(dim, grid.r, 0.0, kappa))
    lap = laplacian(v).profiles[0]
    res = lap + kappa * v.profiles[0] ** float(dim.p)
    return float(np.sqrt(radial_integral(res * res, grid, dim)))


def cap_profile(grid: RadialGrid) -> np.ndarray:
    """The C^2 radial cap (1 - r^2)^3 on r < 1, zero outside."""
    r = grid.r
    return np.where(r < 1, (1 - r * r) ** 3, 0.0)


def cap_field(dim: Dimension, grid: RadialGrid) -> ModalField:
    return ModalField.radial(dim, grid, cap_profile(grid))


@dataclass(frozen=True)
class PerturbedBubble:
    u: ModalField
    K: ModalField
    eps: float


def make_perturbed_bubble(dim: Dimension, eps: float, phi: ModalField | None = None,
                          grid: RadialGrid | None = None) -> PerturbedBubble:
    """u = v_1 + eps*phi with the curvature K making -Delta u = K u^p hold on the grid."""
    if eps < 0:
        raise ValueError("eps must be non-negative")
    if phi is None:
        phi = cap_field(dim, grid or make_radial_grid())
    grid = phi.grid
    lmax = phi.lmax
    v1 = ModalField.radial(dim, grid, bubble_rt(dim, grid.r, 0.0)).with_lmax(lmax)
    u = v1 + eps * phi
    ang = make_angular_grid(dim.n, lmax)
    uv = synthesize(u, ang)
    if np.any(uv <= 0):
        raise ValueError("perturbed bubble is not positive on the grid")
    p = float(dim.p)
    v1v = synthesize(v1, ang)
    lap_phi = synthesize(laplacian(phi), ang)
    kv = (v1v**p - eps * lap_phi) / uv**p
    K = ModalField(dim, grid, analyze(kv, ang, lmax))
    return PerturbedBubble(u, K, eps)


@dataclass(frozen=True)
class MultiBubble:
    u: ModalField
    K: ModalField
    params: tuple
    angular: AngularGrid


def multibubble_resolution(separation: float, lam_min: float = 1.0, tol_digits: float = 12.0):
    """Grid and degree cutoff resolving two bubbles at +-separation/2 on the axis.

    Zonal coefficients of an off-center bubble at distance b (in bubble units)
    decay like exp(-l/b); the map scale is put at the bubble centers.
    """
    b = max(lam_min * separation / 2, 0.5)
    lmax = int(np.ceil(2.3 * tol_digits * b)) + 8
    panels = 32 * max(1, int(np.ceil(b / 8)))
    grid = make_radial_grid(max(separation / 2, 1.0), panels, 16)
    return grid, lmax, lmax + max(lmax // 4, 16)


def make_multibubble(dim: Dimension, params: list[BubbleParams], grid: RadialGrid,
                     lmax: int, angular_size: int | None = None) -> MultiBubble:
    """u = sum v_1[z_i, lambda_i] and K = sum v_i^p / (sum v_i)^p, so -Delta u = K u^p."""
    if not params:
        raise ValueError("need at least one bubble")
    centers = [bp.axial_center(dim) for bp in params]
    lam_min = min(bp.scale for bp in params)
    for i in range(len(centers)):
        for j in range(i):
            if abs(centers[i] - centers[j]) * lam_min < 1.0:
                raise ValueError("bubble centers overlap (separation below 1/lambda_min)")
    ang = make_angular_grid(dim.n, lmax, angular_size)
    r, t = tensor_points(grid, ang)
    parts = [bubble_rt(dim, r, t, 1.0, z, bp.scale) for z, bp in zip(centers, params)]
    u = sum(parts)
    p = float(dim.p)
    kv = sum(v**p for v in parts) / u**p
    return MultiBubble(
        ModalField(dim, grid, analyze(u, ang)),
        ModalField(dim, grid, analyze(kv, ang)),
        tuple(params),
        ang,
    )


def two_bubble_scenario(dim: Dimension, separation: float) -> MultiBubble:
    grid, lmax, size = multibubble_resolution(separation)
    params = [BubbleParams(1.0, -separation / 2, 1.0), BubbleParams(1.0, separation / 2, 1.0)]
    return make_multibubble(dim, params, grid, lmax, size)


def offset_resolution(offset: float, digits: float = 14.0) -> tuple[int, int]:
    """Degree cutoff and angular node count resolving a bubble at distance ``offset``
    (in units of its own width) from the origin.

    The zonal coefficients decay like rho^-l with rho = sqrt(1 + 1/b^2) + 1/b.
    """
    b = abs(offset)
    if b < 1e-12:
        return 0, 1
    rate = np.log(np.sqrt(1 + 1 / b**2) + 1 / b)
    lmax = int(np.ceil(digits * np.log(10) / rate))
    return lmax, lmax + max(lmax // 4, 16)
