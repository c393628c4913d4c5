"""Quadrature grids, differentiation operators and zonal transforms.

Radial direction: composite Gauss-Legendre panels in xi in (0, 1) mapped by
r = L xi / (1 - xi).  Polar direction on S^n and angular direction on S^{n-1}:
Gauss-Jacobi nodes in the cosine with the matching Gegenbauer harmonics.
"""

from __future__ import annotations

import warnings

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from numpy.polynomial import legendre
from scipy.integrate import IntegrationWarning, quad
from scipy.optimize import brentq
from scipy.special import beta as beta_fn
from scipy.special import binom, roots_jacobi, roots_legendre

from .core import Dimension, ModalField, ZonalSphereField


def _lagrange_diff_matrix(x: np.ndarray) -> np.ndarray:
    """Differentiation matrix of the interpolating polynomial through ``x``."""
    k = x.size
    diff = x[:, None] - x[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    d = (w[None, :] / w[:, None]) / diff
    np.fill_diagonal(d, 0.0)
    d[np.diag_indices(k)] = -d.sum(axis=1)
    return d


def _gauss(n: int, a: float):
    if a == 0:
        return roots_legendre(n)
    return roots_jacobi(n, a, a)


def gegenbauer_table(alpha: float, x: np.ndarray, kmax: int) -> np.ndarray:
    """Rows ``C_k^{(alpha)}(x) / sqrt(h_k)`` for k = 0..kmax.

    ``h_k`` is the mean of ``C_k^2`` under the weight ``(1 - x^2)^(alpha - 1/2)``,
    so rows have unit mean square on the sphere whose zonal harmonics they are.
    """
    x = np.asarray(x, dtype=float)
    out = np.empty((kmax + 1,) + x.shape)
    out[0] = 1.0
    if kmax >= 1:
        out[1] = 2 * alpha * x
    for k in range(1, kmax):
        out[k + 1] = (2 * (k + alpha) * x * out[k] - (k + 2 * alpha - 1) * out[k - 1]) / (k + 1)
    ks = np.arange(kmax + 1)
    h = binom(ks + 2 * alpha - 1, ks) * alpha / (ks + alpha)
    return out / np.sqrt(h).reshape((-1,) + (1,) * x.ndim)


@dataclass(frozen=True, eq=False)
class RadialGrid:
    """Mapped composite Gauss grid on (0, inf).

    ``weights`` integrate ``f(r) dr``; use :meth:`measure` for ``r^{n-1} dr``.
    ``diff_order`` is the per-panel polynomial degree of the derivative operator.
    """

    map_scale: float
    panels: int
    nodes_per_panel: int
    xi: np.ndarray
    r: np.ndarray
    weights: np.ndarray
    dxi_dr: np.ndarray
    panel_diff: np.ndarray

    @property
    def spec(self) -> tuple:
        return (float(self.map_scale), int(self.panels), int(self.nodes_per_panel))

    @property
    def size(self) -> int:
        return self.r.size

    @property
    def diff_order(self) -> int:
        return self.nodes_per_panel - 1

    def measure(self, n: int) -> np.ndarray:
        return self.weights * self.r ** (n - 1)

    def d_dr(self, f: np.ndarray) -> np.ndarray:
        """Radial derivative along the last axis, panel by panel."""
        f = np.asarray(f, dtype=float)
        shape = f.shape
        blocks = f.reshape(shape[:-1] + (self.panels, self.nodes_per_panel))
        dxi = blocks @ self.panel_diff.T
        return dxi.reshape(shape) * self.dxi_dr

    def refine(self) -> "RadialGrid":
        return make_radial_grid(self.map_scale, 2 * self.panels, self.nodes_per_panel)

    def rescaled(self, map_scale: float) -> "RadialGrid":
        return make_radial_grid(map_scale, self.panels, self.nodes_per_panel)

    def panel_of(self, xi: np.ndarray) -> np.ndarray:
        return np.clip((np.asarray(xi) * self.panels).astype(int), 0, self.panels - 1)


@lru_cache(maxsize=64)
def make_radial_grid(map_scale: float = 1.0, panels: int = 32, nodes_per_panel: int = 16) -> RadialGrid:
    if not map_scale > 0:
        raise ValueError("map scale must be positive")
    if panels < 1 or nodes_per_panel < 2:
        raise ValueError("need at least one panel with two nodes")
    x, w = roots_legendre(nodes_per_panel)
    h = 1.0 / panels
    left = np.arange(panels) * h
    xi = (left[:, None] + 0.5 * h * (x[None, :] + 1)).ravel()
    wxi = np.tile(0.5 * h * w, panels)
    drdxi = map_scale / (1 - xi) ** 2
    r = map_scale * xi / (1 - xi)
    d = _lagrange_diff_matrix(x) * (2.0 / h)
    arrays = [xi, r, wxi * drdxi, 1.0 / drdxi, d]
    for a in arrays:
        a.setflags(write=False)
    return RadialGrid(float(map_scale), int(panels), int(nodes_per_panel), *arrays)


@dataclass(frozen=True, eq=False)
class SphereGrid:
    """Polar-angle grid on S^n: Gauss-Jacobi nodes in cos(theta), theta ascending.

    ``weights`` integrate zonal functions over S^n (total = |S^n|).  ``basis``
    holds the orthonormal zonal harmonics Y_k at the nodes, k = 0..size-1.
    """

    n: int
    size: int
    x: np.ndarray
    theta: np.ndarray
    weights: np.ndarray
    basis: np.ndarray

    @property
    def spec(self) -> tuple:
        return (int(self.n), int(self.size))

    @property
    def eigenvalues(self) -> np.ndarray:
        """k(k+n-1) for each harmonic degree k."""
        k = np.arange(self.size)
        return k * (k + self.n - 1)

    def analyze(self, v: np.ndarray) -> np.ndarray:
        return self.basis @ (self.weights * v)

    def synthesize(self, coeffs: np.ndarray, x: np.ndarray | None = None) -> np.ndarray:
        if x is None:
            return coeffs @ self.basis
        return coeffs @ self.harmonics(x)

    def harmonics(self, x: np.ndarray) -> np.ndarray:
        y = gegenbauer_table((self.n - 1) / 2, x, self.size - 1)
        return y / np.sqrt(Dimension(self.n).big_sphere_area)

    def interpolate(self, v: np.ndarray, x: np.ndarray) -> np.ndarray:
        return self.synthesize(self.analyze(v), x)

    @property
    def laplacian_matrix(self) -> np.ndarray:
        return _sphere_laplacian_matrix(self.n, self.size)

    def integrate(self, f: np.ndarray) -> float:
        return float(np.dot(self.weights, f))


@lru_cache(maxsize=32)
def make_sphere_grid(n: int, size: int = 48) -> SphereGrid:
    dim = Dimension(n)
    a = (n - 2) / 2
    x, w = _gauss(size, a)
    order = np.argsort(-x)
    x, w = x[order], w[order]
    weights = w * dim.sphere_area
    basis = gegenbauer_table((n - 1) / 2, x, size - 1) / np.sqrt(dim.big_sphere_area)
    theta = np.arccos(x)
    for arr in (x, theta, weights, basis):
        arr.setflags(write=False)
    return SphereGrid(n, size, x, theta, weights, basis)


@lru_cache(maxsize=32)
def _sphere_laplacian_matrix(n: int, size: int) -> np.ndarray:
    g = make_sphere_grid(n, size)
    lap = -(g.basis.T * g.eigenvalues) @ (g.basis * g.weights)
    # constants must be annihilated to rounding
    np.fill_diagonal(lap, 0.0)
    np.fill_diagonal(lap, -lap.sum(axis=1))
    lap.setflags(write=False)
    return lap


@dataclass(frozen=True, eq=False)
class AngularGrid:
    """Gauss nodes in t = cos(angle to axis) on S^{n-1} with zonal harmonics.

    ``weights`` sum to one (normalized sphere measure); ``table[l]`` is Z_l.
    """

    n: int
    lmax: int
    t: np.ndarray
    weights: np.ndarray
    table: np.ndarray

    @property
    def size(self) -> int:
        return self.t.size


@lru_cache(maxsize=64)
def make_angular_grid(n: int, lmax: int, size: int | None = None) -> AngularGrid:
    if size is None:
        size = default_angular_size(lmax)
    t, w = _gauss(size, (n - 3) / 2)
    w = w / w.sum()
    table = gegenbauer_table((n - 2) / 2, t, lmax)
    for arr in (t, w, table):
        arr.setflags(write=False)
    return AngularGrid(n, lmax, t, w, table)


def default_angular_size(lmax: int) -> int:
    # a single node integrates t-independent integrands exactly
    if lmax == 0:
        return 1
    return max(2 * lmax + 16, 24)


def synthesize(u: ModalField, ang: AngularGrid) -> np.ndarray:
    """Values of ``u`` on the (r, t) tensor grid, shape (N_r, N_t)."""
    if u.lmax > ang.lmax:
        raise ValueError(f"angular grid supports lmax {ang.lmax}, field has {u.lmax}")
    return u.profiles.T @ ang.table[: u.lmax + 1]


def analyze(values: np.ndarray, ang: AngularGrid, lmax: int | None = None) -> np.ndarray:
    """Degree-wise profiles (lmax+1, N_r) of tensor-grid values."""
    lmax = ang.lmax if lmax is None else lmax
    return (ang.table[: lmax + 1] * ang.weights) @ values.T


def tensor_integral(values: np.ndarray, grid: RadialGrid, ang: AngularGrid, dim: Dimension) -> float:
    """Integral over R^n of an axisymmetric integrand given on the tensor grid."""
    return dim.sphere_area * float(grid.measure(dim.n) @ (values @ ang.weights))


def tensor_points(grid: RadialGrid, ang: AngularGrid):
    """Broadcastable (r, t) arrays of shape (N_r, 1) and (1, N_t)."""
    return grid.r[:, None], ang.t[None, :]


@lru_cache(maxsize=128)
def _jacobi_rule(m: int, left: float, right: float):
    # weight (1 - y)^right (1 + y)^left on [-1, 1]
    return roots_jacobi(m, right, left)


def segment_integral(fun, a: float, b: float, left: float = 0.0, right: float = 0.0, m: int = 24) -> float:
    """int_a^b fun(x) dx for fun ~ (x - a)^left (b - x)^right times a smooth factor."""
    y, w = _jacobi_rule(m, float(left), float(right))
    x = a + 0.5 * (b - a) * (y + 1)
    smooth = fun(x) / ((b - x) ** right * (x - a) ** left)
    return float(0.5 * (b - a)) ** (1 + left + right) * float(w @ smooth)


def _panel_roots(coef: np.ndarray) -> np.ndarray:
    """Complex roots of Legendre series, one series per row (batched companion matrices)."""
    c = np.array(coef, dtype=float)
    deg = c.shape[1] - 1
    lead = c[:, -1].copy()
    floor = 1e-14 * np.max(np.abs(c), axis=1)
    small = np.abs(lead) < floor
    # a vanishing leading coefficient only pushes spurious roots to infinity
    lead[small] = np.where(lead[small] < 0, -1.0, 1.0) * np.maximum(floor[small], 1e-300)
    scl = 1.0 / np.sqrt(2 * np.arange(deg) + 1)
    base = np.zeros((deg, deg))
    off = np.arange(1, deg) * scl[:-1] * scl[1:]
    base[np.arange(deg - 1), np.arange(1, deg)] = off
    base[np.arange(1, deg), np.arange(deg - 1)] = off
    mats = np.repeat(base[None], c.shape[0], axis=0)
    mats[:, :, -1] -= (c[:, :-1] / lead[:, None]) * (scl / scl[-1]) * (deg / (2 * deg - 1))
    return np.linalg.eigvals(mats)


def _ellipse_parameter(z, a: float = -1.0, b: float = 1.0):
    """Bernstein ellipse parameter of points z relative to [a, b] (1 on the segment)."""
    w = (2 * np.asarray(z, dtype=complex) - a - b) / (b - a)
    s = np.sqrt(w - 1) * np.sqrt(w + 1)
    return np.maximum(np.abs(w + s), np.abs(w - s))


def _gauss_radius(m: int, digits: float = 15.0) -> float:
    # an m-point Gauss rule loses about rho^(-2m) next to a singularity at ellipse parameter rho
    return 10.0 ** (digits / (2 * m))


def _split_points(roots, lo=-1.0, hi=1.0) -> np.ndarray:
    pts = np.concatenate([[lo], roots, [hi]])
    return pts[np.concatenate([[True], np.diff(pts) > 1e-12])]


def _graded_integral(fun, a, b, ea, eb, others, m, depth=0):
    """Gauss-Jacobi on [a, b], bisected while a root off the endpoints sits inside the
    ellipse where the rule would lose accuracy."""
    if others.size and depth < 48:
        near = np.min(_ellipse_parameter(others, a, b))
        if near < _gauss_radius(m):
            c = 0.5 * (a + b)
            return (_graded_integral(fun, a, c, ea, 0.0, others, m, depth + 1)
                    + _graded_integral(fun, c, b, 0.0, eb, others, m, depth + 1))
    return segment_integral(fun, a, b, ea, eb, m)


def radial_abs_power(values, g: RadialGrid, n: int, q: float, counts: bool = False):
    """int_0^inf |f(r)|^q r^{n-1} dr for each column of ``values`` (shape (N,) or (N, K)).

    |f|^q is singular wherever the panel interpolant of f vanishes.  Panels
    with a root on the segment are split there and integrated with
    Gauss-Jacobi rules carrying the |x - root|^q endpoint behaviour; segments
    with a root close by (inside the Bernstein ellipse where Gauss loses
    accuracy) are bisected towards it.  Other panels keep the plain rule.
    """
    V = np.asarray(values, dtype=float)
    flat = V.ndim == 1
    V = V.reshape(g.size, -1)
    P, m = g.panels, g.nodes_per_panel
    K = V.shape[1]
    blocks = V.reshape(P, m, K)
    meas = g.measure(n).reshape(P, m, 1)
    parts = np.sum(np.abs(blocks) ** q * meas, axis=1)
    nroots = np.zeros(K, dtype=int)
    x, _ = roots_legendre(m)
    to_coef = np.linalg.inv(legendre.legvander(x, m - 1))
    # the last panel carries the singular measure of the map at r = inf; keep its Gauss rule
    coefs = np.einsum("cm,pmk->pkc", to_coef, blocks[:-1]).reshape(-1, m)
    live = np.any(coefs != 0, axis=1)
    roots = np.full((coefs.shape[0], m - 1), np.inf, dtype=complex)
    if np.any(live):
        roots[live] = _panel_roots(coefs[live])
    rho = _ellipse_parameter(np.where(np.isfinite(roots), roots, 1e300))
    flagged = np.argwhere((np.min(rho, axis=1) < _gauss_radius(m)).reshape(P - 1, K))
    h = 1.0 / P
    L = g.map_scale
    for k, j in flagged:
        row = k * K + j
        coef, z = coefs[row], roots[row]

        def fun(t, coef=coef, k=k):
            xi = k * h + 0.5 * h * (t + 1)
            r = L * xi / (1 - xi)
            return np.abs(legendre.legval(t, coef)) ** q * r ** (n - 1) * L / (1 - xi) ** 2 * 0.5 * h

        real = np.abs(z.imag) <= 1e-10
        inside = np.unique(z.real[real & (np.abs(z.real) < 1)])
        nroots[j] += inside.size
        pts = _split_points(inside)
        total = 0.0
        for a, b in zip(pts[:-1], pts[1:]):
            ea = q if a > -1 else 0.0
            eb = q if b < 1 else 0.0
            keep = (np.abs(z - a) > 1e-12) & (np.abs(z - b) > 1e-12) & np.isfinite(z)
            total += _graded_integral(fun, a, b, ea, eb, z[keep], m + 8)
        parts[k, j] = total
    out = parts.sum(axis=0)
    if flat:
        out, nroots = out[0], nroots[0]
    return (out, nroots) if counts else out


def tensor_abs_power(values: np.ndarray, grid: RadialGrid, ang: AngularGrid, dim: Dimension, q: float,
                     column=None, tol: float = 1e-10, max_breaks: int = 8) -> float:
    """int over R^n of |f|^q for tensor-grid samples, with root-aware radial quadrature.

    The radial integral G(t) along each direction is smooth unless some ray
    grazes the zero set of f, which shows up as a change in the number of
    radial roots between directions.  In that case, when ``column(t)`` can
    evaluate f on the radial nodes for any direction cosines t, G is
    integrated adaptively with breakpoints at those changes.  Beyond
    ``max_breaks`` such changes the plain Gauss rule in t is kept.
    """
    cols, nroots = radial_abs_power(values, grid, dim.n, q, counts=True)
    cols, nroots = np.atleast_1d(cols), np.atleast_1d(nroots)
    if column is None or np.all(nroots == nroots[0]):
        return dim.sphere_area * float(cols @ ang.weights)
    n = dim.n
    norm = 1.0 / beta_fn(0.5, (n - 1) / 2)
    t = ang.t
    order = np.argsort(t)
    jumps = np.nonzero(np.diff(nroots[order]))[0]
    breaks = sorted({0.5 * (t[order][i] + t[order][i + 1]) for i in jumps})
    if len(breaks) > max_breaks:
        return dim.sphere_area * float(cols @ ang.weights)

    def G(x):
        return float(radial_abs_power(column(np.array([x])), grid, n, q)[0]) * (1 - x * x) ** ((n - 3) / 2)

    with warnings.catch_warnings():
        # G carries rounding noise near 1e-13 relative; quad may flag it
        warnings.simplefilter("ignore", IntegrationWarning)
        val, _ = quad(G, -1.0, 1.0, points=breaks, limit=400, epsabs=0.0, epsrel=tol)
    return dim.sphere_area * norm * val


def sphere_abs_power(values: np.ndarray, sphere: SphereGrid, q: float, check: int = 4) -> float:
    """int over S^n of |v|^q for a zonal field, splitting at the sign changes of its interpolant."""
    v = np.asarray(values, dtype=float)
    plain = sphere.integrate(np.abs(v) ** q)
    coeffs = sphere.analyze(v)
    fine = np.cos(np.linspace(np.pi, 0, check * sphere.size + 1))
    vals = sphere.synthesize(coeffs, fine)
    flips = np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) < 0)[0]
    if flips.size == 0:
        return plain
    roots = [brentq(lambda t: float(sphere.synthesize(coeffs, np.array([t]))[0]), fine[i], fine[i + 1],
                    xtol=1e-15) for i in flips]
    pts = _split_points(np.array(roots))
    beta = (sphere.n - 2) / 2
    area = Dimension(sphere.n).sphere_area

    def fun(x):
        return np.abs(sphere.synthesize(coeffs, x)) ** q * (1 - x * x) ** beta

    total = 0.0
    m = max(sphere.size, 24)
    for a, b in zip(pts[:-1], pts[1:]):
        ea = beta if a == -1 else q
        eb = beta if b == 1 else q
        total += segment_integral(fun, a, b, ea, eb, m)
    return area * total


def radial_integral(f, g: RadialGrid, dim: Dimension) -> float:
    """|S^{n-1}| * int_0^inf f(r) r^{n-1} dr for samples of f on ``g``."""
    f = np.asarray(f, dtype=float)
    if f.shape[-1] != g.size:
        raise ValueError("samples do not match the grid")
    if not np.all(np.isfinite(f)):
        raise ValueError("non-finite samples")
    return dim.sphere_area * float(f @ g.measure(dim.n))


def mode_laplacian(f, l: int, g: RadialGrid, dim: Dimension) -> np.ndarray:
    """f'' + (n-1)/r f' - l(l+n-2)/r^2 f, evaluated at the grid nodes."""
    if l < 0:
        raise ValueError("degree must be non-negative")
    n = dim.n
    fr = g.d_dr(f)
    frr = g.d_dr(fr)
    out = frr + (n - 1) / g.r * fr
    if l:
        out = out - l * (l + n - 2) / g.r**2 * np.asarray(f)
    return out


def laplacian(u: ModalField) -> ModalField:
    prof = np.array([mode_laplacian(u.profiles[l], l, u.grid, u.dim) for l in range(u.lmax + 1)])
    return ModalField(u.dim, u.grid, prof, u.axis)


def dirichlet_form(a: ModalField, b: ModalField) -> float:
    """int grad a . grad b over R^n, degree by degree."""
    if not a.compatible(b):
        raise ValueError("fields are not on the same grid")
    g, n = a.grid, a.dim.n
    lmax = min(a.lmax, b.lmax)
    pa, pb = a.profiles[: lmax + 1], b.profiles[: lmax + 1]
    da, db = g.d_dr(pa), g.d_dr(pb)
    ls = np.arange(lmax + 1)[:, None]
    dens = da * db + ls * (ls + n - 2) / g.r**2 * pa * pb
    return a.dim.sphere_area * float(np.sum(dens @ g.measure(n)))


def l2_form(a: ModalField, b: ModalField) -> float:
    if not a.compatible(b):
        raise ValueError("fields are not on the same grid")
    lmax = min(a.lmax, b.lmax)
    dens = np.sum(a.profiles[: lmax + 1] * b.profiles[: lmax + 1], axis=0)
    return radial_integral(dens, a.grid, a.dim)


def sphere_zonal_laplacian(v: ZonalSphereField) -> ZonalSphereField:
    """Laplace-Beltrami of a zonal function, applied spectrally (pole-regular)."""
    return ZonalSphereField(v.dim, v.grid, v.grid.laplacian_matrix @ v.samples)


def conformal_energy(v: ZonalSphereField, w: ZonalSphereField | None = None) -> float:
    """int_{S^n} grad v . grad w + n(n-2)/4 v w."""
    w = v if w is None else w
    g = v.grid
    a = float(v.dim.sphere_shift)
    cv, cw = g.analyze(v.samples), g.analyze(w.samples)
    return float(np.sum((g.eigenvalues + a) * cv * cw))
