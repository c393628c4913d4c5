"""The weighted eigenproblem -Delta phi = nu U^{p-1} phi around the unit bubble.

Each zonal degree l is discretized by a Galerkin basis

    phi_j(xi) = xi^l (1 - xi)^{n-2} P_j(2 xi - 1),   r = L xi / (1 - xi),

which carries the decay r^{-(n-2)} and the O(r^l) origin behaviour; the
stiffness and weighted mass matrices are assembled with the radial quadrature,
giving a symmetric-definite pencil.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np
from numpy.polynomial import legendre
from scipy.linalg import eigh

from .bubble import BubbleBasis, bubble_rt
from .core import Dimension, ModalField
from .grid import RadialGrid, dirichlet_form, make_radial_grid, radial_integral

TRUST_FACTOR = 10.0


def harmonic_dimension(n: int, l: int) -> int:
    """Dimension of degree-l spherical harmonics on S^{n-1}."""
    if l == 0:
        return 1
    return comb(l + n - 1, n - 1) - comb(l + n - 3, n - 1)


def sphere_eigenvalue(dim: Dimension, k: int) -> float:
    """1 + k(k+n-1) / (n(n-2)/4): the value the stereographic picture predicts for band k."""
    return 1 + k * (k + dim.n - 1) / float(dim.sphere_shift)


def galerkin_basis(dim: Dimension, grid: RadialGrid, l: int, size: int):
    """Basis values and r-derivatives at the grid nodes, each of shape (size, N)."""
    xi = grid.xi
    x = 2 * xi - 1
    P = legendre.legvander(x, size - 1).T
    dP = np.array([legendre.legval(x, legendre.legder(np.eye(size)[j])) for j in range(size)]) * 2
    env = xi**l * (1 - xi) ** (dim.n - 2)
    denv = (l * xi ** (l - 1) if l else 0.0) * (1 - xi) ** (dim.n - 2) \
        - (dim.n - 2) * xi**l * (1 - xi) ** (dim.n - 3)
    phi = env * P
    dphi = (denv * P + env * dP) * grid.dxi_dr
    return phi, dphi


def _pencil(dim, grid, l, size):
    phi, dphi = galerkin_basis(dim, grid, l, size)
    w = grid.measure(dim.n) * dim.sphere_area
    U = bubble_rt(dim, grid.r, 0.0)
    weight = U ** float(dim.p - 1)
    A = (dphi * w) @ dphi.T + l * (l + dim.n - 2) * ((phi * w / grid.r**2) @ phi.T)
    B = (phi * w * weight) @ phi.T
    return phi, A, B


def _solve(A, B, rcond=1e-13):
    # restrict to the numerically non-degenerate part of the mass matrix
    s, Q = np.linalg.eigh(B)
    keep = s > rcond * s.max()
    T = Q[:, keep] / np.sqrt(s[keep])
    vals, vecs = eigh(T.T @ A @ T)
    return vals, T @ vecs


@dataclass(frozen=True)
class SpectrumResult:
    dim: Dimension
    perDegree: dict
    Lambda: float
    gapOk: bool
    distinct: tuple
    multiplicity: tuple
    resolutionChange: float
    converged: bool
    cutoff: float
    _modes: dict = field(default=None, repr=False, compare=False)

    def eigenfunction(self, l: int, k: int) -> ModalField:
        """k-th trusted eigenfunction of degree ``l`` as a ModalField (unit weighted norm)."""
        grid, phi, vecs = self._modes[l]
        prof = np.zeros((l + 1, grid.size))
        prof[l] = vecs[:, k] @ phi
        return ModalField(self.dim, grid, prof)


def _degree_values(dim, grid, l, size, cutoff):
    phi, A, B = _pencil(dim, grid, l, size)
    vals, vecs = _solve(A, B)
    keep = vals < cutoff
    return vals[keep], phi, vecs[:, keep]


def _group(values: list[tuple[float, int]], tol: float):
    distinct, mult = [], []
    for v, m in sorted(values):
        if distinct and abs(v - distinct[-1]) <= tol * max(1.0, abs(v)):
            mult[-1] += m
        else:
            distinct.append(v)
            mult.append(m)
    return distinct, mult


def weighted_spectrum(dim: Dimension, lmax: int = 2, grid: RadialGrid | None = None,
                      size: int = 40, tol: float = 1e-6) -> SpectrumResult:
    """Trusted eigenvalues (below 10 p) per degree, computed on two resolutions.

    The reported values come from the finer resolution (basis size 1.5x, radial
    panels doubled); ``converged`` is False when any trusted eigenvalue moved by
    more than ``tol`` relative between the two.
    """
    grid = grid or make_radial_grid()
    fine_grid = make_radial_grid(grid.map_scale, 2 * grid.panels, grid.nodes_per_panel)
    cutoff = TRUST_FACTOR * float(dim.p)
    per, modes, change = {}, {}, 0.0
    for l in range(lmax + 1):
        coarse, _, _ = _degree_values(dim, grid, l, size, cutoff)
        fine, phi, vecs = _degree_values(dim, fine_grid, l, (3 * size) // 2, cutoff)
        k = min(len(coarse), len(fine))
        if k:
            change = max(change, float(np.max(np.abs(fine[:k] - coarse[:k]) / fine[:k])))
        per[l] = tuple(float(v) for v in fine)
        modes[l] = (fine_grid, phi, vecs)
    pairs = [(v, harmonic_dimension(dim.n, l)) for l, vals in per.items() for v in vals]
    distinct, mult = _group(pairs, 1e-8)
    lam = distinct[2] if len(distinct) > 2 else float("nan")
    return SpectrumResult(
        dim=dim,
        perDegree=per,
        Lambda=lam,
        gapOk=bool(lam > float(dim.p)),
        distinct=tuple(distinct),
        multiplicity=tuple(mult),
        resolutionChange=change,
        converged=change <= tol,
        cutoff=cutoff,
        _modes=modes,
    )


def weighted_l2(a: ModalField, b: ModalField) -> float:
    """int U^{p-1} a b for the unit bubble U."""
    if not a.compatible(b):
        raise ValueError("fields are not on the same grid")
    U = bubble_rt(a.dim, a.grid.r, 0.0)
    lmax = min(a.lmax, b.lmax)
    dens = np.sum(a.profiles[: lmax + 1] * b.profiles[: lmax + 1], axis=0)
    return radial_integral(U ** float(a.dim.p - 1) * dens, a.grid, a.dim)


def orthogonalize(rho: ModalField, basis: BubbleBasis) -> ModalField:
    """Remove the Dirichlet projection of ``rho`` onto span{U, V, W}."""
    vecs = [basis.U, basis.V, basis.W]
    G = np.array([[dirichlet_form(a, b) for b in vecs] for a in vecs])
    rhs = np.array([dirichlet_form(a, rho) for a in vecs])
    coef = np.linalg.solve(G, rhs)
    out = rho
    for c, v in zip(coef, vecs):
        out = out - c * v
    return out


def rayleigh_quotient(rho: ModalField) -> float:
    den = weighted_l2(rho, rho)
    num = dirichlet_form(rho, rho)
    if den <= 1e-300 or not np.isfinite(den) or den <= 1e-28 * max(num, 1e-300):
        raise ValueError("degenerate trial field (weighted norm vanishes)")
    return num / den


def rayleigh_gap_check(trials, basis: BubbleBasis | None = None, project: bool = True) -> float:
    """Minimum Rayleigh quotient over trial fields, each orthogonalized against U, V, W."""
    qs = []
    for rho in trials:
        if project:
            if basis is None:
                raise ValueError("orthogonalization needs the bubble basis")
            rho = orthogonalize(rho.with_lmax(max(rho.lmax, 1)), basis)
        qs.append(rayleigh_quotient(rho))
    if not qs:
        raise ValueError("no trial fields")
    return float(min(qs))


def random_trials(dim: Dimension, grid: RadialGrid, count: int, rng: np.random.Generator,
                  lmax: int = 2, size: int = 12) -> list[ModalField]:
    """Smooth random fields built from the Galerkin basis with decaying coefficients."""
    bases = [galerkin_basis(dim, grid, l, size)[0] for l in range(lmax + 1)]
    decay = 0.7 ** np.arange(size)
    out = []
    for _ in range(count):
        prof = np.array([(rng.standard_normal(size) * decay) @ b for b in bases])
        out.append(ModalField(dim, grid, prof))
    return out


def band_two_field(dim: Dimension, grid: RadialGrid) -> ModalField:
    """Degree-2 zonal field U r^2/(1+r^2)^2 Z_2, the pull-back of a degree-2 sphere harmonic."""
    r = grid.r
    prof = np.zeros((3, grid.size))
    prof[2] = bubble_rt(dim, r, 0.0) * r * r / (1 + r * r) ** 2
    return ModalField(dim, grid, prof)
