"""Dimension constants and the field containers shared by every module.

Exponents are kept as exact fractions; call ``float()`` at the point of use.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from math import gamma, pi
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .grid import RadialGrid, SphereGrid


@dataclass(frozen=True)
class Dimension:
    n: int

    def __post_init__(self):
        if not isinstance(self.n, (int, np.integer)) or isinstance(self.n, bool):
            raise TypeError(f"dimension must be an integer, got {self.n!r}")
        if self.n < 3:
            raise ValueError(f"dimension must be >= 3, got {self.n}")

    @property
    def p(self) -> Fraction:
        return Fraction(self.n + 2, self.n - 2)

    @property
    def two_star(self) -> Fraction:
        return Fraction(2 * self.n, self.n - 2)

    @property
    def m(self) -> Fraction:
        return Fraction(self.n - 2, self.n + 2)

    @property
    def c_flow(self) -> Fraction:
        """1/(1-m) = (n+2)/4, the growth coefficient of the rescaled flow."""
        return 1 / (1 - self.m)

    @property
    def sphere_shift(self) -> Fraction:
        """n(n-2)/4, the zeroth-order term of the conformal Laplacian on S^n."""
        return Fraction(self.n * (self.n - 2), 4)

    @property
    def dual_exponent(self) -> Fraction:
        """2n/(n+2), the exponent of the deficit norm."""
        return Fraction(2 * self.n, self.n + 2)

    @cached_property
    def sphere_area(self) -> float:
        """|S^{n-1}|, the area of the unit sphere in R^n."""
        return 2 * pi ** (self.n / 2) / gamma(self.n / 2)

    @cached_property
    def big_sphere_area(self) -> float:
        """|S^n|, the area of the unit sphere in R^{n+1}."""
        return 2 * pi ** ((self.n + 1) / 2) / gamma((self.n + 1) / 2)

    @cached_property
    def sobolev_power(self) -> float:
        """Closed form of S^n = (n(n-2)/4)^{n/2} |S^n|."""
        return float(self.sphere_shift) ** (self.n / 2) * self.big_sphere_area


def make_dimension(n: int) -> Dimension:
    return Dimension(int(n) if isinstance(n, np.integer) else n)


@dataclass(frozen=True)
class BubbleParams:
    """Amplitude-scaled translated/dilated bubble ``amplitude * v_kappa[center, scale]``.

    ``center`` is either a scalar (position along the symmetry axis) or a full
    n-vector.
    """

    kappa: float = 1.0
    center: object = 0.0
    scale: float = 1.0
    amplitude: float = 1.0

    def __post_init__(self):
        for name in ("kappa", "scale", "amplitude"):
            value = getattr(self, name)
            if not (np.isfinite(value) and value > 0):
                raise ValueError(f"{name} must be positive and finite, got {value}")
        c = np.asarray(self.center, dtype=float)
        if c.ndim > 1 or not np.all(np.isfinite(c)):
            raise ValueError("center must be a finite scalar or vector")
        if c.ndim == 1:
            object.__setattr__(self, "center", tuple(float(v) for v in c))
        else:
            object.__setattr__(self, "center", float(c))

    def center_vector(self, dim: Dimension) -> np.ndarray:
        if isinstance(self.center, tuple):
            if len(self.center) != dim.n:
                raise ValueError(f"center has {len(self.center)} components, need {dim.n}")
            return np.array(self.center)
        z = np.zeros(dim.n)
        z[-1] = self.center
        return z

    def axial_center(self, dim: Dimension) -> float:
        """Position along the symmetry axis; raises if the center is off-axis."""
        z = self.center_vector(dim)
        if np.any(np.abs(z[:-1]) > 1e-14 * max(1.0, abs(z[-1]))):
            raise ValueError("bubble center is off the symmetry axis")
        return float(z[-1])


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ModalField:
    """Axisymmetric field on R^n: ``u(r, t) = sum_l profiles[l](r) Z_l(t)``.

    ``t`` is the cosine of the angle to the symmetry axis (the last coordinate)
    and ``Z_l`` are the zonal Gegenbauer harmonics of S^{n-1}, normalized to
    unit mean square (``Z_0 = 1``).  ``profiles`` has shape ``(lmax + 1, N)``
    with one row per degree sampled at the radial grid nodes.
    """

    dim: Dimension
    grid: RadialGrid
    profiles: np.ndarray
    axis: tuple = field(default=None)

    def __post_init__(self):
        prof = np.atleast_2d(np.asarray(self.profiles, dtype=float))
        if prof.shape[1] != self.grid.size:
            raise ValueError(
                f"profiles have {prof.shape[1]} samples, grid has {self.grid.size} nodes"
            )
        if not np.all(np.isfinite(prof)):
            raise ValueError("profiles contain non-finite values")
        object.__setattr__(self, "profiles", _frozen(prof))
        axis = self.axis
        if axis is None:
            axis = tuple(float(v) for v in np.eye(self.dim.n)[-1])
        axis = tuple(float(v) for v in axis)
        if len(axis) != self.dim.n or abs(np.linalg.norm(axis) - 1) > 1e-12:
            raise ValueError("axis must be a unit vector in R^n")
        object.__setattr__(self, "axis", axis)

    @property
    def lmax(self) -> int:
        return self.profiles.shape[0] - 1

    @classmethod
    def radial(cls, dim, grid, values) -> "ModalField":
        return cls(dim, grid, np.asarray(values, dtype=float)[None, :])

    def mode(self, l: int) -> np.ndarray:
        if l > self.lmax:
            return np.zeros(self.grid.size)
        return self.profiles[l]

    def with_lmax(self, lmax: int) -> "ModalField":
        """Pad with zero modes or truncate to degree ``lmax``."""
        prof = np.zeros((lmax + 1, self.grid.size))
        k = min(lmax, self.lmax) + 1
        prof[:k] = self.profiles[:k]
        return ModalField(self.dim, self.grid, prof, self.axis)

    def compatible(self, other: "ModalField") -> bool:
        return (
            self.dim == other.dim
            and self.grid.spec == other.grid.spec
            and np.allclose(self.axis, other.axis, rtol=0, atol=1e-14)
        )

    def __add__(self, other):
        return field_algebra(self, other, "add")

    def __sub__(self, other):
        return field_algebra(self, other, "sub")

    def __mul__(self, c):
        return field_algebra(self, c, "scale")

    __rmul__ = __mul__

    def __neg__(self):
        return field_algebra(self, -1.0, "scale")

    def origin_growth_ok(self, c: float = 10.0) -> bool:
        """Check ``|f_l(r_1)| <= C r_1^l`` at the innermost node (O(r^l) behaviour)."""
        r1 = self.grid.r[0]
        scale = max(float(np.max(np.abs(self.profiles))), 1e-300)
        for l in range(1, self.lmax + 1):
            if abs(self.profiles[l, 0]) > c * scale * r1**l + 1e-13 * scale:
                return False
        return True


@dataclass(frozen=True, eq=False)
class ZonalSphereField:
    """Zonal function on S^n sampled at the polar nodes of a SphereGrid."""

    dim: Dimension
    grid: SphereGrid
    samples: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float).ravel()
        if s.size != self.grid.size:
            raise ValueError(f"{s.size} samples for a {self.grid.size}-node sphere grid")
        if not np.all(np.isfinite(s)):
            raise ValueError("samples contain non-finite values")
        object.__setattr__(self, "samples", _frozen(s))

    def positive(self) -> bool:
        return bool(np.all(self.samples > 0))

    def __add__(self, other):
        _check_sphere_pair(self, other)
        return ZonalSphereField(self.dim, self.grid, self.samples + other.samples)

    def __sub__(self, other):
        _check_sphere_pair(self, other)
        return ZonalSphereField(self.dim, self.grid, self.samples - other.samples)

    def __mul__(self, c):
        return ZonalSphereField(self.dim, self.grid, float(c) * self.samples)

    __rmul__ = __mul__


def _check_sphere_pair(a, b):
    if not isinstance(b, ZonalSphereField):
        raise TypeError("expected a ZonalSphereField")
    if a.dim != b.dim or a.grid.spec != b.grid.spec:
        raise ValueError("sphere fields live on different grids or dimensions")


def field_algebra(a: ModalField, b, op: str) -> ModalField:
    """Degree-wise linear combination of modal fields.

    ``op`` is ``"add"``, ``"sub"`` or ``"scale"``; for ``"scale"`` the second
    argument is the scalar factor.
    """
    if op == "scale":
        c = float(b)
        return ModalField(a.dim, a.grid, c * a.profiles, a.axis)
    if op not in ("add", "sub"):
        raise ValueError(f"unknown operation {op!r}")
    if not isinstance(b, ModalField):
        raise TypeError("add/sub need two modal fields")
    if not a.compatible(b):
        raise ValueError("fields differ in dimension, grid or axis")
    lmax = max(a.lmax, b.lmax)
    pa = a.with_lmax(lmax).profiles
    pb = b.with_lmax(lmax).profiles
    out = pa + pb if op == "add" else pa - pb
    return ModalField(a.dim, a.grid, out, a.axis)
