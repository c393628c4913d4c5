"""Numerical laboratory for bubble stability and the critical fast diffusion flow."""

from .core import BubbleParams, Dimension, ModalField, ZonalSphereField, field_algebra, make_dimension
from .grid import RadialGrid, SphereGrid, make_radial_grid, make_sphere_grid

__all__ = [
    "BubbleParams",
    "Dimension",
    "ModalField",
    "RadialGrid",
    "SphereGrid",
    "ZonalSphereField",
    "field_algebra",
    "make_dimension",
    "make_radial_grid",
    "make_sphere_grid",
]

__version__ = "0.1.0"
