from fractions import Fraction
from math import gamma, pi, sqrt

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bubbleflow import BubbleParams, Dimension, ModalField, ZonalSphereField, field_algebra
from bubbleflow import make_dimension, make_radial_grid, make_sphere_grid


@pytest.mark.parametrize("n", [3, 4, 5, 6, 7])
def test_exponents_are_exact(n):
    d = make_dimension(n)
    assert d.p == Fraction(n + 2, n - 2)
    assert d.two_star == d.p + 1
    assert d.m * d.p == 1
    assert d.c_flow == Fraction(n + 2, 4)
    assert d.sphere_shift == Fraction(n * (n - 2), 4)
    assert 1 / d.dual_exponent + 1 / d.two_star == 1


def test_three_dimensional_values():
    d = make_dimension(3)
    assert (d.p, d.two_star, d.m, d.c_flow, d.sphere_shift) == (5, 6, Fraction(1, 5), Fraction(5, 4), Fraction(3, 4))
    assert d.sobolev_power == pytest.approx(3 * sqrt(3) / 4 * pi**2, rel=1e-14)
    assert d.sphere_area == pytest.approx(4 * pi, rel=1e-15)


@pytest.mark.parametrize("n", [4, 5, 6])
def test_sobolev_power_matches_area_formula(n):
    d = make_dimension(n)
    area = 2 * pi ** ((n + 1) / 2) / gamma((n + 1) / 2)
    assert d.sobolev_power == pytest.approx((n * (n - 2) / 4) ** (n / 2) * area, rel=1e-14)


@pytest.mark.parametrize("bad", [2, 1, 0, -3])
def test_small_dimensions_rejected(bad):
    with pytest.raises(ValueError):
        Dimension(bad)


@pytest.mark.parametrize("bad", [3.0, "3", True])
def test_non_integer_dimension_rejected(bad):
    with pytest.raises(TypeError):
        Dimension(bad)


def test_numpy_integer_accepted():
    assert make_dimension(np.int64(4)).n == 4


def test_bubble_params_validation():
    with pytest.raises(ValueError):
        BubbleParams(kappa=0.0)
    with pytest.raises(ValueError):
        BubbleParams(scale=-1.0)
    with pytest.raises(ValueError):
        BubbleParams(center=np.inf)
    d = make_dimension(3)
    assert BubbleParams(center=0.5).center_vector(d).tolist() == [0, 0, 0.5]
    with pytest.raises(ValueError):
        BubbleParams(center=(1.0, 0.0, 0.0)).axial_center(d)


def test_modal_field_rejects_bad_shapes(grid, dim3):
    with pytest.raises(ValueError):
        ModalField(dim3, grid, np.zeros((1, grid.size + 1)))
    with pytest.raises(ValueError):
        ModalField(dim3, grid, np.full((1, grid.size), np.nan))
    with pytest.raises(ValueError):
        ModalField(dim3, grid, np.zeros((1, grid.size)), axis=(1.0, 1.0, 0.0))


def test_modal_field_is_immutable(grid, dim3):
    u = ModalField.radial(dim3, grid, np.ones(grid.size))
    with pytest.raises(ValueError):
        u.profiles[0, 0] = 2.0


def test_incompatible_grids_refuse_algebra(dim3):
    a = ModalField.radial(dim3, make_radial_grid(), np.ones(512))
    b = ModalField.radial(dim3, make_radial_grid(2.0), np.ones(512))
    with pytest.raises(ValueError):
        a + b
    with pytest.raises(ValueError):
        field_algebra(a, a, "mul")


def test_sphere_field_pairs(dim3):
    g = make_sphere_grid(3, 16)
    v = ZonalSphereField(dim3, g, np.ones(16))
    assert np.all((v + v).samples == 2) and np.all((v - v).samples == 0)
    with pytest.raises(ValueError):
        v + ZonalSphereField(dim3, make_sphere_grid(3, 20), np.ones(20))


coef = st.floats(-10, 10, allow_nan=False)


@given(a=coef, b=coef, l1=st.integers(0, 3), l2=st.integers(0, 3), seed=st.integers(0, 2**32 - 1))
def test_modal_algebra_is_linear(a, b, l1, l2, seed):
    d = make_dimension(3)
    g = make_radial_grid(1.0, 4, 6)
    r = np.random.default_rng(seed)
    u = ModalField(d, g, r.standard_normal((l1 + 1, g.size)))
    v = ModalField(d, g, r.standard_normal((l2 + 1, g.size)))
    w = a * u + b * v
    L = max(l1, l2)
    expect = a * u.with_lmax(L).profiles + b * v.with_lmax(L).profiles
    assert np.allclose(w.profiles, expect, rtol=1e-13, atol=1e-12)
    assert np.allclose((u - u).profiles, 0.0)
    assert (u + v).lmax == L
