import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bubbleflow import BubbleParams, make_dimension, make_radial_grid
from bubbleflow.bubble import eval_bubble
from bubbleflow.conformal import (
    StereographicMap,
    plane_to_sphere,
    sphere_constant,
    sphere_to_plane,
    stationary_on_sphere,
)
from bubbleflow.functionals import critical_mass, dirichlet
from bubbleflow.grid import conformal_energy


def _stationary(n, lam=1.0):
    d = make_dimension(n)
    return d, eval_bubble(BubbleParams(kappa=float(d.c_flow), scale=lam), d, make_radial_grid())


@given(st.lists(st.floats(-5, 5), min_size=3, max_size=3))
def test_map_round_trip(x):
    m = StereographicMap(make_dimension(3))
    y = m.forward(np.array(x))
    assert np.sum(y * y) == pytest.approx(1.0, abs=1e-14)
    np.testing.assert_allclose(m.inverse(y), x, atol=1e-12 * (1 + np.dot(x, x)))


def test_polar_convention():
    assert StereographicMap.cos_theta(0.0) == -1.0
    assert StereographicMap.cos_theta(1.0) == 0.0
    assert StereographicMap.radius(0.0) == pytest.approx(1.0)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_mass_and_energy_dictionary(n):
    d, u = _stationary(n, 1.7)
    v = plane_to_sphere(u)
    assert critical_mass(v) == pytest.approx(critical_mass(u), rel=1e-12)
    assert conformal_energy(v) == pytest.approx(dirichlet(u), rel=1e-12)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_round_trip(n):
    d, u = _stationary(n)
    back = sphere_to_plane(plane_to_sphere(u), u.grid)
    np.testing.assert_allclose(back.profiles, u.profiles, atol=1e-11 * np.max(u.profiles))


def test_sphere_constant():
    d = make_dimension(3)
    assert sphere_constant(d) == pytest.approx((3 / 5) ** 0.25, rel=1e-15)
    assert sphere_constant(d) == pytest.approx(0.88011, abs=1e-5)
    np.testing.assert_allclose(stationary_on_sphere(d).samples, sphere_constant(d), rtol=1e-14)


@pytest.mark.parametrize("lam", [0.5, 1.0, 1.7])
def test_stationary_closed_form(lam):
    d, u = _stationary(3, lam)
    v = plane_to_sphere(u)
    np.testing.assert_allclose(v.samples, stationary_on_sphere(d, lam=lam).samples, atol=1e-13)


def test_non_radial_rejected(dim3, grid):
    with pytest.raises(ValueError, match="not radial"):
        plane_to_sphere(eval_bubble(BubbleParams(center=0.5), dim3, grid))


def test_unresolved_pole_rejected(dim3, grid):
    with pytest.raises(ValueError, match="not resolved"):
        plane_to_sphere(eval_bubble(BubbleParams(scale=300.0), dim3, grid))
