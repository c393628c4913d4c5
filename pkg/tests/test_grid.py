from math import pi

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.special import beta, eval_gegenbauer

from bubbleflow import ModalField, make_dimension, make_radial_grid, make_sphere_grid
from bubbleflow.grid import (
    analyze,
    dirichlet_form,
    gegenbauer_table,
    laplacian,
    make_angular_grid,
    radial_integral,
    synthesize,
    tensor_integral,
    tensor_points,
)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_radial_quadrature_beta_oracle(n):
    # int_0^inf r^{n-1} (1+r^2)^{-n} dr = B(n/2, n/2) / 2
    d = make_dimension(n)
    g = make_radial_grid()
    got = radial_integral((1 + g.r**2) ** (-n), g, d) / d.sphere_area
    assert got == pytest.approx(0.5 * beta(n / 2, n / 2), rel=1e-13)


def test_grid_refine_and_rescale():
    g = make_radial_grid(1.0, 8, 10)
    assert g.refine().spec == (1.0, 16, 10)
    assert g.rescaled(3.0).spec == (3.0, 8, 10)
    assert np.all(np.diff(g.r) > 0) and g.r[0] > 0
    with pytest.raises(ValueError):
        make_radial_grid(0.0)


def test_derivative_is_exact_for_rational_profiles():
    g = make_radial_grid()
    f = 1 / (1 + g.r**2)
    assert np.max(np.abs(g.d_dr(f) + 2 * g.r / (1 + g.r**2) ** 2)) < 1e-10


@pytest.mark.parametrize("n", [3, 4, 5])
def test_zonal_harmonics_are_orthonormal(n):
    ang = make_angular_grid(n, 6)
    G = (ang.table * ang.weights) @ ang.table.T
    assert np.allclose(G, np.eye(7), atol=1e-13)


def test_gegenbauer_table_matches_scipy():
    x = np.linspace(-1, 1, 11)
    T = gegenbauer_table(1.5, x, 5)
    for k in range(6):
        ref = eval_gegenbauer(k, 1.5, x)
        assert np.allclose(T[k] / T[k][-1], ref / ref[-1], atol=1e-13)


@given(seed=st.integers(0, 2**32 - 1), lmax=st.integers(0, 4))
def test_synthesize_analyze_round_trip(seed, lmax):
    d = make_dimension(3)
    g = make_radial_grid(1.0, 3, 5)
    u = ModalField(d, g, np.random.default_rng(seed).standard_normal((lmax + 1, g.size)))
    ang = make_angular_grid(3, lmax)
    assert np.allclose(analyze(synthesize(u, ang), ang), u.profiles, atol=1e-12)


def test_tensor_integral_of_offset_gaussian():
    d = make_dimension(3)
    g = make_radial_grid()
    ang = make_angular_grid(3, 20, 48)
    r, t = tensor_points(g, ang)
    q = r * r - 2 * r * t * 0.3 + 0.09
    assert tensor_integral(np.exp(-q), g, ang, d) == pytest.approx(pi**1.5, rel=1e-12)


def test_laplacian_of_radial_bubble():
    d = make_dimension(3)
    g = make_radial_grid()
    u = ModalField.radial(d, g, (1 + g.r**2) ** -0.5)
    lap = laplacian(u).profiles[0]
    assert np.max(np.abs(lap + 3 * (1 + g.r**2) ** -2.5)) < 1e-7


def test_dirichlet_form_of_mode_is_symmetric(rng):
    d = make_dimension(4)
    g = make_radial_grid()
    env = g.r / (1 + g.r**2) ** 2
    a = ModalField(d, g, np.vstack([np.exp(-g.r**2), env]))
    b = ModalField(d, g, np.vstack([1 / (1 + g.r**2) ** 2, 3 * env]))
    assert dirichlet_form(a, b) == pytest.approx(dirichlet_form(b, a), rel=1e-13)
    assert dirichlet_form(a, a) > 0


@pytest.mark.parametrize("n", [3, 4, 5])
def test_sphere_grid_weights_and_laplacian(n):
    s = make_sphere_grid(n, 24)
    d = make_dimension(n)
    assert s.weights.sum() == pytest.approx(d.big_sphere_area, rel=1e-13)
    for k in range(5):
        zk = s.basis[k]
        assert np.allclose(s.laplacian_matrix @ zk, -k * (k + n - 1) * zk, atol=1e-9)
    assert np.max(np.abs(s.laplacian_matrix @ np.ones(24))) < 1e-12


def test_sphere_interpolation_is_spectral():
    s = make_sphere_grid(3, 32)
    f = np.exp(0.4 * s.x)
    x = np.linspace(-0.99, 0.99, 13)
    assert np.allclose(s.interpolate(f, x), np.exp(0.4 * x), atol=1e-13)
