from math import gamma, pi, sqrt

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.special import beta

from bubbleflow import BubbleParams, make_dimension, make_radial_grid
from bubbleflow.bubble import (
    bubble_basis,
    bubble_constant,
    bubble_dlam_rt,
    bubble_dz_rt,
    bubble_identities,
    bubble_rt,
    cap_profile,
    eval_bubble,
    make_multibubble,
    make_perturbed_bubble,
    multibubble_resolution,
    offset_resolution,
    stationary_residual,
    two_bubble_scenario,
)
from bubbleflow.functionals import critical_mass, deficit, dirichlet, k0
from bubbleflow.grid import laplacian, make_angular_grid, synthesize


def beta_oracle(n):
    """int |grad v_1|^2 from the Beta-function closed form of the radial integral."""
    C = (n * (n - 2)) ** ((n - 2) / 4)
    area = 2 * pi ** (n / 2) / gamma(n / 2)
    return area * C * C * (n - 2) ** 2 * 0.5 * beta((n + 2) / 2, (n - 2) / 2)


def test_center_value():
    d = make_dimension(3)
    assert bubble_rt(d, 0.0, 0.0) == pytest.approx(3**0.25, rel=1e-15)
    assert bubble_constant(d, 1.25) == pytest.approx((3 / 1.25) ** 0.25, rel=1e-15)


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_energy_matches_beta_oracle(n):
    d = make_dimension(n)
    ident = bubble_identities(d)
    assert ident.dirichlet == pytest.approx(beta_oracle(n), rel=1e-10)
    assert ident.dirichlet == pytest.approx(d.sobolev_power, rel=1e-10)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_kappa_scaling_of_identities(n):
    d = make_dimension(n)
    S = bubble_identities(d, 1.0).dirichlet
    for kappa in (1.0, float(d.c_flow), 2.0):
        ident = bubble_identities(d, kappa)
        assert ident.resolved
        assert ident.dirichlet == pytest.approx(S * kappa ** (-(n - 2) / 2), rel=1e-10)
        assert ident.mass == pytest.approx(S * kappa ** (-n / 2), rel=1e-10)
        assert ident.ratio == pytest.approx(kappa, rel=1e-10)


def test_three_dimensional_sobolev_constant():
    ident = bubble_identities(make_dimension(3))
    assert ident.sobolev**3 == pytest.approx(3 * sqrt(3) / 4 * pi**2, rel=1e-10)


def test_underresolved_grid_is_flagged():
    ident = bubble_identities(make_dimension(5), 1.0, make_radial_grid(1.0, 2, 4))
    assert not ident.resolved


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_stationary_residual_small(n):
    assert stationary_residual(make_dimension(n)) < 5e-9


def test_stationary_residual_converges_at_scheme_order():
    d = make_dimension(4)
    res = [stationary_residual(d, 1.0, make_radial_grid(1.0, P, 8)) for P in (4, 8, 16)]
    orders = np.log2(np.array(res[:-1]) / np.array(res[1:]))
    assert np.all(orders > 0.8 * (8 - 2))


def test_derivatives_match_finite_differences():
    d = make_dimension(3)
    r = np.linspace(0.05, 4, 30)[:, None]
    t = np.linspace(-1, 1, 7)[None, :]
    z, lam, h = 0.3, 1.4, 1e-6
    fd_lam = (bubble_rt(d, r, t, 1.0, z, lam + h) - bubble_rt(d, r, t, 1.0, z, lam - h)) / (2 * h)
    fd_z = (bubble_rt(d, r, t, 1.0, z + h, lam) - bubble_rt(d, r, t, 1.0, z - h, lam)) / (2 * h)
    assert np.max(np.abs(fd_lam - bubble_dlam_rt(d, r, t, 1.0, z, lam))) < 1e-8
    assert np.max(np.abs(fd_z - bubble_dz_rt(d, r, t, 1.0, z, lam))) < 1e-8


def test_point_and_grid_evaluation_agree():
    d = make_dimension(3)
    g = make_radial_grid()
    params = BubbleParams(1.0, 0.4, 1.5, 2.0)
    u = eval_bubble(params, d, g)
    ang = make_angular_grid(3, u.lmax)
    vals = synthesize(u, ang)
    i, j = 200, 5
    r, t = g.r[i], ang.t[j]
    x = np.array([r * np.sqrt(1 - t * t), 0.0, r * t])
    assert vals[i, j] == pytest.approx(eval_bubble(params, d, x), rel=1e-12)


@settings(max_examples=8)
@given(z=st.floats(-1.0, 1.0), lam=st.floats(0.6, 2.0))
def test_bubble_family_is_critical_and_invariant(z, lam):
    d = make_dimension(3)
    u = eval_bubble(BubbleParams(1.0, z, lam), d, make_radial_grid())
    S = d.sobolev_power
    assert dirichlet(u) == pytest.approx(S, rel=1e-9)
    assert critical_mass(u) == pytest.approx(S, rel=1e-9)
    assert k0(u) == pytest.approx(1.0, rel=1e-9)
    assert deficit(u) < 1e-7


def test_offset_resolution_grows_with_offset():
    assert offset_resolution(0.0) == (0, 1)
    l1, _ = offset_resolution(0.5)
    l2, _ = offset_resolution(3.0)
    assert 0 < l1 < l2


def test_basis_fields_are_consistent():
    d = make_dimension(3)
    b = bubble_basis(d, make_radial_grid())
    assert b.U.lmax >= 1 and np.allclose(b.U.profiles[1:], 0, atol=1e-14)
    assert np.allclose(b.W.profiles[0], 0, atol=1e-14)


def test_cap_is_supported_in_unit_ball():
    g = make_radial_grid()
    c = cap_profile(g)
    assert np.all(c[g.r >= 1] == 0) and np.all(c[g.r < 1] > 0)


def test_perturbed_bubble_solves_its_equation():
    d = make_dimension(3)
    pb = make_perturbed_bubble(d, 1e-2)
    ang = make_angular_grid(3, pb.u.lmax)
    lhs = -synthesize(laplacian(pb.u), ang)
    rhs = synthesize(pb.K, ang) * synthesize(pb.u, ang) ** 5
    assert np.max(np.abs(lhs - rhs)) < 1e-8 * np.max(np.abs(rhs))
    with pytest.raises(ValueError):
        make_perturbed_bubble(d, -1.0)


def test_perturbed_deficit_is_linear_in_eps():
    d = make_dimension(3)
    ratios = [deficit(make_perturbed_bubble(d, e).u) / e for e in (1e-2, 1e-3, 1e-4)]
    assert max(ratios) / min(ratios) < 1.01


def test_two_bubble_scenario():
    d = make_dimension(3)
    mb = two_bubble_scenario(d, 10.0)
    assert dirichlet(mb.u) > 1.5 * d.sobolev_power
    # tails overlap like 1/d, so K0 sits well below 1 at this separation
    assert 0.3 < k0(mb.u) < 1.0
    grid, lmax, size = multibubble_resolution(10.0)
    assert size > lmax > 0
    with pytest.raises(ValueError):
        make_multibubble(d, [BubbleParams(1.0, 0.0), BubbleParams(1.0, 0.5)], grid, lmax, size)
