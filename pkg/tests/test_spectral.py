import numpy as np
import pytest

from bubbleflow import make_dimension, make_radial_grid
from bubbleflow.bubble import bubble_basis
from bubbleflow.core import ModalField
from bubbleflow.spectral import (
    band_two_field,
    harmonic_dimension,
    random_trials,
    rayleigh_gap_check,
    rayleigh_quotient,
    sphere_eigenvalue,
    weighted_l2,
    weighted_spectrum,
)


@pytest.mark.parametrize("n,l,expected", [(3, 0, 1), (3, 1, 3), (3, 2, 5), (4, 2, 9), (5, 1, 5)])
def test_harmonic_dimension(n, l, expected):
    assert harmonic_dimension(n, l) == expected


def test_low_spectrum_n3():
    res = weighted_spectrum(make_dimension(3))
    np.testing.assert_allclose(res.distinct[:4], [1.0, 5.0, 35 / 3, 21.0], rtol=1e-10)
    assert res.multiplicity[:3] == (1, 4, 9)
    assert res.Lambda == pytest.approx(35 / 3, rel=1e-10)
    assert res.converged and res.gapOk


@pytest.mark.parametrize("n", [3, 4, 5, 6])
def test_gap_above_p_and_candidate_formula(n):
    d = make_dimension(n)
    res = weighted_spectrum(d)
    assert res.distinct[0] == pytest.approx(1.0, rel=1e-10)
    assert res.distinct[1] == pytest.approx(float(d.p), rel=1e-10)
    assert res.Lambda > float(d.p)
    # 1 + 8(n+1)/(n(n-2)) is a candidate, confirmed here rather than assumed
    assert res.Lambda == pytest.approx(sphere_eigenvalue(d, 2), rel=1e-10)
    # the p-eigenspace is spanned by the dilation and the n translations
    assert res.multiplicity[1] == n + 1


def test_lambda_n4():
    assert weighted_spectrum(make_dimension(4)).Lambda == pytest.approx(6.0, rel=1e-10)


def test_eigenfunction_normalized():
    res = weighted_spectrum(make_dimension(3))
    phi = res.eigenfunction(2, 0)
    assert weighted_l2(phi, phi) == pytest.approx(1.0, rel=1e-10)
    assert rayleigh_quotient(phi) == pytest.approx(35 / 3, rel=1e-10)


def test_band_two_field(dim3, grid):
    assert rayleigh_quotient(band_two_field(dim3, grid)) == pytest.approx(35 / 3, rel=1e-10)


def test_bubble_quotients(dim3, grid):
    b = bubble_basis(dim3, grid)
    assert rayleigh_quotient(b.U) == pytest.approx(1.0, rel=1e-10)
    assert rayleigh_quotient(b.V) == pytest.approx(5.0, rel=1e-10)
    assert rayleigh_quotient(b.W) == pytest.approx(5.0, rel=1e-10)


@pytest.mark.parametrize("n", [3, 4])
def test_random_trials_above_gap(n, rng):
    d = make_dimension(n)
    g = make_radial_grid()
    lam = sphere_eigenvalue(d, 2)
    trials = random_trials(d, g, 20, rng)
    assert rayleigh_gap_check(trials, bubble_basis(d, g)) >= lam * (1 - 1e-8)
    # without removing the bubble directions the quotient can fall below p
    assert rayleigh_gap_check(trials + [bubble_basis(d, g).U], project=False) < float(d.p)


def test_degenerate_trial_rejected(dim3, grid):
    with pytest.raises(ValueError):
        rayleigh_quotient(ModalField(dim3, grid, np.zeros((2, grid.size))))
    with pytest.raises(ValueError):
        rayleigh_gap_check([])
    with pytest.raises(ValueError):
        rayleigh_gap_check(random_trials(dim3, grid, 1, np.random.default_rng(0)))
