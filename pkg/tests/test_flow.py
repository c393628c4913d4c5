import numpy as np
import pytest

from bubbleflow.conformal import sphere_constant
from bubbleflow.flow import (
    BLEWUP,
    CONVERGED,
    PLANE,
    SPHERE,
    VANISHED,
    CalibrationError,
    FlowConfig,
    InitialData,
    amplitude_scan,
    calibrate_amplitude,
    decay_rate,
    energy_slope_errors,
    run,
    unstable_rate,
)


@pytest.fixture
def probe3(dim3):
    return FlowConfig(dim3, initial=InitialData(eps=1e-2), ds_max=0.25, tol=1e-7)


@pytest.mark.parametrize("rep", [SPHERE, PLANE])
def test_stationary_data_unchanged(dim3, rep):
    res = run(FlowConfig(dim3, representation=rep, initial=InitialData(eps=0.0), s_end=1.0, ds_out=0.25))
    assert res.classification == CONVERGED
    J = np.array([r["J"] for r in res.records])
    assert np.ptp(J) <= 1e-12 * abs(J[0])
    assert max(r["delta"] for r in res.records) <= 1e-8
    if rep == SPHERE:
        np.testing.assert_allclose(res.states[-1].samples, sphere_constant(dim3), rtol=1e-12)


def test_energy_identity(dim3):
    cfg = FlowConfig(dim3, initial=InitialData(eps=1e-2), s_end=0.5, ds0=1e-3, ds_max=1e-3,
                     fixed_step=True, ds_out=0.25)
    res = run(cfg, step_log=True)
    dJ, rel = energy_slope_errors(res.steps)
    assert np.all(dJ <= 0)
    assert rel.max() <= 1e-3


def test_deficit_dissipation_bound(dim3):
    res = run(FlowConfig(dim3, initial=InitialData(eps=5e-2), s_end=1.0, ds_out=0.1))
    for r in res.records:
        assert r["boundLeft"] <= r["boundRight"]


def test_records_on_output_grid(dim3):
    res = run(FlowConfig(dim3, initial=InitialData(eps=1e-2), s_end=1.0, ds_out=0.25))
    np.testing.assert_allclose([r["s"] for r in res.records], [0, 0.25, 0.5, 0.75, 1.0], atol=1e-12)
    assert len(res.states) == len(res.records)


def test_plane_matches_sphere(dim3):
    out = {}
    for rep in (SPHERE, PLANE):
        res = run(FlowConfig(dim3, representation=rep, initial=InitialData(eps=1e-2), s_end=1.0, ds_out=0.5))
        out[rep] = res.records[-1]
    for key in ("J", "mass", "delta", "K0"):
        assert out[PLANE][key] == pytest.approx(out[SPHERE][key], rel=1e-6)


@pytest.mark.parametrize("amp,expected", [(0.8, VANISHED), (1.2, BLEWUP)])
def test_classification(probe3, amp, expected):
    assert run(probe3, amplitude=amp, record=False).classification == expected


def test_calibration_needs_bracket(probe3):
    with pytest.raises(CalibrationError):
        calibrate_amplitude(probe3, lo=1.0, hi=2.0, tol=1e-3)


@pytest.mark.slow
def test_calibrated_amplitude_moves_with_eps(dim3):
    dist = []
    for eps in (1e-3, 1e-2, 1e-1):
        w = 6 * eps**2
        cfg = FlowConfig(dim3, initial=InitialData(eps=eps), ds_max=0.25, tol=1e-7)
        cal = calibrate_amplitude(cfg, lo=1 - w, hi=1.0, tol=0.05 * w, s_cap=30)
        assert cal.bracket[0] <= cal.amplitude <= cal.bracket[1]
        dist.append(abs(cal.amplitude - 1))
    assert dist[0] < dist[1] < dist[2]


@pytest.mark.slow
def test_scan_flips_once(probe3):
    sides, flips = amplitude_scan(probe3, np.linspace(0.9, 1.1, 16))
    assert flips == 1
    assert sides[0] == -1 and sides[-1] == 1


def test_linear_rates_exact(dim3):
    assert unstable_rate(dim3) == pytest.approx(1.0)
    assert decay_rate(dim3, 0) == pytest.approx(1.0)
    assert decay_rate(dim3, 1) == pytest.approx(0.0, abs=1e-15)
    assert decay_rate(dim3, 2) == pytest.approx(-5 / 3)


@pytest.mark.parametrize("k", [2, 3])
def test_zonal_mode_rate(dim3, k):
    cfg = FlowConfig(dim3, initial=InitialData(eps=1e-5, degree=k), s_end=2.0, ds_out=1.0,
                     ds_max=0.05, tol=1e-10)
    res = run(cfg)
    c = [st.grid.analyze(st.samples)[k] for st in res.states]
    assert np.log(c[2] / c[1]) == pytest.approx(decay_rate(dim3, k), rel=1e-3)


def test_unstable_mode_rate(dim3):
    cfg = FlowConfig(dim3, initial=InitialData(eps=0.0), s_end=2.0, ds_out=1.0, ds_max=0.05, tol=1e-10)
    res = run(cfg, amplitude=1 + 1e-7)
    dev = [np.mean(st.samples) - sphere_constant(dim3) for st in res.states]
    assert np.log(dev[2] / dev[1]) == pytest.approx(unstable_rate(dim3), rel=1e-3)


def test_config_validation(dim3):
    with pytest.raises(ValueError):
        FlowConfig(dim3, representation="torus")
    with pytest.raises(ValueError):
        FlowConfig(dim3, ds0=1.0, ds_max=0.1)
    with pytest.raises(ValueError):
        run(FlowConfig(dim3, floor=1.0))
