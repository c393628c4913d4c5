"""Time integration of the rescaled fast diffusion flow.

The unknown is psi = w^p, so that the equation

    d psi / ds = Delta(psi^m) + c psi           (plane, c = (n+2)/4)
    d psi / ds = (Delta_S - n(n-2)/4)(psi^m) + c psi   (sphere)

is linear in the time derivative.  Each step is backward Euler solved by
Newton; step doubling gives an error estimate and the extrapolated value
2 psi_half - psi_full is kept.

Two backends share the driver: zonal fields on S^n (nodal values, spectral
Laplacian) and radial fields on R^n (Galerkin coefficients of w in the basis
(1-xi)^{n-2} P_j(2 xi - 1)).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial import legendre

from .conformal import sphere_constant, sphere_to_plane
from .core import Dimension, ModalField, ZonalSphereField
from .functionals import (
    critical_mass,
    deficit,
    dirichlet,
    dissipation,
    energy_gap_I,
    flow_energy_J,
)
from .grid import RadialGrid, SphereGrid, gegenbauer_table, make_radial_grid, make_sphere_grid
from .rate import nearest_stationary

SPHERE = "sphere-zonal"
PLANE = "plane-radial"

VANISHED = "Vanished"
BLEWUP = "BlewUp"
CONVERGED = "Converged"

NEWTON_TOL = 1e-11
MIN_STEP = 1e-12


class StepFailure(RuntimeError):
    pass


class FlowAbort(RuntimeError):
    """Step size underflow; ``state`` holds the last accepted state."""

    def __init__(self, message, state=None):
        super().__init__(message)
        self.state = state


class CalibrationError(RuntimeError):
    pass


@dataclass(frozen=True)
class InitialData:
    """Initial sphere profile amplitude * (v_* + eps * Z_degree(cos theta)).

    ``Z_degree`` is the zonal harmonic of unit mean square on S^n and v_* the
    constant stationary state; eps = 0 gives stationary data.
    """

    eps: float = 1e-2
    degree: int = 2
    amplitude: float = 1.0

    def sphere_values(self, dim: Dimension, x: np.ndarray) -> np.ndarray:
        z = gegenbauer_table((dim.n - 1) / 2, x, self.degree)[self.degree]
        return self.amplitude * (sphere_constant(dim) + self.eps * z)


@dataclass(frozen=True)
class FlowConfig:
    dim: Dimension
    representation: str = SPHERE
    initial: InitialData = field(default_factory=InitialData)
    ds0: float = 1e-3
    ds_max: float = 0.1
    s_end: float = 10.0
    ds_out: float = 0.05
    tol: float = 1e-8
    fixed_step: bool = False
    floor: float | None = None
    sphere_size: int = 32
    basis_size: int = 40
    vanish_fraction: float = 1e-6
    blowup_factor: float = 1e3
    calibration: tuple | None = None
    diagnostics: bool = True

    def __post_init__(self):
        if self.representation not in (SPHERE, PLANE):
            raise ValueError(f"unknown representation {self.representation!r}")
        if not self.ds0 > 0 or not self.ds_max >= self.ds0:
            raise ValueError("need 0 < ds0 <= ds_max")
        if not self.s_end > 0 or not self.ds_out > 0:
            raise ValueError("s_end and ds_out must be positive")
        if self.floor is not None and not self.floor > 0:
            raise ValueError("floor must be positive")


class SphereBackend:
    """Nodal psi values on a Gauss grid of S^n."""

    def __init__(self, dim: Dimension, size: int):
        self.dim = dim
        self.grid: SphereGrid = make_sphere_grid(dim.n, size)
        self.L = self.grid.laplacian_matrix - float(dim.sphere_shift) * np.eye(size)
        self.m = float(dim.m)
        self.c = float(dim.c_flow)
        self.p = float(dim.p)

    def initial(self, data: InitialData) -> np.ndarray:
        v = data.sphere_values(self.dim, self.grid.x)
        if np.any(v <= 0):
            raise ValueError("initial data must be positive")
        return v**self.p

    def psi(self, y):
        return y

    def positivity(self, y):
        return y

    def field(self, y) -> ZonalSphereField:
        return ZonalSphereField(self.dim, self.grid, y**self.m)

    def scale(self, y) -> float:
        return float(np.max(np.abs(y)))

    def backward_euler(self, y0, ds):
        m, c, L = self.m, self.c, self.L
        y = y0.copy()
        norm = self.scale(y0)
        n = y.size
        for _ in range(40):
            ym = y**m
            res = y - ds * (L @ ym + c * y) - y0
            if np.max(np.abs(res)) <= NEWTON_TOL * norm:
                return y
            jac = (1 - ds * c) * np.eye(n) - ds * L * (m * ym / y)[None, :]
            dy = np.linalg.solve(jac, -res)
            t = 1.0
            while np.any(y + t * dy <= 0):
                t *= 0.5
                if t < 1e-8:
                    raise StepFailure("Newton update leaves the positive cone")
            y = y + t * dy
        raise StepFailure("Newton did not converge")


class PlaneBackend:
    """Galerkin coefficients of w for radial fields on R^n."""

    def __init__(self, dim: Dimension, size: int, grid: RadialGrid | None = None):
        self.dim = dim
        self.grid = grid or make_radial_grid()
        g = self.grid
        x = 2 * g.xi - 1
        env = (1 - g.xi) ** (dim.n - 2)
        denv = -(dim.n - 2) * (1 - g.xi) ** (dim.n - 3)
        P = legendre.legvander(x, size - 1).T
        dcoef = legendre.legder(np.eye(size), axis=0)
        dP = legendre.legval(x, dcoef) * 2
        self.env = env
        self.P = P
        self.phi = env * P
        self.dphi = (denv * P + env * dP) * g.dxi_dr
        self.w = g.measure(dim.n) * dim.sphere_area
        self.A = (self.dphi * self.w) @ self.dphi.T
        self.m = float(dim.m)
        self.c = float(dim.c_flow)
        self.p = float(dim.p)

    def values(self, a):
        return a @ self.phi

    def initial(self, data: InitialData) -> np.ndarray:
        sphere = make_sphere_grid(self.dim.n, 48)
        v = ZonalSphereField(self.dim, sphere, data.sphere_values(self.dim, sphere.x))
        w = sphere_to_plane(v, self.grid).profiles[0]
        if np.any(w <= 0):
            raise ValueError("initial data must be positive")
        a, *_ = np.linalg.lstsq(self.P.T, w / self.env, rcond=None)
        return a

    def psi(self, a):
        return self.values(a) ** self.p

    def positivity(self, a):
        # psi with the r^{-(n+2)} decay divided out
        return (self.values(a) / self.env) ** self.p

    def field(self, a) -> ModalField:
        return ModalField.radial(self.dim, self.grid, self.values(a))

    def scale(self, a) -> float:
        return float(np.max(np.abs(self.values(a))))

    def backward_euler(self, a0, ds):
        p, c = self.p, self.c
        phi, w = self.phi, self.w
        psi0 = self.values(a0) ** p
        a = a0.copy()
        norm = float(np.max(np.abs((phi * w) @ psi0))) or 1.0
        for _ in range(40):
            wv = self.values(a)
            if np.any(wv <= 0):
                raise StepFailure("state left the positive cone")
            wp = wv**p
            res = (phi * w) @ ((1 - ds * c) * wp - psi0) + ds * (self.A @ a)
            if np.max(np.abs(res)) <= NEWTON_TOL * norm:
                return a
            jac = (phi * (w * (1 - ds * c) * p * wv ** (p - 1))) @ phi.T + ds * self.A
            da = np.linalg.solve(jac, -res)
            t = 1.0
            while np.any(self.values(a + t * da) <= 0):
                t *= 0.5
                if t < 1e-8:
                    raise StepFailure("Newton update leaves the positive cone")
            a = a + t * da
        raise StepFailure("Newton did not converge")


def make_backend(config: FlowConfig):
    if config.representation == SPHERE:
        return SphereBackend(config.dim, config.sphere_size)
    return PlaneBackend(config.dim, config.basis_size)


@dataclass(frozen=True)
class FlowState:
    s: float
    y: np.ndarray
    field: object
    ds: float
    stepAccepted: bool = True
    diag: dict | None = None


def step(backend, state: FlowState, ds: float, floor: float = 0.0) -> tuple[FlowState, float]:
    """One step-doubling step; returns the extrapolated state and the error estimate."""
    y0 = state.y
    full = backend.backward_euler(y0, ds)
    half = backend.backward_euler(backend.backward_euler(y0, ds / 2), ds / 2)
    y = 2 * half - full
    if np.any(backend.positivity(y) <= floor):
        # extrapolation can overshoot near zero; fall back to the half steps
        y = half
        if np.any(backend.positivity(y) <= floor):
            raise StepFailure("positivity floor reached")
    err = float(np.max(np.abs(half - full))) / max(backend.scale(y0), 1e-300)
    new = FlowState(state.s + ds, y, backend.field(y), ds)
    return new, err


@dataclass
class FlowResult:
    config: FlowConfig
    classification: str
    states: list
    records: list
    steps: dict
    mass0: float
    drift: float
    s_final: float

    @property
    def times(self) -> np.ndarray:
        return np.array([rec["s"] for rec in self.records])


def diagnostics(field_, mass0: float | None = None, lam0: float = 1.0) -> dict:
    """Per-state functionals and the nearest stationary fit."""
    dim = field_.dim
    c = float(dim.c_flow)
    p = float(dim.p)
    mass = critical_mass(field_)
    energy = dirichlet(field_)
    fit = nearest_stationary(field_, lam0)
    kz = energy / mass
    delta = deficit(field_)
    diss = dissipation(field_)
    return {
        "J": flow_energy_J(field_),
        "I": energy_gap_I(field_, fit.W),
        "delta": delta,
        "K0": kz,
        "mass": mass,
        "rhoH1": fit.rhoH1,
        "alpha": (kz / c) ** (1 / (p - 1)),
        "lambda": fit.lam,
        "z": fit.z,
        "gradNorm": math.sqrt(energy),
        "dissipation": diss,
        "boundLeft": delta * delta,
        "boundRight": mass ** (2 / dim.n) * p * diss,
        "tangentResidual": fit.tangentResidual,
        "energyResidual": fit.energyResidual,
    }


def _classify_now(config, mass, mass0, min_psi, floor):
    if min_psi <= floor or mass < config.vanish_fraction * mass0:
        return VANISHED
    if mass > config.blowup_factor * mass0:
        return BLEWUP
    return None


def run(config: FlowConfig, amplitude: float | None = None, record: bool = True,
        step_log: bool = False) -> FlowResult:
    """Integrate from the configured initial data to s_end or until classified.

    With ``record`` the state and diagnostics are stored every ``ds_out``; with
    ``step_log`` J and the dissipation are stored after every accepted step.
    """
    backend = make_backend(config)
    data = config.initial if amplitude is None else replace(config.initial, amplitude=amplitude)
    y = backend.initial(data)
    psi0 = backend.positivity(y)
    floor = config.floor if config.floor is not None else 1e-14 * float(np.max(psi0))
    if floor > 1e-12 * float(np.max(psi0)):
        raise ValueError("floor must not exceed 1e-12 of the initial maximum")
    state = FlowState(0.0, y, backend.field(y), 0.0)
    mass0 = critical_mass(state.field)
    states, records = [], []
    log = {"s": [], "J": [], "D": [], "ds": []}
    lam = 1.0

    def emit(st):
        nonlocal lam
        if not record:
            return
        diag = diagnostics(st.field, mass0, lam) if config.diagnostics else {}
        if diag:
            lam = diag["lambda"]
        diag["s"] = st.s
        diag["dt_accepted"] = st.ds
        states.append(st.field)
        records.append(diag)

    def log_step(st):
        if step_log:
            log["s"].append(st.s)
            log["J"].append(flow_energy_J(st.field))
            log["D"].append(dissipation(st.field))
            log["ds"].append(st.ds)

    emit(state)
    log_step(state)
    ds = config.ds0
    n_out = 1
    next_out = config.ds_out
    masses = [(0.0, mass0)]
    classification = None
    eps_t = 1e-12 * max(1.0, config.s_end)
    while state.s < config.s_end - eps_t:
        target = min(next_out, config.s_end)
        h = min(ds, target - state.s)
        try:
            new, err = step(backend, state, h, floor)
        except (StepFailure, np.linalg.LinAlgError, FloatingPointError) as exc:
            if "floor" in str(exc):
                classification = VANISHED
                break
            ds = h / 2
            if ds < MIN_STEP:
                raise FlowAbort("step size underflow", state) from exc
            continue
        if not config.fixed_step and err > config.tol:
            ds = max(h * max(0.2, 0.9 * math.sqrt(config.tol / err)), MIN_STEP / 2)
            if ds < MIN_STEP:
                raise FlowAbort("step size underflow", state)
            continue
        state = new
        log_step(state)
        if not config.fixed_step:
            factor = 2.0 if err == 0 else min(2.0, max(0.2, 0.9 * math.sqrt(config.tol / err)))
            ds = min(config.ds_max, ds * factor) if h >= ds * (1 - 1e-12) else min(ds, h * factor)
        mass = critical_mass(state.field)
        masses.append((state.s, mass))
        classification = _classify_now(config, mass, mass0, float(np.min(backend.positivity(state.y))), floor)
        if abs(state.s - target) <= eps_t:
            state = replace(state, s=target)
            emit(state)
            n_out += 1
            next_out = (n_out) * config.ds_out
        if classification:
            break
    drift = _mass_drift(masses)
    if classification is None:
        classification = CONVERGED
    return FlowResult(config, classification, states, records,
                      {k: np.array(v) for k, v in log.items()}, mass0, drift, state.s)


def _mass_drift(masses) -> float:
    if len(masses) < 2:
        return 0.0
    tail = masses[-max(2, len(masses) // 10):]
    (s0, m0), (s1, m1) = tail[0], tail[-1]
    return (m1 - m0) / max(s1 - s0, 1e-300)


def _side(result: FlowResult) -> int:
    """-1 for the vanishing side, +1 for the blow-up side, 0 if undecided."""
    if result.classification == VANISHED:
        return -1
    if result.classification == BLEWUP:
        return 1
    return int(np.sign(result.drift))


@dataclass(frozen=True)
class Calibration:
    amplitude: float
    bracket: tuple
    iterations: int
    history: tuple


def calibrate_amplitude(config: FlowConfig, lo: float = 0.5, hi: float = 2.0, tol: float = 1e-10,
                        s_cap: float = 40.0) -> Calibration:
    """Bisect the amplitude factor until the bracket is narrower than ``tol`` (relative).

    Each probe runs without diagnostics up to ``s_cap`` and is classified by
    the mass thresholds, or by the sign of the mass drift at the cap.
    """
    probe = replace(config, s_end=s_cap, diagnostics=False)
    base = config.initial.amplitude
    history = []

    def side(a):
        res = run(probe, amplitude=base * a, record=False)
        history.append((a, res.classification, res.drift))
        return _side(res)

    s_lo, s_hi = side(lo), side(hi)
    if not (s_lo < 0 < s_hi):
        raise CalibrationError(f"amplitudes [{lo}, {hi}] do not bracket the critical value")
    it = 0
    while (hi - lo) > tol * 0.5 * (hi + lo):
        mid = 0.5 * (lo + hi)
        s_mid = side(mid)
        it += 1
        if s_mid < 0:
            lo = mid
        elif s_mid > 0:
            hi = mid
        else:
            lo = hi = mid
            break
    a = 0.5 * (lo + hi)
    return Calibration(base * a, (base * lo, base * hi), it, tuple(history))


def amplitude_scan(config: FlowConfig, amplitudes, s_cap: float = 40.0) -> tuple[list, int]:
    """Classification sides along an amplitude grid and the number of sign flips."""
    probe = replace(config, s_end=s_cap, diagnostics=False)
    sides = [_side(run(probe, amplitude=config.initial.amplitude * a, record=False)) for a in amplitudes]
    flips = sum(1 for u, v in zip(sides[:-1], sides[1:]) if u != v)
    return sides, flips


def run_calibrated(config: FlowConfig, tol: float = 1e-10, lo: float = 0.5, hi: float = 2.0,
                   s_cap: float = 40.0) -> tuple[FlowResult, Calibration]:
    cal = calibrate_amplitude(config, lo, hi, tol, s_cap)
    return run(config, amplitude=cal.amplitude), cal


def energy_slope_errors(steps: dict) -> tuple[np.ndarray, np.ndarray]:
    """Per-step J increments and relative mismatch of (J_{k+1}-J_k)/ds against -(D_k+D_{k+1})/2."""
    J, D, s = steps["J"], steps["D"], steps["s"]
    dJ = np.diff(J)
    slope = dJ / np.diff(s)
    trap = -0.5 * (D[1:] + D[:-1])
    rel = np.abs(slope - trap) / np.maximum(np.abs(trap), 1e-300)
    return dJ, rel


def unstable_rate(dim: Dimension) -> float:
    """Growth rate c (1 - 1/p) of the constant mode linearized at the sphere stationary state."""
    return float(dim.c_flow * (1 - 1 / dim.p))


def decay_rate(dim: Dimension, k: int) -> float:
    """Linearized rate c (1 - (k(k+n-1) + a) / (p a)) of zonal degree k (negative means decay)."""
    a = dim.sphere_shift
    return float(dim.c_flow * (1 - (k * (k + dim.n - 1) + a) / (dim.p * a)))
