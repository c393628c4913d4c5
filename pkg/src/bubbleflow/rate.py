"""Post-processing of flow trajectories: nearest stationary profile, renormalized
profile, exponential fits, Cauchy-in-time checks and the weighted sup residual.

The stationary family of the rescaled flow is v_c[z, lambda] with c = (n+2)/4.
On the sphere only z = 0 is zonal, so the fit there is one-dimensional in
lambda; planar ModalFields use the axial (z, lambda) fit of the projection
module, whose objective has the same maximizer.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .bubble import bubble_dlam_rt, bubble_rt
from .conformal import StereographicMap, stationary_on_sphere
from .core import Dimension, ModalField, ZonalSphereField
from .functionals import critical_mass, dirichlet, k0, lp_norm
from .grid import (
    analyze,
    conformal_energy,
    dirichlet_form,
    make_angular_grid,
    synthesize,
    tensor_integral,
    tensor_points,
)
from .projection import project_to_bubble


@dataclass(frozen=True)
class StationaryFit:
    W: object
    rho: object
    lam: float
    z: float
    rhoH1: float
    tangentResidual: float
    energyResidual: float
    massResidual: float
    converged: bool

    @property
    def residuals(self) -> tuple:
        """Normalized int grad W . grad rho and c int W^p rho (both vanish at W = w)."""
        return (self.energyResidual, self.massResidual)


def _sphere_profile(dim: Dimension, grid, lam: float) -> ZonalSphereField:
    return stationary_on_sphere(dim, grid, lam)


def _fit_sphere_lambda(v: ZonalSphereField, lam0: float = 1.0, maxiter: int = 60):
    dim = v.dim
    p = float(dim.p)
    beta = (dim.n - 2) / 2
    x = v.grid.x
    t = np.log(lam0)
    for _ in range(maxiter):
        lam = np.exp(t)
        V = _sphere_profile(dim, v.grid, lam).samples
        base = 1 - x + lam * lam * (1 + x)
        L1 = p * beta * (1 - x - lam * lam * (1 + x)) / base
        L11 = -4 * p * beta * lam * lam * (1 - x * x) / base**2
        f = v.samples * V**p
        G = v.grid.integrate(f)
        g1 = v.grid.integrate(f * L1)
        g2 = v.grid.integrate(f * (L11 + L1 * L1))
        if abs(g1) <= 1e-14 * abs(G):
            return lam, True
        step = -g1 / g2 if g2 < 0 else np.sign(g1) * 0.5
        t += float(np.clip(step, -1.0, 1.0))
    return float(np.exp(t)), False


def nearest_stationary(w, lam0: float = 1.0) -> StationaryFit:
    """Closest member of the stationary family in the (conformal) Dirichlet norm."""
    dim = w.dim
    c = float(dim.c_flow)
    p = float(dim.p)
    if isinstance(w, ZonalSphereField):
        if not w.positive():
            raise ValueError("state must be positive")
        lam, ok = _fit_sphere_lambda(w, lam0)
        z = 0.0
        W = _sphere_profile(dim, w.grid, lam)
        x = w.grid.x
        base = 1 - x + lam * lam * (1 + x)
        dW = ZonalSphereField(dim, w.grid, W.samples * (dim.n - 2) / 2 * (1 - x - lam * lam * (1 + x)) / base)
        rho = w - W
        energy = conformal_energy

        def mass_pair(a, b):
            return w.grid.integrate(a.samples ** p * b.samples)
    elif isinstance(w, ModalField):
        proj = project_to_bubble(w)
        lam, z = proj.params.scale, float(proj.params.center)
        if w.lmax == 0:
            # a radial field is exactly symmetric: keep the family radial
            z = 0.0
        ok = proj.converged
        W, dW = _planar_profile(w, z, lam)
        rho = w.with_lmax(W.lmax) - W
        energy = dirichlet_form
        ang = make_angular_grid(dim.n, W.lmax)

        def mass_pair(a, b):
            return tensor_integral(np.abs(synthesize(a, ang)) ** p * synthesize(b, ang), w.grid, ang, dim)
    else:
        raise TypeError("unsupported state type")
    wn = np.sqrt(energy(w, w))
    rhoH1 = float(np.sqrt(max(energy(rho, rho), 0.0)))
    Wn = np.sqrt(energy(W, W))
    dn = np.sqrt(energy(dW, dW))
    tangent = abs(energy(dW, rho)) / (dn * wn) if dn > 0 else 0.0
    e_res = abs(energy(W, rho)) / (Wn * wn)
    m_res = abs(c * mass_pair(W, rho)) / (Wn * wn)
    return StationaryFit(W, rho, float(lam), z, rhoH1, float(tangent), float(e_res), float(m_res), bool(ok))


def _planar_profile(w: ModalField, z: float, lam: float):
    dim = w.dim
    c = float(dim.c_flow)
    lmax = w.lmax if z == 0 else max(w.lmax, 1)
    ang = make_angular_grid(dim.n, lmax)
    r, t = tensor_points(w.grid, ang)
    W = ModalField(dim, w.grid, analyze(bubble_rt(dim, r, t, c, z, lam), ang), w.axis)
    # d/d(log lambda) of v_c = c^{-1/(p-1)} lambda dv_1/dlambda
    scale = c ** (-(dim.n - 2) / 4) * lam
    dW = ModalField(dim, w.grid, analyze(scale * bubble_dlam_rt(dim, r, t, 1.0, z, lam), ang), w.axis)
    return W, dW


@dataclass(frozen=True)
class RenormalizedProfile:
    alpha: float
    K0: float
    W_hat: object
    distance: float
    lam: float
    z: float


def renormalized_profile(w, fit: StationaryFit | None = None) -> RenormalizedProfile:
    """alpha = ((1-m) K0(w))^{1/(p-1)} and W_hat = alpha W_bar = v_c[z, lambda].

    W_bar = K0(w)^{-1/(p-1)} v_1[z, lambda] is the bubble approximating w with
    its own K0; the (z, lambda) come from the nearest-bubble fit, which is
    amplitude independent.
    """
    dim = w.dim
    kz = k0(w)
    p = float(dim.p)
    alpha = (kz / float(dim.c_flow)) ** (1 / (p - 1))
    fit = fit or nearest_stationary(w)
    W_hat = fit.W
    diff = w - W_hat if isinstance(w, ZonalSphereField) else w.with_lmax(W_hat.lmax) - W_hat
    dist = float(np.sqrt(max(dirichlet(diff), 0.0)))
    return RenormalizedProfile(float(alpha), float(kz), W_hat, dist, fit.lam, fit.z)


@dataclass(frozen=True)
class ExponentialFit:
    rate: float
    prefactor: float
    r2: float
    samples: int


def fit_exponential(s, values, window=None, min_samples: int = 10) -> ExponentialFit:
    """Least-squares line through (s, log value); rate = -slope."""
    s = np.asarray(s, dtype=float)
    y = np.asarray(values, dtype=float)
    if window is not None:
        sel = (s >= window[0]) & (s <= window[1])
        s, y = s[sel], y[sel]
    if s.size < min_samples:
        raise ValueError(f"window holds {s.size} samples, need at least {min_samples}")
    if np.any(~np.isfinite(y)) or np.any(y <= 0):
        raise ValueError("values must be positive in the fit window")
    ly = np.log(y)
    A = np.vstack([s, np.ones_like(s)]).T
    (slope, icpt), *_ = np.linalg.lstsq(A, ly, rcond=None)
    pred = A @ np.array([slope, icpt])
    ss_res = float(np.sum((ly - pred) ** 2))
    ss_tot = float(np.sum((ly - ly.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    return ExponentialFit(float(-slope), float(np.exp(icpt)), r2, int(s.size))


def _trapezoid(y, x):
    return float(np.trapezoid(y, x)) if hasattr(np, "trapezoid") else float(np.trapz(y, x))


def _cumulative_tail(s, f):
    # int_{s_i}^{s_end} f, trapezoid
    seg = 0.5 * (f[1:] + f[:-1]) * np.diff(s)
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    return tail


@dataclass(frozen=True)
class CauchyReport:
    passed: bool
    constant: float
    pairs: int
    blockMargins: tuple
    blockPassed: bool
    tailRate: float | None
    reason: str = ""


def cauchy_tail_check(s, states, delta, pairs: int = 20, min_density: int = 4) -> CauchyReport:
    """Check int |w(s)-w(t)|^{2*} <= C int_t^s delta, the unit-block Cauchy-Schwarz bound
    and the exponential decay of int_t^inf delta.

    ``states`` are the recorded fields at times ``s``; integrals in time use the
    trapezoid rule.  The reported constant is the largest observed ratio.
    """
    s = np.asarray(s, dtype=float)
    delta = np.asarray(delta, dtype=float)
    if s.size < 2 or np.any(np.diff(s) <= 0):
        raise ValueError("need increasing sample times")
    per_unit = (s.size - 1) / max(s[-1] - s[0], 1e-300)
    if per_unit < min_density:
        raise ValueError("trajectory sampled too sparsely for the time integrals")
    dim = states[0].dim
    q = float(dim.two_star)
    idx = np.linspace(0, s.size - 1, min(pairs + 1, s.size)).astype(int)
    ratios = []
    for a, b in zip(idx[:-1], idx[1:]):
        for i, j in ((a, b), (idx[0], b)):
            if j <= i:
                continue
            lhs = lp_norm(states[j] - states[i], q) ** q
            rhs = _trapezoid(delta[i: j + 1], s[i: j + 1])
            if rhs > 0:
                ratios.append(lhs / rhs)
            elif lhs > 1e-14:
                return CauchyReport(False, float("inf"), len(ratios), (), False, None,
                                    "left side positive while deficit integral vanishes")
    constant = max(ratios) if ratios else 0.0

    margins = []
    k = np.floor(s[0])
    while k + 1 <= s[-1] + 1e-12:
        sel = (s >= k - 1e-12) & (s <= k + 1 + 1e-12)
        if np.count_nonzero(sel) >= 2:
            lin = _trapezoid(delta[sel], s[sel])
            sq = _trapezoid(delta[sel] ** 2, s[sel])
            margins.append(sq - lin * lin)
        k += 1
    block_ok = all(m >= -1e-14 * max(1.0, abs(m)) for m in margins)

    tail = _cumulative_tail(s, delta)
    tail_rate = None
    pos = tail[:-1] > 0
    if np.count_nonzero(pos) >= 10 and np.max(tail) > 0:
        try:
            tail_rate = fit_exponential(s[:-1][pos], tail[:-1][pos]).rate
        except ValueError:
            tail_rate = None
    passed = bool(np.isfinite(constant) and block_ok)
    return CauchyReport(passed, float(constant), len(ratios), tuple(margins), block_ok, tail_rate)


def weighted_sup_residual(w, reference) -> float:
    """max over nodes of (1 + r^{n+2}) |w^p - W^p| in planar variables.

    For sphere states the planar values are w = Omega^{(n-2)/2} v at the
    stereographic preimages of the nodes, so w^p = Omega^{(n+2)/2} v^p.
    """
    dim = w.dim
    p = float(dim.p)
    n = dim.n
    if isinstance(w, ZonalSphereField):
        r = StereographicMap.radius(w.grid.x)
        omega = StereographicMap.conformal_factor(r)
        weight = (1 + r ** (n + 2)) * omega ** ((n + 2) / 2)
        diff = w.samples**p - reference.samples**p
        return float(np.max(weight * np.abs(diff)))
    if isinstance(w, ModalField):
        lmax = max(w.lmax, reference.lmax)
        ang = make_angular_grid(n, lmax, max(2 * lmax + 16, 24) if lmax else 1)
        a = synthesize(w.with_lmax(lmax), ang)
        b = synthesize(reference.with_lmax(lmax), ang)
        r = w.grid.r[:, None]
        return float(np.max((1 + r ** (n + 2)) * np.abs(a**p - b**p)))
    raise TypeError("unsupported state type")


@dataclass(frozen=True)
class RateReport:
    applicable: bool
    fitWindow: tuple | None = None
    kappaFit: float | None = None
    kappaRho: float | None = None
    r2: float | None = None
    r2Rho: float | None = None
    ratioBand: tuple | None = None
    thetaSup: float | None = None
    thetaRate: float | None = None
    thetaR2: float | None = None
    massBand: tuple | None = None
    distanceRate: float | None = None
    cauchy: CauchyReport | None = None
    reason: str = ""
    series: dict = field(default_factory=dict, repr=False, compare=False)

    def as_dict(self) -> dict:
        out = {k: getattr(self, k) for k in (
            "applicable", "fitWindow", "kappaFit", "kappaRho", "r2", "r2Rho", "ratioBand",
            "thetaSup", "thetaRate", "thetaR2", "massBand", "distanceRate", "reason")}
        if self.cauchy is not None:
            c = self.cauchy
            out["cauchy"] = {"passed": c.passed, "constant": c.constant, "pairs": c.pairs,
                             "blockPassed": c.blockPassed, "tailRate": c.tailRate}
        return out


def select_window(s, closeness, gap=None, start_below: float = 0.1, noise: float = 1e-8,
                  growth: float = 0.0):
    """Indices [a, b] of the fit window.

    Starts where ||grad rho|| / ||grad w|| first drops below ``start_below``;
    ends before the ratio (or the energy gap, when given) stops decreasing,
    before the gap turns non-positive, or when the ratio falls under 10x the
    noise level ``noise * exp(growth * s)`` (a residual unstable component of
    relative size ``noise`` growing at rate ``growth``).
    """
    s = np.asarray(s, dtype=float)
    q = np.asarray(closeness, dtype=float)
    I = None if gap is None else np.asarray(gap, dtype=float)
    below = np.nonzero(q < start_below)[0]
    if below.size == 0:
        return None
    a = int(below[0])
    if I is not None and I[a] <= 0:
        return None
    b = a
    level = 10 * noise * np.exp(growth * (s - s[0]))
    while b + 1 < q.size and q[b + 1] < q[b] and q[b + 1] > level[b + 1]:
        if I is not None and not (0 < I[b + 1] < I[b]):
            break
        b += 1
    return a, b


def rate_fit(s, states, records, start_below: float = 0.1, noise: float = 1e-8,
             growth: float = 0.0) -> RateReport:
    """Fit the exponential decay of I and ||grad rho||^2 over the automatic window.

    ``records`` is a sequence of mappings with keys I, rhoH1, delta, mass and
    gradNorm (the Dirichlet norm of the state).  ``noise`` and ``growth``
    describe the noise floor, see :func:`select_window`.
    """
    s = np.asarray(s, dtype=float)
    I = np.array([r["I"] for r in records])
    rho = np.array([r["rhoH1"] for r in records])
    wn = np.array([r["gradNorm"] for r in records])
    delta = np.array([r["delta"] for r in records])
    mass = np.array([r["mass"] for r in records])
    if np.all(rho <= 1e-12 * wn):
        return RateReport(False, reason="stationary trajectory: nothing decays")
    win = select_window(s, rho / wn, I, start_below, noise, growth)
    if win is None or win[1] - win[0] + 1 < 10:
        return RateReport(False, reason="no fit window with at least 10 samples")
    a, b = win
    sl = slice(a, b + 1)
    try:
        fI = fit_exponential(s[sl], I[sl])
        fR = fit_exponential(s[sl], rho[sl] ** 2)
    except ValueError as exc:
        return RateReport(False, fitWindow=(s[a], s[b]), reason=str(exc))
    ratio = I[sl] / rho[sl] ** 2
    final = nearest_stationary(states[b])
    theta = np.array([weighted_sup_residual(states[i], final.W) for i in range(a, b)])
    dist = np.array([lp_norm(states[i] - final.W if isinstance(states[i], ZonalSphereField)
                             else states[i].with_lmax(final.W.lmax) - final.W,
                             float(states[i].dim.two_star)) for i in range(a, b)])
    theta_fit = _safe_fit(s[a:b], theta)
    dist_fit = _safe_fit(s[a:b], dist)
    try:
        cauchy = cauchy_tail_check(s[sl], states[a: b + 1], delta[sl])
    except ValueError as exc:
        cauchy = CauchyReport(False, float("nan"), 0, (), False, None, str(exc))
    return RateReport(
        applicable=True,
        fitWindow=(float(s[a]), float(s[b])),
        kappaFit=fI.rate,
        kappaRho=fR.rate,
        r2=fI.r2,
        r2Rho=fR.r2,
        ratioBand=(float(ratio.min()), float(ratio.max())),
        thetaSup=float(theta[-1]) if theta.size else None,
        thetaRate=None if theta_fit is None else theta_fit.rate,
        thetaR2=None if theta_fit is None else theta_fit.r2,
        massBand=(float(mass[sl].min()), float(mass[sl].max())),
        distanceRate=None if dist_fit is None else dist_fit.rate,
        cauchy=cauchy,
        series={"s": s[sl], "I": I[sl], "rho2": rho[sl] ** 2, "theta": theta, "theta_s": s[a:b],
                "fitI": fI, "fitRho": fR},
    )


def _safe_fit(s, y):
    try:
        return fit_exponential(s, y)
    except ValueError:
        return None


def mass_power(w) -> float:
    """(int w^{2*})^{2/n}, the factor in the deficit-dissipation bound."""
    return critical_mass(w) ** (2 / w.dim.n)

