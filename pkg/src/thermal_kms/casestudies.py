"""End-to-end evaluations: quadratic interaction at first order, the thermal
mass, and the cubic interaction at second order in the large-time limit.

Normalisation conventions
-------------------------
Hatted quantities are spatial Fourier transforms and carry one factor
(2*pi)**-3 for the external line. The second-order components A_inf and
C_inf carry (2*pi)**-6 in total; the squared two-point function inside them
is the bare two-particle measure :func:`pair_measure` (no extra factor).
The renormalisation term B^c carries (2*pi)**-3.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from .cutoff import CutoffFamily, chidot_hat, chidot_hat_abs2
from .propagators import MEASURE_3D, DomainError, ThermalParams, bose_factors, energy
from .quadrature import (DEFAULT_TOL_ABS, DEFAULT_TOL_REL, EXPONENTIAL, QuadResult, integrate_1d,
                         radial_momentum_integral)

MEASURE_6D = MEASURE_3D ** 2
RHO_INF = 1.0 / (16.0 * math.pi ** 2)


@dataclass
class CaseResult:
    value: complex
    error_estimate: float
    params: ThermalParams
    cutoff: CutoffFamily | None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.error_estimate >= 0:
            raise ValueError("error estimate must be non-negative")
        if not self.meta:
            raise ValueError("provenance must be recorded in meta")

    def to_json_obj(self) -> dict:
        v = complex(self.value)
        return {"value_re": v.real, "value_im": v.imag, "err": float(self.error_estimate),
                "params": asdict(self.params), "cutoff": None if self.cutoff is None else asdict(self.cutoff),
                "meta": self.meta}


@dataclass(frozen=True)
class SpectralDensity:
    """Two-particle Kallen-Lehmann density rho_2(M) for constituents of mass m."""

    mass: float

    def rho2(self, M):
        M = np.asarray(M, dtype=float)
        x = np.clip(1.0 - 4.0 * self.mass ** 2 / np.where(M > 0, M, np.inf) ** 2, 0.0, None)
        val = np.where(M >= 2.0 * self.mass, RHO_INF * np.sqrt(x), 0.0)
        return float(val) if val.ndim == 0 else val


def _b(w, beta):
    return bose_factors(w, beta)[0]


def _phase(x):
    return complex(math.cos(x), math.sin(x))


# -- quadratic interaction, first order

def phi2_B1_hat(t: float, dt: float, p_mag: float, params: ThermalParams, cutoff: CutoffFamily,
                form: str = "corrected") -> complex:
    """KMS correction B^[1] to the time-ordered two-point function at times t +- dt.

    ``form="corrected"`` is the value of the defining u, t3, p0 integrals:
    the static part depends on dt through cos(2w dt), symmetric under exchange
    of the two external points. ``form="displayed"`` keeps an overall factor 2
    on the oscillating part and the phase e^{-2iw dt}. At dt = 0 the static
    parts agree.
    """
    beta = params.beta
    w = energy(p_mag, params.mass)
    b = _b(w, beta)
    osc = (chidot_hat(cutoff, 2 * w) * _phase(-2 * w * t) + chidot_hat(cutoff, -2 * w) * _phase(2 * w * t)) \
        * (-math.expm1(-2 * beta * w)) / (2 * w)
    static = beta * math.exp(-beta * w)
    if form == "displayed":
        return -2.0 * MEASURE_3D * b * b / (4 * w * w) * (osc + static * _phase(-2 * w * dt))
    if form == "corrected":
        return -MEASURE_3D * b * b / (4 * w * w) * (osc + 2.0 * static * math.cos(2 * w * dt))
    raise ValueError(f"unknown form {form!r}")


def phi2_A1_hat(t: float, p_mag: float, params: ThermalParams, cutoff: CutoffFamily) -> complex:
    """Real-time part A^[1] at equal times t inside the region where chi = 1."""
    w = energy(p_mag, params.mass)
    _, bm = bose_factors(w, params.beta)
    osc = chidot_hat(cutoff, 2 * w) * _phase(-2 * w * t) + chidot_hat(cutoff, -2 * w) * _phase(2 * w * t)
    return -MEASURE_3D * (1 + 2 * bm) / (4 * w ** 3) + MEASURE_3D * osc * (1 + 2 * bm) / (8 * w ** 3)


def phi2_A1_time_integral(t: float, p_mag: float, params: ThermalParams, cutoff: CutoffFamily,
                          tol_rel: float = 1e-10) -> QuadResult:
    """A^[1] from its chi-weighted time integral, before integrating by parts."""
    w = energy(p_mag, params.mass)
    _, bm = bose_factors(w, params.beta)
    from .cutoff import chi
    lo = cutoff.support[0]

    def f(ty):
        return chi(cutoff, ty) * (_phase(2 * w * (ty - t)) - _phase(-2 * w * (ty - t)))

    r = integrate_1d(f, lo, t, tol_rel=tol_rel, tol_abs=1e-14, complex_valued=True,
                     points=[cutoff.support[1]], limit=2000)
    pref = -1j * MEASURE_3D * (1 + 2 * bm) / (4 * w * w)
    return QuadResult(pref * r.value, abs(pref) * r.error)


def phi2_F1_hat(p_mag: float, params: ThermalParams, form: str = "corrected") -> float:
    """First-order coefficient of the equal-time two-point function, chi independent.

    ``form="corrected"``: -(2pi)^-3 [beta b+ b- / (2w^2) + (b+ + b-) / (4w^3)],
    the lambda-derivative of the mass-shifted kernel. ``form="displayed"``
    drops the beta in the first term; the two agree only at beta = 1.
    """
    w = energy(p_mag, params.mass)
    bp, bm = bose_factors(w, params.beta)
    first = bp * bm / (2 * w * w)
    if form == "corrected":
        first *= params.beta
    elif form != "displayed":
        raise ValueError(f"unknown form {form!r}")
    return -MEASURE_3D * (first + (bp + bm) / (4 * w ** 3))


def mass_shift_reference(p_mag: float, params: ThermalParams, lam: float) -> tuple[float, float]:
    """Equal-time kernel of the field with m^2 -> m^2 + lam: (exact, first-order expansion)."""
    w2 = p_mag ** 2 + params.mass ** 2 + lam
    if not w2 > 0:
        raise DomainError("w^2 + lambda must be positive")
    wl = math.sqrt(w2)
    bp, bm = bose_factors(wl, params.beta)
    exact = MEASURE_3D * (bp + bm) / (2 * wl)
    w = energy(p_mag, params.mass)
    bp0, bm0 = bose_factors(w, params.beta)
    first = MEASURE_3D * (bp0 + bm0) / (2 * w) + lam * phi2_F1_hat(p_mag, params)
    return exact, first


def mass_shift_derivative(p_mag: float, params: ThermalParams, step: float = 1e-6) -> float:
    """Central finite difference of the mass-shifted kernel at lambda = 0."""
    up, _ = mass_shift_reference(p_mag, params, step)
    dn, _ = mass_shift_reference(p_mag, params, -step)
    return (up - dn) / (2 * step)


def thermal_mass(params: ThermalParams, tol_rel: float = 1e-10) -> QuadResult:
    """m_beta^2 = (2pi)^-3 int d^3p b_-(w)/w."""
    def f(p):
        w = energy(p, params.mass)
        return bose_factors(w, params.beta)[1] / w

    r = radial_momentum_integral(f, params, decay=EXPONENTIAL, tol_rel=tol_rel, tol_abs=1e-300)
    return QuadResult(MEASURE_3D * r.value, MEASURE_3D * r.error)


def phi2_Btilde_inf_00(params: ThermalParams, tol_rel: float = 1e-10) -> QuadResult:
    """Large-time KMS correction at coincident points, -2 (2pi)^-3 int d^3p b^2 beta e^{-beta w}/(4w^2)."""
    beta = params.beta

    def f(p):
        w = energy(p, params.mass)
        b = _b(w, beta)
        return b * b * beta * math.exp(-beta * w) / (4 * w * w)

    r = radial_momentum_integral(f, params, decay=EXPONENTIAL, tol_rel=tol_rel, tol_abs=1e-300)
    return QuadResult(-2 * MEASURE_3D * r.value, 2 * MEASURE_3D * r.error)


# -- two-particle phase space

def pair_measure(g: Callable[..., complex], p_mag: float, params: ThermalParams,
                 tol_rel: float = DEFAULT_TOL_REL, tol_abs: float = 1e-300, M_cut: float = math.inf,
                 log_weighted: bool = False) -> QuadResult:
    """int dp0 g(p0) times the squared thermal two-point function at spatial momentum p.

    Bare measure
        int d^3q b1 b2/(4 w1 w2) [g(w1+w2) + e^{-b w1} g(w2-w1) + e^{-b w2} g(w1-w2) + e^{-b(w1+w2)} g(-w1-w2)]
    with q2 = p - q. At p = 0 this becomes an integral over M = 2 sqrt(q^2 + m^2).
    With ``log_weighted`` the callable is ``g(p0, lw)`` and must return
    e^{lw} g(p0); this keeps e^{-beta M} g(-M) finite when g grows like e^{beta M}.
    """
    m, beta = params.mass, params.beta
    if not log_weighted:
        g0 = g
        g = (lambda p0, lw: math.exp(lw) * g0(p0))
    if p_mag == 0:
        def f(M):
            w = 0.5 * M
            b = _b(w, beta)
            root = math.sqrt(max(0.0, 1.0 - 4 * m * m / (M * M)))
            val = g(M, 0.0) + 2 * g(0.0, -beta * w) + g(-M, -beta * M)
            return 0.5 * math.pi * root * b * b * val

        return integrate_1d(f, 2 * m, M_cut, tol_rel=tol_rel, tol_abs=tol_abs, complex_valued=True, limit=1000)

    def radial(q):
        w1 = energy(q, m)
        b1 = _b(w1, beta)

        def ang(c):
            w2 = math.sqrt(q * q + p_mag * p_mag - 2 * q * p_mag * c + m * m)
            b2 = _b(w2, beta)
            val = (g(w1 + w2, 0.0) + g(w2 - w1, -beta * w1) + g(w1 - w2, -beta * w2)
                   + g(-w1 - w2, -beta * (w1 + w2)))
            return b1 * b2 / (4 * w1 * w2) * val

        r = integrate_1d(ang, -1.0, 1.0, tol_rel=tol_rel, tol_abs=tol_abs, complex_valued=True)
        return 2 * math.pi * q * q * r.value

    q_hi = math.inf if not math.isfinite(M_cut) else math.sqrt(max(0.0, (M_cut / 2) ** 2 - m * m))
    return integrate_1d(radial, 0.0, q_hi, tol_rel=tol_rel, tol_abs=tol_abs, complex_valued=True, limit=1000)


def khallen_lehmann_yhat(p0, p_mag: float, params: ThermalParams) -> float:
    """Vacuum part: -theta(p0^2 - p^2 - 4m^2) rho_2(sqrt(p0^2 - p^2)) sign(p0)."""
    s = p0 * p0 - p_mag * p_mag
    if s < 4 * params.mass ** 2:
        return 0.0
    return -SpectralDensity(params.mass).rho2(math.sqrt(s)) * math.copysign(1.0, p0)


def khallen_lehmann_uhat(p0: float, p_mag: float, params: ThermalParams, tol_rel: float = 1e-10) -> float:
    """Thermal part: density in p0 of
    (2pi)^-6 2 int d^3q b(w2)/(4 w1 w2) e^{-beta w2} [d(p0-w1-w2) - d(p0+w1-w2) + d(p0-w1+w2) - d(p0+w1+w2)].
    """
    m, beta = params.mass, params.beta
    if p0 == 0:
        return 0.0
    if p_mag == 0:
        w = 0.5 * abs(p0)
        if w <= m:
            return 0.0
        q = math.sqrt(w * w - m * m)
        _, bm = bose_factors(w, beta)
        # w1 = w2 = w on both surviving deltas (p0 = +-2w)
        return MEASURE_6D * math.pi * q * bm / w * math.copysign(1.0, p0)
    # general p: with q dq = w1 dw1 and the angular Jacobian w2/(q p), each delta leaves
    # (2pi/4p) int dw1 b_-(w2) over the w1 range where |q1 - p| <= q2 <= q1 + p; w2 is
    # linear in w1, so the integral is a difference of F(w) = log(1 - e^{-beta w})/beta.
    def F(w):
        return math.log(-math.expm1(-beta * w)) / beta

    w_hi = abs(p0) + 2 * m + p_mag + 60.0 / beta
    grid = np.linspace(m, w_hi, 1201)
    # for p0 = +-(w1 + w2) the support is a band of width ~p around w1 = |p0|/2
    c = 0.5 * abs(p0)
    if c > m:
        grid = np.union1d(grid, np.clip(np.linspace(c - 2 * p_mag, c + 2 * p_mag, 201), m, w_hi))
    total = 0.0
    for s1, s2, sg in ((1, 1, 1.0), (-1, 1, -1.0), (1, -1, 1.0), (-1, -1, -1.0)):  # p0 = s1 w1 + s2 w2
        def margin(w1):
            w2 = s2 * (p0 - s1 * w1)
            if w2 <= m:
                return -1.0 - (m - w2)
            q1 = math.sqrt(max(w1 * w1 - m * m, 0.0))
            q2 = math.sqrt(w2 * w2 - m * m)
            return min(q2 - abs(q1 - p_mag), q1 + p_mag - q2)

        w2g = s2 * (p0 - s1 * grid)
        q1g = np.sqrt(np.maximum(grid * grid - m * m, 0.0))
        q2g = np.sqrt(np.maximum(w2g * w2g - m * m, 0.0))
        vals = np.where(w2g > m, np.minimum(q2g - np.abs(q1g - p_mag), q1g + p_mag - q2g), -1.0)
        inside = vals >= 0
        edges = []
        for i in range(len(grid) - 1):
            if inside[i] != inside[i + 1]:
                edges.append(optimize.brentq(margin, grid[i], grid[i + 1], xtol=1e-15, rtol=1e-15))
        if inside[0]:
            edges.insert(0, grid[0])
        if inside[-1]:
            edges.append(grid[-1])
        for a, b in zip(edges[::2], edges[1::2]):
            wa, wb = s2 * (p0 - s1 * a), s2 * (p0 - s1 * b)
            total += sg * abs(F(wb) - F(wa))
    return MEASURE_6D * 2 * 2 * math.pi / (4 * p_mag) * total


def khallen_lehmann_qhat(p0: float, p_mag: float, params: ThermalParams) -> float:
    """Q-hat = Y-hat + U-hat, odd in p0."""
    return khallen_lehmann_yhat(p0, p_mag, params) + khallen_lehmann_uhat(p0, p_mag, params)


# -- cubic interaction, second order, large-time limit

def _xi(x, beta, lw=0.0):
    """e^{lw} (1 - e^{-beta x}) / x^2, without intermediate overflow."""
    if lw == 0.0:
        return -math.expm1(-beta * x) / (x * x)
    return (math.exp(lw) - math.exp(lw - beta * x)) / (x * x)


def _g_A(p0, lw, w, params, cutoff, heaviside=False):
    beta = params.beta
    b = _b(w, beta)
    k1 = 1.0 if heaviside else chidot_hat_abs2(cutoff, p0 - w)
    k2 = 1.0 if heaviside else chidot_hat_abs2(cutoff, p0 + w)
    out = 0.0
    if p0 != w:
        out += k1 * _xi(p0 - w, beta, lw) * b * math.exp(-beta * w) / (4 * w * w)
    if p0 != -w:
        out -= k2 * _xi(p0 + w, beta, lw) * b / (4 * w * w)
    return out


def _c_bracket(x, beta, lw=0.0):
    # e^{lw} [(1 - e^{-beta x})/x^2 - beta/x], finite at x = 0
    if abs(beta * x) < 1e-4:
        bx = beta * x
        return -math.exp(lw) * beta * beta * (0.5 - bx / 6 + bx * bx / 24)
    return _xi(x, beta, lw) - math.exp(lw) * beta / x


def _g_C(p0, lw, w, params, cutoff, heaviside=False):
    beta = params.beta
    b = _b(w, beta)
    k1 = 1.0 if heaviside else chidot_hat_abs2(cutoff, w - p0)
    k2 = 1.0 if heaviside else chidot_hat_abs2(cutoff, w + p0)
    pref = -b * b * math.exp(-beta * w) / (4 * w * w)
    return pref * (k1 * _c_bracket(p0 - w, beta, lw) + k2 * _c_bracket(p0 + w, beta, lw))


def phi3_Ainf(dt: float, p_mag: float, params: ThermalParams, cutoff: CutoffFamily,
              tol_rel: float = DEFAULT_TOL_REL, M_cut: float = math.inf) -> QuadResult:
    """Large-time real-time/KMS cross term A_inf, symmetrised in the external times."""
    w = energy(p_mag, params.mass)
    r = pair_measure(lambda p0, lw: _g_A(p0, lw, w, params, cutoff), p_mag, params, tol_rel=tol_rel,
                     M_cut=M_cut, log_weighted=True)
    pref = MEASURE_6D * math.cos(2 * w * dt)
    return QuadResult(pref * r.value, abs(pref) * r.error)


def phi3_Cinf(dt: float, p_mag: float, params: ThermalParams, cutoff: CutoffFamily,
              tol_rel: float = DEFAULT_TOL_REL, M_cut: float = math.inf) -> QuadResult:
    """Large-time double-KMS term C_inf, symmetrised in the external times."""
    w = energy(p_mag, params.mass)
    r = pair_measure(lambda p0, lw: _g_C(p0, lw, w, params, cutoff), p_mag, params, tol_rel=tol_rel,
                     M_cut=M_cut, log_weighted=True)
    pref = MEASURE_6D * math.cos(2 * w * dt)
    return QuadResult(pref * r.value, abs(pref) * r.error)


def phi3_Bc(params: ThermalParams, p_mag: float = 0.0) -> float:
    """Renormalisation-freedom term (2pi)^-3 c beta b(w)^2 e^{-beta w} / (4w^2)."""
    w = energy(p_mag, params.mass)
    b = _b(w, params.beta)
    return MEASURE_3D * params.renorm_c * params.beta * b * b * math.exp(-params.beta * w) / (4 * w * w)


def phi3_Binf_check(dt: float, p_mag: float, params: ThermalParams, cutoff: CutoffFamily,
                    p0_cut: float = 200.0, tol_rel: float = 1e-8) -> QuadResult:
    """Large-time B_inf with the p0 integral cut symmetrically at |p0| <= p0_cut.

    Integrand: (2pi)^-3 beta cos(2w dt) [h(p0-w) + h(p0+w)] b^2 e^{-beta w}/(4w^2) Q-hat(p0),
    h(x) = (1 - |chidot_hat(x)|^2)/x. Both h-bracket and Q-hat are odd in p0, so the
    integrand is even; its large-|p0| tail falls like 1/|p0| and the cut matters.
    """
    beta = params.beta
    w = energy(p_mag, params.mass)
    b = _b(w, beta)

    def h(x):
        if abs(x) < 1e-8:
            return 0.0  # (1 - |chidot_hat|^2)/x -> 0, |chidot_hat|^2 = 1 - O(x^2)
        return (1.0 - chidot_hat_abs2(cutoff, x)) / x

    def f(p0):
        return (h(p0 - w) + h(p0 + w)) * khallen_lehmann_qhat(p0, p_mag, params)

    thr = math.sqrt(4 * params.mass ** 2 + p_mag ** 2)
    pts = sorted({-thr, -w, 0.0, w, thr})
    r = integrate_1d(f, -p0_cut, p0_cut, tol_rel=tol_rel, tol_abs=1e-300, points=pts, limit=4000,
                     complex_valued=False)
    pref = MEASURE_3D * beta * math.cos(2 * w * dt) * b * b * math.exp(-beta * w) / (4 * w * w)
    return QuadResult(pref * r.value, abs(pref) * r.error, r.budget_exceeded)


def _displayed_bracket(M, params, k):
    """Integrand of the displayed M-integral (without the outer prefactor)."""
    m, beta = params.mass, params.beta
    bm_ = _b(m, beta)
    root = math.sqrt(max(0.0, 1.0 - 4 * m * m / (M * M)))
    bM = _b(0.5 * M, beta)
    km, kp, k0 = k(M - m), k(M + m), k(m)
    br = (beta * bm_ * (-math.expm1(-beta * M)) * (km / (M - m) + kp / (M + m))
          + (math.exp(-beta * m) - math.exp(-beta * M)) * km / (M - m) ** 2
          + math.expm1(-beta * (M + m)) * kp / (M + m) ** 2
          - 2 * math.exp(-0.5 * beta * M) * k0 / (m * m) / bm_)
    return root * bM * bM * br


def phi3_F2inf_00(params: ThermalParams, cutoff: CutoffFamily, form: str = "displayed",
                  M_cut: float = math.inf, heaviside: bool = False, tol_rel: float = 1e-9) -> QuadResult:
    """Second-order large-time correction at dt = 0, p = 0.

    ``form="displayed"``: the closed M-integral exactly as written, c-term
    with (2pi)^-6. ``form="derived"``: A_inf(0,0) + C_inf(0,0) + B^c, each
    from its own p0 representation. ``heaviside`` replaces |chidot_hat|^2 by 1
    (the sharp-switching limit), for which the M-integral diverges.
    """
    m, beta = params.mass, params.beta
    if form == "displayed":
        k = (lambda x: 1.0) if heaviside else (lambda x: chidot_hat_abs2(cutoff, x))
        r = integrate_1d(lambda M: _displayed_bracket(M, params, k), 2 * m, M_cut, tol_rel=tol_rel,
                         tol_abs=1e-300, complex_valued=False, limit=2000)
        bm_ = _b(m, beta)
        pref = MEASURE_6D * math.pi / 8 * math.exp(-beta * m) / (m * m) * bm_
        cterm = MEASURE_6D * params.renorm_c * beta * bm_ * bm_ / (4 * m * m) * math.exp(-beta * m)
        return QuadResult(cterm + pref * r.value, abs(pref) * r.error, r.budget_exceeded)
    if form == "derived":
        w = m
        g = (lambda p0, lw: _g_A(p0, lw, w, params, cutoff, heaviside) + _g_C(p0, lw, w, params, cutoff, heaviside))
        r = pair_measure(g, 0.0, params, tol_rel=tol_rel, M_cut=M_cut, log_weighted=True)
        return QuadResult(MEASURE_6D * r.value.real + phi3_Bc(params), MEASURE_6D * r.error)
    raise ValueError(f"unknown form {form!r}")


def heaviside_witness(params: ThermalParams, cutoff: CutoffFamily, M_cuts=(10.0, 100.0, 1000.0),
                      form: str = "displayed") -> list[float]:
    """M-integral of F2inf(0,0) with |chidot_hat|^2 -> 1, truncated at each M cut."""
    return [phi3_F2inf_00(params, cutoff, form=form, M_cut=Mc, heaviside=True).value for Mc in M_cuts]
