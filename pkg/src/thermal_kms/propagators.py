"""Two-point kernels of the free thermal scalar field in the mixed
(time, spatial momentum) representation.

All kernels exclude the ``(2*pi)**-3`` factor of the inverse spatial Fourier
transform; that factor lives in :data:`MEASURE_3D` and is applied by whoever
integrates over a spatial momentum.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

#: Measure factor for one spatial momentum integral, f(x) = MEASURE_3D * int d^3p f(p) e^{-ipx}.
MEASURE_3D = (2.0 * math.pi) ** -3


class DomainError(ValueError):
    """Raised when a kernel is evaluated outside its domain."""


@dataclass(frozen=True)
class ThermalParams:
    """Inverse temperature, mass, coupling and renormalization constant."""

    beta: float
    mass: float
    coupling: float = 1.0
    renorm_c: float = 0.0

    def __post_init__(self):
        if not self.beta > 0:
            raise DomainError(f"beta must be positive, got {self.beta}")
        if not self.mass > 0:
            raise DomainError(f"mass must be positive (massless theory unsupported), got {self.mass}")

    @property
    def temperature(self) -> float:
        return 1.0 / self.beta


@dataclass(frozen=True)
class OnShellWeights:
    """Complex weights multiplying delta(p0 - w) and delta(p0 + w)."""

    weight_plus: complex
    weight_minus: complex


@dataclass(frozen=True)
class MatsubaraIndex:
    n: int
    beta: float

    @property
    def nu(self) -> float:
        return 2.0 * math.pi * self.n / self.beta


def energy(p_mag, m):
    """On-shell energy sqrt(p^2 + m^2)."""
    p_mag = np.asarray(p_mag, dtype=float)
    if np.any(p_mag < 0):
        raise DomainError("momentum magnitude must be non-negative")
    if not m > 0:
        raise DomainError("mass must be positive")
    w = np.hypot(p_mag, m)
    return w if w.ndim else float(w)


def bose_factors(w, beta):
    """Return ``(b_plus, b_minus)`` with b+ = 1/(1 - e^{-beta w}), b- = 1/(e^{beta w} - 1).

    ``b_plus - b_minus == 1`` identically; both are evaluated with ``expm1``
    so that small ``beta * w`` keeps full relative precision.
    """
    w = np.asarray(w, dtype=float)
    if np.any(w <= 0):
        raise DomainError("Bose factors have a pole at w = 0; need w > 0")
    if not beta > 0:
        raise DomainError("beta must be positive")
    x = beta * w
    # written in e^{-x} so that large beta*w underflows quietly instead of overflowing
    b_plus = -1.0 / np.expm1(-x)
    b_minus = np.exp(-x) * b_plus
    if b_plus.ndim == 0:
        return float(b_plus), float(b_minus)
    return b_plus, b_minus


def _check_u(u, beta, lo, hi):
    if not (lo <= u <= hi):
        raise DomainError(f"imaginary time u={u} outside [{lo}, {hi}] for beta={beta}")


def wightman_mixed(t: float, u: float, p_mag: float, params: ThermalParams) -> complex:
    """Analytically continued Wightman kernel at complex time t + i u, u in [-beta, 0].

    (b+/2w) (e^{u w - i t w} + e^{-beta w - u w + i t w})
    """
    beta = params.beta
    _check_u(u, beta, -beta, 0.0)
    w = energy(p_mag, params.mass)
    b_plus, _ = bose_factors(w, beta)
    phase = complex(math.cos(t * w), -math.sin(t * w))
    return b_plus / (2.0 * w) * (math.exp(u * w) * phase
                                 + math.exp(-beta * w - u * w) * phase.conjugate())


def thermal_mixed(t: float, u: float, p_mag: float, params: ThermalParams) -> complex:
    """Thermal propagator on the strip -beta < u < beta.

    Equal to the Wightman kernel for u < 0, to its reflection for u > 0,
    and to the Feynman (time-ordered) boundary value on u = 0.
    """
    beta = params.beta
    if not (-beta < u < beta):
        raise DomainError(f"u={u} outside the open strip (-beta, beta)")
    if u < 0:
        return wightman_mixed(t, u, p_mag, params)
    if u > 0:
        return wightman_mixed(-t, -u, p_mag, params)
    if t == 0:
        raise DomainError("thermal propagator is singular at (t, u) = (0, 0)")
    return wightman_mixed(abs(t), 0.0, p_mag, params)


def feynman_mixed(t, p_mag, params):
    return wightman_mixed(abs(t), 0.0, p_mag, params)


def anti_feynman_mixed(t, p_mag, params):
    return wightman_mixed(-abs(t), 0.0, p_mag, params)


def commutator_mixed(t, p_mag, params):
    """-i (Delta_+ - Delta_-) at equal position; equals -sin(w t)/w."""
    return -1j * (wightman_mixed(t, 0.0, p_mag, params) - wightman_mixed(-t, 0.0, p_mag, params))


def realtime_matrix_entry(a: int, b: int, t: float, p_mag: float, params: ThermalParams) -> complex:
    """Entry (a, b) of the 2x2 real-time propagator at time separation t.

    ``t`` is the time of the branch-``a`` point minus that of the branch-``b``
    point. Branch-2 fields stand to the left of branch-1 fields, so
    (2,1) = Delta_+(t) and (1,2) = Delta_+(-t) = Delta_-(t); the diagonal holds
    the Feynman (1,1) and anti-Feynman (2,2) propagators.
    """
    if (a, b) == (1, 1):
        return feynman_mixed(t, p_mag, params)
    if (a, b) == (2, 2):
        return anti_feynman_mixed(t, p_mag, params)
    if (a, b) == (2, 1):
        return wightman_mixed(t, 0.0, p_mag, params)
    if (a, b) == (1, 2):
        return wightman_mixed(-t, 0.0, p_mag, params)
    raise DomainError(f"branch indices must be 1 or 2, got ({a}, {b})")


def matsubara_weights(n: MatsubaraIndex | int, p_mag: float, params: ThermalParams) -> OnShellWeights:
    """On-shell weights of the Matsubara component n of the thermal propagator."""
    if not isinstance(n, MatsubaraIndex):
        n = MatsubaraIndex(int(n), params.beta)
    w = energy(p_mag, params.mass)
    denom = 1.0 / (w * w + n.nu * n.nu)
    im = math.pi * n.n / (params.beta * w)
    return OnShellWeights(denom * complex(0.5, im), denom * complex(0.5, -im))


def matsubara_term(n: int, u: float, p_mag: float, params: ThermalParams) -> complex:
    """Single Matsubara component e^{i nu_n u} / (w^2 + nu_n^2) after the p0 integral."""
    nu = 2.0 * math.pi * n / params.beta
    w = energy(p_mag, params.mass)
    return complex(math.cos(nu * u), math.sin(nu * u)) / (w * w + nu * nu)


def matsubara_sum_closed(u: float, p_mag: float, params: ThermalParams) -> float:
    """Closed form of sum_n e^{i nu_n u}/(w^2 + nu_n^2) for u in [0, beta].

    (beta / 2w) cosh(w (beta/2 - u)) / sinh(w beta / 2), written with
    decaying exponentials so that large beta*w does not overflow.
    """
    beta = params.beta
    _check_u(u, beta, 0.0, beta)
    w = energy(p_mag, params.mass)
    # cosh(a)/sinh(c) with |a| <= c
    a = w * (beta / 2.0 - u)
    c = w * beta / 2.0
    ratio = (math.exp(abs(a) - c) + math.exp(-abs(a) - c)) / (-math.expm1(-2.0 * c))
    return beta / (2.0 * w) * ratio
