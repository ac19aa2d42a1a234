"""Numerical backbone: 1D adaptive integration, radial momentum integrals,
truncated Matsubara sums and an order-preserving parallel map."""

from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .propagators import ThermalParams

DEFAULT_TOL_REL = 1e-8
DEFAULT_TOL_ABS = 1e-12
DEFAULT_MATSUBARA_N = 256

# decay classes accepted by radial_momentum_integral
EXPONENTIAL = "exponential"
POWER = "power"
LOG_DIVERGENT = "log_divergent"


class QuadratureError(RuntimeError):
    """Integrand produced NaN/inf, or the evaluation budget was exhausted."""


class DivergentIntegralError(ArithmeticError):
    """The caller declared an integrand whose integral does not converge."""


class DecayNotDeclaredError(ValueError):
    pass


@dataclass(frozen=True)
class Axis:
    kind: str  # "interval" | "radial" | "frequency"
    lo: float = 0.0
    hi: float = math.inf
    name: str = ""


@dataclass(frozen=True)
class IntegrationPlan:
    axes: tuple[Axis, ...] = ()
    tol_rel: float = DEFAULT_TOL_REL
    tol_abs: float = DEFAULT_TOL_ABS
    max_evals: int = 200_000
    matsubara_n: int = DEFAULT_MATSUBARA_N

    def __post_init__(self):
        if not (self.tol_rel > 0 and self.tol_abs > 0):
            raise ValueError("tolerances must be positive")
        if not (0 < self.max_evals < math.inf):
            raise ValueError("evaluation budget must be finite and positive")


@dataclass
class QuadResult:
    value: complex | float
    error: float
    budget_exceeded: bool = False
    info: dict = field(default_factory=dict)

    def __iter__(self):
        # allows ``value, err = integrate_1d(...)``
        yield self.value
        yield self.error


def _checked(f, axis_name):
    def g(x):
        y = f(x)
        if not np.all(np.isfinite(y)):
            raise QuadratureError(f"non-finite integrand value {y!r} at {axis_name}={x!r}")
        return y
    return g


def integrate_1d(f: Callable[[float], complex], a: float, b: float, tol_rel: float = DEFAULT_TOL_REL,
                 tol_abs: float = DEFAULT_TOL_ABS, points: Sequence[float] | None = None,
                 limit: int = 500, axis_name: str = "x", complex_valued: bool | None = None) -> QuadResult:
    """Adaptive Gauss-Kronrod integral of a real or complex scalar function.

    Infinite endpoints are allowed (QUADPACK's built-in maps). The returned
    error is QUADPACK's estimate; ``budget_exceeded`` is set when it fails to
    meet ``max(tol_abs, tol_rel * |value|)``.
    """
    g = _checked(f, axis_name)
    if complex_valued is None:
        # probe inside the interval: endpoints may be integrable singularities
        if math.isfinite(a) and math.isfinite(b):
            x0 = 0.5 * (a + b)
        else:
            x0 = a + 1.0 if math.isfinite(a) else (b - 1.0 if math.isfinite(b) else 0.0)
        complex_valued = np.iscomplexobj(g(x0))
    kw = dict(epsabs=tol_abs, epsrel=tol_rel, limit=limit)
    if points is not None and math.isfinite(a) and math.isfinite(b):
        kw["points"] = [p for p in points if a < p < b] or None
        if kw["points"] is None:
            del kw["points"]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", integrate.IntegrationWarning)
        if complex_valued:
            val, err = integrate.quad(g, a, b, complex_func=True, **kw)[:2]
        else:
            val, err = integrate.quad(lambda x: float(g(x)), a, b, **kw)[:2]
    target = max(tol_abs, tol_rel * abs(val))
    err = float(abs(err))
    notes = [str(w.message).split("\n")[0] for w in caught]
    return QuadResult(val, err, budget_exceeded=bool(err > 10 * target), info={"warnings": notes} if notes else {})


def radial_momentum_integral(f: Callable[[float], float], params: ThermalParams, decay: str = EXPONENTIAL,
                             power: float | None = None, tol_rel: float = DEFAULT_TOL_REL,
                             tol_abs: float = DEFAULT_TOL_ABS) -> QuadResult:
    """4*pi * int_0^inf p^2 f(p) dp, via p = m sinh(s).

    ``decay`` declares the large-p behaviour of ``f``: ``"exponential"``
    (like e^{-beta w}), ``"power"`` (like 1/w^power, needs power > 3) or
    ``"log_divergent"`` (rejected).
    """
    if decay == LOG_DIVERGENT or (decay == POWER and power is not None and power <= 3):
        raise DivergentIntegralError(
            "integrand declared with a 1/w^3 (or slower) tail: radial integral diverges")
    if decay == POWER and power is None:
        raise DecayNotDeclaredError("power decay requires the exponent")
    if decay not in (EXPONENTIAL, POWER):
        raise DecayNotDeclaredError(f"unknown decay class {decay!r}")
    m = params.mass

    def integrand(s):
        p = m * math.sinh(s)
        return 4.0 * math.pi * p * p * f(p) * m * math.cosh(s)

    if decay == EXPONENTIAL:
        # beyond s_max, e^{-beta w} < e^{-60}
        s_max = math.asinh(max(60.0 / (params.beta * m), 1.0)) + 1.0
    else:
        # p up to 1e150 m: the neglected tail is below (1e150)^(3 - power)
        s_max = math.asinh(1e150)
    # break near p ~ T where thermal integrands peak
    pts = [math.asinh(min(1.0 / (params.beta * m), 1e300))]
    return integrate_1d(integrand, 0.0, s_max, tol_rel=tol_rel, tol_abs=tol_abs, points=pts,
                        axis_name="radial s", complex_valued=False)


def matsubara_sum(g: Callable[[int], complex], N: int, beta: float, decay_const: float | None) -> QuadResult:
    """Symmetric truncation sum_{|n|<=N} g(n) with an analytic tail bound.

    The caller must declare ``|g(n)| <= decay_const / nu_n^2`` for n != 0;
    the tail sum_{|n|>N} is then bounded by decay_const * beta^2 / (2 pi^2 N).
    Terms are accumulated in a fixed order (0, 1, -1, 2, -2, ...) with
    compensated summation.
    """
    if decay_const is None:
        raise DecayNotDeclaredError("matsubara_sum needs a declared 1/nu^2 decay constant")
    if N < 0:
        raise ValueError("N must be >= 0")
    re, im = [], []
    for n in _symmetric_order(N):
        v = complex(g(n))
        re.append(v.real)
        im.append(v.imag)
    total = complex(math.fsum(re), math.fsum(im))
    tail = decay_const * beta ** 2 / (2.0 * math.pi ** 2 * N) if N > 0 else math.inf
    if total.imag == 0.0:
        total = total.real
    return QuadResult(total, tail)


def _symmetric_order(N):
    yield 0
    for n in range(1, N + 1):
        yield n
        yield -n


def matsubara_tail_bound(decay_const: float, beta: float, N: int) -> float:
    return decay_const * beta ** 2 / (2.0 * math.pi ** 2 * N)


def thread_count() -> int:
    env = os.environ.get("THERMAL_KMS_THREADS")
    if env:
        return max(1, int(env))
    return min(8, os.cpu_count() or 1)


def parallel_map(func, items, threads: int | None = None) -> list:
    """Map preserving input order, so reductions downstream are reproducible."""
    items = list(items)
    threads = thread_count() if threads is None else threads
    if threads <= 1 or len(items) <= 1:
        return [func(x) for x in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def ordered_sum(values) -> complex | float:
    """Compensated sum in the given order; identical input order gives identical bits."""
    vals = [complex(v) for v in values]
    out = complex(math.fsum(v.real for v in vals), math.fsum(v.imag for v in vals))
    return out.real if out.imag == 0.0 else out
