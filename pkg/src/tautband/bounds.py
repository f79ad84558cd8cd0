"""Closed-form and numerical bounds on the taut-string energy constant.

Three bounds are evaluated:

* the isoperimetric upper bound ``pi/2``;
* the free-knot upper bound ``2 sqrt(E2/E1)`` where ``E1 = E theta = 1`` and
  ``E2 = E 1/theta`` for the exit time ``theta`` of ``|W|`` from 1;
* the oscillation lower bound ``max_x x sqrt(E (R - 2x)_+^2)`` with ``R``
  the range of a Wiener path on [0, 1].
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy import integrate
from scipy.special import erfc

from .errors import InputError

TERM_TOL = 1e-12
_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_DUAL_SWITCH = 1.0


def isoperimetric_upper() -> float:
    return math.pi / 2.0


def exit_time_moments() -> tuple[float, float]:
    """``(E theta, E 1/theta)`` for the first time ``|W|`` reaches 1.

    The first moment is 1 by Wald's identity; the second equals
    ``integral_0^inf x / cosh(x) dx``, evaluated by adaptive quadrature.
    """

    def integrand(x):
        # x / cosh(x) written to avoid overflow for large x
        e = math.exp(-x)
        return 2.0 * x * e / (1.0 + e * e)

    e2, _ = integrate.quad(integrand, 0.0, math.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    return 1.0, float(e2)


def free_knot_upper(e1: float | None = None, e2: float | None = None) -> float:
    if e1 is None or e2 is None:
        m1, m2 = exit_time_moments()
        e1 = m1 if e1 is None else e1
        e2 = m2 if e2 is None else e2
    return 2.0 * math.sqrt(e2 / e1)


def _alternating_sum(term, first=1, chunk=64, max_terms=10_000_000):
    """Sum ``term(k)`` over ``k >= first`` until a term drops below TERM_TOL."""
    total = 0.0
    k0 = first
    while k0 < max_terms:
        k = np.arange(k0, k0 + chunk, dtype=np.float64)
        vals = term(k)
        small = np.flatnonzero(np.abs(vals) < TERM_TOL)
        if small.size:
            return total + float(np.sum(vals[: small[0]]))
        total += float(np.sum(vals))
        k0 += chunk
        chunk = min(chunk * 2, 1 << 16)
    raise ArithmeticError("series did not converge")


def _range_density_dual(y: float) -> float:
    # theta-function form of the range density; converges fast for small y
    a = 0.5 * y * y
    m = np.arange(0, 64, dtype=np.float64)
    c = (math.pi * (m + 0.5)) ** 2
    e = np.exp(-c / a)
    s0 = 2.0 * float(np.sum(e))
    s1 = 2.0 * float(np.sum(c * e))
    g1 = math.sqrt(math.pi) * (-0.5 * a**-1.5 * s0 + a**-2.5 * s1)
    return 4.0 / _SQRT2PI * g1


def range_density(y: float) -> float:
    """Density of the range ``max W - min W`` of a Wiener path on [0, 1]."""
    if y < 0:
        raise InputError("range density is defined for y >= 0")
    if y == 0:
        return 0.0
    if y < _DUAL_SWITCH:
        return _range_density_dual(y)
    coef = 4.0 * math.sqrt(2.0 / math.pi)
    return coef * _alternating_sum(
        lambda k: (-1.0) ** (k + 1) * k * k * np.exp(-0.5 * k * k * y * y)
    )


def range_cdf(y: float) -> float:
    """``P(R <= y)`` for the range of a Wiener path on [0, 1].

    Uses ``1 + 4 sum_k (-1)**k k erfc(k y / sqrt 2)`` for ``y >= 1``; below
    that the series cancels catastrophically and the theta-transformed
    density is integrated instead.
    """
    if y < 0:
        raise InputError("range CDF is defined for y >= 0")
    if y == 0:
        return 0.0
    if y < _DUAL_SWITCH:
        val, _ = integrate.quad(_range_density_dual, 0.0, y, epsabs=1e-14, epsrel=1e-12)
    else:
        val = 1.0 + 4.0 * _alternating_sum(lambda k: (-1.0) ** k * k * erfc(k * y / _SQRT2))
    return min(1.0, max(0.0, val))


def osc_second_moment(x: float) -> float:
    """``E (R - 2x)_+**2`` for the Wiener range ``R`` on [0, 1].

    Series in ``k`` with the standard normal tail; at ``x = 0`` it reduces to
    ``E R**2 = 4 ln 2``.
    """
    if x < 0:
        raise InputError("x must be nonnegative")
    if x == 0:
        return 4.0 * math.log(2.0)
    coef = 4.0 * math.sqrt(2.0 / math.pi)

    def term(k):
        tail = 0.5 * erfc(2.0 * k * x / _SQRT2)
        return (-1.0) ** (k + 1) * (
            (4.0 * k * x * x + 1.0 / k) * _SQRT2PI * tail - 2.0 * x * np.exp(-2.0 * k * k * x * x)
        )

    return coef * _alternating_sum(term)


def osc_objective(x: float) -> float:
    return x * x * osc_second_moment(x)


def _golden_max(f, a, b, tol):
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def oscillation_lower(lo: float = 0.05, hi: float = 2.0, tol: float = 1e-6) -> tuple[float, float]:
    """Best oscillation lower bound and the ``x`` attaining it.

    Scans ``x**2 E Y_x**2`` on a 1e-3 grid first; if the scan is unimodal
    the maximum is refined by golden-section search, otherwise the grid
    maximum is returned.
    """
    xs = np.arange(lo, hi + 5e-4, 1e-3)
    vals = np.array([osc_objective(float(x)) for x in xs])
    peak = int(np.argmax(vals))
    unimodal = np.all(np.diff(vals[: peak + 1]) >= 0) and np.all(np.diff(vals[peak:]) <= 0)
    if unimodal:
        a = float(xs[max(peak - 1, 0)])
        b = float(xs[min(peak + 1, xs.size - 1)])
        best_x, best_val = _golden_max(osc_objective, a, b, tol)
    else:
        best_x, best_val = float(xs[peak]), float(vals[peak])
    return math.sqrt(best_val), best_x


@dataclass(frozen=True)
class BoundReport:
    isoperimetric_upper: float
    free_knot_upper: float
    oscillation_lower: float
    e1: float
    e2: float
    best_x: float
    osc_objective_at_best_x: float

    def to_json(self, digits: int = 12) -> str:
        rounded = {k: float(format(v, f".{digits}g")) for k, v in asdict(self).items()}
        return json.dumps(rounded, indent=2)


def bound_report() -> BoundReport:
    e1, e2 = exit_time_moments()
    lower, x = oscillation_lower()
    return BoundReport(
        isoperimetric_upper=isoperimetric_upper(),
        free_knot_upper=free_knot_upper(e1, e2),
        oscillation_lower=lower,
        e1=e1,
        e2=e2,
        best_x=x,
        osc_objective_at_best_x=osc_objective(x),
    )
