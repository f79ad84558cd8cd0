"""Markovian pursuit of a Wiener path.

The pursuer moves with speed ``b(h - W)`` where ``b`` is an odd function on
(-1, 1) exploding at the ends. With the tangent law ``b(x) = -(pi/2) tan(pi x/2)``
the distance process has stationary density ``cos(pi x / 2)**2``, and the
long-run energy per unit time is a quarter of that density's Fisher
information, ``pi**2 / 4``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import _kernels
from .errors import InputError, InvariantError
from .paths import SampledPath, energy
from .stats import Histogram

DEFAULT_CLAMP = 0.99
DEFAULT_BINS = 50
CLAMP_SLACK = 1e-12


def optimal_speed(x):
    """``-(pi/2) tan(pi x/2)`` on the open interval (-1, 1)."""
    arr = np.asarray(x, dtype=np.float64)
    if np.any(np.abs(arr) >= 1):
        raise InputError("the optimal speed is only defined for |x| < 1")
    out = -0.5 * np.pi * np.tan(0.5 * np.pi * arr)
    return float(out) if out.ndim == 0 else out


def stationary_density(x):
    """``cos(pi x/2)**2`` on [-1, 1] and zero elsewhere."""
    arr = np.asarray(x, dtype=np.float64)
    out = np.where(np.abs(arr) <= 1, np.cos(0.5 * np.pi * arr) ** 2, 0.0)
    return float(out) if out.ndim == 0 else out


def binned_stationary_probabilities(edges) -> np.ndarray:
    """Exact mass of ``cos(pi x/2)**2`` in each bin of ``edges`` (within [-1, 1])."""
    e = np.clip(np.asarray(edges, dtype=np.float64), -1.0, 1.0)
    cdf = 0.5 * (e + 1.0) + np.sin(np.pi * e) / (2.0 * np.pi)
    return np.diff(cdf)


@dataclass(frozen=True)
class SpeedLaw:
    """A speed function of the signed distance ``h - W``.

    ``tangent_scale`` marks members of the family ``-c tan(pi x / 2)``; those
    run through a compiled loop, any other evaluator through plain Python.
    """

    evaluator: Callable[[float], float]
    clamp: float = DEFAULT_CLAMP
    odd: bool = True
    tangent_scale: float | None = None

    def __post_init__(self):
        if not 0 < self.clamp < 1:
            raise InputError("clamp must lie strictly between 0 and 1")
        if self.odd:
            probes = np.linspace(-0.95, 0.95, 39)
            vals = np.array([self.evaluator(float(p)) for p in probes])
            if abs(self.evaluator(0.0)) > 1e-12:
                raise InputError("an odd speed law must vanish at 0")
            scale = max(1.0, float(np.max(np.abs(vals))))
            if np.max(np.abs(vals + vals[::-1])) > 1e-12 * scale:
                raise InputError("speed law declared odd but b(-x) != -b(x)")

    @classmethod
    def tangent(cls, scale: float, clamp: float = DEFAULT_CLAMP) -> "SpeedLaw":
        c = float(scale)
        return cls(lambda x: -c * math.tan(0.5 * math.pi * x), clamp, True, c)

    @classmethod
    def optimal(cls, clamp: float = DEFAULT_CLAMP) -> "SpeedLaw":
        return cls.tangent(0.5 * math.pi, clamp)

    def __call__(self, x):
        if np.ndim(x) == 0:
            return self.evaluator(float(x))
        return np.array([self.evaluator(float(v)) for v in np.ravel(x)]).reshape(np.shape(x))


@dataclass(frozen=True, eq=False)
class PursuitRun:
    pursuit_path: SampledPath
    distance_path: SampledPath
    energy_rate: float
    sqrt_rate: float
    occupancy: Histogram
    clamp_hits: int

    @property
    def edge_fraction(self) -> float:
        """Share of knots in the two outermost occupancy bins."""
        c = self.occupancy.counts
        return float((c[0] + c[-1]) / max(c.sum(), 1))


def fisher_information(density, resolution: int = 100_000, interval=(-1.0, 1.0)) -> float:
    """Numerical ``integral of p'(x)**2 / p(x)`` over ``interval``.

    Derivatives are central differences on a uniform probe grid (one-sided
    at the two ends); wherever ``p`` vanishes at an end the integrand takes
    its limit, extrapolated linearly from the two neighbouring probes.
    End values below ``1e-12`` times the peak count as zero.
    """
    a, b = interval
    x = np.linspace(a, b, int(resolution))
    p = np.asarray(density(x), dtype=np.float64)
    if np.any(p[1:-1] <= 0):
        i = int(np.flatnonzero(p[1:-1] <= 0)[0]) + 1
        raise InputError(f"density is not positive at interior probe x={float(x[i])!r}")
    dp = np.gradient(p, x, edge_order=2)
    f = np.empty_like(p)
    f[1:-1] = dp[1:-1] ** 2 / p[1:-1]
    # ends where p is zero up to roundoff take the extrapolated limit
    negligible = 1e-12 * float(np.max(p))
    for end, n1, n2 in ((0, 1, 2), (-1, -2, -3)):
        if p[end] > negligible:
            f[end] = dp[end] ** 2 / p[end]
        else:
            f[end] = 2.0 * f[n1] - f[n2]
    return float(np.trapezoid(f, x))


def simulate_pursuit(W: SampledPath, law: SpeedLaw | None = None, bins: int = DEFAULT_BINS) -> PursuitRun:
    """Pursue ``W`` with the explicit scheme and the clamp rule.

    ``h[i] = h[i-1] + dt * b(h[i-1] - W[i-1])``, then ``h[i]`` is moved to
    the nearest point of ``[W[i] - clamp, W[i] + clamp]`` if it left it.
    """
    law = law or SpeedLaw.optimal()
    grid = W.grid
    if not grid.is_uniform():
        raise InputError("pursuit needs a uniform time grid")
    if W.values[0] != 0.0:
        raise InputError("the path must start at 0")
    dt = float(grid.steps.mean())
    w = W.values
    if law.tangent_scale is not None:
        h = _kernels.pursuit_tangent(w, dt, law.tangent_scale, law.clamp)
    else:
        h = _pursue_python(w, dt, law)
    x = h - w
    # h - W is recomputed in floating point, hence the rounding allowance
    ax = np.abs(x[1:])
    if np.any(ax > law.clamp + CLAMP_SLACK):
        raise InvariantError("pursuit left the clamp corridor")
    hits = int(np.count_nonzero(ax >= law.clamp - CLAMP_SLACK))
    path = SampledPath(grid, h)
    e = energy(path)
    rate = e / grid.horizon
    occ = Histogram(-1.0, 1.0, bins).add(x)
    return PursuitRun(path, SampledPath(grid, x), rate, math.sqrt(rate), occ, hits)


def _pursue_python(w, dt, law):
    b = law.evaluator
    c = law.clamp
    h = np.empty_like(w)
    h[0] = 0.0
    for i in range(1, w.size):
        v = h[i - 1] + dt * b(h[i - 1] - w[i - 1])
        lo = w[i] - c
        hi = w[i] + c
        h[i] = lo if v < lo else hi if v > hi else v
    return h


def occupancy_l1_distance(hist: Histogram) -> float:
    """L1 distance between the empirical bin masses and the ``cos**2`` masses."""
    return float(np.sum(np.abs(hist.probabilities() - binned_stationary_probabilities(hist.edges))))


def entrance_boundary_check(law, resolution: int = 2001, shells: int = 30) -> bool:
    """Numerically decide whether both boundaries ±1 are of entrance type.

    With ``p0 = exp(2 * integral of b)`` the test integrates ``1/p0`` over
    dyadic shells ``[1 - 2**-k, 1 - 2**-(k+1)]`` (and the mirror shells
    at -1). Shell integrals of a convergent integral decay geometrically;
    the boundary counts as entrance when the last shell ratios stay at or
    above 0.99, i.e. the partial sums keep growing.
    """
    evaluator = law.evaluator if isinstance(law, SpeedLaw) else law
    return all(_side_diverges(evaluator, side, resolution, shells) for side in (1.0, -1.0))


def _side_diverges(b, side, resolution, shells):
    f = np.vectorize(lambda u: float(b(side * u)) * side)
    # B(u) = 2 * integral_0^u b along the chosen side, accumulated shell by shell
    B_start = 0.0
    shell_integrals = []
    a = 0.0
    for k in range(1, shells + 1):
        c = 1.0 - 2.0 ** (-k)
        u = np.linspace(a, c, resolution)
        fb = f(u)
        B = B_start + 2.0 * np.concatenate(([0.0], np.cumsum(0.5 * (fb[1:] + fb[:-1]) * np.diff(u))))
        if k > 1:
            with np.errstate(over="ignore"):
                shell_integrals.append(float(np.trapezoid(np.exp(-B), u)))
        B_start = float(B[-1])
        a = c
    s = np.asarray(shell_integrals)
    if not np.all(np.isfinite(s)):
        return True
    ratios = s[1:] / s[:-1]
    return bool(np.all(ratios[-3:] >= 0.99))
