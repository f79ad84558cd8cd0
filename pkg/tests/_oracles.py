"""Independent reference computations used by the tests.

None of these share code with the package beyond the data types.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import lsq_linear

from tautband.tautstring import FixedAt

# expected undershoot of a Gaussian random walk maximum, in units of sqrt(dt)
WALK_MAX_OFFSET = 0.5825971579390106


def qp_energy(tube) -> tuple[float, np.ndarray]:
    """Minimal knot energy by bounded least squares (scipy BVLS).

    The energy ``sum (v_i - v_{i-1})**2 / dt_i`` is ``||A v - b||**2`` with
    the start value moved to the right-hand side.
    """
    t = tube.grid.times
    dt = np.diff(t)
    n = dt.size
    w = 1.0 / np.sqrt(dt)
    A = np.zeros((n, n))
    for i in range(n):
        A[i, i] = w[i]
        if i > 0:
            A[i, i - 1] = -w[i]
    b = np.zeros(n)
    b[0] = w[0] * tube.start
    lo = np.array(tube.lower[1:], dtype=float)
    hi = np.array(tube.upper[1:], dtype=float)
    end = tube.end_constraint
    if isinstance(end, FixedAt):
        lo[-1] = hi[-1] = end.value
    else:
        lo[-1] = max(lo[-1], end.lo)
        hi[-1] = min(hi[-1], end.hi)
    # BVLS needs a nonempty interior; pin equal bounds by elimination
    fixed = lo == hi
    free = ~fixed
    b_eff = b - A[:, fixed] @ lo[fixed]
    if free.any():
        res = lsq_linear(A[:, free], b_eff, bounds=(lo[free], hi[free]), method="bvls", tol=1e-15)
        x_free = res.x
    else:
        x_free = np.zeros(0)
    v = np.empty(n)
    v[fixed] = lo[fixed]
    v[free] = x_free
    full = np.concatenate(([tube.start], v))
    return float(np.sum(np.diff(full) ** 2 / dt)), full


def exit_time_samples(n_paths: int, dt: float, rng: np.random.Generator) -> np.ndarray:
    """Exit times of ``|W|`` from 1, with a Brownian-bridge crossing test
    between grid points so that excursions missed by the grid still count."""
    x = np.zeros(n_paths)
    theta = np.full(n_paths, np.nan)
    alive = np.arange(n_paths)
    t = 0.0
    sq = math.sqrt(dt)
    while alive.size:
        t += dt
        x_old = x[alive]
        x_new = x_old + sq * rng.standard_normal(alive.size)
        crossed = np.abs(x_new) >= 1.0
        inside = ~crossed
        # bridge probability of touching +1 or -1 between the two points
        a = np.clip(1.0 - x_old, 0, None) * np.clip(1.0 - x_new, 0, None)
        c = np.clip(1.0 + x_old, 0, None) * np.clip(1.0 + x_new, 0, None)
        p = 1.0 - (1.0 - np.exp(-2.0 * a / dt)) * (1.0 - np.exp(-2.0 * c / dt))
        u = rng.uniform(size=alive.size)
        crossed |= inside & (u < p)
        # exit time placed at the middle of the step in which it happened
        theta[alive[crossed]] = t - 0.5 * dt
        x[alive] = x_new
        alive = alive[~crossed]
    return theta


def walk_ranges(n_walks: int, steps: int, rng: np.random.Generator, batch: int = 500) -> np.ndarray:
    """Ranges of Gaussian random walks on [0, 1], corrected for the grid.

    The discrete maximum and minimum each fall short of the continuous ones
    by about ``WALK_MAX_OFFSET * sqrt(dt)`` on average.
    """
    dt = 1.0 / steps
    out = np.empty(n_walks)
    for s in range(0, n_walks, batch):
        m = min(batch, n_walks - s)
        w = np.cumsum(rng.standard_normal((m, steps)) * math.sqrt(dt), axis=1)
        hi = np.maximum(w.max(axis=1), 0.0)
        lo = np.minimum(w.min(axis=1), 0.0)
        out[s:s + m] = hi - lo
    return out + 2.0 * WALK_MAX_OFFSET * math.sqrt(dt)
