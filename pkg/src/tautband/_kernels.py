"""Compiled inner loops.

Everything here works on plain float64 arrays and assumes the caller has
validated its inputs; the public wrappers live in the sibling modules.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def _slope(t1, v1, t2, v2):
    return (v2 - v1) / (t2 - t1)


@njit(cache=True, nogil=True)
def taut_vertices(t, lo, hi, start, end):
    """Vertices of the fixed-end taut string through a knot-wise tube.

    Funnel method: from the current apex keep the greatest convex minorant
    of the upper knots and the least concave majorant of the lower knots.
    A new knot that crosses the opposite chain pops that chain's leading
    segment into the output and moves the apex forward. Each knot enters
    and leaves a chain at most once, so the cost is O(n).
    """
    n = t.size
    out_t = np.empty(n)
    out_v = np.empty(n)
    out_t[0] = t[0]
    out_v[0] = start
    nout = 1

    cap = n + 2
    ut = np.empty(cap)
    uv = np.empty(cap)
    lt = np.empty(cap)
    lv = np.empty(cap)
    ut[0] = t[0]
    uv[0] = start
    lt[0] = t[0]
    lv[0] = start
    uh, ue = 0, 1  # upper chain occupies [uh, ue)
    lh, le = 0, 1

    for i in range(1, n):
        ti = t[i]
        if i == n - 1:
            pu = end
            pl = end
        else:
            pu = hi[i]
            pl = lo[i]
        pinned = pu == pl

        # upper knot: wrap over the lower chain if it dips below it
        moved = False
        while le - lh >= 2 and _slope(lt[lh], lv[lh], ti, pu) < _slope(
            lt[lh], lv[lh], lt[lh + 1], lv[lh + 1]
        ):
            lh += 1
            out_t[nout] = lt[lh]
            out_v[nout] = lv[lh]
            nout += 1
            moved = True
        if moved:
            ut[0] = lt[lh]
            uv[0] = lv[lh]
            ut[1] = ti
            uv[1] = pu
            uh, ue = 0, 2
        else:
            while ue - uh >= 2 and _slope(ut[ue - 1], uv[ue - 1], ti, pu) <= _slope(
                ut[ue - 2], uv[ue - 2], ut[ue - 1], uv[ue - 1]
            ):
                ue -= 1
            ut[ue] = ti
            uv[ue] = pu
            ue += 1

        if pinned:
            # the string must pass through this knot: flush the upper chain
            for j in range(uh + 1, ue):
                out_t[nout] = ut[j]
                out_v[nout] = uv[j]
                nout += 1
            ut[0] = ti
            uv[0] = pu
            lt[0] = ti
            lv[0] = pu
            uh, ue = 0, 1
            lh, le = 0, 1
            continue

        # lower knot: symmetric
        moved = False
        while ue - uh >= 2 and _slope(ut[uh], uv[uh], ti, pl) > _slope(
            ut[uh], uv[uh], ut[uh + 1], uv[uh + 1]
        ):
            uh += 1
            out_t[nout] = ut[uh]
            out_v[nout] = uv[uh]
            nout += 1
            moved = True
        if moved:
            lt[0] = ut[uh]
            lv[0] = uv[uh]
            lt[1] = ti
            lv[1] = pl
            lh, le = 0, 2
        else:
            while le - lh >= 2 and _slope(lt[le - 1], lv[le - 1], ti, pl) >= _slope(
                lt[le - 2], lv[le - 2], lt[le - 1], lv[le - 1]
            ):
                le -= 1
            lt[le] = ti
            lv[le] = pl
            le += 1

    return out_t[:nout], out_v[:nout]


@njit(cache=True, nogil=True)
def sample_at_knots(t, vt, vv):
    """Evaluate the polyline through (vt, vv) at every knot time in ``t``."""
    n = t.size
    out = np.empty(n)
    j = 0
    m = vt.size
    for i in range(n):
        ti = t[i]
        while j < m - 2 and vt[j + 1] < ti:
            j += 1
        if ti == vt[j]:
            out[i] = vv[j]
        elif ti == vt[j + 1]:
            out[i] = vv[j + 1]
        else:
            w = (ti - vt[j]) / (vt[j + 1] - vt[j])
            out[i] = vv[j] + w * (vv[j + 1] - vv[j])
    return out


@njit(cache=True, nogil=True)
def knot_energy(t, v):
    s = 0.0
    for i in range(1, t.size):
        d = v[i] - v[i - 1]
        s += d * d / (t[i] - t[i - 1])
    return s


@njit(cache=True, nogil=True)
def taut_fixed_energy(t, lo, hi, start, end):
    vt, vv = taut_vertices(t, lo, hi, start, end)
    return knot_energy(vt, vv)


@njit(cache=True, nogil=True)
def golden_min_end(t, lo, hi, start, a, b, tol):
    """Endpoint in [a, b] minimising the fixed-end taut energy.

    The energy is convex in the endpoint, so golden-section search applies;
    both interval ends are compared at the close so boundary optima are exact.
    """
    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    if b - a <= tol:
        x = 0.5 * (a + b)
        return x, taut_fixed_energy(t, lo, hi, start, x)
    lo_x, hi_x = a, b
    c = hi_x - invphi * (hi_x - lo_x)
    d = lo_x + invphi * (hi_x - lo_x)
    fc = taut_fixed_energy(t, lo, hi, start, c)
    fd = taut_fixed_energy(t, lo, hi, start, d)
    while hi_x - lo_x > tol:
        if fc <= fd:
            hi_x = d
            d = c
            fd = fc
            c = hi_x - invphi * (hi_x - lo_x)
            fc = taut_fixed_energy(t, lo, hi, start, c)
        else:
            lo_x = c
            c = d
            fc = fd
            d = lo_x + invphi * (hi_x - lo_x)
            fd = taut_fixed_energy(t, lo, hi, start, d)
    if fc <= fd:
        best_x, best_f = c, fc
    else:
        best_x, best_f = d, fd
    fa = taut_fixed_energy(t, lo, hi, start, a)
    if fa <= best_f:
        best_x, best_f = a, fa
    fb = taut_fixed_energy(t, lo, hi, start, b)
    if fb < best_f:
        best_x, best_f = b, fb
    return best_x, best_f


@njit(cache=True, nogil=True)
def coordinate_descent(t, lo, hi, start, end_lo, end_hi, tol, max_sweeps):
    """Cyclic exact coordinate minimisation of the knot energy with clamping.

    Returns the iterate and the number of sweeps used; ``-1`` sweeps means
    the cap was hit before the largest update dropped below ``tol``.
    """
    n = t.size
    x = np.empty(n)
    x[0] = start
    for i in range(1, n):
        x[i] = 0.5 * (lo[i] + hi[i])
    e_lo = max(lo[n - 1], end_lo)
    e_hi = min(hi[n - 1], end_hi)
    x[n - 1] = min(max(x[n - 1], e_lo), e_hi)
    w = np.empty(n)
    for i in range(1, n):
        w[i] = 1.0 / (t[i] - t[i - 1])
    for sweep in range(max_sweeps):
        biggest = 0.0
        for i in range(1, n - 1):
            a = w[i]
            b = w[i + 1]
            y = (a * x[i - 1] + b * x[i + 1]) / (a + b)
            if y < lo[i]:
                y = lo[i]
            elif y > hi[i]:
                y = hi[i]
            d = abs(y - x[i])
            if d > biggest:
                biggest = d
            x[i] = y
        y = x[n - 2]
        if y < e_lo:
            y = e_lo
        elif y > e_hi:
            y = e_hi
        d = abs(y - x[n - 1])
        if d > biggest:
            biggest = d
        x[n - 1] = y
        if biggest < tol:
            return x, sweep + 1
    return x, -1


@njit(cache=True, nogil=True)
def pursuit_tangent(w, dt, scale, clamp):
    """Explicit pursuit with speed ``-scale * tan(pi x / 2)`` and clamping."""
    n = w.size
    h = np.empty(n)
    h[0] = 0.0
    half_pi = 0.5 * math.pi
    for i in range(1, n):
        x = h[i - 1] - w[i - 1]
        v = h[i - 1] - dt * scale * math.tan(half_pi * x)
        a = w[i] - clamp
        b = w[i] + clamp
        if v < a:
            v = a
        elif v > b:
            v = b
        h[i] = v
    return h


@njit(cache=True, nogil=True)
def first_crossings(w, threshold):
    """Indices where the path first moves ``threshold`` away from the last knot."""
    n = w.size
    idx = np.empty(n, dtype=np.int64)
    idx[0] = 0
    m = 1
    ref = w[0]
    for i in range(1, n):
        if abs(w[i] - ref) >= threshold:
            idx[m] = i
            m += 1
            ref = w[i]
    return idx[:m]
