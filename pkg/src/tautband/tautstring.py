"""Minimal-energy paths through knot-wise tubes.

The fixed-end solver is a linear-time funnel (convex-hull) sweep; the free
end is handled by golden-section search on the endpoint, which is valid
because the minimal energy is a convex function of the endpoint value.
:func:`brute_force_oracle` solves the same quadratic program by a wholly
different route and exists to certify :func:`solve`.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Union

import numpy as np

from . import _kernels
from .errors import ConvergenceError, InfeasibleTubeError, InputError, InvariantError
from .paths import SampledPath, TimeGrid, energy

LOWER, UPPER, INTERIOR = "lower", "upper", "interior"

FEASIBILITY_SLACK = 1e-12
ORACLE_MAX_KNOTS = 400


@dataclass(frozen=True)
class FixedAt:
    value: float


@dataclass(frozen=True)
class Interval:
    lo: float
    hi: float


EndConstraint = Union[FixedAt, Interval]


@dataclass(frozen=True, eq=False)
class Tube:
    """Per-knot bounds, a start value and a constraint on the last knot."""

    grid: TimeGrid
    lower: np.ndarray
    upper: np.ndarray
    start: float
    end_constraint: EndConstraint

    def __post_init__(self):
        n = len(self.grid)
        lower = np.array(self.lower, dtype=np.float64)
        upper = np.array(self.upper, dtype=np.float64)
        if lower.shape != (n,) or upper.shape != (n,):
            raise InputError(f"tube bounds must have {n} entries, one per knot")
        if not (np.all(np.isfinite(lower)) and np.all(np.isfinite(upper))):
            raise InputError("tube bounds must be finite")
        bad = np.flatnonzero(lower > upper)
        if bad.size:
            i = int(bad[0])
            raise InfeasibleTubeError(
                f"lower bound {float(lower[i])!r} exceeds upper bound {float(upper[i])!r} at knot {i}",
                index=i,
            )
        start = float(self.start)
        if not lower[0] <= start <= upper[0]:
            raise InfeasibleTubeError(
                f"start value {start!r} lies outside [{float(lower[0])!r}, {float(upper[0])!r}] at knot 0",
                index=0,
            )
        end = self.end_constraint
        if isinstance(end, FixedAt):
            if not lower[-1] <= end.value <= upper[-1]:
                raise InfeasibleTubeError(
                    f"end value {end.value!r} lies outside [{float(lower[-1])!r}, {float(upper[-1])!r}]"
                    f" at knot {n - 1}",
                    index=n - 1,
                )
        elif isinstance(end, Interval):
            if end.lo > end.hi:
                raise InputError("end interval is empty")
            if max(end.lo, lower[-1]) > min(end.hi, upper[-1]):
                raise InfeasibleTubeError(
                    f"end interval [{end.lo!r}, {end.hi!r}] misses the tube at knot {n - 1}",
                    index=n - 1,
                )
        else:
            raise InputError("end constraint must be FixedAt or Interval")
        lower.setflags(write=False)
        upper.setflags(write=False)
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)
        object.__setattr__(self, "start", start)

    @property
    def end_range(self) -> tuple[float, float]:
        end = self.end_constraint
        if isinstance(end, FixedAt):
            return end.value, end.value
        return max(end.lo, self.lower[-1]), min(end.hi, self.upper[-1])

    @property
    def width_scale(self) -> float:
        """Half the widest knot interval, floored at 1 for degenerate tubes."""
        w = 0.5 * float(np.max(self.upper - self.lower))
        return w if w > 0 else 1.0

    def scaled(self, lam: float) -> "Tube":
        """Brownian scaling: times by ``lam**2``, values by ``lam``."""
        end = self.end_constraint
        if isinstance(end, FixedAt):
            new_end = FixedAt(lam * end.value)
        else:
            new_end = Interval(lam * end.lo, lam * end.hi)
        return Tube(
            TimeGrid(self.grid.times * lam**2),
            self.lower * lam,
            self.upper * lam,
            self.start * lam,
            new_end,
        )

    def with_end(self, end: EndConstraint) -> "Tube":
        return Tube(self.grid, self.lower, self.upper, self.start, end)


@dataclass(frozen=True, eq=False)
class TautStringResult:
    path: SampledPath
    energy_value: float
    contact: np.ndarray

    @property
    def sqrt_energy(self) -> float:
        return float(np.sqrt(self.energy_value))

    @property
    def contact_indices(self) -> np.ndarray:
        return np.flatnonzero(self.contact != INTERIOR)


def _contacts(tube: Tube, values: np.ndarray) -> np.ndarray:
    tol = FEASIBILITY_SLACK * max(1.0, float(np.max(np.abs(tube.upper))),
                                  float(np.max(np.abs(tube.lower))))
    contact = np.full(values.size, INTERIOR, dtype="<U8")
    contact[np.abs(values - tube.upper) <= tol] = UPPER
    contact[np.abs(values - tube.lower) <= tol] = LOWER
    return contact


def _finish(tube: Tube, values: np.ndarray) -> TautStringResult:
    scale = max(1.0, float(np.max(np.abs(tube.upper))), float(np.max(np.abs(tube.lower))))
    slack = FEASIBILITY_SLACK * scale
    if np.any(values < tube.lower - slack) or np.any(values > tube.upper + slack):
        i = int(np.flatnonzero((values < tube.lower - slack) | (values > tube.upper + slack))[0])
        raise InvariantError(f"solver left the tube at knot {i}")
    lo, hi = tube.end_range
    if values[0] != tube.start or not lo - slack <= values[-1] <= hi + slack:
        raise InvariantError("solver broke a boundary condition")
    path = SampledPath(tube.grid, values)
    return TautStringResult(path, energy(path), _contacts(tube, values))


def _fixed_values(tube: Tube, end_value: float) -> np.ndarray:
    t = tube.grid.times
    vt, vv = _kernels.taut_vertices(t, tube.lower, tube.upper, tube.start, float(end_value))
    return _kernels.sample_at_knots(t, vt, vv)


def best_endpoint(tube: Tube, tol: float | None = None) -> float:
    """Endpoint value within the allowed end range minimising the energy."""
    lo, hi = tube.end_range
    if tol is None:
        tol = 1e-10 * tube.width_scale
    t = tube.grid.times
    x, e = _kernels.golden_min_end(t, tube.lower, tube.upper, tube.start, lo, hi, tol)
    # an interior optimum ends with a flat segment, so its end value is the
    # value of the last vertex before the end; try that candidate exactly
    vt, vv = _kernels.taut_vertices(t, tube.lower, tube.upper, tube.start, float(x))
    cand = min(max(float(vv[-2]), lo), hi)
    if cand != x:
        e_cand = _kernels.taut_fixed_energy(t, tube.lower, tube.upper, tube.start, cand)
        if e_cand <= e:
            return cand
    return float(x)


def solve(tube: Tube) -> TautStringResult:
    """Minimal-energy knot path through ``tube``.

    For a fixed end this path also minimises every convex functional of the
    slopes (variation, graph length, ...). Raises
    :class:`~tautband.errors.InfeasibleTubeError` if the tube is empty
    somewhere; infeasible input is never clamped into shape.
    """
    end = tube.end_constraint
    if isinstance(end, FixedAt):
        values = _fixed_values(tube, end.value)
    else:
        values = _fixed_values(tube, best_endpoint(tube))
    return _finish(tube, values)


def brute_force_oracle(tube: Tube, max_sweeps: int = 20_000_000) -> TautStringResult:
    """Reference minimiser by cyclic coordinate descent with box clamping.

    Each update is the exact one-dimensional minimiser projected onto its
    box; sweeps stop once no coordinate moves by more than ``1e-13`` times
    the tube's width scale. The sweep result is then polished: knots
    resting on a bound are pinned, the string is linear between them and
    flat after the last one when the end is free; the polished path
    replaces the sweep result when it is feasible and no worse. Meant for
    small tubes only.
    """
    n = len(tube.grid)
    if n > ORACLE_MAX_KNOTS:
        raise InputError(
            f"oracle is limited to {ORACLE_MAX_KNOTS} knots, tube has {n}"
        )
    lo, hi = tube.end_range
    tol = 1e-13 * tube.width_scale
    x, sweeps = _kernels.coordinate_descent(
        tube.grid.times, tube.lower, tube.upper, tube.start, lo, hi, tol, max_sweeps
    )
    if sweeps < 0:
        raise ConvergenceError(f"coordinate descent did not settle in {max_sweeps} sweeps")
    return _finish(tube, _polish_active_set(tube, x, 1e3 * tol))


def _polish_active_set(tube: Tube, x: np.ndarray, active_tol: float) -> np.ndarray:
    t = tube.grid.times
    lo, hi = tube.end_range
    on_bound = (np.abs(x - tube.lower) <= active_tol) | (np.abs(x - tube.upper) <= active_tol)
    on_bound[0] = True
    end_active = lo == hi or abs(x[-1] - lo) <= active_tol or abs(x[-1] - hi) <= active_tol
    on_bound[-1] = end_active
    idx = np.flatnonzero(on_bound)
    vals = np.where(np.abs(x[idx] - tube.lower[idx]) <= active_tol, tube.lower[idx], tube.upper[idx])
    vals[0] = tube.start
    if end_active:
        vals[-1] = lo if abs(x[-1] - lo) <= abs(x[-1] - hi) else hi
    y = np.interp(t, t[idx], vals)  # flat past the last pinned knot
    slack = FEASIBILITY_SLACK * max(1.0, float(np.max(np.abs(tube.upper))), float(np.max(np.abs(tube.lower))))
    feasible = (
        np.all(y >= tube.lower - slack)
        and np.all(y <= tube.upper + slack)
        and lo - slack <= y[-1] <= hi + slack
    )
    if not feasible:
        return x
    e_x = energy(SampledPath(tube.grid, x))
    e_y = energy(SampledPath(tube.grid, y))
    return y if e_y <= e_x else x


def wiener_tube(W: SampledPath, r: float, end_mode: str = "fixed") -> Tube:
    """Tube of radius ``r`` around ``W`` starting at 0."""
    if not r > 0:
        raise InputError("radius must be positive")
    if W.values[0] != 0.0:
        raise InputError("the path must start at 0")
    wT = float(W.values[-1])
    if end_mode == "fixed":
        end = FixedAt(wT)
    elif end_mode == "free":
        end = Interval(wT - r, wT + r)
    else:
        raise InputError(f"end mode must be 'fixed' or 'free', got {end_mode!r}")
    return Tube(W.grid, W.values - r, W.values + r, 0.0, end)


def taut_energy(W: SampledPath, r: float, end_mode: str = "fixed") -> TautStringResult:
    """Taut string in the radius-``r`` tube around ``W``.

    ``sqrt(result.energy_value)`` is the discrete minimal energy norm with a
    free end (``end_mode='free'``) or with the end pinned to ``W(T)``.
    """
    return solve(wiener_tube(W, r, end_mode))


def free_knot_knots(W: SampledPath, eps: float) -> tuple[np.ndarray, np.ndarray, int]:
    """Knots of the free-knot approximant and the number of completed moves.

    A knot is placed at the first grid point where the path has moved at
    least ``eps/2`` from the previous knot value (overshoot kept). The last
    knot value is held constant up to the end of the grid.
    """
    if not eps > 0:
        raise InputError("eps must be positive")
    idx = _kernels.first_crossings(W.values, 0.5 * eps)
    times = W.grid.times[idx]
    values = W.values[idx]
    moves = idx.size - 1
    if idx[-1] != len(W) - 1:
        times = np.append(times, W.grid.horizon)
        values = np.append(values, values[-1])
    return times, values, moves


def free_knot_string(W: SampledPath, eps: float) -> SampledPath:
    """Piecewise-linear interpolation of ``W`` at its ``eps/2`` crossing times.

    The result stays within ``eps`` of ``W`` at every knot, up to the
    overshoot of one grid step.
    """
    times, values, _ = free_knot_knots(W, eps)
    return SampledPath(W.grid, np.interp(W.grid.times, times, values))


def read_tube_csv(fh, start: float = 0.0, end: EndConstraint | None = None) -> Tube:
    """Read a ``t,lower,upper`` CSV; ``end`` defaults to the whole last box."""
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not {"t", "lower", "upper"} <= set(reader.fieldnames):
        raise InputError("tube CSV needs a header with columns t,lower,upper")
    t, lo, hi = [], [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            t.append(float(row["t"]))
            lo.append(float(row["lower"]))
            hi.append(float(row["upper"]))
        except (TypeError, ValueError):
            raise InputError(f"malformed number on line {lineno} of the tube CSV") from None
    if len(t) < 2:
        raise InputError("tube CSV needs at least two rows")
    if end is None:
        end = Interval(lo[-1], hi[-1])
    return Tube(TimeGrid(t), lo, hi, start, end)


def write_result_csv(result: TautStringResult, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "value", "contact"])
    for t, v, c in zip(result.path.times, result.path.values, result.contact):
        writer.writerow([format(t, ".17g"), format(v, ".17g"), c])
