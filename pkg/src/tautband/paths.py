"""Time grids, sampled paths and the functionals defined on them.

A :class:`SampledPath` is a list of knot values on a :class:`TimeGrid`,
read as the piecewise-linear function joining consecutive knots. Every norm
in this package is evaluated at knots only.

Random paths come from numpy's PCG64 bit generator seeded with a 64-bit
integer; Gaussian variates use numpy's ziggurat ``standard_normal``. The
same seed on the same grid therefore reproduces the same path bit for bit.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import InputError

SEED_MASK = (1 << 64) - 1


def _frozen(values) -> np.ndarray:
    arr = np.array(values, dtype=np.float64)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Strictly increasing time knots starting at zero."""

    times: np.ndarray

    def __post_init__(self):
        times = _frozen(self.times)
        if times.ndim != 1 or times.size < 2:
            raise InputError("a time grid needs at least two knots")
        if not np.all(np.isfinite(times)):
            raise InputError("time grid contains non-finite values")
        if times[0] != 0.0:
            raise InputError(f"time grid must start at 0, got {float(times[0])!r}")
        steps = np.diff(times)
        if np.any(steps <= 0):
            bad = int(np.argmax(steps <= 0)) + 1
            raise InputError(f"time grid is not strictly increasing at knot {bad}")
        object.__setattr__(self, "times", times)

    @classmethod
    def uniform(cls, horizon: float, steps: int) -> "TimeGrid":
        if horizon <= 0:
            raise InputError("horizon must be positive")
        if steps < 1:
            raise InputError("need at least one step")
        return cls(np.linspace(0.0, float(horizon), int(steps) + 1))

    def __len__(self):
        return self.times.size

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def horizon(self) -> float:
        return float(self.times[-1])

    def is_uniform(self, rtol: float = 1e-9) -> bool:
        dt = self.steps
        return bool(np.all(np.abs(dt - dt.mean()) <= rtol * dt.mean()))

    def same_as(self, other: "TimeGrid") -> bool:
        return self is other or (
            len(self) == len(other) and bool(np.array_equal(self.times, other.times))
        )


@dataclass(frozen=True, eq=False)
class SampledPath:
    """Knot values of a piecewise-linear path on ``grid``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        values = _frozen(self.values)
        if values.shape != (len(self.grid),):
            raise InputError(
                f"path has {values.size} values for a grid of {len(self.grid)} knots"
            )
        object.__setattr__(self, "values", values)

    @property
    def times(self) -> np.ndarray:
        return self.grid.times

    def __len__(self):
        return self.values.size

    def _check_grid(self, other: "SampledPath"):
        if not self.grid.same_as(other.grid):
            raise InputError("paths live on different grids")

    def __add__(self, other):
        if isinstance(other, SampledPath):
            self._check_grid(other)
            return SampledPath(self.grid, self.values + other.values)
        return SampledPath(self.grid, self.values + float(other))

    def __sub__(self, other):
        return self + (-other)

    def __neg__(self):
        return SampledPath(self.grid, -self.values)

    def __mul__(self, factor):
        return SampledPath(self.grid, self.values * float(factor))

    __rmul__ = __mul__

    def at(self, t):
        """Evaluate the linear interpolant at time(s) ``t``."""
        return np.interp(t, self.grid.times, self.values)


def energy(path: SampledPath) -> float:
    """Squared Sobolev seminorm of the piecewise-linear interpolant.

    Equals ``sum(diff(values)**2 / diff(times))``.
    """
    dv = np.diff(path.values)
    return float(np.sum(dv * dv / path.grid.steps))


def variation(path: SampledPath) -> float:
    return float(np.sum(np.abs(np.diff(path.values))))


def sup_distance(p: SampledPath, q: SampledPath) -> float:
    """Largest knot-wise absolute difference between two paths on one grid."""
    p._check_grid(q)
    return float(np.max(np.abs(p.values - q.values)))


def derive_seed(master_seed: int, index: int) -> int:
    """Per-item 64-bit seed from a master seed and an item index.

    Mixing goes through :class:`numpy.random.SeedSequence`, so the result
    depends only on the pair and not on the order items are processed in.
    """
    ss = np.random.SeedSequence([int(master_seed) & SEED_MASK, int(index)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(int(seed) & SEED_MASK))


def simulate_wiener(grid: TimeGrid, seed: int) -> SampledPath:
    """Sample a standard Wiener process at the knots of ``grid``."""
    z = make_rng(seed).standard_normal(len(grid) - 1)
    values = np.empty(len(grid))
    values[0] = 0.0
    np.cumsum(z * np.sqrt(grid.steps), out=values[1:])
    return SampledPath(grid, values)


def rescale_to_unit(path: SampledPath, horizon: float) -> SampledPath:
    """Brownian rescaling onto [0, 1]: ``s = t/T`` and ``x = v/sqrt(T)``.

    The energy of the result equals the energy of ``path``.
    """
    if not horizon > 0:
        raise InputError("horizon must be positive")
    if not np.isclose(path.grid.horizon, horizon, rtol=1e-12, atol=0.0):
        raise InputError(
            f"path spans [0, {path.grid.horizon}] but horizon {horizon} was given"
        )
    if horizon == 1.0:
        return path
    return SampledPath(
        TimeGrid(path.grid.times / horizon), path.values / np.sqrt(horizon)
    )


def add_linear_trend(path: SampledPath, slope: float) -> SampledPath:
    return SampledPath(path.grid, path.values + slope * path.grid.times)


def write_path_csv(path: SampledPath, fh, extra_columns=None):
    """Write ``t,value`` rows (plus optional named columns) to an open file."""
    extra_columns = extra_columns or {}
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["t", "value", *extra_columns])
    cols = [np.asarray(c) for c in extra_columns.values()]
    for i, (t, v) in enumerate(zip(path.grid.times, path.values)):
        row = [format(t, ".17g"), format(v, ".17g")]
        for c in cols:
            item = c[i]
            row.append(format(item, ".17g") if isinstance(item, float) else str(item))
        writer.writerow(row)


def read_path_csv(fh) -> SampledPath:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not {"t", "value"} <= set(reader.fieldnames):
        raise InputError("path CSV needs a header with columns t,value")
    times, values = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            times.append(float(row["t"]))
            values.append(float(row["value"]))
        except (TypeError, ValueError):
            raise InputError(f"malformed number on line {lineno}") from None
    return SampledPath(TimeGrid(times), values)
