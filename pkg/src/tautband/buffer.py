"""Loss scheduling for a finite buffer in front of a limited channel.

In slot ``j`` an amount ``S_j`` arrives, ``C_j`` can be sent and ``L_j`` is
dropped; the buffer level obeys ``B_j = B_{j-1} + S_j - C_j - L_j`` with
``0 <= B_j <= B``. Plotted against operational time ``u_k = S_1 + ... + S_k``
the accumulated loss must stay in a band of width ``B`` below the
accumulated excess, and the penalty ``sum phi(L_j/S_j) S_j`` is a convex
functional of its slopes. For a fixed terminal loss the taut string in that
band therefore minimises the penalty for every convex ``phi`` at once.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import InputError, InvariantError
from .paths import TimeGrid
from .tautstring import FixedAt, Tube, solve

DP_LEVELS = 200
ENDPOINT_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class TrafficTrace:
    inflow: np.ndarray
    capacity: np.ndarray

    def __post_init__(self):
        S = np.array(self.inflow, dtype=np.float64)
        C = np.array(self.capacity, dtype=np.float64)
        if S.ndim != 1 or S.size == 0 or S.shape != C.shape:
            raise InputError("inflow and capacity must be nonempty sequences of equal length")
        if not (np.all(np.isfinite(S)) and np.all(np.isfinite(C))):
            raise InputError("trace values must be finite")
        checks = (
            (S <= 0, "inflow S must be positive"),
            ((C < 0) | (C > S), "capacity C must lie in [0, S]"),
        )
        for bad, what in checks:
            if np.any(bad):
                j = int(np.flatnonzero(bad)[0])
                raise InputError(f"{what} (slot {j + 1}: S={float(S[j])!r}, C={float(C[j])!r})")
        S.setflags(write=False)
        C.setflags(write=False)
        object.__setattr__(self, "inflow", S)
        object.__setattr__(self, "capacity", C)

    def __len__(self):
        return self.inflow.size

    @property
    def excess(self) -> np.ndarray:
        return self.inflow - self.capacity


@dataclass(frozen=True, eq=False)
class LossSchedule:
    losses: np.ndarray
    levels: np.ndarray
    flags: dict = field(default_factory=dict)

    @property
    def accumulated(self) -> np.ndarray:
        return np.concatenate(([0.0], np.cumsum(self.losses)))


class PenaltyFunction:
    """Convex nondecreasing ``phi`` on [0, 1], checked on a probe grid.

    ``evaluator`` should accept numpy arrays; scalar-only callables are
    vectorised automatically.
    """

    def __init__(self, evaluator: Callable, name: str = "custom", probes: int = 257, tol: float = 1e-10):
        self.name = name
        x = np.linspace(0.0, 1.0, probes)
        try:
            y = np.asarray(evaluator(x), dtype=np.float64)
            if y.shape != x.shape:
                raise TypeError
            self._f = evaluator
        except (TypeError, ValueError):
            vec = np.vectorize(lambda u: float(evaluator(float(u))), otypes=[float])
            y = vec(x)
            self._f = vec
        if not np.all(np.isfinite(y)):
            raise InputError(f"penalty {name} is not finite on [0, 1]")
        slack = tol * max(1.0, float(np.max(np.abs(y))))
        if np.any(np.diff(y) < -slack):
            raise InputError(f"penalty {name} is not nondecreasing on [0, 1]")
        mid = y[1:-1]
        if np.any(mid > 0.5 * (y[:-2] + y[2:]) + slack):
            raise InputError(f"penalty {name} fails the midpoint convexity test")

    def __call__(self, u):
        out = np.asarray(self._f(np.asarray(u, dtype=np.float64)), dtype=np.float64)
        return float(out) if out.ndim == 0 else out

    def __repr__(self):
        return f"PenaltyFunction({self.name!r})"

    @classmethod
    def polynomial(cls, coefficients) -> "PenaltyFunction":
        c = [float(a) for a in coefficients]
        if not c:
            raise InputError("polynomial penalty needs at least one coefficient")
        # numpy wants the highest degree first
        return cls(lambda u: np.polyval(c[::-1], u), name="poly:" + ",".join(format(a, "g") for a in c))


PRESETS = {
    "quad": lambda u: u * u,
    "exp": lambda u: np.expm1(u),
    "linear": lambda u: u,
    "hinge2": lambda u: np.maximum(0.0, 2.0 * u - 1.0) ** 2,
}


def parse_penalty(spec: str) -> PenaltyFunction:
    """``quad``, ``exp``, ``linear``, ``hinge2`` or ``poly:a0,a1,...``."""
    if spec in PRESETS:
        return PenaltyFunction(PRESETS[spec], name=spec)
    if spec.startswith("poly:"):
        try:
            coeffs = [float(a) for a in spec[5:].split(",") if a.strip()]
        except ValueError:
            raise InputError(f"malformed polynomial coefficients in {spec!r}") from None
        return PenaltyFunction.polynomial(coeffs)
    raise InputError(f"unknown penalty {spec!r}; use quad, exp, linear, hinge2 or poly:a0,a1,...")


def band(trace: TrafficTrace, B: float) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Operational times and the lower/upper accumulated-loss boundaries."""
    if not B >= 0:
        raise InputError("buffer size B must be nonnegative")
    u = np.concatenate(([0.0], np.cumsum(trace.inflow)))
    upper = np.concatenate(([0.0], np.cumsum(trace.excess)))
    lower = np.maximum(0.0, upper - B)
    return u, lower, upper


def _levels(trace: TrafficTrace, L: np.ndarray) -> np.ndarray:
    out = np.empty(L.size)
    b = 0.0
    excess = trace.excess
    for j in range(L.size):
        b = b + (excess[j] - L[j])
        out[j] = b
    return out


def _repair(trace: TrafficTrace, L: np.ndarray, B: float, tol: float) -> tuple[np.ndarray, float]:
    """Nudge losses so the recomputed levels respect [0, B] in floating point.

    Returns the repaired losses and the largest adjustment made; anything
    beyond ``tol`` is a genuine violation.
    """
    L = L.copy()
    S = trace.inflow
    excess = trace.excess
    worst = 0.0
    b = 0.0
    for j in range(L.size):
        orig = L[j]
        L[j] = min(max(L[j], 0.0), S[j])
        for _ in range(64):
            nb = b + (excess[j] - L[j])
            if nb > B and L[j] < S[j]:
                L[j] = min(S[j], max(L[j] + (nb - B), np.nextafter(L[j], math.inf)))
            elif nb < 0 and L[j] > 0:
                L[j] = max(0.0, min(L[j] + nb, np.nextafter(L[j], -math.inf)))
            else:
                break
        b = b + (excess[j] - L[j])
        worst = max(worst, abs(L[j] - orig))
    if worst > tol:
        raise InvariantError(f"loss schedule needed a correction of {worst:.3g} to fit the band")
    return L, worst


def check_schedule(trace: TrafficTrace, schedule: LossSchedule, B: float):
    """Re-derive the levels from the losses and verify every constraint."""
    L = schedule.losses
    if L.shape != trace.inflow.shape:
        raise InvariantError("schedule length does not match the trace")
    if np.any(L < 0) or np.any(L > trace.inflow):
        raise InvariantError("a loss lies outside [0, S_j]")
    levels = _levels(trace, L)
    if not np.array_equal(levels, schedule.levels):
        raise InvariantError("buffer levels do not follow the balance equation")
    if np.any(levels < 0) or np.any(levels > B):
        j = int(np.flatnonzero((levels < 0) | (levels > B))[0])
        raise InvariantError(f"buffer level {float(levels[j])!r} outside [0, {B!r}] at slot {j + 1}")


def _schedule(trace, B, L, flags):
    tol = 1e-9 * max(1.0, B, float(np.sum(trace.inflow)))
    L, fix = _repair(trace, L, B, tol)
    flags = dict(flags, max_repair=fix)
    sched = LossSchedule(L, _levels(trace, L), flags)
    check_schedule(trace, sched, B)
    return sched


def penalty(schedule: LossSchedule, trace: TrafficTrace, phi: PenaltyFunction) -> float:
    """``sum_j phi(L_j / S_j) S_j``."""
    ratio = schedule.losses / trace.inflow
    if np.any(ratio < 0) or np.any(ratio > 1):
        raise InputError("loss ratio L_j/S_j outside [0, 1]")
    return float(np.sum(phi(ratio) * trace.inflow))


def fifo_losses(trace: TrafficTrace, B: float) -> LossSchedule:
    """Keep the buffer as full as possible and drop only the overflow."""
    band(trace, B)
    excess = trace.excess
    L = np.empty(len(trace))
    b = 0.0
    for j in range(L.size):
        L[j] = max(0.0, excess[j] - (B - b))
        b = b + (excess[j] - L[j])
    return _schedule(trace, B, L, {"strategy": "fifo"})


def _taut_losses(u, lower, upper, end):
    tube = Tube(TimeGrid(u), lower, upper, 0.0, FixedAt(end))
    return np.diff(solve(tube).path.values)


def optimal_losses(trace: TrafficTrace, B: float, phi: PenaltyFunction, end: float | None = None) -> LossSchedule:
    """Penalty-minimising loss schedule.

    With ``end`` given the total loss is pinned to it; otherwise the
    total is chosen by golden-section search on the penalty over the final
    band interval (the minimal penalty is convex in the total). If the taut
    string would drop more than arrives in some slot, the lattice dynamic
    program is used instead and ``flags['dp_fallback']`` is set.
    """
    u, lower, upper = band(trace, B)
    if not np.all(np.diff(upper) >= 0):
        raise InvariantError("accumulated excess is not nondecreasing")
    S = trace.inflow

    def cost(L):
        return float(np.sum(phi(np.clip(L / S, 0.0, 1.0)) * S))

    if end is not None:
        end = float(end)
        # totals recomputed by summing losses may miss the band by roundoff
        slack = 1e-12 * max(1.0, float(upper[-1]))
        if lower[-1] - slack <= end <= upper[-1] + slack:
            end = min(max(end, float(lower[-1])), float(upper[-1]))
        if not lower[-1] <= end <= upper[-1]:
            raise InputError(f"total loss {end!r} outside the final band [{float(lower[-1])!r}, {float(upper[-1])!r}]")
        L = _taut_losses(u, lower, upper, end)
        policy = "fixed"
    else:
        L = _best_end(u, lower, upper, cost)
        policy = "penalty-optimal"
    flags = {"strategy": "taut", "endpoint_policy": policy, "dp_fallback": False}
    scale = max(1.0, B)
    if np.any(L < -1e-9 * scale):
        raise InvariantError("taut accumulated loss is not nondecreasing")
    if np.any(L > S + 1e-9 * scale):
        dp = dp_oracle_losses(trace, B, phi, end=end)
        return LossSchedule(dp.losses, dp.levels, dict(flags, dp_fallback=True, max_repair=0.0))
    return _schedule(trace, B, L, flags)


def _best_end(u, lower, upper, cost):
    a, b = float(lower[-1]), float(upper[-1])
    if b - a <= 0:
        return _taut_losses(u, lower, upper, a)
    tol = ENDPOINT_RTOL * max(b - a, 1e-300)
    cache = {}

    def f(e):
        if e not in cache:
            L = _taut_losses(u, lower, upper, e)
            cache[e] = (cost(L), L)
        return cache[e][0]

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    lo, hi = a, b
    c = hi - invphi * (hi - lo)
    d = lo + invphi * (hi - lo)
    fc, fd = f(c), f(d)
    while hi - lo > tol:
        if fc <= fd:
            hi, d, fd = d, c, fc
            c = hi - invphi * (hi - lo)
            fc = f(c)
        else:
            lo, c, fc = c, d, fd
            d = lo + invphi * (hi - lo)
            fd = f(d)
    best = min((f(x), x) for x in (a, b, c, d))[1]
    return cache[best][1]


def dp_oracle_losses(trace: TrafficTrace, B: float, phi: PenaltyFunction,
                     levels: int = DP_LEVELS, end: float | None = None) -> LossSchedule:
    """Exhaustive minimisation over a lattice of accumulated-loss values.

    Slot ``k`` allows the band endpoints and every multiple of ``B/levels``
    strictly between them; steps must satisfy ``0 <= L_k <= S_k``. The
    result is an upper bound on the true optimum that approaches it as the
    lattice is refined.
    """
    u, lower, upper = band(trace, B)
    S = trace.inflow
    delta = B / levels if B > 0 else 0.0
    states = [np.array([0.0])]
    for k in range(1, u.size):
        lo, hi = lower[k], upper[k]
        if k == u.size - 1 and end is not None:
            pts = np.array([float(end)])
        elif delta > 0:
            inner = np.arange(math.floor(lo / delta) + 1, math.ceil(hi / delta)) * delta
            pts = np.unique(np.concatenate(([lo], inner[(inner > lo) & (inner < hi)], [hi])))
        else:
            pts = np.array([lo])
        states.append(pts)
    best = np.zeros(1)
    back = []
    for k in range(1, u.size):
        prev, cur = states[k - 1], states[k]
        step = cur[None, :] - prev[:, None]
        ok = (step >= 0) & (step <= S[k - 1])
        ratio = np.clip(step / S[k - 1], 0.0, 1.0)
        total = best[:, None] + np.where(ok, phi(ratio) * S[k - 1], np.inf)
        arg = np.argmin(total, axis=0)
        best = total[arg, np.arange(cur.size)]
        back.append(arg)
    if not np.any(np.isfinite(best)):
        raise InvariantError("no lattice path satisfies the loss caps")
    i = int(np.argmin(best))
    path = np.empty(u.size)
    for k in range(u.size - 1, 0, -1):
        path[k] = states[k][i]
        i = int(back[k - 1][i])
    path[0] = 0.0
    return _schedule(trace, B, np.diff(path), {"strategy": "dp", "levels": levels})


def random_trace(n: int, rng: np.random.Generator, s_range=(1.0, 2.0), c_low: float = 0.5) -> TrafficTrace:
    """``S ~ U(s_range)`` and ``C ~ U(c_low, S)`` slot by slot."""
    S = rng.uniform(*s_range, size=n)
    C = c_low + rng.uniform(size=n) * (S - c_low)
    return TrafficTrace(S, C)


def read_trace_csv(fh) -> TrafficTrace:
    reader = csv.DictReader(fh)
    if reader.fieldnames is None or not {"slot", "S", "C"} <= set(reader.fieldnames):
        raise InputError("trace CSV needs a header with columns slot,S,C")
    S, C = [], []
    for lineno, row in enumerate(reader, start=2):
        try:
            S.append(float(row["S"]))
            C.append(float(row["C"]))
        except (TypeError, ValueError):
            raise InputError(f"malformed number on line {lineno} of the trace CSV") from None
    return TrafficTrace(S, C)


def write_schedule_csv(trace: TrafficTrace, opt: LossSchedule, fifo: LossSchedule | None, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["slot", "S", "C", "L_opt", "L_fifo", "B_opt", "B_fifo"])
    g = lambda x: format(float(x), ".17g")
    for j in range(len(trace)):
        writer.writerow([
            j + 1, g(trace.inflow[j]), g(trace.capacity[j]), g(opt.losses[j]),
            g(fifo.losses[j]) if fifo else "", g(opt.levels[j]),
            g(fifo.levels[j]) if fifo else "",
        ])
