"""Monte Carlo experiments over simulated Wiener paths.

Path ``i`` of an experiment is simulated from ``derive_seed(master_seed, i)``.
Paths are processed in fixed-size chunks; chunk results are merged in
index order, so the outcome does not depend on the number of workers.
"""

from __future__ import annotations

import csv
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from . import _kernels
from .errors import InputError, InvariantError
from .paths import TimeGrid, derive_seed, energy, rescale_to_unit, simulate_wiener
from .pursuit import SpeedLaw, occupancy_l1_distance, simulate_pursuit
from .stats import Histogram, MomentAccumulator
from .tautstring import free_knot_knots, solve, wiener_tube

MODES = ("taut_free", "taut_fixed", "pursuit")
CHUNK = 8
HIST_RANGE = {"taut_free": (0.0, 2.0), "taut_fixed": (0.0, 2.0), "pursuit": (0.0, 3.0)}
OCCUPANCY_BINS = 50


def normalize_mode(mode: str) -> str:
    m = mode.replace("-", "_")
    if m not in MODES:
        raise InputError(f"mode must be one of taut-free, taut-fixed, pursuit; got {mode!r}")
    return m


@dataclass(frozen=True)
class ExperimentConfig:
    horizon: float
    steps: int
    radius: float = 1.0
    paths: int = 100
    master_seed: int = 0
    mode: str = "taut_fixed"
    bins: int = 40
    clamp: float = 0.99

    def __post_init__(self):
        object.__setattr__(self, "mode", normalize_mode(self.mode))
        if not self.horizon > 0:
            raise InputError("horizon T must be positive")
        if int(self.steps) != self.steps or self.steps < 2:
            raise InputError("steps N must be an integer >= 2")
        if not self.radius > 0:
            raise InputError("radius r must be positive")
        if int(self.paths) != self.paths or self.paths < 1:
            raise InputError("paths M must be a positive integer")
        if int(self.bins) != self.bins or self.bins < 1:
            raise InputError("bins must be a positive integer")
        object.__setattr__(self, "steps", int(self.steps))
        object.__setattr__(self, "paths", int(self.paths))
        object.__setattr__(self, "bins", int(self.bins))

    @classmethod
    def from_rate(cls, horizon: float, steps_per_unit: float, **kw) -> "ExperimentConfig":
        return cls(horizon=horizon, steps=int(round(horizon * steps_per_unit)), **kw)

    @property
    def steps_per_unit(self) -> float:
        return self.steps / self.horizon

    @property
    def normalized(self) -> bool:
        return self.mode != "pursuit"

    def path_seed(self, index: int) -> int:
        return derive_seed(self.master_seed, index)


def variance_standard_error(values) -> float:
    """Large-sample standard error of the unbiased sample variance."""
    x = np.asarray(values, dtype=np.float64)
    n = x.size
    if n < 4:
        return float("inf")
    d = x - x.mean()
    m2 = np.mean(d**2)
    m4 = np.mean(d**4)
    return float(math.sqrt(max(m4 - m2 * m2 * (n - 3) / (n - 1), 0.0) / n))


@dataclass
class EnergyStats:
    """Summary of one experiment.

    ``values`` holds the per-path reported quantity: ``(r/sqrt T) sqrt(energy)``
    for the taut modes, ``sqrt(energy/T)`` for pursuit. ``raw_values`` is the
    un-normalised ``sqrt(energy)``.
    """

    count: int
    sample_mean: float
    sample_median: float
    sample_variance: float
    second_moment: float
    standard_error: float
    normalized: bool
    histogram: Histogram
    raw_variance: float
    raw_variance_se: float
    raw_second_moment: float
    raw_second_moment_se: float
    values: np.ndarray = field(repr=False)
    raw_values: np.ndarray = field(repr=False)
    seeds: np.ndarray = field(repr=False)
    occupancy: Histogram | None = None
    clamp_hits: int = 0
    path_occupancy_l1: np.ndarray | None = field(default=None, repr=False)

    @property
    def occupancy_l1(self) -> float | None:
        return None if self.occupancy is None else occupancy_l1_distance(self.occupancy)

    @property
    def median_se(self) -> float:
        # asymptotic standard error of a median under normality
        return math.sqrt(math.pi / 2.0) * self.standard_error

    def to_dict(self, cfg: ExperimentConfig | None = None) -> dict:
        out = {
            "count": self.count,
            "normalized": self.normalized,
            "sample_mean": self.sample_mean,
            "sample_median": self.sample_median,
            "sample_variance": self.sample_variance,
            "second_moment": self.second_moment,
            "standard_error": self.standard_error,
            "median_standard_error": self.median_se,
            "raw_variance": self.raw_variance,
            "raw_variance_standard_error": self.raw_variance_se,
            "raw_second_moment": self.raw_second_moment,
            "raw_second_moment_standard_error": self.raw_second_moment_se,
            "histogram": {
                "edges": [float(e) for e in self.histogram.edges],
                "counts": [int(c) for c in self.histogram.counts],
                "underflow": self.histogram.underflow,
                "overflow": self.histogram.overflow,
            },
        }
        if self.occupancy is not None:
            c = self.occupancy.counts
            out["occupancy"] = {
                "edges": [float(e) for e in self.occupancy.edges],
                "counts": [int(v) for v in c],
                "l1_distance_to_cos2": self.occupancy_l1,
                "edge_bin_fraction": float((c[0] + c[-1]) / max(c.sum(), 1)),
                "clamp_hits": self.clamp_hits,
                "max_path_l1_distance_to_cos2": float(np.max(self.path_occupancy_l1)),
            }
        if cfg is not None:
            out["config"] = {
                "horizon": cfg.horizon,
                "steps": cfg.steps,
                "steps_per_unit": cfg.steps_per_unit,
                "radius": cfg.radius,
                "paths": cfg.paths,
                "master_seed": cfg.master_seed,
                "mode": cfg.mode,
                "bins": cfg.bins,
                "clamp": cfg.clamp,
            }
        return out


@dataclass
class _Chunk:
    values: np.ndarray
    raw: np.ndarray
    seeds: np.ndarray
    moments: MomentAccumulator
    occupancy: Histogram | None
    clamp_hits: int
    occ_l1: np.ndarray | None


def _run_chunk(cfg: ExperimentConfig, grid: TimeGrid, lo: int, hi: int) -> _Chunk:
    n = hi - lo
    values = np.empty(n)
    raw = np.empty(n)
    seeds = np.empty(n, dtype=np.uint64)
    occ = Histogram(-1.0, 1.0, OCCUPANCY_BINS) if cfg.mode == "pursuit" else None
    occ_l1 = np.empty(n) if occ is not None else None
    hits = 0
    law = SpeedLaw.optimal(cfg.clamp) if cfg.mode == "pursuit" else None
    scale = cfg.radius / math.sqrt(cfg.horizon)
    for j, i in enumerate(range(lo, hi)):
        seed = cfg.path_seed(i)
        seeds[j] = seed
        W = simulate_wiener(grid, seed)
        if cfg.mode == "pursuit":
            run = simulate_pursuit(W, law)
            raw[j] = math.sqrt(run.energy_rate * cfg.horizon)
            values[j] = run.sqrt_rate
            occ.merge(run.occupancy)
            occ_l1[j] = occupancy_l1_distance(run.occupancy)
            hits += run.clamp_hits
        else:
            end = "fixed" if cfg.mode == "taut_fixed" else "free"
            res = solve(wiener_tube(W, cfg.radius, end))
            raw[j] = res.sqrt_energy
            values[j] = scale * raw[j]
    return _Chunk(values, raw, seeds, MomentAccumulator().extend(values), occ, hits, occ_l1)


def run_experiment(cfg: ExperimentConfig, threads: int = 1, progress=None) -> EnergyStats:
    """Simulate ``cfg.paths`` paths and summarise the chosen energy.

    ``progress``, if given, is called as ``progress(done, total)`` after
    each chunk completes.
    """
    grid = TimeGrid.uniform(cfg.horizon, cfg.steps)
    bounds = [(lo, min(lo + CHUNK, cfg.paths)) for lo in range(0, cfg.paths, CHUNK)]
    chunks: list[_Chunk] = []
    if threads <= 1:
        for lo, hi in bounds:
            chunks.append(_run_chunk(cfg, grid, lo, hi))
            if progress:
                progress(hi, cfg.paths)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_run_chunk, cfg, grid, lo, hi) for lo, hi in bounds]
            for (lo, hi), fut in zip(bounds, futures):
                chunks.append(fut.result())
                if progress:
                    progress(hi, cfg.paths)
    return _aggregate(cfg, chunks)


def _aggregate(cfg: ExperimentConfig, chunks: list[_Chunk]) -> EnergyStats:
    moments = MomentAccumulator()
    for c in chunks:
        moments.merge(c.moments)
    values = np.concatenate([c.values for c in chunks])
    raw = np.concatenate([c.raw for c in chunks])
    seeds = np.concatenate([c.seeds for c in chunks])
    lo, hi = HIST_RANGE[cfg.mode]
    hist = Histogram(lo, hi, cfg.bins).add(values)
    occ = occ_l1 = None
    if cfg.mode == "pursuit":
        occ = Histogram(-1.0, 1.0, OCCUPANCY_BINS)
        for c in chunks:
            occ.merge(c.occupancy)
        occ_l1 = np.concatenate([c.occ_l1 for c in chunks])
    raw_mom = MomentAccumulator().extend(raw)
    sq = raw * raw
    stats = EnergyStats(
        count=moments.count,
        sample_mean=moments.mean,
        sample_median=float(np.median(values)),
        sample_variance=moments.variance,
        second_moment=moments.second_moment,
        standard_error=moments.standard_error,
        normalized=cfg.normalized,
        histogram=hist,
        raw_variance=raw_mom.variance,
        raw_variance_se=variance_standard_error(raw),
        raw_second_moment=float(np.mean(sq)),
        raw_second_moment_se=float(np.std(sq, ddof=1) / math.sqrt(sq.size)) if sq.size > 1 else float("inf"),
        values=values,
        raw_values=raw,
        seeds=seeds,
        occupancy=occ,
        clamp_hits=sum(c.clamp_hits for c in chunks),
        path_occupancy_l1=occ_l1,
    )
    if hist.total != stats.count:
        raise InvariantError("histogram does not account for every path")
    return stats


def write_per_path_csv(stats: EnergyStats, fh):
    writer = csv.writer(fh, lineterminator="\n")
    writer.writerow(["index", "seed", "value", "sqrt_energy"])
    for i, (s, v, r) in enumerate(zip(stats.seeds, stats.values, stats.raw_values)):
        writer.writerow([i, int(s), format(v, ".17g"), format(r, ".17g")])


def write_histogram_csv(hist: Histogram, fh, reference=None):
    writer = csv.writer(fh, lineterminator="\n")
    header = ["left", "right", "count"]
    if reference is not None:
        header.append("reference_probability")
    writer.writerow(header)
    for i, (a, b, c) in enumerate(hist.to_rows()):
        row = [format(a, ".17g"), format(b, ".17g"), c]
        if reference is not None:
            row.append(format(float(reference[i]), ".17g"))
        writer.writerow(row)


def convergence_sweep(base: ExperimentConfig, horizons, threads: int = 1, progress=None):
    """Rerun ``base`` at each horizon, keeping steps per unit time fixed."""
    horizons = [float(T) for T in horizons]
    if any(b <= a for a, b in zip(horizons, horizons[1:])):
        raise InputError("horizons must be strictly increasing")
    out = []
    for T in horizons:
        cfg = replace(base, horizon=T, steps=int(round(T * base.steps_per_unit)))
        out.append((T, run_experiment(cfg, threads=threads, progress=progress)))
    return out


@dataclass(frozen=True)
class SweepSummary:
    horizons: list
    means: list
    standard_errors: list
    abs_differences: list
    differences_decreasing: bool
    raw_second_moments: list
    raw_second_moment_ses: list
    second_moment_nondecreasing: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def summarize_sweep(results, n_se: float = 3.0) -> SweepSummary:
    """Trend diagnostics for a sweep.

    Second moments count as nondecreasing when no later value falls below
    an earlier one by more than ``n_se`` combined standard errors.
    """
    Ts = [T for T, _ in results]
    means = [s.sample_mean for _, s in results]
    ses = [s.standard_error for _, s in results]
    diffs = [abs(b - a) for a, b in zip(means, means[1:])]
    d0 = [s.raw_second_moment for _, s in results]
    d0_se = [s.raw_second_moment_se for _, s in results]
    ok = all(
        d0[j] >= d0[i] - n_se * math.hypot(d0_se[i], d0_se[j])
        for i in range(len(d0))
        for j in range(i + 1, len(d0))
    )
    return SweepSummary(
        horizons=Ts,
        means=means,
        standard_errors=ses,
        abs_differences=diffs,
        differences_decreasing=all(b < a for a, b in zip(diffs, diffs[1:])),
        raw_second_moments=d0,
        raw_second_moment_ses=d0_se,
        second_moment_nondecreasing=ok,
    )


@dataclass(frozen=True)
class ScalingReport:
    max_rel_dev_unit: float
    max_rel_dev_lambda: float
    energies: np.ndarray = field(repr=False)


def scaling_check(cfg: ExperimentConfig, lam: float = 2.0) -> ScalingReport:
    """Check the Brownian scaling identity path by path.

    For every seed the taut string around ``W`` on ``[0, T]`` with radius
    ``r`` is compared with the one around ``W(sT)/sqrt(T)`` on ``[0, 1]``
    with radius ``r/sqrt(T)``, and with the one on the ``lam``-scaled tube.
    """
    if not lam > 0:
        raise InputError("lambda must be positive")
    if cfg.mode == "pursuit":
        raise InputError("scaling check applies to the taut modes")
    end = "fixed" if cfg.mode == "taut_fixed" else "free"
    grid = TimeGrid.uniform(cfg.horizon, cfg.steps)
    dev_unit = 0.0
    dev_lam = 0.0
    energies = np.empty(cfg.paths)
    for i in range(cfg.paths):
        W = simulate_wiener(grid, cfg.path_seed(i))
        base = solve(wiener_tube(W, cfg.radius, end))
        X = rescale_to_unit(W, cfg.horizon)
        unit = solve(wiener_tube(X, cfg.radius / math.sqrt(cfg.horizon), end))
        scaled = solve(wiener_tube(W, cfg.radius, end).scaled(lam))
        e = base.energy_value
        energies[i] = e
        ref = max(e, np.finfo(float).tiny)
        dev_unit = max(dev_unit, abs(unit.energy_value - e) / ref)
        dev_lam = max(dev_lam, abs(scaled.energy_value - e) / ref)
    return ScalingReport(dev_unit, dev_lam, energies)


@dataclass(frozen=True)
class FreeKnotEstimate:
    eps: float
    mean: float
    standard_error: float
    knots_scaled: float
    warning: str | None = None


def free_knot_estimate(eps_list, paths: int, steps: int = 2**20, master_seed: int = 0,
                       crossing_resolution: float | None = None):
    """Mean of ``eps * sqrt(energy)`` of the free-knot approximant on [0, 1].

    ``knots_scaled`` is the mean of ``N_eps * eps**2`` where ``N_eps`` counts
    the completed ``eps/2`` moves plus the final partial one.

    With ``crossing_resolution`` set, each ``eps`` gets its own uniform grid
    with that many steps per expected crossing interval ``eps**2/4``, so the
    grid overshoot is the same for every ``eps``; otherwise all use ``steps``.
    """
    out = []
    for eps in eps_list:
        eps = float(eps)
        if not 0 < eps < 1:
            raise InputError("eps must lie in (0, 1)")
        n = steps if crossing_resolution is None else int(math.ceil(crossing_resolution * 4.0 / eps**2))
        grid = TimeGrid.uniform(1.0, n)
        per_crossing = (eps * eps / 4.0) * n
        warning = None
        if per_crossing < 100:
            warning = (
                f"grid too coarse for eps={eps}: {per_crossing:.1f} steps per "
                "expected crossing interval (want >= 100)"
            )
        vals = np.empty(paths)
        knots = np.empty(paths)
        for i in range(paths):
            W = simulate_wiener(grid, derive_seed(master_seed, i))
            t, v, moves = free_knot_knots(W, eps)
            vals[i] = eps * math.sqrt(_kernels.knot_energy(t, v))
            knots[i] = (moves + 1) * eps * eps
        se = float(np.std(vals, ddof=1) / math.sqrt(paths)) if paths > 1 else float("inf")
        out.append(FreeKnotEstimate(eps, float(vals.mean()), se, float(knots.mean()), warning))
    return out


class ProgressPrinter:
    """Rate-limited progress lines on a text stream."""

    def __init__(self, stream, label: str = "", interval: float = 1.0):
        self.stream = stream
        self.label = label
        self.interval = interval
        self._last = 0.0

    def __call__(self, done: int, total: int):
        now = time.monotonic()
        if done == total or now - self._last >= self.interval:
            self._last = now
            print(f"{self.label}{done}/{total} paths", file=self.stream, flush=True)
