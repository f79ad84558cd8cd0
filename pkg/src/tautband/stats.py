"""Mergeable running moments and fixed-range histograms."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass
class MomentAccumulator:
    """Single-pass mean/variance (Welford), mergeable with Chan's update.

    Merging accumulators in a fixed order gives the same floating-point
    result no matter how the underlying items were scheduled.
    """

    count: int = 0
    mean: float = 0.0
    m2: float = 0.0

    def add(self, x: float):
        self.count += 1
        delta = x - self.mean
        self.mean += delta / self.count
        self.m2 += delta * (x - self.mean)

    def extend(self, xs):
        for x in xs:
            self.add(float(x))
        return self

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.count == 0:
            return self
        if self.count == 0:
            self.count, self.mean, self.m2 = other.count, other.mean, other.m2
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.mean += delta * other.count / n
        self.m2 += other.m2 + delta * delta * self.count * other.count / n
        self.count = n
        return self

    @property
    def variance(self) -> float:
        """Unbiased sample variance (0 for fewer than two items)."""
        return self.m2 / (self.count - 1) if self.count > 1 else 0.0

    @property
    def second_moment(self) -> float:
        return self.variance + self.mean * self.mean

    @property
    def standard_error(self) -> float:
        return float(np.sqrt(self.variance / self.count)) if self.count else float("nan")


@dataclass
class Histogram:
    """Counts over equal-width bins of ``[low, high]``, closed on the left.

    Values outside the range are tallied in ``underflow``/``overflow``
    rather than dropped silently.
    """

    low: float
    high: float
    bins: int
    counts: np.ndarray = field(default=None)
    underflow: int = 0
    overflow: int = 0

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.bins, dtype=np.int64)

    @property
    def edges(self) -> np.ndarray:
        return np.linspace(self.low, self.high, self.bins + 1)

    @property
    def total(self) -> int:
        return int(self.counts.sum()) + self.underflow + self.overflow

    def add(self, values):
        values = np.asarray(values, dtype=np.float64).ravel()
        scaled = (values - self.low) * (self.bins / (self.high - self.low))
        idx = np.floor(scaled).astype(np.int64)
        # the right end of the range belongs to the last bin
        idx[values == self.high] = self.bins - 1
        under = idx < 0
        over = idx >= self.bins
        self.underflow += int(under.sum())
        self.overflow += int(over.sum())
        inside = ~(under | over)
        self.counts += np.bincount(idx[inside], minlength=self.bins)
        return self

    def merge(self, other: "Histogram") -> "Histogram":
        if (self.low, self.high, self.bins) != (other.low, other.high, other.bins):
            raise ValueError("cannot merge histograms with different bins")
        self.counts = self.counts + other.counts
        self.underflow += other.underflow
        self.overflow += other.overflow
        return self

    def probabilities(self) -> np.ndarray:
        total = self.counts.sum()
        return self.counts / total if total else np.zeros(self.bins)

    def is_unimodal(self, smooth: int = 1) -> bool:
        """True when the (optionally box-smoothed) counts rise then fall."""
        c = self.counts.astype(float)
        if smooth > 1:
            c = np.convolve(c, np.ones(smooth) / smooth, mode="same")
        peak = int(np.argmax(c))
        return bool(np.all(np.diff(c[: peak + 1]) >= 0) and np.all(np.diff(c[peak:]) <= 0))

    def to_rows(self):
        e = self.edges
        return [(float(e[i]), float(e[i + 1]), int(self.counts[i])) for i in range(self.bins)]
