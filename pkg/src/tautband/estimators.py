"""scikit-learn style wrappers around the functional core.

These follow the estimator conventions (constructor stores parameters only,
``fit`` returns ``self``, learned state ends in ``_``) so they compose with
``clone``, ``get_params`` and pipelines.
"""

from __future__ import annotations

import math

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from ._validation import as_paths, as_time_column, check_choice, check_positive
from .errors import InputError
from .paths import SampledPath, TimeGrid
from .pursuit import DEFAULT_BINS, DEFAULT_CLAMP, SpeedLaw, occupancy_l1_distance, simulate_pursuit
from .stats import Histogram
from .tautstring import FixedAt, Interval, Tube, solve


class TautStringRegressor(RegressorMixin, BaseEstimator):
    """Minimal-energy path within ``radius`` of the observations.

    Parameters
    ----------
    radius : float
        Half-width of the tube around ``y``.
    end : {"free", "fixed"}
        Whether the last value may move within the tube or is pinned to
        the last observation.
    start : float or None
        Value at the first time; defaults to the first observation.

    Attributes
    ----------
    times_ : ndarray
        Sorted fit times.
    path_ : ndarray
        Fitted values at ``times_``.
    energy_ : float
        Discrete energy of the fitted path.
    contact_ : ndarray
        ``"lower"``, ``"upper"`` or ``"interior"`` per knot.
    """

    def __init__(self, radius: float = 1.0, end: str = "free", start=None):
        self.radius = radius
        self.end = end
        self.start = start

    def fit(self, X, y):
        t = as_time_column(X)
        y = np.asarray(y, dtype=np.float64).ravel()
        if y.shape != t.shape:
            raise InputError("X and y must have the same number of samples")
        r = check_positive(self.radius, "radius")
        check_choice(self.end, "end", ("free", "fixed"))
        order = np.argsort(t, kind="stable")
        t, y = t[order], y[order]
        if np.any(np.diff(t) <= 0):
            raise InputError("fit times must be distinct")
        start = y[0] if self.start is None else float(self.start)
        end = FixedAt(float(y[-1])) if self.end == "fixed" else Interval(y[-1] - r, y[-1] + r)
        tube = Tube(TimeGrid(t - t[0]), y - r, y + r, start, end)
        res = solve(tube)
        self.times_ = t
        self.path_ = np.array(res.path.values)
        self.energy_ = res.energy_value
        self.contact_ = res.contact
        self.n_features_in_ = 1
        return self

    def predict(self, X):
        check_is_fitted(self, "path_")
        return np.interp(as_time_column(X), self.times_, self.path_)


class MarkovianPursuit(TransformerMixin, BaseEstimator):
    """Pursue sampled Wiener paths with the law ``-c tan(pi x / 2)``.

    Rows of ``X`` are paths sampled every ``dt`` time units and starting at 0.
    ``fit`` records the energy rate and the pooled occupancy of the
    distance process; ``transform`` returns the pursuit paths.

    Parameters
    ----------
    dt : float
        Sampling step of the input paths.
    speed_scale : float
        The constant ``c``; ``pi/2`` is optimal.
    clamp : float
        Largest allowed distance between pursuer and path.
    bins : int
        Number of occupancy bins over [-1, 1].
    """

    def __init__(self, dt: float = 1e-3, speed_scale: float = math.pi / 2, clamp: float = DEFAULT_CLAMP,
                 bins: int = DEFAULT_BINS):
        self.dt = dt
        self.speed_scale = speed_scale
        self.clamp = clamp
        self.bins = bins

    def _runs(self, X):
        paths = as_paths(X)
        dt = check_positive(self.dt, "dt")
        grid = TimeGrid.uniform(dt * (paths.shape[1] - 1), paths.shape[1] - 1)
        law = SpeedLaw.tangent(check_positive(self.speed_scale, "speed_scale"), self.clamp)
        return [simulate_pursuit(SampledPath(grid, row), law, self.bins) for row in paths]

    def fit(self, X, y=None):
        runs = self._runs(X)
        self.energy_rates_ = np.array([r.energy_rate for r in runs])
        occ = Histogram(-1.0, 1.0, self.bins)
        for r in runs:
            occ.merge(r.occupancy)
        self.occupancy_ = occ
        self.occupancy_l1_ = occupancy_l1_distance(occ)
        self.clamp_hits_ = sum(r.clamp_hits for r in runs)
        self.n_features_in_ = as_paths(X).shape[1]
        return self

    def transform(self, X):
        check_is_fitted(self, "energy_rates_")
        return np.vstack([r.pursuit_path.values for r in self._runs(X)])

    def score(self, X, y=None):
        """Negative mean ``sqrt(energy / T)``; larger is better."""
        runs = self._runs(X)
        return -float(np.mean([r.sqrt_rate for r in runs]))
