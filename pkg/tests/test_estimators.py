import math

import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tautband.errors import InputError
from tautband.estimators import MarkovianPursuit, TautStringRegressor
from tautband.paths import TimeGrid, simulate_wiener
from tautband.tautstring import solve, wiener_tube


def test_regressor_matches_functional_solver():
    W = simulate_wiener(TimeGrid.uniform(10.0, 500), 3)
    for end in ("free", "fixed"):
        est = TautStringRegressor(radius=0.4, end=end).fit(W.times[:, None], W.values)
        ref = solve(wiener_tube(W, 0.4, end))
        assert est.energy_ == ref.energy_value
        assert np.array_equal(est.path_, ref.path.values)
        assert np.array_equal(est.predict(W.times), ref.path.values)


def test_regressor_handles_offsets_and_order():
    rng = np.random.default_rng(0)
    t = np.sort(rng.uniform(5.0, 9.0, 40))
    y = np.sin(t)
    perm = rng.permutation(40)
    a = TautStringRegressor(radius=0.1).fit(t, y)
    b = TautStringRegressor(radius=0.1).fit(t[perm], y[perm])
    assert np.array_equal(a.path_, b.path_)
    assert np.all(np.abs(a.predict(t) - y) <= 0.1 + 1e-12)
    assert a.score(t, y) > 0.9


def test_regressor_params_and_errors():
    est = TautStringRegressor(radius=2.0, end="fixed")
    assert clone(est).get_params() == {"radius": 2.0, "end": "fixed", "start": None}
    with pytest.raises(NotFittedError):
        est.predict([0.0, 1.0])
    with pytest.raises(InputError):
        TautStringRegressor(radius=0).fit([0, 1], [0, 1])
    with pytest.raises(InputError):
        TautStringRegressor(end="loose").fit([0, 1], [0, 1])
    with pytest.raises(InputError):
        TautStringRegressor().fit([0, 0, 1], [0, 1, 2])
    with pytest.raises(InputError):
        TautStringRegressor().fit(np.zeros((3, 2)), [0, 1, 2])


def test_pursuit_estimator():
    grid = TimeGrid.uniform(50.0, 50_000)
    X = np.vstack([simulate_wiener(grid, s).values for s in range(3)])
    est = MarkovianPursuit(dt=1e-3).fit(X)
    assert est.energy_rates_.shape == (3,)
    assert est.occupancy_.total == X.size
    H = est.transform(X)
    assert H.shape == X.shape
    assert np.all(np.abs(H - X)[:, 1:] <= 0.99 + 1e-12)
    assert -est.score(X) == pytest.approx(np.mean(np.sqrt(est.energy_rates_)))
    assert clone(est).get_params()["speed_scale"] == pytest.approx(math.pi / 2)
    with pytest.raises(NotFittedError):
        MarkovianPursuit().transform(X)
