import math

import numpy as np
import pytest

from tautband.bounds import isoperimetric_upper
from tautband.errors import InputError, InvariantError
from tautband.paths import SampledPath, TimeGrid, derive_seed, simulate_wiener
from tautband.pursuit import (
    SpeedLaw, binned_stationary_probabilities, entrance_boundary_check, fisher_information,
    occupancy_l1_distance, optimal_speed, simulate_pursuit, stationary_density,
)


def test_optimal_speed_values():
    assert optimal_speed(0.0) == 0.0
    assert optimal_speed(0.5) == pytest.approx(-math.pi / 2, rel=1e-14)
    assert optimal_speed(-0.5) == pytest.approx(math.pi / 2, rel=1e-14)
    assert optimal_speed(0.999999) < -1e5
    with pytest.raises(InputError):
        optimal_speed(1.0)
    with pytest.raises(InputError):
        optimal_speed(np.array([0.2, -1.3]))


def test_stationary_density_values():
    assert stationary_density(0.0) == 1.0
    assert stationary_density(1.0) == pytest.approx(0.0, abs=1e-30)
    assert stationary_density(-1.0) == pytest.approx(0.0, abs=1e-30)
    assert stationary_density(1.5) == 0.0
    x = np.linspace(-1, 1, 200_001)
    assert np.trapezoid(stationary_density(x), x) == pytest.approx(1.0, abs=1e-8)


def test_binned_probabilities_sum_to_one():
    p = binned_stationary_probabilities(np.linspace(-1, 1, 51))
    assert p.sum() == pytest.approx(1.0, abs=1e-14)
    assert np.all(p > 0)


def test_fisher_information_of_cos2():
    assert fisher_information(stationary_density) == pytest.approx(math.pi**2, abs=1e-4)
    # the isoperimetric bound is sqrt(I)/2 for this density
    assert math.sqrt(fisher_information(stationary_density)) / 2 == pytest.approx(isoperimetric_upper(), abs=1e-5)


def test_fisher_information_of_flat_interior():
    assert fisher_information(lambda x: np.full_like(x, 0.5), interval=(-0.999, 0.999)) == pytest.approx(0.0, abs=1e-9)


@pytest.mark.parametrize(
    "density",
    [
        lambda x: (4.0 / 3.0) * np.cos(0.5 * np.pi * x) ** 4,
        lambda x: (15.0 / 16.0) * (1 - x * x) ** 2,
        lambda x: 0.5 * np.cos(0.5 * np.pi * x) ** 2 + 0.5 * (4.0 / 3.0) * np.cos(0.5 * np.pi * x) ** 4,
    ],
)
def test_other_even_densities_carry_more_information(density):
    x = np.linspace(-1, 1, 100_001)
    assert np.trapezoid(density(x), x) == pytest.approx(1.0, abs=1e-8)
    assert fisher_information(density) >= math.pi**2 - 1e-4


def test_fisher_rejects_interior_zero():
    with pytest.raises(InputError, match="not positive"):
        fisher_information(lambda x: np.maximum(0.0, np.abs(x) - 0.5))


def test_speed_law_checks_oddness():
    with pytest.raises(InputError, match="odd"):
        SpeedLaw(lambda x: -x + 0.1 * x * x)
    with pytest.raises(InputError, match="vanish"):
        SpeedLaw(lambda x: 1.0 - x)
    with pytest.raises(InputError, match="clamp"):
        SpeedLaw.optimal(clamp=1.0)
    SpeedLaw(lambda x: x * x, odd=False)


def test_zero_path_is_a_fixed_point():
    W = SampledPath(TimeGrid.uniform(10.0, 1000), np.zeros(1001))
    run = simulate_pursuit(W)
    assert np.all(run.pursuit_path.values == 0.0)
    assert run.energy_rate == 0.0 and run.sqrt_rate == 0.0


def test_input_requirements():
    W = simulate_wiener(TimeGrid([0.0, 0.1, 0.3]), 0)
    with pytest.raises(InputError, match="uniform"):
        simulate_pursuit(W)
    shifted = SampledPath(TimeGrid.uniform(1.0, 4), [1.0, 1.0, 1.0, 1.0, 1.0])
    with pytest.raises(InputError, match="start at 0"):
        simulate_pursuit(shifted)


def test_mirror_symmetry_is_exact():
    W = simulate_wiener(TimeGrid.uniform(50.0, 50_000), 4)
    a = simulate_pursuit(W)
    b = simulate_pursuit(-W)
    assert np.array_equal(a.pursuit_path.values, -b.pursuit_path.values)
    assert a.energy_rate == b.energy_rate


def test_compiled_and_generic_paths_agree():
    W = simulate_wiener(TimeGrid.uniform(20.0, 20_000), 9)
    fast = simulate_pursuit(W, SpeedLaw.optimal())
    c = math.pi / 2
    slow = simulate_pursuit(W, SpeedLaw(lambda x: -c * math.tan(0.5 * math.pi * x)))
    assert np.allclose(fast.pursuit_path.values, slow.pursuit_path.values, rtol=0, atol=1e-9)


@pytest.mark.parametrize("seed", range(5))
def test_clamp_and_rate_invariants(seed):
    W = simulate_wiener(TimeGrid.uniform(100.0, 10_000), seed)
    run = simulate_pursuit(W, SpeedLaw.optimal(clamp=0.9))
    assert np.all(np.abs(run.distance_path.values[1:]) <= 0.9 + 1e-12)
    assert run.sqrt_rate**2 == pytest.approx(run.energy_rate, rel=1e-15)
    assert run.occupancy.total == len(W)
    assert run.clamp_hits > 0  # 100 steps per unit is coarse enough to hit the clamp


def test_corrupted_clamp_is_caught(monkeypatch):
    from tautband import _kernels

    monkeypatch.setattr(_kernels, "pursuit_tangent", lambda w, dt, c, clamp: w + 2.0)
    W = simulate_wiener(TimeGrid.uniform(1.0, 100), 0)
    with pytest.raises(InvariantError):
        simulate_pursuit(W)


def test_desk_scale_constant():
    grid = TimeGrid.uniform(200.0, 200_000)
    rates = [simulate_pursuit(simulate_wiener(grid, derive_seed(3, i))).sqrt_rate for i in range(100)]
    assert 1.5 <= np.mean(rates) <= 1.7


def test_long_run_energy_matches_occupancy():
    W = simulate_wiener(TimeGrid.uniform(1000.0, 1_000_000), derive_seed(0, 0))
    run = simulate_pursuit(W)
    occ = run.occupancy
    centres = 0.5 * (occ.edges[1:] + occ.edges[:-1])
    binned = float(np.sum(optimal_speed(centres) ** 2 * occ.probabilities()))
    assert run.energy_rate == pytest.approx(binned, rel=0.10)
    assert run.energy_rate == pytest.approx(math.pi**2 / 4, rel=0.10)
    assert occupancy_l1_distance(occ) < 0.05
    assert run.edge_fraction < 0.01


def test_optimal_law_beats_other_tangent_laws():
    grid = TimeGrid.uniform(200.0, 200_000)
    paths = [simulate_wiener(grid, derive_seed(1, i)) for i in range(20)]

    def mean_rate(c):
        law = SpeedLaw.tangent(c)
        return np.array([simulate_pursuit(W, law).energy_rate for W in paths])

    best = mean_rate(math.pi / 2)
    for c in (1.0, 2.5):
        other = mean_rate(c)
        diff = other - best  # paired on common paths
        assert diff.mean() >= -3 * diff.std(ddof=1) / math.sqrt(diff.size)


def test_entrance_boundaries():
    assert entrance_boundary_check(SpeedLaw.optimal())
    assert not entrance_boundary_check(lambda x: 0.0)
    assert not entrance_boundary_check(lambda x: -x)
    # -c tan(pi x/2) makes 1/p0 ~ (1-x)^(-4c/pi): divergent iff c >= pi/4
    assert entrance_boundary_check(SpeedLaw.tangent(1.0))
    assert not entrance_boundary_check(SpeedLaw.tangent(0.5))
