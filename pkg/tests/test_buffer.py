import io

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tautband.buffer import (
    LossSchedule, PenaltyFunction, TrafficTrace, band, check_schedule, dp_oracle_losses, fifo_losses,
    optimal_losses, parse_penalty, penalty, random_trace, read_trace_csv, write_schedule_csv,
)
from tautband.errors import InputError, InvariantError

QUAD, EXP, HINGE, LINEAR = (parse_penalty(n) for n in ("quad", "exp", "hinge2", "linear"))


def levels_from(trace, L):
    b, out = 0.0, []
    for s, c, l in zip(trace.inflow, trace.capacity, L):
        b = b + (s - c - l)
        out.append(b)
    return np.array(out)


def assert_valid(trace, sched, B):
    assert np.all(sched.losses >= 0) and np.all(sched.losses <= trace.inflow)
    lv = levels_from(trace, sched.losses)
    assert np.array_equal(lv, sched.levels)
    assert np.all(lv >= 0) and np.all(lv <= B)


def test_trace_validation():
    with pytest.raises(InputError, match="positive"):
        TrafficTrace([1.0, 0.0], [0.5, 0.0])
    with pytest.raises(InputError, match=r"slot 2"):
        TrafficTrace([1.0, 1.0], [0.5, 1.5])
    with pytest.raises(InputError):
        TrafficTrace([1.0], [0.5, 0.5])


def test_penalty_validation():
    with pytest.raises(InputError, match="convexity"):
        PenaltyFunction(np.sqrt, name="sqrt")
    with pytest.raises(InputError, match="nondecreasing"):
        PenaltyFunction(lambda u: (u - 0.5) ** 2)
    p = PenaltyFunction(lambda u: float(u) ** 3)  # scalar-only evaluator
    assert p(np.array([0.5, 1.0])).tolist() == [0.125, 1.0]
    assert parse_penalty("poly:0,1,2")(0.5) == pytest.approx(1.0)
    with pytest.raises(InputError):
        parse_penalty("cubic")
    with pytest.raises(InputError):
        parse_penalty("poly:1,x")


def test_negative_buffer_rejected():
    with pytest.raises(InputError):
        optimal_losses(TrafficTrace([1.0], [0.5]), -1.0, QUAD)


def test_full_capacity_means_no_loss():
    tr = TrafficTrace([1.0, 2.0, 1.5], [1.0, 2.0, 1.5])
    phi = parse_penalty("poly:0.3,1,1")
    for B in (0.0, 1.0):
        s = optimal_losses(tr, B, phi)
        assert np.all(s.losses == 0.0)
        assert penalty(s, tr, phi) == pytest.approx(0.3 * 4.5)


def test_zero_buffer_forces_the_excess(rng):
    tr = random_trace(15, rng)
    s = optimal_losses(tr, 0.0, QUAD)
    assert np.allclose(s.losses, tr.excess, rtol=0, atol=1e-12)
    assert np.array_equal(s.losses, fifo_losses(tr, 0.0).losses)


def test_huge_buffer_fifo_keeps_everything(rng):
    tr = random_trace(15, rng)
    s = fifo_losses(tr, float(np.sum(tr.excess)) + 1.0)
    assert np.all(s.losses == 0.0)


def test_fifo_rides_the_lower_boundary(rng):
    for _ in range(20):
        tr = random_trace(20, rng)
        B = rng.uniform(0.2, 4.0)
        _, lower, _ = band(tr, B)
        s = fifo_losses(tr, B)
        assert np.allclose(s.accumulated, lower, rtol=0, atol=1e-12)
        assert_valid(tr, s, B)


def test_penalty_examples(rng):
    tr = random_trace(8, rng)
    zero = LossSchedule(np.zeros(8), levels_from(tr, np.zeros(8)))
    assert penalty(zero, tr, EXP) == 0.0
    assert penalty(zero, tr, parse_penalty("poly:2")) == pytest.approx(2 * tr.inflow.sum())
    total = LossSchedule(tr.inflow.copy(), levels_from(tr, tr.inflow))
    assert penalty(total, tr, LINEAR) == pytest.approx(tr.inflow.sum())
    with pytest.raises(InputError):
        penalty(LossSchedule(tr.inflow * 1.5, np.zeros(8)), tr, QUAD)


def test_linear_penalty_only_sees_total_loss(rng):
    tr = random_trace(20, rng)
    B = 1.5
    opt, fifo = optimal_losses(tr, B, LINEAR), fifo_losses(tr, B)
    # both end on the lowest admissible total loss
    assert penalty(opt, tr, LINEAR) == pytest.approx(penalty(fifo, tr, LINEAR), rel=1e-9)
    pinned = optimal_losses(tr, B, LINEAR, end=fifo.accumulated[-1] + 0.3)
    assert penalty(pinned, tr, LINEAR) == pytest.approx(fifo.accumulated[-1] + 0.3, rel=1e-12)


@pytest.mark.parametrize("phi", [QUAD, EXP], ids=["quad", "exp"])
def test_random_traces_against_dp(rng, phi):
    for _ in range(25):
        tr = random_trace(20, rng)
        B = rng.uniform(0.5, 3.0)
        opt = optimal_losses(tr, B, phi)
        dp = dp_oracle_losses(tr, B, phi)
        f_opt, f_dp = penalty(opt, tr, phi), penalty(dp, tr, phi)
        assert f_opt <= penalty(fifo_losses(tr, B), tr, phi) * (1 + 1e-12)
        assert f_opt <= f_dp * (1 + 1e-12)
        assert f_dp == pytest.approx(f_opt, rel=1e-2)
        assert_valid(tr, opt, B)
        assert not opt.flags["dp_fallback"]


def test_refining_the_lattice_closes_the_gap(rng):
    tr = random_trace(12, rng)
    B = 2.0
    f_opt = penalty(optimal_losses(tr, B, QUAD), tr, QUAD)
    gaps = [penalty(dp_oracle_losses(tr, B, QUAD, levels=k), tr, QUAD) - f_opt for k in (25, 100, 400)]
    assert gaps[0] >= gaps[1] >= gaps[2] >= -1e-12


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.0, 5.0), st.sampled_from(["quad", "exp", "hinge2"]))
def test_optimal_never_worse_than_fifo(seed, B, name):
    rng = np.random.default_rng(seed)
    tr = random_trace(int(rng.integers(1, 30)), rng)
    phi = parse_penalty(name)
    opt = optimal_losses(tr, B, phi)
    assert_valid(tr, opt, B)
    assert np.all(np.diff(opt.accumulated) >= 0)
    assert penalty(opt, tr, phi) <= penalty(fifo_losses(tr, B), tr, phi) * (1 + 1e-12) + 1e-15


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32), st.floats(0.1, 4.0))
def test_pinned_schedule_is_the_same_for_all_strictly_convex_penalties(seed, B):
    rng = np.random.default_rng(seed)
    tr = random_trace(20, rng)
    end = fifo_losses(tr, B).accumulated[-1]
    a = optimal_losses(tr, B, QUAD, end=end)
    b = optimal_losses(tr, B, EXP, end=end)
    assert a.flags["endpoint_policy"] == "fixed"
    assert np.allclose(a.losses, b.losses, rtol=0, atol=1e-12)


def test_check_schedule_catches_tampering(rng):
    tr = random_trace(6, rng)
    s = fifo_losses(tr, 1.0)
    bad = LossSchedule(s.losses, s.levels + 1e-9)
    with pytest.raises(InvariantError):
        check_schedule(tr, bad, 1.0)


def test_trace_csv_round_trip(rng):
    text = "slot,S,C\n1,2,1\n2,1.5,1.5\n3,1,0.2\n"
    tr = read_trace_csv(io.StringIO(text))
    assert tr.inflow.tolist() == [2.0, 1.5, 1.0]
    opt = optimal_losses(tr, 0.5, QUAD)
    buf = io.StringIO()
    write_schedule_csv(tr, opt, fifo_losses(tr, 0.5), buf)
    lines = buf.getvalue().splitlines()
    assert lines[0] == "slot,S,C,L_opt,L_fifo,B_opt,B_fifo" and len(lines) == 4
    with pytest.raises(InputError, match="header"):
        read_trace_csv(io.StringIO("S,C\n1,1\n"))
    with pytest.raises(InputError, match="line 2"):
        read_trace_csv(io.StringIO("slot,S,C\n1,a,1\n"))
