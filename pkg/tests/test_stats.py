import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from tautband.stats import Histogram, MomentAccumulator

floats = st.floats(-1e3, 1e3, allow_nan=False)


@settings(max_examples=200, deadline=None)
@given(st.lists(floats, min_size=2, max_size=60), st.integers(0, 60))
def test_merge_matches_single_pass(xs, cut):
    cut = min(cut, len(xs))
    whole = MomentAccumulator().extend(xs)
    merged = MomentAccumulator().extend(xs[:cut]).merge(MomentAccumulator().extend(xs[cut:]))
    assert merged.count == whole.count
    assert merged.mean == pytest.approx(np.mean(xs), rel=1e-9, abs=1e-9)
    assert merged.variance == pytest.approx(np.var(xs, ddof=1), rel=1e-8, abs=1e-8)
    assert whole.second_moment == pytest.approx(whole.variance + whole.mean**2, rel=1e-10, abs=1e-300)


def test_empty_merges():
    a = MomentAccumulator().extend([1.0, 2.0])
    assert MomentAccumulator().merge(a).mean == 1.5
    assert a.merge(MomentAccumulator()).count == 2
    assert MomentAccumulator().variance == 0.0


def test_histogram_binning_rules():
    h = Histogram(0.0, 2.0, 4).add([0.0, 0.5, 0.49, 2.0, -0.1, 2.1, 1.999])
    assert h.counts.tolist() == [2, 1, 0, 2]
    assert (h.underflow, h.overflow) == (1, 1)
    assert h.total == 7
    assert h.to_rows()[0] == (0.0, 0.5, 2)


def test_histogram_merge_and_shape():
    a = Histogram(-1, 1, 10).add(np.random.default_rng(0).normal(0, 0.3, 1000))
    b = Histogram(-1, 1, 10).add(np.random.default_rng(1).normal(0, 0.3, 1000))
    a.merge(b)
    assert a.total == 2000
    assert a.is_unimodal(smooth=3)
    assert a.probabilities().sum() == pytest.approx(1.0)
    with pytest.raises(ValueError):
        a.merge(Histogram(-1, 1, 5))
