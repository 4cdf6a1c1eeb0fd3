import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose, assert_array_equal

from smoothdiv import errors
from smoothdiv.bootstrap import bootstrap, bootstrap_ci, bootstrap_distribution
from smoothdiv.distributions import DiscreteAtoms, PointMass, sample
from smoothdiv.divergence import KL, TV
from smoothdiv.integrate import TensorGrid
from smoothdiv.smoothing import SmoothedAnalytic

GRID = TensorGrid(96, (-14.0,), (14.0,))
ASYM = DiscreteAtoms([[-1.0], [1.0]], [0.3, 0.7])


def test_constant_sample_gives_zero_replicates():
    x = np.full((50, 1), 0.4)
    res = bootstrap(KL, x, PointMass([0.0]), 1.0, 30, plan=GRID)
    assert_array_equal(res.replicates, 0.0)
    assert res.ci[0] == res.ci[1] == res.point_estimate


def test_single_replicate_is_finite():
    x = sample(ASYM, 100, 0)
    res = bootstrap_distribution(KL, x, PointMass([0.0]), 1.0, 1, plan=GRID)
    assert res.B == 1 and np.isfinite(res.replicates).all()
    with pytest.raises(errors.InsufficientReplicates):
        res.with_ci(0.9)


def test_replicates_worker_invariant_and_seeded():
    x = sample(ASYM, 200, 1)
    a = bootstrap_distribution(KL, x, PointMass([0.0]), 1.0, 24, plan=GRID, seed=3, workers=1)
    b = bootstrap_distribution(KL, x, PointMass([0.0]), 1.0, 24, plan=GRID, seed=3, workers=4)
    c = bootstrap_distribution(KL, x, PointMass([0.0]), 1.0, 24, plan=GRID, seed=4, workers=1)
    assert_array_equal(a.replicates, b.replicates)
    assert not np.array_equal(a.replicates, c.replicates)


def test_reference_forms_agree():
    x = sample(ASYM, 150, 2)
    ref = PointMass([0.0])
    a = bootstrap_distribution(KL, x, ref, 1.0, 20, plan=GRID, seed=1)
    b = bootstrap_distribution(KL, x, SmoothedAnalytic(ref, 1.0), 1.0, 20, plan=GRID, seed=1)
    assert_allclose(a.replicates, b.replicates, rtol=1e-13)


def test_two_sample_resamples_both_blocks():
    x, y = sample(ASYM, 120, 5), sample(DiscreteAtoms([[-0.5], [1.5]], [0.4, 0.6]), 80, 6)
    res = bootstrap_distribution(KL, x, y, 1.0, 25, plan=GRID, seed=2)
    assert res.n == 120 and res.replicates.std() > 0


def test_tv_rejected():
    with pytest.raises(errors.UnsupportedGenerator):
        bootstrap_distribution(TV, np.zeros((5, 1)), PointMass([0.0]), 1.0, 20)


def test_basic_interval_formula():
    reps = np.arange(100, dtype=float)
    lo, hi = bootstrap_ci(reps, 1.0, 0.9, 25)
    q_lo, q_hi = np.quantile(reps, [0.05, 0.95])
    assert_allclose([lo, hi], [1.0 - q_hi / 5, 1.0 - q_lo / 5])


@settings(max_examples=40, deadline=None)
@given(st.lists(st.floats(-10, 10), min_size=20, max_size=60), st.floats(0.55, 0.95))
def test_interval_nesting(reps, level):
    narrow = bootstrap_ci(reps, 0.0, 0.5, 100)
    wide = bootstrap_ci(reps, 0.0, level, 100)
    assert wide[0] <= narrow[0] + 1e-12 and narrow[1] <= wide[1] + 1e-12


def test_ci_validation():
    with pytest.raises(errors.ValidationError):
        bootstrap_ci(np.zeros(30), 0.0, 1.0, 10)
    with pytest.raises(errors.InsufficientReplicates):
        bootstrap_ci(np.zeros(19), 0.0, 0.9, 10)


def test_replicate_mean_near_zero():
    # fixed alternative at n = 4000: |mean| <= 4 sd / sqrt(B)
    x = sample(ASYM, 4000, 11)
    res = bootstrap_distribution(KL, x, PointMass([0.0]), 1.0, 200, plan=GRID, seed=12)
    sd = res.replicates.std(ddof=1)
    assert abs(res.replicates.mean()) <= 4 * sd / math.sqrt(res.B)
