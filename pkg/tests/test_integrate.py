import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from smoothdiv import errors
from smoothdiv.distributions import IsotropicGaussian
from smoothdiv.integrate import (CHUNK, MonteCarlo, TensorGrid, c_ds, combine, integrate, mc_chunks,
                                 mc_mean, q_function, q_inverse, radial_integral, sphere_area)
from smoothdiv.smoothing import SmoothedAnalytic
from oracles import c_ds_closed, q_inverse_bisect


def test_q_inverse_matches_bisection():
    assert_allclose(q_inverse(0.05), 1.6448536, atol=1e-6)
    for tau in (1e-8, 0.01, 0.3, 0.5, 0.9):
        assert_allclose(q_inverse(tau), q_inverse_bisect(tau), atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.floats(1e-10, 1 - 1e-10))
def test_q_round_trip(tau):
    assert_allclose(q_function(q_inverse(tau)), tau, rtol=1e-9)


@pytest.mark.parametrize("tau", [0.0, 1.0, -0.2, 1.5, float("nan")])
def test_q_inverse_domain(tau):
    with pytest.raises(errors.DomainError):
        q_inverse(tau)


@pytest.mark.parametrize("d", [1, 2, 3, 5, 10])
@pytest.mark.parametrize("s", [0.1, 0.5, 1.0])
def test_c_ds_closed_form(d, s):
    assert_allclose(c_ds(d, s), c_ds_closed(d, s), rtol=1e-9)


def test_c_ds_known_values():
    assert_allclose(c_ds(1, 1), 0.7978845608028654, rtol=1e-10)
    assert_allclose(c_ds(2, 1), 1.2533141373155003, rtol=1e-10)
    with pytest.raises(errors.DomainError):
        c_ds(1, 0.0)


def test_radial_integral_of_gaussian():
    for d in (1, 2, 3):
        val = radial_integral(lambda r: np.exp(-r * r / 2), d, 14.0)
        assert_allclose(val, (2 * math.pi) ** (d / 2), rtol=1e-12)
    assert_allclose(sphere_area(3), 4 * math.pi)


def test_tensor_grid_polynomial_exact():
    plan = TensorGrid(5, (-1.0, 0.0), (1.0, 2.0))
    est = integrate(lambda x: x[:, 0] ** 2 * x[:, 1] ** 3, plan)
    assert_allclose(est.value, (2 / 3) * 4.0, rtol=1e-13)
    assert est.std_error == 0.0


def test_mc_mean_worker_invariant():
    prop = SmoothedAnalytic(IsotropicGaussian([0.0], 1.0), 0.5)
    a = mc_mean(lambda x: x[:, 0] ** 2, prop.draw, 3 * CHUNK + 17, 11, workers=1)
    b = mc_mean(lambda x: x[:, 0] ** 2, prop.draw, 3 * CHUNK + 17, 11, workers=3)
    assert a.value == b.value and a.std_error == b.std_error
    assert a.n_used == 3 * CHUNK + 17


def test_chunk_merge_equals_pooled_moments():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=5000)
    stats = [(c.size, c.mean(), ((c - c.mean()) ** 2).sum()) for c in np.array_split(vals, 7)]
    est = combine(stats)
    assert_allclose(est.value, vals.mean(), rtol=1e-13)
    assert_allclose(est.std_error, vals.std(ddof=1) / math.sqrt(vals.size), rtol=1e-12)


def test_importance_sampling_integral():
    prop = SmoothedAnalytic(IsotropicGaussian([0.0], 1.0), 1.0)
    plan = MonteCarlo(1 << 15, 3, prop)
    est = integrate(lambda x: np.exp(-x[:, 0] ** 2), plan)
    assert abs(est.value - math.sqrt(math.pi)) < 4 * est.std_error


def test_non_finite_integrand_raises():
    with pytest.raises(errors.NonFiniteIntegrand):
        integrate(lambda x: np.full(x.shape[0], np.nan), TensorGrid(4, (0.0,), (1.0,)))
    prop = SmoothedAnalytic(IsotropicGaussian([0.0], 1.0), 1.0)
    with pytest.raises(errors.NonFiniteIntegrand):
        mc_chunks(lambda x: np.full(x.shape[0], np.inf), prop.draw, 100, 0)


def test_plan_validation():
    with pytest.raises(errors.ValidationError):
        MonteCarlo(1)
    with pytest.raises(errors.ValidationError):
        integrate(lambda x: x, MonteCarlo(100))
