import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from smoothdiv import errors
from smoothdiv.distributions import DiscreteAtoms, IsotropicGaussian, PointMass
from smoothdiv.divergence import (CHISQ, HELLINGER_SQ, KL, PRESUMED_DIVERGENT, TV, chi2_information,
                                  closed_form, estimate_divergence, get_generator, stability_bound)
from smoothdiv.integrate import MonteCarlo, TensorGrid
from smoothdiv.smoothing import SmoothedAnalytic, SmoothedEmpirical
from oracles import STABILITY_M1_S1_D1_S0P1, TV_UNIT_SHIFT_SIGMA1

GENS = [KL, CHISQ, HELLINGER_SQ, TV]


def _pair(delta, sigma, d=1):
    a = np.zeros(d)
    b = np.zeros(d)
    b[0] = delta
    return SmoothedAnalytic(PointMass(a), sigma), SmoothedAnalytic(PointMass(b), sigma)


def test_closed_forms():
    assert_allclose(closed_form(KL, [0.0], [1.0], 1.0), 0.5)
    assert_allclose(closed_form(CHISQ, [0.0], [1.0], 1.0), math.e - 1)
    assert_allclose(closed_form(HELLINGER_SQ, [0.0], [1.0], 1.0), 2 * (1 - math.exp(-1 / 8)))
    assert_allclose(closed_form(TV, [0.0], [1.0], 1.0), TV_UNIT_SHIFT_SIGMA1, rtol=1e-15)


@pytest.mark.parametrize("gen", GENS, ids=lambda g: g.name)
def test_generator_identities(gen):
    r = np.array([0.25, 0.5, 1.0, 2.0, 5.0])
    assert_allclose(gen.f(np.array([1.0])), 0.0, atol=1e-15)
    if gen.f_prime is not None:
        ft = gen.f(r) - gen.f_prime(np.array(1.0)) * (r - 1)
    else:
        ft = gen.f(r)
    with np.errstate(divide="ignore"):
        assert_allclose(np.exp(gen.log_ftilde(np.log(r))), ft, rtol=1e-12, atol=1e-300)


def test_kl_log_ftilde_branches_are_smooth():
    lr = np.array([-5.0, -1.0001, -0.9999, -0.0101, -0.0099, 0.0099, 0.0101, 0.9999, 1.0001, 30.0])
    # reference via expm1 is accurate on both sides of each branch switch
    ref = lr * np.exp(lr) - np.expm1(lr)
    assert_allclose(np.exp(KL.log_ftilde(lr)), ref, rtol=1e-11)


@pytest.mark.parametrize("gen,rtol", [(KL, 1e-10), (CHISQ, 1e-10), (HELLINGER_SQ, 1e-10), (TV, 1e-3)],
                         ids=["KL", "ChiSq", "H2", "TV"])
def test_grid_estimate_matches_closed_form(gen, rtol):
    # TV has a kink where the densities cross, so the tensor rule converges slowly
    p, q = _pair(1.0, 1.0)
    est = estimate_divergence(gen, p, q, TensorGrid(400, (-14.0,), (15.0,)))
    assert_allclose(est.value, closed_form(gen, [0.0], [1.0], 1.0), rtol=rtol)


@pytest.mark.parametrize("gen", GENS, ids=lambda g: g.name)
def test_identical_measures_give_zero(gen):
    p = SmoothedEmpirical([[0.0], [1.0]], 0.5)
    est = estimate_divergence(gen, p, p, MonteCarlo(4096, 1))
    assert est.value == 0.0


@pytest.mark.parametrize("proposal", [None, "q"])
def test_mc_estimate_within_error(proposal):
    p, q = _pair(0.5, 1.0, d=2)
    est = estimate_divergence(KL, p, q, MonteCarlo(1 << 15, 5, proposal))
    assert abs(est.value - 0.125) < 4 * est.std_error


def test_worker_count_does_not_change_estimate():
    p, q = _pair(1.0, 1.0)
    a = estimate_divergence(CHISQ, p, q, MonteCarlo(40000, 2), workers=1)
    b = estimate_divergence(CHISQ, p, q, MonteCarlo(40000, 2), workers=4)
    assert a == b


def test_aliases_and_unknown():
    assert get_generator("chi2") is CHISQ and get_generator("H2") is HELLINGER_SQ
    with pytest.raises(errors.UnsupportedGenerator):
        get_generator("js")


def test_estimator_rejects_mismatch():
    with pytest.raises(errors.SigmaMismatch):
        estimate_divergence(KL, _pair(0, 1.0)[0], _pair(0, 2.0)[0])
    with pytest.raises(errors.DimensionMismatch):
        estimate_divergence(KL, _pair(0, 1.0)[0], _pair(0, 1.0, d=2)[0])


def test_stability_bound_value_and_domain():
    assert_allclose(stability_bound(1, 1, 1, 0.1), STABILITY_M1_S1_D1_S0P1, rtol=1e-12)
    for args in ((0.5, 1, 1, 0.1), (2, 0.0, 1, 0.1), (2, 1.5, 1, 0.1), (2, 1, 1, 0.0)):
        with pytest.raises(errors.DomainError):
            stability_bound(*args)


@settings(max_examples=20, deadline=None)
@given(st.floats(1.0, 50.0), st.floats(1e-3, 2.0))
def test_stability_bound_monotone(M, sigma):
    assert stability_bound(M * 1.1, 1, 2, sigma) > stability_bound(M, 1, 2, sigma)
    assert stability_bound(M, 0.5, 2, sigma * 1.1) > stability_bound(M, 0.5, 2, sigma)


def test_chi2_information_point_mass_is_zero():
    est = chi2_information(PointMass([0.3]), 1.0, TensorGrid(64, (-12.0,), (12.0,)))
    assert abs(est.value) < 1e-14


def test_chi2_information_gaussian_closed_form():
    # mu = N(0, beta^2): information (1 + beta^2/sigma^2)^d - 1
    for beta in (0.5, 0.7):
        est = chi2_information(IsotropicGaussian([0.0], beta), 1.0, TensorGrid(400, (-20.0,), (20.0,)))
        assert_allclose(est.value, (1 + beta ** 2) - 1, rtol=1e-8)
    for seed in range(3):
        mc = chi2_information(IsotropicGaussian([0.0], 0.5), 1.0, MonteCarlo(1 << 16, seed))
        assert mc.status == "OK"
        assert abs(mc.value - 0.25) < 3 * mc.std_error


@pytest.mark.parametrize("beta", [0.8, 1.5])
def test_chi2_information_flags_heavy_tail(beta):
    # the sampling variance is infinite once beta >= sigma / sqrt(2)
    for seed in range(3):
        mc = chi2_information(IsotropicGaussian([0.0], beta), 1.0, MonteCarlo(1 << 16, seed))
        assert mc.status == PRESUMED_DIVERGENT


def test_chi2_information_worker_invariant():
    a = chi2_information(IsotropicGaussian([0.0], 1.5), 1.0, MonteCarlo(5 * 8192, 2), workers=1)
    b = chi2_information(IsotropicGaussian([0.0], 1.5), 1.0, MonteCarlo(5 * 8192, 2), workers=3)
    assert a == b


def test_chi2_information_from_samples():
    x = np.array([[-1.0], [1.0]])
    a = chi2_information(x, 1.0, TensorGrid(256, (-14.0,), (14.0,))).value
    b = chi2_information(DiscreteAtoms(x, [0.5, 0.5]), 1.0, TensorGrid(256, (-14.0,), (14.0,))).value
    assert_allclose(a, b, rtol=1e-13)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        assert a > 0
