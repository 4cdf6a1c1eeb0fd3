import math
import warnings

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import integrate as spi
from scipy.stats import norm

from smoothdiv import errors
from smoothdiv.distributions import DiscreteAtoms, IndependentProduct, IsotropicGaussian, PointMass, UniformBox
from smoothdiv.divergence import CHISQ, HELLINGER_SQ, KL, TV, chi2_information
from smoothdiv.integrate import TensorGrid
from smoothdiv.limits import (CovarianceKernel, GaussianLaw, WeightedChiSq, default_grid,
                              null_limit_spectrum, one_sample_variance, reduced_functionals,
                              sample_limit, tv_limit_law, two_sample_variance,
                              variance_double_integral, variance_functionals)
from oracles import tv_null_mean_quad

SYM = DiscreteAtoms([[-1.0], [1.0]], [0.5, 0.5])
ASYM = DiscreteAtoms([[-1.0], [1.0]], [0.3, 0.7])
ORIGIN = PointMass([0.0])


def test_kernel_matches_direct_covariance():
    k = CovarianceKernel(ASYM, 0.8)
    x = np.array([[-0.5], [0.2], [1.7]])
    phi = lambda u: norm.pdf(u, scale=0.8)  # noqa: E731
    a, p = np.array([-1.0, 1.0]), np.array([0.3, 0.7])
    direct = np.array([[p @ (phi(u - a) * phi(v - a)) - (p @ phi(u - a)) * (p @ phi(v - a))
                        for v in x.ravel()] for u in x.ravel()])
    assert_allclose(k.entry(1, 1, x, x), direct, rtol=1e-12, atol=1e-16)


def test_spectrum_of_point_mass_is_zero():
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        law = null_limit_spectrum(ORIGIN, 1.0)
    assert np.all(law.lambdas == 0.0)
    assert law.mean() == 0.0


def test_two_atom_rank_one():
    law = null_limit_spectrum(SYM, 1.0)
    assert np.count_nonzero(law.lambdas > 1e-12) == 1
    assert law.scale == 0.5


@pytest.mark.parametrize("gen,scale", [(KL, 0.5), (CHISQ, 1.0), (HELLINGER_SQ, 0.25)])
def test_generator_scales(gen, scale):
    assert null_limit_spectrum(SYM, 1.0, gen=gen).scale == scale


def test_tv_has_no_spectrum():
    with pytest.raises(errors.UnsupportedGenerator):
        null_limit_spectrum(SYM, 1.0, gen=TV)


@pytest.mark.parametrize("mu", [SYM, DiscreteAtoms([[-1.0], [0.3], [1.2]], [0.2, 0.5, 0.3]),
                                IsotropicGaussian([0.0], 0.5)], ids=["sym", "three", "gauss"])
def test_trace_equals_chi2_information(mu):
    law = null_limit_spectrum(mu, 1.0)
    ci = chi2_information(mu, 1.0, TensorGrid(512, (-15.0,), (15.0,))).value
    # the default grid truncates at 6 spreads, worth a few 1e-6 for the Gaussian
    assert_allclose(law.trace, ci, rtol=1e-5)


def test_two_sample_spectrum_doubles_one_sample():
    # independent copies: the difference kernel is twice the one-sample kernel
    one = null_limit_spectrum(SYM, 1.0)
    two = null_limit_spectrum(SYM, 1.0, mode="two_sample")
    assert_allclose(two.trace, 2 * one.trace, rtol=1e-10)


def test_two_sample_warns_for_unbounded_support():
    with pytest.warns(UserWarning, match="compactly"):
        null_limit_spectrum(IsotropicGaussian([0.0], 0.3), 1.0, mode="two_sample")
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        null_limit_spectrum(UniformBox([-1.0], [1.0]), 1.0, mode="two_sample")


def test_default_grid_2d_shape():
    g = default_grid(DiscreteAtoms([[0.0, 0.0], [1.0, 1.0]], [0.5, 0.5]), 1.0)
    assert g.nodes.shape == (48 * 48, 2)
    with pytest.raises(errors.ValidationError):
        default_grid(PointMass([0.0, 0.0, 0.0]), 1.0)


def test_sample_limit_weighted_chisq_moments():
    law = WeightedChiSq(np.array([0.6, 0.3]), 0.5)
    x = sample_limit(law, 200000, 3)
    assert_allclose(x.mean(), 0.45, rtol=0.01)
    assert_allclose(x.var(), 2 * 0.25 * (0.36 + 0.09), rtol=0.03)


def test_sample_limit_worker_invariant():
    law = GaussianLaw(2.0)
    assert np.array_equal(sample_limit(law, 30000, 5, workers=1), sample_limit(law, 30000, 5, workers=3))
    with pytest.raises(errors.ValidationError):
        sample_limit(law, 0, 1)


def test_tv_null_mean_formula_matches_quadrature():
    law = tv_limit_law(SYM, SYM, 1.0)
    assert_allclose(law.null_mean(), tv_null_mean_quad([-1, 1], [0.5, 0.5], 1.0), rtol=2e-4)


def test_reduced_functionals_chisq_sign():
    L1, L2 = reduced_functionals(CHISQ, ASYM, ORIGIN, 1.0)
    x = np.array([[0.4]])
    from smoothdiv.smoothing import SmoothedAnalytic
    r = math.exp(SmoothedAnalytic(ASYM, 1.0).log_density(x)[0] - SmoothedAnalytic(ORIGIN, 1.0).log_density(x)[0])
    assert_allclose(L1(x), 2 * r, rtol=1e-12)
    assert_allclose(L2(x), -r * r, rtol=1e-12)
    # identical laws: L2 is the constant -1
    assert_allclose(reduced_functionals(CHISQ, ASYM, ASYM, 1.0)[1](x), -1.0)


def test_symmetric_alternative_is_degenerate():
    v = one_sample_variance(KL, SYM, ORIGIN, 1.0).value
    assert abs(v) < 1e-14


def test_one_sample_variance_matches_double_integral():
    mu = DiscreteAtoms([[-1.0], [0.3], [1.2]], [0.2, 0.5, 0.3])
    a = one_sample_variance(KL, mu, ORIGIN, 1.0).value
    b = variance_double_integral(KL, mu, ORIGIN, 1.0, default_grid(mu, 1.0, 512))
    assert_allclose(a, b, rtol=1e-6)
    assert_allclose(a, 0.0453063, rtol=1e-5)


def test_one_sample_variance_by_direct_quadrature():
    # v1^2 = Var_X[ int phi(x - X) log(p/q)(x) dx ] for KL, computed with scipy quad
    p = lambda x: 0.3 * norm.pdf(x, -1) + 0.7 * norm.pdf(x, 1)  # noqa: E731
    q = lambda x: norm.pdf(x)  # noqa: E731
    g = [spi.quad(lambda x, a=a: norm.pdf(x - a) * math.log(p(x) / q(x)), -20, 20, limit=200)[0]
         for a in (-1.0, 1.0)]
    ref = 0.3 * 0.7 * (g[1] - g[0]) ** 2
    assert_allclose(one_sample_variance(KL, ASYM, ORIGIN, 1.0).value, ref, rtol=1e-7)


def test_two_sample_variance_product_matches_quadrature():
    # under a product coupling v2^2 = Var_X[(L1 * phi)(X)] + Var_Y[(L2 * phi)(Y)]
    # with L1 = log(p/q) and L2 = -p/q for KL
    nu = DiscreteAtoms([[-0.5], [1.5]], [0.4, 0.6])
    p = lambda x: 0.3 * norm.pdf(x, -1) + 0.7 * norm.pdf(x, 1)  # noqa: E731
    q = lambda x: 0.4 * norm.pdf(x, -0.5) + 0.6 * norm.pdf(x, 1.5)  # noqa: E731

    def conv(fn, a):
        return spi.quad(lambda x: norm.pdf(x - a) * fn(x), -20, 20, limit=200)[0]
    g1 = [conv(lambda x: math.log(p(x) / q(x)), a) for a in (-1.0, 1.0)]
    g2 = [conv(lambda x: -p(x) / q(x), a) for a in (-0.5, 1.5)]
    ref = 0.3 * 0.7 * (g1[1] - g1[0]) ** 2 + 0.4 * 0.6 * (g2[1] - g2[0]) ** 2
    v = two_sample_variance(KL, IndependentProduct(ASYM, nu), 1.0).value
    assert_allclose(v, ref, rtol=1e-7)


def test_variance_functionals_shapes():
    L1, L2 = variance_functionals(HELLINGER_SQ, ASYM, ORIGIN, 1.0)
    x = np.linspace(-3, 3, 7)[:, None]
    assert L1(x).shape == (7,) and L2(x).shape == (7,)
