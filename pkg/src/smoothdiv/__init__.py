"""Gaussian-smoothed f-divergences: estimation, limit laws, bootstrap and DP audits."""

__version__ = "0.1.0"

from ._kernels import backend  # noqa: E402
from .audit import (AuditConfig, AuditReport, calibrate_boundary, cbar_for_gap,  # noqa: E402
                    kl_audit, local_alternative, power_sim, sigma_star, smoothed_kl_audit,
                    threshold_constant)
from .bootstrap import BootstrapResult, bootstrap, bootstrap_ci, bootstrap_distribution  # noqa: E402
from .distributions import (DiscreteAtoms, EmpiricalPairs, GaussianIso, GaussianMixture,  # noqa: E402
                            Identical, IndependentProduct, IsotropicGaussian, LaplaceIID,
                            LocalAlternative, Mechanism, PointMass, UniformBox, sample,
                            sample_mechanism_pairs, sample_pairs)
from .divergence import (CHISQ, HELLINGER_SQ, KL, TV, chi2_information, closed_form,  # noqa: E402
                         estimate_divergence, get_generator, stability_bound)
from .integrate import (Estimate, MonteCarlo, TensorGrid, c_ds, integrate, q_function,  # noqa: E402
                        q_inverse)
from .limits import (CovarianceKernel, GaussianLaw, TVFunctional, WeightedChiSq,  # noqa: E402
                     null_limit_spectrum, one_sample_variance, sample_limit, tv_limit_law,
                     two_sample_variance, variance_functionals)
from .smoothing import SmoothedAnalytic, SmoothedEmpirical, log_density, log_ratio  # noqa: E402

__all__ = [
    'backend', 'AuditConfig', 'AuditReport', 'calibrate_boundary', 'cbar_for_gap', 'kl_audit',
    'local_alternative', 'power_sim', 'sigma_star', 'smoothed_kl_audit', 'threshold_constant',
    'BootstrapResult', 'bootstrap', 'bootstrap_ci', 'bootstrap_distribution', 'DiscreteAtoms',
    'EmpiricalPairs', 'GaussianIso', 'GaussianMixture', 'Identical', 'IndependentProduct',
    'IsotropicGaussian', 'LaplaceIID', 'LocalAlternative', 'Mechanism', 'PointMass',
    'UniformBox', 'sample', 'sample_mechanism_pairs', 'sample_pairs', 'CHISQ', 'HELLINGER_SQ',
    'KL', 'TV', 'chi2_information', 'closed_form', 'estimate_divergence', 'get_generator',
    'stability_bound', 'Estimate', 'MonteCarlo', 'TensorGrid', 'c_ds', 'integrate',
    'q_function', 'q_inverse', 'CovarianceKernel', 'GaussianLaw', 'TVFunctional',
    'WeightedChiSq', 'null_limit_spectrum', 'one_sample_variance', 'sample_limit',
    'tv_limit_law', 'two_sample_variance', 'variance_functionals', 'SmoothedAnalytic',
    'SmoothedEmpirical', 'log_density', 'log_ratio',
]
