"""Hypothesis tests for epsilon-KL differential privacy from paired mechanism outputs.

The smoothed test rejects H0: KL(mu0 * g_sigma || nu0 * g_sigma) <= epsilon when
T_n = KL(mu_n * g_sigma || nu_n * g_sigma) exceeds
t_n = epsilon + c_{b,d,sigma} Q^{-1}(tau) / sqrt(n).
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import bisect, brentq
from scipy.special import logsumexp

from .distributions import (Coupling, DiscreteAtoms, EmpiricalPairs, LocalAlternative,
                            _check_density_base, _rows, perturbation, substream)
from .divergence import KL, default_plan, estimate_divergence, stability_bound
from .errors import DomainError, SigmaTooLarge, ValidationError
from .integrate import (TensorGrid, c_ds, gauss_legendre, parallel_map, q_inverse, radial_integral,
                        sphere_area)
from .smoothing import SmoothedAnalytic, SmoothedEmpirical

RADIAL_NODES = 200
PROBE_SIZE = 10 ** 6


@dataclass(frozen=True)
class AuditConfig:
    epsilon: float
    tau: float
    b: float
    sigma: float | None = None
    eps_bar: float | None = None
    s_lo: float | None = None
    s_hi: float | None = None
    M_bar: float | None = None
    paper_literal: bool = False

    def __post_init__(self):
        if not self.epsilon > 0:
            raise ValidationError("epsilon must be positive")
        if not 0 < self.tau < 1:
            raise ValidationError("tau must lie in (0, 1)")
        if not self.b > 0:
            raise ValidationError("b must be positive")
        if self.sigma is not None and not self.sigma > 0:
            raise ValidationError("sigma must be positive")

    @property
    def kl_mode(self):
        return self.eps_bar is not None

    def check_kl_mode(self):
        if None in (self.eps_bar, self.s_lo, self.s_hi, self.M_bar):
            raise ValidationError("KL mode needs eps_bar, s_lo, s_hi and M_bar")
        if not self.eps_bar > self.epsilon:
            raise ValidationError("eps_bar must exceed epsilon")
        if not 0 < self.s_lo <= self.s_hi <= 1:
            raise ValidationError("need 0 < s_lo <= s_hi <= 1")
        if not self.M_bar >= 1:
            raise ValidationError("M_bar must be at least 1")


@dataclass(frozen=True)
class AuditReport:
    mode: str
    epsilon: float
    tau: float
    n: int
    statistic: float
    critical_value: float
    reject: bool
    c_bds: float
    sigma_used: float
    statistic_std_error: float
    stability_margin: float | None = None
    extra: dict = field(default_factory=dict)

    def as_dict(self):
        out = {"mode": self.mode, "epsilon": self.epsilon, "tau": self.tau,
               "sigma_used": self.sigma_used, "n": self.n, "T_n": self.statistic,
               "t_n": self.critical_value, "c_bds": self.c_bds, "reject": self.reject,
               "statistic_std_error": self.statistic_std_error}
        if self.stability_margin is not None:
            out["stability_margin"] = self.stability_margin
        out.update(self.extra)
        return out


# constants -------------------------------------------------------------------

def log_threshold_integral(b, d, sigma, nodes: int = RADIAL_NODES) -> float:
    """log of the double integral bounding v^2_{2,KL} for laws supported in [-b, b]^d.

    With A(r) = b^2 d + 4 b sqrt(d) r and G(r) = exp(-r^2 / (4 sigma^2)), the
    integrand is a sum of products of radial functions of |x| and |y|:
        (2 pi s^2)^-d e^{b^2 d / s^2} [I_A^2/(4 s^4) + E^2 + 2 E I_A/(2 s^2)]
    where I_A = int G A dx and E = int G e^{A/(2 s^2)} dx. E is accumulated in
    log space since e^{A/(2 s^2)} overflows once b/sigma reaches about 20.
    """
    if b < 0 or not sigma > 0 or int(d) < 1:
        raise DomainError("need b >= 0, sigma > 0, d >= 1")
    d = int(d)
    s2 = sigma * sigma
    rd = math.sqrt(d)
    upper = max(12.0 * (sigma + b), 4.0 * b * rd + 16.0 * sigma)

    def A(r):
        return b * b * d + 4.0 * b * rd * r

    I_A = radial_integral(lambda r: np.exp(-r * r / (4 * s2)) * A(r), d, upper, nodes)
    r, w = gauss_legendre(nodes, 0.0, upper)
    log_terms = np.log(w) + (d - 1) * np.log(r) - r * r / (4 * s2) + A(r) / (2 * s2)
    log_E = math.log(sphere_area(d)) + float(logsumexp(log_terms))
    ratio = I_A * math.exp(-log_E) / s2  # I_A / (s^2 E)
    log_bracket = 2.0 * log_E + math.log1p(ratio + 0.25 * ratio * ratio)
    return -d * math.log(2 * math.pi * s2) + b * b * d / s2 + log_bracket


def threshold_integral(b, d, sigma, nodes: int = RADIAL_NODES) -> float:
    """The double integral itself (inf when it exceeds the double range)."""
    lv = log_threshold_integral(b, d, sigma, nodes)
    return math.exp(lv) if lv < 709.0 else math.inf


def threshold_constant(b, d, sigma, plan=None, paper_literal: bool = False) -> float:
    """c_{b,d,sigma}: square root of ``threshold_integral`` (the integral itself
    bounds a variance). ``paper_literal`` returns the unrooted integral."""
    if paper_literal:
        return threshold_integral(b, d, sigma)
    half = 0.5 * log_threshold_integral(b, d, sigma)
    return math.exp(half) if half < 709.0 else math.inf


def sigma_star(epsilon, eps_bar, s_lo, s_hi, d, M_bar) -> float:
    """Root x of c_{d,s_hi} M (M + 1 + log M) max(x^s_lo, x^s_hi) = eps_bar - epsilon."""
    if not eps_bar > epsilon:
        raise DomainError("eps_bar must exceed epsilon")
    if not 0 < s_lo <= s_hi <= 1:
        raise DomainError("need 0 < s_lo <= s_hi <= 1")
    if not M_bar >= 1:
        raise DomainError("M_bar must be at least 1")
    k = c_ds(d, s_hi) * M_bar * (M_bar + 1 + math.log(M_bar))
    target = eps_bar - epsilon

    def F(x):
        return k * max(x ** s_lo, x ** s_hi) - target

    hi = 1.0
    while F(hi) < 0:
        hi *= 2.0
    return bisect(F, 0.0, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=500)


# audits ----------------------------------------------------------------------

def _split(pairs):
    pairs = _rows(pairs, "pairs")
    if pairs.shape[1] % 2:
        raise ValidationError("pairs need 2d columns")
    d = pairs.shape[1] // 2
    if pairs.shape[0] < 2:
        raise ValidationError("need at least two pairs")
    return pairs[:, :d], pairs[:, d:]


def _statistic(x, y, sigma, plan):
    p, q = SmoothedEmpirical(x, sigma), SmoothedEmpirical(y, sigma)
    if np.array_equal(p.centers, q.centers) and np.array_equal(p.log_w, q.log_w):
        return 0.0, 0.0
    est = estimate_divergence(KL, p, q, plan or default_plan())
    return est.value, est.std_error


def smoothed_kl_audit(pairs, cfg: AuditConfig, plan=None, mode: str = "smoothed-kl",
                      margin=None) -> AuditReport:
    if cfg.sigma is None:
        raise ValidationError("smoothed audit needs sigma")
    x, y = _split(pairs)
    n, d = x.shape
    lim = cfg.b + 6 * cfg.sigma
    if np.any(np.abs(x) > lim) or np.any(np.abs(y) > lim):
        warnings.warn(f"some outputs fall outside [-b-6 sigma, b+6 sigma]^{d}", stacklevel=2)
    c = threshold_constant(cfg.b, d, cfg.sigma, paper_literal=cfg.paper_literal)
    log_c = log_threshold_integral(cfg.b, d, cfg.sigma)
    log_c = log_c if cfg.paper_literal else 0.5 * log_c
    z = float(q_inverse(cfg.tau))
    t_n = cfg.epsilon + (c * z / math.sqrt(n) if z != 0 else 0.0)
    if math.isinf(c):
        warnings.warn(f"c_bds = exp({log_c:.1f}) exceeds floating range; b / sigma is too large "
                      "for the test to reject", stacklevel=2)
    T, se = _statistic(x, y, cfg.sigma, plan)
    return AuditReport(mode, cfg.epsilon, cfg.tau, n, T, t_n, bool(T > t_n), c, cfg.sigma, se,
                       margin, {"log_c_bds": log_c})


def kl_audit(pairs, cfg: AuditConfig, plan=None) -> AuditReport:
    """KL test: run the smoothed test at sigma below sigma_star (default 0.9 sigma_star)."""
    cfg.check_kl_mode()
    d = _split(pairs)[0].shape[1]
    star = sigma_star(cfg.epsilon, cfg.eps_bar, cfg.s_lo, cfg.s_hi, d, cfg.M_bar)
    sigma = 0.9 * star if cfg.sigma is None else cfg.sigma
    if sigma >= star:
        raise SigmaTooLarge(f"sigma {sigma} must be below sigma_star {star}")
    margin = (stability_bound(cfg.M_bar, cfg.s_hi, d, sigma) / sigma ** cfg.s_hi
              * max(sigma ** cfg.s_lo, sigma ** cfg.s_hi))
    run = AuditConfig(cfg.epsilon, cfg.tau, cfg.b, sigma, paper_literal=cfg.paper_literal)
    return smoothed_kl_audit(pairs, run, plan, mode="kl", margin=margin)


# local alternatives ----------------------------------------------------------

def local_alternative(base: Coupling, cbar, n_index, probe_seed: int = 0) -> Coupling:
    """pi_n with density 1 + h/sqrt(n) w.r.t. ``base``, or ``base`` itself when
    h vanishes or the density would go negative somewhere."""
    _check_density_base(base)
    root = math.sqrt(n_index)
    ja = base.joint_atoms()
    if ja is not None:
        keep = ja[2] > 0
        h = perturbation(base, cbar, np.hstack([ja[0][keep], ja[1][keep]]))
    else:
        probe = base.draw(substream(probe_seed, 51), PROBE_SIZE)
        h = perturbation(base, cbar, probe)
    if not np.any(h != 0) or np.min(1.0 + h / root) < 0:
        return base
    return LocalAlternative(base, float(cbar), int(n_index))


def _kl_1d(p_plus, q_plus, b, sigma, d):
    # the two-atom laws live on the diagonal, so the smoothed KL is one-dimensional
    a = b * math.sqrt(d)
    mu = DiscreteAtoms([[-a], [a]], [1 - p_plus, p_plus])
    nu = DiscreteAtoms([[-a], [a]], [1 - q_plus, q_plus])
    grid = TensorGrid(256, -a - 12 * sigma, a + 12 * sigma)
    return estimate_divergence(KL, SmoothedAnalytic(mu, sigma), SmoothedAnalytic(nu, sigma),
                               grid).value


@dataclass(frozen=True, eq=False)
class BoundaryDesign:
    """Two atoms at -b*1 and +b*1; mu0(+) = p, nu0(+) = q; anti-diagonal mass m."""
    coupling: EmpiricalPairs
    p: float
    q: float
    m: float
    b: float
    sigma: float
    kl: float

    @property
    def max_shift(self):
        return self.m / (self.p - self.q)

    def kl_at_shift(self, s):
        return _kl_1d(self.p + s * (self.p - self.q), self.q - s * (self.p - self.q),
                      self.b, self.sigma, self.coupling.dim)


def calibrate_boundary(epsilon, b, sigma, d: int = 1, p: float = 0.6,
                       anti: float = 0.95) -> BoundaryDesign:
    """Shift the mean of nu0 (through q = nu0(+b)) until the smoothed KL equals epsilon.

    The joint law puts a fraction ``anti`` of the largest feasible mass on the
    cell (X=-b, Y=+b); that cell bounds how far the local alternative can move.
    """
    if not 0 < p < 1 or not 0 < anti < 1:
        raise ValidationError("need 0 < p < 1 and 0 < anti < 1")
    f = lambda q: _kl_1d(p, q, b, sigma, d) - epsilon  # noqa: E731
    lo = 1e-12
    if f(lo) < 0:
        raise ValidationError("epsilon exceeds the largest divergence of this family")
    q = brentq(f, lo, p, xtol=1e-14, rtol=1e-14)
    m = anti * min(1 - p, q)
    one = np.ones(d) * b
    pairs = np.array([np.r_[-one, -one], np.r_[-one, one], np.r_[one, -one], np.r_[one, one]])
    probs = np.array([1 - p - m, m, p - q + m, q - m])
    return BoundaryDesign(EmpiricalPairs(pairs, probs), p, q, m, b, sigma, f(q) + epsilon)


def cbar_for_gap(design: BoundaryDesign, epsilon, n, gap) -> float:
    """cbar whose local alternative at sample size n has smoothed KL = epsilon + gap."""
    top = design.max_shift * (1 - 1e-9)
    g = lambda s: design.kl_at_shift(s) - epsilon - gap  # noqa: E731
    if g(top) < 0:
        raise ValidationError("gap not reachable within the nonnegativity limit")
    return brentq(g, 0.0, top, xtol=1e-14) * math.sqrt(n)


def _trial_seed(seed, *keys) -> int:
    return int(np.random.SeedSequence(int(seed) % (1 << 64), spawn_key=keys).generate_state(1)[0])


def power_sim(h0_coupling, h1_builder, cfg: AuditConfig, n: int, trials: int, plan=None,
              seed: int = 0, workers=None) -> dict:
    """Rejection rates of the smoothed test under h0 and under h1_builder(n)."""
    if int(trials) < 50:
        raise ValidationError("trials must be at least 50")
    h1 = h1_builder(n) if callable(h1_builder) else h1_builder

    def run(coupling, tag):
        from .distributions import sample_pairs

        def one(i):
            pairs = sample_pairs(coupling, n, _trial_seed(seed, tag, i))
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                r = smoothed_kl_audit(pairs, cfg, plan)
            return r.reject, r.statistic
        res = parallel_map(one, int(trials), workers)
        rej = np.array([r[0] for r in res])
        stat = np.array([r[1] for r in res])
        return float(rej.mean()), float(stat.mean())

    level, t0 = run(h0_coupling, 0)
    power, t1 = run(h1, 1)
    return {"level_hat": level, "power_hat": power, "avg_Tn_h0": t0, "avg_Tn_h1": t1,
            "trials": int(trials), "n": int(n)}
