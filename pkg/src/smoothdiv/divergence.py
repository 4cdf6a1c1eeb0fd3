"""f-divergence generators and plug-in estimators for smoothed measures."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.special import erf

from .errors import DomainError, UnsupportedGenerator
from .distributions import substream
from .integrate import (CHUNK, Estimate, MonteCarlo, TensorGrid, _chunk_stats, _finite, c_ds,
                        combine, grid_sum, mc_chunks, parallel_map)
from .smoothing import LOG_RATIO_CLAMP, Smoothed, check_compatible, log_second_moment, smooth

LOG2 = math.log(2.0)
DIVERGENCE_CUTOFF = 1e12
PRESUMED_DIVERGENT = "PRESUMED_DIVERGENT"


def _log_ftilde_kl(lr):
    # log of r log r - r + 1, the KL generator minus its tangent at 1
    lr = np.asarray(lr, dtype=np.float64)
    out = np.empty_like(lr)
    small = np.abs(lr) < 1e-2
    big = lr > 1.0
    low = lr < -1.0
    mid = ~(small | big | low)
    s = lr[small]
    with np.errstate(divide="ignore"):
        out[small] = np.log(s * s * (0.5 + s * (1 / 3 + s * (1 / 8 + s * (1 / 30 + s * (1 / 144 + s / 840))))))
        b = lr[big]
        out[big] = b + np.log(b - 1.0 + np.exp(-b))
        lo = lr[low]
        out[low] = np.log1p(np.exp(lo) * (lo - 1.0))
        m = lr[mid]
        out[mid] = np.log(np.exp(m) * m - np.expm1(m))
    return out


def _log_abs_expm1(z):
    with np.errstate(divide="ignore"):
        return np.log(np.abs(np.expm1(z)))


@dataclass(frozen=True)
class Generator:
    name: str
    f: Callable
    f_prime: Callable | None
    f_second: Callable | None
    log_ftilde: Callable  # log(f(r) - f'(1)(r - 1)) as a function of log r
    null_scale: float | None  # f''(1)/2, the weight of the null chi-square law

    def __repr__(self):
        return f"Generator({self.name})"


def _xlogx(x):
    x = np.asarray(x, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        return np.where(x > 0, x * np.log(np.where(x > 0, x, 1.0)), 0.0)


KL = Generator(
    "KL", _xlogx,
    lambda x: 1.0 + np.log(x),
    lambda x: 1.0 / np.asarray(x, dtype=np.float64),
    _log_ftilde_kl, 0.5)

CHISQ = Generator(
    "ChiSq", lambda x: (np.asarray(x, dtype=np.float64) - 1.0) ** 2,
    lambda x: 2.0 * (np.asarray(x, dtype=np.float64) - 1.0),
    lambda x: np.full_like(np.asarray(x, dtype=np.float64), 2.0),
    lambda lr: 2.0 * _log_abs_expm1(lr), 1.0)

HELLINGER_SQ = Generator(
    "HellingerSq", lambda x: (np.sqrt(x) - 1.0) ** 2,
    lambda x: 1.0 - 1.0 / np.sqrt(x),
    lambda x: 0.5 * np.asarray(x, dtype=np.float64) ** -1.5,
    lambda lr: 2.0 * _log_abs_expm1(0.5 * np.asarray(lr)), 0.25)

TV = Generator(
    "TV", lambda x: 0.5 * np.abs(np.asarray(x, dtype=np.float64) - 1.0),
    None, None,
    lambda lr: _log_abs_expm1(lr) - LOG2, None)

_ALIASES = {
    "kl": KL, "chi2": CHISQ, "chisq": CHISQ, "h2": HELLINGER_SQ,
    "hellingersq": HELLINGER_SQ, "hellinger": HELLINGER_SQ, "tv": TV,
}


def get_generator(name) -> Generator:
    if isinstance(name, Generator):
        return name
    try:
        return _ALIASES[str(name).lower()]
    except KeyError:
        raise UnsupportedGenerator(f"unknown divergence {name!r}") from None


def closed_form(gen, a, b, sigma) -> float:
    """D_f(N(a, s^2 I) || N(b, s^2 I))."""
    gen = get_generator(gen)
    delta = float(np.linalg.norm(np.atleast_1d(a) - np.atleast_1d(b)))
    z = delta / sigma
    if gen is KL:
        return 0.5 * z * z
    if gen is CHISQ:
        return math.expm1(z * z)
    if gen is HELLINGER_SQ:
        return -2.0 * math.expm1(-z * z / 8.0)
    return float(erf(z / (2.0 * math.sqrt(2.0))))


class BalancedMixture:
    """Proposal (p + q) / 2."""

    def __init__(self, p: Smoothed, q: Smoothed):
        self.p, self.q = p, q

    @property
    def dim(self):
        return self.p.dim

    def draw(self, rng, count):
        k = int(rng.binomial(count, 0.5))
        return np.vstack([self.p.draw(rng, k), self.q.draw(rng, count - k)])

    def log_density(self, x):
        return np.logaddexp(self.p.log_density(x), self.q.log_density(x)) - LOG2


def default_plan(n_mc: int = 1 << 16, seed: int = 0) -> MonteCarlo:
    return MonteCarlo(n_mc, seed)


def estimate_divergence(gen, p: Smoothed, q: Smoothed, plan=None, workers=None) -> Estimate:
    """Estimate D_f(p || q) = int q f(p/q).

    The integrand is f(r) - f'(1)(r - 1), which has the same integral and
    vanishes to second order at r = 1. Monte Carlo draws from (p + q)/2 by
    default; pass ``MonteCarlo(..., proposal="q")`` to sample from q instead.
    """
    gen = get_generator(gen)
    check_compatible(p, q)
    plan = plan or default_plan()

    def parts(x):
        lp, lq = p.log_density(x), q.log_density(x)
        lr = np.clip(lp - lq, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
        return lp, lq, gen.log_ftilde(lr)

    if isinstance(plan, TensorGrid):
        def g(x):
            _, lq, lf = parts(x)
            return np.exp(lq + lf)
        return grid_sum(g, plan)

    prop = plan.proposal
    if prop is None or prop == "mixture":
        draw = BalancedMixture(p, q).draw

        def h(x):
            lp, lq, lf = parts(x)
            return np.exp(lq + lf - np.logaddexp(lp, lq) + LOG2)
    elif prop == "q":
        draw = q.draw

        def h(x):
            return np.exp(parts(x)[2])
    else:
        draw = prop.draw

        def h(x):
            _, lq, lf = parts(x)
            return np.exp(lq + lf - prop.log_density(x))

    return combine(mc_chunks(h, draw, plan.n_mc, plan.seed, workers))


def stability_bound(M, s, d, sigma) -> float:
    """c_{d,s} M (M + 1 + log M) sigma^s."""
    if not M >= 1:
        raise DomainError("M must be at least 1")
    if not (0 < s <= 1) or not sigma > 0:
        raise DomainError("need 0 < s <= 1 and sigma > 0")
    return c_ds(d, s) * M * (M + 1 + math.log(M)) * sigma ** s


def _hill_index(top):
    """Hill estimate of the tail index from the k+1 largest values (ascending)."""
    if top.size < 3 or top[0] <= 0:
        return math.inf
    return (top.size - 1) / float(np.sum(np.log(top[1:] / top[0])))


def _variance_grows(stats):
    # sample variance on nested prefixes of 1/8, 1/4, 1/2 and all chunks
    k = len(stats)
    v = []
    for j in (1, 2, 4, 8):
        e = combine(stats[: max(1, k * j // 8)])
        v.append(e.std_error ** 2 * e.n_used)
    return v[3] > 2 * v[0] and v[3] > v[2] > v[1] > v[0]


def chi2_information(mu, sigma, plan=None, workers=None) -> Estimate:
    """int Var_mu(phi_sigma(x - X)) / (mu * phi_sigma)(x) dx.

    ``mu`` may be a Distribution, a smoothed measure, or a sample matrix.
    Monte Carlo samples from mu * phi_sigma. The status is PRESUMED_DIVERGENT
    when the value exceeds 1e12, when the integrand's estimated tail index is
    below 2 (infinite variance), or when the sample variance keeps growing
    over three doublings of the sample.
    """
    p = smooth(mu, sigma)
    plan = plan or default_plan()

    if isinstance(plan, TensorGrid):
        def g(x):
            lp = p.log_density(x)
            return np.exp(lp) * np.expm1(log_second_moment(p, x) - 2 * lp)
        est = grid_sum(g, plan)
        status = PRESUMED_DIVERGENT if est.value > DIVERGENCE_CUTOFF else "OK"
        return Estimate(est.value, 0.0, est.n_used, status)

    n_mc = int(plan.n_mc)
    k_top = math.isqrt(n_mc) + 1
    tops = {}

    def h(x):
        lp = p.log_density(x)
        return np.expm1(np.minimum(log_second_moment(p, x) - 2 * lp, 700.0))

    def draw(rng, count):
        return p.draw(rng, count)

    def run(k):
        size = min(CHUNK, n_mc - k * CHUNK)
        vals = h(draw(substream(plan.seed, 7, k), size))
        tops[k] = np.sort(vals)[-k_top:]
        return _chunk_stats(_finite(vals))

    stats = parallel_map(run, -(-n_mc // CHUNK), workers)
    est = combine(stats)
    top = np.sort(np.concatenate([tops[k] for k in range(len(stats))]))[-k_top:]
    status = "OK"
    if not est.value <= DIVERGENCE_CUTOFF or _hill_index(top) < 2.0 or \
            (len(stats) >= 8 and _variance_grows(stats)):
        status = PRESUMED_DIVERGENT
    return Estimate(est.value, est.std_error, est.n_used, status)
