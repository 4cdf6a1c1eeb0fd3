"""Covariance kernel, asymptotic variances and limit laws of smoothed divergences."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite_e import hermegauss

from .distributions import (Coupling, Distribution, EmpiricalPairs, Identical,
                            IndependentProduct, UniformBox, empirical, substream)
from .divergence import (CHISQ, HELLINGER_SQ, KL, TV, DIVERGENCE_CUTOFF,
                         PRESUMED_DIVERGENT, get_generator)
from .errors import (CholeskyFailure, SingularDensity, UnsupportedCoupling,
                     UnsupportedGenerator, ValidationError)
from .integrate import CHUNK, Estimate, MonteCarlo, parallel_map
from .smoothing import LOG_RATIO_CLAMP, SmoothedAnalytic, Smoothed, smooth

PSD_TOL = 1e-8


def _as_distribution(obj) -> Distribution:
    if isinstance(obj, Distribution):
        return obj
    return empirical(obj)


def _as_coupling(obj) -> Coupling:
    if isinstance(obj, Coupling):
        return obj
    return EmpiricalPairs(obj)


def _log_phi(diff, s):
    d = diff.shape[-1]
    return -(diff ** 2).sum(axis=-1) / (2 * s * s) - 0.5 * d * math.log(2 * math.pi * s * s)


# covariance kernel -----------------------------------------------------------

class CovarianceKernel:
    """Sigma^{(i,j)}(x, y) = Cov(phi(x - Z_i), phi(y - Z_j)) with (Z_1, Z_2) ~ pi."""

    def __init__(self, source, sigma):
        self.coupling = _as_coupling(source) if not isinstance(source, Distribution) \
            else Identical(source)
        self.sigma = float(sigma)
        mu, nu = self.coupling.marginals()
        self.mu, self.nu = mu, nu
        self.p = SmoothedAnalytic(mu, self.sigma)
        self.q = SmoothedAnalytic(nu, self.sigma)

    def _second(self, meas: Smoothed, x, y):
        # E[phi(x-Z) phi(y-Z)] = phi_{s sqrt2}(x-y) (mu * phi_{s/sqrt2})((x+y)/2)
        s = self.sigma
        half = meas.with_sigma(s / math.sqrt(2.0))
        diff = x[:, None, :] - y[None, :, :]
        mid = 0.5 * (x[:, None, :] + y[None, :, :])
        lm = half.log_density(mid.reshape(-1, x.shape[1])).reshape(diff.shape[:2])
        return np.exp(_log_phi(diff, s * math.sqrt(2.0)) + lm)

    def _cross_second(self, x, y):
        c = self.coupling
        if isinstance(c, IndependentProduct):
            return None
        if isinstance(c, Identical):
            return self._second(self.p, x, y)
        ja = c.joint_atoms()
        if ja is None:
            raise UnsupportedCoupling("cross covariance needs a discrete or product coupling")
        xs, ys, w = ja
        keep = w > 0
        s = self.sigma
        fx = np.exp(_log_phi(x[:, None, :] - xs[keep][None], s))
        fy = np.exp(_log_phi(y[:, None, :] - ys[keep][None], s))
        return (fx * w[keep]) @ fy.T

    def entry(self, i, j, x, y):
        x, y = np.atleast_2d(x), np.atleast_2d(y)
        px, py = (self.p if i == 1 else self.q), (self.p if j == 1 else self.q)
        mean = np.exp(px.log_density(x))[:, None] * np.exp(py.log_density(y))[None, :]
        if i == j:
            return self._second(px, x, y) - mean
        if i == 2:
            return self.entry(1, 2, y, x).T
        cross = self._cross_second(x, y)
        return np.zeros_like(mean) if cross is None else cross - mean

    def difference(self, x, y):
        """Covariance of G - G~ (two-sample null process)."""
        return (self.entry(1, 1, x, y) + self.entry(2, 2, x, y)
                - self.entry(1, 2, x, y) - self.entry(2, 1, x, y))


# grids -----------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class Grid:
    nodes: np.ndarray
    weights: np.ndarray
    meta: dict = field(default_factory=dict)


def equispaced_grid(lo, hi, nodes_per_dim) -> Grid:
    lo, hi = np.atleast_1d(lo).astype(float), np.atleast_1d(hi).astype(float)
    axes = [np.linspace(a, b, int(nodes_per_dim)) for a, b in zip(lo, hi)]
    h = np.prod([(b - a) / (int(nodes_per_dim) - 1) for a, b in zip(lo, hi)])
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    meta = {"lo": lo.tolist(), "hi": hi.tolist(), "nodes_per_dim": int(nodes_per_dim),
            "rule": "equispaced"}
    return Grid(nodes, np.full(nodes.shape[0], h), meta)


def default_grid(mu, sigma, nodes_per_dim=None, pad=6.0) -> Grid:
    """Equispaced nodes on [min center - 6 sd, max center + 6 sd] per dimension."""
    lo, hi, spread = smooth(_as_distribution(mu), sigma).extent()
    d = lo.size
    if d > 2:
        raise ValidationError("Nystrom grids support d <= 2")
    if nodes_per_dim is None:
        nodes_per_dim = 256 if d == 1 else 48
    return equispaced_grid(lo - pad * spread, hi + pad * spread, nodes_per_dim)


# limit laws ------------------------------------------------------------------

@dataclass(frozen=True)
class GaussianLaw:
    v2: float


@dataclass(frozen=True, eq=False)
class WeightedChiSq:
    lambdas: np.ndarray
    scale: float
    trace: float = float("nan")
    grid_meta: dict = field(default_factory=dict)
    status: str = "OK"

    def mean(self):
        return self.scale * float(np.sum(self.lambdas))

    def as_dict(self):
        return {"lambdas": self.lambdas.tolist(), "scale": self.scale,
                "trace": self.trace, "grid_meta": self.grid_meta, "status": self.status}


@dataclass(frozen=True, eq=False)
class TVFunctional:
    nodes: np.ndarray
    weights: np.ndarray
    cov: np.ndarray
    sign: np.ndarray
    qmask: np.ndarray

    def null_mean(self):
        """E of the functional when Q is everything: sum_j w_j sqrt(2 K_jj / pi) / 2."""
        return float(np.sum(self.weights * np.sqrt(np.maximum(np.diag(self.cov), 0.0))) / math.sqrt(2 * math.pi))


def _check_density(lp):
    if np.any(lp < math.log(1e-300)):
        raise SingularDensity("smoothed density below 1e-300 at a grid node")


def _grid_kernel(kernel: CovarianceKernel, grid: Grid, two_sample: bool):
    x = grid.nodes
    return kernel.difference(x, x) if two_sample else kernel.entry(1, 1, x, x)


def _resolve_mode(mu, mode):
    """(kernel source, two_sample flag)."""
    if mode in (None, "one_sample"):
        return _as_distribution(mu), False
    if mode == "two_sample":
        d = _as_distribution(mu)
        return IndependentProduct(d, d), True
    if isinstance(mode, Coupling):
        return mode, True
    raise ValidationError(f"unknown mode {mode!r}")


def null_limit_spectrum(mu, sigma, grid: Grid | None = None, mode="one_sample",
                        gen=KL) -> WeightedChiSq:
    """Nystrom spectrum of the null limit n D_f -> scale * sum lambda_i W_i^2."""
    gen = get_generator(gen)
    if gen.null_scale is None:
        raise UnsupportedGenerator("TV has no weighted chi-square null limit")
    source, two = _resolve_mode(mu, mode)
    kernel = CovarianceKernel(source, sigma)
    base = kernel.mu
    if two and not (base.is_discrete or isinstance(base, UniformBox)):
        warnings.warn("two-sample null limit is only established for compactly supported mu",
                      stacklevel=2)
    if grid is None:
        grid = default_grid(base, sigma)
    lp = kernel.p.log_density(grid.nodes)
    _check_density(lp)
    K = _grid_kernel(kernel, grid, two)
    scale = np.sqrt(grid.weights) * np.exp(-0.5 * lp)
    M = scale[:, None] * K * scale[None, :]
    M = 0.5 * (M + M.T)
    lam = np.linalg.eigvalsh(M)[::-1]
    top = max(lam[0], 0.0)
    # eigenvalues below rounding level are zero; the scale is that of the
    # terms subtracted inside the kernel (w p), not of their difference
    mag = max(float(np.abs(M).max(initial=0.0)), float(np.max(grid.weights * np.exp(lp))))
    floor = 64 * np.finfo(float).eps * M.shape[0] * mag
    if lam[-1] < -max(PSD_TOL * top, floor):
        warnings.warn(f"kernel matrix not PSD within tolerance (min {lam[-1]:.3e}, max {top:.3e})",
                      stacklevel=2)
    lam = np.where(lam > floor, lam, 0.0)
    trace = float(np.sum(lam))
    status = PRESUMED_DIVERGENT if trace > DIVERGENCE_CUTOFF else "OK"
    return WeightedChiSq(lam, gen.null_scale, trace, dict(grid.meta), status)


def tv_limit_law(mu, nu, sigma, grid: Grid | None = None, mode="one_sample") -> TVFunctional:
    """Limit of sqrt(n)(TV_hat - TV) as an integral functional of a Gaussian field."""
    if mode in (None, "one_sample"):
        mu_d, nu_d = _as_distribution(mu), _as_distribution(nu)
        kernel = CovarianceKernel(mu_d, sigma)
        two = False
        same = mu_d is nu_d
    else:
        source, two = _resolve_mode(mu, mode)
        kernel = CovarianceKernel(source, sigma)
        mu_d, nu_d = kernel.mu, kernel.nu
        same = mu_d is nu_d
    if grid is None:
        grid = default_grid(mu_d, sigma)
    p = SmoothedAnalytic(mu_d, sigma)
    q = SmoothedAnalytic(nu_d, sigma)
    pv, qv = np.exp(p.log_density(grid.nodes)), np.exp(q.log_density(grid.nodes))
    if same:
        qmask = np.ones(pv.size, dtype=bool)
    else:
        qmask = np.abs(pv - qv) <= 1e-9 * (pv + qv)
    cov = _grid_kernel(kernel, grid, two)
    return TVFunctional(grid.nodes, grid.weights, 0.5 * (cov + cov.T), np.sign(pv - qv), qmask)


def _cholesky(cov):
    m = cov.shape[0]
    jitter = 1e-10 * max(np.trace(cov), 1e-300) / m
    for _ in range(4):
        try:
            return np.linalg.cholesky(cov + jitter * np.eye(m))
        except np.linalg.LinAlgError:
            jitter *= 100.0
    raise CholeskyFailure("Cholesky failed after 3 jitter escalations")


def sample_limit(law, count: int, seed: int, workers=None) -> np.ndarray:
    """i.i.d. draws from a limit law; chunked substreams make output worker-independent."""
    count = int(count)
    if count < 1:
        raise ValidationError("count must be at least 1")
    n_chunks = -(-count // CHUNK)
    sizes = [min(CHUNK, count - k * CHUNK) for k in range(n_chunks)]

    if isinstance(law, GaussianLaw):
        sd = math.sqrt(max(law.v2, 0.0))

        def run(k):
            return sd * substream(seed, 11, k).standard_normal(sizes[k])
    elif isinstance(law, WeightedChiSq):
        lam = law.lambdas[law.lambdas > 1e-14 * max(law.lambdas.max(initial=0.0), 1e-300)]

        def run(k):
            if lam.size == 0:
                return np.zeros(sizes[k])
            z = substream(seed, 12, k).standard_normal((sizes[k], lam.size))
            return law.scale * (z * z) @ lam
    elif isinstance(law, TVFunctional):
        L = _cholesky(law.cov)
        wq = np.where(law.qmask, law.weights, 0.0)
        ws = np.where(law.qmask, 0.0, law.weights * law.sign)

        def run(k):
            z = substream(seed, 13, k).standard_normal((sizes[k], L.shape[0]))
            G = z @ L.T
            return 0.5 * (np.abs(G) @ wq + G @ ws)
    else:
        raise ValidationError(f"unknown limit law {law!r}")
    return np.concatenate(parallel_map(run, n_chunks, workers))


# variance functionals --------------------------------------------------------

def _log_ratio_fn(mu, nu, sigma):
    p, q = smooth(mu, sigma), smooth(nu, sigma)

    def lr(x):
        x = np.atleast_2d(x)
        return np.clip(p.log_density(x) - q.log_density(x), -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
    return lr


def variance_functionals(gen, mu, nu, sigma, plan=None):
    """Pointwise L_{1,f} = f'(r) and L_{2,f} = f(r) - r f'(r), r = (mu*phi)/(nu*phi)."""
    gen = get_generator(gen)
    if gen is TV:
        raise UnsupportedGenerator("TV has no variance functionals")
    lr = _log_ratio_fn(mu, nu, sigma)

    def L1(x):
        return gen.f_prime(np.exp(lr(x)))

    def L2(x):
        r = np.exp(lr(x))
        return gen.f(r) - r * gen.f_prime(r)
    return L1, L2


def reduced_functionals(gen, mu, nu, sigma):
    """Reduced forms, equal to L_1, L_2 up to additive constants.

    KL: (log r, -r); chi^2: (2r, -r^2); H^2: (-r^(-1/2), -r^(1/2)).
    """
    gen = get_generator(gen)
    lr = _log_ratio_fn(mu, nu, sigma)
    if gen is KL:
        return (lambda x: lr(x)), (lambda x: -np.exp(lr(x)))
    if gen is CHISQ:
        return (lambda x: 2.0 * np.exp(lr(x))), (lambda x: -np.exp(2.0 * lr(x)))
    if gen is HELLINGER_SQ:
        return (lambda x: -np.exp(-0.5 * lr(x))), (lambda x: -np.exp(0.5 * lr(x)))
    raise UnsupportedGenerator(f"{gen.name} has no variance functionals")


def _inner_rule(d, plan):
    n = {1: 48, 2: 24}.get(d, 12)
    if isinstance(plan, MonteCarlo) and d > 2:
        z = substream(plan.seed, 21).standard_normal((min(plan.n_mc, 4096), d))
        return z, np.full(z.shape[0], 1.0 / z.shape[0])
    t, w = hermegauss(n)
    w = w / math.sqrt(2 * math.pi)
    mesh = np.meshgrid(*([t] * d), indexing="ij")
    wm = np.meshgrid(*([w] * d), indexing="ij")
    return (np.stack([m.ravel() for m in mesh], axis=1),
            np.prod(np.stack([m.ravel() for m in wm], axis=1), axis=1))


def convolve(L, points, sigma, plan=None) -> np.ndarray:
    """(L * phi_sigma)(X) = E[L(X + sigma Z)] at each row X of ``points``."""
    points = np.atleast_2d(points)
    z, w = _inner_rule(points.shape[1], plan)
    out = np.empty(points.shape[0])
    step = max(1, (1 << 18) // z.shape[0])
    for s in range(0, points.shape[0], step):
        blk = points[s:s + step]
        vals = L((blk[:, None, :] + sigma * z[None, :, :]).reshape(-1, points.shape[1]))
        out[s:s + step] = vals.reshape(blk.shape[0], -1) @ w
    return out


def _weighted_var(vals, w) -> Estimate:
    m = float(w @ vals)
    return Estimate(max(float(w @ (vals - m) ** 2), 0.0), 0.0, int(vals.size))


def _mc_var(vals) -> Estimate:
    c = vals - vals.mean()
    sq = c * c
    v = float(sq.sum() / (vals.size - 1))
    return Estimate(v, float(sq.std(ddof=1) / math.sqrt(vals.size)), int(vals.size))


def _outer_draws(plan):
    if isinstance(plan, MonteCarlo):
        return plan.n_mc, plan.seed
    return 1 << 14, 0


def _var_under(dist: Distribution, fn, plan) -> Estimate:
    if dist.is_discrete:
        a, p = dist.atoms_probs()
        keep = p > 0
        return _weighted_var(fn(a[keep]), p[keep])
    n, seed = _outer_draws(plan)
    return _mc_var(fn(dist.draw(substream(seed, 22), n)))


def one_sample_variance(gen, mu, nu, sigma, plan=None) -> Estimate:
    """v^2_1 = Var_{X~mu}[(L~_1 * phi_sigma)(X)]."""
    mu, nu = _as_distribution(mu), _as_distribution(nu)
    L1, _ = reduced_functionals(gen, mu, nu, sigma)
    return _var_under(mu, lambda x: convolve(L1, x, sigma, plan), plan)


def two_sample_variance(gen, coupling, sigma, plan=None) -> Estimate:
    """v^2_2 = Var_{(X,Y)~pi}[(L~_1 * phi)(X) + (L~_2 * phi)(Y)]."""
    coupling = _as_coupling(coupling)
    mu, nu = coupling.marginals()
    L1, L2 = reduced_functionals(gen, mu, nu, sigma)
    g1 = lambda x: convolve(L1, x, sigma, plan)  # noqa: E731
    g2 = lambda y: convolve(L2, y, sigma, plan)  # noqa: E731
    if isinstance(coupling, IndependentProduct):
        a, b = _var_under(mu, g1, plan), _var_under(nu, g2, plan)
        return Estimate(a.value + b.value, math.hypot(a.std_error, b.std_error),
                        a.n_used + b.n_used)
    if isinstance(coupling, Identical):
        return _var_under(mu, lambda x: g1(x) + g2(x), plan)
    ja = coupling.joint_atoms()
    if ja is not None:
        xs, ys, w = ja
        keep = w > 0
        return _weighted_var(g1(xs[keep]) + g2(ys[keep]), w[keep])
    n, seed = _outer_draws(plan)
    pairs = coupling.draw(substream(seed, 23), n)
    d = coupling.dim
    return _mc_var(g1(pairs[:, :d]) + g2(pairs[:, d:]))


def variance_double_integral(gen, mu, nu, sigma, grid: Grid | None = None) -> float:
    """v^2_1 as the raw double integral of Sigma^{(1,1)} L_1 L_1 on a grid (oracle route)."""
    mu, nu = _as_distribution(mu), _as_distribution(nu)
    if grid is None:
        grid = default_grid(mu, sigma)
    L1, _ = variance_functionals(gen, mu, nu, sigma)
    K = CovarianceKernel(mu, sigma).entry(1, 1, grid.nodes, grid.nodes)
    v = grid.weights * L1(grid.nodes)
    return float(v @ K @ v)
