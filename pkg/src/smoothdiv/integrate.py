"""Monte Carlo and tensor-grid integration, plus scalar special functions."""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy.special import gammaln, ndtr, ndtri

from .distributions import substream
from .errors import DomainError, NonFiniteIntegrand, ValidationError

CHUNK = 8192
_workers = int(os.environ.get("SMOOTHDIV_THREADS", "1") or 1)


def set_workers(n: int) -> None:
    """Default worker count for chunked MC and simulation loops."""
    global _workers
    if int(n) < 1:
        raise ValidationError("threads must be at least 1")
    _workers = int(n)


def get_workers() -> int:
    return _workers


def parallel_map(fn: Callable[[int], object], count: int, workers: int | None = None) -> list:
    """[fn(0), ..., fn(count-1)] evaluated on a thread pool, returned in index order."""
    w = min(workers or _workers, count)
    if w <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, range(count)))


@dataclass(frozen=True)
class MonteCarlo:
    n_mc: int
    seed: int = 0
    proposal: object = None  # density with draw(rng, count) and log_density(x)

    def __post_init__(self):
        if int(self.n_mc) < 2:
            raise ValidationError("n_mc must be at least 2")


@dataclass(frozen=True)
class TensorGrid:
    nodes_per_dim: int
    lo: tuple
    hi: tuple
    rule: str = "gauss-legendre"

    def __post_init__(self):
        lo = tuple(float(v) for v in np.atleast_1d(self.lo))
        hi = tuple(float(v) for v in np.atleast_1d(self.hi))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if len(lo) != len(hi) or not all(a < b for a, b in zip(lo, hi)):
            raise ValidationError("grid box needs lo < hi in every dimension")
        if len(lo) > 3:
            raise ValidationError("TensorGrid supports d <= 3")
        if self.rule not in ("gauss-legendre", "midpoint"):
            raise ValidationError(f"unknown rule {self.rule!r}")
        if int(self.nodes_per_dim) < 1:
            raise ValidationError("nodes_per_dim must be positive")

    @property
    def dim(self):
        return len(self.lo)

    @classmethod
    def around(cls, *measures, nodes_per_dim=256, pad=10.0, rule="gauss-legendre"):
        """Box covering every measure's centers padded by ``pad`` spreads."""
        los, his = [], []
        for m in measures:
            lo, hi, spread = m.extent()
            los.append(lo - pad * spread)
            his.append(hi + pad * spread)
        return cls(nodes_per_dim, tuple(np.min(los, axis=0)), tuple(np.max(his, axis=0)), rule)


@dataclass(frozen=True)
class Estimate:
    value: float
    std_error: float
    n_used: int
    status: str = "OK"

    def as_dict(self):
        return {"value": self.value, "std_error": self.std_error,
                "n_used": self.n_used, "status": self.status}


def gauss_legendre(n: int, a: float, b: float):
    x, w = leggauss(int(n))
    half = 0.5 * (b - a)
    return a + half * (x + 1.0), half * w


def grid_nodes(plan: TensorGrid):
    """Tensor nodes (m x d) and weights (m,)."""
    axes, wts = [], []
    for a, b in zip(plan.lo, plan.hi):
        if plan.rule == "gauss-legendre":
            x, w = gauss_legendre(plan.nodes_per_dim, a, b)
        else:
            h = (b - a) / plan.nodes_per_dim
            x = a + h * (np.arange(plan.nodes_per_dim) + 0.5)
            w = np.full(plan.nodes_per_dim, h)
        axes.append(x)
        wts.append(w)
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    wmesh = np.meshgrid(*wts, indexing="ij")
    weights = np.prod(np.stack([m.ravel() for m in wmesh], axis=1), axis=1)
    return nodes, weights


def _finite(vals):
    if not np.all(np.isfinite(vals)):
        raise NonFiniteIntegrand("integrand produced a non-finite value")
    return vals


def _chunk_stats(vals):
    n = vals.size
    mean = float(vals.mean())
    return n, mean, float(((vals - mean) ** 2).sum())


def _merge(a, b):
    # Chan et al. pairwise update, applied left to right
    na, ma, sa = a
    nb, mb, sb = b
    n = na + nb
    delta = mb - ma
    return n, ma + delta * nb / n, sa + sb + delta * delta * na * nb / n


def mc_chunks(h, draw, n_mc: int, seed: int, workers=None):
    """Per-chunk (count, mean, M2) of h over draws; chunk k uses substream k."""
    n_mc = int(n_mc)
    n_chunks = -(-n_mc // CHUNK)

    def run(k):
        size = min(CHUNK, n_mc - k * CHUNK)
        x = draw(substream(seed, 7, k), size)
        return _chunk_stats(_finite(np.asarray(h(x), dtype=np.float64)))

    return parallel_map(run, n_chunks, workers)


def combine(stats) -> Estimate:
    acc = stats[0]
    for s in stats[1:]:
        acc = _merge(acc, s)
    n, mean, m2 = acc
    se = math.sqrt(m2 / (n - 1) / n) if n > 1 else 0.0
    return Estimate(mean, se, n)


def mc_mean(h, draw, n_mc: int, seed: int, workers=None) -> Estimate:
    """Mean of h(X) over ``n_mc`` draws; independent of the worker count."""
    return combine(mc_chunks(h, draw, n_mc, seed, workers))


def grid_sum(g, plan: TensorGrid, block: int = 1 << 16) -> Estimate:
    nodes, weights = grid_nodes(plan)
    total = 0.0
    for s in range(0, nodes.shape[0], block):
        vals = _finite(np.asarray(g(nodes[s:s + block]), dtype=np.float64))
        total += float(vals @ weights[s:s + block])
    return Estimate(total, 0.0, nodes.shape[0])


def integrate(g, plan, workers=None) -> Estimate:
    """Integral of g over R^d under ``plan``.

    MonteCarlo averages g / proposal-density over proposal draws; the proposal
    needs ``draw(rng, count)`` and ``log_density(x)``.
    """
    if isinstance(plan, TensorGrid):
        return grid_sum(g, plan)
    if not isinstance(plan, MonteCarlo):
        raise ValidationError(f"unknown plan {plan!r}")
    prop = plan.proposal
    if prop is None:
        raise ValidationError("MonteCarlo integration needs a proposal density")

    def h(x):
        return np.asarray(g(x)) / np.exp(prop.log_density(x))

    return mc_mean(h, prop.draw, plan.n_mc, plan.seed, workers)


# special functions ----------------------------------------------------------

def q_function(x):
    """Standard normal upper tail P(Z > x)."""
    return ndtr(-np.asarray(x, dtype=np.float64))[()]


def q_inverse(tau):
    tau_a = np.asarray(tau, dtype=np.float64)
    if np.any(~((tau_a > 0) & (tau_a < 1))):
        raise DomainError("tau must lie in (0, 1)")
    return (-ndtri(tau_a))[()]


def sphere_area(d: int) -> float:
    """Surface area of the unit sphere in R^d."""
    return 2.0 * math.pi ** (d / 2) / math.exp(gammaln(d / 2))


def radial_integral(g, d: int, upper: float, nodes: int = 200) -> float:
    """int_{R^d} g(|x|) dx = |S^{d-1}| int_0^upper r^{d-1} g(r) dr (Gauss-Legendre)."""
    r, w = gauss_legendre(nodes, 0.0, upper)
    return sphere_area(d) * float(np.sum(w * r ** (d - 1) * g(r)))


def c_ds(d: int, s: float, nodes: int = 200) -> float:
    """E|Z|^s for Z ~ N(0, I_d), via Gauss-Legendre on the chi(d) density.

    The substitution r = t^2 removes the r^(s+d-1) cusp at the origin.
    """
    if int(d) < 1 or not (0 < s <= 1):
        raise DomainError("need d >= 1 and 0 < s <= 1")
    d = int(d)
    upper = math.sqrt(math.sqrt(d) + 14.0)
    t, w = gauss_legendre(nodes, 0.0, upper)
    r = t * t
    log_chi = (d - 1) * np.log(r) - 0.5 * r * r - (d / 2 - 1) * math.log(2) - gammaln(d / 2)
    vals = np.exp(s * np.log(r) + log_chi) * 2 * t
    return float(np.sum(w * vals))
