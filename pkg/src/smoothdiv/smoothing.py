"""Gaussian-smoothed measures mu * N(0, sigma^2 I) and their log densities."""
from __future__ import annotations

import math

import numpy as np
from scipy.special import log_ndtr

from . import _kernels
from .distributions import Distribution, UniformBox, _rows
from .errors import DimensionMismatch, SigmaMismatch, ValidationError

LOG_RATIO_CLAMP = 700.0


class Smoothed:
    """A measure convolved with an isotropic Gaussian of sd ``sigma``."""

    sigma: float

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def log_density(self, x) -> np.ndarray:
        raise NotImplementedError

    def draw(self, rng, count) -> np.ndarray:
        raise NotImplementedError

    def with_sigma(self, sigma) -> "Smoothed":
        raise NotImplementedError

    def extent(self):
        """(lo, hi, spread) with every mixture center inside [lo, hi]."""
        raise NotImplementedError


class _MixtureSmoothed(Smoothed):
    centers: np.ndarray
    log_w: np.ndarray
    bw: float

    @property
    def dim(self):
        return self.centers.shape[1]

    def log_density(self, x):
        return _kernels.mixture_logpdf(np.atleast_2d(x), self.centers, self.log_w, self.bw)

    def draw(self, rng, count):
        w = np.exp(self.log_w - self.log_w.max())
        idx = rng.choice(w.size, size=count, p=w / w.sum())
        return self.centers[idx] + self.bw * rng.standard_normal((count, self.dim))

    def extent(self):
        return self.centers.min(axis=0), self.centers.max(axis=0), self.bw


def _check_sigma(sigma):
    sigma = float(sigma)
    if not (sigma > 0 and math.isfinite(sigma)):
        raise ValidationError("sigma must be a positive finite number")
    return sigma


class SmoothedEmpirical(_MixtureSmoothed):
    """Density (1/n) sum_i phi_sigma(x - X_i); repeated points are merged."""

    def __init__(self, points, sigma):
        self.points = _rows(points)
        self.sigma = _check_sigma(sigma)
        uniq, counts = np.unique(self.points, axis=0, return_counts=True)
        self.centers = uniq
        self.log_w = np.log(counts / counts.sum())
        self.bw = self.sigma

    @property
    def n(self):
        return self.points.shape[0]

    def with_sigma(self, sigma):
        return SmoothedEmpirical(self.points, sigma)

    def __repr__(self):
        return f"SmoothedEmpirical(n={self.n}, d={self.dim}, sigma={self.sigma})"


class SmoothedAnalytic(Smoothed):
    def __init__(self, base: Distribution, sigma):
        self.base = base
        self.sigma = _check_sigma(sigma)
        mix = base.mixture()
        if mix is not None:
            c, lw, s = mix
            self._mix = _MixtureView(c, lw, math.sqrt(s * s + self.sigma ** 2))
        elif isinstance(base, UniformBox):
            self._mix = None
        else:
            raise ValidationError(f"no smoothed density for {type(base).__name__}")

    @property
    def dim(self):
        return self.base.dim

    def log_density(self, x):
        if self._mix is not None:
            return self._mix.log_density(x)
        return _box_log_density(self.base, self.sigma, np.atleast_2d(x))

    def draw(self, rng, count):
        if self._mix is not None:
            return self._mix.draw(rng, count)
        return self.base.draw(rng, count) + self.sigma * rng.standard_normal((count, self.dim))

    def with_sigma(self, sigma):
        return SmoothedAnalytic(self.base, sigma)

    def extent(self):
        if self._mix is not None:
            return self._mix.extent()
        return self.base.lo.copy(), self.base.hi.copy(), self.sigma

    def mixture(self):
        """(centers, log_w, bw) or None for a uniform box."""
        if self._mix is None:
            return None
        return self._mix.centers, self._mix.log_w, self._mix.bw

    def __repr__(self):
        return f"SmoothedAnalytic({type(self.base).__name__}, sigma={self.sigma})"


class _MixtureView(_MixtureSmoothed):
    def __init__(self, centers, log_w, bw):
        self.centers = np.asarray(centers, dtype=np.float64)
        self.log_w = np.asarray(log_w, dtype=np.float64)
        self.bw = float(bw)
        self.sigma = self.bw


def _log_diff_ndtr(a, b):
    """log(Phi(a) - Phi(b)) for a > b, accurate in both tails."""
    # reflect so both arguments sit in the lower tail where log_ndtr is exact
    flip = b > 0
    a2 = np.where(flip, -b, a)
    b2 = np.where(flip, -a, b)
    la, lb = log_ndtr(a2), log_ndtr(b2)
    return la + np.log1p(-np.exp(lb - la))


def _box_log_density(box: UniformBox, sigma, x):
    if x.shape[1] != box.dim:
        raise DimensionMismatch("point dimension differs from the box")
    upper = (box.hi - x) / sigma
    lower = (box.lo - x) / sigma
    terms = _log_diff_ndtr(upper, lower) - np.log(box.hi - box.lo)
    return terms.sum(axis=1)


def smooth(obj, sigma) -> Smoothed:
    """Wrap a Distribution or a point matrix as a smoothed measure."""
    if isinstance(obj, Smoothed):
        if obj.sigma != float(sigma):
            return obj.with_sigma(sigma)
        return obj
    if isinstance(obj, Distribution):
        return SmoothedAnalytic(obj, sigma)
    return SmoothedEmpirical(obj, sigma)


def log_density(p: Smoothed, x):
    """log p(x); a vector gives a scalar, a matrix gives one value per row."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    xx = x[None, :] if single else x
    if xx.shape[1] != p.dim:
        raise DimensionMismatch(f"x has dimension {xx.shape[1]}, measure has {p.dim}")
    out = p.log_density(xx)
    return float(out[0]) if single else out


def check_compatible(p: Smoothed, q: Smoothed):
    if p.dim != q.dim:
        raise DimensionMismatch(f"dimensions differ: {p.dim} vs {q.dim}")
    if p.sigma != q.sigma:
        raise SigmaMismatch(f"bandwidths differ: {p.sigma} vs {q.sigma}")


def log_ratio(p: Smoothed, q: Smoothed, x):
    """log p(x) - log q(x), clamped to +-700."""
    check_compatible(p, q)
    lr = np.asarray(log_density(p, x)) - np.asarray(log_density(q, x))
    lr = np.clip(lr, -LOG_RATIO_CLAMP, LOG_RATIO_CLAMP)
    return float(lr) if lr.ndim == 0 else lr


def log_second_moment(p: Smoothed, x):
    """log E_mu[phi_sigma(x - X)^2] for the measure underlying ``p``.

    Uses phi_sigma(u)^2 = (4 pi sigma^2)^(-d/2) phi_{sigma/sqrt2}(u).
    """
    s = p.sigma
    half = p.with_sigma(s / math.sqrt(2.0))
    return -0.5 * p.dim * math.log(4 * math.pi * s * s) + half.log_density(np.atleast_2d(x))
