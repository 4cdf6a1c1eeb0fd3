"""Nonparametric bootstrap of smoothed-divergence statistics."""
from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .distributions import Distribution, _rows, substream
from .divergence import TV, default_plan, estimate_divergence, get_generator
from .errors import InsufficientReplicates, UnsupportedGenerator, ValidationError
from .integrate import parallel_map
from .smoothing import Smoothed, SmoothedAnalytic, SmoothedEmpirical

MIN_REPLICATES = 20


@dataclass(frozen=True, eq=False)
class BootstrapResult:
    replicates: np.ndarray
    point_estimate: float
    n: int
    sigma: float
    ci: tuple | None = None
    level: float | None = None

    @property
    def B(self):
        return self.replicates.size

    def with_ci(self, level: float) -> "BootstrapResult":
        lo, hi = bootstrap_ci(self.replicates, self.point_estimate, level, self.n)
        return replace(self, ci=(lo, hi), level=float(level))

    def as_dict(self):
        out = {"point": self.point_estimate, "B": self.B, "sigma": self.sigma, "n": self.n}
        if self.ci is not None:
            out.update(lo=self.ci[0], hi=self.ci[1], level=self.level)
        return out


def bootstrap_distribution(gen, samples_x, reference, sigma, B: int, plan=None, seed: int = 0,
                           workers=None) -> BootstrapResult:
    """Replicates sqrt(n) (D(mu_n^B * g || ref) - D(mu_n * g || ref)).

    ``reference`` is a population law (Distribution or smoothed measure) for the
    one-sample statistic, or a second sample matrix for the two-sample one, in
    which case both blocks are resampled independently. Every replicate reuses
    the same integration plan, so Monte Carlo noise is common across replicates.
    """
    gen = get_generator(gen)
    if gen is TV:
        raise UnsupportedGenerator("the bootstrap is not valid for TV")
    if int(B) < 1:
        raise ValidationError("B must be at least 1")
    x = _rows(samples_x, "samples_x")
    n = x.shape[0]
    plan = plan or default_plan()
    if isinstance(reference, Smoothed):
        q, y = reference.with_sigma(sigma), None
    elif isinstance(reference, Distribution):
        q, y = SmoothedAnalytic(reference, sigma), None
    else:
        y = _rows(reference, "samples_y")
        q = SmoothedEmpirical(y, sigma)
    point = estimate_divergence(gen, SmoothedEmpirical(x, sigma), q, plan).value

    def one(i):
        rng = substream(seed, 31, i)
        xb = x[rng.integers(0, n, n)]
        qb = q if y is None else SmoothedEmpirical(y[rng.integers(0, y.shape[0], y.shape[0])], sigma)
        est = estimate_divergence(gen, SmoothedEmpirical(xb, sigma), qb, plan, workers=1)
        return math.sqrt(n) * (est.value - point)

    reps = np.asarray(parallel_map(one, int(B), workers), dtype=np.float64)
    return BootstrapResult(reps, float(point), n, float(sigma))


def bootstrap_ci(replicates, point_estimate: float, level: float, n: int):
    """Basic interval [D - q_{1-a/2}/sqrt(n), D - q_{a/2}/sqrt(n)], a = 1 - level."""
    reps = np.asarray(replicates, dtype=np.float64).ravel()
    if not 0 < level < 1:
        raise ValidationError("level must lie in (0, 1)")
    if reps.size < MIN_REPLICATES:
        raise InsufficientReplicates(f"need at least {MIN_REPLICATES} replicates, got {reps.size}")
    alpha = 1.0 - level
    q_lo, q_hi = np.quantile(reps, [alpha / 2, 1 - alpha / 2])
    root = math.sqrt(n)
    return float(point_estimate - q_hi / root), float(point_estimate - q_lo / root)


def bootstrap(gen, samples_x, reference, sigma, B: int, level: float = 0.9, plan=None,
              seed: int = 0, workers=None) -> BootstrapResult:
    """Replicates plus the basic interval at ``level``."""
    res = bootstrap_distribution(gen, samples_x, reference, sigma, B, plan, seed, workers)
    return res.with_ci(level)
