"""Distribution zoo, couplings of paired samples, and noise mechanisms.

All sampling goes through ``numpy.random.Generator``. Independent substreams
are derived with ``SeedSequence(seed, spawn_key=keys)``, which hashes the seed
together with the stream index, so parallel work never shares a stream.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, UnsupportedCoupling, ValidationError

PROB_TOL = 1e-12


def _seed_entropy(seed) -> int:
    return int(seed) % (1 << 64)


def substream(seed, *keys) -> np.random.Generator:
    """Generator for stream ``keys`` under ``seed``; independent across keys."""
    ss = np.random.SeedSequence(_seed_entropy(seed), spawn_key=tuple(int(k) for k in keys))
    return np.random.default_rng(ss)


def _vec(a, name="vector") -> np.ndarray:
    v = np.atleast_1d(np.asarray(a, dtype=np.float64))
    if v.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} must be finite")
    return v


def _rows(a, name="points") -> np.ndarray:
    m = np.asarray(a, dtype=np.float64)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2 or m.shape[0] == 0:
        raise ValidationError(f"{name} must be a non-empty matrix")
    if not np.all(np.isfinite(m)):
        raise ValidationError(f"{name} must be finite")
    return m


def _probs(p, k) -> np.ndarray:
    p = np.asarray(p, dtype=np.float64).ravel()
    if p.size != k:
        raise ValidationError(f"expected {k} probabilities, got {p.size}")
    if np.any(p < 0) or abs(p.sum() - 1.0) > PROB_TOL:
        raise ValidationError("probabilities must be nonnegative and sum to 1")
    return p


def _set(obj, **kw):
    for k, v in kw.items():
        object.__setattr__(obj, k, v)


class Distribution:
    """Common interface of the zoo."""

    is_discrete = False

    @property
    def dim(self) -> int:
        raise NotImplementedError

    def draw(self, rng: np.random.Generator, count: int) -> np.ndarray:
        raise NotImplementedError

    def mixture(self):
        """(centers, log_weights, s) if the law is a Gaussian mixture with
        isotropic component sd ``s`` (s=0 for atoms), else None."""
        return None

    def extent(self):
        """(lo, hi, spread): bounding box of centers plus component sd."""
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class PointMass(Distribution):
    a: np.ndarray
    is_discrete = True

    def __post_init__(self):
        _set(self, a=_vec(self.a, "a"))

    @property
    def dim(self):
        return self.a.size

    def draw(self, rng, count):
        return np.tile(self.a, (count, 1))

    def atoms_probs(self):
        return self.a[None, :], np.ones(1)

    def mixture(self):
        return self.a[None, :], np.zeros(1), 0.0

    def extent(self):
        return self.a.copy(), self.a.copy(), 0.0


@dataclass(frozen=True, eq=False)
class IsotropicGaussian(Distribution):
    mean: np.ndarray
    s: float

    def __post_init__(self):
        if not self.s > 0:
            raise ValidationError("s must be positive")
        _set(self, mean=_vec(self.mean, "mean"), s=float(self.s))

    @property
    def dim(self):
        return self.mean.size

    def draw(self, rng, count):
        return self.mean + self.s * rng.standard_normal((count, self.dim))

    def mixture(self):
        return self.mean[None, :], np.zeros(1), self.s

    def log_pdf(self, x):
        x = np.atleast_2d(x)
        sq = ((x - self.mean) ** 2).sum(axis=1)
        return -sq / (2 * self.s ** 2) - 0.5 * self.dim * math.log(2 * math.pi * self.s ** 2)

    def extent(self):
        return self.mean.copy(), self.mean.copy(), self.s


@dataclass(frozen=True, eq=False)
class GaussianMixture(Distribution):
    weights: np.ndarray
    means: np.ndarray
    s: float

    def __post_init__(self):
        means = _rows(self.means, "means")
        if not self.s > 0:
            raise ValidationError("s must be positive")
        _set(self, means=means, weights=_probs(self.weights, means.shape[0]), s=float(self.s))

    @property
    def dim(self):
        return self.means.shape[1]

    def draw(self, rng, count):
        idx = rng.choice(self.weights.size, size=count, p=self.weights)
        return self.means[idx] + self.s * rng.standard_normal((count, self.dim))

    def mixture(self):
        keep = self.weights > 0
        return self.means[keep], np.log(self.weights[keep]), self.s

    def log_pdf(self, x):
        from ._kernels import mixture_logpdf
        c, lw, s = self.mixture()
        return mixture_logpdf(np.atleast_2d(x), c, lw, s)

    def extent(self):
        return self.means.min(axis=0), self.means.max(axis=0), self.s


@dataclass(frozen=True, eq=False)
class UniformBox(Distribution):
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo, hi = _vec(self.lo, "lo"), _vec(self.hi, "hi")
        if lo.shape != hi.shape:
            raise DimensionMismatch("lo and hi differ in length")
        if not np.all(lo < hi):
            raise ValidationError("UniformBox needs lo < hi componentwise")
        _set(self, lo=lo, hi=hi)

    @property
    def dim(self):
        return self.lo.size

    def draw(self, rng, count):
        return self.lo + (self.hi - self.lo) * rng.random((count, self.dim))

    def log_pdf(self, x):
        x = np.atleast_2d(x)
        inside = np.all((x >= self.lo) & (x <= self.hi), axis=1)
        val = -np.log(self.hi - self.lo).sum()
        return np.where(inside, val, -np.inf)

    def extent(self):
        return self.lo.copy(), self.hi.copy(), 0.0


@dataclass(frozen=True, eq=False)
class DiscreteAtoms(Distribution):
    atoms: np.ndarray
    probs: np.ndarray
    is_discrete = True

    def __post_init__(self):
        atoms = _rows(self.atoms, "atoms")
        _set(self, atoms=atoms, probs=_probs(self.probs, atoms.shape[0]))

    @property
    def dim(self):
        return self.atoms.shape[1]

    def draw(self, rng, count):
        idx = rng.choice(self.probs.size, size=count, p=self.probs)
        return self.atoms[idx].copy()

    def atoms_probs(self):
        return self.atoms, self.probs

    def mixture(self):
        keep = self.probs > 0
        return self.atoms[keep], np.log(self.probs[keep]), 0.0

    def extent(self):
        a = self.atoms[self.probs > 0]
        return a.min(axis=0), a.max(axis=0), 0.0


def empirical(points) -> DiscreteAtoms:
    """Empirical law of the rows of ``points`` (duplicates merged)."""
    pts = _rows(points)
    uniq, counts = np.unique(pts, axis=0, return_counts=True)
    return DiscreteAtoms(uniq, counts / counts.sum())


def pmf(dist: Distribution, x) -> np.ndarray:
    """Point masses of a discrete law at the rows of ``x`` (0 off the atoms)."""
    atoms, probs = dist.atoms_probs()
    table = {}
    for a, p in zip(map(tuple, atoms.tolist()), probs):
        table[a] = table.get(a, 0.0) + p
    return np.array([table.get(tuple(r), 0.0) for r in np.atleast_2d(x).tolist()])


def sample(dist: Distribution, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise ValidationError("count must be at least 1")
    return dist.draw(substream(seed, 0), int(count))


# couplings ------------------------------------------------------------------

class Coupling:
    @property
    def dim(self) -> int:
        raise NotImplementedError

    def draw(self, rng, count):
        raise NotImplementedError

    def joint_atoms(self):
        """(xs, ys, probs) for finitely supported couplings, else None."""
        return None

    def marginals(self):
        raise NotImplementedError


def _discrete_joint_marginals(xs, ys, probs):
    return empirical_weighted(xs, probs), empirical_weighted(ys, probs)


def empirical_weighted(points, probs) -> DiscreteAtoms:
    pts = _rows(points)
    uniq, inv = np.unique(pts, axis=0, return_inverse=True)
    w = np.bincount(inv.ravel(), weights=probs, minlength=uniq.shape[0])
    return DiscreteAtoms(uniq, w / w.sum())


@dataclass(frozen=True, eq=False)
class IndependentProduct(Coupling):
    mu: Distribution
    nu: Distribution

    def __post_init__(self):
        if self.mu.dim != self.nu.dim:
            raise DimensionMismatch("marginals differ in dimension")

    @property
    def dim(self):
        return self.mu.dim

    def draw(self, rng, count):
        return np.hstack([self.mu.draw(rng, count), self.nu.draw(rng, count)])

    def marginals(self):
        return self.mu, self.nu

    def joint_atoms(self):
        if not (self.mu.is_discrete and self.nu.is_discrete):
            return None
        xa, xp = self.mu.atoms_probs()
        ya, yp = self.nu.atoms_probs()
        i, j = np.meshgrid(np.arange(len(xp)), np.arange(len(yp)), indexing="ij")
        i, j = i.ravel(), j.ravel()
        return xa[i], ya[j], xp[i] * yp[j]


@dataclass(frozen=True, eq=False)
class Identical(Coupling):
    mu: Distribution

    @property
    def dim(self):
        return self.mu.dim

    def draw(self, rng, count):
        x = self.mu.draw(rng, count)
        return np.hstack([x, x])

    def marginals(self):
        return self.mu, self.mu

    def joint_atoms(self):
        if not self.mu.is_discrete:
            return None
        a, p = self.mu.atoms_probs()
        return a, a, p


@dataclass(frozen=True, eq=False)
class EmpiricalPairs(Coupling):
    """Paired rows (X, Y); optional ``probs`` turn it into a general discrete joint."""
    pairs: np.ndarray
    probs: np.ndarray | None = None

    def __post_init__(self):
        pairs = _rows(self.pairs, "pairs")
        if pairs.shape[1] % 2:
            raise DimensionMismatch("pairs need an even number of columns")
        probs = self.probs
        if probs is None:
            probs = np.full(pairs.shape[0], 1.0 / pairs.shape[0])
        _set(self, pairs=pairs, probs=_probs(probs, pairs.shape[0]))

    @property
    def dim(self):
        return self.pairs.shape[1] // 2

    def draw(self, rng, count):
        idx = rng.choice(self.probs.size, size=count, p=self.probs)
        return self.pairs[idx].copy()

    def joint_atoms(self):
        d = self.dim
        uniq, inv = np.unique(self.pairs, axis=0, return_inverse=True)
        w = np.bincount(inv.ravel(), weights=self.probs, minlength=uniq.shape[0])
        return uniq[:, :d], uniq[:, d:], w

    def marginals(self):
        return _discrete_joint_marginals(*self.joint_atoms())


@dataclass(frozen=True, eq=False)
class LocalAlternative(Coupling):
    """pi_n with d pi_n / d pi_0 = 1 + h / sqrt(n_index).

    h = cbar (d(mu0 x nu0)/d pi0 - d(nu0 x mu0)/d pi0). Use
    ``audit.local_alternative`` to build one with the nonnegativity check.
    """
    base: Coupling
    cbar: float
    n_index: int
    _cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.cbar > 0 or int(self.n_index) < 1:
            raise ValidationError("cbar must be positive and n_index >= 1")
        _check_density_base(self.base)

    @property
    def dim(self):
        return self.base.dim

    @property
    def shift(self):
        return self.cbar / math.sqrt(self.n_index)

    def h(self, pairs) -> np.ndarray:
        return perturbation(self.base, self.cbar, pairs)

    def density_bound(self):
        """Upper bound on 1 + h/sqrt(n) over the support."""
        if "bound" not in self._cache:
            ja = self.base.joint_atoms()
            if ja is not None:
                hv = perturbation(self.base, self.cbar, np.hstack(ja[:2]))
                b = float(np.max(1.0 + hv / math.sqrt(self.n_index)))
            else:
                # product base: h = cbar (1 - ratio) <= cbar
                b = 1.0 + self.shift
            self._cache["bound"] = b
        return self._cache["bound"]

    def draw(self, rng, count):
        bound = self.density_bound()
        out, have = [], 0
        batch = max(64, int(count * bound * 1.1) + 16)
        while have < count:
            cand = self.base.draw(rng, batch)
            dens = 1.0 + self.h(cand) / math.sqrt(self.n_index)
            keep = rng.random(batch) * bound < dens
            out.append(cand[keep])
            have += int(keep.sum())
        return np.vstack(out)[:count]

    def joint_atoms(self):
        ja = self.base.joint_atoms()
        if ja is None:
            return None
        xs, ys, p = ja
        hv = perturbation(self.base, self.cbar, np.hstack([xs, ys]))
        return xs, ys, p * (1.0 + hv / math.sqrt(self.n_index))

    def marginals(self):
        ja = self.joint_atoms()
        if ja is None:
            raise UnsupportedCoupling("marginals of a continuous local alternative are signed mixtures")
        return _discrete_joint_marginals(*ja)


def _has_density(dist):
    return dist.is_discrete or hasattr(dist, "log_pdf")


def _check_density_base(base):
    if isinstance(base, LocalAlternative):
        raise UnsupportedCoupling("nested local alternatives are not supported")
    if base.joint_atoms() is not None:
        mu0, nu0 = base.marginals()
        xs, ys, p = base.joint_atoms()
        support = {tuple(np.r_[x, y]) for x, y, w in zip(xs, ys, p) if w > 0}
        ma, mp = mu0.atoms_probs()
        na, npb = nu0.atoms_probs()
        mu_s = [tuple(a) for a, w in zip(ma.tolist(), mp) if w > 0]
        nu_s = [tuple(a) for a, w in zip(na.tolist(), npb) if w > 0]
        for a in mu_s:
            for b in nu_s:
                if a + b not in support or b + a not in support:
                    raise UnsupportedCoupling(
                        "mu0 x nu0 and nu0 x mu0 must be absolutely continuous w.r.t. the base")
        return
    if isinstance(base, IndependentProduct):
        if not (hasattr(base.mu, "log_pdf") and hasattr(base.nu, "log_pdf")):
            raise UnsupportedCoupling("product base needs two Lebesgue densities")
        return
    raise UnsupportedCoupling(f"{type(base).__name__} has no joint density")


def perturbation(base: Coupling, cbar: float, pairs) -> np.ndarray:
    """h(x, y) for the local-alternative construction over ``base``."""
    pairs = np.atleast_2d(pairs)
    d = base.dim
    x, y = pairs[:, :d], pairs[:, d:]
    ja = base.joint_atoms()
    if ja is not None:
        mu0, nu0 = base.marginals()
        xs, ys, p = ja
        table = {tuple(np.r_[a, b]): w for a, b, w in zip(xs, ys, p)}
        pi0 = np.array([table.get(tuple(r), 0.0) for r in pairs.tolist()])
        num = pmf(mu0, x) * pmf(nu0, y) - pmf(nu0, x) * pmf(mu0, y)
        with np.errstate(divide="ignore", invalid="ignore"):
            h = np.where(pi0 > 0, cbar * num / np.where(pi0 > 0, pi0, 1.0), 0.0)
        return h
    mu0, nu0 = base.marginals()
    # grouped so that equal marginals give exactly zero
    lr = (nu0.log_pdf(x) - mu0.log_pdf(x)) + (mu0.log_pdf(y) - nu0.log_pdf(y))
    return cbar * (1.0 - np.exp(np.minimum(lr, 700.0)))


def sample_pairs(c: Coupling, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise ValidationError("count must be at least 1")
    if isinstance(c, LocalAlternative):
        _check_density_base(c.base)
    return c.draw(substream(seed, 1), int(count))


# mechanisms -----------------------------------------------------------------

@dataclass(frozen=True)
class LaplaceIID:
    b: float

    def draw(self, rng, count, d):
        return rng.laplace(0.0, self.b, size=(count, d))


@dataclass(frozen=True)
class GaussianIso:
    sigma_mech: float

    def draw(self, rng, count, d):
        return self.sigma_mech * rng.standard_normal((count, d))


@dataclass(frozen=True, eq=False)
class Mechanism:
    """Noise-injection mechanism on one fixed adjacent pair: outputs g(u)+W, g(v)+W'."""
    u_out: np.ndarray
    v_out: np.ndarray
    noise: LaplaceIID | GaussianIso

    def __post_init__(self):
        u, v = _vec(self.u_out, "u_out"), _vec(self.v_out, "v_out")
        if u.shape != v.shape:
            raise DimensionMismatch("u_out and v_out differ in length")
        _set(self, u_out=u, v_out=v)

    @property
    def dim(self):
        return self.u_out.size


def sample_mechanism_pairs(m: Mechanism, count: int, seed: int) -> np.ndarray:
    if count < 1:
        raise ValidationError("count must be at least 1")
    rng = substream(seed, 2)
    w = m.noise.draw(rng, count, m.dim)
    w2 = m.noise.draw(rng, count, m.dim)
    return np.hstack([m.u_out + w, m.v_out + w2])


# CSV ------------------------------------------------------------------------

def read_points(path, header: bool = False, columns: int | None = None) -> np.ndarray:
    """Numeric CSV with one point per row; ``header`` skips the first row."""
    try:
        data = np.loadtxt(path, delimiter=",", skiprows=1 if header else 0, ndmin=2, dtype=np.float64)
    except (OSError, ValueError) as exc:
        raise ValidationError(f"cannot read {path}: {exc}") from exc
    if data.size == 0:
        raise ValidationError(f"{path} contains no rows")
    if not np.all(np.isfinite(data)):
        raise ValidationError(f"{path} contains non-finite values")
    if columns is not None and data.shape[1] != columns:
        raise DimensionMismatch(f"{path}: expected {columns} columns, got {data.shape[1]}")
    return data
