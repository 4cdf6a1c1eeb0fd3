"""Hot kernels: Gaussian-mixture log-density by log-sum-exp.

The numba path is used when numba imports and ``SMOOTHDIV_DISABLE_NUMBA`` is
unset (or "0"). Otherwise a chunked pure-numpy path runs. Both compute

    log sum_j exp(log_w[j] - |x - c_j|^2 / (2 bw^2)) - (d/2) log(2 pi bw^2)
"""
import math
import os

import numpy as np

try:
    import numba
    HAS_NUMBA = True
except ImportError:  # pragma: no cover
    numba = None
    HAS_NUMBA = False

_flag = os.environ.get("SMOOTHDIV_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag not in ("", "0", "false", "no")
USE_NUMBA = HAS_NUMBA and not NUMBA_DISABLED

# cap on the (rows x components) scratch block of the numpy path
_BLOCK_ELEMS = 1 << 22


def mixture_logpdf_numpy(x, centers, log_w, bw):
    x = np.asarray(x, dtype=np.float64)
    centers = np.asarray(centers, dtype=np.float64)
    log_w = np.asarray(log_w, dtype=np.float64)
    m, d = x.shape
    k = centers.shape[0]
    out = np.empty(m)
    inv = 1.0 / (2.0 * bw * bw)
    rows = max(1, _BLOCK_ELEMS // max(k * d, 1))
    for s in range(0, m, rows):
        diff = x[s:s + rows, None, :] - centers[None, :, :]
        a = log_w[None, :] - np.einsum("ijk,ijk->ij", diff, diff) * inv
        amax = a.max(axis=1)
        out[s:s + rows] = amax + np.log(np.exp(a - amax[:, None]).sum(axis=1))
    out -= 0.5 * d * math.log(2.0 * math.pi * bw * bw)
    return out


if HAS_NUMBA:

    @numba.njit(cache=True, nogil=True)
    def _mixture_logpdf_nb(x, centers, log_w, bw):
        m, d = x.shape
        k = centers.shape[0]
        out = np.empty(m)
        buf = np.empty(k)
        inv = 1.0 / (2.0 * bw * bw)
        norm = 0.5 * d * math.log(2.0 * math.pi * bw * bw)
        for i in range(m):
            amax = -np.inf
            for j in range(k):
                sq = 0.0
                for t in range(d):
                    diff = x[i, t] - centers[j, t]
                    sq += diff * diff
                a = log_w[j] - sq * inv
                buf[j] = a
                if a > amax:
                    amax = a
            acc = 0.0
            for j in range(k):
                acc += math.exp(buf[j] - amax)
            out[i] = amax + math.log(acc) - norm
        return out


def mixture_logpdf_numba(x, centers, log_w, bw):
    if not HAS_NUMBA:  # pragma: no cover
        raise RuntimeError("numba is not installed")
    return _mixture_logpdf_nb(np.ascontiguousarray(x, dtype=np.float64),
                              np.ascontiguousarray(centers, dtype=np.float64),
                              np.ascontiguousarray(log_w, dtype=np.float64),
                              float(bw))


def mixture_logpdf(x, centers, log_w, bw):
    """Log density of sum_j w_j N(c_j, bw^2 I) at the rows of ``x``."""
    if USE_NUMBA:
        return mixture_logpdf_numba(x, centers, log_w, bw)
    return mixture_logpdf_numpy(x, centers, log_w, bw)


def backend():
    return "numba" if USE_NUMBA else "numpy"
