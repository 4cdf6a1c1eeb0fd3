import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from smoothdiv import _kernels
from oracles import mixture_logpdf_loop


def _case(rng, m, k, d):
    return rng.normal(size=(m, d)) * 3, rng.normal(size=(k, d)), rng.dirichlet(np.ones(k))


@pytest.mark.parametrize("d", [1, 2, 3])
def test_numpy_path_matches_loop_oracle(d):
    x, c, w = _case(np.random.default_rng(d), 200, 17, d)
    got = _kernels.mixture_logpdf_numpy(x, c, np.log(w), 0.7)
    assert_allclose(got, mixture_logpdf_loop(x, c, w, 0.7), rtol=1e-12, atol=1e-12)


@pytest.mark.skipif(not _kernels.HAS_NUMBA, reason="numba missing")
@pytest.mark.parametrize("d", [1, 2, 4])
def test_numba_matches_numpy(d):
    x, c, w = _case(np.random.default_rng(10 + d), 300, 40, d)
    a = _kernels.mixture_logpdf_numpy(x, c, np.log(w), 0.3)
    b = _kernels.mixture_logpdf_numba(x, c, np.log(w), 0.3)
    assert_allclose(a, b, rtol=1e-12, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(st.floats(-50, 50), st.floats(0.05, 5.0))
def test_far_tail_stays_finite(shift, bw):
    c = np.array([[0.0], [1.0]])
    lw = np.log([0.5, 0.5])
    v = _kernels.mixture_logpdf(np.array([[shift * 40]]), c, lw, bw)
    assert np.isfinite(v).all()


def test_env_flag_disables_numba():
    code = "from smoothdiv import _kernels; print(_kernels.backend())"
    for flag, expect in (("1", "numpy"), ("true", "numpy")):
        env = dict(os.environ, SMOOTHDIV_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
        assert out.stdout.strip() == expect
    env = dict(os.environ, SMOOTHDIV_DISABLE_NUMBA="0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True)
    assert out.stdout.strip() == ("numba" if _kernels.HAS_NUMBA else "numpy")
