import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wamsplan import kernels
from wamsplan.simplex import simplex_solve, warm_solve

from test_simplex import random_lp


def test_env_flag_forces_numpy_path():
    code = "from wamsplan import _accel, kernels; print(_accel.backend_name(), kernels.pivot.__name__)"
    env = dict(os.environ, WAMSPLAN_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.split() == ["numpy", "pivot_numpy"]


def test_default_path_uses_numba_when_installed():
    pytest.importorskip("numba")
    code = "from wamsplan import _accel; print(_accel.backend_name())"
    env = {k: v for k, v in os.environ.items() if k != "WAMSPLAN_DISABLE_NUMBA"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "numba"


@settings(max_examples=40, deadline=None)
@given(st.integers(2, 8), st.integers(2, 8), st.randoms(use_true_random=False))
def test_pivot_kernels_agree(m, n, rnd):
    rng = np.random.default_rng(rnd.randrange(2 ** 32))
    T = rng.normal(size=(m, n))
    row, col = rnd.randrange(m), rnd.randrange(n)
    T[row, col] = 1.0 + abs(T[row, col])
    a, b = T.copy(), T.copy()
    kernels.pivot_numpy(a, row, col)
    kernels.pivot_numba(b, row, col)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-12)
    assert a[row, col] == 1.0 and not np.delete(a[:, col], row).any()


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 8), st.integers(1, 6), st.integers(1, 12), st.randoms(use_true_random=False))
def test_observed_states_kernels_agree(n, n_branches, n_states, rnd):
    rng = np.random.default_rng(rnd.randrange(2 ** 32))
    self_obs = rng.random(n) < 0.3
    k = rnd.randrange(0, 3 * n)
    dst = rng.integers(0, n, size=k).astype(np.int64)
    brs = rng.integers(0, n_branches, size=k).astype(np.int64)
    outages = rng.random((n_states, n_branches)) < 0.3
    a = np.asarray(kernels.observed_states_numpy(self_obs, dst, brs, outages), dtype=bool)
    b = np.asarray(kernels.observed_states_numba(self_obs, dst, brs, outages), dtype=bool)
    assert np.array_equal(a, b)


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_primal_iterations_agree(rnd):
    lp = random_lp(rnd)
    a = simplex_solve(*lp, iterate=kernels.simplex_iterate_numpy)
    b = simplex_solve(*lp, iterate=kernels.simplex_iterate_numba)
    assert a.status == b.status
    if a.status == "optimal":
        assert a.value == pytest.approx(b.value, rel=1e-9, abs=1e-9)


@settings(max_examples=30, deadline=None)
@given(st.randoms(use_true_random=False))
def test_dual_iterations_agree(rnd):
    lp = random_lp(rnd)
    root = simplex_solve(*lp, keep_state=True)
    if root.status != "optimal" or root.state is None:
        return
    j = rnd.randrange(len(lp[0]))
    fix = [(j, float(rnd.random() < 0.5))]
    a = warm_solve(root.state, fix, iterate=kernels.dual_iterate_numpy)
    b = warm_solve(root.state, fix, iterate=kernels.dual_iterate_numba)
    assert a.status == b.status
    if a.status == "optimal":
        assert a.value == pytest.approx(b.value, rel=1e-9, abs=1e-9)
