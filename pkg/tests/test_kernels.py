"""The numba kernels and their numpy twins must agree."""
import os
import subprocess
import sys

import numpy as np
import pytest

from hdnoma import kernels
from hdnoma._jit import HAVE_NUMBA
from hdnoma.channel import complex_gaussian
from hdnoma.convex import ConvexProblem, solve_convex_subproblem
from hdnoma.mpa import function_node_users, mpa_loglik
from hdnoma.scma_core import canonical_factor_graph, default_codebook, rotated_codebooks

pytestmark = pytest.mark.skipif(not HAVE_NUMBA, reason="numba not installed")


def _case(rng, books, noise):
    h = complex_gaussian(rng, (books.J, books.K))
    w = rng.integers(0, books.M, books.J)
    y = np.sum(h * books.codewords[np.arange(books.J), w], axis=0) + complex_gaussian(rng, books.K, noise)
    return y, h


@pytest.mark.parametrize("maxlog", [False, True])
@pytest.mark.parametrize("d_v", [3, 6])
def test_mpa_paths_agree(rng, maxlog, d_v):
    if d_v == 3:
        books = default_codebook()
    else:
        base = canonical_factor_graph(6, 4, 2).entries
        books = rotated_codebooks(np.vstack([base, base]), 4)
    fn = function_node_users(books.support_matrix)
    combos = kernels.hypothesis_table(books.M, fn.shape[1])
    for _ in range(5):
        y, h = _case(rng, books, 0.3)
        L, _ = mpa_loglik(y, books, h, 1.0, 0.3, fn)
        x = np.transpose(books.codewords, (0, 2, 1))
        kk = np.arange(books.K)[:, None]
        contrib = np.ascontiguousarray(h[fn, kk][..., None] * x[fn, kk])
        noise = np.full(books.K, 0.3)
        L1 = kernels.loglik(y, contrib, noise, combos, use_jit=True)
        L0 = kernels.loglik(y, contrib, noise, combos, use_jit=False)
        assert np.allclose(L0, L1, rtol=1e-12, atol=1e-9)
        m1 = kernels.mpa_messages(L, fn, combos, books.J, books.M, 6, maxlog, use_jit=True)
        m0 = kernels.mpa_messages(L, fn, combos, books.J, books.M, 6, maxlog, use_jit=False)
        assert np.allclose(m0, m1, atol=1e-9)


def test_barrier_paths_agree():
    rng = np.random.default_rng(4)
    for _ in range(5):
        n = 4
        B = rng.uniform(0.1, 2.0, (3, n))
        prob = ConvexProblem(n + 1).maximize(np.r_[rng.uniform(-0.1, 0.1, n), 1.0])
        prob.bounds(lower=[0.0] * n + [None], upper=[1.0] * n + [None])
        prob.le(np.r_[np.ones(n), 0.0], 2.5)
        prob.logsum(np.column_stack([B, np.zeros(3)]), np.ones(3), d=np.r_[np.zeros(n), -1.0])
        x0 = np.r_[np.full(n, 0.3), -1.0]
        a = solve_convex_subproblem(prob, x0, use_jit=True)
        b = solve_convex_subproblem(prob, x0, use_jit=False)
        assert a.status == b.status == "optimal"
        assert np.allclose(a.x, b.x, atol=1e-8)


def test_env_switch_selects_numpy():
    code = "import hdnoma._jit as j; print(j.DISABLE_JIT)"
    env = dict(os.environ, HDNOMA_DISABLE_JIT="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"
    env["HDNOMA_DISABLE_JIT"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
