"""Numba kernels versus their numpy twins on the two hot paths.

MPA detection (likelihood table plus message passing) runs once per group per
Monte Carlo trial, and the barrier Newton loop runs inside every SCA pass of
the optimizer. Both paths are timed in one process through ``use_jit``; the
``HDNOMA_DISABLE_JIT=1`` switch selects the numpy path for library calls.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import time

import numpy as np

from hdnoma import kernels
from hdnoma._jit import HAVE_NUMBA
from hdnoma.baselines import scma12_system
from hdnoma.channel import LinkBudget, complex_gaussian, dbm_to_w, draw_channel
from hdnoma.convex import solve_convex_subproblem
from hdnoma.mpa import _combos, function_node_users
from hdnoma.optimizer import OptimizerConfig, update_weights
from hdnoma.scma_core import canonical_factor_graph, default_codebook


def mpa_case(books, rng):
    fn = function_node_users(books.support_matrix)
    combos = _combos(books.M, fn.shape[1])
    h = complex_gaussian(rng, (books.J, books.K))
    w = rng.integers(0, books.M, books.J)
    y = np.sum(h * books.codewords[np.arange(books.J), w], axis=0) + complex_gaussian(rng, books.K, 0.2)
    x = np.transpose(books.codewords, (0, 2, 1))
    kk = np.arange(books.K)[:, None]
    contrib = np.ascontiguousarray(h[fn, kk][..., None] * x[fn, kk])
    return y, contrib, np.full(books.K, 0.2), combos, fn


def run_mpa(case, J, M, jit):
    y, contrib, noise, combos, fn = case
    L = kernels.loglik(y, contrib, noise, combos, use_jit=jit)
    return kernels.mpa_messages(L, fn, combos, J, M, 6, False, use_jit=jit)


def graph_problem():
    """One graph-block convex program at the default 6+6 user size (49 variables)."""
    from hdnoma import optimizer

    P = float(dbm_to_w(40.0))
    H = draw_channel(np.random.default_rng(1), LinkBudget(max_power_w=P), 6, 6, 4)
    C = canonical_factor_graph(6, 4, 2).entries.astype(float)
    cfg = OptimizerConfig(max_power=P, max_inner_iters=1)
    captured = {}
    original = optimizer._solve

    def spy(prob, x0):
        captured.setdefault("args", (prob, np.array(x0)))
        return original(prob, x0)

    optimizer._solve = spy
    try:
        optimizer.solve_F_subproblem((0.45 * P, 0.25 * P), (C, C), update_weights((C, C), 1e-3), H, cfg)
    finally:
        optimizer._solve = original
    return captured["args"]


def timeit(fn, repeat):
    fn()  # warm-up (includes JIT compilation on the first numba call)
    best = np.inf
    for _ in range(3):
        t = time.perf_counter()
        for _ in range(repeat):
            fn()
        best = min(best, (time.perf_counter() - t) / repeat)
    return best


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=200)
    args = ap.parse_args()
    if not HAVE_NUMBA:
        print("numba not installed: only the numpy path is available")
        return
    rng = np.random.default_rng(0)
    rows = []
    for label, books in (("MPA 6 users, d_v=3", default_codebook()), ("MPA 12 users, d_v=6", scma12_system().books)):
        case = mpa_case(books, rng)
        n = args.repeat if books.J == 6 else max(1, args.repeat // 20)
        t_jit = timeit(lambda: run_mpa(case, books.J, books.M, True), n)
        t_np = timeit(lambda: run_mpa(case, books.J, books.M, False), n)
        rows.append((label, t_jit, t_np))
    prob, x0 = graph_problem()
    n = max(1, args.repeat // 20)
    t_jit = timeit(lambda: solve_convex_subproblem(prob, x0, use_jit=True), n)
    t_np = timeit(lambda: solve_convex_subproblem(prob, x0, use_jit=False), n)
    rows.append(("barrier Newton, 49-variable graph block", t_jit, t_np))
    print(f"{'kernel':42s} {'numba':>12s} {'numpy':>12s} {'speedup':>8s}")
    for label, a, b in rows:
        print(f"{label:42s} {a * 1e6:10.1f}us {b * 1e6:10.1f}us {b / a:7.1f}x")


if __name__ == "__main__":
    main()
