"""Exhaustive reference optimum: every feasible pair of binary graphs times a power grid."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from .channel import ChannelState
from .optimizer import OptimizerConfig, _degrees, _gains, default_qos
from .scma_core import FactorGraph

DEFAULT_BUDGET = 10**6


class BudgetExceeded(RuntimeError):
    pass


def _check_budget(J: int, K: int, d_f: int, budget: int) -> int:
    bound = math.comb(K, d_f) ** J
    if bound > budget:
        raise BudgetExceeded(f"C({K},{d_f})^{J} = {bound} row-choice tuples exceed budget {budget}")
    return bound


def enumerate_feasible_F(J: int, K: int, d_f: int, d_v: int, budget: int = DEFAULT_BUDGET) -> Iterator[FactorGraph]:
    """Every J x K binary matrix with row sums d_f and column sums d_v, once each.

    Rows pick supports in lexicographic order, depth first, pruning any column
    that already exceeds d_v.
    """
    _check_budget(J, K, d_f, budget)
    if J * d_f != K * d_v or d_f > K:
        return
    rows = [np.isin(np.arange(K), s).astype(np.int8) for s in itertools.combinations(range(K), d_f)]
    cols = np.zeros(K, dtype=int)
    chosen: list[np.ndarray] = []

    def walk(j):
        if j == J:
            if np.all(cols == d_v):
                yield FactorGraph(np.array(chosen), d_f, d_v)
            return
        remaining = J - j - 1
        for r in rows:
            cols[:] += r
            # every column must still be able to reach d_v with the rows left
            if np.all(cols <= d_v) and np.all(d_v - cols <= remaining):
                chosen.append(r)
                yield from walk(j + 1)
                chosen.pop()
            cols[:] -= r

    yield from walk(0)


def count_by_filtering(J: int, K: int, d_f: int, d_v: int, budget: int = DEFAULT_BUDGET) -> int:
    """Independent count: test every row-choice tuple for the column sums."""
    _check_budget(J, K, d_f, budget)
    supports = list(itertools.combinations(range(K), d_f))
    count = 0
    for combo in itertools.product(supports, repeat=J):
        cols = [0] * K
        for s in combo:
            for k in s:
                cols[k] += 1
        count += all(c == d_v for c in cols)
    return count


@dataclass(frozen=True)
class OracleResult:
    p_s: float
    p_w: float
    F_s: FactorGraph
    F_w: FactorGraph
    objective: float
    weak_rate: float
    pairs: int


def _graph_list(J, K, d_f, budget):
    d_v = _degrees(J, K, d_f)
    graphs = list(enumerate_feasible_F(J, K, d_f, d_v, budget))
    if not graphs:
        raise ValueError(f"no feasible graph for J={J}, K={K}, d_f={d_f}")
    return graphs


def _setup(H, cfg, p_grid_size, budget):
    if p_grid_size < 2:
        raise ValueError("p_grid_size must be at least 2")
    gs, gw = _gains(H)
    Gs = _graph_list(H.J_s, H.K, cfg.d_f_strong, budget)
    Gw = _graph_list(H.J_w, H.K, cfg.d_f_weak, budget)
    S = np.stack([np.sum(gs * g.entries, axis=0) for g in Gs])  # (A, K)
    W = np.stack([np.sum(gw * g.entries, axis=0) for g in Gw])  # (B, K)
    ps_grid = np.linspace(0.0, cfg.max_power / cfg.d_f_strong, p_grid_size)
    pw_grid = np.linspace(0.0, cfg.max_power / cfg.d_f_weak, p_grid_size)
    qos = default_qos(H, cfg)
    # weak rate of every weak graph at every grid power, (B, G)
    weak = np.sum(np.log2(1.0 + pw_grid[None, :, None] * W[:, None, :]), axis=2)
    return Gs, Gw, S, W, ps_grid, pw_grid, qos, weak


def exhaustive_best(
    H: ChannelState,
    cfg: OptimizerConfig = OptimizerConfig(),
    p_grid_size: int = 200,
    budget: int = DEFAULT_BUDGET,
    chunk: int = 256,
) -> OracleResult:
    """Maximize SR^s over all feasible (F_s, F_w) and a square power grid, subject to QoS.

    SR^s grows with p_s and falls with p_w, so for each weak graph only the
    largest p_s and the smallest QoS-feasible p_w need evaluating.
    """
    Gs, Gw, S, W, ps_grid, pw_grid, qos, weak = _setup(H, cfg, p_grid_size, budget)
    ok = weak >= qos
    has = ok.any(axis=1)
    if not has.any():
        raise ValueError("QoS threshold unattainable on the power grid")
    first = np.argmax(ok, axis=1)
    p_s = ps_grid[-1]
    pw_b = pw_grid[first]
    interf = 1.0 + pw_b[:, None] * W  # (B, K)
    best = (-np.inf, -1, -1)
    for start in range(0, S.shape[0], chunk):
        blk = S[start:start + chunk]
        val = np.sum(np.log2(1.0 + p_s * blk[:, None, :] / interf[None, :, :]), axis=2)  # (a, B)
        val[:, ~has] = -np.inf
        idx = int(np.argmax(val))
        a, b = divmod(idx, val.shape[1])
        if val[a, b] > best[0]:
            best = (float(val[a, b]), start + a, b)
    value, a, b = best
    return OracleResult(float(p_s), float(pw_b[b]), Gs[a], Gw[b], value, float(weak[b, first[b]]), len(Gs) * len(Gw))


def exhaustive_best_bruteforce(
    H: ChannelState, cfg: OptimizerConfig = OptimizerConfig(), p_grid_size: int = 50, budget: int = 10**4
) -> OracleResult:
    """Plain search over every graph pair and every grid point; for small instances."""
    Gs, Gw, S, W, ps_grid, pw_grid, qos, weak = _setup(H, cfg, p_grid_size, budget)
    best = (-np.inf, None)
    for a in range(len(Gs)):
        for b in range(len(Gw)):
            val = np.sum(
                np.log2(1.0 + ps_grid[:, None, None] * S[a] / (1.0 + pw_grid[None, :, None] * W[b])), axis=2
            )  # (Gs, Gw)
            val[:, weak[b] < qos] = -np.inf
            i, j = divmod(int(np.argmax(val)), val.shape[1])
            if val[i, j] > best[0]:
                best = (float(val[i, j]), (a, b, i, j))
    if best[1] is None or not np.isfinite(best[0]):
        raise ValueError("QoS threshold unattainable on the power grid")
    a, b, i, j = best[1]
    return OracleResult(float(ps_grid[i]), float(pw_grid[j]), Gs[a], Gw[b], best[0], float(weak[b, j]), len(Gs) * len(Gw))
