"""SCMA multi-user detection: log-domain MPA and an exhaustive MAP reference."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from . import kernels
from .scma_core import CodebookSet, FactorGraph

MAP_BUDGET = 4**6


@dataclass(frozen=True)
class MPAConfig:
    iters: int = 6
    variant: str = "sumprod"  # or "maxlog"

    def __post_init__(self):
        if self.iters < 1:
            raise ValueError("MPA needs at least one iteration")
        if self.variant not in ("sumprod", "maxlog"):
            raise ValueError(f"unknown MPA variant {self.variant!r}")


@dataclass(frozen=True)
class MarginalTable:
    """Per-user posterior probabilities over the M codewords, shape (J, M)."""

    probs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        if np.any(p < 0) or np.any(np.abs(p.sum(axis=1) - 1.0) > 1e-9):
            raise ValueError("marginals must be nonnegative and sum to one per user")

    @property
    def decisions(self) -> np.ndarray:
        return np.argmax(self.probs, axis=1)

    def tv_distance(self, other: "MarginalTable") -> float:
        return float(np.max(0.5 * np.abs(self.probs - other.probs).sum(axis=1)))


@dataclass(frozen=True)
class Detection:
    marginals: MarginalTable
    decisions: np.ndarray


@lru_cache(maxsize=None)
def _combos(M: int, d_v: int) -> np.ndarray:
    table = kernels.hypothesis_table(M, d_v)
    table.setflags(write=False)
    return table


def hypotheses_per_node(M: int, d_v: int) -> int:
    return _combos(M, d_v).shape[0]


def function_node_users(support: np.ndarray) -> np.ndarray:
    """(K, d_v) user indices per subcarrier; the graph must be column-regular."""
    support = np.asarray(support)
    cols = support.sum(axis=0)
    if cols.size == 0 or np.any(cols != cols[0]) or cols[0] < 1:
        raise ValueError(f"MPA needs a column-regular factor graph, got column degrees {cols.tolist()}")
    return np.ascontiguousarray(
        np.stack([np.flatnonzero(support[:, k]) for k in range(support.shape[1])]), dtype=np.int64
    )


def _noise_vector(noise_var, K: int) -> np.ndarray:
    nv = np.broadcast_to(np.asarray(noise_var, dtype=float), (K,)).copy()
    if np.any(nv <= 0) or not np.all(np.isfinite(nv)):
        raise ValueError("noise variance must be positive and finite")
    return nv


def _check(y, codebooks: CodebookSet, channels):
    y = np.asarray(y, dtype=complex)
    h = np.asarray(channels, dtype=complex)
    if y.shape != (codebooks.K,) or h.shape != (codebooks.J, codebooks.K):
        raise ValueError(
            f"dimension mismatch: y {y.shape}, channels {h.shape}, codebooks J={codebooks.J} K={codebooks.K}"
        )
    return y, h


def mpa_loglik(y, codebooks: CodebookSet, channels, p, noise_var, fn_users=None):
    y, h = _check(y, codebooks, channels)
    if fn_users is None:
        fn_users = function_node_users(codebooks.support_matrix)
    K = codebooks.K
    x = codebooks.codewords  # (J, M, K)
    kk = np.arange(K)[:, None]
    # contrib[k, s, m] = sqrt(p) h[u, k] x[u, m, k] with u = fn_users[k, s]
    contrib = np.sqrt(p) * (h[fn_users, kk][..., None] * np.transpose(x, (0, 2, 1))[fn_users, kk])
    combos = _combos(codebooks.M, fn_users.shape[1])
    return kernels.loglik(y, np.ascontiguousarray(contrib), _noise_vector(noise_var, K), combos), fn_users


def mpa_from_loglik(L, fn_users, J, M, iters=6, variant="sumprod") -> Detection:
    combos = _combos(M, fn_users.shape[1])
    logm = kernels.mpa_messages(np.ascontiguousarray(L), fn_users, combos, J, M, iters, variant == "maxlog")
    probs = np.exp(logm)
    probs /= probs.sum(axis=1, keepdims=True)
    table = MarginalTable(probs)
    return Detection(table, np.argmax(logm, axis=1))


def mpa_decode(y, codebooks: CodebookSet, channels, p, noise_var, iters: int = 6, variant: str = "sumprod") -> Detection:
    """Detect all users of one factor graph by iterative message passing.

    ``noise_var`` is a scalar or a per-subcarrier vector.
    """
    MPAConfig(iters, variant)
    L, fn_users = mpa_loglik(y, codebooks, channels, p, noise_var)
    return mpa_from_loglik(L, fn_users, codebooks.J, codebooks.M, iters, variant)


def map_oracle_decode(y, codebooks: CodebookSet, channels, p, noise_var, budget: int = MAP_BUDGET) -> Detection:
    """Exact per-user posteriors by enumerating every joint codeword tuple."""
    y, h = _check(y, codebooks, channels)
    J, M, K = codebooks.J, codebooks.M, codebooks.K
    if M**J > budget:
        raise ValueError(f"enumeration of {M}^{J} = {M**J} tuples exceeds budget {budget}")
    nv = _noise_vector(noise_var, K)
    rx = np.sqrt(p) * h[:, None, :] * codebooks.codewords  # (J, M, K)
    grid = np.indices((M,) * J).reshape(J, -1).T  # (M^J, J)
    yhat = np.zeros((grid.shape[0], K), dtype=complex)
    for j in range(J):
        yhat += rx[j][grid[:, j]]
    ll = -np.sum(np.abs(y - yhat) ** 2 / nv, axis=1)
    w = np.exp(ll - ll.max())
    w /= w.sum()
    probs = np.zeros((J, M))
    for j in range(J):
        probs[j] = np.bincount(grid[:, j], weights=w, minlength=M)
    probs /= probs.sum(axis=1, keepdims=True)
    return Detection(MarginalTable(probs), np.argmax(probs, axis=1))


def effective_noise_for_strong(noise_var, weak_channels, p_w, F_w, symbol_energy=None) -> np.ndarray:
    """Per-subcarrier noise-plus-weak-interference variance for strong-group detection.

    ``F_w`` is a FactorGraph or an indicator matrix. ``symbol_energy`` (J_w, K)
    optionally replaces the indicator by the mean codeword energy per entry.
    """
    f = np.asarray(F_w.entries if isinstance(F_w, FactorGraph) else F_w, dtype=float)
    g = np.abs(np.asarray(weak_channels)) ** 2
    if symbol_energy is not None:
        f = f * np.asarray(symbol_energy, dtype=float)
    if g.size == 0:
        return np.full(f.shape[-1] if f.ndim == 2 else np.shape(weak_channels)[-1], float(noise_var))
    return noise_var + p_w * np.sum(g * f, axis=0)
