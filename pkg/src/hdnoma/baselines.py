"""Reference schemes: six-user SCMA, twelve-user SCMA and twelve-user PD-NOMA.

The twelve-user SCMA reuses each of the C(4,2) = 6 supports twice; the second
user on a support gets the next rotation ranks, so every subcarrier carries
d_v = 6 users and one MPA function node enumerates M**6 hypotheses.

PD-NOMA users repeat one PSK symbol on every subcarrier (unit total energy) and
are detected one at a time in descending order of total channel gain, each
time treating the not-yet-decoded users as Gaussian noise.
"""
from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .channel import ChannelState
from .mpa import Detection, MPAConfig, hypotheses_per_node, mpa_decode
from .scma_core import CodebookSet, FactorGraph, canonical_factor_graph, rotated_codebooks


@dataclass(frozen=True)
class Scma12:
    graph: FactorGraph
    books: CodebookSet

    @property
    def hypotheses(self) -> int:
        return hypotheses_per_node(self.books.M, self.graph.d_v)


def scma12_system(K: int = 4, d_f: int = 2, M: int = 4, copies: int = 2) -> Scma12:
    base = canonical_factor_graph(comb(K, d_f), K, d_f).entries
    F = np.vstack([base] * copies)
    graph = FactorGraph(F, d_f, int(F.sum(axis=0)[0]))
    return Scma12(graph, rotated_codebooks(graph, M))


def decode_scma(y, books: CodebookSet, channels, p: float, noise_var: float, mpa: MPAConfig = MPAConfig()) -> Detection:
    """Plain joint MPA over one group (the six-user and twelve-user SCMA receivers)."""
    return mpa_decode(y, books, channels, p, noise_var, mpa.iters, mpa.variant)


def stacked_channels(H: ChannelState) -> np.ndarray:
    """Strong users first, then weak users: the twelve-user ordering."""
    return np.vstack([H.strong, H.weak])


# -- PD-NOMA ---------------------------------------------------------------


def pd_noma_codewords(M: int = 4, K: int = 4) -> np.ndarray:
    """(M, K): one PSK point repeated on all subcarriers, unit energy."""
    psk = np.exp(1j * (np.pi / M + 2 * np.pi * np.arange(M) / M))
    return psk[:, None] * np.ones(K)[None, :] / np.sqrt(K)


def sic_order(gains) -> np.ndarray:
    """Users by descending total channel gain; ties keep the lower index first."""
    total = np.sum(np.abs(np.asarray(gains)) ** 2, axis=1)
    return np.argsort(-total, kind="stable")


def decode_pd_noma(y, gains, p: float, noise_var: float, codewords: np.ndarray | None = None) -> np.ndarray:
    """Hard decisions of every user by successive interference cancellation."""
    h = np.asarray(gains, dtype=complex)
    J, K = h.shape
    x = pd_noma_codewords(4, K) if codewords is None else np.asarray(codewords)
    r = np.array(y, dtype=complex)
    energy = np.mean(np.abs(x) ** 2, axis=0)  # per-subcarrier mean symbol energy
    remaining = np.ones(J, dtype=bool)
    decisions = np.zeros(J, dtype=np.int64)
    for j in sic_order(h):
        remaining[j] = False
        var = noise_var + p * np.sum(np.abs(h[remaining]) ** 2 * energy, axis=0)
        cand = np.sqrt(p) * h[j][None, :] * x  # (M, K)
        metric = np.sum(np.abs(r[None, :] - cand) ** 2 / var, axis=1)
        m = int(np.argmin(metric))
        decisions[j] = m
        r = r - cand[m]
    return decisions


# -- rates -----------------------------------------------------------------


def _norm_gains(H: ChannelState):
    n = H.noise_variance
    return np.abs(H.strong) ** 2 / n, np.abs(H.weak) ** 2 / n


def sum_rate_scma12(H: ChannelState, P: float, d_f: int = 2) -> float:
    """Gaussian sum rate of the twelve-user SCMA at equal power P/d_f."""
    gs, gw = _norm_gains(H)
    F = canonical_factor_graph(H.J_s, H.K, d_f).entries
    Fw = canonical_factor_graph(H.J_w, H.K, d_f).entries
    load = (P / d_f) * (np.sum(gs * F, axis=0) + np.sum(gw * Fw, axis=0))
    return float(np.sum(np.log2(1.0 + load)))


def sum_rate_scma6(H: ChannelState, P: float, d_f: int = 2) -> float:
    """Six strong users alone at equal power P/d_f."""
    gs, _ = _norm_gains(H)
    F = canonical_factor_graph(H.J_s, H.K, d_f).entries
    return float(np.sum(np.log2(1.0 + (P / d_f) * np.sum(gs * F, axis=0))))


def sum_rate_pd_noma(H: ChannelState, P: float) -> float:
    """All users on all subcarriers at P/K each, SIC-achievable sum rate."""
    gs, gw = _norm_gains(H)
    load = (P / H.K) * (gs.sum(axis=0) + gw.sum(axis=0))
    return float(np.sum(np.log2(1.0 + load)))
