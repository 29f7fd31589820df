"""Sum rates of the two user groups and their difference-of-concave splits.

All rates are in bits/s/Hz summed over subcarriers.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .channel import ChannelState
from .scma_core import FactorGraph, RelaxedFactorGraph

LN2 = np.log(2.0)

GraphLike = Union[FactorGraph, RelaxedFactorGraph, np.ndarray]


def entries(F: GraphLike) -> np.ndarray:
    if isinstance(F, (FactorGraph, RelaxedFactorGraph)):
        return np.asarray(F.entries, dtype=float)
    return np.asarray(F, dtype=float)


@dataclass(frozen=True)
class Allocation:
    p_s: float
    p_w: float
    F_s: GraphLike
    F_w: GraphLike

    def __post_init__(self):
        if self.p_s < 0 or self.p_w < 0:
            raise ValueError("powers must be nonnegative")

    def with_powers(self, p_s: float, p_w: float) -> "Allocation":
        return Allocation(p_s, p_w, self.F_s, self.F_w)

    def with_graphs(self, F_s: GraphLike, F_w: GraphLike) -> "Allocation":
        return Allocation(self.p_s, self.p_w, F_s, F_w)


def sum_rate_scma(p: float, F: GraphLike, H, noise_var: float) -> float:
    """Gaussian sum rate of one SCMA group with common per-subcarrier power ``p``."""
    if p < 0:
        raise ValueError("power must be nonnegative")
    load = np.sum(p * np.abs(np.asarray(H)) ** 2 * entries(F), axis=0)
    return float(np.sum(np.log2(1.0 + load / noise_var)))


def loads(alloc: Allocation, H: ChannelState) -> tuple[np.ndarray, np.ndarray]:
    """Received strong and weak power per subcarrier, shapes (K,)."""
    s = alloc.p_s * np.sum(np.abs(H.strong) ** 2 * entries(alloc.F_s), axis=0)
    w = alloc.p_w * np.sum(np.abs(H.weak) ** 2 * entries(alloc.F_w), axis=0)
    return s, w


def sum_rate_strong(alloc: Allocation, H: ChannelState) -> float:
    s, w = loads(alloc, H)
    return float(np.sum(np.log2(1.0 + s / (w + H.noise_variance))))


def sum_rate_weak(alloc: Allocation, H: ChannelState) -> float:
    _, w = loads(alloc, H)
    return float(np.sum(np.log2(1.0 + w / H.noise_variance)))


def sum_rate_total(alloc: Allocation, H: ChannelState) -> float:
    return sum_rate_strong(alloc, H) + sum_rate_weak(alloc, H)


def _group_gains(alloc: Allocation, H: ChannelState):
    gs = np.sum(np.abs(H.strong) ** 2 * entries(alloc.F_s), axis=0)
    gw = np.sum(np.abs(H.weak) ** 2 * entries(alloc.F_w), axis=0)
    return gs, gw


def dc_parts_p(p, alloc: Allocation, H: ChannelState):
    """(u1, v1, grad v1) of the power split SR^s = u1 - v1 at ``p = (p_s, p_w)``."""
    p_s, p_w = (float(v) for v in p)
    if p_s < 0 or p_w < 0:
        raise ValueError("powers must be nonnegative")
    gs, gw = _group_gains(alloc, H)
    n = H.noise_variance
    u1 = float(np.sum(np.log2(gs * p_s + gw * p_w + n)))
    v1 = float(np.sum(np.log2(gw * p_w + n)))
    grad = np.array([0.0, float(np.sum(gw / (LN2 * (gw * p_w + n))))])
    return u1, v1, grad


def dc_parts_F(F, alloc: Allocation, H: ChannelState):
    """(u2, v2, (grad_s, grad_w)) of the graph split SR^s = u2 - v2 at ``F = (F_s, F_w)``."""
    fs, fw = (entries(f) for f in F)
    if fs.min(initial=0) < 0 or fs.max(initial=0) > 1 or fw.min(initial=0) < 0 or fw.max(initial=0) > 1:
        raise ValueError("relaxed entries must lie in [0, 1]")
    a = alloc.p_s * np.abs(H.strong) ** 2
    b = alloc.p_w * np.abs(H.weak) ** 2
    n = H.noise_variance
    w = np.sum(b * fw, axis=0)
    u2 = float(np.sum(np.log2(np.sum(a * fs, axis=0) + w + n)))
    v2 = float(np.sum(np.log2(w + n)))
    grad_w = b / (LN2 * (w + n))[None, :]
    return u2, v2, (np.zeros_like(fs), grad_w)
