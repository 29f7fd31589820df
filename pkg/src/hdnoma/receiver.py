"""Two-stage hybrid-domain receiver: strong-group MPA, hard SIC, weak-group MPA."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .channel import ChannelState
from .mpa import Detection, MPAConfig, effective_noise_for_strong, mpa_decode
from .scma_core import CodebookSet, FactorGraph


@dataclass(frozen=True)
class HDDecision:
    strong: Detection
    weak: Detection | None

    @property
    def decisions(self) -> np.ndarray:
        if self.weak is None:
            return self.strong.decisions
        return np.concatenate([self.strong.decisions, self.weak.decisions])


def sic_subtract(y, strong_codewords, strong_channels, p_s) -> np.ndarray:
    """Remove the reconstructed strong-group signal from ``y``."""
    y = np.asarray(y, dtype=complex)
    x = np.asarray(strong_codewords, dtype=complex)
    h = np.asarray(strong_channels, dtype=complex)
    if x.shape != h.shape or x.shape[-1] != y.shape[0]:
        raise ValueError(f"shape mismatch: y {y.shape}, codewords {x.shape}, channels {h.shape}")
    return y - np.sqrt(p_s) * np.sum(h * x, axis=0)


def _check_graph(books: CodebookSet, F: FactorGraph | None, label: str):
    if F is not None and not np.array_equal(np.asarray(F.entries), books.support_matrix):
        raise ValueError(f"{label} codebook supports do not match the given factor graph")


def decode_hd(
    y,
    channels: ChannelState,
    books_s: CodebookSet,
    books_w: CodebookSet | None,
    p_s: float,
    p_w: float,
    F_s: FactorGraph | None = None,
    F_w: FactorGraph | None = None,
    mpa: MPAConfig = MPAConfig(),
    genie_strong=None,
    inflate_noise: bool = True,
) -> HDDecision:
    """Decode strong users treating the weak group as Gaussian noise, then the weak group.

    ``genie_strong`` (J_s, K) replaces the stage-1 decisions in the SIC step.
    ``inflate_noise=False`` ignores the weak interference in stage 1 (for comparisons).
    """
    _check_graph(books_s, F_s, "strong")
    sigma2 = channels.noise_variance
    has_weak = books_w is not None and channels.J_w > 0
    if has_weak:
        _check_graph(books_w, F_w, "weak")
    if has_weak and inflate_noise and p_w > 0:
        noise_s = effective_noise_for_strong(
            sigma2, channels.weak, p_w, books_w.support_matrix, books_w.subcarrier_energy()
        )
    else:
        noise_s = sigma2
    strong = mpa_decode(y, books_s, channels.strong, p_s, noise_s, mpa.iters, mpa.variant)
    if not has_weak:
        return HDDecision(strong, None)
    if genie_strong is None:
        x_hat = books_s.codewords[np.arange(books_s.J), strong.decisions]
    else:
        x_hat = np.asarray(genie_strong)
    y_sic = sic_subtract(y, x_hat, channels.strong, p_s)
    weak = mpa_decode(y_sic, books_w, channels.weak, p_w, sigma2, mpa.iters, mpa.variant)
    return HDDecision(strong, weak)
