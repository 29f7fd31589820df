"""Path loss, Rayleigh fading, thermal noise and the uplink superposition."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

PL_INTERCEPT_DB = 145.4
PL_SLOPE_DB = 37.5
NOISE_FLOOR_DBW_HZ = -204.0


def path_loss_db(d_km: float) -> float:
    if not d_km > 0:
        raise ValueError(f"distance must be positive, got {d_km}")
    return PL_INTERCEPT_DB + PL_SLOPE_DB * np.log10(d_km)


def noise_variance_w(bw_hz: float, K: int) -> float:
    """Per-subcarrier noise power in watts (the -204 constant is read as dBW/Hz)."""
    if not bw_hz > 0 or K < 1:
        raise ValueError(f"need bw > 0 and K >= 1, got bw={bw_hz}, K={K}")
    return 10.0 ** ((NOISE_FLOOR_DBW_HZ + 10.0 * np.log10(bw_hz / K)) / 10.0)


def dbm_to_w(dbm):
    return 10.0 ** ((np.asarray(dbm, dtype=float) - 30.0) / 10.0)


def w_to_dbm(w):
    return 10.0 * np.log10(np.asarray(w, dtype=float)) + 30.0


@dataclass(frozen=True)
class LinkBudget:
    bandwidth_hz: float = 1e6
    d_strong_km: float = 0.3
    d_weak_km: float = 0.8
    max_power_w: float = 1.0

    def __post_init__(self):
        for name in ("bandwidth_hz", "d_strong_km", "d_weak_km", "max_power_w"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")

    def mean_gain(self, d_km: float) -> float:
        return 10.0 ** (-path_loss_db(d_km) / 10.0)


@dataclass(frozen=True)
class ChannelState:
    """Complex gains of both groups, shapes (J_s, K) and (J_w, K)."""

    strong: np.ndarray
    weak: np.ndarray
    noise_variance: float

    def __post_init__(self):
        s = np.array(self.strong, dtype=complex, copy=True).reshape(-1, np.shape(self.strong)[-1])
        K = s.shape[1]
        w = np.array(self.weak, dtype=complex, copy=True).reshape(-1, K)
        if not (np.all(np.isfinite(s)) and np.all(np.isfinite(w))):
            raise ValueError("channel gains must be finite")
        if not self.noise_variance > 0:
            raise ValueError("noise variance must be positive")
        s.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "strong", s)
        object.__setattr__(self, "weak", w)

    @property
    def K(self) -> int:
        return self.strong.shape[1]

    @property
    def J_s(self) -> int:
        return self.strong.shape[0]

    @property
    def J_w(self) -> int:
        return self.weak.shape[0]

    def swapped(self) -> "ChannelState":
        return ChannelState(self.weak, self.strong, self.noise_variance)


def complex_gaussian(rng: np.random.Generator, shape, variance: float = 1.0) -> np.ndarray:
    """Circularly-symmetric complex Gaussian samples with E|z|^2 = variance."""
    scale = np.sqrt(variance / 2.0)
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def draw_channel(rng: np.random.Generator, budget: LinkBudget, J_s: int, J_w: int, K: int) -> ChannelState:
    amp_s = np.sqrt(budget.mean_gain(budget.d_strong_km))
    amp_w = np.sqrt(budget.mean_gain(budget.d_weak_km))
    strong = amp_s * complex_gaussian(rng, (J_s, K))
    weak = amp_w * complex_gaussian(rng, (J_w, K))
    return ChannelState(strong, weak, noise_variance_w(budget.bandwidth_hz, K))


def superpose(codewords: np.ndarray, gains: np.ndarray, power: float) -> np.ndarray:
    """sum_j sqrt(p) * diag(h_j) x_j for (J, K) codewords and gains."""
    codewords = np.asarray(codewords)
    gains = np.asarray(gains)
    if codewords.shape != gains.shape:
        raise ValueError(f"codeword shape {codewords.shape} does not match channel shape {gains.shape}")
    return np.sqrt(power) * np.sum(gains * codewords, axis=0)


def synthesize_received(
    strong_codewords,
    weak_codewords,
    channels: ChannelState,
    p_s: float,
    p_w: float,
    rng: np.random.Generator | None = None,
    noise: np.ndarray | None = None,
) -> np.ndarray:
    """Received K-vector of the two-group uplink.

    Noise is drawn from ``rng`` unless an explicit ``noise`` vector is given;
    with neither, the output is noiseless.
    """
    K = channels.K
    xs = np.asarray(strong_codewords, dtype=complex).reshape(-1, K) if np.size(strong_codewords) else np.zeros((0, K))
    xw = np.asarray(weak_codewords, dtype=complex).reshape(-1, K) if np.size(weak_codewords) else np.zeros((0, K))
    if xs.shape[0] != channels.J_s or xw.shape[0] != channels.J_w:
        raise ValueError(
            f"got {xs.shape[0]} strong / {xw.shape[0]} weak codewords for "
            f"{channels.J_s} strong / {channels.J_w} weak users"
        )
    y = superpose(xs, channels.strong, p_s) + superpose(xw, channels.weak, p_w)
    if noise is not None:
        y = y + np.asarray(noise)
    elif rng is not None:
        y = y + complex_gaussian(rng, K, channels.noise_variance)
    return y
