import numpy as np
import pytest

from hdnoma.channel import ChannelState, LinkBudget, complex_gaussian, dbm_to_w, draw_channel
from hdnoma.mpa import MPAConfig, mpa_decode
from hdnoma.receiver import decode_hd, sic_subtract
from hdnoma.scma_core import canonical_factor_graph, default_codebook, rotated_codebooks


def _words(rng, J):
    return rng.integers(0, 4, J)


def test_sic_perfect_cancellation(rng):
    books = default_codebook()
    H = ChannelState(complex_gaussian(rng, (6, 4)), complex_gaussian(rng, (6, 4)), 1.0)
    xs = books.codewords[np.arange(6), _words(rng, 6)]
    xw = books.codewords[np.arange(6), _words(rng, 6)]
    weak = np.sqrt(0.2) * np.sum(H.weak * xw, axis=0)
    y = np.sqrt(3.0) * np.sum(H.strong * xs, axis=0) + weak
    assert np.max(np.abs(sic_subtract(y, xs, H.strong, 3.0) - weak)) < 1e-12
    assert np.array_equal(sic_subtract(y, xs, H.strong, 0.0), y)


def test_sic_residual_after_wrong_decision(rng):
    books = default_codebook()
    hs = complex_gaussian(rng, (6, 4))
    w = _words(rng, 6)
    xs = books.codewords[np.arange(6), w]
    wrong = w.copy()
    wrong[2] = (w[2] + 1) % 4
    xh = books.codewords[np.arange(6), wrong]
    rest = complex_gaussian(rng, 4)
    y = np.sqrt(2.0) * np.sum(hs * xs, axis=0) + rest
    resid = sic_subtract(y, xh, hs, 2.0) - rest
    assert np.max(np.abs(resid - np.sqrt(2.0) * hs[2] * (xs[2] - xh[2]))) < 1e-12


def test_sic_shape_error():
    with pytest.raises(ValueError):
        sic_subtract(np.zeros(4), np.zeros((6, 4)), np.zeros((5, 4)), 1.0)


def test_noiseless_well_separated_groups(rng):
    # fixed-magnitude channels with the strong group 30 dB above the weak group
    books = default_codebook()
    for _ in range(100):
        phase_s = np.exp(2j * np.pi * rng.random((6, 4)))
        phase_w = np.exp(2j * np.pi * rng.random((6, 4)))
        H = ChannelState(phase_s, 10 ** (-30 / 20) * phase_w, 1e-12)
        ws, ww = _words(rng, 6), _words(rng, 6)
        y = np.sum(H.strong * books.codewords[np.arange(6), ws], axis=0)
        y = y + np.sum(H.weak * books.codewords[np.arange(6), ww], axis=0)
        d = decode_hd(y, H, books, books, 1.0, 1.0)
        assert np.array_equal(d.decisions, np.concatenate([ws, ww]))


def test_zero_weak_power_is_plain_scma(rng):
    books = default_codebook()
    H = ChannelState(complex_gaussian(rng, (6, 4)), complex_gaussian(rng, (6, 4)), 0.5)
    y = complex_gaussian(rng, 4, 2.0)
    d = decode_hd(y, H, books, books, 1.0, 0.0)
    plain = mpa_decode(y, books, H.strong, 1.0, 0.5)
    assert np.array_equal(d.strong.decisions, plain.decisions)
    assert np.array_equal(d.strong.marginals.probs, plain.marginals.probs)


def test_no_weak_group_is_single_call(rng):
    books = default_codebook()
    H = ChannelState(complex_gaussian(rng, (6, 4)), np.zeros((0, 4)), 0.5)
    y = complex_gaussian(rng, 4, 2.0)
    d = decode_hd(y, H, books, None, 1.0, 1.0)
    plain = mpa_decode(y, books, H.strong, 1.0, 0.5)
    assert d.weak is None
    assert np.array_equal(d.decisions, plain.decisions)
    assert np.array_equal(d.strong.marginals.probs, plain.marginals.probs)


def test_graph_mismatch_rejected(rng):
    books = default_codebook()
    other = rotated_codebooks(np.roll(canonical_factor_graph(6, 4, 2).entries, 1, axis=0), 4)
    H = ChannelState(complex_gaussian(rng, (6, 4)), complex_gaussian(rng, (6, 4)), 0.5)
    with pytest.raises(ValueError, match="strong"):
        decode_hd(np.zeros(4), H, books, books, 1.0, 1.0, F_s=other.factor_graph())


def _strong_errors(swap: bool, inflate: bool, trials: int, seed: int = 11):
    books = default_codebook()
    P = float(dbm_to_w(40.0))
    p = P / 2
    rng = np.random.default_rng(seed)
    errs = 0
    for _ in range(trials):
        H = draw_channel(rng, LinkBudget(max_power_w=P), 6, 6, 4)
        if swap:
            H = H.swapped()
        ws, ww = _words(rng, 6), _words(rng, 6)
        y = np.sqrt(p) * np.sum(H.strong * books.codewords[np.arange(6), ws], axis=0)
        y = y + np.sqrt(p) * np.sum(H.weak * books.codewords[np.arange(6), ww], axis=0)
        y = y + complex_gaussian(rng, 4, H.noise_variance)
        d = decode_hd(y, H, books, books, p, p, mpa=MPAConfig(), inflate_noise=inflate)
        errs += int(np.sum(d.strong.decisions != ws))
    return errs


def test_swapped_labels_hurt_strong_stage():
    assert _strong_errors(swap=True, inflate=True, trials=300) > _strong_errors(swap=False, inflate=True, trials=300)


@pytest.mark.slow
def test_gaussian_interference_model_helps():
    # about 1e5 strong-group bits at 40 dBm
    trials = 100000 // 12 + 1
    assert _strong_errors(False, True, trials) <= _strong_errors(False, False, trials)


@pytest.mark.xfail(strict=True, reason="stage 1 is interference-limited at 0.3/0.8 km under Rayleigh fading; see notes")
def test_noiseless_default_distances():
    books = default_codebook()
    P = float(dbm_to_w(40.0))
    p = P / 2
    rng = np.random.default_rng(21)
    wrong = 0
    for _ in range(100):
        H = draw_channel(rng, LinkBudget(max_power_w=P), 6, 6, 4)
        ws, ww = _words(rng, 6), _words(rng, 6)
        y = np.sqrt(p) * np.sum(H.strong * books.codewords[np.arange(6), ws], axis=0)
        y = y + np.sqrt(p) * np.sum(H.weak * books.codewords[np.arange(6), ww], axis=0)
        Hd = ChannelState(H.strong, H.weak, H.noise_variance * 1e-6)
        d = decode_hd(y, Hd, books, books, p, p)
        wrong += int(np.sum(d.decisions != np.concatenate([ws, ww])))
    assert wrong == 0
