import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.fft import dct, idct
from scipy.stats import kurtosis

from acoustic_eeg.dsp import Signal
from acoustic_eeg.errors import DimMismatch, SignalTooShort
from acoustic_eeg.features import (
    EegFeatureConfig, MfccConfig, extract_eeg_features, extract_mfcc, hz_to_mel,
    log_mel_energies, mel_filterbank, mel_to_hz,
)
from oracles import direct_dft_magnitude

SR = 16000.0


def test_mel_scale_fixed_points():
    assert hz_to_mel(0.0) == 0.0
    assert hz_to_mel(700.0) == pytest.approx(2595.0 * math.log10(2.0), abs=1e-9)
    assert hz_to_mel(700.0) == pytest.approx(781.17, abs=5e-3)


@pytest.mark.parametrize("f", [50.0, 1000.0, 7999.0])
def test_mel_roundtrip(f):
    assert abs(mel_to_hz(hz_to_mel(f)) - f) < 1e-9


def test_one_second_gives_100_frames_of_13():
    x = np.random.default_rng(0).normal(size=int(SR))
    seq = extract_mfcc(Signal(x, SR))
    assert (seq.n_frames, seq.dim) == (100, 13)
    assert seq.frame_rate_hz == 100.0
    assert seq.kind == "mfcc"


def _dct2_ortho(v):
    n = len(v)
    out = np.empty(n)
    for k in range(n):
        s = sum(v[i] * math.cos(math.pi * k * (2 * i + 1) / (2 * n)) for i in range(n))
        out[k] = s * math.sqrt((1 if k == 0 else 2) / n)
    return out


def test_silence_gives_dct_of_log_floor():
    cfg = MfccConfig()
    seq = extract_mfcc(Signal(np.zeros(8000), SR), cfg)
    expected = _dct2_ortho(np.full(cfg.n_mel_filters, math.log(cfg.log_floor)))[: cfg.n_coeffs]
    for row in seq.frames:
        np.testing.assert_allclose(row, expected, atol=1e-9)


def test_pure_tone_peaks_in_nearest_mel_filter():
    cfg = MfccConfig()
    f0 = 1000.0
    n = int(0.2 * SR)
    x = np.sin(2 * np.pi * f0 * np.arange(n) / SR)
    weights, centers = mel_filterbank(cfg.n_mel_filters, cfg.fft_size, SR)
    nearest = int(np.argmin(np.abs(centers - f0)))

    # oracle: hand-built interior frames, defining-sum DFT
    win, hop = 400, 160
    emph = np.append(x[:1], x[1:] - 0.97 * x[:-1])
    frames = [emph[i * hop - win // 2 : i * hop - win // 2 + win] for i in range(3, 8)]
    oracle = np.array([
        np.log(np.maximum(weights @ direct_dft_magnitude(f * np.hamming(win), cfg.fft_size), cfg.log_floor))
        for f in frames
    ])
    assert int(np.argmax(oracle.mean(axis=0))) == nearest

    ours = log_mel_energies(Signal(x, SR), cfg)
    np.testing.assert_allclose(ours[3:8], oracle, atol=1e-8)
    assert int(np.argmax(ours[3:-3].mean(axis=0))) == nearest


def test_shift_by_one_hop_shifts_frames():
    x = np.random.default_rng(1).normal(size=8000)
    a = extract_mfcc(Signal(x, SR)).frames
    b = extract_mfcc(Signal(np.concatenate([np.zeros(160), x]), SR)).frames
    np.testing.assert_allclose(b[1:-1], a[:-1][: len(b) - 2], atol=1e-6)


@given(st.lists(st.floats(-1e3, 1e3), min_size=26, max_size=26))
def test_dct_roundtrip(values):
    v = np.array(values)
    back = idct(dct(v, type=2, norm="ortho"), type=2, norm="ortho")
    assert np.abs(back - v).max() <= 1e-9 * max(1.0, np.abs(v).max())


def test_filterbank_partition():
    weights, centers = mel_filterbank(26, 512, SR)
    assert np.all(weights >= 0)
    bins = np.fft.rfftfreq(512, 1 / SR)
    inside = (bins >= centers[0]) & (bins <= centers[-1])
    assert np.all(weights[:, inside].sum(axis=0) > 0)


@given(st.integers(160, 40000))
def test_mfcc_frame_rate_contract(n):
    seq = extract_mfcc(Signal(np.random.default_rng(n).normal(size=n), SR))
    assert seq.n_frames == math.ceil(100 * n / SR - 1e-9)


@given(st.integers(10, 4000))
def test_eeg_frame_rate_contract(n):
    sig = Signal(np.random.default_rng(n).normal(size=(2, n)), 1000.0)
    seq = extract_eeg_features(sig, EegFeatureConfig(channels=2))
    assert seq.n_frames == math.ceil(100 * n / 1000.0 - 1e-9)


def test_eeg_31_channels_three_stats_is_93_dims():
    sig = Signal(np.random.default_rng(0).normal(size=(31, 2000)), 1000.0)
    seq = extract_eeg_features(sig, EegFeatureConfig(channels=31, statistics=("rms", "zcr", "mean")))
    assert (seq.n_frames, seq.dim) == (200, 93)
    assert seq.frame_rate_hz == 100.0


@pytest.mark.parametrize("c", [-2.5, 0.0, 1.75])
def test_constant_channel_statistics(c):
    cfg = EegFeatureConfig(channels=3, statistics=("rms", "zero_crossing_rate", "mean", "kurtosis"))
    seq = extract_eeg_features(Signal(np.full((3, 500), c), 1000.0), cfg)
    by_stat = seq.frames.reshape(seq.n_frames, 3, 4)
    np.testing.assert_allclose(by_stat[:, :, 0], abs(c))
    np.testing.assert_array_equal(by_stat[:, :, 1], 0.0)
    np.testing.assert_allclose(by_stat[:, :, 2], c)
    np.testing.assert_array_equal(by_stat[:, :, 3], 0.0)


def test_sine_rms_over_full_periods():
    t = np.arange(3000) / 1000.0
    sig = Signal(np.sin(2 * np.pi * 5 * t), 1000.0)
    cfg = EegFeatureConfig(channels=1, statistics=("rms",), window_ms=200.0)
    rms = extract_eeg_features(sig, cfg).frames[20:, 0]
    np.testing.assert_allclose(rms, 1 / math.sqrt(2), atol=1e-2)


def test_channel_major_layout_and_kurtosis():
    rng = np.random.default_rng(5)
    x = rng.standard_t(5, size=(2, 1000))
    cfg = EegFeatureConfig(channels=2, statistics=("mean", "kurtosis"))
    frames = extract_eeg_features(Signal(x, 1000.0), cfg).frames
    i = 50  # window is samples [410, 510)
    w = x[:, 410:510]
    np.testing.assert_allclose(frames[i], [w[0].mean(), kurtosis(w[0]), w[1].mean(), kurtosis(w[1])], atol=1e-10)


def test_eeg_errors():
    with pytest.raises(DimMismatch):
        extract_eeg_features(Signal(np.zeros((2, 100)), 1000.0), EegFeatureConfig(channels=3))
    with pytest.raises(SignalTooShort):
        extract_eeg_features(Signal(np.zeros((1, 5)), 1000.0), EegFeatureConfig(channels=1))
    with pytest.raises(ValueError):
        EegFeatureConfig(statistics=("variance",))


def test_mfcc_errors():
    with pytest.raises(SignalTooShort):
        extract_mfcc(Signal(np.zeros((1, 0)), SR))
    with pytest.raises(DimMismatch):
        extract_mfcc(Signal(np.zeros((2, 1600)), SR))
    with pytest.raises(ValueError):
        MfccConfig(n_coeffs=30)
