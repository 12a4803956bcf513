"""Frame-level features at 100 Hz: MFCCs from speech, windowed statistics from EEG."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.fft import dct

from .dsp import Signal
from .errors import DimMismatch, SignalTooShort

KINDS = ("mfcc", "eeg_raw", "eeg_reduced")


@dataclass
class FeatureSequence:
    frames: np.ndarray
    frame_rate_hz: float = 100.0
    kind: str = "mfcc"

    def __post_init__(self):
        frames = np.asarray(self.frames, dtype=np.float64)
        if frames.ndim != 2:
            raise ValueError(f"frames must be T x D, got shape {frames.shape}")
        if not np.all(np.isfinite(frames)):
            raise ValueError("frames contain non-finite values")
        if not self.frame_rate_hz > 0:
            raise ValueError("frame_rate_hz must be positive")
        if self.kind not in KINDS:
            raise ValueError(f"unknown kind {self.kind!r}")
        self.frames = frames

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def dim(self) -> int:
        return self.frames.shape[1]


@dataclass(frozen=True)
class MfccConfig:
    n_coeffs: int = 13
    window_ms: float = 25.0
    hop_ms: float = 10.0
    n_mel_filters: int = 26
    fft_size: int = 512
    log_floor: float = 1e-10
    pre_emphasis: float = 0.97

    def __post_init__(self):
        if self.n_coeffs > self.n_mel_filters:
            raise ValueError("n_coeffs cannot exceed n_mel_filters")


STATISTICS = ("rms", "zero_crossing_rate", "mean", "kurtosis")
_STAT_ALIASES = {"zcr": "zero_crossing_rate"}


@dataclass(frozen=True)
class EegFeatureConfig:
    channels: int = 31
    statistics: tuple[str, ...] = ("rms", "zero_crossing_rate", "mean")
    window_ms: float = 100.0
    hop_ms: float = 10.0

    def __post_init__(self):
        stats = tuple(_STAT_ALIASES.get(s, s) for s in self.statistics)
        unknown = set(stats) - set(STATISTICS)
        if unknown:
            raise ValueError(f"unknown statistics: {sorted(unknown)}")
        object.__setattr__(self, "statistics", stats)

    @property
    def dim(self) -> int:
        return len(self.statistics) * self.channels


def _samples(ms: float, fs: float) -> int:
    n = ms * fs / 1000.0
    if abs(n - round(n)) > 1e-9:
        raise ValueError(f"{ms} ms is not a whole number of samples at {fs} Hz")
    return int(round(n))


def hz_to_mel(f_hz):
    return 2595.0 * np.log10(1.0 + np.asarray(f_hz, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(n_filters: int, fft_size: int, fs: float, f_low: float = 0.0, f_high=None):
    """Triangular filters on the rfft bin grid, shape ``(n_filters, fft_size//2 + 1)``.

    Returns ``(weights, center_frequencies_hz)``.
    """
    f_high = fs / 2 if f_high is None else f_high
    edges = mel_to_hz(np.linspace(hz_to_mel(f_low), hz_to_mel(f_high), n_filters + 2))
    bins = np.fft.rfftfreq(fft_size, d=1.0 / fs)
    lo, ctr, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (bins - lo) / (ctr - lo)
    falling = (hi - bins) / (hi - ctr)
    weights = np.maximum(0.0, np.minimum(rising, falling))
    return weights, edges[1:-1]


def frame_signal(x: np.ndarray, win: int, hop: int) -> np.ndarray:
    """Centre-padded framing: frame ``i`` is centred on sample ``i*hop``.

    Produces ``ceil(len(x) / hop)`` frames; padding is zeros.
    """
    n = len(x)
    n_frames = math.ceil(n / hop)
    half = win // 2
    padded = np.concatenate([np.zeros(half), x, np.zeros(win - half)])
    if n == 0 or len(padded) < win:
        raise SignalTooShort(f"{n} samples cannot fill a {win}-sample window")
    idx = np.arange(n_frames)[:, None] * hop + np.arange(win)[None, :]
    return padded[idx]


def log_mel_energies(sig: Signal, config: MfccConfig = MfccConfig()) -> np.ndarray:
    """Log mel filterbank energies per frame, ``(T, n_mel_filters)``."""
    if sig.channels != 1:
        raise DimMismatch(f"MFCC extraction needs a mono signal, got {sig.channels} channels")
    fs = sig.sample_rate_hz
    win = _samples(config.window_ms, fs)
    hop = _samples(config.hop_ms, fs)
    if win > config.fft_size:
        raise ValueError(f"window of {win} samples exceeds fft_size {config.fft_size}")
    x = sig.samples[0]
    emphasized = np.append(x[:1], x[1:] - config.pre_emphasis * x[:-1])
    frames = frame_signal(emphasized, win, hop) * np.hamming(win)
    spectrum = np.abs(np.fft.rfft(frames, n=config.fft_size, axis=1))
    weights, _ = mel_filterbank(config.n_mel_filters, config.fft_size, fs)
    return np.log(np.maximum(spectrum @ weights.T, config.log_floor))


def extract_mfcc(sig: Signal, config: MfccConfig = MfccConfig()) -> FeatureSequence:
    """Pre-emphasis, Hamming window, |FFT|, mel filterbank, log, DCT-II (orthonormal)."""
    log_mel = log_mel_energies(sig, config)
    cepstra = dct(log_mel, type=2, norm="ortho", axis=1)[:, : config.n_coeffs]
    return FeatureSequence(cepstra, 1000.0 / config.hop_ms, "mfcc")


def _window_stat(name: str, w: np.ndarray) -> np.ndarray:
    # w: (channels, window)
    if name == "rms":
        return np.sqrt(np.mean(w * w, axis=1))
    if name == "mean":
        return w.mean(axis=1)
    if name == "zero_crossing_rate":
        if w.shape[1] < 2:
            return np.zeros(w.shape[0])
        signs = np.signbit(w)
        return np.mean(signs[:, 1:] != signs[:, :-1], axis=1)
    if name == "kurtosis":
        d = w - w.mean(axis=1, keepdims=True)
        m2 = np.mean(d * d, axis=1)
        m4 = np.mean(d**4, axis=1)
        out = np.zeros_like(m2)
        ok = m2 > 1e-20
        out[ok] = m4[ok] / m2[ok] ** 2 - 3.0
        return out
    raise ValueError(name)


def extract_eeg_features(sig: Signal, config: EegFeatureConfig) -> FeatureSequence:
    """Per-channel statistics over a trailing window, one frame per hop.

    Columns are channel-major: all statistics of channel 0, then channel 1, ...
    Frames near the start use the (shorter) available history.
    """
    if sig.channels != config.channels:
        raise DimMismatch(f"expected {config.channels} channels, got {sig.channels}")
    fs = sig.sample_rate_hz
    win = _samples(config.window_ms, fs)
    hop = _samples(config.hop_ms, fs)
    n = sig.n_samples
    if n < hop:
        raise SignalTooShort(f"{n} samples is shorter than one {hop}-sample hop")
    n_frames = math.ceil(n / hop)
    n_stats = len(config.statistics)
    out = np.empty((n_frames, config.channels, n_stats))
    for i in range(n_frames):
        end = min((i + 1) * hop, n)
        w = sig.samples[:, max(0, end - win) : end]
        for j, name in enumerate(config.statistics):
            out[i, :, j] = _window_stat(name, w)
    return FeatureSequence(out.reshape(n_frames, -1), fs / hop, "eeg_raw")
