"""IIR preprocessing filters: Butterworth bandpass and power-line notch.

Filters are stored as cascades of second-order sections (biquads) and
applied causally with zero initial state, in float64 throughout.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import signal as sps

from .errors import DesignUnstable, InvalidBand

STABILITY_MARGIN = 1e-9


@dataclass(frozen=True)
class Signal:
    """Multichannel sampled signal, shape ``(channels, n_samples)``."""

    samples: np.ndarray
    sample_rate_hz: float

    def __post_init__(self):
        samples = np.asarray(self.samples, dtype=np.float64)
        if samples.ndim == 1:
            samples = samples[None, :]
        if samples.ndim != 2:
            raise ValueError(f"samples must be 1-D or 2-D, got shape {samples.shape}")
        if not self.sample_rate_hz > 0:
            raise ValueError("sample_rate_hz must be positive")
        object.__setattr__(self, "samples", samples)

    @property
    def channels(self) -> int:
        return self.samples.shape[0]

    @property
    def n_samples(self) -> int:
        return self.samples.shape[1]

    @property
    def duration_s(self) -> float:
        return self.n_samples / self.sample_rate_hz


@dataclass(frozen=True)
class IIRFilter:
    """Biquad cascade. ``sections`` has shape ``(n, 6)`` as ``b0 b1 b2 1 a1 a2``."""

    sections: np.ndarray
    design_kind: str = "custom"

    def __post_init__(self):
        sos = np.atleast_2d(np.asarray(self.sections, dtype=np.float64))
        if sos.shape[1] != 6:
            raise ValueError("each section needs 6 coefficients")
        if not np.allclose(sos[:, 3], 1.0):
            raise ValueError("denominators must be normalised so a0 == 1")
        sos.setflags(write=False)
        object.__setattr__(self, "sections", sos)

    @property
    def n_sections(self) -> int:
        return self.sections.shape[0]

    def poles(self) -> np.ndarray:
        return np.concatenate([np.roots(s[3:]) for s in self.sections])

    def is_stable(self, margin: float = STABILITY_MARGIN) -> bool:
        return bool(np.all(np.abs(self.poles()) < 1.0 - margin))

    @classmethod
    def identity(cls) -> "IIRFilter":
        return cls(np.array([[1.0, 0.0, 0.0, 1.0, 0.0, 0.0]]), "identity")


def _checked(filt: IIRFilter) -> IIRFilter:
    if not filt.is_stable():
        raise DesignUnstable(
            f"{filt.design_kind} design has pole magnitude {np.abs(filt.poles()).max():.12f}"
        )
    return filt


def design_bandpass(low_hz: float, high_hz: float, order: int, fs_hz: float) -> IIRFilter:
    """Butterworth bandpass of total ``order`` (``order/2`` biquads).

    Uses the bilinear transform with pre-warped band edges.
    """
    if not 0 < low_hz < high_hz < fs_hz / 2:
        raise InvalidBand(f"need 0 < low < high < fs/2, got {low_hz}, {high_hz}, fs={fs_hz}")
    if order < 2 or order % 2:
        raise InvalidBand(f"bandpass order must be even and >= 2, got {order}")
    # the lowpass prototype order doubles under the bandpass transform
    sos = sps.butter(order // 2, [low_hz, high_hz], btype="bandpass", fs=fs_hz, output="sos")
    return _checked(IIRFilter(sos, "bandpass"))


def design_notch(f0_hz: float, q: float, fs_hz: float) -> IIRFilter:
    if not 0 < f0_hz < fs_hz / 2:
        raise InvalidBand(f"need 0 < f0 < fs/2, got {f0_hz}, fs={fs_hz}")
    if q <= 0:
        raise InvalidBand(f"q must be positive, got {q}")
    b, a = sps.iirnotch(f0_hz, q, fs=fs_hz)
    return _checked(IIRFilter(np.concatenate([b / a[0], a / a[0]])[None, :], "notch"))


def cascade(*filters: IIRFilter) -> IIRFilter:
    return IIRFilter(np.vstack([f.sections for f in filters]), "+".join(f.design_kind for f in filters))


def filter_apply(filt: IIRFilter, sig: Signal) -> Signal:
    """Causal cascade application per channel, zero initial state."""
    if sig.n_samples == 0:
        raise ValueError("cannot filter an empty signal")
    out = sps.sosfilt(np.array(filt.sections), sig.samples, axis=-1)
    return Signal(out, sig.sample_rate_hz)


def freq_response(filt: IIRFilter, f_hz, fs_hz: float):
    """Complex gain of the cascade at ``f_hz``, by direct evaluation of B(z)/A(z)."""
    f = np.asarray(f_hz, dtype=np.float64)
    if np.any(f < 0) or np.any(f > fs_hz / 2):
        raise ValueError("frequency must lie in [0, fs/2]")
    zinv = np.exp(-2j * np.pi * f / fs_hz)
    gain = np.ones_like(zinv)
    for b0, b1, b2, a0, a1, a2 in filt.sections:
        gain = gain * (b0 + b1 * zinv + b2 * zinv**2) / (a0 + a1 * zinv + a2 * zinv**2)
    return gain if gain.ndim else complex(gain)


def preprocess_eeg(
    sig: Signal,
    band: tuple[float, float] = (0.1, 70.0),
    order: int = 4,
    notch_hz: float | None = 60.0,
    notch_q: float = 30.0,
) -> Signal:
    """Bandpass then notch. Artifact removal is a pass-through."""
    stages = [design_bandpass(band[0], band[1], order, sig.sample_rate_hz)]
    if notch_hz:
        stages.append(design_notch(notch_hz, notch_q, sig.sample_rate_hz))
    return filter_apply(cascade(*stages), sig)
