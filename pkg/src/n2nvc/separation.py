"""Speech/background separation by residual, and superimposition after conversion.

Any denoiser splits a noisy signal in two: its output is the speech estimate
and whatever it removed, ``noisy - speech_estimate``, is the background. The
background is kept so it can be added back onto converted speech.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Protocol, runtime_checkable

import numpy as np
from scipy.ndimage import uniform_filter1d

from .audio import Waveform, quantize_pcm16
from .spectral import DENOISER_STFT, StftConfig, istft, stft

log = logging.getLogger(__name__)


@runtime_checkable
class Denoiser(Protocol):
    name: str

    def __call__(self, noisy: Waveform) -> Waveform: ...


@dataclass(frozen=True)
class SeparationResult:
    noisy: Waveform
    speech_estimate: Waveform
    background: Waveform


def separate(denoiser: Denoiser, noisy: Waveform) -> SeparationResult:
    speech = denoiser(noisy)
    if len(speech) != len(noisy) or speech.sample_rate_hz != noisy.sample_rate_hz:
        raise ValueError(
            f"denoiser {denoiser.name!r} returned {len(speech)} samples at {speech.sample_rate_hz} Hz "
            f"for {len(noisy)} samples at {noisy.sample_rate_hz} Hz"
        )
    background = noisy.with_samples(noisy.samples - speech.samples)
    return SeparationResult(noisy, speech, background)


def match_length(w: Waveform, length: int) -> Waveform:
    """Truncate or zero-pad to ``length`` samples, logging when it changes anything."""
    n = len(w)
    if n == length:
        return w
    log.warning("length mismatch: %d samples adjusted to %d", n, length)
    if n > length:
        return w.with_samples(w.samples[:length])
    return w.with_samples(np.pad(w.samples, (0, length - n)))


def superimpose(converted: Waveform, background: Waveform, mode: str = "add") -> Waveform:
    """``add`` puts the background back under the converted speech; ``drop`` discards it."""
    if mode == "drop":
        return converted
    if mode != "add":
        raise ValueError(f"mode must be 'add' or 'drop', got {mode!r}")
    if converted.sample_rate_hz != background.sample_rate_hz:
        raise ValueError("converted speech and background differ in sample rate")
    converted = match_length(converted, len(background))
    return background.with_samples(converted.samples + background.samples)


# --------------------------------------------------------------------------
# denoisers


class IdentityDenoiser:
    name = "identity"

    def __call__(self, noisy: Waveform) -> Waveform:
        return noisy


class ZeroDenoiser:
    name = "zero"

    def __call__(self, noisy: Waveform) -> Waveform:
        return noisy.with_samples(np.zeros(len(noisy)))


@dataclass(frozen=True)
class SpectralSubtraction:
    """Magnitude subtraction of a noise estimate taken from the leading frames.

    ``gain = max(1 - oversubtraction * N / |X|, floor)`` per bin, noisy phase
    kept. ``|X|`` is averaged over ``smoothing_frames`` neighbouring frames
    before the gain is formed (Boll's magnitude averaging), which tames the
    isolated residual peaks left by single-frame subtraction.
    """

    config: StftConfig = DENOISER_STFT
    noise_profile_ms: float = 200.0
    oversubtraction: float = 1.0
    floor: float = 0.02
    smoothing_frames: int = 3
    name: str = "specsub"

    def __call__(self, noisy: Waveform) -> Waveform:
        if self.noise_profile_ms * noisy.sample_rate_hz / 1000.0 >= len(noisy):
            raise ValueError("noise profile region is not shorter than the clip")
        spec = stft(noisy, self.config)
        hop = self.config.hop_length(noisy.sample_rate_hz)
        # frame f is centred on sample f*hop
        n_profile = max(1, int(self.noise_profile_ms * noisy.sample_rate_hz / 1000.0 / hop))
        mag = np.abs(spec.bins)
        noise_mag = mag[:n_profile].mean(axis=0)
        if self.smoothing_frames > 1:
            mag = uniform_filter1d(mag, self.smoothing_frames, axis=0, mode="nearest")
        with np.errstate(divide="ignore", invalid="ignore"):
            gain = 1.0 - self.oversubtraction * noise_mag / mag
        gain = np.where(mag > 0, np.maximum(gain, self.floor), 1.0)
        return istft(spec.with_bins(spec.bins * gain))


def specsub_denoiser(cfg: StftConfig = DENOISER_STFT, noise_profile_ms: float = 200.0,
                     oversubtraction: float = 1.0, floor: float = 0.02,
                     smoothing_frames: int = 3) -> SpectralSubtraction:
    return SpectralSubtraction(cfg, noise_profile_ms, oversubtraction, floor, smoothing_frames)


def ideal_ratio_mask(clean_bins: np.ndarray, noise_bins: np.ndarray) -> np.ndarray:
    """``|S|^2 / (|S|^2 + |N|^2)``; bins where both vanish get 0."""
    ps = np.abs(clean_bins) ** 2
    pn = np.abs(noise_bins) ** 2
    total = ps + pn
    return np.divide(ps, total, out=np.zeros_like(ps), where=total > 0)


@dataclass(frozen=True)
class IdealRatioMask:
    """Oracle denoiser: knows the clean signal the noisy input was built from."""

    clean: Waveform
    config: StftConfig = DENOISER_STFT
    name: str = "irm"

    def mask(self, noisy: Waveform) -> np.ndarray:
        if len(noisy) != len(self.clean) or noisy.sample_rate_hz != self.clean.sample_rate_hz:
            raise ValueError("IRM clean reference is not aligned with the noisy input")
        s = stft(self.clean, self.config).bins
        n = stft(noisy.with_samples(noisy.samples - self.clean.samples), self.config).bins
        return ideal_ratio_mask(s, n)

    def __call__(self, noisy: Waveform) -> Waveform:
        spec = stft(noisy, self.config)
        return istft(spec.with_bins(spec.bins * self.mask(noisy)))


def irm_oracle_denoiser(clean: Waveform, cfg: StftConfig = DENOISER_STFT) -> IdealRatioMask:
    return IdealRatioMask(clean, cfg)


@dataclass(frozen=True)
class Pcm16Output:
    """Wraps a denoiser so its output lies on the 16-bit grid.

    When the noisy input is itself on that grid, the residual background is too,
    so speech and background files written as 16-bit PCM still sum exactly to
    the input file.
    """

    inner: Denoiser

    @property
    def name(self) -> str:
        return self.inner.name

    def __call__(self, noisy: Waveform) -> Waveform:
        return noisy.with_samples(quantize_pcm16(self.inner(noisy).samples))
