"""STFT / ISTFT, mel filterbank, log-mel features and mel cepstra."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .audio import Waveform
from .kernels import overlap_add

LOG_FLOOR = 1e-10
N_MELS = 80
N_CEPSTRA = 24


class ColaError(ValueError):
    """Window/hop combination cannot be inverted by overlap-add."""


@dataclass(frozen=True)
class StftConfig:
    window_ms: float
    hop_ms: float
    fft_len: int
    window: str = "hann"

    def win_length(self, sample_rate_hz: int) -> int:
        return int(round(self.window_ms * sample_rate_hz / 1000.0))

    def hop_length(self, sample_rate_hz: int) -> int:
        return int(round(self.hop_ms * sample_rate_hz / 1000.0))

    def validate(self, sample_rate_hz: int) -> tuple[int, int]:
        if self.window != "hann":
            raise ValueError(f"only the Hann window is supported, got {self.window!r}")
        if self.fft_len <= 0 or self.fft_len & (self.fft_len - 1):
            raise ValueError(f"fft_len must be a power of two, got {self.fft_len}")
        win = self.win_length(sample_rate_hz)
        hop = self.hop_length(sample_rate_hz)
        if win > self.fft_len:
            raise ValueError(f"window of {win} samples exceeds fft_len {self.fft_len}")
        if hop <= 0 or win % hop or win // hop < 2:
            raise ColaError(f"hop {hop} must divide window {win} into at least 2 overlaps")
        return win, hop


# 8 kHz settings of the denoiser and of the VQ front end
DENOISER_STFT = StftConfig(window_ms=50.0, hop_ms=12.5, fft_len=512)
VQ_STFT = StftConfig(window_ms=20.0, hop_ms=5.0, fft_len=1024)


@dataclass(frozen=True)
class ComplexSpectrogram:
    bins: np.ndarray  # (frames, fft_len // 2 + 1) complex
    config: StftConfig
    sample_rate_hz: int
    length: int  # samples of the analysed signal

    def with_bins(self, bins) -> "ComplexSpectrogram":
        return ComplexSpectrogram(np.asarray(bins, dtype=np.complex128), self.config, self.sample_rate_hz, self.length)


@dataclass(frozen=True)
class MelSpectrogram:
    frames: np.ndarray  # (frames, n_mels) natural-log energies
    n_mels: int
    floor: float = LOG_FLOOR


def hann(n: int) -> np.ndarray:
    """Periodic Hann window."""
    return 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(n) / n)


def _frame_layout(length: int, win: int, hop: int) -> tuple[int, int]:
    pad = win // 2
    padded = length + 2 * pad
    extra = (-(padded - win)) % hop
    n_frames = (padded + extra - win) // hop + 1
    return n_frames, extra


def stft(w: Waveform, cfg: StftConfig) -> ComplexSpectrogram:
    win, hop = cfg.validate(w.sample_rate_hz)
    x = w.samples
    if len(x) < win:
        raise ValueError(f"signal of {len(x)} samples is shorter than one {win}-sample window")
    pad = win // 2
    _, extra = _frame_layout(len(x), win, hop)
    xp = np.pad(np.pad(x, pad, mode="reflect"), (0, extra))
    frames = sliding_window_view(xp, win)[::hop] * hann(win)
    bins = np.fft.rfft(frames, n=cfg.fft_len, axis=1)
    return ComplexSpectrogram(bins, cfg, w.sample_rate_hz, len(x))


def istft(s: ComplexSpectrogram) -> Waveform:
    win, hop = s.config.validate(s.sample_rate_hz)
    n_frames, extra = _frame_layout(s.length, win, hop)
    if s.bins.shape != (n_frames, s.config.fft_len // 2 + 1):
        raise ValueError(f"spectrogram shape {s.bins.shape} does not match a {s.length}-sample signal")
    window = hann(win)
    frames = np.fft.irfft(s.bins, n=s.config.fft_len, axis=1)[:, :win] * window
    total = (n_frames - 1) * hop + win
    signal = overlap_add(frames, hop, total)
    norm = overlap_add(np.broadcast_to(window**2, frames.shape), hop, total)
    pad = win // 2
    signal = signal[pad:pad + s.length]
    norm = norm[pad:pad + s.length]
    if norm.min() < 1e-8 * norm.max():
        raise ColaError("window overlap leaves samples with no synthesis weight")
    return Waveform(signal / norm, s.sample_rate_hz)


# --------------------------------------------------------------------------
# mel features


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


def mel_filterbank(sample_rate_hz: int, fft_len: int, n_mels: int = N_MELS,
                   fmin: float = 0.0, fmax: float | None = None) -> np.ndarray:
    """Triangular HTK-mel filters, shape (n_mels, fft_len//2 + 1).

    Each row is scaled to unit area on the bin grid (row sum times bin spacing
    equals one), so a flat power spectrum gives equal energy in every band.
    """
    fmax = sample_rate_hz / 2.0 if fmax is None else fmax
    freqs = np.arange(fft_len // 2 + 1) * sample_rate_hz / fft_len
    edges = mel_to_hz(np.linspace(hz_to_mel(fmin), hz_to_mel(fmax), n_mels + 2))
    lo, mid, hi = edges[:-2, None], edges[1:-1, None], edges[2:, None]
    rising = (freqs - lo) / (mid - lo)
    falling = (hi - freqs) / (hi - mid)
    fb = np.maximum(0.0, np.minimum(rising, falling))
    sums = fb.sum(axis=1)
    if np.any(sums <= 0):
        empty = int(np.argmin(sums))
        raise ValueError(
            f"{n_mels} mel bands exceed the usable resolution of a {fft_len}-point FFT "
            f"at {sample_rate_hz} Hz (band {empty} covers no bin)"
        )
    df = sample_rate_hz / fft_len
    return fb / (sums[:, None] * df)


def power_spectrogram(w: Waveform, cfg: StftConfig) -> np.ndarray:
    return np.abs(stft(w, cfg).bins) ** 2


def log_mel(w: Waveform, cfg: StftConfig = VQ_STFT, n_mels: int = N_MELS) -> MelSpectrogram:
    fb = mel_filterbank(w.sample_rate_hz, cfg.fft_len, n_mels)
    energies = power_spectrogram(w, cfg) @ fb.T
    return MelSpectrogram(np.log(np.maximum(energies, LOG_FLOOR)), n_mels, LOG_FLOOR)


def dct_matrix(n: int) -> np.ndarray:
    """Orthonormal DCT-II as an (n, n) matrix; row k is basis function k."""
    k = np.arange(n)[:, None]
    i = np.arange(n)[None, :]
    d = np.sqrt(2.0 / n) * np.cos(np.pi * (2 * i + 1) * k / (2 * n))
    d[0] /= np.sqrt(2.0)
    return d


def mel_cepstra(m: MelSpectrogram, n_coeffs: int = N_CEPSTRA) -> np.ndarray:
    """Coefficients 1..n_coeffs of the orthonormal DCT over the mel axis."""
    if not 0 < n_coeffs < m.n_mels:
        raise ValueError(f"n_coeffs must be in [1, {m.n_mels - 1}], got {n_coeffs}")
    return m.frames @ dct_matrix(m.n_mels)[1:n_coeffs + 1].T


# --------------------------------------------------------------------------
# debug dump: 16-byte header (magic, frames, bins, flags) then float32 LE data

_DUMP_MAGIC = b"N2NS"
_FLAG_COMPLEX = 1


def dump_spectrogram(values: np.ndarray, path) -> None:
    values = np.asarray(values)
    if values.ndim != 2:
        raise ValueError("expected a (frames, bins) matrix")
    is_complex = np.iscomplexobj(values)
    header = _DUMP_MAGIC + struct.pack("<III", values.shape[0], values.shape[1], _FLAG_COMPLEX if is_complex else 0)
    if is_complex:
        body = np.stack([values.real, values.imag], axis=-1)
    else:
        body = values
    Path(path).write_bytes(header + np.ascontiguousarray(body, dtype="<f4").tobytes())


def load_spectrogram(path) -> np.ndarray:
    raw = Path(path).read_bytes()
    if raw[:4] != _DUMP_MAGIC:
        raise ValueError(f"{path}: bad magic")
    frames, n_bins, flags = struct.unpack_from("<III", raw, 4)
    data = np.frombuffer(raw, dtype="<f4", offset=16).astype(np.float64)
    if flags & _FLAG_COMPLEX:
        data = data.reshape(frames, n_bins, 2)
        return data[..., 0] + 1j * data[..., 1]
    return data.reshape(frames, n_bins)
