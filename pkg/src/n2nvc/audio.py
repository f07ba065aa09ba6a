"""Waveforms, WAV I/O, mu-law companding and resampling."""

from __future__ import annotations

import logging
import math
import os
import struct
import tempfile
import warnings
import wave
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.signal import resample_poly

log = logging.getLogger(__name__)

CANONICAL_RATE = 8000
PCM16_SCALE = 32768.0

_WAVE_FORMAT_PCM = 0x0001
_WAVE_FORMAT_IEEE_FLOAT = 0x0003
_WAVE_FORMAT_EXTENSIBLE = 0xFFFE


class WavError(ValueError):
    """Base class for WAV decoding problems."""


class UnsupportedWavFormat(WavError):
    pass


class MultichannelWav(WavError):
    pass


class TruncatedWav(WavError):
    pass


class ClippingWarning(UserWarning):
    """Samples outside [-1, 1] were clamped on write."""


@dataclass(frozen=True)
class Waveform:
    """Mono signal. ``samples`` is stored read-only as float64."""

    samples: np.ndarray
    sample_rate_hz: int

    def __post_init__(self):
        x = np.array(self.samples, dtype=np.float64, copy=True).reshape(-1)
        if not np.all(np.isfinite(x)):
            raise ValueError("waveform contains non-finite samples")
        if int(self.sample_rate_hz) <= 0:
            raise ValueError(f"sample rate must be positive, got {self.sample_rate_hz}")
        x.setflags(write=False)
        object.__setattr__(self, "samples", x)
        object.__setattr__(self, "sample_rate_hz", int(self.sample_rate_hz))

    def __len__(self) -> int:
        return self.samples.shape[0]

    @property
    def duration_s(self) -> float:
        return len(self) / self.sample_rate_hz

    def power(self) -> float:
        """Mean squared amplitude over the whole clip."""
        if len(self) == 0:
            raise ValueError("power of an empty waveform is undefined")
        return float(np.mean(self.samples**2))

    def with_samples(self, samples) -> "Waveform":
        return Waveform(samples, self.sample_rate_hz)


# --------------------------------------------------------------------------
# WAV


def _parse_chunks(data: bytes, path):
    if len(data) < 12:
        raise TruncatedWav(f"{path}: file too short for a RIFF header")
    if data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise UnsupportedWavFormat(f"{path}: not a RIFF/WAVE file")
    pos = 12
    fmt = None
    while pos + 8 <= len(data):
        cid = data[pos:pos + 4]
        size = struct.unpack_from("<I", data, pos + 4)[0]
        body = pos + 8
        if cid == b"fmt ":
            if body + 16 > len(data):
                raise TruncatedWav(f"{path}: fmt chunk cut short")
            fmt = data[body:body + size]
        elif cid == b"data":
            if fmt is None:
                raise UnsupportedWavFormat(f"{path}: data chunk precedes fmt chunk")
            if body + size > len(data):
                raise TruncatedWav(
                    f"{path}: data chunk declares {size} bytes, only {len(data) - body} present"
                )
            return fmt, data[body:body + size]
        pos = body + size + (size & 1)
    if fmt is None:
        raise TruncatedWav(f"{path}: no fmt chunk")
    raise TruncatedWav(f"{path}: no data chunk")


def read_wav(path) -> Waveform:
    """Read a mono 16-bit PCM or 32-bit float WAV into [-1, 1] samples."""
    path = Path(path)
    data = path.read_bytes()
    fmt, payload = _parse_chunks(data, path)
    tag, channels, rate, _, _, bits = struct.unpack_from("<HHIIHH", fmt, 0)
    if tag == _WAVE_FORMAT_EXTENSIBLE and len(fmt) >= 26:
        tag = struct.unpack_from("<H", fmt, 24)[0]
    if channels != 1:
        raise MultichannelWav(f"{path}: multichannel unsupported ({channels} channels)")
    if tag == _WAVE_FORMAT_PCM and bits == 16:
        dtype, scale = "<i2", PCM16_SCALE
    elif tag == _WAVE_FORMAT_IEEE_FLOAT and bits == 32:
        dtype, scale = "<f4", 1.0
    else:
        raise UnsupportedWavFormat(f"{path}: unsupported encoding (format tag {tag}, {bits} bits)")
    width = np.dtype(dtype).itemsize
    if len(payload) % width:
        raise TruncatedWav(f"{path}: data chunk ends mid-sample")
    samples = np.frombuffer(payload, dtype=dtype).astype(np.float64) / scale
    return Waveform(samples, rate)


def to_pcm16(samples: np.ndarray) -> np.ndarray:
    """Quantize to int16 with clamping; warns when anything is clamped."""
    x = np.asarray(samples, dtype=np.float64)
    if x.size and (x.max() > 1.0 or x.min() < -1.0):
        n = int(np.count_nonzero(np.abs(x) > 1.0))
        warnings.warn(f"{n} sample(s) outside [-1, 1] clamped", ClippingWarning, stacklevel=3)
        x = np.clip(x, -1.0, 1.0)
    return np.clip(np.round(x * PCM16_SCALE), -32768, 32767).astype("<i2")


def quantize_pcm16(samples: np.ndarray) -> np.ndarray:
    """Values that survive a write/read round trip unchanged (no clamping)."""
    return np.clip(np.round(np.asarray(samples) * PCM16_SCALE), -32768, 32767) / PCM16_SCALE


def write_wav(w: Waveform, path) -> None:
    """Write 16-bit PCM mono, atomically (temp file then rename)."""
    path = Path(path)
    pcm = to_pcm16(w.samples)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", suffix=".wav", dir=path.parent)
    try:
        with os.fdopen(fd, "wb") as fh, wave.open(fh, "wb") as out:
            out.setnchannels(1)
            out.setsampwidth(2)
            out.setframerate(w.sample_rate_hz)
            out.writeframes(pcm.tobytes())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def load_wav(path, target_hz: int = CANONICAL_RATE) -> Waveform:
    """``read_wav`` followed by resampling to the pipeline rate, with a warning."""
    w = read_wav(path)
    if w.sample_rate_hz != target_hz:
        log.warning("%s: resampling %d Hz -> %d Hz", path, w.sample_rate_hz, target_hz)
        w = resample(w, target_hz)
    return w


# --------------------------------------------------------------------------
# mu-law


def mulaw_encode(w, mu: int = 255) -> np.ndarray:
    """Compand and quantize to ``mu + 1`` codes.

    The code lattice is symmetric mid-rise: code ``k`` sits at companded value
    ``2k/mu - 1`` so codes ``mu//2`` and ``mu//2 + 1`` straddle zero.
    """
    x = np.asarray(w.samples if isinstance(w, Waveform) else w, dtype=np.float64)
    if x.size and np.max(np.abs(x)) > 1.0:
        raise ValueError("mu-law input must lie in [-1, 1]")
    if mu % 2 == 0:
        raise ValueError("mu must be odd so the code count is even")
    y = np.log1p(mu * np.abs(x)) / math.log1p(mu)
    # quantize |x| on the upper half, then mirror: encode(-x) == mu - encode(x)
    pos = np.minimum((mu + 1) // 2 + np.floor(y * mu / 2.0).astype(np.int64), mu)
    return np.where(x >= 0, pos, mu - pos)


def mulaw_decode(codes, mu: int = 255, sample_rate_hz: int = CANONICAL_RATE) -> Waveform:
    c = np.asarray(codes)
    if c.size and (c.min() < 0 or c.max() > mu):
        raise ValueError(f"mu-law code outside [0, {mu}]")
    y = (2 * c.astype(np.int64) - mu) / mu  # integer numerator keeps decode exactly odd
    x = np.sign(y) * np.expm1(np.abs(y) * math.log1p(mu)) / mu
    return Waveform(x, sample_rate_hz)


# --------------------------------------------------------------------------
# resampling


def resample(w: Waveform, target_hz: int) -> Waveform:
    """Polyphase windowed-sinc resampling; length is ``round(n * target / source)``."""
    if target_hz <= 0:
        raise ValueError(f"target rate must be positive, got {target_hz}")
    src = w.sample_rate_hz
    if target_hz == src:
        return w
    g = math.gcd(src, target_hz)
    up, down = target_hz // g, src // g
    y = resample_poly(w.samples, up, down)
    n_out = int(round(len(w) * target_hz / src))
    if y.shape[0] >= n_out:
        y = y[:n_out]
    else:
        y = np.pad(y, (0, n_out - y.shape[0]))
    return Waveform(y, target_hz)
