"""Deterministic speech-like and noise signals for tests, demos and benchmarks.

The speech stand-in is a sequence of voiced "syllables": harmonic tones with a
drifting pitch, shaped by two or three formant resonances and a smooth
amplitude envelope, separated by short pauses. It is sparse in time-frequency
the way real speech is, which is what masking denoisers rely on.
"""

from __future__ import annotations

import numpy as np
from scipy.signal import lfilter

from .audio import CANONICAL_RATE, Waveform


def _formant_gain(freqs, formants, bandwidths):
    g = np.zeros_like(freqs)
    for f0, bw in zip(formants, bandwidths):
        g += 1.0 / (1.0 + ((freqs - f0) / (bw / 2.0)) ** 2)
    return g


def speech_like(duration_s: float, rng: np.random.Generator,
                sample_rate_hz: int = CANONICAL_RATE, level: float = 0.2,
                lead_in_s: float = 0.0) -> Waveform:
    n = int(round(duration_s * sample_rate_hz))
    out = np.zeros(n)
    nyq = sample_rate_hz / 2.0
    pos = int(lead_in_s * sample_rate_hz)
    while pos < n:
        seg = int(rng.uniform(0.12, 0.3) * sample_rate_hz)
        seg = min(seg, n - pos)
        t = np.arange(seg) / sample_rate_hz
        f0 = rng.uniform(95.0, 230.0) * (1.0 + 0.08 * np.sin(2 * np.pi * rng.uniform(2, 5) * t)
                                          + rng.uniform(-0.15, 0.15) * t / max(t[-1], 1e-9))
        phase = 2 * np.pi * np.cumsum(f0) / sample_rate_hz
        formants = np.sort(rng.uniform([250, 900, 2000], [800, 2000, 3300]))
        bandwidths = rng.uniform(80, 250, size=3)
        voiced = np.zeros(seg)
        for h in range(1, int(nyq // 95.0) + 1):
            fh = h * f0
            amp = _formant_gain(fh, formants, bandwidths) * (fh < nyq - 100) / np.sqrt(h)
            voiced += amp * np.sin(h * phase + rng.uniform(0, 2 * np.pi))
        envelope = np.abs(np.sin(np.pi * np.arange(seg) / max(seg - 1, 1))) ** 1.5
        out[pos:pos + seg] = voiced * envelope
        pos += seg + int(rng.uniform(0.03, 0.15) * sample_rate_hz)
    peak = np.max(np.abs(out))
    if peak > 0:
        out *= level / np.sqrt(np.mean(out[out != 0] ** 2))
    return Waveform(np.clip(out, -0.99, 0.99), sample_rate_hz)


def noise(kind: str, duration_s: float, rng: np.random.Generator,
          sample_rate_hz: int = CANONICAL_RATE, level: float = 0.1) -> Waveform:
    """``kind`` is one of white, pink, brown, hum, babble."""
    n = int(round(duration_s * sample_rate_hz))
    if kind == "white":
        x = rng.standard_normal(n)
    elif kind == "pink":
        # Kellet-style 1/f approximation
        b = [0.049922035, -0.095993537, 0.050612699, -0.004408786]
        a = [1.0, -2.494956002, 2.017265875, -0.522189400]
        x = lfilter(b, a, rng.standard_normal(n))
    elif kind == "brown":
        x = lfilter([1.0], [1.0, -0.98], rng.standard_normal(n))
    elif kind == "hum":
        t = np.arange(n) / sample_rate_hz
        base = rng.uniform(50, 60)
        x = sum(np.sin(2 * np.pi * k * base * t + rng.uniform(0, 6.3)) / k for k in range(1, 8))
        x = x + 0.05 * rng.standard_normal(n)
    elif kind == "babble":
        x = sum(speech_like(duration_s, rng, sample_rate_hz).samples for _ in range(4))
        x = x + 0.01 * rng.standard_normal(n)
    else:
        raise ValueError(f"unknown noise kind {kind!r}")
    x = np.asarray(x, dtype=np.float64)
    x *= level / np.sqrt(np.mean(x**2))
    return Waveform(np.clip(x, -0.99, 0.99), sample_rate_hz)


NOISE_KINDS = ("white", "pink", "brown", "hum", "babble")
