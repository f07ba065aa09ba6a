"""Short-time objective intelligibility (classic, non-extended variant).

Both signals are resampled to 10 kHz, frames where the clean signal is more
than 40 dB below its loudest frame are removed from both, one-third octave
band envelopes are formed, and the score is the mean correlation between
clean and clipped-normalized degraded envelopes over 384 ms segments.
"""

from __future__ import annotations

import numpy as np

from .audio import Waveform, resample
from .kernels import overlap_add

FS = 10000
FRAME = 256
HOP = FRAME // 2
NFFT = 512
N_BANDS = 15
MIN_FREQ = 150.0
SEGMENT = 30  # frames, i.e. 384 ms
BETA_DB = -15.0
DYN_RANGE_DB = 40.0
_EPS = np.finfo(np.float64).eps


def third_octave_bands(fs: int = FS, nfft: int = NFFT, n_bands: int = N_BANDS,
                       min_freq: float = MIN_FREQ) -> tuple[np.ndarray, np.ndarray]:
    """Band-to-bin 0/1 matrix (n_bands, nfft//2+1) and band centre frequencies."""
    f = np.linspace(0, fs, nfft + 1)[: nfft // 2 + 1]
    k = np.arange(n_bands)
    centres = 2.0 ** (k / 3.0) * min_freq
    lo = min_freq * 2.0 ** ((2 * k - 1) / 6.0)
    hi = min_freq * 2.0 ** ((2 * k + 1) / 6.0)
    obm = np.zeros((n_bands, f.size))
    for b in range(n_bands):
        i_lo = int(np.argmin((f - lo[b]) ** 2))
        i_hi = int(np.argmin((f - hi[b]) ** 2))
        obm[b, i_lo:i_hi] = 1.0
    return obm, centres


def _window() -> np.ndarray:
    # symmetric Hann of FRAME+2 points with the zero end points dropped
    return np.hanning(FRAME + 2)[1:-1]


def _frames(x: np.ndarray) -> np.ndarray:
    starts = np.arange(0, len(x) - FRAME, HOP)
    return x[starts[:, None] + np.arange(FRAME)] * _window()


def remove_silent_frames(x: np.ndarray, y: np.ndarray,
                         dyn_range_db: float = DYN_RANGE_DB) -> tuple[np.ndarray, np.ndarray]:
    """Drop frames whose clean energy is ``dyn_range_db`` below the loudest; re-synthesize."""
    xf, yf = _frames(x), _frames(y)
    energy = 20.0 * np.log10(np.linalg.norm(xf, axis=1) + _EPS)
    keep = energy > energy.max() - dyn_range_db
    xf, yf = xf[keep], yf[keep]
    length = (xf.shape[0] - 1) * HOP + FRAME if xf.shape[0] else 0
    return overlap_add(xf, HOP, length), overlap_add(yf, HOP, length)


def _band_envelopes(x: np.ndarray, obm: np.ndarray) -> np.ndarray:
    spec = np.fft.rfft(_frames(x), n=NFFT, axis=1)
    return np.sqrt(obm @ (np.abs(spec) ** 2).T)  # (bands, frames)


def stoi(ref: Waveform, est: Waveform) -> float:
    if ref.sample_rate_hz != est.sample_rate_hz:
        raise ValueError("sample rates differ")
    if len(ref) != len(est):
        raise ValueError(f"length mismatch: {len(ref)} vs {len(est)} samples")
    x = resample(ref, FS).samples
    y = resample(est, FS).samples
    if len(x) < SEGMENT * HOP + FRAME:
        raise ValueError("STOI needs at least 384 ms of signal")
    x, y = remove_silent_frames(x, y)
    obm, _ = third_octave_bands()
    x_env = _band_envelopes(x, obm)
    y_env = _band_envelopes(y, obm)
    n_frames = x_env.shape[1]
    if n_frames < SEGMENT:
        raise ValueError("STOI needs at least 384 ms of non-silent signal")

    idx = np.arange(SEGMENT, n_frames + 1)[:, None] + np.arange(-SEGMENT, 0)
    xs = x_env[:, idx].transpose(1, 0, 2)  # (segments, bands, SEGMENT)
    ys = y_env[:, idx].transpose(1, 0, 2)

    scale = np.linalg.norm(xs, axis=2, keepdims=True) / (np.linalg.norm(ys, axis=2, keepdims=True) + _EPS)
    clip = 10.0 ** (-BETA_DB / 20.0)
    yp = np.minimum(ys * scale, xs * (1.0 + clip))

    xs = xs - xs.mean(axis=2, keepdims=True)
    yp = yp - yp.mean(axis=2, keepdims=True)
    xs = xs / (np.linalg.norm(xs, axis=2, keepdims=True) + _EPS)
    yp = yp / (np.linalg.norm(yp, axis=2, keepdims=True) + _EPS)
    corr = np.sum(xs * yp, axis=2)
    return float(np.mean(corr))
