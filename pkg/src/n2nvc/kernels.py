"""Hot inner loops, each with a numba and a pure-numpy implementation.

The public names (``overlap_add``, ``dtw_accumulate``, ``nearest_codewords``,
``conv2d``) dispatch to the numba variant unless ``N2N_DISABLE_JIT`` is set.
Both variants stay importable under ``*_numba`` / ``*_numpy`` so tests and the
benchmark can compare them directly.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ._jit import USE_JIT, njit

__all__ = [
    "USE_JIT",
    "overlap_add",
    "dtw_accumulate",
    "nearest_codewords",
    "conv2d",
]


# --------------------------------------------------------------------------
# overlap-add


def overlap_add_numpy(frames: np.ndarray, hop: int, length: int) -> np.ndarray:
    n_frames, width = frames.shape
    idx = np.arange(n_frames)[:, None] * hop + np.arange(width)
    return np.bincount(idx.ravel(), weights=frames.ravel(), minlength=length)[:length]


@njit
def overlap_add_numba(frames, hop, length):
    n_frames, width = frames.shape
    out = np.zeros(length, dtype=frames.dtype)
    for f in range(n_frames):
        base = f * hop
        for k in range(width):
            out[base + k] += frames[f, k]
    return out


# --------------------------------------------------------------------------
# dynamic time warping


def dtw_accumulate_numpy(cost: np.ndarray) -> np.ndarray:
    """Accumulated cost with steps (1,0), (0,1), (1,1), swept by anti-diagonal."""
    n, m = cost.shape
    acc = np.full((n + 1, m + 1), np.inf)
    acc[0, 0] = 0.0
    for d in range(2, n + m + 1):
        i = np.arange(max(1, d - m), min(n, d - 1) + 1)
        j = d - i
        best = np.minimum(np.minimum(acc[i - 1, j - 1], acc[i - 1, j]), acc[i, j - 1])
        acc[i, j] = cost[i - 1, j - 1] + best
    return acc[1:, 1:]


@njit
def dtw_accumulate_numba(cost):
    n, m = cost.shape
    acc = np.empty((n, m))
    for i in range(n):
        for j in range(m):
            c = cost[i, j]
            if i == 0 and j == 0:
                acc[i, j] = c
                continue
            best = np.inf
            if i > 0 and j > 0 and acc[i - 1, j - 1] < best:
                best = acc[i - 1, j - 1]
            if i > 0 and acc[i - 1, j] < best:
                best = acc[i - 1, j]
            if j > 0 and acc[i, j - 1] < best:
                best = acc[i, j - 1]
            acc[i, j] = c + best
    return acc


# --------------------------------------------------------------------------
# nearest codeword search

_CHUNK = 128


def nearest_codewords_numpy(z: np.ndarray, codebook: np.ndarray):
    n = z.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for lo in range(0, n, _CHUNK):
        diff = z[lo:lo + _CHUNK, None, :] - codebook[None, :, :]
        d = np.einsum("nkd,nkd->nk", diff, diff)
        k = np.argmin(d, axis=1)  # first minimum, i.e. lowest index on ties
        idx[lo:lo + _CHUNK] = k
        dist[lo:lo + _CHUNK] = d[np.arange(k.size), k]
    return idx, dist


@njit
def nearest_codewords_numba(z, codebook):
    n, dim = z.shape
    k_count = codebook.shape[0]
    idx = np.empty(n, dtype=np.int64)
    dist = np.empty(n)
    for j in range(n):
        best = np.inf
        best_k = 0
        for k in range(k_count):
            s = 0.0
            for d in range(dim):
                t = z[j, d] - codebook[k, d]
                s += t * t
            if s < best:
                best = s
                best_k = k
        idx[j] = best_k
        dist[j] = best
    return idx, dist


# --------------------------------------------------------------------------
# multi-channel 2-D cross-correlation (the "convolution" of neural nets)


def _conv_out_shape(h, w, kh, kw, sh, sw, ph, pw):
    return (h + 2 * ph - kh) // sh + 1, (w + 2 * pw - kw) // sw + 1


def conv2d_numpy(x, weight, stride=(1, 1), padding=(0, 0)):
    sh, sw = stride
    ph, pw = padding
    xp = np.pad(x, ((0, 0), (ph, ph), (pw, pw)))
    kh, kw = weight.shape[2:]
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::sh, ::sw]
    return np.einsum("chwij,ocij->ohw", win, weight, optimize=True)


@njit
def _conv2d_numba_impl(xp, weight, sh, sw, ho, wo):
    c_out, c_in, kh, kw = weight.shape
    # im2col: one row per (channel, tap), then a single matrix product
    cols = np.empty((c_in * kh * kw, ho * wo))
    r = 0
    for c in range(c_in):
        for i in range(kh):
            for j in range(kw):
                for a in range(ho):
                    src = xp[c, a * sh + i]
                    base = a * wo
                    for b in range(wo):
                        cols[r, base + b] = src[b * sw + j]
                r += 1
    out = np.dot(weight.reshape(c_out, c_in * kh * kw), cols)
    return out.reshape(c_out, ho, wo)


def conv2d_numba(x, weight, stride=(1, 1), padding=(0, 0)):
    sh, sw = stride
    ph, pw = padding
    xp = np.ascontiguousarray(np.pad(x, ((0, 0), (ph, ph), (pw, pw))), dtype=np.float64)
    kh, kw = weight.shape[2:]
    ho, wo = _conv_out_shape(x.shape[1], x.shape[2], kh, kw, sh, sw, ph, pw)
    return _conv2d_numba_impl(xp, np.ascontiguousarray(weight, dtype=np.float64), sh, sw, ho, wo)


# --------------------------------------------------------------------------
# dispatch


def overlap_add(frames, hop, length):
    """Sum ``frames[f]`` into a buffer of ``length`` samples at offsets ``f*hop``."""
    frames = np.ascontiguousarray(frames, dtype=np.float64)
    if USE_JIT:
        return overlap_add_numba(frames, int(hop), int(length))
    return overlap_add_numpy(frames, int(hop), int(length))


def dtw_accumulate(cost):
    """Accumulated DTW cost matrix for a local-cost matrix of shape (n, m)."""
    cost = np.ascontiguousarray(cost, dtype=np.float64)
    if USE_JIT:
        return dtw_accumulate_numba(cost)
    return dtw_accumulate_numpy(cost)


def nearest_codewords(z, codebook):
    """Row-wise argmin of squared Euclidean distance; ties go to the lowest index.

    Returns ``(indices, squared_distances)``.
    """
    z = np.ascontiguousarray(z, dtype=np.float64)
    codebook = np.ascontiguousarray(codebook, dtype=np.float64)
    if USE_JIT:
        return nearest_codewords_numba(z, codebook)
    return nearest_codewords_numpy(z, codebook)


def conv2d(x, weight, stride=(1, 1), padding=(0, 0)):
    """Cross-correlate ``x`` (C_in, H, W) with ``weight`` (C_out, C_in, kh, kw).

    Zero padding is symmetric. No bias.
    """
    x = np.asarray(x, dtype=np.float64)
    weight = np.asarray(weight, dtype=np.float64)
    if x.ndim != 3 or weight.ndim != 4:
        raise ValueError(f"expected x (C,H,W) and weight (O,C,kh,kw), got {x.shape} and {weight.shape}")
    if x.shape[0] != weight.shape[1]:
        raise ValueError(f"input has {x.shape[0]} channels, kernel expects {weight.shape[1]}")
    kh, kw = weight.shape[2:]
    ho, wo = _conv_out_shape(x.shape[1], x.shape[2], kh, kw, *stride, *padding)
    if ho < 1 or wo < 1:
        raise ValueError(f"kernel {kh}x{kw} does not fit input {x.shape[1:]} with padding {padding}")
    if USE_JIT:
        return conv2d_numba(x, weight, tuple(stride), tuple(padding))
    return conv2d_numpy(x, weight, tuple(stride), tuple(padding))
