"""Forward passes of complex-valued convolution, batch norm and LSTM.

Complex tensors are plain numpy complex arrays shaped (channels, frames, bins).
Complex weights are kept as separate real and imaginary parts so that every
layer is literally the combination of real operations it is defined by.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .kernels import conv2d
from .spectral import ComplexSpectrogram

PRELU_SLOPE = 0.1


@dataclass(frozen=True)
class ComplexConvParams:
    wr: np.ndarray  # (out, in, kh, kw)
    wi: np.ndarray
    br: np.ndarray  # (out,)
    bi: np.ndarray
    stride: tuple[int, int] = (1, 1)
    padding: tuple[int, int] = (0, 0)

    def __post_init__(self):
        if self.wr.shape != self.wi.shape or self.wr.ndim != 4:
            raise ValueError("real and imaginary kernels must share a 4-D shape")
        if self.br.shape != (self.wr.shape[0],) or self.bi.shape != self.br.shape:
            raise ValueError("bias length must equal the output channel count")

    @property
    def in_channels(self) -> int:
        return self.wr.shape[1]

    @property
    def out_channels(self) -> int:
        return self.wr.shape[0]

    @classmethod
    def random(cls, rng: np.random.Generator, in_ch: int, out_ch: int, kernel=(3, 3),
               stride=(1, 1), padding=(0, 0), bias: bool = True) -> "ComplexConvParams":
        shape = (out_ch, in_ch, *kernel)
        scale = 1.0 / np.sqrt(2 * in_ch * kernel[0] * kernel[1])
        b = (lambda: 0.1 * rng.standard_normal(out_ch)) if bias else (lambda: np.zeros(out_ch))
        return cls(scale * rng.standard_normal(shape), scale * rng.standard_normal(shape),
                   b(), b(), tuple(stride), tuple(padding))


def complex_conv2d(x: np.ndarray, p: ComplexConvParams) -> np.ndarray:
    """(Wr + iWi) * (xr + ixi) + (br + ibi), expanded into four real convolutions."""
    x = np.asarray(x, dtype=np.complex128)
    if x.ndim != 3 or x.shape[0] != p.in_channels:
        raise ValueError(f"expected input (C={p.in_channels}, T, F), got {x.shape}")
    xr, xi = x.real, x.imag
    conv = lambda w, v: conv2d(v, w, p.stride, p.padding)  # noqa: E731
    real = conv(p.wr, xr) - conv(p.wi, xi) + p.br[:, None, None]
    imag = conv(p.wr, xi) + conv(p.wi, xr) + p.bi[:, None, None]
    return real + 1j * imag


# --------------------------------------------------------------------------
# batch norm


class NotPositiveDefinite(ValueError):
    pass


@dataclass(frozen=True)
class ComplexBatchNormStats:
    """Inference statistics plus the complex affine transform, per channel."""

    mean: np.ndarray  # (C,) complex
    cov: np.ndarray  # (C, 2, 2): [[Vrr, Vri], [Vri, Vii]]
    gamma: np.ndarray  # (C, 2, 2), symmetric
    beta: np.ndarray  # (C,) complex

    @classmethod
    def identity(cls, channels: int) -> "ComplexBatchNormStats":
        eye = np.broadcast_to(np.eye(2), (channels, 2, 2)).copy()
        return cls(np.zeros(channels, complex), eye, eye.copy(), np.zeros(channels, complex))


def batch_statistics(x: np.ndarray, eps: float = 0.0) -> ComplexBatchNormStats:
    """Per-channel mean and (population) real/imag covariance of ``x`` (C, ...)."""
    x = np.asarray(x, dtype=np.complex128)
    flat = x.reshape(x.shape[0], -1)
    mean = flat.mean(axis=1)
    c = flat - mean[:, None]
    vrr = np.mean(c.real**2, axis=1) + eps
    vii = np.mean(c.imag**2, axis=1) + eps
    vri = np.mean(c.real * c.imag, axis=1)
    cov = np.stack([np.stack([vrr, vri], -1), np.stack([vri, vii], -1)], -2)
    base = ComplexBatchNormStats.identity(x.shape[0])
    return ComplexBatchNormStats(mean, cov, base.gamma, base.beta)


def inverse_sqrt_2x2(cov: np.ndarray) -> np.ndarray:
    """Closed-form inverse square root of symmetric positive-definite 2x2 matrices."""
    vrr, vri, vii = cov[..., 0, 0], cov[..., 0, 1], cov[..., 1, 1]
    det = vrr * vii - vri**2
    if np.any(vrr <= 0) or np.any(det <= 0) or not np.allclose(cov[..., 0, 1], cov[..., 1, 0]):
        raise NotPositiveDefinite("covariance must be symmetric positive definite")
    s = np.sqrt(det)
    t = np.sqrt(vrr + vii + 2.0 * s)
    inv = 1.0 / (s * t)
    out = np.empty(cov.shape)
    out[..., 0, 0] = (vii + s) * inv
    out[..., 1, 1] = (vrr + s) * inv
    out[..., 0, 1] = out[..., 1, 0] = -vri * inv
    return out


def complex_batchnorm(x: np.ndarray, stats: ComplexBatchNormStats) -> np.ndarray:
    """Whiten each channel's (real, imag) pair, then apply gamma and beta."""
    x = np.asarray(x, dtype=np.complex128)
    w = inverse_sqrt_2x2(stats.cov)
    a = np.einsum("cij,cjk->cik", stats.gamma, w)  # gamma @ V^-1/2
    c = x - stats.mean.reshape(-1, *([1] * (x.ndim - 1)))
    shape = (-1,) + (1,) * (x.ndim - 1)
    real = a[:, 0, 0].reshape(shape) * c.real + a[:, 0, 1].reshape(shape) * c.imag
    imag = a[:, 1, 0].reshape(shape) * c.real + a[:, 1, 1].reshape(shape) * c.imag
    return real + 1j * imag + stats.beta.reshape(shape)


# --------------------------------------------------------------------------
# LSTM


def split_sigmoid(z):
    return 1.0 / (1.0 + np.exp(-z.real)) + 1j / (1.0 + np.exp(-z.imag))


def split_tanh(z):
    return np.tanh(z.real) + 1j * np.tanh(z.imag)


def split_mul(a, b):
    """Component-wise product of real and imaginary parts (gating, not complex product)."""
    return a.real * b.real + 1j * (a.imag * b.imag)


@dataclass(frozen=True)
class ComplexLstmParams:
    """Gate order i, f, g, o. Input weights (4H, I), recurrent (4H, H), bias (4H,)."""

    w_r: np.ndarray
    w_i: np.ndarray
    u_r: np.ndarray
    u_i: np.ndarray
    b_r: np.ndarray
    b_i: np.ndarray

    @property
    def hidden(self) -> int:
        return self.u_r.shape[1]

    @property
    def input_size(self) -> int:
        return self.w_r.shape[1]

    @classmethod
    def random(cls, rng: np.random.Generator, input_size: int, hidden: int,
               scale: float = 0.5) -> "ComplexLstmParams":
        g = lambda *s: scale * rng.standard_normal(s)  # noqa: E731
        return cls(g(4 * hidden, input_size), g(4 * hidden, input_size),
                   g(4 * hidden, hidden), g(4 * hidden, hidden), g(4 * hidden), g(4 * hidden))


def _complex_affine(wr, wi, v):
    return (wr @ v.real - wi @ v.imag) + 1j * (wr @ v.imag + wi @ v.real)


def complex_lstm_cell(x_t, state, p: ComplexLstmParams):
    """One step. ``state`` is ``(h, c)`` complex vectors or None for zeros.

    Gate pre-activations are complex affine maps; sigmoid/tanh and the gating
    products act on real and imaginary parts separately.
    Returns ``(h, (h, c))``.
    """
    x_t = np.asarray(x_t, dtype=np.complex128)
    if x_t.shape != (p.input_size,):
        raise ValueError(f"input width {x_t.shape} does not match {p.input_size}")
    hid = p.hidden
    if state is None:
        h = np.zeros(hid, complex)
        c = np.zeros(hid, complex)
    else:
        h, c = (np.asarray(s, dtype=np.complex128) for s in state)
        if h.shape != (hid,) or c.shape != (hid,):
            raise ValueError(f"state width does not match hidden size {hid}")
    z = _complex_affine(p.w_r, p.w_i, x_t) + _complex_affine(p.u_r, p.u_i, h) + (p.b_r + 1j * p.b_i)
    i = split_sigmoid(z[:hid])
    f = split_sigmoid(z[hid:2 * hid])
    g = split_tanh(z[2 * hid:3 * hid])
    o = split_sigmoid(z[3 * hid:])
    c_new = split_mul(f, c) + split_mul(i, g)
    h_new = split_mul(o, split_tanh(c_new))
    return h_new, (h_new, c_new)


# --------------------------------------------------------------------------
# encoder stack


def complex_prelu(x, slope: float = PRELU_SLOPE):
    r, i = x.real, x.imag
    return np.where(r > 0, r, slope * r) + 1j * np.where(i > 0, i, slope * i)


@dataclass(frozen=True)
class ComplexEncoderBlock:
    conv: ComplexConvParams
    norm: ComplexBatchNormStats | None = None
    activation: str = "prelu"  # or "linear"


def encoder_stack_forward(x: ComplexSpectrogram | np.ndarray,
                          blocks: Sequence[ComplexEncoderBlock]) -> list[np.ndarray]:
    """Run conv -> batch norm -> activation per block; return every block output."""
    t = x.bins[None] if isinstance(x, ComplexSpectrogram) else np.asarray(x, dtype=np.complex128)
    if t.ndim == 2:
        t = t[None]
    outputs = []
    for idx, block in enumerate(blocks):
        if t.shape[0] != block.conv.in_channels:
            raise ValueError(
                f"block {idx}: expects {block.conv.in_channels} input channels, got {t.shape[0]}"
            )
        try:
            t = complex_conv2d(t, block.conv)
        except ValueError as exc:
            raise ValueError(f"block {idx}: {exc}") from exc
        if block.norm is not None:
            t = complex_batchnorm(t, block.norm)
        if block.activation == "prelu":
            t = complex_prelu(t)
        elif block.activation != "linear":
            raise ValueError(f"block {idx}: unknown activation {block.activation!r}")
        outputs.append(t)
    return outputs
