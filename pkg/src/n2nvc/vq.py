"""Vector-quantized bottleneck: codebook lookup, EMA codebook updates, losses,
the straight-through gradient rule, and a small Conv1D encoder.

Nothing here depends on an autodiff framework. Gradients that the bottleneck
contributes are written out explicitly so they can be checked against finite
differences.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .kernels import conv2d, nearest_codewords
from .spectral import MelSpectrogram

N_CODES = 512
CODE_DIM = 64
BETA = 0.25
EMA_DECAY = 0.99
EMA_EPSILON = 1e-5
N_CLASSES = 256


@dataclass(frozen=True)
class Codebook:
    vectors: np.ndarray  # (K, D)
    ema_counts: np.ndarray  # (K,)
    ema_sums: np.ndarray  # (K, D)
    decay: float = EMA_DECAY
    epsilon: float = EMA_EPSILON

    def __post_init__(self):
        k, d = self.vectors.shape
        if self.ema_counts.shape != (k,) or self.ema_sums.shape != (k, d):
            raise ValueError("codebook arrays have inconsistent shapes")
        if not 0.0 < self.decay < 1.0:
            raise ValueError("decay must lie in (0, 1)")

    @property
    def size(self) -> int:
        return self.vectors.shape[0]

    @property
    def dim(self) -> int:
        return self.vectors.shape[1]

    @classmethod
    def random(cls, rng: np.random.Generator, size: int = N_CODES, dim: int = CODE_DIM,
               decay: float = EMA_DECAY, epsilon: float = EMA_EPSILON, scale: float = 1.0) -> "Codebook":
        vectors = scale * rng.standard_normal((size, dim))
        return cls.from_vectors(vectors, decay, epsilon)

    @classmethod
    def from_vectors(cls, vectors, decay: float = EMA_DECAY, epsilon: float = EMA_EPSILON) -> "Codebook":
        # unit counts make the smoothed counts exactly one, so vectors == sums
        vectors = np.array(vectors, dtype=np.float64)
        return cls(vectors, np.ones(vectors.shape[0]), vectors.copy(), decay, epsilon)


@dataclass(frozen=True)
class LatentSequence:
    z: np.ndarray  # (N, D) encoder outputs
    indices: np.ndarray  # (N,)
    quantized: np.ndarray  # (N, D), rows of the codebook
    distances: np.ndarray = field(repr=False, default=None)  # squared distance to the chosen codeword


@dataclass(frozen=True)
class VqLoss:
    reconstruction_nll: float
    commitment: float
    beta: float = BETA

    @property
    def total(self) -> float:
        return self.reconstruction_nll + self.beta * self.commitment


def quantize(cb: Codebook, z) -> LatentSequence:
    """Replace each row of ``z`` by its nearest codeword (lowest index wins ties)."""
    z = np.asarray(z, dtype=np.float64)
    if z.ndim != 2 or z.shape[1] != cb.dim:
        raise ValueError(f"expected latents of shape (N, {cb.dim}), got {z.shape}")
    idx, dist = nearest_codewords(z, cb.vectors)
    return LatentSequence(z, idx, cb.vectors[idx], dist)


def commitment_loss(z, zq) -> float:
    """Mean over rows of ||z - zq||^2; ``zq`` is a constant (stop-gradient)."""
    z, zq = np.asarray(z, dtype=np.float64), np.asarray(zq, dtype=np.float64)
    if z.shape != zq.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {zq.shape}")
    d = z - zq
    return float(np.einsum("nd,nd->", d, d) / z.shape[0])


def commitment_grad(z, zq) -> np.ndarray:
    z, zq = np.asarray(z, dtype=np.float64), np.asarray(zq, dtype=np.float64)
    return 2.0 * (z - zq) / z.shape[0]


def straight_through(z, zq) -> tuple[np.ndarray, Callable[[np.ndarray], np.ndarray]]:
    """Forward value ``zq``; the returned backward maps the output gradient to ``z`` unchanged."""
    z, zq = np.asarray(z), np.asarray(zq)
    if z.shape != zq.shape:
        raise ValueError(f"shape mismatch {z.shape} vs {zq.shape}")

    def backward(grad_out):
        grad_out = np.asarray(grad_out, dtype=np.float64)
        if grad_out.shape != z.shape:
            raise ValueError("gradient shape differs from the latent shape")
        return grad_out

    return zq.copy(), backward


def latent_grad(z, zq, downstream_grad, beta: float = BETA) -> np.ndarray:
    """Gradient at the encoder output of ``downstream(st(z)) + beta * commitment``."""
    _, backward = straight_through(z, zq)
    return backward(downstream_grad) + beta * commitment_grad(z, zq)


def reconstruction_nll(logits, targets) -> float:
    """Mean categorical cross-entropy of mu-law ``targets`` under ``logits`` (T, C)."""
    logits = np.asarray(logits, dtype=np.float64)
    targets = np.asarray(targets)
    if logits.ndim != 2 or logits.shape[0] != targets.shape[0]:
        raise ValueError(f"logits {logits.shape} do not match {targets.shape[0]} targets")
    if targets.size and (targets.min() < 0 or targets.max() >= logits.shape[1]):
        raise ValueError("target class out of range")
    shift = logits.max(axis=1, keepdims=True)
    lse = shift[:, 0] + np.log(np.exp(logits - shift).sum(axis=1))
    picked = logits[np.arange(logits.shape[0]), targets]
    return float(np.mean(lse - picked))


def vq_loss(logits, targets, z, zq, beta: float = BETA) -> VqLoss:
    return VqLoss(reconstruction_nll(logits, targets), commitment_loss(z, zq), beta)


def ema_update(cb: Codebook, z, indices) -> Codebook:
    """One exponential-moving-average step; returns the updated codebook.

    Counts and per-code sums decay by ``decay`` and absorb this batch's
    assignments; counts are Laplace-smoothed before dividing so that unused
    codes never divide by zero.
    """
    z = np.asarray(z, dtype=np.float64)
    indices = np.asarray(indices, dtype=np.int64)
    k, g = cb.size, cb.decay
    batch_counts = np.bincount(indices, minlength=k).astype(np.float64)
    batch_sums = np.zeros_like(cb.ema_sums)
    np.add.at(batch_sums, indices, z)
    counts = g * cb.ema_counts + (1.0 - g) * batch_counts
    sums = g * cb.ema_sums + (1.0 - g) * batch_sums
    total = counts.sum()
    smoothed = (counts + cb.epsilon) / (total + k * cb.epsilon) * total
    return replace(cb, vectors=sums / smoothed[:, None], ema_counts=counts, ema_sums=sums)


# --------------------------------------------------------------------------
# serialization: magic, K, D (uint32), decay, epsilon (float64), then
# counts, sums, vectors as little-endian float32

_CB_MAGIC = b"N2VQ"
_CB_HEADER = struct.Struct("<4sIIdd")


def save_codebook(cb: Codebook, path) -> None:
    header = _CB_HEADER.pack(_CB_MAGIC, cb.size, cb.dim, cb.decay, cb.epsilon)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes()
                    for a in (cb.ema_counts, cb.ema_sums, cb.vectors))
    Path(path).write_bytes(header + body)


def load_codebook(path) -> Codebook:
    raw = Path(path).read_bytes()
    magic, k, d, decay, eps = _CB_HEADER.unpack_from(raw, 0)
    if magic != _CB_MAGIC:
        raise ValueError(f"{path}: not a codebook file")
    data = np.frombuffer(raw, dtype="<f4", offset=_CB_HEADER.size).astype(np.float64)
    if data.size != k + 2 * k * d:
        raise ValueError(f"{path}: expected {k + 2 * k * d} floats, found {data.size}")
    counts = data[:k]
    sums = data[k:k + k * d].reshape(k, d)
    vectors = data[k + k * d:].reshape(k, d)
    return Codebook(vectors, counts, sums, decay, eps)


# --------------------------------------------------------------------------
# toy encoder: five Conv1D blocks, the third one halves the frame rate


@dataclass(frozen=True)
class ConvBlock:
    weight: np.ndarray  # (out, in, kernel)
    bias: np.ndarray  # (out,)
    stride: int = 1
    # inference-mode batch norm; None skips normalization
    bn_mean: np.ndarray | None = None
    bn_var: np.ndarray | None = None
    bn_gamma: np.ndarray | None = None
    bn_beta: np.ndarray | None = None
    bn_eps: float = 1e-5


ENCODER_KERNELS = (3, 3, 4, 3, 3)
ENCODER_STRIDES = (1, 1, 2, 1, 1)


def init_encoder(rng: np.random.Generator, n_mels: int = 80, width: int = CODE_DIM,
                 cond_dim: int = 0, batch_norm: bool = True) -> list[ConvBlock]:
    blocks = []
    in_ch = n_mels + cond_dim
    for k, s in zip(ENCODER_KERNELS, ENCODER_STRIDES):
        w = rng.standard_normal((width, in_ch, k)) / np.sqrt(in_ch * k)
        bn = {}
        if batch_norm:
            bn = dict(bn_mean=0.1 * rng.standard_normal(width), bn_var=rng.uniform(0.5, 2.0, width),
                      bn_gamma=rng.uniform(0.5, 1.5, width), bn_beta=0.1 * rng.standard_normal(width))
        blocks.append(ConvBlock(w, np.zeros(width), s, **bn))
        in_ch = width
    return blocks


def _same_padding(length: int, kernel: int, stride: int) -> tuple[int, int]:
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return total // 2, total - total // 2


def conv1d(x: np.ndarray, block: ConvBlock) -> np.ndarray:
    """'Same' padded Conv1D on (channels, T); output length ceil(T / stride)."""
    k = block.weight.shape[2]
    left, right = _same_padding(x.shape[1], k, block.stride)
    xp = np.pad(x, ((0, 0), (left, right)))
    out = conv2d(xp[:, None, :], block.weight[:, :, None, :], stride=(1, block.stride))
    return out[:, 0, :] + block.bias[:, None]


def _batch_norm(x: np.ndarray, b: ConvBlock) -> np.ndarray:
    if b.bn_mean is None:
        return x
    inv = b.bn_gamma / np.sqrt(b.bn_var + b.bn_eps)
    return (x - b.bn_mean[:, None]) * inv[:, None] + b.bn_beta[:, None]


_ACTIVATIONS = {"relu": lambda x: np.maximum(x, 0.0), "identity": lambda x: x}


def toy_encoder_forward(mel: MelSpectrogram | np.ndarray, blocks: Sequence[ConvBlock],
                        speaker: np.ndarray | None = None, activation: str = "relu") -> np.ndarray:
    """Encode (T, n_mels) log-mel frames to (ceil(T/2), width) latents.

    ``speaker`` is an optional conditioning vector tiled over time and stacked
    onto the mel channels; the first block must then expect the extra inputs.
    """
    frames = mel.frames if isinstance(mel, MelSpectrogram) else np.asarray(mel, dtype=np.float64)
    x = frames.T
    if speaker is not None:
        speaker = np.asarray(speaker, dtype=np.float64).reshape(-1, 1)
        x = np.concatenate([x, np.broadcast_to(speaker, (speaker.shape[0], x.shape[1]))], axis=0)
    act = _ACTIVATIONS[activation]
    for i, b in enumerate(blocks):
        if b.weight.shape[1] != x.shape[0]:
            raise ValueError(f"block {i} expects {b.weight.shape[1]} input channels, got {x.shape[0]}")
        x = act(_batch_norm(conv1d(x, b), b))
    return x.T


# --------------------------------------------------------------------------
# convergence demo on synthetic clusters


@dataclass(frozen=True)
class DemoStep:
    step: int
    commitment: float
    max_center_error: float  # worst distance between a cluster mean and its nearest codeword


def _farthest_point_init(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    chosen = [int(rng.integers(points.shape[0]))]
    d = np.sum((points - points[chosen[0]]) ** 2, axis=1)
    for _ in range(1, k):
        chosen.append(int(np.argmax(d)))
        d = np.minimum(d, np.sum((points - points[chosen[-1]]) ** 2, axis=1))
    return points[chosen]


def cluster_demo(clusters: int, steps: int, seed: int, dim: int = CODE_DIM,
                 points_per_cluster: int = 200, spread: float = 0.1, every: int = 100):
    """Fit a ``clusters``-word codebook to well-separated Gaussian blobs by EMA alone.

    Returns ``(codebook, cluster_means, trace)`` where the trace holds a
    :class:`DemoStep` every ``every`` steps and after the last one.
    """
    if clusters < 1 or steps < 0:
        raise ValueError("need at least one cluster and a non-negative step count")
    rng = np.random.default_rng(seed)
    centers = 5.0 * rng.standard_normal((clusters, dim))
    points = (centers[:, None, :] + spread * rng.standard_normal((clusters, points_per_cluster, dim)))
    points = points.reshape(-1, dim)
    means = points.reshape(clusters, points_per_cluster, dim).mean(axis=1)
    cb = Codebook.from_vectors(_farthest_point_init(points, clusters, rng))

    def record(step, lat):
        err = np.sqrt(((means[:, None, :] - cb.vectors[None]) ** 2).sum(-1)).min(axis=1).max()
        return DemoStep(step, commitment_loss(lat.z, lat.quantized), float(err))

    trace = []
    for step in range(1, steps + 1):
        lat = quantize(cb, points)
        cb = ema_update(cb, points, lat.indices)
        if step % every == 0 or step == steps:
            trace.append(record(step, quantize(cb, points)))
    return cb, means, trace


def run_cluster_demo(clusters: int, steps: int, seed: int, dim: int = CODE_DIM,
                     points_per_cluster: int = 200) -> list[str]:
    _, _, trace = cluster_demo(clusters, steps, seed, dim, points_per_cluster)
    return [f"step={t.step} commitment={t.commitment:.6g} max_center_error={t.max_center_error:.3e}"
            for t in trace]
