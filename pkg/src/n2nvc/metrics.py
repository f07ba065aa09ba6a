"""Objective metrics: SI-SDR, SD-SDR, SAR and DTW-aligned mel-cepstral distortion.

All ratio metrics are reported in dB and capped to [-120, 120]: the error
energy is floored at 1e-12 of the target energy, and a vanishing target gives
the lower cap.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .audio import Waveform
from .kernels import dtw_accumulate
from .spectral import N_CEPSTRA, N_MELS, VQ_STFT, StftConfig, log_mel, mel_cepstra, power_spectrogram

CAP_DB = 120.0
REL_FLOOR = 1e-12
MCD_SCALE = 10.0 / np.log(10.0) * np.sqrt(2.0)
MCD_GATE_DB = 40.0


def _samples(x) -> np.ndarray:
    return np.asarray(x.samples if isinstance(x, Waveform) else x, dtype=np.float64)


def _pair(ref, est):
    r, e = _samples(ref), _samples(est)
    if r.shape != e.shape:
        raise ValueError(f"length mismatch: reference {r.shape[0]}, estimate {e.shape[0]}")
    ref_energy = float(r @ r)
    if ref_energy == 0.0:
        raise ValueError("zero reference")
    return r, e, ref_energy


def ratio_db(target_energy: float, error_energy: float) -> float:
    """10*log10(target/error) with the floor and caps described above."""
    if target_energy <= 0.0:
        return -CAP_DB
    error_energy = max(error_energy, REL_FLOOR * target_energy)
    return float(np.clip(10.0 * np.log10(target_energy / error_energy), -CAP_DB, CAP_DB))


def si_sdr(ref, est) -> float:
    r, e, ref_energy = _pair(ref, est)
    alpha = (e @ r) / ref_energy
    target = alpha * r
    resid = target - e
    return ratio_db(float(target @ target), float(resid @ resid))


def sd_sdr(ref, est) -> float:
    """Scale-dependent SDR: optimally scaled reference over the *unscaled* error."""
    r, e, ref_energy = _pair(ref, est)
    alpha = (e @ r) / ref_energy
    target = alpha * r
    resid = r - e
    return ratio_db(float(target @ target), float(resid @ resid))


def sar(ref, noise_ref, est) -> float:
    """Signal-to-artifact ratio with a time-invariant projection.

    ``est`` is split into its orthogonal projection onto span{ref, noise_ref}
    and the remainder (the artifact). A rank-deficient span degrades to the
    projection onto whichever direction is non-zero.
    """
    r, e, _ = _pair(ref, est)
    n = _samples(noise_ref)
    if n.shape != r.shape:
        raise ValueError("noise reference length differs from reference")
    basis = np.stack([r, n], axis=1)
    coef, *_ = np.linalg.lstsq(basis, e, rcond=None)
    proj = basis @ coef
    artifact = e - proj
    return ratio_db(float(proj @ proj), float(artifact @ artifact))


# --------------------------------------------------------------------------
# DTW and MCD


def dtw(cost: np.ndarray) -> tuple[float, np.ndarray]:
    """Align two sequences given their pairwise cost matrix.

    Steps are (1,1), (1,0), (0,1). Returns the accumulated cost and the path as
    an array of (i, j) pairs running from (0, 0) to (n-1, m-1). Ties in the
    backtrack prefer the diagonal, then the step in i.
    """
    cost = np.asarray(cost, dtype=np.float64)
    if cost.ndim != 2 or 0 in cost.shape:
        raise ValueError("cost must be a non-empty 2-D matrix")
    acc = dtw_accumulate(cost)
    i, j = cost.shape[0] - 1, cost.shape[1] - 1
    path = [(i, j)]
    while i > 0 or j > 0:
        if i == 0:
            j -= 1
        elif j == 0:
            i -= 1
        else:
            diag, up, left = acc[i - 1, j - 1], acc[i - 1, j], acc[i, j - 1]
            if diag <= up and diag <= left:
                i, j = i - 1, j - 1
            elif up <= left:
                i -= 1
            else:
                j -= 1
        path.append((i, j))
    return float(acc[-1, -1]), np.array(path[::-1], dtype=np.int64)


@dataclass(frozen=True)
class McdResult:
    value: float
    path: np.ndarray  # (P, 2) index pairs into ref_cepstra / est_cepstra
    ref_cepstra: np.ndarray
    est_cepstra: np.ndarray
    ref_frames: np.ndarray  # frame indices kept from the reference
    est_frames: np.ndarray  # frame indices kept from the estimate


def frame_log_energy_db(w: Waveform, cfg: StftConfig = VQ_STFT) -> np.ndarray:
    energy = power_spectrogram(w, cfg).sum(axis=1)
    return 10.0 * np.log10(np.maximum(energy, 1e-30))


def mcd_details(ref: Waveform, est: Waveform, n_coeffs: int = N_CEPSTRA, *,
                cfg: StftConfig = VQ_STFT, n_mels: int = N_MELS,
                gate_db: float = MCD_GATE_DB) -> McdResult:
    if ref.sample_rate_hz != est.sample_rate_hz:
        raise ValueError("sample rates differ")
    if not np.any(ref.samples) or not np.any(est.samples):
        raise ValueError("MCD needs non-silent reference and estimate")
    ref_energy = frame_log_energy_db(ref, cfg)
    threshold = ref_energy.max() - gate_db
    kept = np.flatnonzero(ref_energy >= threshold)
    est_kept = np.flatnonzero(frame_log_energy_db(est, cfg) >= threshold)
    if est_kept.size == 0:
        raise ValueError("every estimate frame lies below the reference speech gate")
    c_ref = mel_cepstra(log_mel(ref, cfg, n_mels), n_coeffs)[kept]
    c_est = mel_cepstra(log_mel(est, cfg, n_mels), n_coeffs)[est_kept]
    diff = c_ref[:, None, :] - c_est[None, :, :]
    cost = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
    _, path = dtw(cost)
    value = float(MCD_SCALE * np.mean(cost[path[:, 0], path[:, 1]]))
    return McdResult(value, path, c_ref, c_est, kept, est_kept)


def mcd(ref: Waveform, est: Waveform, n_coeffs: int = N_CEPSTRA, **kwargs) -> float:
    """Mel-cepstral distortion in dB over speech frames of ``ref``, DTW-aligned.

    The speech gate sits ``gate_db`` below the loudest reference frame; frames
    of either signal whose energy falls under it are dropped before alignment.
    The threshold comes from the reference alone, so the measure is not
    symmetric.
    """
    return mcd_details(ref, est, n_coeffs, **kwargs).value
