"""Noisy-to-noisy voice conversion toolkit: exact-SNR mixing, residual
background separation and superimposition, objective metrics, and the VQ and
complex-network building blocks as checkable numeric code."""

from .audio import Waveform, load_wav, mulaw_decode, mulaw_encode, read_wav, resample, write_wav
from .metrics import mcd, sar, sd_sdr, si_sdr
from .mixing import MixManifestEntry, build_corpus, fit_noise, mix_at_snr
from .separation import SeparationResult, separate, superimpose
from .spectral import DENOISER_STFT, VQ_STFT, StftConfig, istft, log_mel, mel_cepstra, stft
from .stoi import stoi

__version__ = "0.1.0"

__all__ = [
    "Waveform", "read_wav", "write_wav", "load_wav", "mulaw_encode", "mulaw_decode", "resample",
    "StftConfig", "DENOISER_STFT", "VQ_STFT", "stft", "istft", "log_mel", "mel_cepstra",
    "MixManifestEntry", "mix_at_snr", "fit_noise", "build_corpus",
    "SeparationResult", "separate", "superimpose",
    "si_sdr", "sd_sdr", "sar", "mcd", "stoi",
]
