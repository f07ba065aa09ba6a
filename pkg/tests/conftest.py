import numpy as np
import pytest

from n2nvc.audio import Waveform, write_wav
from n2nvc.synth import NOISE_KINDS, noise, speech_like

SR = 8000


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def speech(rng):
    return speech_like(2.0, rng)


def random_wave(rng, n, scale=0.3, sr=SR):
    return Waveform(np.clip(scale * rng.standard_normal(n), -1, 1), sr)


def make_sources(root, n_clean=10, duration_s=1.5, seed=0, noise_s=2.5):
    """Write a small synthetic clean/noise tree and return the two directories."""
    rng = np.random.default_rng(seed)
    clean_dir, noise_dir = root / "clean", root / "noise"
    clean_dir.mkdir(parents=True, exist_ok=True)
    noise_dir.mkdir(parents=True, exist_ok=True)
    for i in range(n_clean):
        write_wav(speech_like(duration_s, rng, level=0.1, lead_in_s=0.1), clean_dir / f"utt{i:03d}.wav")
    for kind in NOISE_KINDS:
        write_wav(noise(kind, noise_s, rng), noise_dir / f"{kind}.wav")
    return clean_dir, noise_dir


@pytest.fixture
def sources(tmp_path):
    return make_sources(tmp_path)
