import numpy as np
import pytest

from n2nvc.audio import Waveform, quantize_pcm16
from n2nvc.metrics import si_sdr
from n2nvc.mixing import fit_noise, mix_at_snr
from n2nvc.separation import (Denoiser, IdentityDenoiser, Pcm16Output, ZeroDenoiser, ideal_ratio_mask,
                              irm_oracle_denoiser, match_length, separate, specsub_denoiser,
                              superimpose)
from n2nvc.spectral import DENOISER_STFT, istft, stft
from n2nvc.synth import NOISE_KINDS, noise, speech_like

from conftest import random_wave


def ulp_close(result):
    """speech + background == noisy within one ulp of the largest operand, per sample."""
    x, e, b = result.noisy.samples, result.speech_estimate.samples, result.background.samples
    ulp = np.spacing(np.maximum.reduce([np.abs(x), np.abs(e), np.abs(b)]))
    return np.all(np.abs((e + b) - x) <= ulp)


def mixture(rng, snr=7.0, kind="white", dur=2.0, lead_in=0.0):
    clean = speech_like(dur, rng, lead_in_s=lead_in)
    n = fit_noise(noise(kind, dur + 0.5, rng), len(clean), 0)
    res = mix_at_snr(clean, n, snr)
    return clean, res.noisy


def test_identity_background_zero(rng):
    _, noisy = mixture(rng)
    r = separate(IdentityDenoiser(), noisy)
    assert not np.any(r.background.samples)


def test_zero_background_is_noisy(rng):
    _, noisy = mixture(rng)
    r = separate(ZeroDenoiser(), noisy)
    np.testing.assert_array_equal(r.background.samples, noisy.samples)


@pytest.mark.parametrize("name", ["identity", "zero", "specsub", "irm"])
def test_residual_identity(rng, name):
    for _ in range(3):
        clean, noisy = mixture(rng, snr=rng.uniform(0, 20))
        d = {"identity": IdentityDenoiser(), "zero": ZeroDenoiser(), "specsub": specsub_denoiser(),
             "irm": irm_oracle_denoiser(clean)}[name]
        assert isinstance(d, Denoiser)
        assert ulp_close(separate(d, noisy))


def test_length_mismatch_is_error(rng):
    class Short:
        name = "short"

        def __call__(self, w):
            return w.with_samples(w.samples[:-1])

    with pytest.raises(ValueError, match="short"):
        separate(Short(), random_wave(rng, 100))


def test_pcm16_wrapper_sums_exactly(rng):
    _, noisy = mixture(rng)
    noisy = noisy.with_samples(quantize_pcm16(noisy.samples))
    r = separate(Pcm16Output(specsub_denoiser()), noisy)
    np.testing.assert_array_equal(quantize_pcm16(r.background.samples), r.background.samples)
    np.testing.assert_array_equal(r.speech_estimate.samples + r.background.samples, noisy.samples)


# -- superimpose --------------------------------------------------------------


def test_drop_returns_converted(rng):
    c = random_wave(rng, 100)
    assert superimpose(c, random_wave(rng, 100), "drop") is c


def test_add_identity_pipeline(rng):
    clean, noisy = mixture(rng)
    r = separate(specsub_denoiser(), noisy)
    out = superimpose(r.speech_estimate, r.background, "add")
    ulp = np.spacing(np.maximum(np.abs(noisy.samples), np.abs(r.background.samples)))
    assert np.all(np.abs(out.samples - noisy.samples) <= ulp)


def test_add_silence(rng):
    c = random_wave(rng, 100)
    out = superimpose(c, Waveform(np.zeros(100), 8000), "add")
    np.testing.assert_array_equal(out.samples, c.samples)


def test_length_policy(rng, caplog):
    bg = random_wave(rng, 100)
    longer = superimpose(random_wave(rng, 120), bg)
    shorter = superimpose(Waveform(np.ones(80) * 0.1, 8000), Waveform(np.zeros(100), 8000))
    assert len(longer) == 100 and len(shorter) == 100
    assert np.all(shorter.samples[80:] == 0)
    assert any("length mismatch" in r.getMessage() for r in caplog.records)


def test_bad_mode(rng):
    with pytest.raises(ValueError):
        superimpose(random_wave(rng, 10), random_wave(rng, 10), "mix")


def test_match_length_noop(rng):
    w = random_wave(rng, 10)
    assert match_length(w, 10) is w


# -- spectral subtraction -----------------------------------------------------


@pytest.mark.parametrize("kind", ["white", "hum"])
def test_specsub_removes_stationary_noise(rng, kind):
    n = noise(kind, 3.0, rng)
    out = specsub_denoiser()(n)
    assert out.power() <= 0.1 * n.power()


def test_specsub_keeps_speech_with_quiet_lead_in(rng):
    clean, noisy = mixture(rng, snr=30.0, lead_in=0.3)
    out = specsub_denoiser()(noisy)
    assert si_sdr(clean, out) >= si_sdr(clean, noisy) - 1.0


def test_specsub_zero_oversubtraction_passes_through(rng):
    _, noisy = mixture(rng)
    out = specsub_denoiser(oversubtraction=0.0)(noisy)
    ref = istft(stft(noisy, DENOISER_STFT))
    np.testing.assert_allclose(out.samples, ref.samples, atol=1e-12)
    assert np.linalg.norm(out.samples - noisy.samples) <= 1e-6 * np.linalg.norm(noisy.samples)


def test_specsub_profile_too_long(rng):
    with pytest.raises(ValueError):
        specsub_denoiser(noise_profile_ms=300)(random_wave(rng, 2000))


# -- ideal ratio mask ---------------------------------------------------------


def test_irm_no_noise_is_pass_through(rng):
    clean = speech_like(1.0, rng)
    d = irm_oracle_denoiser(clean)
    spec_mask = d.mask(clean)
    nz = np.abs(stft(clean, DENOISER_STFT).bins) > 0
    np.testing.assert_array_equal(spec_mask[nz], 1.0)
    np.testing.assert_allclose(d(clean).samples, clean.samples, atol=1e-9)


def test_irm_zero_clean_gives_silence(rng):
    n = noise("white", 1.0, rng)
    d = irm_oracle_denoiser(Waveform(np.zeros(len(n)), 8000))
    assert not np.any(d.mask(n))
    assert not np.any(d(n).samples)


def test_mask_formula():
    s = np.array([3 + 4j, 0, 1])
    n = np.array([0, 0, 1j])
    np.testing.assert_array_equal(ideal_ratio_mask(s, n), [1.0, 0.0, 0.5])


@pytest.mark.parametrize("kind", NOISE_KINDS)
def test_irm_at_7db_gains_at_least_12db(rng, kind):
    clean, noisy = mixture(rng, snr=7.0, kind=kind, dur=3.0)
    assert si_sdr(clean, irm_oracle_denoiser(clean)(noisy)) >= 12.0


def test_irm_misaligned(rng):
    d = irm_oracle_denoiser(random_wave(rng, 1000))
    with pytest.raises(ValueError):
        d(random_wave(rng, 1001))
