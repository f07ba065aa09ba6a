"""Acceptance criteria 1-10, one check per criterion.

Each ``criterion_N`` returns ``(ok, detail)``. Under pytest every criterion
prints one ``PASS``/``FAIL`` line and then asserts; run this file directly
(``python3 tests/test_acceptance.py``) to get just the ten lines.
"""

from __future__ import annotations

import contextlib
import io
import json
import math
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.signal import correlate2d

sys.path.insert(0, str(Path(__file__).resolve().parent))

from conftest import make_sources  # noqa: E402
from n2nvc.audio import Waveform, mulaw_decode, mulaw_encode, read_wav, write_wav  # noqa: E402
from n2nvc.cli import main as cli  # noqa: E402
from n2nvc.complex_nn import ComplexConvParams, batch_statistics, complex_batchnorm, complex_conv2d  # noqa: E402
from n2nvc.metrics import mcd, sar, sd_sdr, si_sdr  # noqa: E402
from n2nvc.mixing import MANIFEST_NAME, fit_noise, measured_snr_db, mix_at_snr, read_manifest  # noqa: E402
from n2nvc.separation import (IdentityDenoiser, Pcm16Output, ZeroDenoiser, irm_oracle_denoiser,  # noqa: E402
                              separate, specsub_denoiser, superimpose)
from n2nvc.spectral import DENOISER_STFT, VQ_STFT, istft, stft  # noqa: E402
from n2nvc.stoi import stoi  # noqa: E402
from n2nvc.synth import NOISE_KINDS, noise, speech_like  # noqa: E402
from n2nvc.vq import (Codebook, VqLoss, cluster_demo, commitment_grad, commitment_loss, quantize,  # noqa: E402
                      reconstruction_nll)

SR = 8000


def _mixture(rng, snr_db, duration_s=1.5, kind=None):
    clean = speech_like(duration_s, rng, level=0.1, lead_in_s=0.1)
    kind = kind or NOISE_KINDS[int(rng.integers(len(NOISE_KINDS)))]
    res = mix_at_snr(clean, noise(kind, duration_s, rng), snr_db)
    return clean, res


def _cli(*argv):
    with contextlib.redirect_stdout(io.StringIO()):
        code = cli([str(a) for a in argv])
    if code != 0:
        raise RuntimeError(f"n2nvc {argv[0]} exited with {code}")


def _run_pipeline(sources, out: Path, seed: int, denoiser: str = "specsub"):
    clean, noise_dir = sources
    _cli("mix", "--clean", clean, "--noise", noise_dir, "--snr", "7,11,15,19", "--seed", seed,
         "--out", out / "mix")
    _cli("separate", "--denoiser", denoiser, "--in", out / "mix", "--out-speech", out / "speech",
         "--out-bg", out / "bg")
    _cli("convert", "--in", out / "speech", "--out", out / "converted")
    _cli("superimpose", "--converted", out / "converted", "--bg", out / "bg", "--out", out / "final")
    _cli("eval", "--manifest", out / "mix" / MANIFEST_NAME, "--est", out / "speech",
         "--out-json", out / "report.json", "--out-table", out / "report.txt")


def _tree(root: Path) -> dict[str, bytes]:
    return {p.relative_to(root).as_posix(): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


# --------------------------------------------------------------------------


def criterion_1():
    """Mixing exactness over 1,000 random pairs."""
    rng = np.random.default_rng(1)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        n = int(rng.integers(400, 16000))
        speech = Waveform(rng.uniform(0.01, 0.5) * rng.standard_normal(n), SR)
        raw = Waveform(rng.uniform(0.01, 0.5) * rng.standard_normal(int(rng.integers(200, 20000))), SR)
        fitted = fit_noise(raw, n, int(rng.integers(len(raw))))
        snr = rng.uniform(-20.0, 60.0)
        res = mix_at_snr(speech, fitted, snr)
        worst = max(worst, abs(measured_snr_db(speech, res.scaled_noise) - snr))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-6 and elapsed < 30.0
    return ok, f"max |measured - requested| = {worst:.2e} dB, {elapsed:.1f} s"


def criterion_2():
    """speech_estimate + background == noisy within one ulp, four denoisers, 100 mixtures."""
    rng = np.random.default_rng(2)
    bad = {}
    for _ in range(100):
        clean, res = _mixture(rng, rng.uniform(-5.0, 25.0), duration_s=1.0)
        x = res.noisy
        for d in (IdentityDenoiser(), ZeroDenoiser(), specsub_denoiser(), irm_oracle_denoiser(clean)):
            r = separate(d, x)
            e, b = r.speech_estimate.samples, r.background.samples
            ulp = np.spacing(np.maximum.reduce([np.abs(x.samples), np.abs(e), np.abs(b)]))
            if not np.all(np.abs((e + b) - x.samples) <= ulp):
                bad[d.name] = bad.get(d.name, 0) + 1
    return not bad, "all 400 separations within 1 ulp" if not bad else f"violations: {bad}"


def criterion_3():
    """mix -> separate -> identity convert -> superimpose(add) is bit-exact on 40 utterances."""
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        sources = make_sources(root / "src")
        t0 = time.perf_counter()
        _run_pipeline(sources, root / "run", seed=3)
        elapsed = time.perf_counter() - t0
        mixed = sorted((root / "run" / "mix").glob("*.wav"))
        file_diff = sum((root / "run" / "final" / p.name).read_bytes() != p.read_bytes() for p in mixed)
        # pre-clamp: redo the chain in memory and compare floats before any WAV encoding
        den = Pcm16Output(specsub_denoiser())
        float_diff = 0
        for p in mixed:
            x = read_wav(p)
            r = separate(den, x)
            out = superimpose(r.speech_estimate, r.background, "add")
            float_diff += int(np.any(out.samples != x.samples))
    ok = len(mixed) == 40 and file_diff == 0 and float_diff == 0 and elapsed < 60.0
    return ok, (f"{len(mixed)} utterances, {file_diff} file mismatches, {float_diff} pre-clamp "
                f"mismatches, pipeline {elapsed:.1f} s")


def _orthogonal_to(v, basis):
    q, _ = np.linalg.qr(np.stack(basis, axis=1))
    return v - q @ (q.T @ v)


def criterion_4():
    rng = np.random.default_rng(4)
    notes = []
    # scale invariance
    worst_scale = 0.0
    for _ in range(200):
        r, e = rng.standard_normal(1000), rng.standard_normal(1000)
        e = r + rng.uniform(0.01, 2.0) * e
        base = si_sdr(r, e)
        for a in (1e-3, 0.5, 3.0, 1e3, -2.0):
            worst_scale = max(worst_scale, abs(si_sdr(r, a * e) - base))
    ok_scale = worst_scale <= 1e-9
    notes.append(f"scale drift {worst_scale:.1e} dB")
    # sd <= si
    viol = 0
    for _ in range(10_000):
        n = int(rng.integers(16, 256))
        r = rng.standard_normal(n)
        e = rng.uniform(0, 3) * r + rng.uniform(0, 3) * rng.standard_normal(n)
        viol += sd_sdr(r, e) > si_sdr(r, e)
    notes.append(f"sd>si in {viol}/10000")
    # doubled reference
    r = rng.standard_normal(4000)
    doubled = sd_sdr(r, 2.0 * r)
    ok_doubled = abs(doubled - 6.0206) <= 1e-4
    notes.append(f"sd(ref, 2ref) = {doubled:.6f}")
    # orthogonal artifact at 20 dB
    s, n = rng.standard_normal(4000), rng.standard_normal(4000)
    target = s + 0.5 * n
    art = _orthogonal_to(rng.standard_normal(4000), [s, n])
    art *= np.sqrt((target @ target) / (art @ art) / 100.0)
    sar_val = sar(s, n, target + art)
    ok_sar = abs(sar_val - 20.0) <= 1e-6
    notes.append(f"sar = {sar_val:.9f}")
    # identity cases
    x = speech_like(2.0, rng)
    st, md = stoi(x, x), mcd(x, x)
    ok_id = abs(st - 1.0) <= 1e-9 and md == 0.0
    notes.append(f"stoi(x,x) = {st:.12f}, mcd(x,x) = {md}")
    return ok_scale and viol == 0 and ok_doubled and ok_sar and ok_id, "; ".join(notes)


def criterion_5():
    """IRM oracle: speech SI-SDR rises and background SI-SDR falls with SNR."""
    rng = np.random.default_rng(5)
    levels = (7.0, 11.0, 15.0, 19.0)
    t0 = time.perf_counter()
    pairs = [(speech_like(2.0, rng, level=0.1, lead_in_s=0.1), noise(k, 2.0, rng))
             for _ in range(4) for k in NOISE_KINDS]
    speech_means, bg_means = [], []
    for snr in levels:
        sp, bg = [], []
        for clean, raw in pairs:
            res = mix_at_snr(clean, raw, snr)
            out = separate(irm_oracle_denoiser(clean), res.noisy)
            sp.append(si_sdr(clean, out.speech_estimate))
            bg.append(si_sdr(res.scaled_noise, out.background))
        speech_means.append(np.mean(sp))
        bg_means.append(np.mean(bg))
    elapsed = time.perf_counter() - t0
    up = all(b > a for a, b in zip(speech_means, speech_means[1:]))
    down = all(b < a for a, b in zip(bg_means, bg_means[1:]))
    fmt = lambda v: "/".join(f"{x:.2f}" for x in v)  # noqa: E731
    return up and down and elapsed < 120.0, (f"speech {fmt(speech_means)} dB, background {fmt(bg_means)} dB "
                                             f"over {len(pairs)} pairs, {elapsed:.1f} s")


def criterion_6():
    rng = np.random.default_rng(6)
    levels = (0.0, 5.0, 10.0, 15.0, 20.0)
    pairs = [(speech_like(2.0, rng, level=0.1, lead_in_s=0.1),
              noise(NOISE_KINDS[i % len(NOISE_KINDS)], 2.0, rng)) for i in range(50)]
    means = []
    for snr in levels:
        vals = [stoi(clean, mix_at_snr(clean, raw, snr).noisy) for clean, raw in pairs]
        means.append(float(np.mean(vals)))
    ok = all(b > a for a, b in zip(means, means[1:]))
    return ok, "mean STOI " + "/".join(f"{m:.4f}" for m in means) + " at 0/5/10/15/20 dB"


def criterion_7():
    rng = np.random.default_rng(7)
    notes = []
    cb = Codebook.random(rng)
    z = rng.standard_normal((10_000, cb.dim))
    d2 = (z**2).sum(1)[:, None] - 2.0 * z @ cb.vectors.T + (cb.vectors**2).sum(1)[None]
    mismatch = int(np.sum(quantize(cb, z).indices != np.argmin(d2, axis=1)))
    notes.append(f"argmin mismatches {mismatch}/10000")
    # commitment gradient vs central differences
    zs = rng.standard_normal((8, cb.dim))
    zq = quantize(cb, zs).quantized
    analytic = commitment_grad(zs, zq)
    numeric = np.zeros_like(zs)
    h = 1e-6
    for idx in np.ndindex(zs.shape):
        p, m = zs.copy(), zs.copy()
        p[idx] += h
        m[idx] -= h
        numeric[idx] = (commitment_loss(p, zq) - commitment_loss(m, zq)) / (2 * h)
    rel = float(np.linalg.norm(numeric - analytic) / np.linalg.norm(analytic))
    notes.append(f"grad rel err {rel:.1e}")
    # EMA convergence to cluster means
    _, _, trace = cluster_demo(clusters=4, steps=1000, seed=7)
    ema_err = trace[-1].max_center_error
    notes.append(f"EMA center error {ema_err:.1e}")
    # perfect case and uniform logits
    targets = rng.integers(0, 256, 100)
    logits = np.zeros((100, 256))
    logits[np.arange(100), targets] = 1e3
    total = VqLoss(reconstruction_nll(logits, targets), commitment_loss(zq, zq)).total
    notes.append(f"perfect total {total}")
    uniform = reconstruction_nll(np.full((100, 256), 0.7), targets)
    notes.append(f"uniform NLL - log 256 = {uniform - math.log(256):.1e}")
    ok = (mismatch == 0 and rel <= 1e-6 and ema_err <= 1e-3 and total == 0.0
          and abs(uniform - math.log(256)) <= 1e-9)
    return ok, "; ".join(notes)


def _four_real_convs(x, p):
    def conv(w, v):
        vp = np.pad(v, ((0, 0), (p.padding[0],) * 2, (p.padding[1],) * 2))
        out = np.stack([sum(correlate2d(vp[c], w[o, c], mode="valid") for c in range(v.shape[0]))
                        for o in range(w.shape[0])])
        return out[:, ::p.stride[0], ::p.stride[1]]

    re = conv(p.wr, x.real) - conv(p.wi, x.imag) + p.br[:, None, None]
    im = conv(p.wr, x.imag) + conv(p.wi, x.real) + p.bi[:, None, None]
    return re + 1j * im


def criterion_8():
    rng = np.random.default_rng(8)
    worst, worst_i = 0.0, 0.0
    for _ in range(100):
        cin, cout = int(rng.integers(1, 4)), int(rng.integers(1, 4))
        kernel = (int(rng.integers(1, 5)), int(rng.integers(1, 5)))
        stride = (int(rng.integers(1, 3)), int(rng.integers(1, 3)))
        padding = (int(rng.integers(0, 3)), int(rng.integers(0, 3)))
        shape = (cin, int(rng.integers(kernel[0], 12)), int(rng.integers(kernel[1], 12)))
        x = rng.standard_normal(shape) + 1j * rng.standard_normal(shape)
        p = ComplexConvParams.random(rng, cin, cout, kernel, stride, padding)
        worst = max(worst, float(np.max(np.abs(complex_conv2d(x, p) - _four_real_convs(x, p)))))
        nobias = ComplexConvParams(p.wr, p.wi, np.zeros(cout), np.zeros(cout), stride, padding)
        worst_i = max(worst_i, float(np.max(np.abs(complex_conv2d(1j * x, nobias)
                                                   - 1j * complex_conv2d(x, nobias)))))
    # batch norm whitening on a correlated complex batch
    mix = np.array([[1.5, 0.9], [0.2, 0.4]])
    raw = rng.standard_normal((3, 2, 4000))
    pairs = np.einsum("ij,cjn->cin", mix, raw) + np.array([1.0, -2.0])[None, :, None]
    x = (pairs[:, 0] + 1j * pairs[:, 1]).reshape(3, 40, 100)
    y = complex_batchnorm(x, batch_statistics(x))
    cov_err = float(np.max(np.abs(batch_statistics(y).cov - np.eye(2))))
    ok = worst <= 1e-9 and worst_i <= 1e-9 and cov_err <= 1e-6
    return ok, (f"max conv error {worst:.1e}, i-equivariance error {worst_i:.1e}, "
                f"whitened covariance error {cov_err:.1e}")


def _mulaw_cell_bound(codes, mu=255):
    k = np.abs(codes - (mu + 1) // 2 + (codes <= mu // 2))
    inv = lambda y: np.expm1(y * math.log1p(mu)) / mu  # noqa: E731
    lo, mid, hi = inv(2.0 * k / mu), inv((2.0 * k + 1) / mu), inv(np.minimum(2.0 * (k + 1) / mu, 1.0))
    return np.maximum(mid - lo, hi - mid)


def criterion_9():
    rng = np.random.default_rng(9)
    notes = []
    stft_err = 0.0
    for cfg in (DENOISER_STFT, VQ_STFT):
        for x in (speech_like(1.7, rng), Waveform(0.3 * rng.standard_normal(12_345), SR)):
            y = istft(stft(x, cfg))
            stft_err = max(stft_err, float(np.linalg.norm(y.samples - x.samples) / np.linalg.norm(x.samples)))
    notes.append(f"istft rel err {stft_err:.1e}")
    codes = np.arange(256)
    ident = bool(np.array_equal(mulaw_encode(mulaw_decode(codes)), codes))
    x = np.concatenate([np.linspace(-1.0, 1.0, 200_001), rng.uniform(-1, 1, 100_000)])
    c = mulaw_encode(x)
    excess = float(np.max(np.abs(mulaw_decode(c).samples - x) - _mulaw_cell_bound(c)))
    notes.append(f"mu-law identity {ident}, bound excess {excess:.1e}")
    with tempfile.TemporaryDirectory() as tmp:
        w = Waveform(rng.uniform(-1, 1, 50_000), SR)
        write_wav(w, Path(tmp) / "a.wav")
        wav_err = float(np.max(np.abs(read_wav(Path(tmp) / "a.wav").samples - w.samples)))
    notes.append(f"WAV error {wav_err * 32768:.3f} steps")
    ok = stft_err <= 1e-6 and ident and excess <= 1e-12 and wav_err <= 1.0 / 32768
    return ok, "; ".join(notes)


def criterion_10():
    with tempfile.TemporaryDirectory() as tmp:
        root = Path(tmp)
        sources = make_sources(root / "src")
        _run_pipeline(sources, root / "a", seed=10)
        _run_pipeline(sources, root / "b", seed=10)
        a, b = _tree(root / "a"), _tree(root / "b")
        report = json.loads((root / "a" / "report.json").read_text())
        n_manifest = len(read_manifest(root / "a" / "mix" / MANIFEST_NAME))
    same = a == b
    return same and n_manifest == 40 and bool(report["per_utterance"]), (
        f"{len(a)} files compared, {'identical' if same else 'DIFFERENT'}")


CRITERIA = {
    1: ("mixing exactness", criterion_1),
    2: ("residual identity", criterion_2),
    3: ("end-to-end identity", criterion_3),
    4: ("metric correctness", criterion_4),
    5: ("IRM trend", criterion_5),
    6: ("STOI monotonicity", criterion_6),
    7: ("VQ suite", criterion_7),
    8: ("complex-NN suite", criterion_8),
    9: ("round trips", criterion_9),
    10: ("determinism", criterion_10),
}


def report(number: int) -> tuple[bool, str]:
    name, fn = CRITERIA[number]
    ok, detail = fn()
    line = f"{'PASS' if ok else 'FAIL'} criterion {number} ({name}): {detail}"
    return ok, line


@pytest.mark.parametrize("number", sorted(CRITERIA))
def test_criterion(number, capsys):
    ok, line = report(number)
    with capsys.disabled():
        print(f"\n{line}")
    assert ok, line


if __name__ == "__main__":
    results = [report(n) for n in sorted(CRITERIA)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
