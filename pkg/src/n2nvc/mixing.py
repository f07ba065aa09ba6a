"""Noisy-corpus synthesis at exact SNRs with a replayable JSON-lines manifest."""

from __future__ import annotations

import json
import logging
import os
import tempfile
import time
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, fields
from pathlib import Path
from typing import Callable, NamedTuple, Sequence

import numpy as np

from .audio import Waveform, load_wav, write_wav

log = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.jsonl"


class ZeroPowerError(ValueError):
    pass


@dataclass(frozen=True)
class MixManifestEntry:
    utt_id: str
    clean_path: str
    noise_path: str
    snr_db: float
    seed: int
    noise_offset_samples: int
    noise_gain: float

    def __post_init__(self):
        if not np.isfinite(self.snr_db):
            raise ValueError(f"{self.utt_id}: snr_db must be finite")
        if not self.noise_gain > 0:
            raise ValueError(f"{self.utt_id}: noise_gain must be positive")

    def to_json(self) -> str:
        return json.dumps(asdict(self), ensure_ascii=False)

    @classmethod
    def from_json(cls, line: str) -> "MixManifestEntry":
        raw = json.loads(line)
        names = [f.name for f in fields(cls)]
        missing = [n for n in names if n not in raw]
        if missing:
            raise ValueError(f"manifest line lacks {missing}")
        return cls(**{n: raw[n] for n in names})


class MixResult(NamedTuple):
    noisy: Waveform
    scaled_noise: Waveform
    gain: float


def measured_snr_db(speech: Waveform, noise: Waveform) -> float:
    return 10.0 * np.log10(speech.power() / noise.power())


def mix_at_snr(speech: Waveform, noise: Waveform, snr_db: float) -> MixResult:
    """Scale ``noise`` so that speech-to-noise power is ``snr_db``; add it.

    Power is the mean square over the full clip. Both inputs must have the same
    length and rate (use :func:`fit_noise` first).
    """
    if speech.sample_rate_hz != noise.sample_rate_hz:
        raise ValueError(f"rate mismatch: {speech.sample_rate_hz} vs {noise.sample_rate_hz} Hz")
    if len(speech) != len(noise):
        raise ValueError(f"length mismatch: {len(speech)} vs {len(noise)} samples")
    if not np.isfinite(snr_db):
        raise ValueError("snr_db must be finite")
    p_s, p_n = speech.power(), noise.power()
    if p_s == 0.0 or p_n == 0.0:
        raise ZeroPowerError("zero-power input")
    gain = float(np.sqrt(p_s / (p_n * 10.0 ** (snr_db / 10.0))))
    scaled = noise.samples * gain
    return MixResult(speech.with_samples(speech.samples + scaled), noise.with_samples(scaled), gain)


def fit_noise(noise: Waveform, target_len: int, offset: int = 0) -> Waveform:
    """Tile ``noise`` cyclically from ``offset`` and cut to ``target_len``."""
    n = len(noise)
    if n == 0:
        raise ValueError("noise clip is empty")
    idx = (int(offset) + np.arange(int(target_len))) % n
    return noise.with_samples(noise.samples[idx])


def replay_entry(entry: MixManifestEntry, clean: Waveform | None = None,
                 noise: Waveform | None = None) -> tuple[Waveform, Waveform]:
    """Rebuild ``(noisy, scaled_noise)`` from a manifest entry without any RNG."""
    clean = load_wav(entry.clean_path) if clean is None else clean
    noise = load_wav(entry.noise_path) if noise is None else noise
    fitted = fit_noise(noise, len(clean), entry.noise_offset_samples)
    scaled = fitted.samples * entry.noise_gain
    return clean.with_samples(clean.samples + scaled), clean.with_samples(scaled)


# --------------------------------------------------------------------------
# corpus planning


def derive_seed(seed: int, *parts: int) -> int:
    """Independent 64-bit stream seed for one utterance (or pattern key)."""
    words = [seed & 0xFFFFFFFF, (seed >> 32) & 0xFFFFFFFF, *[p & 0xFFFFFFFF for p in parts]]
    return int(np.random.SeedSequence(words).generate_state(1, np.uint64)[0])


def _stable_hash(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


@dataclass(frozen=True)
class PlannedMix:
    utt_id: str
    clean_index: int
    noise_index: int
    offset: int
    snr_db: float
    seed: int


def plan_mixes(clean_ids: Sequence[str], noise_lengths: Sequence[int], seed: int, *,
               snr_levels: Sequence[float] | None = None,
               snr_range: tuple[float, float] | None = None,
               every_level: bool = False,
               pattern_key: Callable[[str], str] | None = None) -> list[PlannedMix]:
    """Draw noise clip, offset and SNR per utterance.

    Each utterance gets its own generator seeded from ``seed`` and the
    utterance id, so the plan does not depend on processing order. With
    ``pattern_key``, utterances sharing a key share the same background draw.
    With ``every_level``, each utterance is mixed once per SNR level.
    """
    if (snr_levels is None) == (snr_range is None):
        raise ValueError("give exactly one of snr_levels or snr_range")
    if every_level and snr_levels is None:
        raise ValueError("every_level needs discrete snr_levels")
    if not noise_lengths:
        raise ValueError("no noise clips")
    levels = None if snr_levels is None else [float(v) for v in snr_levels]
    plans = []
    for ci, cid in enumerate(clean_ids):
        key = cid if pattern_key is None else pattern_key(cid)
        variants = list(enumerate(levels)) if every_level else [(None, None)]
        for li, level in variants:
            parts = [_stable_hash(key)] + ([] if li is None else [li])
            s = derive_seed(seed, *parts)
            rng = np.random.default_rng(s)
            ni = int(rng.integers(len(noise_lengths)))
            offset = int(rng.integers(noise_lengths[ni]))
            if level is not None:
                snr = level
            elif levels is not None:
                snr = levels[int(rng.integers(len(levels)))]
            else:
                snr = float(rng.uniform(*snr_range))
            utt_id = cid if li is None else f"{cid}_snr{level:g}"
            plans.append(PlannedMix(utt_id, ci, ni, offset, snr, s))
    return plans


def _load_dir(directory: Path, what: str) -> list[tuple[Path, Waveform]]:
    if not directory.is_dir():
        raise FileNotFoundError(f"{what} directory not found: {directory}")
    out = []
    for p in sorted(directory.glob("*.wav")):
        try:
            out.append((p, load_wav(p)))
        except (OSError, ValueError) as exc:
            log.warning("skipping unreadable %s file %s: %s", what, p, exc)
    if not out:
        raise ValueError(f"no readable WAV files in {what} directory {directory}")
    return out


def write_manifest(entries: Sequence[MixManifestEntry], path) -> None:
    path = Path(path)
    text = "".join(e.to_json() + "\n" for e in entries)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def read_manifest(path) -> list[MixManifestEntry]:
    lines = Path(path).read_text(encoding="utf-8").splitlines()
    return [MixManifestEntry.from_json(line) for line in lines if line.strip()]


def build_corpus(clean_dir, noise_dir, out_dir, seed: int, *,
                 snr_levels: Sequence[float] | None = None,
                 snr_range: tuple[float, float] | None = None,
                 every_level: bool = False,
                 pattern_key: Callable[[str], str] | None = None,
                 jobs: int = 1) -> list[MixManifestEntry]:
    """Mix every clean WAV with a randomly drawn noise clip; write WAVs + manifest.

    Returns the manifest entries in utterance order. Output files are
    ``<out_dir>/<utt_id>.wav`` and ``<out_dir>/manifest.jsonl``.
    """
    out_dir = Path(out_dir)
    cleans = _load_dir(Path(clean_dir), "clean")
    noises = _load_dir(Path(noise_dir), "noise")
    out_dir.mkdir(parents=True, exist_ok=True)
    plans = plan_mixes([p.stem for p, _ in cleans], [len(w) for _, w in noises], seed,
                       snr_levels=snr_levels, snr_range=snr_range,
                       every_level=every_level, pattern_key=pattern_key)

    def run(plan: PlannedMix) -> MixManifestEntry | None:
        t0 = time.perf_counter()
        clean_path, clean = cleans[plan.clean_index]
        noise_path, noise = noises[plan.noise_index]
        try:
            fitted = fit_noise(noise, len(clean), plan.offset)
            res = mix_at_snr(clean, fitted, plan.snr_db)
        except ValueError as exc:
            log.warning("utt_id=%s stage=mix status=skipped reason=%s", plan.utt_id, exc)
            return None
        write_wav(res.noisy, out_dir / f"{plan.utt_id}.wav")
        log.info("utt_id=%s stage=mix duration_ms=%.1f status=ok",
                 plan.utt_id, 1e3 * (time.perf_counter() - t0))
        return MixManifestEntry(plan.utt_id, str(clean_path), str(noise_path), plan.snr_db,
                                plan.seed, plan.offset, res.gain)

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, plans))
    else:
        results = [run(p) for p in plans]
    entries = [e for e in results if e is not None]
    write_manifest(entries, out_dir / MANIFEST_NAME)
    return entries
