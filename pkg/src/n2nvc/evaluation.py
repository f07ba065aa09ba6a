"""Corpus-level evaluation grouped by SNR level, as JSON and as a text table."""

from __future__ import annotations

import json
import logging
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .audio import load_wav
from .metrics import mcd, sar, sd_sdr, si_sdr
from .mixing import MixManifestEntry, read_manifest, replay_entry
from .separation import match_length
from .spectral import VQ_STFT, StftConfig
from .stoi import stoi

log = logging.getLogger(__name__)

METRICS = ("si-sdr", "sd-sdr", "sar", "mcd", "stoi")
UNAVAILABLE = ("pesq",)


@dataclass
class MetricReport:
    per_utterance: dict[str, dict[str, float | None]]
    snr_of: dict[str, float]
    metrics: tuple[str, ...]
    target: str = "speech"
    missing: list[str] = field(default_factory=list)

    def _mean(self, utts, metric):
        vals = [self.per_utterance[u][metric] for u in utts]
        vals = [v for v in vals if v is not None]
        return float(np.mean(vals)) if vals else None

    @property
    def snr_levels(self) -> list[float]:
        return sorted(set(self.snr_of.values()))

    def aggregates(self) -> dict:
        utts = sorted(self.per_utterance)
        per_snr = {}
        for level in self.snr_levels:
            group = [u for u in utts if self.snr_of[u] == level]
            per_snr[f"{level:g}"] = {m: self._mean(group, m) for m in self.metrics}
        overall = {m: self._mean(utts, m) for m in self.metrics}
        return {"per_snr": per_snr, "overall": overall}

    def to_dict(self) -> dict:
        return {
            "target": self.target,
            "metrics": list(self.metrics),
            "unavailable": list(UNAVAILABLE),
            "per_utterance": {
                u: {"snr_db": self.snr_of[u], **self.per_utterance[u]} for u in sorted(self.per_utterance)
            },
            "aggregates": self.aggregates(),
            "missing": sorted(self.missing),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2) + "\n"

    def format_table(self, decimals: int = 2) -> str:
        agg = self.aggregates()
        cols = [f"{lvl:g} dB" for lvl in self.snr_levels] + ["Avg."]
        keys = [f"{lvl:g}" for lvl in self.snr_levels]
        name_w = max(len(m) for m in (*self.metrics, *UNAVAILABLE, "metric"))
        col_w = max(8, *(len(c) for c in cols))
        lines = [f"{'metric':<{name_w}}  " + "  ".join(f"{c:>{col_w}}" for c in cols)]

        def fmt(v):
            return f"{v:>{col_w}.{decimals}f}" if v is not None else f"{'n/a':>{col_w}}"

        for m in self.metrics:
            row = [agg["per_snr"][k][m] for k in keys] + [agg["overall"][m]]
            lines.append(f"{m:<{name_w}}  " + "  ".join(fmt(v) for v in row))
        for m in UNAVAILABLE:
            lines.append(f"{m:<{name_w}}  " + "  ".join(fmt(None) for _ in cols))
        return "\n".join(lines) + "\n"


def parse_table(text: str) -> dict[str, list[float | None]]:
    """Inverse of :meth:`MetricReport.format_table` (rows keyed by metric)."""
    rows = {}
    for line in text.strip().splitlines()[1:]:
        name, *vals = line.split()
        rows[name] = [None if v == "n/a" else float(v) for v in vals]
    return rows


def estimate_path(est_dir: Path, utt_id: str, target: str) -> Path:
    return est_dir / (f"{utt_id}.bg.wav" if target == "background" else f"{utt_id}.wav")


def _score(metric, ref, interferer, est, feature_stft=VQ_STFT):
    try:
        if metric == "si-sdr":
            return si_sdr(ref, est)
        if metric == "sd-sdr":
            return sd_sdr(ref, est)
        if metric == "sar":
            return sar(ref, interferer, est)
        if metric == "mcd":
            return mcd(ref, est, cfg=feature_stft)
        if metric == "stoi":
            return stoi(ref, est)
    except ValueError as exc:
        log.warning("metric %s undefined: %s", metric, exc)
        return None
    raise ValueError(f"unknown metric {metric!r}")


def evaluate_corpus(manifest, estimates_dir, which: Sequence[str] = METRICS,
                    target: str = "speech", jobs: int = 1,
                    feature_stft: StftConfig = VQ_STFT) -> MetricReport:
    """Score estimates against references rebuilt from the manifest.

    ``target="speech"`` compares ``<utt>.wav`` with the clean utterance;
    ``target="background"`` compares ``<utt>.bg.wav`` with the scaled noise
    that was mixed in. Missing estimates are listed in ``report.missing``.
    """
    which = tuple(which)
    for m in which:
        if m not in METRICS:
            raise ValueError(f"unknown metric {m!r}; choose from {', '.join(METRICS)}")
    if target not in ("speech", "background"):
        raise ValueError("target must be 'speech' or 'background'")
    entries: list[MixManifestEntry] = (read_manifest(manifest) if isinstance(manifest, (str, Path))
                                       else list(manifest))
    entries = sorted(entries, key=lambda e: e.utt_id)
    est_dir = Path(estimates_dir)

    def run(entry):
        path = estimate_path(est_dir, entry.utt_id, target)
        if not path.exists():
            log.warning("utt_id=%s stage=eval status=missing path=%s", entry.utt_id, path)
            return entry, None
        t0 = time.perf_counter()
        clean = load_wav(entry.clean_path)
        _, scaled_noise = replay_entry(entry, clean=clean)
        ref, interferer = (clean, scaled_noise) if target == "speech" else (scaled_noise, clean)
        est = match_length(load_wav(path), len(ref))
        scores = {m: _score(m, ref, interferer, est, feature_stft) for m in which}
        log.info("utt_id=%s stage=eval duration_ms=%.1f status=ok", entry.utt_id,
                 1e3 * (time.perf_counter() - t0))
        return entry, scores

    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            results = list(pool.map(run, entries))
    else:
        results = [run(e) for e in entries]

    report = MetricReport({}, {}, which, target)
    for entry, scores in results:
        if scores is None:
            report.missing.append(entry.utt_id)
            continue
        report.per_utterance[entry.utt_id] = scores
        report.snr_of[entry.utt_id] = float(entry.snr_db)
    return report
