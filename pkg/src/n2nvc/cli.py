"""``n2nvc`` command line: mix, separate, convert, superimpose, eval, vq-demo.

Settings come from three layers, later ones winning: built-in defaults (the
seed default reads ``N2N_SEED``), a flat ``key = value`` config file given by
``--config``, and command-line flags.

Exit codes: 0 success, 1 some files failed, 2 bad invocation.
"""

from __future__ import annotations

import argparse
import logging
import os
import re
import shlex
import shutil
import subprocess
import sys
import tempfile
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields, replace
from pathlib import Path

import numpy as np

from .audio import Waveform, read_wav, write_wav
from .evaluation import METRICS, evaluate_corpus
from .mixing import build_corpus, read_manifest
from .separation import (IdentityDenoiser, Pcm16Output, ZeroDenoiser, irm_oracle_denoiser,
                         match_length, separate, specsub_denoiser, superimpose)
from .spectral import StftConfig

log = logging.getLogger("n2nvc")

EXIT_OK, EXIT_PARTIAL, EXIT_USAGE = 0, 1, 2


def _env_seed() -> int:
    raw = os.environ.get("N2N_SEED", "").strip()
    return int(raw) if raw else 0


@dataclass(frozen=True)
class PipelineConfig:
    seed: int = 0
    snr: str = "7,11,15,19"
    snr_mode: str = "all"
    pattern_regex: str = ""
    denoiser: str = "specsub"
    denoiser_window_ms: float = 50.0
    denoiser_hop_ms: float = 12.5
    denoiser_fft_len: int = 512
    feature_window_ms: float = 20.0
    feature_hop_ms: float = 5.0
    feature_fft_len: int = 1024
    noise_profile_ms: float = 200.0
    oversubtraction: float = 1.0
    floor: float = 0.02
    smoothing_frames: int = 3
    converter: str = "identity"
    converter_cmd: str = ""
    normalize: bool = False
    mode: str = "add"
    metrics: str = ",".join(METRICS)
    target: str = "speech"
    jobs: int = 1

    @classmethod
    def default(cls) -> "PipelineConfig":
        return cls(seed=_env_seed())

    @property
    def denoiser_stft(self) -> StftConfig:
        return StftConfig(self.denoiser_window_ms, self.denoiser_hop_ms, self.denoiser_fft_len)

    @property
    def feature_stft(self) -> StftConfig:
        return StftConfig(self.feature_window_ms, self.feature_hop_ms, self.feature_fft_len)

    def to_text(self) -> str:
        lines = []
        for f in fields(self):
            v = getattr(self, f.name)
            if isinstance(v, bool):
                text = str(v).lower()
            elif isinstance(v, float):
                text = repr(v)
            else:
                text = str(v)
            if "\n" in text or text != text.strip():
                raise ValueError(f"{f.name}: value cannot be written to a config line: {text!r}")
            lines.append(f"{f.name} = {text}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str, base: "PipelineConfig | None" = None) -> "PipelineConfig":
        base = base or cls.default()
        types = {f.name: type(getattr(base, f.name)) for f in fields(cls)}
        updates = {}
        for n, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):  # whole-line comments only; values may contain '#'
                continue
            if "=" not in line:
                raise ValueError(f"config line {n}: expected 'key = value'")
            key, value = (s.strip() for s in line.split("=", 1))
            key = key.replace("-", "_")
            if key not in types:
                raise ValueError(f"config line {n}: unknown key {key!r}")
            updates[key] = _coerce(types[key], value)
        return replace(base, **updates)

    @classmethod
    def load(cls, path) -> "PipelineConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"))


def _coerce(tp, value: str):
    if tp is bool:
        low = value.lower()
        if low not in ("true", "false", "1", "0", "yes", "no"):
            raise ValueError(f"not a boolean: {value!r}")
        return low in ("true", "1", "yes")
    return tp(value)


# --------------------------------------------------------------------------
# helpers


def _log_file(utt_id: str, stage: str, t0: float, status: str, **extra) -> None:
    tail = "".join(f" {k}={v}" for k, v in extra.items())
    log.info("utt_id=%s stage=%s duration_ms=%.1f status=%s%s",
             utt_id, stage, 1e3 * (time.perf_counter() - t0), status, tail)


def _wav_inputs(directory: Path) -> list[Path]:
    if not directory.is_dir():
        raise FileNotFoundError(f"input directory not found: {directory}")
    return [p for p in sorted(directory.glob("*.wav")) if not p.name.endswith(".bg.wav")]


def _map(fn, items, jobs):
    if jobs > 1:
        with ThreadPoolExecutor(jobs) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def parse_snr(spec: str):
    """'7,11,15,19' -> levels list; '5:20' -> (lo, hi) range."""
    spec = spec.strip()
    if ":" in spec:
        lo, hi = (float(s) for s in spec.split(":", 1))
        if not lo < hi:
            raise ValueError(f"empty SNR range {spec!r}")
        return None, (lo, hi)
    levels = [float(s) for s in spec.split(",") if s.strip()]
    if not levels:
        raise ValueError("no SNR levels given")
    return levels, None


# --------------------------------------------------------------------------
# commands


def cmd_mix(args, cfg: PipelineConfig) -> int:
    levels, rng_range = parse_snr(cfg.snr)
    key_fn = None
    if cfg.pattern_regex:
        pattern = re.compile(cfg.pattern_regex)

        def key_fn(stem):
            m = pattern.search(stem)
            return (m.group(1) if m.groups() else m.group(0)) if m else stem

    entries = build_corpus(args.clean, args.noise, args.out, cfg.seed, snr_levels=levels,
                           snr_range=rng_range, every_level=cfg.snr_mode == "all" and levels is not None,
                           pattern_key=key_fn, jobs=cfg.jobs)
    print(f"wrote {len(entries)} mixtures and manifest to {args.out}")
    return EXIT_OK


def _clean_lookup(ref: str | None):
    if ref is None:
        return None
    path = Path(ref)
    if path.is_file():
        table = {e.utt_id: Path(e.clean_path) for e in read_manifest(path)}
        return table.get
    if path.is_dir():
        return lambda utt: path / f"{utt}.wav"
    raise FileNotFoundError(f"clean reference not found: {ref}")


def make_denoiser(cfg: PipelineConfig, clean: Waveform | None = None):
    if cfg.denoiser == "identity":
        return IdentityDenoiser()
    if cfg.denoiser == "zero":
        return ZeroDenoiser()
    if cfg.denoiser == "specsub":
        return specsub_denoiser(cfg.denoiser_stft, cfg.noise_profile_ms, cfg.oversubtraction, cfg.floor,
                                cfg.smoothing_frames)
    if cfg.denoiser == "irm":
        if clean is None:
            raise ValueError("the irm denoiser needs --clean-ref")
        return irm_oracle_denoiser(clean, cfg.denoiser_stft)
    raise ValueError(f"unknown denoiser {cfg.denoiser!r}")


def cmd_separate(args, cfg: PipelineConfig) -> int:
    inputs = _wav_inputs(Path(args.inp))
    out_speech = Path(args.out_speech)
    out_bg = Path(args.out_bg or args.out_speech)
    out_speech.mkdir(parents=True, exist_ok=True)
    out_bg.mkdir(parents=True, exist_ok=True)
    clean_of = _clean_lookup(args.clean_ref)
    if cfg.denoiser == "irm" and clean_of is None:
        raise ValueError("the irm denoiser needs --clean-ref")
    shared = None if cfg.denoiser == "irm" else Pcm16Output(make_denoiser(cfg))

    def run(path: Path) -> bool:
        t0 = time.perf_counter()
        try:
            noisy = read_wav(path)
            denoiser = shared
            if denoiser is None:
                clean_path = clean_of(path.stem)
                if clean_path is None:
                    raise ValueError("no clean reference for this utterance")
                denoiser = Pcm16Output(make_denoiser(cfg, read_wav(clean_path)))
            res = separate(denoiser, noisy)
            write_wav(res.speech_estimate, out_speech / f"{path.stem}.wav")
            write_wav(res.background, out_bg / f"{path.stem}.bg.wav")
        except (OSError, ValueError) as exc:
            _log_file(path.stem, "separate", t0, "error", reason=repr(str(exc)))
            return False
        _log_file(path.stem, "separate", t0, "ok")
        return True

    ok = _map(run, inputs, cfg.jobs)
    return EXIT_OK if all(ok) else EXIT_PARTIAL


def _external_convert(cmd: str, src: Path, dst: Path) -> None:
    parts = shlex.split(cmd)
    if any("{in}" in p or "{out}" in p for p in parts):
        parts = [p.replace("{in}", str(src)).replace("{out}", str(dst)) for p in parts]
    else:
        parts += [str(src), str(dst)]
    proc = subprocess.run(parts, capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(f"converter exited with {proc.returncode}: {proc.stderr.strip()[:200]}")
    if not dst.exists():
        raise RuntimeError("converter produced no output file")


def cmd_convert(args, cfg: PipelineConfig) -> int:
    inputs = _wav_inputs(Path(args.inp))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    if cfg.converter == "external" and not cfg.converter_cmd:
        raise ValueError("--converter external needs --converter-cmd")
    if cfg.converter not in ("identity", "external"):
        raise ValueError(f"unknown converter {cfg.converter!r}")

    def run(path: Path) -> bool:
        t0 = time.perf_counter()
        dst = out_dir / path.name
        try:
            src = read_wav(path)
            if cfg.converter == "identity" and not cfg.normalize:
                tmp = out_dir / f".tmp-{path.name}"
                shutil.copyfile(path, tmp)
                os.replace(tmp, dst)
            else:
                scale = 1.0
                if cfg.normalize:
                    peak = float(np.max(np.abs(src.samples))) if len(src) else 0.0
                    scale = 0.95 / peak if peak > 0 else 1.0
                with tempfile.TemporaryDirectory(dir=out_dir) as work:
                    conv_in = Path(work) / "in.wav"
                    conv_out = Path(work) / "out.wav"
                    write_wav(src.with_samples(src.samples * scale), conv_in)
                    if cfg.converter == "identity":
                        shutil.copyfile(conv_in, conv_out)
                    else:
                        _external_convert(cfg.converter_cmd, conv_in, conv_out)
                    out = read_wav(conv_out)
                if out.sample_rate_hz != src.sample_rate_hz:
                    raise RuntimeError(
                        f"converter changed the sample rate ({src.sample_rate_hz} -> {out.sample_rate_hz} Hz)")
                out = match_length(out, len(src))
                write_wav(out.with_samples(out.samples / scale), dst)
        except (OSError, ValueError, RuntimeError) as exc:
            _log_file(path.stem, "convert", t0, "error", reason=repr(str(exc)))
            return False
        _log_file(path.stem, "convert", t0, "ok")
        return True

    ok = _map(run, inputs, cfg.jobs)
    return EXIT_OK if all(ok) else EXIT_PARTIAL


def cmd_superimpose(args, cfg: PipelineConfig) -> int:
    inputs = _wav_inputs(Path(args.converted))
    bg_dir = Path(args.bg) if args.bg else None
    if cfg.mode == "add" and (bg_dir is None or not bg_dir.is_dir()):
        raise FileNotFoundError(f"background directory not found: {args.bg}")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    def run(path: Path) -> bool:
        t0 = time.perf_counter()
        try:
            converted = read_wav(path)
            background = read_wav(bg_dir / f"{path.stem}.bg.wav") if cfg.mode == "add" else None
            out = superimpose(converted, background, cfg.mode) if background is not None else converted
            write_wav(out, out_dir / path.name)
        except (OSError, ValueError) as exc:
            _log_file(path.stem, "superimpose", t0, "error", reason=repr(str(exc)))
            return False
        _log_file(path.stem, "superimpose", t0, "ok")
        return True

    ok = _map(run, inputs, cfg.jobs)
    return EXIT_OK if all(ok) else EXIT_PARTIAL


def cmd_eval(args, cfg: PipelineConfig) -> int:
    which = [m.strip() for m in cfg.metrics.split(",") if m.strip()]
    if not Path(args.manifest).is_file():
        raise FileNotFoundError(f"manifest not found: {args.manifest}")
    report = evaluate_corpus(args.manifest, args.est, which, target=cfg.target, jobs=cfg.jobs,
                             feature_stft=cfg.feature_stft)
    table = report.format_table()
    sys.stdout.write(table)
    if args.out_json:
        _atomic_text(Path(args.out_json), report.to_json())
    if args.out_table:
        _atomic_text(Path(args.out_table), table)
    if report.missing:
        print(f"missing estimates: {', '.join(report.missing)}", file=sys.stderr)
        return EXIT_PARTIAL
    return EXIT_OK


def _atomic_text(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=".tmp-", dir=path.parent)
    with os.fdopen(fd, "w", encoding="utf-8") as fh:
        fh.write(text)
    os.replace(tmp, path)


def cmd_vq_demo(args, cfg: PipelineConfig) -> int:
    from .vq import run_cluster_demo

    for line in run_cluster_demo(args.clusters, args.steps, cfg.seed, dim=args.dim,
                                 points_per_cluster=args.points):
        print(line)
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value settings file (flags override it)")
    common.add_argument("--jobs", type=int, default=None, help="files processed in parallel")
    common.add_argument("--log-level", default="INFO")
    p = argparse.ArgumentParser(prog="n2nvc", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, help):
        return sub.add_parser(name, help=help, parents=[common])


    m = add("mix", help="synthesize a noisy corpus at exact SNRs")
    m.add_argument("--clean", required=True)
    m.add_argument("--noise", required=True)
    m.add_argument("--out", required=True)
    m.add_argument("--snr", default=None, help="levels '7,11,15,19' or range '5:20'")
    m.add_argument("--snr-mode", choices=("all", "sample"), default=None,
                   help="all: one mixture per level; sample: one random level per utterance")
    m.add_argument("--pattern-regex", default=None,
                   help="utterances whose ids share this match share a background draw")
    m.add_argument("--seed", type=int, default=None)
    m.set_defaults(func=cmd_mix)

    s = add("separate", help="split noisy files into speech estimate + background")
    s.add_argument("--denoiser", choices=("identity", "zero", "specsub", "irm"), default=None)
    s.add_argument("--in", dest="inp", required=True)
    s.add_argument("--out-speech", required=True)
    s.add_argument("--out-bg", default=None, help="defaults to --out-speech")
    s.add_argument("--clean-ref", default=None, help="manifest or directory of clean files (irm)")
    s.add_argument("--noise-profile-ms", type=float, default=None)
    s.add_argument("--oversubtraction", type=float, default=None)
    s.add_argument("--floor", type=float, default=None)
    s.add_argument("--smoothing-frames", type=int, default=None)
    s.set_defaults(func=cmd_separate)

    c = add("convert", help="run the voice converter on speech estimates")
    c.add_argument("--in", dest="inp", required=True)
    c.add_argument("--out", required=True)
    c.add_argument("--converter", choices=("identity", "external"), default=None)
    c.add_argument("--converter-cmd", default=None,
                   help="command line; {in} and {out} are replaced by file paths")
    c.add_argument("--normalize", action="store_const", const=True, default=None,
                   help="peak-normalize before conversion and undo the gain afterwards")
    c.set_defaults(func=cmd_convert)

    u = add("superimpose", help="add separated backgrounds to converted speech")
    u.add_argument("--converted", required=True)
    u.add_argument("--bg", default=None)
    u.add_argument("--out", required=True)
    u.add_argument("--mode", choices=("add", "drop"), default=None)
    u.set_defaults(func=cmd_superimpose)

    e = add("eval", help="score estimates against manifest references")
    e.add_argument("--manifest", required=True)
    e.add_argument("--est", required=True)
    e.add_argument("--metrics", default=None, help=f"comma list from {','.join(METRICS)}")
    e.add_argument("--target", choices=("speech", "background"), default=None)
    e.add_argument("--out-json", default=None)
    e.add_argument("--out-table", default=None)
    e.set_defaults(func=cmd_eval)

    v = add("vq-demo", help="EMA codebook convergence on synthetic clusters")
    v.add_argument("--clusters", type=int, default=4)
    v.add_argument("--steps", type=int, default=1000)
    v.add_argument("--seed", type=int, default=None)
    v.add_argument("--dim", type=int, default=64)
    v.add_argument("--points", type=int, default=200)
    v.set_defaults(func=cmd_vq_demo)
    return p


def resolve_config(args) -> PipelineConfig:
    cfg = PipelineConfig.load(args.config) if args.config else PipelineConfig.default()
    names = {f.name for f in fields(PipelineConfig)}
    flags = {k: v for k, v in vars(args).items() if k in names and v is not None}
    return replace(cfg, **flags)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if not logging.getLogger().handlers:  # leave an embedding application's handlers alone
        logging.basicConfig(format="%(message)s", stream=sys.stderr)
    log.setLevel(args.log_level.upper())
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except (FileNotFoundError, ValueError) as exc:
        print(f"n2nvc {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
