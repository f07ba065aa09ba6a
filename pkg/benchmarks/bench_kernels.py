"""Time the numba and pure-numpy variant of each hot kernel on realistic sizes.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--only dtw,conv2d]

The numba column excludes compilation: every kernel is called once before
timing. Results are checked for agreement before any timing is reported.
"""

from __future__ import annotations

import argparse
import time

import numpy as np

from n2nvc import kernels
from n2nvc._jit import NUMBA_AVAILABLE


def _cases(rng: np.random.Generator):
    # 10 s at 8 kHz through the denoiser STFT (400-sample window, 100 hop)
    frames = rng.standard_normal((801, 512))
    yield "overlap_add", "801 frames x 512, hop 100", (frames, 100, 80_512), \
        kernels.overlap_add_numpy, kernels.overlap_add_numba
    # 4 s vs 4 s of 5 ms cepstral frames
    cost = rng.random((800, 800))
    yield "dtw_accumulate", "800 x 800 cost", (cost,), \
        kernels.dtw_accumulate_numpy, kernels.dtw_accumulate_numba
    # 4 s of 5 ms latents against the full codebook
    z, cb = rng.standard_normal((800, 64)), rng.standard_normal((512, 64))
    yield "nearest_codewords", "800 x 64 vs 512 codes", (z, cb), \
        kernels.nearest_codewords_numpy, kernels.nearest_codewords_numba
    # one encoder layer on a 2 s denoiser spectrogram
    x, w = rng.standard_normal((16, 161, 257)), rng.standard_normal((32, 16, 5, 2))
    yield "conv2d", "16->32 ch, 161 x 257, k 5x2, stride (1,2)", (x, w, (1, 2), (2, 0)), \
        kernels.conv2d_numpy, kernels.conv2d_numba


def _best_of(fn, args, repeat: int) -> float:
    best = float("inf")
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def _agree(a, b) -> bool:
    if isinstance(a, tuple):
        return all(_agree(x, y) for x, y in zip(a, b))
    return np.allclose(a, b, rtol=1e-10, atol=1e-10)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5, help="timed runs per variant; best is kept")
    parser.add_argument("--only", default="", help="comma-separated kernel names")
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)
    if not NUMBA_AVAILABLE:
        parser.error("numba is not installed; nothing to compare")
    only = {s for s in args.only.split(",") if s}

    rows = []
    for name, size, call_args, numpy_fn, numba_fn in _cases(np.random.default_rng(args.seed)):
        if only and name not in only:
            continue
        t0 = time.perf_counter()
        ref = numba_fn(*call_args)
        first_call = time.perf_counter() - t0
        if not _agree(numpy_fn(*call_args), ref):
            raise SystemExit(f"{name}: numba and numpy results disagree")
        t_np = _best_of(numpy_fn, call_args, args.repeat)
        t_nb = _best_of(numba_fn, call_args, args.repeat)
        rows.append((name, size, t_np, t_nb, first_call))

    print(f"{'kernel':<18} {'size':<40} {'numpy ms':>10} {'numba ms':>10} {'speedup':>8} {'1st call s':>10}")
    for name, size, t_np, t_nb, first in rows:
        print(f"{name:<18} {size:<40} {1e3 * t_np:>10.2f} {1e3 * t_nb:>10.2f} {t_np / t_nb:>7.1f}x {first:>10.2f}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
