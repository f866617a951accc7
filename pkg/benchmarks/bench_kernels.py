"""Time the numba kernels against the pure-numpy fallback.

Imports both implementations directly so one process can compare them,
regardless of which path CANVAS_FSS_NUMBA selected for the package. Each
kernel runs on a workload shaped like real evaluation traffic (1008x1008
canvases, support-sized resizes), after a warm-up pass that absorbs JIT
compilation.

Usage: python3 benchmarks/bench_kernels.py [--repeats N]
"""
from __future__ import annotations

import argparse
import time

import numpy as np

from canvas_fss.kernels import numpy_impl

try:
    from canvas_fss.kernels import numba_impl
except ImportError:
    numba_impl = None


def make_workloads(rng: np.random.Generator) -> dict:
    canvas_mask = rng.random((1008, 1008)) < 0.18
    flat = np.ascontiguousarray(canvas_mask.ravel(order="F"))
    counts = numpy_impl.rle_encode_flat(flat)
    src_rgb = rng.integers(0, 256, size=(620, 560, 3), dtype=np.uint8)
    src_mask = np.ascontiguousarray(rng.random((620, 560)) < 0.3)
    theta = np.linspace(0.0, 2 * np.pi, 100, endpoint=False)
    xs = 336.0 + 250.0 * np.cos(theta) + 20.0 * np.cos(7 * theta)
    ys = 336.0 + 250.0 * np.sin(theta) + 20.0 * np.sin(5 * theta)
    pred = rng.random((1008, 1008)) < 0.2

    return {
        "rle_decode_flat": lambda impl: impl.rle_decode_flat(counts, flat.size),
        "rle_encode_flat": lambda impl: impl.rle_encode_flat(flat),
        "bilinear_rgb": lambda impl: impl.bilinear_rgb(src_rgb, 404, 1008),
        "nearest_mask": lambda impl: impl.nearest_mask(src_mask, 404, 1008),
        "confusion_counts": lambda impl: impl.confusion_counts(pred, canvas_mask),
        "polygon_mask": lambda impl: impl.polygon_mask(xs, ys, 672, 672),
    }


def time_call(fn, repeats: int) -> float:
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def check_agreement(workloads: dict) -> None:
    for name, call in workloads.items():
        a, b = call(numpy_impl), call(numba_impl)
        if name == "confusion_counts":
            ok = tuple(int(v) for v in a) == tuple(int(v) for v in b)
        else:
            ok = np.array_equal(np.asarray(a), np.asarray(b))
        if not ok:
            raise AssertionError(f"{name}: numba and numpy paths disagree")


def main() -> int:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=7, help="timed runs per kernel")
    args = parser.parse_args()

    rng = np.random.default_rng(0)
    workloads = make_workloads(rng)

    if numba_impl is None:
        print("numba is not importable; timing the numpy fallback only\n")
    else:
        for call in workloads.values():
            call(numba_impl)  # warm-up: JIT compile outside the timed region
        check_agreement(workloads)

    print(f"{'kernel':<18} {'numpy':>10} {'numba':>10} {'speedup':>8}")
    for name, call in workloads.items():
        t_np = time_call(lambda: call(numpy_impl), args.repeats)
        if numba_impl is None:
            print(f"{name:<18} {t_np * 1e3:>8.2f}ms {'--':>10} {'--':>8}")
            continue
        t_nb = time_call(lambda: call(numba_impl), args.repeats)
        print(
            f"{name:<18} {t_np * 1e3:>8.2f}ms {t_nb * 1e3:>8.2f}ms "
            f"{t_np / t_nb:>7.1f}x"
        )
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
