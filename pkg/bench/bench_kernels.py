#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

The same functions the package dispatches between (see
``amodalkit._kernels``) are timed side by side at pipeline-realistic
sizes. Run directly: ``python bench/bench_kernels.py``.
"""

import time

import numpy as np

from amodalkit import _kernels


def timeit(fn, *args, repeat=30):
    fn(*args)  # warm-up / jit compile
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat


def row(name, numpy_s, numba_s):
    speedup = numpy_s / numba_s if numba_s > 0 else float("inf")
    print(f"{name:<28}{numpy_s * 1e3:>12.3f}{numba_s * 1e3:>12.3f}{speedup:>9.2f}x")


def main():
    if not _kernels.HAS_NUMBA:
        print("numba unavailable; nothing to compare")
        return
    rng = np.random.default_rng(7)
    n, h, w, b = 4, 64, 64, 16

    vw = rng.normal(size=(n, n))
    ow = rng.normal(size=(n, n))
    bias = rng.normal(size=n)
    vm = rng.normal(size=(n, h, w))
    om = rng.normal(size=(n, h, w))
    vm_b = rng.normal(size=(b, n, h, w))
    om_b = rng.normal(size=(b, n, h, w))
    targets = (rng.random((b, h, w)) < 0.4).astype(np.float64)
    cats = rng.integers(0, n, size=b).astype(np.int64)
    flat = (rng.random(h * w) < 0.35).astype(np.uint8)
    counts = _kernels.rle_encode_numpy(flat)

    print(f"active backend: {_kernels.BACKEND} (set AMODALKIT_NUMBA=0 to force numpy)")
    print(f"{'kernel':<28}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    row(
        f"mix_forward {n}x{h}x{w}",
        timeit(_kernels.mix_forward_numpy, vw, ow, bias, vm, om),
        timeit(_kernels.mix_forward_numba, vw, ow, bias, vm, om),
    )
    row(
        f"head_loss_grad b={b}",
        timeit(_kernels.head_loss_grad_numpy, vw, ow, bias, vm_b, om_b, targets, cats, repeat=10),
        timeit(_kernels.head_loss_grad_numba, vw, ow, bias, vm_b, om_b, targets, cats, repeat=10),
    )
    row(
        f"rle_encode {h * w}px",
        timeit(_kernels.rle_encode_numpy, flat, repeat=200),
        timeit(_kernels.rle_encode_numba, flat, repeat=200),
    )
    row(
        f"rle_decode {h * w}px",
        timeit(_kernels.rle_decode_numpy, counts, h * w, repeat=200),
        timeit(_kernels.rle_decode_numba, counts, h * w, repeat=200),
    )


if __name__ == "__main__":
    main()
