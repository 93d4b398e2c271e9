"""Timing comparison of the compiled and numpy kernel backends.

Runs every hot kernel on representative shapes with both implementations,
reports the best-of-N wall time per backend, the speedup, and whether the
outputs agree bitwise (they must; the backends share one accumulation
contract).

Usage: python benchmarks/bench_kernels.py [--repeats N] [--height H] [--width W]
"""

import argparse
import time

import numpy as np

from corrdepth.kernels import _pykernels

try:
    from corrdepth.kernels import _ckernels
except ImportError:
    _ckernels = None


def _best_time(fn, args, repeats):
    best = float("inf")
    for _ in range(repeats):
        start = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - start)
    return best, out


def _cases(h, w, dim):
    rng = np.random.default_rng(0)
    feats_a = rng.standard_normal((h, w, dim)).astype(np.float32)
    feats_b = rng.standard_normal((h, w, dim)).astype(np.float32)
    vol = _pykernels.corr_volume(feats_a, feats_b)
    centers = np.stack([rng.uniform(-1.0, w, (h, w)),
                        rng.uniform(-1.0, h, (h, w))], axis=-1)
    conv_w = rng.standard_normal((3, 3, dim, 64)).astype(np.float32)
    conv_b = rng.standard_normal(64).astype(np.float32)
    depth = rng.uniform(1.0, 6.0, (h * 2, w * 2))
    return [
        (f"corr_volume   {h}x{w}x{dim}", "corr_volume", (feats_a, feats_b)),
        (f"avg_pool2x2   {h}x{w}x{h}x{w}", "avg_pool2x2", (vol,)),
        (f"lookup_windows r=3 {h}x{w}", "lookup_windows", (vol, centers, 3)),
        (f"conv3x3       {h}x{w}x{dim}->64", "conv3x3",
         (feats_a, conv_w, conv_b)),
        (f"upsample2x    {h * 2}x{w * 2}", "upsample2x", (depth,)),
    ]


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeats", type=int, default=5)
    parser.add_argument("--height", type=int, default=32)
    parser.add_argument("--width", type=int, default=40)
    parser.add_argument("--dim", type=int, default=96)
    args = parser.parse_args()

    if _ckernels is None:
        print("compiled backend not built; run `pip install -e .` first")
        return

    print(f"{'kernel':34s} {'python':>10s} {'cython':>10s} "
          f"{'speedup':>8s}  bitwise")
    for label, name, call_args in _cases(args.height, args.width, args.dim):
        t_py, out_py = _best_time(getattr(_pykernels, name), call_args,
                                  args.repeats)
        t_cy, out_cy = _best_time(getattr(_ckernels, name), call_args,
                                  args.repeats)
        if name == "conv3x3":
            # conv parity is tolerance-based; the contraction order is free
            agree = bool(np.abs(out_py - out_cy).max() < 1e-6)
        else:
            agree = bool(np.array_equal(out_py, out_cy))
        print(f"{label:34s} {t_py * 1e3:9.2f}ms {t_cy * 1e3:9.2f}ms "
              f"{t_py / t_cy:7.2f}x  {agree}")


if __name__ == "__main__":
    main()
