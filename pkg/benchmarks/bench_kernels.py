"""Benchmark the compiled raster kernels against the pure-numpy fallback.

Times label_components, window_stats and polygon_grid_mask on synthetic
inputs, checks that both backends produce bit-identical output, and prints
a per-kernel comparison.

Usage:
    python3 benchmarks/bench_kernels.py [--size 1024] [--repeats 5]
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from pvmap.kernels import get_backend


def _best_of(fn, repeats: int) -> tuple[float, object]:
    best = float("inf")
    out = None
    for _ in range(repeats):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def _label_inputs(rng: np.random.Generator, size: int):
    fg = (rng.random((size, size)) < 0.25).astype(np.uint8)
    offsets = np.array([(1, 0), (-1, 1), (0, 1), (1, 1), (2, 0), (0, 2), (3, 1)],
                       dtype=np.int64)
    return fg, offsets

def _window_inputs(rng: np.random.Generator, size: int):
    return rng.random((size, size, 3)), 4

def _polygon_inputs(rng: np.random.Generator, size: int):
    ys, xs = np.meshgrid(np.arange(size, dtype=np.float64),
                         np.arange(size, dtype=np.float64), indexing="ij")
    # jagged star-ish ring plus a square hole
    n = 64
    ang = np.linspace(0.0, 2.0 * np.pi, n, endpoint=False)
    rad = size * (0.30 + 0.12 * np.cos(7 * ang))
    outer = np.stack([size / 2 + rad * np.cos(ang), size / 2 + rad * np.sin(ang)], axis=1)
    q = size / 8
    hole = np.array([[size / 2 - q, size / 2 - q], [size / 2 + q, size / 2 - q],
                     [size / 2 + q, size / 2 + q], [size / 2 - q, size / 2 + q]])
    verts = np.concatenate([outer, hole]).astype(np.float64)
    ring_sizes = np.array([n, 4], dtype=np.int64)
    return xs, ys, verts, ring_sizes


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1024, help="square grid side in pixels")
    ap.add_argument("--repeats", type=int, default=5, help="timing repeats (best is kept)")
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    pure = get_backend("pure")
    try:
        compiled = get_backend("compiled")
    except ImportError:
        print("compiled backend not built; run pip install -e . first", file=sys.stderr)
        return 1

    rng = np.random.default_rng(args.seed)
    fg, offsets = _label_inputs(rng, args.size)
    img, radius = _window_inputs(rng, args.size)
    xs, ys, verts, ring_sizes = _polygon_inputs(rng, args.size)

    cases = [
        ("label_components", lambda be: be.label_components(fg, offsets)),
        ("window_stats", lambda be: be.window_stats(img, radius)),
        ("polygon_grid_mask", lambda be: be.polygon_grid_mask(xs, ys, verts, ring_sizes)),
    ]

    print(f"grid {args.size}x{args.size}, best of {args.repeats} runs")
    print(f"{'kernel':<20} {'pure (ms)':>12} {'compiled (ms)':>14} {'speedup':>9}  match")
    for name, call in cases:
        t_pure, out_pure = _best_of(lambda: call(pure), args.repeats)
        t_comp, out_comp = _best_of(lambda: call(compiled), args.repeats)
        a = out_pure if isinstance(out_pure, tuple) else (out_pure,)
        b = out_comp if isinstance(out_comp, tuple) else (out_comp,)
        match = all(np.asarray(x).tobytes() == np.asarray(y).tobytes()
                    for x, y in zip(a, b)) and len(a) == len(b)
        print(f"{name:<20} {t_pure * 1e3:>12.2f} {t_comp * 1e3:>14.2f} "
              f"{t_pure / t_comp:>8.2f}x  {'yes' if match else 'NO'}")
        if not match:
            return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
