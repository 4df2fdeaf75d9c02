"""Time the raster kernels on each available backend.

    python benchmarks/bench_raster.py [--size 1024] [--repeat 5]
"""
import argparse
import timeit

import numpy as np

from cpmkit import _ext


def cases(size):
    rng = np.random.default_rng(0)
    img = rng.integers(0, 256, (size, size), dtype=np.uint8)
    c, s = np.cos(np.radians(15)), np.sin(np.radians(15))
    warp = (c, -s, 0.5 - 0.5 * c + 0.5 * s, s, c, 0.5 - 0.5 * s - 0.5 * c)
    return {
        "box_blur r=2": lambda k: k.box_blur(img, 2),
        "laplacian_sums": lambda k: k.laplacian_sums(img),
        "warp_nearest 15deg": lambda k: k.warp_nearest(img, size, size, *warp),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=1024)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = _ext.available_backends()
    if "cython" not in backends:
        print("compiled extension not built; only the numpy backend is available")
    print(f"image {args.size}x{args.size}, best of {args.repeat}")
    header = f"{'kernel':<20}" + "".join(f"{name:>12}" for name in backends)
    if len(backends) > 1:
        header += f"{'speedup':>10}"
    print(header)
    for label, fn in cases(args.size).items():
        times = {name: min(timeit.repeat(lambda: fn(k), number=1, repeat=args.repeat)) for name, k in backends.items()}
        row = f"{label:<20}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times.values())
        if len(times) > 1:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
