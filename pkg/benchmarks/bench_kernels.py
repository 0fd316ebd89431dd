"""Time the hot kernels under both backends and check they agree.

    python benchmarks/bench_kernels.py [--repeat 5] [--size 299]

The first numba call per signature compiles (or loads from cache); it is
run once as warm-up and not timed.
"""

import argparse
import time

import numpy as np

from ctxfer import kernels as K
from ctxfer._accel import HAVE_NUMBA, set_backend
from ctxfer.augment import AugmentConfig, sample_transform


def cases(size, rng):
    img = rng.random((512, 512, 3)).astype(np.float32)
    small = rng.random((size, size, 3)).astype(np.float32)
    m = sample_transform(AugmentConfig(), rng, (size, size)).matrix
    acts = rng.standard_normal((8, 35, 35, 288)).astype(np.float32)
    n = 17 * 17 * 768 * 64
    p, g, s = (rng.standard_normal(n).astype(np.float32) for _ in range(3))
    s = np.abs(s)
    return {
        "resize 512->%d" % size: lambda: K.resize_bilinear(img, size, size),
        "warp %dx%d" % (size, size): lambda: K.warp_affine(small, m, K.NEAREST_EDGE),
        "maxpool 3x3/2": lambda: K.pool2d(acts, (3, 3), 2, "valid", "max"),
        "avgpool 3x3 same": lambda: K.pool2d(acts, (3, 3), 1, "same", "avg"),
        "rmsprop %dM" % (n // 10**6): lambda: K.rmsprop_update(p, g, s, 3e-5, 0.9, 1e-7),
    }


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--size", type=int, default=299)
    args = parser.parse_args()

    backends = ["numpy"] + (["numba"] if HAVE_NUMBA else [])
    if not HAVE_NUMBA:
        print("numba not installed; timing the numpy path only")
    results = {}
    for name in backends:
        previous = set_backend(name)
        try:
            for label, fn in cases(args.size, np.random.default_rng(0)).items():
                fn()  # warm-up / compile
                results[label, name] = best_of(fn, args.repeat)
        finally:
            set_backend(previous)

    print(f"{'kernel':<20}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}  equal")
    for label in cases(args.size, np.random.default_rng(0)):
        t_np, out_np = results[label, "numpy"]
        line = f"{label:<20}{t_np * 1e3:>12.2f}"
        if HAVE_NUMBA:
            t_nb, out_nb = results[label, "numba"]
            a = out_np if isinstance(out_np, tuple) else (out_np,)
            b = out_nb if isinstance(out_nb, tuple) else (out_nb,)
            equal = all(np.array_equal(x, y) for x, y in zip(a, b))
            line += f"{t_nb * 1e3:>12.2f}{t_np / t_nb:>9.1f}x  {equal}"
        print(line)


if __name__ == "__main__":
    main()
