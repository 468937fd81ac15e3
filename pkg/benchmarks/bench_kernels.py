"""Time the compiled and pure-numpy kernel backends side by side.

    python benchmarks/bench_kernels.py [--repeat N]
"""
import argparse
import timeit

import numpy as np

from saol import _kernels


def cases(rng):
    alpha_small = rng.standard_normal((100, 4, 4)) * 0.1
    alpha = rng.standard_normal((500, 8, 8)) * 0.1
    img = rng.random((128, 128)) * 255
    kernels = rng.standard_normal((64, 7, 7))
    maps = rng.standard_normal((64, 122, 122))
    cost = rng.random((64, 64))
    return {
        "sparsity_terms 100x4x4": lambda b: b.sparsity_terms(alpha_small, 500.0),
        "sparsity_terms 500x8x8": lambda b: b.sparsity_terms(alpha, 500.0),
        "correlate_valid 128^2, 64 7x7": lambda b: b.correlate_valid(img, kernels),
        "correlate_adjoint 128^2, 64 7x7": lambda b: b.correlate_adjoint(maps, kernels, 128, 128),
        "hungarian 64x64": lambda b: b.hungarian(cost),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    backends = [b for b in (_kernels.NUMPY, _kernels.NUMBA) if b is not None]
    work = cases(np.random.default_rng(0))
    for b in backends:  # compile outside the timed region
        for fn in work.values():
            fn(b)
    names = [b.name for b in backends]
    print(f"{'kernel':<34}" + "".join(f"{n + ' ms':>12}" for n in names) + f"{'speedup':>10}")
    for label, fn in work.items():
        times = [min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)) * 1e3 for b in backends]
        speed = f"{times[0] / times[-1]:>9.1f}x" if len(times) > 1 else ""
        print(f"{label:<34}" + "".join(f"{t:>12.2f}" for t in times) + speed)
    if len(backends) == 1:
        print("numba is not installed; only the numpy path was timed")


if __name__ == "__main__":
    main()
