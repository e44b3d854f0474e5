"""Time the numba kernels against their numpy fallbacks.

    python3 benchmarks/bench_kernels.py [--repeat 5]

The numpy column is what ``FRACBUBBLE_DISABLE_NUMBA=1`` runs.
"""

import argparse
import timeit

import numpy as np

from fracbubble import _accel


def cases():
    rng = np.random.default_rng(0)
    x = np.linspace(-1.0, 1.0, 402)
    gx, gw = np.polynomial.legendre.leggauss(6)
    px, py = rng.uniform(0, 1, 1500), rng.uniform(0, 1, 1500)
    cx, cy, cw = rng.uniform(0, 1, 4000), rng.uniform(2, 3, 4000), rng.normal(size=4000)
    return {
        "fem_stiffness N=400": ("_fem_stiffness", (x, 0.3, 1.0, gx, gw, 4.0)),
        "lattice2d m=1500": ("_lattice2d", (px, py, 0.01, 0.3)),
        "cauchy_sum 4000x4000": ("_cauchy_sum", (cx, cy, cw)),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if not _accel.HAS_NUMBA:
        raise SystemExit("numba is disabled or missing; nothing to compare")
    print(f"{'kernel':24s} {'numba [s]':>10s} {'numpy [s]':>10s} {'speedup':>8s} {'max rel diff':>13s}")
    for name, (stem, argv) in cases().items():
        fn_nb = getattr(_accel, stem + "_numba")
        fn_np = getattr(_accel, stem + "_numpy")
        ref = fn_np(*argv)
        diff = np.max(np.abs(fn_nb(*argv) - ref)) / np.max(np.abs(ref))  # first call also compiles
        t_nb = min(timeit.repeat(lambda: fn_nb(*argv), number=1, repeat=args.repeat))
        t_np = min(timeit.repeat(lambda: fn_np(*argv), number=1, repeat=args.repeat))
        print(f"{name:24s} {t_nb:10.4f} {t_np:10.4f} {t_np / t_nb:8.1f} {diff:13.2e}")


if __name__ == "__main__":
    main()
