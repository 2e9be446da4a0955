"""Compiled vs pure-Python zero counting on Cilleruelo-type batches.

    python3 benchmarks/bench_kernels.py [--samples N] [--L L] [--repeat R]
"""
import argparse
import time

import numpy as np

from nodal_lab import zero_counter as zc
from nodal_lab.gaussian_fields import pair_atoms
from nodal_lab.lattice_spectral import resolve_measure
from nodal_lab.monte_carlo import draw_coefficients


def batch(measure, u, n, seed):
    angles, p = pair_atoms(resolve_measure(measure))
    b, c = draw_coefficients(seed, 0, n, angles.size)
    s = np.sqrt(p / p.sum())
    return np.cos(angles - u), b * s, c * s


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--samples", type=int, default=20_000)
    ap.add_argument("--L", type=float, default=10.0)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)

    backends = {"python": zc.load_backend("python")}
    try:
        backends["cython"] = zc.load_backend("cython")
    except ImportError:
        print("compiled kernels not built; timing the fallback only")

    h = zc.default_grid_step(1.0)
    print(f"{'case':<22}{'backend':<9}{'seconds':>9}{'us/sample':>11}{'speedup':>9}")
    for measure, u in (("cilleruelo", 0.3), ("uniform:64", 0.3), ("sigma:0.2:16", 0.1)):
        w, b, c = batch(measure, u, args.samples, seed=1)
        ref, res = None, {}
        for name, kern in backends.items():
            dt, out = best_of(lambda: zc.count_zeros_batch(w, b, c, args.L, h, backend=kern),
                              args.repeat)
            res[name] = out.counts
            ref = ref or dt
            print(f"{measure + ' u=' + str(u):<22}{name:<9}{dt:>9.3f}"
                  f"{1e6 * dt / args.samples:>11.1f}{ref / dt:>8.1f}x")
        if len(res) == 2 and not np.array_equal(res["python"], res["cython"]):
            print("  counts differ between backends")
    print(f"grid step {h:.4f} (wavelength/40), L = {args.L:g}, best of {args.repeat}, "
          f"{args.samples} samples per case")


if __name__ == "__main__":
    main()
