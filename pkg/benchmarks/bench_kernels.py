"""Time the compiled and numpy kernels on representative problem sizes.

Usage: python3 benchmarks/bench_kernels.py [--repeat R]
"""

import argparse
import timeit

import numpy as np

from mf2pop._kernels import available_backends


def cases(nx, n_particles):
    rng = np.random.default_rng(0)
    x = np.linspace(-3.0, 3.0, nx)
    dx = x[1] - x[0]
    m = np.exp(-0.5 * x**2)
    drift = -0.5 * x
    u = 0.5 * x**2
    f = np.sin(x)
    X = rng.normal(size=n_particles)
    noise = rng.normal(size=n_particles)
    return {
        f"fp_step nx={nx}": lambda k: k.fp_step(m, drift, 0.08, 1e-3, dx),
        f"hjb_step nx={nx}": lambda k: k.hjb_step(u, f, 0.08, 1e-3, dx),
        f"em_step N={n_particles}": lambda k: k.em_step(X.copy(), drift, -3.0, dx, 0.1, 0.0, 1.0, 1e-3, 0.01, noise),
    }


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--nx", type=int, default=401)
    p.add_argument("--particles", type=int, default=50_000)
    args = p.parse_args(argv)

    backends = available_backends()
    if "cython" not in backends:
        print("compiled kernels not built; timing the numpy fallback only")
    names = sorted(backends)
    print(f"{'kernel':<22}" + "".join(f"{n + ' (us)':>16}" for n in names) + f"{'speedup':>10}")
    for label, fn in cases(args.nx, args.particles).items():
        times = {}
        for name in names:
            k = backends[name]
            number = 200 if "em" not in label else 20
            best = min(timeit.repeat(lambda: fn(k), number=number, repeat=args.repeat)) / number
            times[name] = best * 1e6
        row = f"{label:<22}" + "".join(f"{times[n]:>16.1f}" for n in names)
        if "cython" in times:
            row += f"{times['python'] / times['cython']:>9.1f}x"
        print(row)


if __name__ == "__main__":
    main()
