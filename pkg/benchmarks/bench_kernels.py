"""Time the compiled and numpy kernel backends side by side.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--n 1000]

Reports the best wall time of each kernel and of a full mixed-Gaussian solve
under every importable backend.
"""
import argparse
import contextlib
import timeit

import numpy as np

from bassbridge import (Grid1D, NormalMixture, SolverConfig, TimeGrid, density_from_spec, kernels,
                        solve)

KERNELS = ("thomas_solve", "heat_steps", "correlate_valid")


@contextlib.contextmanager
def backend(module):
    saved = {name: getattr(kernels, name) for name in KERNELS}
    saved_name = kernels.BACKEND
    try:
        for name in KERNELS:
            setattr(kernels, name, getattr(module, name))
        kernels.BACKEND = "python" if module.__name__.endswith("_pykernels") else "cython"
        yield
    finally:
        for name, fn in saved.items():
            setattr(kernels, name, fn)
        kernels.BACKEND = saved_name


def bands(n, coef):
    lower = np.full(n, -coef)
    diag = np.full(n, 1 + 2 * coef)
    upper = np.full(n, -coef)
    lower[0] = lower[-1] = upper[0] = upper[-1] = 0.0
    diag[0] = diag[-1] = 1.0
    return lower, diag, upper


def cases(n):
    lo, di, up = bands(n, 3.0)
    g0 = np.tanh(np.linspace(-3, 3, n))
    padded = np.sin(np.arange(n + 600.0))
    weights = np.exp(-np.linspace(-3, 3, 601) ** 2)
    grid = Grid1D(-4, 4, n)
    mu0 = density_from_spec(NormalMixture((1.0,), (0.0,), (0.5,)), grid)
    mu1 = density_from_spec(NormalMixture((0.25, 0.5, 0.25), (-1, 0, 1), (0.25, 0.5, 0.25)), grid)
    cfg = SolverConfig(grid, TimeGrid(1.0, 50), tol=1e-10)
    return {
        "thomas_solve": lambda: kernels.thomas_solve(lo, di, up, g0),
        "heat_steps (M=50)": lambda: kernels.heat_steps(lo, di, up, g0, 50, -1.0, 1.0),
        "correlate_valid": lambda: kernels.correlate_valid(padded, weights),
        "solve (mixed Gaussian)": lambda: solve(mu0, mu1, cfg),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--n", type=int, default=1000, help="grid size")
    args = ap.parse_args(argv)

    found = kernels.available_backends()
    results = {}
    for name, module in found.items():
        with backend(module):
            for label, fn in cases(args.n).items():
                fn()
                number = 1 if label.startswith("solve") else 20
                best = min(timeit.repeat(fn, number=number, repeat=args.repeat)) / number
                results[(label, name)] = best

    names = list(found)
    print(f"grid n={args.n}, best of {args.repeat}")
    print(f"{'kernel':<24}" + "".join(f"{n:>12}" for n in names)
          + ("     speedup" if len(names) > 1 else ""))
    for label in cases(args.n):
        row = [results[(label, n)] for n in names]
        line = f"{label:<24}" + "".join(f"{1e3 * t:>10.3f}ms" for t in row)
        if len(names) > 1:
            line += f"{row[0] / row[1]:>11.1f}x"
        print(line)


if __name__ == "__main__":
    main()
