"""Compare the numba and pure-numpy kernels on the acceptance-rejection loop
and on the per-step quadrature sums.

    python benchmarks/bench_backends.py [--m 20000] [--repeat 3]
"""

import argparse
import time

import numpy as np

from csasim import BoxDomain, CSAModel, IntensityFamily, QuadratureGrid, RadiusField, simulate
from csasim.kernels import numba_available
from csasim.measure import prefix_integrals


def models():
    d2 = BoxDomain.unit(2)
    d1 = BoxDomain.unit(1)
    yield "binomial d=2 R=0.05", CSAModel(d2, RadiusField.constant(d2, 0.05), IntensityFamily.constant(d2, 1.0))
    yield "exp d=2 R=0.05", CSAModel(d2, RadiusField.constant(d2, 0.05),
                                     IntensityFamily.limit_plus_exp(d2, 1.0, 1.0, 1.0))
    yield "poly d=2 R=0.05", CSAModel(d2, RadiusField.constant(d2, 0.05),
                                      IntensityFamily.limit_plus_poly(d2, 1.0, 1.0, 0.75))
    yield "exp d=1 R=0.25", CSAModel(d1, RadiusField.constant(d1, 0.25),
                                     IntensityFamily.limit_plus_exp(d1, 1.0, 1.0, 1.0))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--m", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args()
    backends = ["numpy"] + (["numba"] if numba_available() else [])
    for b in backends:                       # compile / warm up
        for _, model in models():
            simulate(model, 50, 0, backend=b)

    print(f"simulate, m = {args.m} (best of {args.repeat})")
    print(f"{'model':24s}" + "".join(f"{b:>12s}" for b in backends) + f"{'speedup':>10s}  identical")
    for name, model in models():
        res = {b: best_of(lambda: simulate(model, args.m, 1, backend=b), args.repeat) for b in backends}
        row = f"{name:24s}" + "".join(f"{res[b][0]:11.3f}s" for b in backends)
        if len(backends) == 2:
            same = np.array_equal(res["numpy"][1].points, res["numba"][1].points)
            row += f"{res['numpy'][0] / res['numba'][0]:9.1f}x  {same}"
        print(row)

    print("\nprefix quadrature sums, m = 500 points, 100x100 grid")
    _, model = next(m for m in models() if m[0].startswith("exp d=2"))
    pts = simulate(model, 500, 2).points
    grid = QuadratureGrid(model.domain, 100)
    w = np.ones(grid.n_cells)
    res = {b: best_of(lambda: prefix_integrals(model, pts, grid, w, backend=b), args.repeat) for b in backends}
    for b in backends:
        print(f"{b:8s} {res[b][0]:.3f}s")
    if len(backends) == 2:
        print(f"max relative difference {np.max(np.abs(res['numpy'][1] / res['numba'][1] - 1)):.2e}")


if __name__ == "__main__":
    main()
