"""Compiled vs numpy element kernel: timing and agreement on the 2D gradient/Hessian assembly.

Usage: python3 benchmarks/bench_kernels.py [--grids 16x4 32x8 64x8] [--repeat 5]
"""

import argparse
import time

import numpy as np

from vkribbon import kernels
from vkribbon.cross_section import named_profile
from vkribbon.limit_beta2 import BoundaryData
from vkribbon.vk2d import Field2D, Grid2D, ScaledParams, apply_bc_eps, tables


def random_field(grid, p, prof, rng):
    scale = np.concatenate([np.full(4, p.eps ** (p.beta / 2)), np.full(8, p.eps**p.beta)])
    v = (0.3 * rng.standard_normal((grid.n_nodes, 12)) * scale).ravel()
    return apply_bc_eps(Field2D.from_vector(grid, p.eps, v), BoundaryData(Phi1=0.1), p, prof)


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--grids", nargs="+", default=["16x4", "32x8", "64x8", "128x8"])
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)

    prof = named_profile("parabola")
    p = ScaledParams(0.1, 2.0)
    rng = np.random.default_rng(0)
    print(f"active backend: {kernels.BACKEND}")
    print(f"{'grid':>8} {'elements':>9} {'numpy [ms]':>11} {'compiled [ms]':>14} {'speedup':>8} {'max rel diff':>13}")
    for spec in args.grids:
        n1, n2 = (int(v) for v in spec.split("x"))
        g = Grid2D(n1, n2)
        f = random_field(g, p, prof, rng)
        tab = tables(g)
        W, U1, U2 = f.local()
        wp = prof(tab.x2, 1)
        a = (W, U1, U2, tab.T, tab.wq, wp, p.eps, p.beta)
        tp, rp = best_of(lambda: kernels.python_element_grad_hess(*a), args.repeat)
        if kernels.BACKEND == "compiled":
            tc, rc = best_of(lambda: kernels.compiled_element_grad_hess(*a), args.repeat)
            diff = max(float(np.max(np.abs(x - y)) / max(np.max(np.abs(x)), 1e-300)) for x, y in zip(rp, rc))
            print(f"{spec:>8} {g.n_elems:>9} {1e3 * tp:>11.2f} {1e3 * tc:>14.2f} {tp / tc:>8.1f} {diff:>13.1e}")
        else:
            print(f"{spec:>8} {g.n_elems:>9} {1e3 * tp:>11.2f} {'n/a':>14} {'n/a':>8} {'n/a':>13}")


if __name__ == "__main__":
    main()
