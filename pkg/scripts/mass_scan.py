#!/usr/bin/env python3
"""Mass of the static extension as the boundary data move away from Schwarzschild.

Perturbs one harmonic of the boundary metric (or of the mean curvature) by a
range of amplitudes and prints iterations, final residual and ADM mass.
"""

import argparse

import numpy as np

from bartnik.nonlinear import NonlinearSolver, SolveError, SolverConfig
from bartnik.schwarzschild import Background, schwarzschild_bartnik_data
from bartnik.spaces import RadialGrid
from bartnik.sphharm import mode_index


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=float, default=3.0)
    p.add_argument("--l", type=int, default=2)
    p.add_argument("--m", type=int, default=0)
    p.add_argument("--target", choices=("metric", "trK"), default="metric")
    p.add_argument("--L", type=int, default=4)
    p.add_argument("--N_r", type=int, default=64)
    p.add_argument("--eps", type=float, nargs="*", default=list(np.geomspace(1e-5, 1e-2, 7)))
    args = p.parse_args()

    bg = Background(m0=1.0, n=args.n)
    solver = NonlinearSolver(RadialGrid(bg.r0, args.N_r), bg, SolverConfig(L=args.L))
    k = mode_index(args.l, args.m)
    print(f"{'eps':>10s} {'iter':>5s} {'residual':>10s} {'mass':>18s} {'|v|/eps':>10s}")
    for eps in args.eps:
        d = schwarzschild_bartnik_data(bg, args.L)
        if args.target == "metric":
            d.trace[k] += eps * d.trace[0]
        else:
            d.trK[k] += eps * d.trK[0]
        try:
            run = solver.solve(d)
        except SolveError as exc:
            print(f"{eps:10.3e}  failed: {exc}")
            continue
        rep = run.report
        print(f"{eps:10.3e} {rep.iterations:5d} {max(rep.residuals[-1].values()):10.2e} "
              f"{rep.mass:18.12f} {run.state.max_abs() / eps:10.4f}")


if __name__ == "__main__":
    main()
