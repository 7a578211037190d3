#!/usr/bin/env python3
"""Run the verification suites and dump their results as JSON.

    python scripts/run_suites.py --out results/ --only legendre kernel
"""

import argparse
import json
import time
from pathlib import Path

from bartnik import suites
from bartnik.cli import _clean
from bartnik.schwarzschild import Background
from bartnik.spaces import RadialGrid


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--out", default="results")
    p.add_argument("--n", type=float, default=3.0)
    p.add_argument("--N_r", type=int, default=64)
    p.add_argument("--only", nargs="*")
    args = p.parse_args()

    bg = Background(m0=1.0, n=args.n)
    grid = RadialGrid(bg.r0, args.N_r)
    runs = {
        "legendre": lambda: suites.legendre_suite(50),
        "elliptic": lambda: suites.elliptic_suite(bg, RadialGrid(bg.r0, max(args.N_r, 96))),
        "kernel": lambda: suites.kernel_suite(),
        "reduction": lambda: suites.reduction_suite(bg, grid),
        "nonlinear": lambda: suites.nonlinear_suite(bg, grid),
        "ckv": lambda: suites.ckv_suite(bg, grid),
        "hardy": lambda: suites.hardy_suite(bg, grid),
        "roundtrip": lambda: suites.roundtrip_suite(bg, grid),
    }
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, fn in runs.items():
        if args.only and name not in args.only:
            continue
        t0 = time.perf_counter()
        res = fn()
        dt = time.perf_counter() - t0
        (out / f"{name}.json").write_text(json.dumps(_clean(res), sort_keys=True, indent=2) + "\n")
        print(f"{name:10s} {dt:7.1f} s")


if __name__ == "__main__":
    main()
