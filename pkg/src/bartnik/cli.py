"""Batch driver: every solver and verifier as a subcommand.

Each run writes a JSON report (sorted keys, no timestamps, config hash and
module versions embedded) and, where there are radial profiles, CSV files
with columns r, l<l>m<m>.  Exit codes: 0 ok, 2 config, 3 numerical failure,
4 trust region, 5 a verified invariant failed.

Set BARTNIK_THREADS to cap the BLAS thread pools; it must be in the
environment before the process starts numpy.
"""

from __future__ import annotations

import os

_THREADS = os.environ.get("BARTNIK_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(_var, _THREADS)

import argparse  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402
import scipy  # noqa: E402

from . import __version__, ckvf  # noqa: E402
from .config import ConfigError, RunConfig, load_config  # noqa: E402
from .elliptic import (  # noqa: E402
    DecayError,
    EllipticSolver,
    apply_laplacian_modes,
    estimate_grid,
    estimate_sides,
    verify_mode_estimates,
)
from .legendre import legendre_Q  # noqa: E402
from .linearized import NearKernelError, kernel_scan  # noqa: E402
from .nonlinear import NonlinearSolver, SolveError, SolverConfig, assemble_physical  # noqa: E402
from .schwarzschild import Background, schwarzschild_bartnik_data  # noqa: E402
from .spaces import RadialGrid, weighted_A_norm, weighted_C_norm  # noqa: E402
from .sphharm import mode_degrees, mode_index, n_modes  # noqa: E402
from .suites import MANUFACTURED_MODES, hardy_suite, legendre_suite, manufactured_field  # noqa: E402


class InvariantViolation(RuntimeError):
    exit_code = 5


# ------------------------------------------------------------------ output


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, (float, np.floating)):
        x = float(x)
        return x if math.isfinite(x) else repr(x)
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    return x


def versions() -> dict:
    return {"bartnik": __version__, "numpy": np.__version__, "scipy": scipy.__version__}


def write_report(out: Path, name: str, cfg: RunConfig, command: str, results: dict) -> Path:
    doc = {
        "command": command,
        "config": cfg.to_dict(),
        "config_hash": cfg.hash(),
        "versions": versions(),
        "threads": _THREADS,
        "results": results,
    }
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.json"
    path.write_text(json.dumps(_clean(doc), sort_keys=True, indent=2) + "\n")
    return path


def mode_label(ell: int, m: int) -> str:
    return f"l{ell}m{m}"


def write_profile(out: Path, name: str, r, coeffs, labels=None) -> Path:
    """CSV with r and one column per harmonic coefficient."""
    coeffs = np.atleast_2d(np.asarray(coeffs, dtype=float).T).T
    if labels is None:
        L = int(round(math.sqrt(coeffs.shape[1]))) - 1
        ell, m = mode_degrees(L)
        labels = [mode_label(a, b) for a, b in zip(ell, m)]
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    np.savetxt(path, np.column_stack([r, coeffs]), delimiter=",", fmt="%.17g",
               header=",".join(["r", *labels]), comments="")
    return path


def _setup(args) -> tuple[RunConfig, Path]:
    cfg = load_config(args.config) if args.config else RunConfig()
    over = {}
    for item in args.set or []:
        key, _, val = item.partition("=")
        if key not in cfg.to_dict() or key == "perturbations":
            raise ConfigError(f"unknown key {key!r} in --set")
        cast = type(getattr(cfg, key))
        try:
            over[key] = cast(val)
        except ValueError as exc:
            raise ConfigError(f"bad value for {key}: {val!r}") from exc
    if getattr(args, "n", None) is not None:
        over["n"] = args.n
    cfg = cfg.with_overrides(**over).validate()
    out = Path(args.out)
    return cfg, out


def _grid(cfg: RunConfig, bg: Background) -> RadialGrid:
    return RadialGrid(bg.r0, cfg.N_r, cfg.R_cut)


# ------------------------------------------------------------------ subcommands


def cmd_elliptic(args, cfg: RunConfig, out: Path) -> dict:
    bg = Background(m0=cfg.m0, n=cfg.n)
    grid = _grid(cfg, bg)
    solver = EllipticSolver(grid, bg)
    L = cfg.L_max
    K = n_modes(L)
    ell_all, m_all = mode_degrees(L)
    r = grid.r
    F = np.zeros((grid.N_r, K))
    h = np.zeros(K)
    exact = None
    if args.manufactured:
        exact, F = manufactured_field(grid, bg, L, [t for t in MANUFACTURED_MODES if t[0] <= L])
        h = exact[0][0].copy()
        kind = "manufactured"
    elif args.mode is not None:
        ell, m = args.mode
        if not 0 <= ell <= L or abs(m) > ell:
            raise ConfigError(f"mode ({ell}, {m}) outside L_max={L}")
        k = mode_index(ell, m)
        if args.homogeneous:
            h[k] = float(np.ravel(legendre_Q(ell, bg.r0 / bg.m0 - 1)[0])[0])
            kind = "homogeneous"
        else:
            F[:, k] = (bg.r0 / r) ** 4 / bg.r0**2
            kind = "mode"
    else:
        for p in cfg.perturbations:
            F[:, mode_index(p.l, p.m)] += p.amplitude * (bg.r0 / r) ** 4 / bg.r0**2
        kind = "perturbation"

    stack = [np.zeros((grid.N_r, K)) for _ in range(3)]
    ratios = {}
    for k in range(K):
        if not (np.any(F[:, k]) or h[k]):
            continue
        prof = solver.solve_mode(int(ell_all[k]), int(m_all[k]), F[:, k], float(h[k]))
        for s, a in zip(stack, prof.stack):
            s[:, k] = a
        lh, rh, lc, rc = estimate_sides(grid, prof, F[:, k], float(h[k]), cfg.delta)
        ratios[mode_label(prof.ell, prof.m)] = {"H": lh / rh if rh > 0 else 0.0, "C": lc / rc if rc > 0 else 0.0}

    res = apply_laplacian_modes(grid, bg, stack, ell_all) - F
    rep = {
        "kind": kind,
        "equation_residual_max": float(np.abs(res).max()),
        "boundary_residual_max": float(np.abs(stack[0][0] - h).max()),
        "estimate_ratios": ratios,
    }
    if exact is not None:
        err = [a - b for a, b in zip(stack, exact)]
        rep["residual_Cnorm"] = weighted_C_norm(grid, err, 2, 0, cfg.delta, ell_all).value
        rep["residual_Anorm"] = weighted_A_norm(grid, err, 2, 2, cfg.delta, ell_all, extrapolate=False)
    if kind == "homogeneous":
        ell, m = args.mode
        q = legendre_Q(ell, r / bg.m0 - 1)[0]
        k = mode_index(ell, m)
        rep["Q_table_rel_err"] = float(np.abs(stack[0][:, k] - q).max() / abs(q[0]))
    write_profile(out, "elliptic_solution", r, stack[0])
    return rep


def _bartnik_data(cfg: RunConfig, bg: Background):
    data = schwarzschild_bartnik_data(bg, cfg.L_max)
    # amplitudes are relative to the background l = 0 coefficient
    for p in cfg.perturbations:
        k = mode_index(p.l, p.m)
        if p.target == "metric":
            data.trace[k] += p.amplitude * data.trace[0]
        else:
            data.trK[k] += p.amplitude * data.trK[0]
    return data


def cmd_solve(args, cfg: RunConfig, out: Path) -> dict:
    bg = Background(m0=cfg.m0, n=cfg.n)
    grid = _grid(cfg, bg)
    scfg = SolverConfig(L=cfg.L_max, tol=cfg.tol, max_iter=cfg.max_iter, trust_radius=cfg.trust_radius,
                        delta=cfg.delta)
    res = NonlinearSolver(grid, bg, scfg).solve(_bartnik_data(cfg, bg))
    rep = res.report
    if not rep.converged or rep.kappa[-1] >= cfg.tol or max(rep.residuals[-1].values()) >= cfg.tol:
        raise InvariantViolation("solver returned without a fixed-point certificate")
    phys = assemble_physical(res.metric, res.field, scfg.mass_fit_rmin * bg.r0)
    basis = res.metric.basis
    L = cfg.L_max
    K = n_modes(L)
    r = grid.r
    write_profile(out, "lapse", r, basis.analyze(phys.lapse)[:, :K])
    write_profile(out, "conformal_factor", r, basis.analyze(phys.metric_rr)[:, :K])
    for name, stk in zip(("u", "metric_trace", "metric_E", "metric_B"), res.state.stacks()):
        write_profile(out, f"potential_{name}", r, stk[0][:, :K])
    d = rep.to_dict()
    d["mass"] = phys.mass
    d["mass_fit_residual"] = phys.fit_residual
    d["g_rr"] = 1.0
    return d


def _check(rep: dict, ok: bool, what: str):
    rep.setdefault("checks", {})[what] = bool(ok)


def cmd_verify_legendre(args, cfg: RunConfig, out: Path) -> dict:
    rep = legendre_suite(args.lmax)
    _check(rep, rep["ode_residual_max"] < 1e-8, "ode_residual")
    _check(rep, rep["wronskian_rel_err_max"] < 1e-10, "wronskian")
    _check(rep, rep["P2_2_err"] == 0.0, "P2_2_exact")
    _check(rep, rep["Q0_3_err"] < 1e-12, "Q0_3")
    return rep


def cmd_verify_estimates(args, cfg: RunConfig, out: Path) -> dict:
    bg = Background(m0=cfg.m0, n=cfg.n)
    solver = EllipticSolver(estimate_grid(bg.r0), bg)
    er = verify_mode_estimates(solver, args.lmax, args.samples, cfg.delta, cfg.seed)
    (hh, hl), (ch, cl) = er.plateau("h"), er.plateau("c")
    rep = {"h_ratio": er.h_ratio, "c_ratio": er.c_ratio, "h_plateau": [hh, hl], "c_plateau": [ch, cl],
           "factor": 1.5}
    _check(rep, er.stable(1.5), "plateau")
    return rep


def cmd_verify_hardy(args, cfg: RunConfig, out: Path) -> dict:
    bg = Background(m0=cfg.m0, n=cfg.n)
    grid = _grid(cfg, bg)
    taus = tuple(args.tau) if args.tau else (0.5, 1.0, 2.0)
    rep = hardy_suite(bg, grid, L=cfg.L_max, taus=taus, samples=args.samples, delta=cfg.delta, seed=cfg.seed)
    for tau, t in rep["taus"].items():
        _check(rep, t["max_ratio"] <= 1.0, f"tau={tau}")
    _check(rep, rep["chained_chain_max"] <= 1.0, "chained")
    return rep


def cmd_kernel_scan(args, cfg: RunConfig, out: Path) -> dict:
    scan = kernel_scan(cfg.n, args.lmax)
    table = [{"ell": v.ell, "verdict": v.verdict, "max_abs": v.max_abs, "r_exit": v.r_exit,
              "sign_chain": v.sign_chain} for v in scan.verdicts]
    out.mkdir(parents=True, exist_ok=True)
    path = out / "kernel_scan.csv"
    lines = ["ell,verdict,max_abs,r_exit"]
    lines += [f"{v.ell},{v.verdict},{v.max_abs:.17g},{v.r_exit:.17g}" for v in scan.verdicts]
    path.write_text("\n".join(lines) + "\n")
    rep = {"n": cfg.n, "verdicts": table, "a00_error": scan.a00_error, "g0_error": scan.g0_error,
           "all_blowup": scan.all_blowup}
    _check(rep, scan.no_kernel, "no_kernel")
    _check(rep, scan.sign_chain_ok, "sign_chain")
    return rep


def cmd_ckv(args, cfg: RunConfig, out: Path) -> dict:
    bg = Background(m0=cfg.m0, n=cfg.n)
    grid = _grid(cfg, bg)
    names = [args.basis] if args.basis else list(ckvf.BASIS_NAMES)
    rep = {}
    for name in names:
        try:
            i = ckvf.basis_index(name)
        except KeyError as exc:
            raise ConfigError(str(exc)) from exc
        ext = ckvf.extend_ck(i, bg, grid.r)
        write_profile(out, f"ckv_{name}", grid.r, np.column_stack([ext.f, ext.df, ext.h, ext.dh]),
                      labels=["f", "df", "h", "dh"])
        lo, hi = 1e2 * bg.m0, min(1e3 * bg.m0, grid.R_cut)
        rep[name] = {
            "f_zero": bool(np.all(ext.f == 0)),
            "h_one": bool(np.all(ext.h == 1)),
            "killing": ext.killing,
            "df0": float(ext.df[0]),
            "f_slope": ext.growth_exponent(lo, hi, "f") if not ext.killing else 0.0,
            "h_slope": ext.growth_exponent(lo, hi, "h") if not ext.killing else 0.0,
        }
    return rep


COMMANDS = {
    "elliptic": cmd_elliptic,
    "solve": cmd_solve,
    "verify-legendre": cmd_verify_legendre,
    "verify-estimates": cmd_verify_estimates,
    "verify-hardy": cmd_verify_hardy,
    "kernel-scan": cmd_kernel_scan,
    "ckv": cmd_ckv,
}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="INI config file ([run] and [perturbation.*] sections)")
    common.add_argument("--out", default="out", help="output directory")
    common.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a [run] key")

    p = argparse.ArgumentParser(prog="bartnik", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("elliptic", parents=[common], help="linear Dirichlet problem for the background Laplacian")
    s.add_argument("--manufactured", action="store_true")
    s.add_argument("--mode", nargs=2, type=int, metavar=("L", "M"))
    s.add_argument("--homogeneous", action="store_true", help="with --mode: zero forcing, boundary value Q_l")

    sub.add_parser("solve", parents=[common], help="nonlinear extension of perturbed Schwarzschild data")

    s = sub.add_parser("verify-legendre", parents=[common])
    s.add_argument("--lmax", type=int, default=50)

    s = sub.add_parser("verify-estimates", parents=[common])
    s.add_argument("--lmax", type=int, default=32)
    s.add_argument("--samples", type=int, default=20)

    s = sub.add_parser("verify-hardy", parents=[common])
    s.add_argument("--tau", type=float, action="append")
    s.add_argument("--samples", type=int, default=50)

    s = sub.add_parser("kernel-scan", parents=[common])
    s.add_argument("--n", type=float)
    s.add_argument("--lmax", type=int, default=20)

    s = sub.add_parser("ckv", parents=[common])
    s.add_argument("--basis", choices=ckvf.BASIS_NAMES)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "elliptic" and args.homogeneous and args.mode is None:
        print("error: --homogeneous needs --mode L M", file=sys.stderr)
        return 2
    try:
        cfg, out = _setup(args)
        rep = COMMANDS[args.command](args, cfg, out)
        write_report(out, args.command.replace("-", "_"), cfg, args.command, rep)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return exc.exit_code
    except SolveError as exc:
        print(f"{type(exc).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    except (DecayError, NearKernelError, ArithmeticError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violated: {exc}", file=sys.stderr)
        return exc.exit_code
    checks = rep.get("checks", {}) if isinstance(rep, dict) else {}
    if not all(checks.values()):
        failed = [k for k, v in checks.items() if not v]
        print(f"verification failed: {', '.join(failed)}", file=sys.stderr)
        return 5
    print(f"{args.command}: ok -> {out}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
