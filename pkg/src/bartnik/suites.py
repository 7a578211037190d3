"""Verification suites shared by the command line, the acceptance tests and scripts.

Each function runs one self-contained numerical experiment and returns a
plain dict of measured quantities; pass/fail thresholds live with the caller.
"""

from __future__ import annotations

import numpy as np

from . import ckvf
from .elliptic import EllipticSolver, apply_laplacian_modes, estimate_grid, verify_mode_estimates
from .geometry import AH_transport, FieldStack, FoliatedMetric, interior_constraints
from .legendre import legendre_P, legendre_Q, ode_residual, wronskian
from .linearized import LinearizedSolver, data_distance, data_size, kernel_scan, random_data
from .nonlinear import NonlinearSolver, SolverConfig
from .schwarzschild import Background, schwarzschild_bartnik_data, schwarzschild_mass_for_trK
from .spaces import (
    DEFAULT_DELTA,
    RadialGrid,
    chained_hardy_flat,
    hardy_check,
    hardy_R0,
    random_compact_sample,
    weighted_A_norm,
    weighted_C_norm,
)
from .sphharm import CKBasis, SphBasis, mode_degrees, mode_index, n_modes

LEGENDRE_Z = (1.5, 2.0, 10.0, 1e3)


def _scalar(x) -> float:
    return float(np.ravel(x)[0])


# ------------------------------------------------------------------ legendre


def legendre_suite(ell_max: int = 50, zs=LEGENDRE_Z) -> dict:
    zs = np.asarray(zs, dtype=float)
    ode = wr = 0.0
    for ell in range(ell_max + 1):
        for which in ("P", "Q"):
            ode = max(ode, float(ode_residual(ell, zs, which).max()))
        w = np.abs(wronskian(ell, zs))
        wr = max(wr, float(np.abs(w - (2 * ell + 1)).max() / (2 * ell + 1)))
    p22 = _scalar(legendre_P(2, 2.0)[0])
    q03 = _scalar(legendre_Q(0, 3.0)[0])
    return {
        "ell_max": ell_max,
        "ode_residual_max": ode,
        "wronskian_rel_err_max": wr,
        "P2_2": p22,
        "P2_2_err": abs(p22 - 11 / 3),
        "Q0_3_err": abs(q03 - 0.5 * np.log(2.0)),
    }


# ------------------------------------------------------------------ elliptic


MANUFACTURED_MODES = ((0, 0, 0.7), (1, 0, -0.4), (2, 1, 1.0), (5, -3, 0.3))


def manufactured_field(grid: RadialGrid, bg: Background, L: int, modes=MANUFACTURED_MODES):
    """Exact stack of sum_k c_k exp(-(r - r0)/m0) Y_k and its Laplacian."""
    K = n_modes(L)
    r = grid.r
    e = np.exp(-(r - bg.r0) / bg.m0)
    stack = [np.zeros((grid.N_r, K)) for _ in range(3)]
    for ell, m, c in modes:
        k = mode_index(ell, m)
        for j, s in enumerate(stack):
            s[:, k] = c * e * (-1.0 / bg.m0) ** j
    ell_all, _ = mode_degrees(L)
    F = apply_laplacian_modes(grid, bg, stack, ell_all)
    return stack, F


def elliptic_suite(bg: Background, grid: RadialGrid, L: int = 6, delta: float = DEFAULT_DELTA,
                   estimates_lmax: int = 32, estimates_samples: int = 20, seed: int = 0) -> dict:
    solver = EllipticSolver(grid, bg)
    ell_all, _ = mode_degrees(L)
    out = {}

    stack, F = manufactured_field(grid, bg, L)
    sol = solver.solve_dirichlet(F, stack[0][0])
    err = [a - b for a, b in zip(sol, stack)]
    # the error is roundoff with no decaying tail, so the integrals are not extrapolated
    out["manufactured_A_err"] = weighted_A_norm(grid, err, 2, 2, delta, ell_all, extrapolate=False)
    out["manufactured_C_err"] = weighted_C_norm(grid, err, 2, 0, delta, ell_all).value
    out["manufactured_boundary_err"] = float(np.abs(sol[0][0] - stack[0][0]).max())

    z = grid.r / bg.m0 - 1
    q1 = legendre_Q(1, z)[0]
    prof = solver.solve_mode(1, 0, np.zeros(grid.N_r), float(q1[0]))
    out["homogeneous_l1_err"] = float(np.abs(prof.a - q1).max() / abs(q1[0]))

    rng = np.random.default_rng(seed)
    r0 = grid.r0
    K = n_modes(L)

    def rnd():
        coef = rng.normal(size=(3, K))
        Fr = sum(coef[j] * (r0 / grid.r[:, None]) ** (4 + j) for j in range(3)) / r0**2
        return Fr, rng.normal(size=K)

    (F1, h1), (F2, h2) = rnd(), rnd()
    a, b = 0.8, -1.3
    s1 = solver.solve_dirichlet(F1, h1)
    s2 = solver.solve_dirichlet(F2, h2)
    s12 = solver.solve_dirichlet(a * F1 + b * F2, a * h1 + b * h2)
    scale = max(np.abs(x).max() for x in s12)
    out["linearity_err"] = float(max(np.abs(x - (a * y + b * w)).max() for x, y, w in zip(s12, s1, s2)) / scale)

    rep = verify_mode_estimates(EllipticSolver(estimate_grid(bg.r0), bg), estimates_lmax, estimates_samples,
                                delta, seed)
    (hh, hl), (ch, cl) = rep.plateau("h"), rep.plateau("c")
    out.update(h_plateau_hi=hh, h_plateau_lo=hl, c_plateau_hi=ch, c_plateau_lo=cl,
               h_ratio={int(k): v for k, v in rep.h_ratio.items()},
               c_ratio={int(k): v for k, v in rep.c_ratio.items()})
    return out


# ------------------------------------------------------------------ kernel scan


def kernel_suite(ns=(2.1, 2.5, 3.0, 10.0), ell_max: int = 20, threshold: float = 1e6, r_max: float = 1e3) -> dict:
    out = {}
    for n in ns:
        scan = kernel_scan(n, ell_max, threshold, r_max)
        out[n] = {
            "verdicts": {v.ell: v.verdict for v in scan.verdicts},
            "exceeds_threshold": {v.ell: v.verdict == "blowup/no-kernel" for v in scan.verdicts},
            "max_abs": {v.ell: v.max_abs for v in scan.verdicts},
            "no_kernel": scan.no_kernel,
            "sign_chain_ok": scan.sign_chain_ok,
            "a00_error": scan.a00_error,
            "g0_error": scan.g0_error,
        }
    return out


# ------------------------------------------------------------------ reduction cross-check


def reduction_suite(bg: Background, grid: RadialGrid, L: int = 4, n_radii: int = 20) -> dict:
    solver = NonlinearSolver(grid, bg, SolverConfig(L=L))
    res = solver.solve(schwarzschild_bartnik_data(bg, L))
    nodes = np.linspace(1, grid.N_r - 2, n_radii).astype(int)
    gauss, cod = interior_constraints(res.metric, res.field, nodes)
    rot = CKBasis.round(solver.basis.L).fields[2]
    ah = AH_transport(res.metric, rot)
    Lc = bg.lam(grid.r) / bg.rho0_sq
    w = solver.basis.synthesize_vector(rot.E, rot.B)
    A_closed = w[None] / Lc[:, None, None]
    return {
        "iterations": res.report.iterations,
        "interior_gauss_max": float(np.abs(gauss).max()),
        "interior_codazzi_max": float(np.abs(cod).max()),
        "L_err": float(np.abs(ah.L - Lc[:, None]).max() / np.abs(Lc).max()),
        "A_err": float(np.abs(ah.A - A_closed).max() / np.abs(A_closed).max()),
        "H_max": float(np.abs(ah.H).max()),
    }


# ------------------------------------------------------------------ nonlinear


def nonlinear_suite(bg: Background, grid: RadialGrid, L: int = 4, trK_eps: float = 1e-3,
                    eps_scan=(1e-5, 1e-4, 1e-3)) -> dict:
    solver = NonlinearSolver(grid, bg, SolverConfig(L=L))
    ell, _ = mode_degrees(L)
    out = {}

    base = solver.solve(schwarzschild_bartnik_data(bg, L))
    out["schwarzschild"] = {
        "iterations": base.report.iterations,
        "residual_max": max(base.report.residuals[-1].values()),
        "kappa": base.report.kappa[-1],
        "mass": base.report.mass,
    }

    d = schwarzschild_bartnik_data(bg, L)
    d.trK = d.trK * (1 + trK_eps)
    sph = solver.solve(d)
    m_oracle = schwarzschild_mass_for_trK(bg.r0, bg.trK_phys * (1 + trK_eps))
    high = max(float(np.abs(a[:, ell >= 1]).max()) for a in sph.state.arrays())
    out["spherical"] = {
        "iterations": sph.report.iterations,
        "residual_max": max(sph.report.residuals[-1].values()),
        "kappa": sph.report.kappa[-1],
        "high_modes_max": high,
        "mass": sph.report.mass,
        "mass_oracle": m_oracle,
        "mass_shift_rel_err": abs((sph.report.mass - bg.m0) - (m_oracle - bg.m0)) / abs(m_oracle - bg.m0),
    }

    norms, kappas, iters = [], [], []
    for eps in eps_scan:
        d = schwarzschild_bartnik_data(bg, L)
        d.trace[mode_index(2, 0)] = eps * bg.r0**2
        run = solver.solve(d)
        norms.append(max(np.abs(a).max() for a in run.state.arrays()) / eps)
        kappas.append(run.report.kappa[-1])
        iters.append(run.report.iterations)
    norms = np.array(norms)
    out["scaling"] = {
        "eps": list(eps_scan),
        "norm_over_eps": norms.tolist(),
        "max_deviation": float(np.abs(norms / np.median(norms) - 1).max()),
        "kappa": kappas,
        "iterations": iters,
    }
    out["kappa_max"] = float(max([base.report.kappa[-1], sph.report.kappa[-1]] + kappas))
    return out


# ------------------------------------------------------------------ conformal Killing


def ckv_suite(bg: Background, grid: RadialGrid, L: int = 4, slope_window=(1e2, 1e3)) -> dict:
    basis = SphBasis(L)
    g = FoliatedMetric.schwarzschild(bg, grid, basis)
    out = {}
    r = grid.r
    for name in ckvf.BASIS_NAMES:
        i = ckvf.basis_index(name)
        ext = ckvf.extend_ck(i, bg, r)
        X = ckvf.VectorField.from_extension(ext, basis)
        cl = ckvf.conformal_lie(g, X)
        _, B = ckvf.boundary_field(i, basis)
        trace_pred = (ext.f * bg.trK(r) + ext.h)[:, None] * B
        rad, tan = ckvf.boundary_lie_dr(ext, basis)
        lo, hi = slope_window[0] * bg.m0, slope_window[1] * bg.m0
        out[name] = {
            "killing": ext.killing,
            "trivial": bool(np.all(ext.f == 0) and np.all(ext.h == 1)),
            "df0": float(ext.df[0]),
            "f0": float(ext.f[0]),
            "h0": float(ext.h[0]),
            "f_slope": ext.growth_exponent(lo, hi, "f") if not ext.killing else 0.0,
            "h_slope": ext.growth_exponent(lo, hi, "h") if not ext.killing else 0.0,
            "ck_residual": float(cl.norm(g).max()),
            "trace_err": float(np.abs(cl.trace_part - trace_pred).max()),
            "boundary_tangential": float(np.abs(tan).max()),
            "boundary_radial_err": float(np.abs(rad - 0.5 * B).max()) if not ext.killing else float(np.abs(rad).max()),
        }
    G = ckvf.extension_gram(basis)
    out["gram_det"] = float(np.linalg.det(G))
    return out


# ------------------------------------------------------------------ Hardy


def hardy_suite(bg: Background, grid: RadialGrid, L: int = 4, taus=(0.5, 1.0, 2.0), samples: int = 50,
                delta: float = DEFAULT_DELTA, seed: int = 0) -> dict:
    basis = SphBasis(L)
    g = FoliatedMetric.schwarzschild(bg, grid, basis)
    r, trK = g.trK_profile()
    R0 = hardy_R0(r, trK)
    rng = np.random.default_rng(seed)
    smp = [random_compact_sample(rng, R0, 20 * R0, L) for _ in range(samples)]
    out = {"R0": R0, "taus": {}}
    for tau in taus:
        ratios = [hardy_check(g, s, tau, R0).ratio for s in smp]
        out["taus"][tau] = {"max_ratio": float(max(ratios)), "min_slack": float(1 - max(ratios))}
    chained = [chained_hardy_flat(s, delta, basis) for s in smp]
    out["chained_product_max"] = float(max(c.product_ratio for c in chained))
    out["chained_chain_max"] = float(max(c.chain_ratio for c in chained))
    return out


# ------------------------------------------------------------------ round trip


def roundtrip_suite(bg: Background, grid: RadialGrid, L: int = 8, draws: int = 20, seed: int = 0,
                    delta: float = DEFAULT_DELTA) -> dict:
    solver = LinearizedSolver(grid, bg)
    rng = np.random.default_rng(seed)
    worst = worst_rel = 0.0
    per_draw = []
    for _ in range(draws):
        data = random_data(rng, grid, L)
        back = solver.apply(solver.solve(data).state)
        dist = data_distance(grid, back, data, delta)
        size = max(data_size(grid, data, delta).values())
        e = max(dist.values())
        per_draw.append(e)
        worst = max(worst, e)
        worst_rel = max(worst_rel, e / size)
    return {"max_distance": worst, "max_rel_distance": worst_rel, "per_draw": per_draw}


def schwarzschild_field(bg: Background, grid: RadialGrid, basis: SphBasis) -> FieldStack:
    return FieldStack.background(bg, grid, basis)
