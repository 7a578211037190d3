"""Nonlinear reduced system: residual, frozen-Jacobian iteration, physical fields.

Unknowns are harmonic coefficient arrays (N_r, K) of the perturbations

    u = u_sc + u~,   g = lam(r) ((sqrt(4 pi) + kphi) round + T^E[kE] + T^B[kB]),

band-limited to L.  Residual rows are evaluated on a finer sphere basis of
degree L_work and truncated back to L.  Each step applies the inverse of the
linearization at Schwarzschild to the residual; the conformal Killing part of
the Codazzi row is not fed to the solve but reported as kappa, which has to
vanish at the fixed point.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .geometry import FieldStack, FoliatedMetric, Scale, boundary_constraints, laplacian, transport_step_residuals
from .linearized import LinearizedData, LinearizedSolver
from .schwarzschild import Background, BartnikData, schwarzschild_bartnik_data
from .spaces import DEFAULT_DELTA, RadialGrid
from .sphharm import SphBasis, TracelessTensor, mode_degrees, n_modes, truncate

log = logging.getLogger(__name__)

Y00 = np.sqrt(4 * np.pi)
ROWS = ("A", "B", "C", "E", "F", "G", "H")


class SolveError(RuntimeError):
    exit_code = 3


class TrustRegionError(SolveError):
    exit_code = 4


class DivergenceError(SolveError):
    pass


class KappaStagnationError(SolveError):
    pass


@dataclass
class SolverConfig:
    L: int = 4
    tol: float = 1e-10
    max_iter: int = 30
    trust_radius: float = 0.05
    L_work: int | None = None
    divergence_window: int = 3
    cond_max: float = 1e10
    mass_fit_rmin: float = 50.0        # in units of r0
    delta: float = DEFAULT_DELTA

    @property
    def L_w(self) -> int:
        return self.L_work if self.L_work is not None else 2 * self.L + 4


# ------------------------------------------------------------------ state


@dataclass
class NonlinearState:
    """Perturbations relative to Schwarzschild, each a radial stack [a, a', a''] of (N_r, K) arrays.

    Derivatives are carried along with the values: the linear inverse builds
    them by quadrature, and re-differentiating the values spectrally would
    amplify roundoff at the inner boundary from one iteration to the next.
    """

    u: list
    kphi: list
    kE: list
    kB: list

    @classmethod
    def zeros(cls, N_r: int, L: int) -> "NonlinearState":
        K = n_modes(L)
        return cls(*([np.zeros((N_r, K)) for _ in range(3)] for _ in range(4)))

    @classmethod
    def from_values(cls, grid: RadialGrid, u, kphi, kE, kB) -> "NonlinearState":
        def stack(a):
            a = np.asarray(a, dtype=float)
            d = grid.D @ (a - a[:1])
            return [a, d, grid.D @ d]

        return cls(stack(u), stack(kphi), stack(kE), stack(kB))

    @property
    def L(self) -> int:
        return int(round(np.sqrt(self.u[0].shape[1]))) - 1

    def stacks(self):
        return (self.u, self.kphi, self.kE, self.kB)

    def arrays(self):
        """Values only."""
        return tuple(s[0] for s in self.stacks())

    def update(self, step, scale: float = 1.0) -> "NonlinearState":
        """self - scale * step, with `step` a linearized state."""
        other = (step.u, step.kphi, step.kE, step.kB)
        return NonlinearState(*([a - scale * b for a, b in zip(mine, theirs)]
                                for mine, theirs in zip(self.stacks(), other)))

    def max_abs(self) -> float:
        return float(max(np.abs(a).max() for a in self.arrays()))

    def derivative_consistency(self, grid: RadialGrid) -> float:
        """max |D a - a'| over the four fields, relative to the largest |a'|."""
        err = max(float(np.abs(grid.D @ (a - a[:1]) - da).max()) for a, da, _ in self.stacks())
        scale = max(float(np.abs(da).max()) for _, da, _ in self.stacks())
        return err / scale if scale > 0 else err

    def metric(self, bg: Background, grid: RadialGrid, basis: SphBasis) -> FoliatedMetric:
        K = basis.K
        phi = [_pad(a, K) for a in self.kphi]
        phi[0][:, 0] += Y00
        return FoliatedMetric.from_stacks(grid, basis, Scale.schwarzschild(bg), phi,
                                          [_pad(a, K) for a in self.kE], [_pad(a, K) for a in self.kB])

    def field(self, bg: Background, grid: RadialGrid, basis: SphBasis) -> FieldStack:
        r = grid.r[:, None]
        vals = [basis.synthesize(_pad(a, basis.K)) for a in self.u]
        return FieldStack(vals[0] + bg.u(r), vals[1] + bg.du(r), vals[2] + bg.d2u(r))


def _pad(a, K):
    out = np.zeros(a.shape[:-1] + (K,))
    k = min(K, a.shape[-1])
    out[..., :k] = a[..., :k]
    return out


# ------------------------------------------------------------------ residual


@dataclass
class Residual:
    data: LinearizedData        # rows in linearized layout, Codazzi without its CK part
    kappa: np.ndarray           # CK coefficients of the Codazzi row

    def norms(self) -> dict:
        d = self.data.arrays()
        groups = {"A": ("A",), "B": ("B",), "C": ("CE", "CB"), "E": ("E",), "F": ("FE", "FB"),
                  "G": ("Gphi", "GE", "GB"), "H": ("H",)}
        return {row: float(max(np.abs(d[k]).max() for k in keys)) for row, keys in groups.items()}

    def max_norm(self) -> float:
        return max(self.norms().values())


def residual(data: BartnikData, g: FoliatedMetric, u: FieldStack, L: int) -> Residual:
    """All rows of the reduced system for (g, u), as coefficients of degree <= L."""
    g.check_positive()
    b = g.basis
    A = truncate(b.analyze(laplacian(g, u)), L)
    R2, R3 = transport_step_residuals(g, u)
    B = truncate(b.analyze(R2), L)
    _, CE, CB = b.analyze_tensor(R3)
    bc = boundary_constraints(g, u, data, L_out=L)
    rows = LinearizedData(A, B, TracelessTensor(truncate(CE, L), truncate(CB, L)), bc.gauss,
                          bc.codazzi, bc.metric_match, bc.trK_match)
    return Residual(rows.canonical(), bc.ck_component)


def state_residual(data: BartnikData, state: NonlinearState, bg: Background, grid: RadialGrid,
                   basis: SphBasis) -> Residual:
    return residual(data, state.metric(bg, grid, basis), state.field(bg, grid, basis), state.L)


def data_distance(data: BartnikData, bg: Background) -> float:
    """Scale-invariant distance of Bartnik data from the background sphere.

    Coefficient L2 norms of gamma_B - (n m0)^2 round over (n m0)^2 plus
    |trK_B - trK_sc| (n m0).
    """
    ref = schwarzschild_bartnik_data(bg, data.L_max)
    r0 = bg.r0
    dg = np.sqrt(sum(np.sum((a - b) ** 2) for a, b in ((data.trace, ref.trace), (data.E, ref.E), (data.B, ref.B))))
    dk = np.sqrt(np.sum((data.trK - ref.trK) ** 2))
    return float(dg / r0**2 + dk * r0)


# ------------------------------------------------------------------ solve


@dataclass
class SolveReport:
    converged: bool = False
    iterations: int = 0
    residuals: list = field(default_factory=list)      # per iteration: {row: max abs}
    kappa: list = field(default_factory=list)          # per iteration: max |kappa|
    data_distance: float = 0.0
    solution_norms: dict = field(default_factory=dict)
    mass: float = float("nan")
    mass_fit_residual: float = float("nan")
    conditions: dict = field(default_factory=dict)
    derivative_consistency: float = 0.0
    flags: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "iterations": self.iterations,
            "residuals": self.residuals,
            "kappa": self.kappa,
            "data_distance": self.data_distance,
            "solution_norms": self.solution_norms,
            "mass": self.mass,
            "mass_fit_residual": self.mass_fit_residual,
            "max_condition": max(self.conditions.values()) if self.conditions else None,
            "derivative_consistency": self.derivative_consistency,
            "flags": self.flags,
        }


@dataclass
class SolveResult:
    state: NonlinearState
    metric: FoliatedMetric
    field: FieldStack
    report: SolveReport


class NonlinearSolver:
    """Frozen-Jacobian iteration v <- v - DPhi_sc^-1 Phi(data, v)."""

    def __init__(self, grid: RadialGrid, bg: Background, config: SolverConfig | None = None):
        self.grid, self.bg = grid, bg
        self.config = config or SolverConfig()
        self.basis = SphBasis(self.config.L_w)
        self.linear = LinearizedSolver(grid, bg, self.config.cond_max)

    def residual(self, data: BartnikData, state: NonlinearState) -> Residual:
        return state_residual(data, state, self.bg, self.grid, self.basis)

    def solve(self, data: BartnikData, initial: NonlinearState | None = None) -> SolveResult:
        cfg = self.config
        rep = SolveReport()
        rep.data_distance = data_distance(data, self.bg)
        if rep.data_distance > cfg.trust_radius:
            raise TrustRegionError(
                f"data distance {rep.data_distance:.3g} from Schwarzschild exceeds the trust radius {cfg.trust_radius}")
        data = _fit_bandlimit(data, cfg.L_w)
        state = initial or NonlinearState.zeros(self.grid.N_r, cfg.L)
        growth = 0
        prev = np.inf
        for it in range(cfg.max_iter + 1):
            res = self.residual(data, state)
            norms = res.norms()
            kap = float(np.abs(res.kappa).max())
            rep.residuals.append(norms)
            rep.kappa.append(kap)
            total = max(norms.values())
            log.info("iteration %d: max residual %.3e, |kappa| %.3e", it, total, kap)
            if total < cfg.tol:
                if kap >= cfg.tol:
                    raise KappaStagnationError(
                        f"rows converged but the conformal Killing component stays at {kap:.3e}; "
                        "data outside the perturbative regime")
                rep.converged = True
                rep.iterations = it
                break
            growth = growth + 1 if total > prev else 0
            if growth >= cfg.divergence_window:
                raise DivergenceError(f"residual grew for {growth} consecutive steps (now {total:.3e})")
            prev = total
            if it == cfg.max_iter:
                break
            sol = self.linear.solve(res.data)
            rep.conditions = {int(k): float(v) for k, v in sol.cond.items()}
            state = state.update(sol.state)
            if state.max_abs() > 1.0:
                raise TrustRegionError(f"iterate left the perturbative neighbourhood (|v| = {state.max_abs():.3g})")
        if not rep.converged:
            rep.iterations = cfg.max_iter
            raise SolveError(f"no convergence in {cfg.max_iter} iterations (residual {total:.3e})")
        g = state.metric(self.bg, self.grid, self.basis)
        u = state.field(self.bg, self.grid, self.basis)
        wt = self.grid.r[:, None] ** (-cfg.delta)
        for name, a in zip(("u", "kphi", "kE", "kB"), state.arrays()):
            rep.solution_norms[name] = float(np.abs(a).max())
            rep.solution_norms[name + "_weighted"] = float(np.abs(wt * a).max())
        rep.derivative_consistency = state.derivative_consistency(self.grid)
        phys = assemble_physical(g, u, rmin=cfg.mass_fit_rmin * self.bg.r0)
        rep.mass, rep.mass_fit_residual = phys.mass, phys.fit_residual
        ell, _ = mode_degrees(cfg.L)
        if data_is_spherical(data):
            high = max(np.abs(a[:, ell >= 1]).max(initial=0.0) for a in state.arrays())
            if high > 1e-10:
                rep.flags.append(f"spherical data but l >= 1 modes reach {high:.2e}")
        return SolveResult(state, g, u, rep)


def _fit_bandlimit(data: BartnikData, L: int) -> BartnikData:
    K = n_modes(L)
    return BartnikData(*(_pad(a, K) for a in (data.trace, data.E, data.B, data.trK)))


def data_is_spherical(data: BartnikData) -> bool:
    return all(np.all(a[1:] == 0) for a in (data.trace, data.E, data.B, data.trK))


def solve(data: BartnikData, bg: Background, grid: RadialGrid | None = None, tol: float = 1e-10,
          max_iter: int = 30, **kw) -> SolveResult:
    grid = grid or RadialGrid(bg.r0)
    cfg = SolverConfig(tol=tol, max_iter=max_iter, **kw)
    return NonlinearSolver(grid, bg, cfg).solve(data)


# ------------------------------------------------------------------ physical fields


@dataclass
class PhysicalSolution:
    r: np.ndarray
    metric_rr: np.ndarray       # e^{-2u}, (N_r, P)
    metric_ang: np.ndarray      # e^{-2u} g(r), (N_r, P, 3, 3)
    lapse: np.ndarray           # f = e^u
    mass: float
    fit_residual: float


def fit_mass(r, u00, rmin: float):
    """Fit -r u00 / sqrt(4 pi) = m + a/r + b/r^2 + c/r^3 on r >= rmin."""
    sel = r >= rmin
    if sel.sum() < 5:
        sel = np.argsort(r)[-5:]
    x = 1.0 / r[sel]
    y = -r[sel] * u00[sel] / Y00
    V = np.vander(x, 4, increasing=True)
    coef, *_ = np.linalg.lstsq(V, y, rcond=None)
    return float(coef[0]), float(np.abs(V @ coef - y).max())


def assemble_physical(g: FoliatedMetric, u: FieldStack, rmin: float | None = None) -> PhysicalSolution:
    """(e^{-2u} g, e^u) on the grid and the ADM mass from the l = 0 mode of u."""
    r = g.r
    w = np.exp(-2 * u.u)
    rmin = rmin if rmin is not None else 50 * r[0]
    u00 = g.basis.analyze(u.u)[:, 0]
    m, res = fit_mass(r, u00, rmin)
    return PhysicalSolution(r, w, w[..., None, None] * g.g, np.exp(u.u), m, res)


__all__ = [
    "SolveError", "TrustRegionError", "DivergenceError", "KappaStagnationError", "SolverConfig",
    "NonlinearState", "Residual", "residual", "state_residual", "data_distance", "SolveReport",
    "SolveResult", "NonlinearSolver", "solve", "PhysicalSolution", "fit_mass", "assemble_physical",
    "data_is_spherical",
]
