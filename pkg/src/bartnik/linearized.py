"""Linearized reduced system at the Schwarzschild background, solved mode by mode.

The perturbation of the geodesic-gauge metric is stored relative to the
background scale, g~ = lam(r) (kphi round + T^E[kE] + T^B[kB]), with lam =
r(r - 2 m0).  In these variables

    trK~ = kphi',   Khat~ = T^E[KE] + T^B[KB],   KE = lam kE' / 2,

and the rows of DPhi (interior: A, B, C; boundary: E, F, G, H) become scalar
relations between harmonic coefficients.  Step 1 eliminates everything but
u~, leaving an order-2 associated Legendre equation with a nonlocal boundary
term; Step 2 recovers trK~, Khat~, g~ and the conformal Killing part omega~
by radial quadrature.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.integrate import solve_ivp

from .elliptic import RadialGreen, order2_pair
from .schwarzschild import Background
from .spaces import DEFAULT_DELTA, RadialGrid
from .sphharm import (
    CKBasis,
    TangentField,
    TracelessTensor,
    ck_projection,
    div_multipliers,
    mode_degrees,
    n_modes,
)


class NearKernelError(ArithmeticError):
    pass


class InconsistentDataError(ValueError):
    pass


# ------------------------------------------------------------------ data


@dataclass
class LinearizedData:
    """Right-hand sides.  Radial rows are (N_r, K) coefficient arrays; boundary rows (K,)."""

    A: np.ndarray
    B: np.ndarray
    C: TracelessTensor
    E: np.ndarray
    F: TangentField
    G: tuple            # (trace, E, B) potentials of a symmetric boundary tensor
    H: np.ndarray

    @classmethod
    def zeros(cls, N_r: int, L: int) -> "LinearizedData":
        K = n_modes(L)
        z = lambda *s: np.zeros(s)  # noqa: E731
        return cls(z(N_r, K), z(N_r, K), TracelessTensor(z(N_r, K), z(N_r, K)), z(K),
                   TangentField(z(K), z(K)), (z(K), z(K), z(K)), z(K))

    @property
    def L(self) -> int:
        return self.C.L

    def arrays(self) -> dict:
        return {"A": self.A, "B": self.B, "CE": self.C.E, "CB": self.C.B, "E": self.E,
                "FE": self.F.E, "FB": self.F.B, "Gphi": self.G[0], "GE": self.G[1], "GB": self.G[2],
                "H": self.H}

    @classmethod
    def from_arrays(cls, d: dict) -> "LinearizedData":
        return cls(d["A"], d["B"], TracelessTensor(d["CE"], d["CB"]), d["E"],
                   TangentField(d["FE"], d["FB"]), (d["Gphi"], d["GE"], d["GB"]), d["H"])

    def combine(self, other: "LinearizedData", alpha=1.0, beta=1.0) -> "LinearizedData":
        a, b = self.arrays(), other.arrays()
        return LinearizedData.from_arrays({k: alpha * a[k] + beta * b[k] for k in a})

    def canonical(self) -> "LinearizedData":
        """Zero the entries that carry no meaning (l = 0 one-forms, l < 2 tensors)."""
        ell, _ = mode_degrees(self.L)
        d = self.arrays()
        for key in ("FE", "FB"):
            d[key] = np.where(ell >= 1, d[key], 0.0)
        for key in ("CE", "CB", "GE", "GB"):
            d[key] = np.where(ell >= 2, d[key], 0.0)
        return LinearizedData.from_arrays(d)

    def decay_flags(self, grid: RadialGrid, delta: float = DEFAULT_DELTA):
        from .spaces import decay_exponent

        flags = []
        for key in ("A", "B", "CE", "CB"):
            arr = self.arrays()[key]
            mag = np.sqrt(np.sum(arr**2, axis=1))
            if np.any(mag > 0):
                s = decay_exponent(grid.r, mag)
                if s > delta - 2 + 1e-9:
                    flags.append(f"{key} decays like r^{s:.3f}, slower than r^{delta - 2}")
        return flags


def data_distance(grid: RadialGrid, a: LinearizedData, b: LinearizedData, delta: float = DEFAULT_DELTA):
    """Per-row discrepancy: weighted L2 over [r0, R_cut] (the H norm with t = k = 0
    and weight exponent delta - 2, without tail extrapolation) for radial rows,
    max abs for boundary rows."""
    da, db = a.canonical().arrays(), b.canonical().arrays()
    w = grid.r ** (-2 * (delta - 2) - 1)
    out = {}
    for key in da:
        diff = da[key] - db[key]
        if diff.ndim == 2:
            out[key] = float(np.sqrt(grid.integrate(w * np.sum(diff**2, axis=1))))
        else:
            out[key] = float(np.abs(diff).max())
    return out


def data_size(grid: RadialGrid, a: LinearizedData, delta: float = DEFAULT_DELTA):
    return data_distance(grid, a, LinearizedData.zeros(grid.N_r, a.L), delta)


def random_data(rng, grid: RadialGrid, L: int, amplitude: float = 1.0, decay=(3, 4, 5)) -> LinearizedData:
    """Admissible random data: radial rows are sums of (r0/r)^p, p in `decay`, with
    amplitudes falling off like (1 + l)^-2."""
    K = n_modes(L)
    ell, _ = mode_degrees(L)
    w = amplitude / (1.0 + ell) ** 2
    r0 = grid.r0

    def radial():
        coef = rng.normal(size=(len(decay), K))
        prof = sum(coef[j] * (r0 / grid.r[:, None]) ** p for j, p in enumerate(decay))
        return w * prof / r0**2

    def bnd(scale=1.0):
        return w * rng.normal(size=K) * scale

    d = LinearizedData(radial(), radial(), TracelessTensor(radial() * r0, radial() * r0), bnd() / r0**2,
                       TangentField(bnd() / r0, bnd() / r0), (bnd() * r0**2, bnd() * r0**2, bnd() * r0**2),
                       bnd() / r0)
    return d.canonical()


# ------------------------------------------------------------------ state


@dataclass
class LinearizedState:
    """(g~, u~, omega~) with radial derivative stacks; arrays are (N_r, K)."""

    u: list             # [u, u', u'']
    kphi: list
    kE: list
    kB: list
    omega: TangentField

    @classmethod
    def from_coeffs(cls, grid: RadialGrid, u, kphi, kE, kB, omega: TangentField | None = None):
        def stack(a):
            a = np.asarray(a, dtype=float)
            d = grid.D @ (a - a[:1])
            return [a, d, grid.D @ d]

        K = np.shape(u)[1]
        if omega is None:
            omega = TangentField(np.zeros(K), np.zeros(K))
        return cls(stack(u), stack(kphi), stack(kE), stack(kB), omega)

    @property
    def trK(self):
        return self.kphi[1]

    def Khat(self, bg: Background, r):
        lam = bg.lam(r)[:, None]
        return TracelessTensor(0.5 * lam * self.kE[1], 0.5 * lam * self.kB[1])


@dataclass
class LinearizedSolution:
    state: LinearizedState
    psi: np.ndarray
    Gamma: np.ndarray
    kappa: np.ndarray           # omega~ on the orthonormal conformal Killing basis
    cond: dict = field(default_factory=dict)

    @property
    def trK(self):
        return self.state.trK

    @property
    def omega(self) -> TangentField:
        return self.state.omega

    def metric_form(self, bg: Background, grid: RadialGrid):
        """g~ = r^2 (gamma~_inf + h~(r)): returns (gamma~_inf, h~) for each potential.

        gamma~_inf is read at the outermost node, where lam/r^2 = 1 - 2m0/R_cut.
        """
        r = grid.r[:, None]
        scale = bg.lam(grid.r)[:, None] / r**2
        out = []
        for k in (self.state.kphi[0], self.state.kE[0], self.state.kB[0]):
            gi = k[-1] * scale[-1]
            out.append((gi, scale * k - gi))
        return out


# ------------------------------------------------------------------ rows


def apply_DPhi(state: LinearizedState, bg: Background, grid: RadialGrid) -> LinearizedData:
    """All rows of the linearized operator, in coefficient form."""
    r = grid.r
    K = state.u[0].shape[1]
    L = int(round(np.sqrt(K))) - 1
    ell, _ = mode_degrees(L)
    lap = ell * (ell + 1.0)
    lam = bg.lam(r)[:, None]
    dlam = bg.dlam(r)[:, None]
    tr = bg.trK(r)[:, None]
    du = bg.du(r)[:, None]
    u, du1, d2u = state.u
    kp, dkp, d2kp = state.kphi

    A = d2u + tr * du1 - lap * u / lam + du * dkp
    B = d2kp + tr * dkp + 4 * du * du1
    CE = 0.5 * dlam * state.kE[1] + 0.5 * lam * state.kE[2]
    CB = 0.5 * dlam * state.kB[1] + 0.5 * lam * state.kB[2]

    n, m0 = bg.n, bg.m0
    rho2 = bg.rho0_sq
    du0, trK0 = bg.du0, bg.trK0
    u0, du10, trk0 = u[0], du1[0], dkp[0]
    E = -4 * du0 * du10 + trK0 * trk0 + (4 - 2 * lap) * u0 / rho2
    lam_div = div_multipliers(L)[ell]
    KE0 = 0.5 * rho2 * state.kE[1][0]
    KB0 = 0.5 * rho2 * state.kB[1][0]
    FE = 2 * du0 * u0 - lam_div * KE0 / rho2 + 0.5 * trk0 + state.omega.E
    FB = -lam_div * KB0 / rho2 + state.omega.B
    c7 = n * n * m0 * m0
    G = (c7 * (kp[0] - 2 * u0), c7 * state.kE[0][0], c7 * state.kB[0][0])
    H = trk0 - 2 * du10 + 2 / (n * m0) * u0
    return LinearizedData(A, B, TracelessTensor(CE, CB), E, TangentField(FE, FB), G, H).canonical()


# ------------------------------------------------------------------ step 1


def build_psi_gamma(data: LinearizedData, bg: Background, grid: RadialGrid):
    """psi = A - m0 lam^-2 int_{r0}^r lam B - m0 rho0^2 lam^-2 H,  Gamma = E - trK0 H."""
    r = grid.r
    lam = bg.lam(r)[:, None]
    I = grid.cumulative @ (lam * data.B)
    psi = data.A - bg.m0 / lam**2 * I - bg.m0 * bg.rho0_sq / lam**2 * data.H[None, :]
    Gamma = data.E - bg.trK0 * data.H
    return psi, Gamma


class NonlocalSolver:
    """Per-degree pieces of the nonlocal boundary problem for u~.

    Per mode a = a_psi + c phi_D + s phi_s where phi_D is the decaying
    homogeneous solution with phi_D(r0) = 1, phi_s is the response to the
    nonlocal forcing -2 m0 rho0^2 / lam, and (c, s) solve a 2x2 system from
    the definition of s and the boundary relation.
    """

    def __init__(self, grid: RadialGrid, bg: Background, cond_max: float = 1e10,
                 tail_exponent: float | None = None):
        self.grid, self.bg = grid, bg
        self.cond_max = cond_max
        self.tail_exponent = tail_exponent
        self._pieces = lru_cache(maxsize=None)(self._make)

    def _make(self, ell: int):
        bg, grid = self.bg, self.grid
        gr = RadialGreen(grid, bg, ell, order2_pair, tail_exponent=self.tail_exponent)
        lam = bg.lam(grid.r)
        phi_s = gr.solve(-2 * bg.m0 * bg.rho0_sq / lam, 0.0)
        phi_D = gr.solve(np.zeros_like(lam), 1.0)
        n, m0 = bg.n, bg.m0
        k4 = (4 - n) / (n * (n - 2) * m0)
        bnd = 2 / (n * m0)
        M = np.array([
            [-phi_D[1][0] - k4, 1 - phi_s[1][0]],
            [bnd * phi_D[1][0] - (ell * (ell + 1) - 2 / n) / bg.rho0_sq, bnd * phi_s[1][0]],
        ])
        cond = float(np.linalg.cond(M))
        return gr, phi_D, phi_s, M, cond

    def condition(self, ell: int) -> float:
        return self._pieces(ell)[4]

    def solve(self, psi, Gamma):
        """(u-stack, per-degree condition numbers)."""
        psi = np.asarray(psi, dtype=float)
        K = psi.shape[1]
        ell_all, _ = mode_degrees(int(round(np.sqrt(K))) - 1)
        lam = self.bg.lam(self.grid.r)[:, None]
        out = [np.zeros_like(psi) for _ in range(3)]
        conds = {}
        bnd = 2 / (self.bg.n * self.bg.m0)
        for ell in np.unique(ell_all):
            ell = int(ell)
            gr, phi_D, phi_s, M, cond = self._pieces(ell)
            conds[ell] = cond
            if cond > self.cond_max:
                raise NearKernelError(f"mode system at l={ell} has condition number {cond:.3g}")
            idx = np.nonzero(ell_all == ell)[0]
            a_psi = gr.solve(lam * psi[:, idx], np.zeros(len(idx)))
            rhs = np.vstack([a_psi[1][0], 0.5 * Gamma[idx] - bnd * a_psi[1][0]])
            c, s = np.linalg.solve(M, rhs)
            for j in range(3):
                out[j][:, idx] = a_psi[j] + phi_D[j][:, None] * c + phi_s[j][:, None] * s
        return out, conds


def solve_nonlocal(psi, Gamma, bg: Background, grid: RadialGrid, solver: NonlocalSolver | None = None):
    solver = solver or NonlocalSolver(grid, bg)
    return solver.solve(psi, Gamma)


# ------------------------------------------------------------------ step 2


def reconstruct(u_stack, data: LinearizedData, bg: Background, grid: RadialGrid,
                psi=None, Gamma=None, cond=None) -> LinearizedSolution:
    data = data.canonical()
    r = grid.r
    lam = bg.lam(r)[:, None]
    dlam = bg.dlam(r)[:, None]
    n, m0, rho2 = bg.n, bg.m0, bg.rho0_sq
    u, du1, _ = u_stack
    K = u.shape[1]
    L = int(round(np.sqrt(K))) - 1
    ell, _ = mode_degrees(L)
    cum = grid.cumulative

    # trace of K from the boundary matching and the Riccati row
    trK0 = data.H + 2 * du1[0] - 2 / (n * m0) * u[0]
    trK = (rho2 * trK0 + cum @ (lam * data.B) - 4 * m0 * (u - u[0])) / lam
    dtrK = data.B - bg.trK(r)[:, None] * trK - 4 * bg.du(r)[:, None] * du1

    # conformal Killing part of the Codazzi data, then the boundary Khat
    RE = np.where(ell >= 1, data.F.E - 2 * bg.du0 * u[0] - 0.5 * trK0, 0.0)
    RB = np.where(ell >= 1, data.F.B, 0.0)
    one = ell == 1
    omega = TangentField(np.where(one, RE, 0.0), np.where(one, RB, 0.0))
    kappa = ck_projection(omega, CKBasis.round(L))
    lam_div = div_multipliers(L)[ell]
    high = ell >= 2
    safe = np.where(high, lam_div, 1.0)
    KE0 = np.where(high, -rho2 * RE / safe, 0.0)
    KB0 = np.where(high, -rho2 * RB / safe, 0.0)

    # transport of Khat and of the metric
    mask = high.astype(float)
    KE = (KE0 + cum @ data.C.E) * mask
    KB = (KB0 + cum @ data.C.B) * mask
    c7 = n * n * m0 * m0
    kphi0 = data.G[0] / c7 + 2 * u[0]
    kE0 = data.G[1] / c7 * mask
    kB0 = data.G[2] / c7 * mask

    def k_stack(k0, Kh, C):
        dk = 2 * Kh / lam
        return [k0 + cum @ dk, dk, (2 * C * mask - dlam * dk) / lam]

    state = LinearizedState(
        u=[a.copy() for a in u_stack],
        kphi=[kphi0 + cum @ trK, trK, dtrK],
        kE=k_stack(kE0, KE, data.C.E),
        kB=k_stack(kB0, KB, data.C.B),
        omega=omega,
    )
    return LinearizedSolution(state, psi, Gamma, kappa, cond or {})


class LinearizedSolver:
    """data -> (g~, u~, omega~); the inverse of DPhi at the Schwarzschild background."""

    def __init__(self, grid: RadialGrid, bg: Background, cond_max: float = 1e10):
        self.grid, self.bg = grid, bg
        self.nonlocal_ = NonlocalSolver(grid, bg, cond_max)

    def solve(self, data: LinearizedData) -> LinearizedSolution:
        data = data.canonical()
        psi, Gamma = build_psi_gamma(data, self.bg, self.grid)
        u_stack, cond = self.nonlocal_.solve(psi, Gamma)
        return reconstruct(u_stack, data, self.bg, self.grid, psi, Gamma, cond)

    def apply(self, state: LinearizedState) -> LinearizedData:
        return apply_DPhi(state, self.bg, self.grid)


# ------------------------------------------------------------------ kernel scan


def kernel_constants(n: float, ell: int):
    """(alpha_l, beta_l) of the normalized initial value problem."""
    lap = ell * (ell + 1.0)
    den = n * (2 - lap) - 6
    return n * n / den, n * n * (n * lap - 2) / (den * 2 * (n - 2))


def a00_closed(r, n: float, C: float = 1.0):
    """Closed-form l = 0 solution of the shooting problem with a'(1) = C (scaled radius)."""
    r = np.asarray(r, dtype=float)
    return -C * (-2 + n + 6 * r - 3 * n * r - 2 * n * r * r + n * n * r * r) / (r * (n * r - 2))


def g0_closed(r, n: float):
    r = np.asarray(r, dtype=float)
    return -n * (r - 1) / (2 * (r - 2 / n))


def integrate_radial_ivp(n: float, ell: int, a1: float, da1: float, forcing, r_eval,
                         threshold: float | None = None, rtol: float = 1e-12, atol: float = 1e-14):
    """d/dr[r(r-2/n) a'] = (4/(n^2 r(r-2/n)) + l(l+1)) a + forcing(r) on [1, r_max].

    Integrated in t = ln r with q = r(r-2/n) a'.  Returns (a, a', sol) at
    r_eval; if `threshold` is set the integration stops once |a| reaches it.
    """
    lap = ell * (ell + 1.0)
    s = 2.0 / n

    def rhs(t, y):
        r = np.exp(t)
        w = r * (r - s)
        return [y[1] / (r - s), r * ((4 / (n * n * w) + lap) * y[0] + forcing(r))]

    events = None
    if threshold is not None:
        def hit(t, y):
            return abs(y[0]) - threshold
        hit.terminal = True
        events = hit
    r_eval = np.asarray(r_eval, dtype=float)
    sol = solve_ivp(rhs, (0.0, float(np.log(r_eval[-1]))), [a1, (1 - s) * da1], method="DOP853",
                    t_eval=np.log(r_eval), rtol=rtol, atol=atol, events=events)
    if sol.status < 0:
        raise RuntimeError(f"IVP integration failed at l={ell}: {sol.message}")
    rr = np.exp(sol.t)
    a = sol.y[0]
    da = sol.y[1] / (rr * (rr - s))
    return a, da, sol


@dataclass
class KernelVerdict:
    ell: int
    verdict: str
    max_abs: float
    r_exit: float
    alpha: float
    beta: float
    sign_chain: dict = field(default_factory=dict)


@dataclass
class KernelScan:
    n: float
    r_max: float
    threshold: float
    verdicts: list = field(default_factory=list)
    a00_error: float = np.nan
    a00_limit: float = np.nan
    g0_error: float = np.nan

    @property
    def no_kernel(self) -> bool:
        return all(v.verdict.endswith("no-kernel") for v in self.verdicts)

    @property
    def all_blowup(self) -> bool:
        return all(v.verdict == "blowup/no-kernel" for v in self.verdicts if v.ell >= 1)

    @property
    def sign_chain_ok(self) -> bool:
        return all(all(v.sign_chain.values()) for v in self.verdicts if v.sign_chain)


def kernel_scan(n: float, ell_max: int, blowup_threshold: float = 1e6, r_max: float = 1e3,
                n_eval: int = 400) -> KernelScan:
    """Shoot the normalized kernel problem outward for each degree.

    l >= 1: a(1) = alpha_l, a'(1) = beta_l, forcing 1/(r(r-2/n)); a decaying
    element of the kernel would have to stay bounded.  l = 0 uses the closed
    form, checked against the same integrator.  The sign chain of the
    uniqueness argument (f_l, f_l' < 0; g~_l < 0 and increments h_l < 0) is
    checked on a log-spaced set of radii in (1, r_max].
    """
    if n <= 2:
        raise ValueError("need n > 2")
    scan = KernelScan(n, r_max, blowup_threshold)
    r_eval = np.geomspace(1.0, r_max, n_eval)
    s = 2.0 / n
    nonlocal_forcing = lambda r: 1.0 / (r * (r - s))  # noqa: E731

    # l = 0: shooting with a'(1) = 1 and the boundary relation a(1) = -(n-2)
    a1 = -(n - 2.0)
    C0 = -2 * (n - 2) / n**2 * ((4 - n) / (n - 2) * a1 + 1.0)
    a, _, _ = integrate_radial_ivp(n, 0, a1, 1.0, lambda r: C0 * nonlocal_forcing(r), r_eval)
    scan.a00_error = float(np.abs(a - a00_closed(r_eval, n)).max() / np.abs(a00_closed(r_eval, n)).max())
    scan.a00_limit = float(-(n * n - 2 * n) / n)
    g_prev, dg_prev, _ = integrate_radial_ivp(n, 0, 0.0, -n * n / (2 * (n - 2)), nonlocal_forcing, r_eval)
    scan.g0_error = float(np.abs(g_prev - g0_closed(r_eval, n)).max() / np.abs(g0_closed(r_eval, n)).max())
    lim = a00_closed(1e12, n)
    scan.verdicts.append(KernelVerdict(0, "nonzero-limit/no-kernel" if abs(lim) > 1e-12 else "KERNEL-CANDIDATE",
                                       float(np.abs(a).max()), float(r_eval[-1]), np.nan, np.nan,
                                       {"g0_negative": bool(np.all(g_prev[1:] < 0))}))

    for ell in range(1, ell_max + 1):
        al, be = kernel_constants(n, ell)
        a, da, sol = integrate_radial_ivp(n, ell, al, be, nonlocal_forcing, r_eval, threshold=blowup_threshold)
        hit = sol.status == 1
        r_exit = float(np.exp(sol.t_events[0][0])) if hit else float(r_eval[-1])
        if hit:
            verdict = "blowup/no-kernel"
        elif a[-1] * da[-1] > 0 and abs(a[-1]) > abs(a[0]):
            # sign-locked growth: unbounded by the comparison argument, just slow
            verdict = "growth/no-kernel"
        else:
            verdict = "KERNEL-CANDIDATE"
        # sign chain
        f, df, _ = integrate_radial_ivp(n, ell, al, 0.0, lambda r, al=al: -4 * al / (n * n) * nonlocal_forcing(r),
                                        r_eval)
        g, dg, _ = integrate_radial_ivp(n, ell, 0.0, -n * n / (2 * (n - 2)), nonlocal_forcing, r_eval)
        h = g - g_prev
        chain = {
            "f_negative": bool(np.all(f[1:] < 0)),
            "df_negative": bool(np.all(df[1:] < 0)),
            "g_tilde_negative": bool(np.all(g[1:] < 0)),
            "increment_negative": bool(np.all(h[1:] < 0)),
            "ratio_bound": bool(be / (1 + 4 * al / n**2) < -n * n / (2 * (n - 2))),
        }
        g_prev = g
        scan.verdicts.append(KernelVerdict(ell, verdict, float(np.abs(a).max()), r_exit, al, be, chain))
    return scan
