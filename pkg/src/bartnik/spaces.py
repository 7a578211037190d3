"""Radial grid on [r0, inf), weighted norms and Hardy-inequality checks.

The radial variable is compactified by x = 1 - r0/r and truncated at R_cut,
so the grid covers x in [0, x_max].  Chebyshev-Gauss-Lobatto nodes in x give
spectral accuracy for anything analytic in 1/r.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from math import comb, factorial

import numpy as np
from numpy.polynomial import chebyshev as cheb
from numpy.polynomial import polynomial as npoly

DEFAULT_DELTA = -0.75


@dataclass(frozen=True)
class RadialGrid:
    r0: float
    N_r: int = 96
    R_cut: float = 0.0

    def __post_init__(self):
        if self.r0 <= 0:
            raise ValueError("r0 must be positive")
        if self.N_r < 4:
            raise ValueError("need at least 4 radial nodes")
        if self.R_cut == 0.0:
            object.__setattr__(self, "R_cut", 1e3 * self.r0)
        if self.R_cut <= self.r0:
            raise ValueError("R_cut must exceed r0")

    @property
    def x_max(self) -> float:
        return 1.0 - self.r0 / self.R_cut

    @cached_property
    def t(self) -> np.ndarray:
        # node 0 is t = 1, i.e. the boundary r = r0
        return np.cos(np.pi * np.arange(self.N_r) / (self.N_r - 1))

    @cached_property
    def x(self) -> np.ndarray:
        return self.x_max * (1 - self.t) / 2

    @cached_property
    def r(self) -> np.ndarray:
        return self.r0 / (1 - self.x)

    @cached_property
    def _vander_inv(self) -> np.ndarray:
        V = cheb.chebvander(self.t, self.N_r - 1)
        return np.linalg.inv(V)

    @cached_property
    def Dx(self) -> np.ndarray:
        N = self.N_r - 1
        t = self.t
        c = np.ones(N + 1)
        c[0] = c[-1] = 2.0
        c *= (-1.0) ** np.arange(N + 1)
        dt = t[:, None] - t[None, :]
        D = np.outer(c, 1 / c) / (dt + np.eye(N + 1))
        D -= np.diag(D.sum(axis=1))
        return D * (-2.0 / self.x_max)

    @cached_property
    def D(self) -> np.ndarray:
        """d/dr on the nodes."""
        return (self.r0 / self.r**2)[:, None] * self.Dx

    @cached_property
    def D2(self) -> np.ndarray:
        return self.D @ self.D

    @cached_property
    def weights(self) -> np.ndarray:
        """Clenshaw-Curtis weights for the integral over [r0, R_cut] in dr."""
        k = np.arange(self.N_r)
        mom = np.zeros(self.N_r)
        even = k % 2 == 0
        mom[even] = 2.0 / (1.0 - k[even] ** 2)
        w_t = self._vander_inv.T @ mom
        return w_t * (self.x_max / 2) * self.r**2 / self.r0

    @cached_property
    def cumulative(self) -> np.ndarray:
        """Matrix S with (S f)_i = integral of f from r0 to r_i."""
        N = self.N_r
        # integrate each Chebyshev basis polynomial from t = 1 down to t
        M = np.zeros((N, N))
        for j in range(N):
            e = np.zeros(N)
            e[j] = 1.0
            M[:, j] = cheb.chebval(self.t, cheb.chebint(e, lbnd=1.0))
        Sx = (-self.x_max / 2) * M @ self._vander_inv
        return Sx * (self.r**2 / self.r0)[None, :]

    def interp_matrix(self, r_new) -> np.ndarray:
        r_new = np.atleast_1d(np.asarray(r_new, dtype=float))
        if np.any(r_new < self.r0 * (1 - 1e-12)) or np.any(r_new > self.R_cut * (1 + 1e-12)):
            raise ValueError("interpolation point outside the grid")
        x = 1 - self.r0 / r_new
        t = np.clip(1 - 2 * x / self.x_max, -1.0, 1.0)
        return cheb.chebvander(t, self.N_r - 1) @ self._vander_inv

    def integrate(self, f) -> np.ndarray:
        return np.tensordot(self.weights, np.asarray(f), axes=(0, 0))

    def refine(self) -> "RadialGrid":
        return RadialGrid(self.r0, self.N_r, 2 * self.R_cut)


# ------------------------------------------------------------------ norms


def _hk_weight(ell, k):
    return (1.0 + ell * (ell + 1.0)) ** k


def _sq_norm(values, ell, k):
    """||.||_{H^k(S^2)}^2 at every node, from coefficient arrays (N_r, K)."""
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        return values**2 * _hk_weight(np.asarray(ell if ell is not None else 0), k)
    w = _hk_weight(np.asarray(ell, dtype=float), k)
    return np.sum(w * values**2, axis=-1)


def decay_exponent(r, y, frac: float = 0.25) -> float:
    """Log-log slope of |y| over the outer part r >= frac * r.max()."""
    r = np.asarray(r)
    y = np.abs(np.asarray(y))
    sel = (r >= frac * r.max()) & (y > 0)
    if sel.sum() < 2:
        return -np.inf
    s, _ = np.polyfit(np.log(r[sel]), np.log(y[sel]), 1)
    return float(s)


@dataclass
class NormTerm:
    order: int
    value_sq: float
    tail_sq: float
    exponent: float
    divergent: bool


@dataclass
class NormReport:
    kind: str
    t: int
    k: int
    delta: float
    terms: list = field(default_factory=list)
    argmax: list = field(default_factory=list)
    per_mode: np.ndarray | None = None
    flags: list = field(default_factory=list)

    @property
    def value_sq(self) -> float:
        return float(sum(term.value_sq + term.tail_sq for term in self.terms))

    @property
    def value(self) -> float:
        return float(np.sqrt(self.value_sq))

    @property
    def divergent(self) -> bool:
        return any(term.divergent for term in self.terms)


def _check_delta(delta, flags):
    if delta >= -0.5 - 1e-12:
        flags.append("delta at or above the endpoint -1/2")


def _envelope(y):
    """Running maximum from the outside in; bridges zero crossings of a decaying profile."""
    return np.maximum.accumulate(np.abs(y)[::-1])[::-1]


def weighted_H_norm(grid: RadialGrid, stack, t: int, k: int, delta: float, ell=None,
                    extrapolate: bool = True) -> NormReport:
    """||u||_{H,t,k,delta} from a derivative stack [u, u', ...] of coefficient arrays.

    The integral over [r0, R_cut] is closed by a power-law tail fitted to the
    monotone envelope of the outer nodes; if that decays no faster than 1/r the
    term is flagged divergent.  extrapolate=False keeps the truncated integral,
    which is the right measure for roundoff-level differences.
    """
    if len(stack) < t + 1:
        raise ValueError(f"need {t + 1} radial derivatives, got {len(stack)}")
    rep = NormReport("H", t, k, delta)
    _check_delta(delta, rep.flags)
    r = grid.r
    per_mode = 0.0
    for tp in range(t + 1):
        vals = np.asarray(stack[tp], dtype=float)
        integrand = r ** (-2 * delta - 1 + 2 * tp) * _sq_norm(vals, ell, k)
        val = float(grid.integrate(integrand))
        if not np.any(integrand > 0):
            rep.terms.append(NormTerm(tp, 0.0, 0.0, -np.inf, False))
            continue
        if not extrapolate or integrand[-1] * r[-1] <= 1e-14 * max(val, 1e-300):
            # outer values are at roundoff level; nothing left to extrapolate
            s, divergent, tail = -np.inf, False, 0.0
        else:
            s = decay_exponent(r, _envelope(integrand))
            divergent = s >= -1 - 1e-6
            tail = np.inf if divergent else float(integrand[-1] * r[-1] / (-s - 1))
        rep.terms.append(NormTerm(tp, val, tail, s, divergent))
        if vals.ndim == 2:
            w = _hk_weight(np.asarray(ell, float), k) if ell is not None else 1.0
            per_mode = per_mode + w * grid.integrate(r[:, None] ** (-2 * delta - 1 + 2 * tp) * vals**2)
    if np.ndim(per_mode):
        rep.per_mode = per_mode
    if rep.divergent:
        rep.flags.append("fitted decay exponent not below delta")
    return rep


def weighted_C_norm(grid: RadialGrid, stack, t: int, k: int, delta: float, ell=None) -> NormReport:
    """||u||_{C,t,k,delta}: sum over t' of sup_r r^{-2 delta + 2t'} ||d^t' u||^2."""
    if len(stack) < t + 1:
        raise ValueError(f"need {t + 1} radial derivatives, got {len(stack)}")
    rep = NormReport("C", t, k, delta)
    _check_delta(delta, rep.flags)
    r = grid.r
    for tp in range(t + 1):
        vals = r ** (-2 * delta + 2 * tp) * _sq_norm(stack[tp], ell, k)
        i = int(np.argmax(vals))
        rep.terms.append(NormTerm(tp, float(vals[i]), 0.0, np.nan, False))
        rep.argmax.append(float(r[i]))
    return rep


def weighted_A_norm(grid: RadialGrid, stack, t: int, k: int, delta: float, ell=None,
                    extrapolate: bool = True) -> float:
    """max over t' <= t of the H and C norms squared with k - t' angular derivatives."""
    best = 0.0
    for tp in range(t + 1):
        h = weighted_H_norm(grid, stack, tp, k - tp, delta, ell, extrapolate).value_sq
        c = weighted_C_norm(grid, stack, tp, k - tp, delta, ell).value_sq
        best = max(best, h + c)
    return float(np.sqrt(best))


def embedding_ratio(grid: RadialGrid, stack, t: int, k: int, delta: float, ell=None) -> float:
    """||u||_{C,t-1} / ||u||_{H,t}; finite and bounded for the H-space."""
    c = weighted_C_norm(grid, stack, t - 1, k, delta, ell).value
    h = weighted_H_norm(grid, stack, t, k, delta, ell).value
    return c / h if h > 0 else 0.0


def half_order_bracket(coeffs, ell, k: int):
    """(||f||_{H^k}, ||f||_{H^{k+1}}) bracketing the H^{k+1/2} norm."""
    ell = np.asarray(ell, dtype=float)
    return (float(np.sqrt(np.sum(_hk_weight(ell, k) * coeffs**2))),
            float(np.sqrt(np.sum(_hk_weight(ell, k + 1) * coeffs**2))))


# ------------------------------------------------------------------ Hardy


@dataclass
class CompactSample:
    """Z(r, x) = sum_k c_k q_k(r) Y_k(x), q_k = ((r-a)(b-r))^p (1 + s_k (r-a)/(b-a)) on [a, b]."""

    a: float
    b: float
    p: int
    coeffs: np.ndarray
    slopes: np.ndarray

    def radial_polys(self):
        base = npoly.Polynomial([-self.a, 1.0]) * npoly.Polynomial([self.b, -1.0])
        base = base**self.p
        lin = [npoly.Polynomial([1 - s * self.a / (self.b - self.a), s / (self.b - self.a)]) for s in self.slopes]
        return [base * q for q in lin]

    def profiles(self, r, order: int = 0):
        """Coefficient values of d^order Z / dr^order at radii r, shape (len(r), K)."""
        polys = self.radial_polys()
        cols = [q.deriv(order)(r) if order else q(r) for q in polys]
        out = np.stack(cols, axis=-1) * self.coeffs
        inside = (r >= self.a) & (r <= self.b)
        return np.where(inside[:, None], out, 0.0)


def random_compact_sample(rng, R: float, R_out: float, L: int, p: int = 4) -> CompactSample:
    a = R * (1 + 0.5 * rng.random())
    b = a + (R_out - a) * (0.05 + 0.9 * rng.random())
    K = (L + 1) ** 2
    coeffs = rng.normal(size=K) / (1 + np.repeat(np.arange(L + 1), 2 * np.arange(L + 1) + 1))
    # normalize so the field is O(1) at the peak
    coeffs = coeffs / ((b - a) / 2) ** (2 * p)
    return CompactSample(a, b, p, coeffs, rng.uniform(-0.9, 0.9, size=K))


def hardy_R0(r, trK, safety: float = 0.0) -> float:
    """Smallest node radius beyond which |r (trK - 2/r)| <= 1 everywhere.

    trK has shape (N_r,) or (N_r, P); the max over the sphere is used.
    """
    r = np.asarray(r)
    trK = np.asarray(trK)
    dev = np.abs(r * trK.reshape(len(r), -1).T - 2.0).max(axis=0)
    bad = np.nonzero(dev > 1.0)[0]
    if len(bad) == 0:
        return float(r[0])
    i = bad[-1] + 1
    if i >= len(r):
        raise ValueError("|r(trK - 2/r)| never drops below 1 on the grid")
    return float(r[i]) * (1 + safety)


@dataclass
class HardyResult:
    lhs: float
    rhs: float
    tau: float
    R: float
    R0: float

    @property
    def ratio(self) -> float:
        bound = 4.0 / self.tau**2 * self.rhs
        return self.lhs / bound if bound > 0 else 0.0

    @property
    def passed(self) -> bool:
        return self.ratio <= 1 + 1e-8


def hardy_check(metric, sample: CompactSample, tau: float, R: float, n_quad: int = 96) -> HardyResult:
    """Both sides of int r^(tau-2)|T|^2 dV <= (4/tau^2) int r^tau |grad T|^2 dV for a scalar T.

    `metric` supplies angular_data(r) -> (rho, ginv) on its sphere basis with
    rho the area density relative to the unit round sphere and ginv the
    inverse angular metric in Cartesian tangential form, plus
    trK_profile() -> (r nodes, trK values) used to locate R0.
    """
    if tau <= 0:
        raise ValueError("tau must be positive")
    r_nodes, trK = metric.trK_profile()
    R0 = hardy_R0(r_nodes, trK)
    if R < R0:
        raise ValueError(f"R={R} below R0={R0}")
    if sample.a < R:
        raise ValueError("sample support must lie in [R, inf)")
    basis = metric.basis
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    rq = 0.5 * (sample.b - sample.a) * (xg + 1) + sample.a
    wq = 0.5 * (sample.b - sample.a) * wg
    Z = sample.profiles(rq, 0)
    Zr = sample.profiles(rq, 1)
    lhs = rhs = 0.0
    for i, ri in enumerate(rq):
        rho, ginv = metric.angular_data(ri)
        zv = basis.synthesize(Z[i])
        zr = basis.synthesize(Zr[i])
        gz = basis.gradient(Z[i])
        ang = np.einsum("pi,pij,pj->p", gz, ginv, gz)
        dv = rho * basis.weights
        lhs += wq[i] * ri ** (tau - 2) * np.sum(dv * zv**2)
        rhs += wq[i] * ri**tau * np.sum(dv * (zr**2 + ang))
    return HardyResult(float(lhs), float(rhs), tau, R, R0)


def chained_constants(delta: float):
    taus = (-2 * delta - 1, -2 * delta + 1, -2 * delta + 3)
    # the first constant degenerates at the endpoint delta = -1/2
    C = tuple(4.0 / tau**2 if tau != 0 else float("inf") for tau in taus)
    return taus, C


@dataclass
class ChainedResult:
    lhs: float
    rhs: float
    delta: float

    @property
    def constants(self):
        return chained_constants(self.delta)[1]

    @property
    def product_ratio(self) -> float:
        """LHS / (C1 C2 C3 RHS)."""
        C1, C2, C3 = self.constants
        return self.lhs / (C1 * C2 * C3 * self.rhs)

    @property
    def chain_ratio(self) -> float:
        """LHS / ((C1 + 1) C2 C3 RHS), the constant the three steps actually give."""
        C1, C2, C3 = self.constants
        return self.lhs / ((C1 + 1) * C2 * C3 * self.rhs)


def _flat_cartesian_gradient(basis, grid_vals, grid_dr, r):
    """Cartesian gradient in flat R^3 of fields given on the sphere at radius r.

    grid_vals, grid_dr: (..., P) values and radial derivatives.  Returns (..., P, 3).
    """
    ang = basis.surface_gradient(grid_vals)
    return grid_dr[..., None] * basis.x + ang / r


def chained_hardy_flat(sample: CompactSample, delta: float, basis, n_quad: int = 64) -> ChainedResult:
    """Both sides of the chained inequality in flat space for a scalar sample.

    Cartesian derivatives up to third order are formed by repeated use of
    d_i = x_i d_r + r^-1 (surface gradient)_i on each Cartesian component,
    with radial derivatives taken from the exact polynomial profiles.
    """
    xg, wg = np.polynomial.legendre.leggauss(n_quad)
    rq = 0.5 * (sample.b - sample.a) * (xg + 1) + sample.a
    wq = 0.5 * (sample.b - sample.a) * wg
    lhs = rhs = 0.0
    for i, ri in enumerate(rq):
        # radial derivatives of Z up to order 3 on the sphere grid
        Zk = [basis.synthesize(sample.profiles(np.array([ri]), k)[0]) for k in range(4)]
        # d^j Z as functions of r near ri: we need d/dr of each Cartesian
        # component; x is r-independent, so d/dr commutes with the angular
        # part and only the explicit 1/r factors need differentiating
        g1 = [_grad_order1(basis, Zk, ri, j) for j in range(3)]
        g2 = [_grad_order2(basis, g1, ri, j) for j in range(2)]
        g3 = _grad_order3(basis, g2, ri)
        dv = ri**2 * basis.weights
        lhs += wq[i] * np.sum(dv * (ri ** (-2 * delta - 3) * Zk[0] ** 2
                                    + ri ** (-2 * delta - 1) * np.sum(g1[0] ** 2, axis=-1)))
        rhs += wq[i] * ri ** (-2 * delta + 3) * np.sum(dv * np.sum(g3**2, axis=(-1, -2, -3)))
    return ChainedResult(float(lhs), float(rhs), delta)


def _grad_order1(basis, Zk, r, j):
    """d_r^j of the Cartesian gradient of Z, for j = 0, 1, 2."""
    # grad Z = x Z_r + S(Z)/r with S the surface gradient
    out = Zk[j + 1][:, None] * basis.x
    for q in range(j + 1):
        # d_r^j (S(Z)/r) = sum_q binom(j,q) S(d^q Z) d^{j-q}(1/r)
        c = comb(j, q) * _dinv_r(r, j - q)
        out = out + c * basis.surface_gradient(Zk[q])
    return out


def _grad_order2(basis, g1, r, j):
    """d_r^j of the Cartesian Hessian, from d_r^q of the gradient (q <= j + 1)."""
    G = np.moveaxis(g1[j + 1], -1, 0)  # (3, P) components
    out = np.moveaxis(G[..., None] * basis.x, 0, -2)  # (P, 3, 3): d_k (grad Z)_i with k last
    for q in range(j + 1):
        c = comb(j, q) * _dinv_r(r, j - q)
        S = basis.surface_gradient(np.moveaxis(g1[q], -1, 0))  # (3, P, 3)
        out = out + c * np.moveaxis(S, 0, -2)
    return out


def _grad_order3(basis, g2, r):
    H = np.moveaxis(g2[1], (-2, -1), (0, 1))  # (3, 3, P)
    out = np.moveaxis(H[..., None] * basis.x, (0, 1), (-3, -2))
    S = basis.surface_gradient(np.moveaxis(g2[0], (-2, -1), (0, 1)))  # (3,3,P,3)
    out = out + np.moveaxis(S, (0, 1), (-3, -2)) / r
    return out


def _dinv_r(r, j):
    """d^j/dr^j of 1/r."""
    return (-1) ** j * factorial(j) / r ** (j + 1)
