"""Conformal Killing fields: extensions of the six sphere fields into M, the
conformal Lie derivative on foliated metrics, and the contraction check that
rules out decaying conformal Killing fields.

A boundary field X_CK (rotation or boost) is extended as

    X_inf = f(r) div(X_CK) d_r + h(r) X_CK,

with X_CK carried along r unchanged.  Rotations are divergence free and keep
f = 0, h = 1; boosts need f'' = trK/2 f' - 2 m0^2 f / lam^2, f(r0) = 0,
f'(r0) = 1/2 and h' = 2 f / lam, h(r0) = 1.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .geometry import FieldStack, FoliatedMetric
from .schwarzschild import Background
from .spaces import CompactSample, DEFAULT_DELTA, chained_constants, chained_hardy_flat, hardy_R0
from .sphharm import SphBasis, ck_basis_potentials, mode_index

BASIS_NAMES = ("rotation-x", "rotation-y", "rotation-z", "boost-x", "boost-y", "boost-z")
# real l = 1 harmonics: m = -1, 0, 1 are proportional to y, z, x
_AXIS_M = {"x": 1, "y": -1, "z": 0}


def basis_index(name: str) -> int:
    if name not in BASIS_NAMES:
        raise KeyError(f"unknown conformal Killing field {name!r}; expected one of {BASIS_NAMES}")
    kind, axis = name.split("-")
    m = _AXIS_M[axis]
    return (0 if kind == "rotation" else 3) + (m + 1)


@dataclass
class CKExtension:
    index: int                 # 0..5, rotations first
    r: np.ndarray
    f: np.ndarray
    df: np.ndarray
    h: np.ndarray
    dh: np.ndarray
    killing: bool
    info: dict = field(default_factory=dict)

    @property
    def name(self) -> str:
        return next(n for n in BASIS_NAMES if basis_index(n) == self.index)

    def growth_exponent(self, r_lo: float, r_hi: float, which: str = "f") -> float:
        y = np.abs(getattr(self, which))
        sel = (self.r >= r_lo) & (self.r <= r_hi) & (y > 0)
        if sel.sum() < 2:
            return 0.0
        s, _ = np.polyfit(np.log(self.r[sel]), np.log(y[sel]), 1)
        return float(s)


def extend_ck(index: int, bg: Background, r, rtol: float = 1e-12, atol: float = 1e-14) -> CKExtension:
    """Integrate the extension ODEs for basis field `index` on the radii r (r[0] = r0)."""
    r = np.asarray(r, dtype=float)
    if abs(r[0] - bg.r0) > 1e-12 * bg.r0:
        raise ValueError("radii must start at the boundary r0")
    if index < 3:
        one, zero = np.ones_like(r), np.zeros_like(r)
        return CKExtension(index, r, zero, zero.copy(), one, zero.copy(), True)

    def rhs(t, y):
        f, df, h = y
        lam = bg.lam(t)
        return [df, 0.5 * bg.trK(t) * df - 2 * bg.m0**2 * f / lam**2, 2 * f / lam]

    sol = solve_ivp(rhs, (r[0], r[-1]), [0.0, 0.5, 1.0], t_eval=r, method="DOP853", rtol=rtol, atol=atol)
    if sol.status != 0:
        raise RuntimeError(f"extension ODE failed: {sol.message}")
    f, df, h = sol.y
    ext = CKExtension(index, r, f, df, h, 2 * f / bg.lam(r), False)
    ext.info["nfev"] = int(sol.nfev)
    return ext


def boundary_field(index: int, basis: SphBasis):
    """(X_CK as tangent vectors (P, 3), B = div X_CK (P,)) on the unit sphere."""
    fields = ck_basis_potentials(basis.L)
    Y = fields[index]
    X = basis.synthesize_vector(Y.E, Y.B)
    # div of grad E is Lap E = -2 E on l = 1; curl parts are divergence free
    B = basis.synthesize(-2.0 * Y.E)
    return X, B


@dataclass
class VectorField:
    """X = Xr d_r + V, V tangent to the level spheres (Cartesian, contravariant).

    Arrays are grid values with radial derivatives: Xr, dXr (N_r, P); V, dV (N_r, P, 3).
    """

    Xr: np.ndarray
    dXr: np.ndarray
    V: np.ndarray
    dV: np.ndarray

    @classmethod
    def zeros(cls, N_r: int, P: int):
        return cls(np.zeros((N_r, P)), np.zeros((N_r, P)), np.zeros((N_r, P, 3)), np.zeros((N_r, P, 3)))

    @classmethod
    def from_extension(cls, ext: CKExtension, basis: SphBasis):
        X, B = boundary_field(ext.index, basis)
        return cls(ext.f[:, None] * B, ext.df[:, None] * B, ext.h[:, None, None] * X, ext.dh[:, None, None] * X)


@dataclass
class ConformalLie:
    rr: np.ndarray        # traceless part, rr component
    ra: np.ndarray        # mixed components (covariant, Cartesian one-forms)
    ab: np.ndarray        # tangential block
    divX: np.ndarray

    @property
    def trace_part(self):
        """(2/3) div X."""
        return 2.0 / 3.0 * self.divX

    def norm(self, g: FoliatedMetric):
        gi = g.ginv
        ra2 = np.einsum("...ab,...a,...b->...", gi, self.ra, self.ra)
        ab2 = np.einsum("...ab,...bc,...cd,...da->...", gi, self.ab, gi, self.ab)
        return np.sqrt(self.rr**2 + 2 * ra2 + ab2)


def lie_derivative(g: FoliatedMetric, X: VectorField):
    """Components (rr, ra, ab) of L_X g for g = dr^2 + g(r)."""
    b = g.basis
    gg = g.g
    rr = 2 * X.dXr
    ra = np.einsum("...ab,...b->...a", gg, X.dV) + b.surface_gradient(X.Xr)
    N = b.nabla(X.V, 1)                        # N[..., c, a] = nabla_a V^c (round)
    Ng = np.einsum("...ca,...cb->...ab", N, gg)
    dgg = b.nabla(gg, 2)                       # (nabla_c g)_ab, derivative index last
    Vdg = np.einsum("...abc,...c->...ab", dgg, X.V)
    ab = X.Xr[..., None, None] * g.dg + Vdg + Ng + np.swapaxes(Ng, -1, -2)
    return rr, ra, ab


def conformal_lie(g: FoliatedMetric, X: VectorField) -> ConformalLie:
    rr, ra, ab = lie_derivative(g, X)
    tr = rr + np.einsum("...ab,...ab->...", g.ginv, ab)
    divX = 0.5 * tr
    third = tr / 3.0
    return ConformalLie(rr - third, ra, ab - third[..., None, None] * g.g, divX)


# ------------------------------------------------------------------ checks


def boundary_lie_dr(ext: CKExtension, basis: SphBasis):
    """L_{d_r} X_inf at r0 as (radial (P,), tangential (P, 3)) = (f' B, h' X_CK)."""
    X, B = boundary_field(ext.index, basis)
    return ext.df[0] * B, ext.dh[0] * X


def extension_gram(basis: SphBasis) -> np.ndarray:
    """L2 Gram matrix of the six boundary traces on the unit sphere."""
    w = basis.weights
    traces = [boundary_field(i, basis)[0] for i in range(6)]
    G = np.zeros((6, 6))
    for i in range(6):
        for j in range(6):
            G[i, j] = np.sum(w * np.einsum("pi,pi->p", traces[i], traces[j]))
    return G


@dataclass
class ContractionReport:
    R: float
    delta: float
    curvature_sup: float        # sup_{r >= R} r^2 (|Ric| + r |grad Ric|)
    hardy_constant: float       # (C1 + 1) C2 C3 from the three Hardy steps
    factor: float
    sample_ratios: list = field(default_factory=list)
    flags: list = field(default_factory=list)

    @property
    def certifies_zero(self) -> bool:
        return self.factor < 1.0

    @property
    def hardy_chain_holds(self) -> bool:
        return all(x <= 1.0 for x in self.sample_ratios)


def curvature_sup(g: FoliatedMetric, u: FieldStack, R: float) -> float:
    """sup over r >= R of r^2 (|Ric| + r |grad Ric|) with Ric = 2 du (x) du.

    |grad Ric| <= 4 |Hess u| |du|, and the Hessian is bounded by its radial
    part u'' together with the level-set part K u'.
    """
    b = g.basis
    du_t = b.surface_gradient(u.u)
    gu = u.du**2 + np.einsum("...ab,...a,...b->...", g.ginv, du_t, du_t)
    Ksq = g.Khat_sq() + 0.5 * g.trK**2
    hess = np.sqrt(u.d2u**2 + Ksq * u.du**2)
    ric = 2 * gu
    dric = 4 * hess * np.sqrt(gu)
    r = g.r[:, None]
    vals = (r**2 * (ric + r * dric)).max(axis=1)
    sel = g.r >= R
    return float(vals[sel].max()) if np.any(sel) else 0.0


def no_ck_decaying_check(g: FoliatedMetric, u: FieldStack, samples, delta: float = DEFAULT_DELTA,
                         R: float | None = None) -> ContractionReport:
    """Quantitative content of the vanishing argument for decaying conformal Killing fields.

    For a conformal Killing Z the third covariant derivative is curvature times
    lower derivatives, so the chained Hardy inequality gives
    I(Z) <= C_H sup r^2(|Ric| + r|grad Ric|) I(Z).  The reported factor is that
    product and certifies Z = 0 on [R, inf) when below one.  Each sample
    (random compactly supported field) is used to check that the Hardy chain
    itself holds.
    """
    rep_flags = []
    if delta >= -0.5:
        rep_flags.append("delta at or above the endpoint -1/2")
    if delta >= 0:
        rep_flags.append("delta not negative")
    r, trK = g.trK_profile()
    R0 = hardy_R0(r, trK.mean(axis=1) if trK.ndim == 2 else trK)
    R = max(R0, R if R is not None else R0)
    C1, C2, C3 = chained_constants(delta)[1]
    C = (C1 + 1) * C2 * C3
    sup = curvature_sup(g, u, R)
    rep = ContractionReport(R, delta, sup, C, C * sup, flags=rep_flags)
    for s in samples:
        res = chained_hardy_flat(s, delta, g.basis)
        rep.sample_ratios.append(res.chain_ratio if res.rhs > 0 else 0.0)
    return rep


def zero_sample(R: float, L: int) -> CompactSample:
    K = (L + 1) ** 2
    return CompactSample(R, 2 * R, 4, np.zeros(K), np.zeros(K))


__all__ = [
    "BASIS_NAMES", "basis_index", "CKExtension", "extend_ck", "boundary_field", "VectorField",
    "ConformalLie", "lie_derivative", "conformal_lie", "boundary_lie_dr", "extension_gram",
    "ContractionReport", "curvature_sup", "no_ck_decaying_check", "zero_sample", "mode_index",
]
