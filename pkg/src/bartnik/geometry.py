"""Kinematics of foliated metrics dr^2 + g(r) and the reduced static equations.

Angular tensors are sampled on the quadrature grid of a SphBasis in ambient
Cartesian form (see sphharm).  Covariant derivatives of g(r) are written as the
round derivative plus the difference tensor

    C^d_ab = 1/2 g^de (nabla_a g_eb + nabla_b g_ea - nabla_e g_ab).

Sign conventions: K = 1/2 d_r g, so the Riccati, Gauss and Codazzi rows below
are, with E = Ric - 2 du du,

    row 2 = -E_rr,   row 3 = -(E_ab)^traceless,   Codazzi = -E_ra,
    interior Gauss = E_rr - g^ab E_ab.

These were calibrated against a symbolic Ricci computation (see tests).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .schwarzschild import Background, BartnikData
from .spaces import RadialGrid, decay_exponent
from .sphharm import CKBasis, SphBasis, TangentField, ck_projection, truncate


class MetricError(ValueError):
    pass


# ------------------------------------------------------------------ tensor algebra


def tangential_inverse(g, x):
    # pad the normal direction with a matching scale so nothing is lost to rounding
    xx = x[:, :, None] * x[:, None, :]
    s = 0.5 * np.einsum("...ii->...", g)[..., None, None]
    return np.linalg.inv(g + s * xx) - xx / s


def area_density(g, x):
    """sqrt(det g / det round) for a tangential 2-tensor."""
    xx = x[:, :, None] * x[:, None, :]
    s = 0.5 * np.einsum("...ii->...", g)
    return np.sqrt(np.linalg.det(g + s[..., None, None] * xx) / s)


def min_eigenvalue(g, basis: SphBasis):
    et, ep = basis.e_theta, basis.e_phi
    a = np.einsum("pi,...pij,pj->...p", et, g, et)
    c = np.einsum("pi,...pij,pj->...p", ep, g, ep)
    b = np.einsum("pi,...pij,pj->...p", et, g, ep)
    return 0.5 * (a + c) - np.sqrt(0.25 * (a - c) ** 2 + b * b)


def difference_tensor(basis: SphBasis, g, ginv):
    """C[..., d, a, b] for g relative to the unit round metric."""
    N = basis.nabla(g, 2)  # N[e, b, a] = nabla_a g_eb
    S = N + np.swapaxes(N, -1, -2) - np.moveaxis(N, -1, -3)
    return 0.5 * np.einsum("...de,...eab->...dab", ginv, S)


def angular_laplacian(basis: SphBasis, u_vals, g, ginv, C=None):
    """Laplace-Beltrami of g applied to grid values u_vals (..., P)."""
    du = basis.surface_gradient(u_vals)
    hess = basis.nabla(du, 1)
    if C is None:
        C = difference_tensor(basis, g, ginv)
    lap = np.einsum("...ab,...ab->...", ginv, hess)
    return lap - np.einsum("...ab,...dab,...d->...", ginv, C, du)


def divergence_traceless(basis: SphBasis, T, g, ginv, C=None):
    """(div_g T)_b = g^ac nabla_c T_ab for a symmetric 2-tensor T."""
    if C is None:
        C = difference_tensor(basis, g, ginv)
    NT = basis.nabla(T, 2)  # NT[a, b, c] = nabla_c T_ab
    out = np.einsum("...ac,...abc->...b", ginv, NT)
    out -= np.einsum("...ac,...dca,...db->...b", ginv, C, T)
    out -= np.einsum("...ac,...dcb,...ad->...b", ginv, C, T)
    return out


def scalar_curvature(basis: SphBasis, g, ginv=None):
    """Scalar curvature of a metric on S^2 via the difference tensor."""
    if ginv is None:
        ginv = tangential_inverse(g, basis.x)
    C = difference_tensor(basis, g, ginv)
    NC = basis.nabla(C, 3)  # NC[c, a, b, e] = nabla_e C^c_ab
    ric = np.broadcast_to(basis.proj, g.shape).copy()
    ric += np.einsum("...cabc->...ab", NC)
    ric -= np.einsum("...cacb->...ab", NC)
    ric += np.einsum("...ccd,...dab->...ab", C, C)
    ric -= np.einsum("...cbd,...dac->...ab", C, C)
    return np.einsum("...ab,...ab->...", ginv, ric)


# ------------------------------------------------------------------ metric


@dataclass
class Scale:
    """Closed-form angular scale factor lam(r) with two derivatives."""

    lam: object
    dlam: object
    d2lam: object

    @classmethod
    def schwarzschild(cls, bg: Background) -> "Scale":
        return cls(bg.lam, bg.dlam, lambda r: 2.0 + 0.0 * np.asarray(r))

    @classmethod
    def euclidean(cls) -> "Scale":
        return cls(lambda r: np.asarray(r) ** 2, lambda r: 2 * np.asarray(r), lambda r: 2.0 + 0.0 * np.asarray(r))


class FoliatedMetric:
    """g(r) = lam(r) * k(r) with k = phi * round + T^E[E] + T^B[B] per radial node.

    The potentials are coefficient arrays of shape (N_r, K); their radial
    derivatives come from the grid's spectral differentiation, and lam is
    carried in closed form so the r^2 growth is never differentiated numerically.
    """

    def __init__(self, grid: RadialGrid, basis: SphBasis, scale: Scale, phi, E, B):
        self.grid = grid
        self.basis = basis
        self.scale = scale
        self.phi = np.asarray(phi, dtype=float)
        self.E = np.asarray(E, dtype=float)
        self.B = np.asarray(B, dtype=float)
        if self.phi.shape[0] != grid.N_r:
            raise ValueError("potentials must have one row per radial node")

    # constructors ---------------------------------------------------------
    @classmethod
    def schwarzschild(cls, bg: Background, grid: RadialGrid, basis: SphBasis, K: int | None = None):
        K = K or basis.K
        phi = np.zeros((grid.N_r, K))
        phi[:, 0] = np.sqrt(4 * np.pi)
        z = np.zeros_like(phi)
        return cls(grid, basis, Scale.schwarzschild(bg), phi, z, z.copy())

    @classmethod
    def from_stacks(cls, grid: RadialGrid, basis: SphBasis, scale: Scale, phi, E, B):
        """Potentials given with explicit radial derivatives, each as [a, a', a'']."""
        g = cls(grid, basis, scale, phi[0], E[0], B[0])
        g.__dict__["_k_stack"] = [g._k_values(phi[j], E[j], B[j]) for j in range(3)]
        return g

    @classmethod
    def cone(cls, grid: RadialGrid, basis: SphBasis, phi=None, E=None, B=None, K: int | None = None):
        """r^2 (gamma_inf + h(r)); defaults to the flat metric."""
        K = K or basis.K
        if phi is None:
            phi = np.zeros((grid.N_r, K))
            phi[:, 0] = np.sqrt(4 * np.pi)
        z = np.zeros_like(phi)
        return cls(grid, basis, Scale.euclidean(), phi, z if E is None else E, z.copy() if B is None else B)

    @property
    def r(self):
        return self.grid.r

    # Cartesian values ----------------------------------------------------
    def _k_values(self, phi, E, B):
        return self.basis.synthesize_tensor(phi, E, B)

    @cached_property
    def _k_stack(self):
        D, D2 = self.grid.D, self.grid.D2
        out = []
        for op in (None, D, D2):
            if op is None:
                out.append(self._k_values(self.phi, self.E, self.B))
            else:
                # subtracting the boundary row keeps constant columns exactly constant
                d = [op @ (a - a[:1]) for a in (self.phi, self.E, self.B)]
                out.append(self._k_values(*d))
        return out

    @cached_property
    def g(self):
        lam = self.scale.lam(self.r)
        return lam[:, None, None, None] * self._k_stack[0]

    @cached_property
    def dg(self):
        r = self.r
        k, dk, _ = self._k_stack
        return self.scale.dlam(r)[:, None, None, None] * k + self.scale.lam(r)[:, None, None, None] * dk

    @cached_property
    def d2g(self):
        r = self.r
        k, dk, d2k = self._k_stack
        s = lambda f: f(r)[:, None, None, None]  # noqa: E731
        return s(self.scale.d2lam) * k + 2 * s(self.scale.dlam) * dk + s(self.scale.lam) * d2k

    @cached_property
    def ginv(self):
        return tangential_inverse(self.g, self.basis.x)

    @cached_property
    def rho(self):
        return area_density(self.g, self.basis.x)

    @cached_property
    def K(self):
        return 0.5 * self.dg

    @cached_property
    def trK(self):
        return np.einsum("...ab,...ab->...", self.ginv, self.K)

    @cached_property
    def Khat(self):
        return self.K - 0.5 * self.trK[..., None, None] * self.g

    @cached_property
    def dKhat(self):
        """d_r of the covariant components of Khat."""
        dginv = -np.einsum("...ab,...bc,...cd->...ad", self.ginv, self.dg, self.ginv)
        dtrK = np.einsum("...ab,...ab->...", dginv, self.K) + 0.5 * np.einsum("...ab,...ab->...", self.ginv, self.d2g)
        return 0.5 * self.d2g - 0.5 * dtrK[..., None, None] * self.g - 0.5 * self.trK[..., None, None] * self.dg

    @cached_property
    def dtrK(self):
        dginv = -np.einsum("...ab,...bc,...cd->...ad", self.ginv, self.dg, self.ginv)
        return np.einsum("...ab,...ab->...", dginv, self.K) + 0.5 * np.einsum("...ab,...ab->...", self.ginv, self.d2g)

    def Khat_sq(self):
        return np.einsum("...ab,...bc,...cd,...da->...", self.ginv, self.Khat, self.ginv, self.Khat)

    def check_positive(self):
        lo = min_eigenvalue(self.g, self.basis)
        if np.any(lo <= 0):
            raise MetricError("metric not positive definite")
        return float(lo.min())

    def consistency_residual(self):
        """max |D g - (trK g + 2 Khat)| relative to |d_r g|, with D acting on g / lam."""
        r = self.r
        lam = self.scale.lam(r)[:, None, None, None]
        k = self.g / lam
        dk = np.tensordot(self.grid.D, k - k[:1], axes=(1, 0))
        dg_num = lam * dk + self.scale.dlam(r)[:, None, None, None] * k
        model = self.trK[..., None, None] * self.g + 2 * self.Khat
        return float(np.abs(dg_num - model).max() / np.abs(self.dg).max())

    # Hardy-check interface --------------------------------------------------
    def trK_profile(self):
        return self.r, self.trK

    def angular_data(self, r):
        W = self.grid.interp_matrix([r])[0]
        k = self._k_values(W @ self.phi, W @ self.E, W @ self.B)
        g = self.scale.lam(r) * k
        return area_density(g, self.basis.x), tangential_inverse(g, self.basis.x)


# ------------------------------------------------------------------ u stacks


@dataclass
class FieldStack:
    """Grid values of a scalar and its first two radial derivatives, shape (N_r, P)."""

    u: np.ndarray
    du: np.ndarray
    d2u: np.ndarray

    @classmethod
    def from_coeffs(cls, grid: RadialGrid, basis: SphBasis, coeffs, background: Background | None = None):
        coeffs = np.asarray(coeffs, dtype=float)
        vals = [basis.synthesize(c) for c in (coeffs, grid.D @ coeffs, grid.D2 @ coeffs)]
        if background is not None:
            r = grid.r[:, None]
            vals[0] = vals[0] + background.u(r)
            vals[1] = vals[1] + background.du(r)
            vals[2] = vals[2] + background.d2u(r)
        return cls(*vals)

    @classmethod
    def background(cls, bg: Background, grid: RadialGrid, basis: SphBasis):
        return cls.from_coeffs(grid, basis, np.zeros((grid.N_r, basis.K)), bg)


# ------------------------------------------------------------------ operations


def second_fundamental_form(g: FoliatedMetric):
    return g.trK, g.Khat


def laplacian(g: FoliatedMetric, u: FieldStack, C=None):
    """d_r^2 u + trK d_r u + angular Laplacian of g(r), at every node."""
    if C is None:
        C = difference_tensor(g.basis, g.g, g.ginv)
    ang = angular_laplacian(g.basis, u.u, g.g, g.ginv, C)
    return u.d2u + g.trK * u.du + ang


def transport_step_residuals(g: FoliatedMetric, u: FieldStack):
    """(R2, R3): the trK Riccati row and the traceless Khat transport row.

    R3 = d_r Khat - |Khat|^2 g + 2 du (x) du - |grad u|^2 g, angular parts only;
    it is g-traceless.
    """
    b = g.basis
    khsq = g.Khat_sq()
    R2 = g.dtrK + 0.5 * g.trK**2 + khsq + 2 * u.du**2
    du = b.surface_gradient(u.u)
    gu = np.einsum("...ab,...a,...b->...", g.ginv, du, du)
    R3 = g.dKhat - khsq[..., None, None] * g.g + 2 * du[..., :, None] * du[..., None, :] - gu[..., None, None] * g.g
    return R2, R3


def _gauss(b, g_ang, ginv, Khat, trK, u_vals, du_r, R_surface):
    du = b.surface_gradient(u_vals)
    gu = np.einsum("...ab,...a,...b->...", ginv, du, du)
    khsq = np.einsum("...ab,...bc,...cd,...da->...", ginv, Khat, ginv, Khat)
    return 2 * gu - 2 * du_r**2 - khsq - R_surface + 0.5 * trK**2


def _codazzi(b, g_ang, ginv, Khat, trK, u_vals, du_r, C=None):
    du = b.surface_gradient(u_vals)
    dtr = b.surface_gradient(trK)
    return 2 * du_r[..., None] * du - divergence_traceless(b, Khat, g_ang, ginv, C) + 0.5 * dtr


@dataclass
class ConstraintResidual:
    gauss: np.ndarray                 # scalar coefficients
    codazzi: TangentField             # CK-orthogonal part
    ck_component: np.ndarray          # six numbers
    metric_match: tuple               # (trace, E, B) coefficients of e^{-2u} g - gamma_B
    trK_match: np.ndarray             # scalar coefficients
    extra: dict = field(default_factory=dict)

    def max_abs(self) -> dict:
        return {
            "gauss": float(np.abs(self.gauss).max()),
            "codazzi": float(max(np.abs(self.codazzi.E).max(), np.abs(self.codazzi.B).max())),
            "ck": float(np.abs(self.ck_component).max()),
            "metric": float(max(np.abs(c).max() for c in self.metric_match)),
            "trK": float(np.abs(self.trK_match).max()),
        }


def boundary_constraints(g: FoliatedMetric, u: FieldStack, bartnik: BartnikData, L_out: int | None = None):
    """Gauss, Codazzi and the two matching conditions at r = r0 (node 0).

    The Gauss row uses the curvature of e^{2u} gamma_B, computed as
    e^{-2u}(R(gamma_B) - 2 Lap_{gamma_B} u).
    """
    b = g.basis
    L_out = L_out if L_out is not None else b.L
    g0, ginv0, K0, tr0 = g.g[0], g.ginv[0], g.Khat[0], g.trK[0]
    u0, du0 = u.u[0], u.du[0]
    gB = b.synthesize_tensor(bartnik.trace, bartnik.E, bartnik.B)
    gBinv = tangential_inverse(gB, b.x)
    R_B = scalar_curvature(b, gB, gBinv)
    lapB = angular_laplacian(b, u0, gB, gBinv)
    R_surface = np.exp(-2 * u0) * (R_B - 2 * lapB)
    gauss = _gauss(b, g0, ginv0, K0, tr0, u0, du0, R_surface)
    cod = _codazzi(b, g0, ginv0, K0, tr0, u0, du0)
    E, B = b.analyze_vector(cod)
    cod_field = TangentField(truncate(E, L_out), truncate(B, L_out))
    basis = CKBasis.round(L_out)
    kappa = ck_projection(cod_field, basis)
    for coef, Y in zip(kappa, basis.fields):
        cod_field = cod_field - Y * coef
    m7 = np.exp(-2 * u0)[:, None, None] * g0 - gB
    tr7, E7, B7 = b.analyze_tensor(m7)
    trKB = b.synthesize(bartnik.trK)
    r8 = tr0 - 2 * du0 - np.exp(-u0) * trKB
    return ConstraintResidual(
        gauss=truncate(b.analyze(gauss), L_out),
        codazzi=cod_field,
        ck_component=kappa,
        metric_match=(truncate(tr7, L_out), truncate(E7, L_out), truncate(B7, L_out)),
        trK_match=truncate(b.analyze(r8), L_out),
    )


def interior_constraints(g: FoliatedMetric, u: FieldStack, nodes):
    """Gauss and Codazzi residuals on the level sets r = r_i for the given nodes.

    Returns (gauss values (len, P), codazzi one-form values (len, P, 3)); the
    Gauss row uses the intrinsic curvature of g(r_i).
    """
    b = g.basis
    nodes = np.asarray(nodes)
    gg, gi, Kh, tr = g.g[nodes], g.ginv[nodes], g.Khat[nodes], g.trK[nodes]
    R = scalar_curvature(b, gg, gi)
    gauss = _gauss(b, gg, gi, Kh, tr, u.u[nodes], u.du[nodes], R)
    cod = _codazzi(b, gg, gi, Kh, tr, u.u[nodes], u.du[nodes])
    return gauss, cod


# ------------------------------------------------------------------ A and H


@dataclass
class AHReport:
    r: np.ndarray
    L: np.ndarray          # (N_r, P)
    A: np.ndarray          # one-form values (N_r, P, 3)
    H: np.ndarray          # (N_r, P)
    A_exponent: float
    H_exponent: float


def AH_transport(g: FoliatedMetric, omega: TangentField) -> AHReport:
    """Closed transport solution A = omega / L, H = L^-1 int L 2 div A.

    L = exp int trK is formed as lam(r)/lam(r0) times exp int (trK - lam'/lam)
    so only the deviation from the closed-form scale is integrated numerically.
    """
    b = g.basis
    r = g.r
    lam_ref = g.scale.lam(r) / g.scale.lam(r[0])
    dev = g.trK - (g.scale.dlam(r) / g.scale.lam(r))[:, None]
    L = lam_ref[:, None] * np.exp(g.grid.cumulative @ dev)
    w = b.synthesize_vector(omega.E, omega.B)
    A = w[None] / L[..., None]
    # div_g A = rho^-1 div_round(rho g^+ A)
    V = g.rho[..., None] * np.einsum("...ab,...b->...a", g.ginv, A)
    divA = b.synthesize(b.div_vector(V)) / g.rho
    H = (g.grid.cumulative @ (L * 2 * divA)) / L
    Anorm = np.sqrt(np.einsum("...ab,...a,...b->...", g.ginv, A, A)).max(axis=1)
    Hnorm = np.abs(H).max(axis=1)
    return AHReport(r, L, A, H, decay_exponent(r, Anorm), decay_exponent(r, Hnorm))
