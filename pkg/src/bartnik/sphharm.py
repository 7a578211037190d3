"""Real spherical harmonics on the unit sphere.

Scalars are coefficient vectors over real orthonormal harmonics indexed by
k = l*l + l + m.  One-forms are stored by parity potentials (E, B) with

    V = dE + *dB,        *dB = x cross grad B,

and traceless symmetric tensors by (E, B) with

    T = T^E[E] + T^B[B],   T^E[f] = Hess f - (1/2) lap f * gamma,   T^B[f] = J T^E[f].

Grid values of tangent objects are kept in ambient Cartesian form: a one-form is
a tangential 3-vector, a 2-tensor a tangential 3x3 matrix.  Round covariant
derivatives are then tangential projections of surface gradients of the
Cartesian components, which keeps everything smooth at the poles.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np
from scipy.special import sph_harm_y


def n_modes(L: int) -> int:
    return (L + 1) ** 2


def mode_index(ell: int, m: int) -> int:
    if abs(m) > ell:
        raise ValueError(f"|m| > l for (l, m) = ({ell}, {m})")
    return ell * ell + ell + m


def mode_degrees(L: int):
    """Arrays (ell, m) for k = 0 .. n_modes(L) - 1."""
    ell = np.concatenate([np.full(2 * l + 1, l) for l in range(L + 1)])
    m = np.concatenate([np.arange(-l, l + 1) for l in range(L + 1)])
    return ell, m


def band_limit(n: int) -> int:
    L = int(round(np.sqrt(n))) - 1
    if n_modes(L) != n:
        raise ValueError(f"{n} is not a full set of modes")
    return L


def truncate(coeffs, L: int):
    """Keep degrees <= L (last axis), zero-padding if needed."""
    coeffs = np.asarray(coeffs)
    K = n_modes(L)
    if coeffs.shape[-1] >= K:
        return coeffs[..., :K].copy()
    out = np.zeros(coeffs.shape[:-1] + (K,), dtype=coeffs.dtype)
    out[..., : coeffs.shape[-1]] = coeffs
    return out


@dataclass(frozen=True)
class SphGrid:
    L_max: int
    n_theta: int = 0
    n_phi: int = 0

    def __post_init__(self):
        if self.L_max < 0:
            raise ValueError("L_max must be non-negative")
        if self.n_theta == 0:
            object.__setattr__(self, "n_theta", self.L_max + 2)
        if self.n_phi == 0:
            object.__setattr__(self, "n_phi", 2 * self.L_max + 4)
        if self.n_theta < self.L_max + 1 or self.n_phi < 2 * self.L_max + 1:
            raise ValueError("grid too coarse for exact quadrature at this L_max")


# ------------------------------------------------------------------ fields


@dataclass
class ScalarField:
    coeffs: np.ndarray

    @property
    def L(self) -> int:
        return band_limit(self.coeffs.shape[-1])

    def __add__(self, other):
        return ScalarField(self.coeffs + other.coeffs)

    def __sub__(self, other):
        return ScalarField(self.coeffs - other.coeffs)

    def __mul__(self, s):
        return ScalarField(self.coeffs * s)

    __rmul__ = __mul__


@dataclass
class TangentField:
    """One-form dE + *dB; entries with l = 0 are ignored."""

    E: np.ndarray
    B: np.ndarray

    @property
    def L(self) -> int:
        return band_limit(self.E.shape[-1])

    def __add__(self, other):
        return TangentField(self.E + other.E, self.B + other.B)

    def __sub__(self, other):
        return TangentField(self.E - other.E, self.B - other.B)

    def __mul__(self, s):
        return TangentField(self.E * s, self.B * s)

    __rmul__ = __mul__

    def l2_norm_sq(self) -> float:
        """Round-sphere L2 norm squared; the two parities are orthogonal."""
        ell, _ = mode_degrees(self.L)
        w = ell * (ell + 1.0)
        return float(np.sum(w * self.E**2) + np.sum(w * self.B**2))


@dataclass
class TracelessTensor:
    """T^E[E] + T^B[B]; entries with l < 2 are ignored."""

    E: np.ndarray
    B: np.ndarray

    @property
    def L(self) -> int:
        return band_limit(self.E.shape[-1])

    def __add__(self, other):
        return TracelessTensor(self.E + other.E, self.B + other.B)

    def __sub__(self, other):
        return TracelessTensor(self.E - other.E, self.B - other.B)

    def __mul__(self, s):
        return TracelessTensor(self.E * s, self.B * s)

    __rmul__ = __mul__


def tensor_norm_factor(ell):
    """Round L2 norm squared of T^E[Y_lm] (and of T^B[Y_lm])."""
    ell = np.asarray(ell, dtype=float)
    return 0.5 * (ell - 1) * ell * (ell + 1) * (ell + 2)


# ------------------------------------------------------------------ transforms


def _real_harmonics(L, theta, phi):
    """Real Y, dY/dtheta, dY/dphi and the three second partials on a point set."""
    K = n_modes(L)
    shape = (K,) + theta.shape
    Y = np.zeros(shape)
    Yt = np.zeros(shape)
    Yp = np.zeros(shape)
    Ytt = np.zeros(shape)
    Ytp = np.zeros(shape)
    Ypp = np.zeros(shape)
    for ell in range(L + 1):
        for m in range(0, ell + 1):
            y, dy, d2y = sph_harm_y(ell, m, theta, phi, diff_n=2)
            parts = (y, dy[..., 0], dy[..., 1], d2y[..., 0, 0], d2y[..., 0, 1], d2y[..., 1, 1])
            if m == 0:
                vals = [p.real for p in parts]
                k = mode_index(ell, 0)
                for arr, v in zip((Y, Yt, Yp, Ytt, Ytp, Ypp), vals):
                    arr[k] = v
                continue
            s = np.sqrt(2.0) * (-1) ** m
            kp, km = mode_index(ell, m), mode_index(ell, -m)
            for arr, p in zip((Y, Yt, Yp, Ytt, Ytp, Ypp), parts):
                arr[kp] = s * p.real
                arr[km] = s * p.imag
    return Y, Yt, Yp, Ytt, Ytp, Ypp


class SphBasis:
    """Quadrature grid plus real harmonics up to degree L, with tangent bases.

    Scalars are analyzed exactly when band-limited to L and the grid integrates
    degree 2L products exactly (the SphGrid defaults guarantee this).
    """

    def __init__(self, L: int, n_theta: int = 0, n_phi: int = 0):
        self.grid = SphGrid(L, n_theta, n_phi)
        self.L = L
        self.K = n_modes(L)
        g = self.grid
        mu, wmu = np.polynomial.legendre.leggauss(g.n_theta)
        theta = np.arccos(-mu)
        phi = 2 * np.pi * np.arange(g.n_phi) / g.n_phi
        T, P = np.meshgrid(theta, phi, indexing="ij")
        self.theta = T.ravel()
        self.phi = P.ravel()
        self.weights = np.outer(wmu, np.full(g.n_phi, 2 * np.pi / g.n_phi)).ravel()
        self.n_points = self.theta.size
        st, ct = np.sin(self.theta), np.cos(self.theta)
        sp, cp = np.sin(self.phi), np.cos(self.phi)
        self.x = np.stack([st * cp, st * sp, ct], axis=-1)
        self.e_theta = np.stack([ct * cp, ct * sp, -st], axis=-1)
        self.e_phi = np.stack([-sp, cp, np.zeros_like(sp)], axis=-1)
        self.ell, self.m = mode_degrees(L)
        self.lap = -self.ell * (self.ell + 1.0)

    # raw harmonic tables --------------------------------------------------
    @cached_property
    def _tables(self):
        return _real_harmonics(self.L, self.theta, self.phi)

    @cached_property
    def Y(self) -> np.ndarray:
        return self._tables[0]

    @cached_property
    def _wY(self):
        return self.Y * self.weights

    @cached_property
    def grad(self) -> np.ndarray:
        """Cartesian surface gradients of the basis, shape (K, P, 3)."""
        _, Yt, Yp, *_ = self._tables
        st = np.sin(self.theta)
        return Yt[..., None] * self.e_theta + (Yp / st)[..., None] * self.e_phi

    @cached_property
    def rot(self) -> np.ndarray:
        """x cross grad Y."""
        return np.cross(self.x, self.grad)

    @cached_property
    def proj(self) -> np.ndarray:
        """Tangential projector I - x x^T at every point."""
        return np.eye(3) - self.x[:, :, None] * self.x[:, None, :]

    @cached_property
    def J(self) -> np.ndarray:
        """Matrix of v -> x cross v."""
        x = self.x
        z = np.zeros(len(x))
        return np.stack(
            [
                np.stack([z, -x[:, 2], x[:, 1]], -1),
                np.stack([x[:, 2], z, -x[:, 0]], -1),
                np.stack([-x[:, 1], x[:, 0], z], -1),
            ],
            axis=-2,
        )

    @cached_property
    def TE(self) -> np.ndarray:
        """Cartesian T^E[Y_k], shape (K, P, 3, 3)."""
        Y, Yt, Yp, Ytt, Ytp, Ypp = self._tables
        st = np.sin(self.theta)
        cot = np.cos(self.theta) / st
        h_tt = Ytt
        h_tp = (Ytp - cot * Yp) / st
        h_pp = Ypp / st**2 + cot * Yt
        half = 0.5 * (h_tt - h_pp)
        et, ep = self.e_theta, self.e_phi
        ett = et[:, :, None] * et[:, None, :]
        epp = ep[:, :, None] * ep[:, None, :]
        etp = et[:, :, None] * ep[:, None, :]
        etp = etp + np.swapaxes(etp, -1, -2)
        return half[..., None, None] * (ett - epp) + h_tp[..., None, None] * etp

    @cached_property
    def TB(self) -> np.ndarray:
        return np.einsum("pij,kpjl->kpil", self.J, self.TE)

    # scalar transforms -----------------------------------------------------
    def analyze(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape[-1] != self.n_points:
            raise ValueError(f"expected {self.n_points} grid values, got {values.shape[-1]}")
        return values @ self._wY.T

    def synthesize(self, coeffs) -> np.ndarray:
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[-1] != self.K:
            coeffs = truncate(coeffs, self.L)
        return coeffs @ self.Y

    def gradient(self, coeffs) -> np.ndarray:
        """Surface gradient (Cartesian) of a scalar given by coefficients."""
        coeffs = truncate(np.asarray(coeffs, dtype=float), self.L)
        return np.einsum("...k,kpi->...pi", coeffs, self.grad)

    def surface_gradient(self, values) -> np.ndarray:
        """Spectral surface gradient of grid values (projected to degree L first)."""
        return self.gradient(self.analyze(values))

    def laplace_beltrami(self, f: ScalarField) -> ScalarField:
        ell, _ = mode_degrees(f.L)
        return ScalarField(-ell * (ell + 1.0) * f.coeffs)

    # one-forms ---------------------------------------------------------------
    def synthesize_vector(self, E, B) -> np.ndarray:
        E = truncate(np.asarray(E, dtype=float), self.L)
        B = truncate(np.asarray(B, dtype=float), self.L)
        return np.einsum("...k,kpi->...pi", E, self.grad) + np.einsum("...k,kpi->...pi", B, self.rot)

    def analyze_vector(self, V):
        V = np.asarray(V, dtype=float)
        wV = V * self.weights[:, None]
        pe = np.einsum("...pi,kpi->...k", wV, self.grad)
        pb = np.einsum("...pi,kpi->...k", wV, self.rot)
        w = self.ell * (self.ell + 1.0)
        w[0] = 1.0
        E, B = pe / w, pb / w
        E[..., 0] = 0.0
        B[..., 0] = 0.0
        return E, B

    def div_vector(self, V) -> np.ndarray:
        """Coefficients of div V, by integration against -grad Y."""
        V = np.asarray(V, dtype=float)
        return -np.einsum("...pi,kpi->...k", V * self.weights[:, None], self.grad)

    # symmetric 2-tensors ------------------------------------------------------
    def synthesize_tensor(self, trace, E, B) -> np.ndarray:
        """trace * gamma + T^E[E] + T^B[B] in Cartesian form."""
        out = np.einsum("...k,kpij->...pij", truncate(np.asarray(E, float), self.L), self.TE)
        out = out + np.einsum("...k,kpij->...pij", truncate(np.asarray(B, float), self.L), self.TB)
        if trace is not None:
            tv = self.synthesize(trace)
            out = out + tv[..., None, None] * self.proj
        return out

    def analyze_tensor(self, T):
        """(trace, E, B) with T = trace * gamma + T^E[E] + T^B[B] (projection)."""
        T = np.asarray(T, dtype=float)
        tr = 0.5 * np.einsum("...pii->...p", T)
        trace = self.analyze(tr)
        wT = T * self.weights[:, None, None]
        pe = np.einsum("...pij,kpij->...k", wT, self.TE)
        pb = np.einsum("...pij,kpij->...k", wT, self.TB)
        nf = tensor_norm_factor(self.ell)
        nf[self.ell < 2] = 1.0
        E, B = pe / nf, pb / nf
        E[..., self.ell < 2] = 0.0
        B[..., self.ell < 2] = 0.0
        return trace, E, B

    # covariant calculus on Cartesian forms ---------------------------------
    def grad_components(self, T, rank: int) -> np.ndarray:
        """Surface gradient of each Cartesian component; derivative index appended."""
        T = np.asarray(T, dtype=float)
        lead = T.ndim - rank - 1
        moved = np.moveaxis(T, lead, -1)  # (..., 3,..,3, P)
        coeffs = self.analyze(moved)
        g = np.einsum("...k,kpi->...pi", coeffs, self.grad)  # (..., 3..3, P, 3)
        return np.moveaxis(g, -2, lead)

    def nabla(self, T, rank: int) -> np.ndarray:
        """Round covariant derivative of a tangential tensor field, derivative index last.

        Uses the embedded-surface formula: project every tensor index of the
        surface gradient of the Cartesian components.
        """
        T = np.asarray(T, dtype=float)
        lead = T.ndim - rank - 1
        g = np.moveaxis(self.grad_components(T, rank), lead, 0)
        for a in range(rank):
            ax = g.ndim - 1 - rank + a
            tmp = np.moveaxis(g, ax, 1)
            tmp = np.einsum("pij,pj...->pi...", self.proj, tmp)
            g = np.moveaxis(tmp, 1, ax)
        return np.moveaxis(g, 0, lead)

    def div_tensor(self, T) -> np.ndarray:
        """Round divergence (first index contracted) of a tangential 2-tensor."""
        g = self.grad_components(T, 2)  # (..., P, 3j, 3i, 3d)
        d = np.einsum("...pjij->...pi", g)
        return np.einsum("pij,...pj->...pi", self.proj, d)


# ------------------------------------------------------------------ operators


@lru_cache(maxsize=None)
def div_multipliers(L: int) -> np.ndarray:
    """Measured lambda_l with div T^E[f] = lambda_l df on the unit sphere, l = 0..L.

    Obtained by applying the spectral Cartesian divergence to each T^E[Y_l0]
    and reading off the gradient potential; entries l < 2 are zero.
    """
    basis = SphBasis(L + 2)
    lam = np.zeros(L + 1)
    for ell in range(2, L + 1):
        k = mode_index(ell, 0)
        V = basis.div_tensor(basis.TE[k])
        E, _ = basis.analyze_vector(V)
        lam[ell] = E[k]
    return lam


class DivergenceInverseError(ArithmeticError):
    pass


def div_traceless(T: TracelessTensor, radius: float = 1.0) -> TangentField:
    """div of a traceless tensor w.r.t. radius^2 * round (indices down)."""
    lam = div_multipliers(T.L)
    ell, _ = mode_degrees(T.L)
    mult = lam[ell] / radius**2
    return TangentField(mult * T.E, mult * T.B)


def ck_basis_potentials(L: int):
    """The six conformal Killing one-forms as (E, B) coefficient pairs.

    Order: three rotations (B on l = 1, m = -1, 0, 1) then three boosts
    (E on l = 1).  Each has unit L2 norm for round metrics of any radius,
    since the L2 norm of one-forms is conformally invariant in two dimensions.
    """
    K = n_modes(L)
    out = []
    for parity in ("B", "E"):
        for m in (-1, 0, 1):
            E = np.zeros(K)
            B = np.zeros(K)
            (B if parity == "B" else E)[mode_index(1, m)] = 1 / np.sqrt(2.0)
            out.append(TangentField(E, B))
    return out


@dataclass
class CKBasis:
    fields: list
    radius: float = 1.0

    @classmethod
    def round(cls, L: int, radius: float = 1.0) -> "CKBasis":
        return cls(ck_basis_potentials(L), radius)

    def gram(self) -> np.ndarray:
        n = len(self.fields)
        G = np.zeros((n, n))
        for i, a in enumerate(self.fields):
            for j, b in enumerate(self.fields):
                G[i, j] = l2_inner(a, b)
        return G


def l2_inner(a: TangentField, b: TangentField) -> float:
    """Round (equivalently, any round radius) L2 pairing of one-forms."""
    ell, _ = mode_degrees(a.L)
    w = ell * (ell + 1.0)
    return float(np.sum(w * a.E * b.E) + np.sum(w * a.B * b.B))


def ck_projection(rhs: TangentField, basis: CKBasis) -> np.ndarray:
    return np.array([l2_inner(truncate_field(Y, rhs.L), rhs) for Y in basis.fields])


def truncate_field(v: TangentField, L: int) -> TangentField:
    return TangentField(truncate(v.E, L), truncate(v.B, L))


def div_traceless_inverse(rhs: TangentField, radius: float = 1.0, floor: float = 1e-14):
    """Unique traceless T with div T = rhs minus its conformal Killing part.

    Returns (T, kappa) where kappa are the coefficients of rhs on the six
    orthonormal conformal Killing one-forms.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    L = rhs.L
    basis = CKBasis.round(L, radius)
    kappa = ck_projection(rhs, basis)
    lam = div_multipliers(L)
    ell, _ = mode_degrees(L)
    mult = lam[ell] / radius**2
    high = ell >= 2
    need = high & ((np.abs(rhs.E) > 0) | (np.abs(rhs.B) > 0))
    if np.any(np.abs(mult[need]) < floor):
        raise DivergenceInverseError("divergence multiplier below floor")
    safe = np.where(high, mult, 1.0)
    E = np.where(high, rhs.E / safe, 0.0)
    B = np.where(high, rhs.B / safe, 0.0)
    return TracelessTensor(E, B), kappa
