"""Legendre functions P_l, Q_l on (1, inf).

Normalization: z**-l * P_l(z) -> 1 and z**(l+1) * Q_l(z) -> 1 as z -> inf.
Relative to the classical (Hobson) functions,

    P_l = d_l * P_l^classical,  d_l = sqrt(pi) G(l+1) / (2**l G(l+1/2))
    Q_l = c_l * Q_l^classical,  c_l = 2**(l+1) G(l+3/2) / (sqrt(pi) G(l+1))

so d_l * c_l = 2l + 1 and the signed Wronskian is
(P Q' - P' Q)(z^2 - 1) = -(2l + 1).

Internally everything is computed in scaled form
    p = z**-l P,   dp = z**(1-l) P',   q = z**(l+1) Q,   dq = z**(l+2) Q'
so that no overflow occurs for large l and z.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import lgamma, log, pi

import numpy as np

# below this z the Q series is slow; use Miller's backward recurrence instead
Z_SERIES_MIN = 1.2
MAX_TERMS = 200_000


class LegendreDomainError(ValueError):
    pass


class ConvergenceError(RuntimeError):
    pass


def _as_z(z):
    z = np.asarray(z, dtype=float)
    if np.any(z <= 1.0):
        raise LegendreDomainError("Legendre functions are evaluated for z > 1 only")
    return z


def log_d(ell: int) -> float:
    return 0.5 * log(pi) + lgamma(ell + 1) - ell * log(2.0) - lgamma(ell + 0.5)


def log_c(ell: int) -> float:
    return (ell + 1) * log(2.0) + lgamma(ell + 1.5) - 0.5 * log(pi) - lgamma(ell + 1)


def p_coefficients(ell: int) -> np.ndarray:
    """a_k of P_l = sum a_k z**(l-k); odd entries vanish."""
    a = np.zeros(ell + 1)
    a[0] = 1.0
    for k in range(2, ell + 1):
        a[k] = (ell - k + 2) * (ell - k + 1) / (k * k - k * (2 * ell + 1)) * a[k - 2]
    return a


def q_coefficient_ratio(ell: int, k: int) -> float:
    """b_k / b_{k-2}."""
    return (ell + k - 1) * (ell + k) / (k * (2 * ell + k + 1))


# ---------------------------------------------------------------- P_l


def _p_series(ell, z):
    a = p_coefficients(ell)
    w = 1.0 / z
    p = np.zeros_like(z)
    dp = np.zeros_like(z)
    d2p = np.zeros_like(z)
    wk = np.ones_like(z)
    for k in range(ell + 1):
        if a[k] != 0.0:
            p += a[k] * wk
            dp += (ell - k) * a[k] * wk
            d2p += (ell - k) * (ell - k - 1) * a[k] * wk
        wk = wk * w
    return p, dp, d2p


def _p_series_condition(ell, z):
    # ratio of sum |terms| to |sum|, estimated from the classical growth rates
    s_abs = (z + np.sqrt(z * z + 1)) ** ell
    s_val = (z + np.sqrt(z * z - 1)) ** ell
    return s_abs / s_val


def _p_recurrence(ell, z):
    # scaled three-term recurrence, stable in the growing direction
    w2 = 1.0 / (z * z)
    p_prev = np.ones_like(z)   # p_0
    if ell == 0:
        return p_prev, np.zeros_like(z)
    p = np.ones_like(z)        # p_1 = z / z
    for j in range(1, ell):
        p_prev, p = p, p - j * j / (4.0 * j * j - 1.0) * w2 * p_prev
    # (z^2-1) P_l' = l z P_l - l^2/(2l-1) P_{l-1}
    dp = (ell * p - ell * ell / (2.0 * ell - 1.0) * w2 * p_prev) / (1.0 - w2)
    return p, dp


def scaled_P(ell: int, z):
    """(z**-l P_l, z**(1-l) P_l')."""
    z = _as_z(z)
    if ell == 0:
        return np.ones_like(z), np.zeros_like(z)
    use_series = _p_series_condition(ell, z) < 1e3
    p = np.empty_like(z)
    dp = np.empty_like(z)
    if np.any(use_series):
        p[use_series], dp[use_series], _ = _p_series(ell, z[use_series])
    if np.any(~use_series):
        p[~use_series], dp[~use_series] = _p_recurrence(ell, z[~use_series])
    return p, dp


def legendre_P(ell: int, z):
    """P_l(z) and P_l'(z)."""
    z = _as_z(z)
    p, dp = scaled_P(ell, z)
    return p * z**ell, dp * z ** (ell - 1)


def legendre_P_series(ell: int, z):
    """Finite Frobenius sum only (no recurrence fallback)."""
    z = _as_z(z)
    p, dp, d2p = _p_series(ell, z)
    return p * z**ell, dp * z ** (ell - 1), d2p * z ** (ell - 2.0)


# ---------------------------------------------------------------- Q_l


def _q_series(ell, z, tol):
    w2 = 1.0 / (z * z)
    q = np.ones_like(z)
    dq = np.full_like(z, -(ell + 1.0))
    d2q = np.full_like(z, (ell + 1.0) * (ell + 2.0))
    term = np.ones_like(z)
    active = np.ones(z.shape, dtype=bool)
    k = 0
    while np.any(active):
        k += 2
        if k > MAX_TERMS:
            raise ConvergenceError(f"Q_{ell} series did not reach tol={tol} at z={z[active].min()}")
        rk = q_coefficient_ratio(ell, k)
        term = term * rk * w2
        q = q + np.where(active, term, 0.0)
        dq = dq - np.where(active, (ell + 1 + k) * term, 0.0)
        d2q = d2q + np.where(active, (ell + 1 + k) * (ell + 2 + k) * term, 0.0)
        # b_{k+2}/b_k - 1 has the sign of l^2 - l - 2k - 4, so once the ratio
        # drops below one it stays there; before that it is falling
        nxt = q_coefficient_ratio(ell, k + 2)
        rho = max(nxt, 1.0) * w2
        falling = nxt <= 1.0 or nxt <= rk
        tail = np.where(rho < 1, term * rho / (1 - rho) * (ell + k + 3) ** 2, np.inf)
        done = falling & (tail <= tol * np.abs(q))
        active &= ~done
    return q, dq, d2q


def _q_miller(ell, z):
    """Classical Q by backward recurrence, normalized by Q_0 = artanh(1/z)."""
    xi = np.log(z + np.sqrt(z * z - 1))
    extra = int(np.ceil(40.0 / xi.min())) + 20
    top = ell + extra
    q_hi = np.zeros_like(z)
    q = np.full_like(z, 1e-200)
    vals = {}
    for j in range(top, 0, -1):
        # Q_{j-1} = ((2j+1) z Q_j - (j+1) Q_{j+1}) / j
        q_lo = ((2 * j + 1) * z * q - (j + 1) * q_hi) / j
        q_hi, q = q, q_lo
        if j - 1 <= ell:
            vals[j - 1] = q.copy()
        big = np.abs(q) > 1e200
        if np.any(big):
            s = np.where(big, 1e-200, 1.0)
            q, q_hi = q * s, q_hi * s
            for key in vals:
                vals[key] = vals[key] * s
    scale = np.arctanh(1.0 / z) / vals[0]
    q_l = vals[ell] * scale
    if ell == 0:
        dq_l = -1.0 / (z * z - 1)
    else:
        dq_l = ell * (z * q_l - vals[ell - 1] * scale) / (z * z - 1)
    return q_l, dq_l


def scaled_Q(ell: int, z, tol: float = 1e-16):
    """(z**(l+1) Q_l, z**(l+2) Q_l')."""
    z = _as_z(z)
    q = np.empty_like(z)
    dq = np.empty_like(z)
    ser = z >= Z_SERIES_MIN
    if np.any(ser):
        q[ser], dq[ser], _ = _q_series(ell, z[ser], tol)
    if np.any(~ser):
        zz = z[~ser]
        qc, dqc = _q_miller(ell, zz)
        c = np.exp(log_c(ell))
        q[~ser] = c * qc * zz ** (ell + 1)
        dq[~ser] = c * dqc * zz ** (ell + 2)
    return q, dq


def legendre_Q(ell: int, z, tol: float = 1e-16):
    """Q_l(z) and Q_l'(z)."""
    z = _as_z(z)
    q, dq = scaled_Q(ell, z, tol)
    return q * z ** (-ell - 1.0), dq * z ** (-ell - 2.0)


def wronskian(ell: int, z):
    """Signed (P Q' - P' Q)(z^2 - 1); equals -(2l+1)."""
    z = _as_z(z)
    p, dp = scaled_P(ell, z)
    q, dq = scaled_Q(ell, z)
    return (p * dq - dp * q) * (z * z - 1) / (z * z)


def legendre_Q_series(ell: int, z, tol: float = 1e-16):
    """Q_l, Q_l', Q_l'' from the term-wise differentiated b-series (z >= 1.2)."""
    z = _as_z(z)
    if np.any(z < Z_SERIES_MIN):
        raise LegendreDomainError(f"series evaluation needs z >= {Z_SERIES_MIN}")
    q, dq, d2q = _q_series(ell, z, tol)
    return q * z ** (-ell - 1.0), dq * z ** (-ell - 2.0), d2q * z ** (-ell - 3.0)


def ode_residual(ell: int, z, which: str = "Q"):
    """Relative residual of (z^2-1) y'' + 2 z y' - l(l+1) y = 0 from the series."""
    z = _as_z(z)
    lam = ell * (ell + 1)
    if which == "P":
        y, dy, d2y = legendre_P_series(ell, z)
    else:
        y, dy, d2y = legendre_Q_series(ell, z)
    terms = ((z * z - 1) * d2y, 2 * z * dy, -lam * y)
    res = sum(terms)
    scale = sum(np.abs(t) for t in terms)
    return np.abs(res) / np.where(scale > 0, scale, 1.0)


def second_derivative(ell: int, z, which: str = "Q"):
    """y'' from the ODE, for either solution."""
    z = _as_z(z)
    y, dy = (legendre_Q if which == "Q" else legendre_P)(ell, z)
    return (ell * (ell + 1) * y - 2 * z * dy) / (z * z - 1)


# ---------------------------------------------------------------- bounds


@dataclass
class BoundReport:
    ell_max: int
    R: float
    max_ratio: dict = field(default_factory=dict)
    argmax: dict = field(default_factory=dict)
    half_max_ratio: dict = field(default_factory=dict)

    @property
    def finite(self) -> bool:
        return all(np.isfinite(v) and v > 0 for v in self.max_ratio.values())

    @property
    def stable(self) -> bool:
        return all(self.max_ratio[k] <= 2.0 * self.half_max_ratio[k] for k in self.max_ratio)


def bound_ratios(ell: int, z):
    """The four ratios controlled by the uniform P/Q bounds at degree ell >= 1."""
    z = _as_z(z)
    s = 2 * z / (z + np.sqrt(z * z - 1))
    p, dp = scaled_P(ell, z)
    q, dq = scaled_Q(ell, z)
    return {
        "P": np.abs(p) * s**ell,
        "Q": np.abs(q) / s**ell,
        "dP": np.abs(dp) * s**ell / ell,
        "dQ": np.abs(dq) / s**ell / ell,
    }


def verify_uniform_bounds(ell_max: int, z_grid, R: float) -> BoundReport:
    z = np.asarray(z_grid, dtype=float)
    if R <= 1 or np.any(z < R):
        raise LegendreDomainError("need R > 1 and z_grid inside [R, inf)")
    rep = BoundReport(ell_max=ell_max, R=R)
    half = max(1, ell_max // 2)
    for key in ("P", "Q", "dP", "dQ"):
        rep.max_ratio[key] = 0.0
        rep.half_max_ratio[key] = 0.0
    for ell in range(1, ell_max + 1):
        ratios = bound_ratios(ell, z)
        for key, vals in ratios.items():
            i = int(np.argmax(vals))
            if vals[i] > rep.max_ratio[key]:
                rep.max_ratio[key] = float(vals[i])
                rep.argmax[key] = (ell, float(z[i]))
            if ell <= half:
                rep.half_max_ratio[key] = max(rep.half_max_ratio[key], float(vals[i]))
    return rep
