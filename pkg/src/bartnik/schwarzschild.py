"""Conformal Schwarzschild background.

The physical exterior is (f^-2 dr^2 + r^2 gamma, f) with f = sqrt(1 - 2 m0/r).
Its conformal rescaling g = f^2 (physical metric) is dr^2 + r (r - 2 m0) gamma,
with potential u = ln f.  The boundary sits at r0 = n m0, n > 2.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DomainError(ValueError):
    pass


@dataclass(frozen=True)
class Background:
    m0: float = 1.0
    n: float = 3.0

    def __post_init__(self):
        if not self.m0 > 0:
            raise DomainError(f"m0 must be positive, got {self.m0}")
        if not self.n > 2:
            raise DomainError(f"n must exceed 2, got {self.n}")

    @property
    def r0(self) -> float:
        return self.n * self.m0

    @property
    def rho0_sq(self) -> float:
        """Area factor of the boundary metric: gamma_sc = rho0_sq * round."""
        return self.n * (self.n - 2.0) * self.m0**2

    def _check(self, r):
        r = np.asarray(r, dtype=float)
        if np.any(r < self.r0 * (1 - 1e-12)):
            raise DomainError(f"radius below boundary r0={self.r0}")
        return r

    # closed forms -------------------------------------------------------
    def lam(self, r):
        """Angular factor r(r - 2 m0) of g_sc."""
        r = np.asarray(r, dtype=float)
        return r * (r - 2 * self.m0)

    def dlam(self, r):
        return 2 * (np.asarray(r, dtype=float) - self.m0)

    def u(self, r):
        r = self._check(r)
        return 0.5 * np.log1p(-2 * self.m0 / r)

    def du(self, r):
        r = self._check(r)
        return self.m0 / (r * (r - 2 * self.m0))

    def d2u(self, r):
        r = self._check(r)
        return -self.m0 * 2 * (r - self.m0) / (r * (r - 2 * self.m0)) ** 2

    def trK(self, r):
        r = self._check(r)
        return 2 * (r - self.m0) / (r * (r - 2 * self.m0))

    def dtrK(self, r):
        r = self._check(r)
        lam = r * (r - 2 * self.m0)
        return (2 * lam - 4 * (r - self.m0) ** 2) / lam**2

    def L(self, r):
        """exp of the integral of trK_sc from r0, i.e. lam(r)/lam(r0)."""
        return self.lam(r) / self.rho0_sq

    # boundary values ----------------------------------------------------
    @property
    def du0(self) -> float:
        return 1.0 / ((self.n - 2) * self.n * self.m0)

    @property
    def trK0(self) -> float:
        return 2 * (self.n - 1) / (self.n * (self.n - 2) * self.m0)

    @property
    def R_boundary(self) -> float:
        """Scalar curvature of gamma_sc."""
        return 2.0 / self.rho0_sq

    @property
    def trK_phys(self) -> float:
        """Mean curvature trace of the boundary in the physical metric."""
        return 2 * np.sqrt(1 - 2 / self.n) / (self.n * self.m0)

    @property
    def area_radius(self) -> float:
        return self.n * self.m0


@dataclass(frozen=True)
class BackgroundValues:
    u: np.ndarray
    du: np.ndarray
    trK: np.ndarray
    lam: np.ndarray


def eval_background(bg: Background, r) -> BackgroundValues:
    return BackgroundValues(u=bg.u(r), du=bg.du(r), trK=bg.trK(r), lam=bg.lam(bg._check(r)))


def schwarzschild_mass_for_trK(r_area: float, trK_phys: float) -> float:
    """Mass of the Schwarzschild sphere with areal radius r_area and mean curvature trK_phys."""
    return 0.5 * r_area * (1 - (0.5 * r_area * trK_phys) ** 2)


@dataclass
class BartnikData:
    """Boundary metric gamma_B = trace * round + T^E[E] + T^B[B] and mean curvature trK_B.

    All four entries are real harmonic coefficient vectors of one common band
    limit L_max.
    """

    trace: np.ndarray
    E: np.ndarray
    B: np.ndarray
    trK: np.ndarray

    @property
    def L_max(self) -> int:
        return int(round(np.sqrt(len(self.trK)))) - 1

    def copy(self) -> "BartnikData":
        return BartnikData(self.trace.copy(), self.E.copy(), self.B.copy(), self.trK.copy())


def schwarzschild_bartnik_data(bg: Background, L_max: int = 2) -> BartnikData:
    """gamma_B = (n m0)^2 round, trK_B = trK_phys, as harmonic coefficients."""
    K = (L_max + 1) ** 2
    y00 = np.sqrt(4 * np.pi)
    trace = np.zeros(K)
    trace[0] = bg.r0**2 * y00
    trK = np.zeros(K)
    trK[0] = bg.trK_phys * y00
    return BartnikData(trace, np.zeros(K), np.zeros(K), trK)
