import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bartnik import legendre
from bartnik.legendre import (
    ConvergenceError,
    LegendreDomainError,
    legendre_P,
    legendre_P_series,
    legendre_Q,
    legendre_Q_series,
    ode_residual,
    p_coefficients,
    second_derivative,
    verify_uniform_bounds,
    wronskian,
)

mp.mp.dps = 40


def d_factor(ell):
    return math.sqrt(math.pi) * math.gamma(ell + 1) / (2**ell * math.gamma(ell + 0.5))


def c_factor(ell):
    return 2 ** (ell + 1) * math.gamma(ell + 1.5) / (math.sqrt(math.pi) * math.gamma(ell + 1))


def classical_P(ell, z):
    return float(mp.legenp(ell, 0, z, type=3).real)


def classical_Q(ell, z):
    return float(mp.legenq(ell, 0, z, type=3).real)


def val(f, ell, z):
    return float(np.ravel(f(ell, z)[0])[0])


# ------------------------------------------------------------------ closed values


def test_P1_is_z():
    z = np.array([1.1, 2.0, 17.0])
    p, dp = legendre_P(1, z)
    assert np.array_equal(p, z)
    assert np.all(dp == 1)


def test_P2_at_2_exact():
    assert val(legendre_P, 2, 2.0) == 11 / 3
    assert p_coefficients(2)[2] == -1 / 3


def test_P5_against_classical():
    z = 1.5
    assert val(legendre_P, 5, z) == pytest.approx(d_factor(5) * classical_P(5, z), rel=1e-13)


def test_Q0_closed_form():
    assert val(legendre_Q, 0, 3.0) == pytest.approx(0.5 * math.log(2.0), abs=1e-15)


def test_Q1_against_closed_form():
    z = 2.0
    q1 = z * math.atanh(1 / z) - 1
    assert val(legendre_Q, 1, z) == pytest.approx(3 * q1, rel=1e-14)


@pytest.mark.parametrize("ell", [0, 1, 2, 7, 20, 45])
@pytest.mark.parametrize("z", [1.05, 1.15, 1.3, 2.0, 10.0, 300.0])
def test_Q_against_mpmath(ell, z):
    ref = c_factor(ell) * classical_Q(ell, z)
    assert val(legendre_Q, ell, z) == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("ell", [0, 3, 12, 40])
@pytest.mark.parametrize("z", [1.05, 1.5, 4.0, 50.0])
def test_P_against_mpmath(ell, z):
    ref = d_factor(ell) * classical_P(ell, z)
    assert val(legendre_P, ell, z) == pytest.approx(ref, rel=1e-11)


@pytest.mark.parametrize("ell", [0, 2, 9])
def test_Q_normalized_at_infinity(ell):
    z = 1e7
    assert val(legendre_Q, ell, z) * z ** (ell + 1) == pytest.approx(1.0, rel=1e-12)


def test_domain_error():
    with pytest.raises(LegendreDomainError):
        legendre_Q(1, 1.0)
    with pytest.raises(LegendreDomainError):
        legendre_P(2, [0.5, 2.0])
    with pytest.raises(LegendreDomainError):
        legendre_Q_series(2, 1.1)


def test_unreachable_tolerance(monkeypatch):
    monkeypatch.setattr(legendre, "MAX_TERMS", 10)
    with pytest.raises(ConvergenceError):
        legendre_Q(3, 1.25, tol=1e-16)


def test_series_routes_agree_with_main_route():
    z = np.array([1.25, 2.0, 30.0])
    for ell in (0, 4, 11):
        q, dq, _ = legendre_Q_series(ell, z)
        q2, dq2 = legendre_Q(ell, z)
        assert np.allclose(q, q2, rtol=1e-13) and np.allclose(dq, dq2, rtol=1e-13)
        p, dp, _ = legendre_P_series(ell, z)
        p2, dp2 = legendre_P(ell, z)
        assert np.allclose(p, p2, rtol=1e-12) and np.allclose(dp, dp2, rtol=1e-12)


# ------------------------------------------------------------------ properties

zs = st.floats(1.1, 1e3)
ells = st.integers(0, 50)


@given(ells, zs)
def test_wronskian_constant(ell, z):
    w = float(wronskian(ell, z))
    assert w == pytest.approx(-(2 * ell + 1), rel=1e-10)


@given(ells, st.floats(1.21, 1e3), st.sampled_from(["P", "Q"]))
def test_ode_residual(ell, z, which):
    assert float(ode_residual(ell, z, which)) < 1e-8


@given(st.integers(1, 50), st.floats(1.1, 1e3))
def test_Q_recurrence(ell, z):
    # classical (z^2-1) Q' = l (z Q - Q_{l-1}), rescaled
    q, dq = (float(np.ravel(a)[0]) for a in legendre_Q(ell, z))
    qm = val(legendre_Q, ell - 1, z)
    ratio = c_factor(ell) / c_factor(ell - 1)
    lhs = (z * z - 1) * dq
    rhs = ell * (z * q - ratio * qm)
    assert lhs == pytest.approx(rhs, rel=1e-8, abs=1e-12 * abs(ell * z * q))


@given(ells, st.floats(1.1, 500), st.floats(1.001, 3))
def test_Q_positive_and_scaled_decreasing(ell, z, f):
    q1 = val(legendre_Q, ell, z)
    q2 = val(legendre_Q, ell, z * f)
    assert q1 > 0 and q2 > 0
    assert q2 * (z * f) ** (ell + 1) <= q1 * z ** (ell + 1) * (1 + 1e-13)


@given(ells, st.floats(1.1, 1e3))
def test_second_derivative_from_ode(ell, z):
    z2 = max(z, 1.21)
    y2 = float(np.ravel(second_derivative(ell, z2, "Q"))[0])
    ref = float(np.ravel(legendre_Q_series(ell, z2)[2])[0])
    assert y2 == pytest.approx(ref, rel=1e-8)


# ------------------------------------------------------------------ uniform bounds


def test_uniform_bounds_single():
    rep = verify_uniform_bounds(1, [2.0], 2.0)
    assert rep.finite


def test_uniform_bounds_plateau():
    z = np.geomspace(2.0, 1e4, 60)
    rep = verify_uniform_bounds(50, z, 2.0)
    assert rep.finite and rep.stable
    assert rep.max_ratio["Q"] <= 2 * rep.half_max_ratio["Q"]


def test_uniform_bounds_domain():
    with pytest.raises(LegendreDomainError):
        verify_uniform_bounds(5, [1.5], 2.0)
