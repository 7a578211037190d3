import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from bartnik.schwarzschild import (
    Background,
    DomainError,
    eval_background,
    schwarzschild_bartnik_data,
    schwarzschild_mass_for_trK,
)

Y00 = 1 / np.sqrt(4 * np.pi)


def test_trK_at_boundary():
    bg = Background(m0=1.0, n=3.0)
    assert bg.trK(3.0) == pytest.approx(4 / 3, rel=1e-15)
    assert bg.trK0 == pytest.approx(4 / 3, rel=1e-15)


def test_trK_flat_limit():
    bg = Background(m0=1.0, n=3.0)
    assert bg.trK(1e6) * 1e6 / 2 == pytest.approx(1.0, abs=1e-5)


def test_u_at_boundary():
    bg = Background(m0=1.0, n=3.0)
    assert bg.u(3.0) == pytest.approx(np.log(np.sqrt(1 / 3)), rel=1e-15)


def test_eval_background_record():
    bg = Background(m0=1.0, n=3.0)
    v = eval_background(bg, np.array([3.0, 10.0]))
    assert v.du == pytest.approx([1 / 3, 1 / 80])
    assert v.lam == pytest.approx([3.0, 80.0])


def test_below_boundary_rejected():
    bg = Background(m0=1.0, n=3.0)
    with pytest.raises(DomainError):
        bg.u(2.5)
    with pytest.raises(DomainError):
        eval_background(bg, [2.9])


@pytest.mark.parametrize("m0, n", [(0.0, 3.0), (1.0, 2.0), (-1.0, 3.0), (1.0, 1.5)])
def test_invalid_parameters(m0, n):
    with pytest.raises(DomainError):
        Background(m0=m0, n=n)


def test_bartnik_data_values():
    d = schwarzschild_bartnik_data(Background(m0=1.0, n=3.0))
    assert d.trK[0] * Y00 == pytest.approx(2 * np.sqrt(1 / 3) / 3, rel=1e-14)
    assert d.trace[0] * Y00 == pytest.approx(9.0, rel=1e-14)
    assert np.all(d.trK[1:] == 0) and np.all(d.E == 0) and np.all(d.B == 0)


def test_bartnik_data_euclidean_limit():
    bg = Background(m0=1.0, n=1e6)
    d = schwarzschild_bartnik_data(bg)
    assert d.trK[0] * Y00 * bg.r0 / 2 == pytest.approx(1.0, abs=2e-6)


def test_bartnik_data_mass_scaling():
    a = schwarzschild_bartnik_data(Background(m0=1.0, n=3.0)).trK[0]
    b = schwarzschild_bartnik_data(Background(m0=2.0, n=3.0)).trK[0]
    assert b == pytest.approx(a / 2, rel=1e-15)


def test_mass_for_trK_inverts_background():
    for n in (2.5, 3.0, 7.0):
        bg = Background(m0=1.3, n=n)
        assert schwarzschild_mass_for_trK(bg.r0, bg.trK_phys) == pytest.approx(1.3, rel=1e-13)


@given(st.floats(2.05, 50), st.floats(0.1, 10), st.floats(1.0, 1e4))
def test_laplacian_of_u_vanishes(n, m0, s):
    bg = Background(m0=m0, n=n)
    r = bg.r0 * s
    lhs = bg.d2u(r) + bg.trK(r) * bg.du(r)
    assert abs(lhs) <= 1e-12 * abs(bg.d2u(r))


@given(st.floats(2.01, 100), st.floats(0.1, 10), st.floats(1.0, 1e6))
def test_trK_positive_and_closed_form(n, m0, s):
    bg = Background(m0=m0, n=n)
    r = bg.r0 * s
    assert bg.trK(r) > 0
    # trK = d_r log lam and L = lam / lam(r0)
    assert bg.trK(r) == pytest.approx(bg.dlam(r) / bg.lam(r), rel=1e-13)
    assert bg.L(bg.r0) == pytest.approx(1.0, rel=1e-13)


@given(st.floats(2.01, 100), st.floats(1.01, 1e3))
def test_dtrK_matches_finite_difference(n, s):
    bg = Background(m0=1.0, n=n)
    r = bg.r0 * s
    h = 1e-5 * r
    fd = (bg.trK(r + h) - bg.trK(r - h)) / (2 * h)
    assert bg.dtrK(r) == pytest.approx(fd, rel=1e-6)
