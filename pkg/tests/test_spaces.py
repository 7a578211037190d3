import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from bartnik.geometry import FoliatedMetric
from bartnik.schwarzschild import Background
from bartnik.spaces import (
    CompactSample,
    RadialGrid,
    _envelope,
    chained_constants,
    chained_hardy_flat,
    decay_exponent,
    embedding_ratio,
    half_order_bracket,
    hardy_check,
    hardy_R0,
    random_compact_sample,
    weighted_A_norm,
    weighted_C_norm,
    weighted_H_norm,
)
from bartnik.sphharm import SphBasis

DELTA = -0.75


@pytest.fixture(scope="module")
def g():
    return RadialGrid(3.0, 96)


def test_grid_layout(g):
    assert g.r[0] == pytest.approx(3.0, rel=1e-15)
    assert g.r[-1] == pytest.approx(3000.0, rel=1e-12)
    assert np.all(np.diff(g.r) > 0)
    assert g.refine().R_cut == 2 * g.R_cut


@pytest.mark.parametrize("bad", [dict(r0=0.0), dict(r0=3.0, N_r=3), dict(r0=3.0, R_cut=2.0)])
def test_grid_validation(bad):
    with pytest.raises(ValueError):
        RadialGrid(**bad)


GRID400 = RadialGrid(3.0, 400)


@given(st.floats(-3.0, 0.0))
def test_differentiation_of_powers(delta):
    # r^delta is (1 - x)^-delta in the compactified variable, so small |delta|
    # needs the finest desk-scale grid
    g = GRID400
    sel = g.r <= g.R_cut / 10
    d = g.D @ g.r**delta
    exact = delta * g.r ** (delta - 1)
    err = np.abs(d - exact)[sel]
    assert np.all(err <= 1e-6 * np.abs(exact[sel]) + 1e-10)


def test_differentiation_default_grid_integer_powers(g):
    for p in (-1, -2, -3):
        assert np.allclose(g.D @ g.r**p, p * g.r ** (p - 1.0), rtol=1e-9)


def test_quadrature_and_cumulative(g):
    f = g.r**-2.0
    assert g.integrate(f) == pytest.approx(1 / 3 - 1 / 3000, rel=1e-12)
    c = g.cumulative @ f
    assert np.allclose(c, 1 / 3 - 1 / g.r, rtol=1e-10, atol=1e-14)


def test_interpolation(g):
    W = g.interp_matrix([3.0, 7.5, 2999.0])
    assert np.allclose(W @ (1 / g.r), [1 / 3, 1 / 7.5, 1 / 2999], rtol=1e-10)
    with pytest.raises(ValueError):
        g.interp_matrix([2.0])


# ------------------------------------------------------------------ H and C norms


def test_H_norm_borderline_divergent(g):
    rep = weighted_H_norm(g, [g.r**DELTA], 0, 0, DELTA)
    assert rep.divergent and not np.isfinite(rep.value_sq)


def test_H_norm_analytic(g):
    eps = 0.1
    rep = weighted_H_norm(g, [g.r ** (DELTA - eps)], 0, 0, DELTA)
    assert not rep.divergent
    assert rep.value_sq == pytest.approx(3.0 ** (-2 * eps) / (2 * eps), rel=1e-4)


def test_norms_of_zero(g):
    z = np.zeros(g.N_r)
    assert weighted_H_norm(g, [z], 0, 0, DELTA).value == 0
    assert weighted_C_norm(g, [z], 0, 0, DELTA).value == 0
    assert weighted_A_norm(g, [z, z, z], 2, 2, DELTA) == 0


def test_C_norm_examples(g):
    rep = weighted_C_norm(g, [g.r**DELTA], 0, 0, DELTA)
    assert rep.value_sq == pytest.approx(1.0, rel=1e-12)
    vals = g.r ** (-2 * DELTA) * (g.r**DELTA) ** 2
    assert np.allclose(vals, 1.0, rtol=1e-12)
    rep = weighted_C_norm(g, [g.r**DELTA * (1 + 1 / g.r)], 0, 0, DELTA)
    assert rep.argmax[0] == pytest.approx(3.0)


def test_endpoint_delta_flagged(g):
    rep = weighted_C_norm(g, [g.r**-1.0], 0, 0, -0.5)
    assert rep.flags


def test_truncated_H_norm(g):
    y = 1e-14 * np.ones(g.N_r)
    assert weighted_H_norm(g, [y], 0, 0, DELTA).divergent
    rep = weighted_H_norm(g, [y], 0, 0, DELTA, extrapolate=False)
    assert not rep.divergent and np.isfinite(rep.value)


def test_mode_weights(g):
    # H^k weights (1 + l(l+1))^k per mode
    prof = np.zeros((g.N_r, 4))
    prof[:, 2] = g.r**-2.0
    r1 = weighted_H_norm(g, [prof], 0, 1, DELTA, ell=np.array([0, 1, 1, 1]))
    r0 = weighted_H_norm(g, [prof], 0, 0, DELTA, ell=np.array([0, 1, 1, 1]))
    assert r1.value_sq == pytest.approx(3 * r0.value_sq, rel=1e-12)
    assert r1.per_mode[2] == pytest.approx(3 * r0.per_mode[2], rel=1e-12)


@given(st.floats(0.05, 1.0), st.floats(0.1, 5.0))
@settings(max_examples=25)
def test_embedding_bounded(eps, a):
    g = RadialGrid(3.0, 96)
    u = a * g.r ** (DELTA - eps)
    stack = [u, (DELTA - eps) * u / g.r]
    ratio = embedding_ratio(g, stack, 1, 0, DELTA)
    assert np.isfinite(ratio) and 0 < ratio < 10


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=30))
def test_envelope(y):
    y = np.array(y)
    e = _envelope(y)
    assert np.all(e >= np.abs(y)) and np.all(np.diff(e) <= 0)
    assert e[-1] == abs(y[-1])


def test_decay_exponent():
    r = np.geomspace(1, 1e3, 50)
    assert decay_exponent(r, r**-2.5) == pytest.approx(-2.5, abs=1e-12)


def test_half_order_bracket():
    lo, hi = half_order_bracket(np.ones(9), np.repeat(np.arange(3), [1, 3, 5]), 1)
    assert 0 < lo < hi


# ------------------------------------------------------------------ Hardy


@pytest.fixture(scope="module")
def sc_metric():
    bg = Background(m0=1.0, n=3.0)
    return FoliatedMetric.schwarzschild(bg, RadialGrid(bg.r0, 64), SphBasis(4))


def test_R0_schwarzschild(sc_metric):
    # r (trK - 2/r) = 2 m0 / (r - 2 m0) <= 1 exactly when r >= 4 m0
    r, trK = sc_metric.trK_profile()
    R0 = hardy_R0(r, trK)
    assert R0 >= 4.0
    assert r[np.searchsorted(r, R0) - 1] < 4.0


def test_hardy_bump_constant_on_sphere(sc_metric):
    r, trK = sc_metric.trK_profile()
    R0 = hardy_R0(r, trK)
    K = 25
    c = np.zeros(K)
    c[0] = 1.0
    s = CompactSample(R0, 10 * R0, 3, c, np.zeros(K))
    res = hardy_check(sc_metric, s, 1.0, R0)
    assert 0 < res.ratio <= 1 and res.passed


def test_hardy_zero_field(sc_metric):
    r, trK = sc_metric.trK_profile()
    R0 = hardy_R0(r, trK)
    s = CompactSample(R0, 2 * R0, 4, np.zeros(25), np.zeros(25))
    res = hardy_check(sc_metric, s, 1.0, R0)
    assert res.lhs == 0 and res.rhs == 0 and res.ratio == 0


def test_hardy_random_bumps_chained_tau(sc_metric):
    r, trK = sc_metric.trK_profile()
    R0 = hardy_R0(r, trK)
    rng = np.random.default_rng(7)
    for _ in range(8):
        s = random_compact_sample(rng, R0, 20 * R0, 4)
        assert hardy_check(sc_metric, s, -2 * DELTA - 1, R0).passed


def test_hardy_preconditions(sc_metric):
    r, trK = sc_metric.trK_profile()
    R0 = hardy_R0(r, trK)
    s = CompactSample(R0, 2 * R0, 4, np.ones(25), np.zeros(25))
    with pytest.raises(ValueError):
        hardy_check(sc_metric, s, 1.0, 3.5)
    with pytest.raises(ValueError):
        hardy_check(sc_metric, s, 0.0, R0)
    with pytest.raises(ValueError):
        hardy_check(sc_metric, CompactSample(R0, 2 * R0, 4, np.ones(25), np.zeros(25)), 1.0, 1.5 * R0)


def test_chained_constants():
    taus, C = chained_constants(DELTA)
    assert taus == pytest.approx((0.5, 2.5, 4.5))
    assert C == pytest.approx((16.0, 0.64, 4 / 20.25))


@given(st.integers(0, 2**31))
@settings(max_examples=5)
def test_chained_hardy_holds(seed):
    s = random_compact_sample(np.random.default_rng(seed), 4.2, 80.0, 3)
    res = chained_hardy_flat(s, DELTA, SphBasis(3))
    assert 0 < res.chain_ratio <= 1 and res.product_ratio <= 1


def test_compact_sample_profile_derivatives():
    s = random_compact_sample(np.random.default_rng(3), 5.0, 50.0, 2)
    r = np.linspace(s.a, s.b, 9)[1:-1]
    h = 1e-3 * (s.b - s.a)
    fd = (-s.profiles(r + 2 * h) + 8 * s.profiles(r + h) - 8 * s.profiles(r - h) + s.profiles(r - 2 * h)) / (12 * h)
    exact = s.profiles(r, 1)
    assert np.allclose(exact, fd, rtol=0, atol=1e-7 * np.abs(exact).max())
    assert np.all(s.profiles(np.array([s.a - 1, s.b + 1])) == 0)
