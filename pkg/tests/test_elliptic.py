import mpmath
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bartnik.elliptic import (DecayError, EllipticSolver, ModeProfile, apply_laplacian_modes, estimate_grid,
                              estimate_sides, random_mode_data, verify_mode_estimates)
from bartnik.spaces import RadialGrid, decay_exponent, weighted_C_norm
from bartnik.sphharm import SphBasis, mode_degrees, mode_index, n_modes
from bartnik.suites import manufactured_field


def classical_Q1(z):
    # z/2 ln((z+1)/(z-1)) - 1, in extended precision to avoid cancellation at large z
    with mpmath.workdps(40):
        return np.array([float(t * mpmath.atanh(1 / mpmath.mpf(t)) - 1) for t in z])


@pytest.fixture(scope="module")
def solver(bg, grid96):
    return EllipticSolver(grid96, bg)


def test_homogeneous_l1_is_Q1(solver, bg, grid96):
    z = grid96.r / bg.m0 - 1
    q = classical_Q1(z)
    prof = solver.solve_mode(1, 0, np.zeros(grid96.N_r), 1.0)
    assert np.allclose(prof.a, q / q[0], rtol=1e-10, atol=1e-14)


@pytest.mark.parametrize("ell", [2, 3, 7])
def test_homogeneous_mode_decays_like_r_minus_l_minus_1(solver, bg, grid96, ell):
    prof = solver.solve_mode(ell, 0, np.zeros(grid96.N_r), 1.0)
    sel = grid96.r > 5e2
    p = np.polyfit(np.log(grid96.r[sel]), np.log(np.abs(prof.a[sel])), 1)[0]
    assert p == pytest.approx(-ell - 1, abs=1e-2)


def test_l0_boundary_slope_example(solver, grid96):
    prof = solver.solve_mode(0, 0, np.zeros(grid96.N_r), 1.0)
    assert prof.info["da0"] == pytest.approx(-2 / (3 * np.log(3)), rel=1e-12)


def test_l0_homogeneous_closed_form(solver, bg, grid96):
    # Lam a' is constant, so a is proportional to ln(1 - 2 m0 / r)
    r = grid96.r
    k = np.log(1 - 2 * bg.m0 / r)
    prof = solver.solve_mode(0, 0, np.zeros(grid96.N_r), 2.5)
    assert np.allclose(prof.a, 2.5 * k / k[0], rtol=1e-11, atol=1e-14)


@pytest.mark.parametrize("ell", [0, 1, 4])
def test_zero_data_zero_solution(solver, grid96, ell):
    prof = solver.solve_mode(ell, 0, np.zeros(grid96.N_r), 0.0)
    for arr in prof.stack:
        assert np.all(arr == 0)


def test_l0_routes_agree(bg, grid96):
    b = ((bg.r0 / grid96.r) ** 4 - 0.3 * (bg.r0 / grid96.r) ** 5) / bg.r0**2
    quad = EllipticSolver(grid96, bg).solve_mode(0, 0, b, 0.4)
    green = EllipticSolver(grid96, bg, l0_route="green").solve_mode(0, 0, b, 0.4)
    for x, y in zip(quad.stack, green.stack):
        assert np.abs(x - y).max() <= 1e-9 * np.abs(x).max()


def test_manufactured_recovery(bg, grid96):
    L = 6
    solver = EllipticSolver(grid96, bg)
    stack, F = manufactured_field(grid96, bg, L)
    sol = solver.solve_dirichlet(F, stack[0][0])
    ell, _ = mode_degrees(L)
    err = weighted_C_norm(grid96, [a - b for a, b in zip(sol, stack)], 2, 0, -0.75, ell).value
    assert err < 1e-8
    assert np.array_equal(sol[0][0], stack[0][0])


def test_single_mode_dirichlet(solver, bg, grid96):
    L = 3
    K = n_modes(L)
    h = np.zeros(K)
    k = mode_index(1, 0)
    z = grid96.r / bg.m0 - 1
    q = classical_Q1(z)
    h[k] = q[0]
    sol = solver.solve_dirichlet(np.zeros((grid96.N_r, K)), h)
    assert np.allclose(sol[0][:, k], q, rtol=1e-10)
    others = np.delete(sol[0], k, axis=1)
    assert np.all(others == 0)


def test_solution_satisfies_equation(solver, bg, grid96, rng):
    L = 4
    K = n_modes(L)
    r = grid96.r[:, None]
    F = rng.normal(size=K) * (bg.r0 / r) ** 4 + rng.normal(size=K) * (bg.r0 / r) ** 6
    h = rng.normal(size=K)
    sol = solver.solve_dirichlet(F, h)
    ell, _ = mode_degrees(L)
    res = apply_laplacian_modes(grid96, bg, sol, ell) - F
    assert np.abs(res).max() <= 1e-10 * np.abs(F).max()
    assert np.allclose(sol[0][0], h, rtol=0, atol=1e-14)


def test_stack_consistency(solver, bg, grid96):
    b = (bg.r0 / grid96.r) ** 5
    prof = solver.solve_mode(3, 1, b, 0.2)
    assert isinstance(prof, ModeProfile)
    assert prof.stack_consistency(grid96) < 1e-6


@settings(max_examples=15)
@given(st.floats(-3, 3), st.floats(-3, 3), st.integers(0, 2**31 - 1))
def test_linearity(alpha, beta, seed):
    from bartnik.schwarzschild import Background
    bg = Background(1.0, 3.0)
    grid = _GRID
    solver = _SOLVER
    rng = np.random.default_rng(seed)
    K = n_modes(3)
    r = grid.r[:, None]

    def draw():
        return rng.normal(size=K) * (bg.r0 / r) ** 4 + rng.normal(size=K) * (bg.r0 / r) ** 5, rng.normal(size=K)

    (F1, h1), (F2, h2) = draw(), draw()
    s1 = solver.solve_dirichlet(F1, h1)
    s2 = solver.solve_dirichlet(F2, h2)
    s = solver.solve_dirichlet(alpha * F1 + beta * F2, alpha * h1 + beta * h2)
    scale = max(1.0, max(np.abs(x).max() for x in s1 + s2))
    for x, y, w in zip(s, s1, s2):
        assert np.abs(x - (alpha * y + beta * w)).max() <= 1e-10 * scale * (abs(alpha) + abs(beta) + 1)


def _make_shared():
    from bartnik.schwarzschild import Background
    bg = Background(1.0, 3.0)
    g = RadialGrid(bg.r0, 64)
    return g, EllipticSolver(g, bg)


_GRID, _SOLVER = _make_shared()


@settings(max_examples=15)
@given(st.floats(0.0, 2.0), st.floats(0.0, 2.0), st.floats(0.01, 1.0), st.floats(-1.0, 1.0))
def test_maximum_principle(f0, f1, h0, tilt):
    grid, solver = _GRID, _SOLVER
    basis = SphBasis(2)
    K = n_modes(2)
    r0 = grid.r0
    F = np.zeros((grid.N_r, K))
    F[:, 0] = -(f0 * (r0 / grid.r) ** 4 + f1 * (r0 / grid.r) ** 6)
    h = np.zeros(K)
    # Y00 = 1/sqrt(4pi) and |Y10| <= sqrt(3/4pi): keep h >= 0 pointwise
    h[0] = h0 * np.sqrt(4 * np.pi)
    h[mode_index(1, 0)] = tilt * h0 * np.sqrt(4 * np.pi / 3)
    u = solver.solve_dirichlet(F, h)[0]
    vals = u @ basis.Y
    assert vals.min() >= -1e-8


@pytest.mark.parametrize("ell", [0, 1, 2, 5])
def test_decay_exponent_at_most_delta(solver, bg, grid96, ell):
    b = (bg.r0 / grid96.r) ** 4 / bg.r0**2
    prof = solver.solve_mode(ell, 0, b, 0.5)
    assert decay_exponent(grid96.r, prof.a) <= -0.75


def test_slow_forcing_raises(solver, bg, grid96):
    with pytest.raises(DecayError):
        solver.solve_mode(0, 0, (bg.r0 / grid96.r) ** 1, 0.0)
    with pytest.raises(DecayError):
        solver.solve_mode(2, 0, grid96.r / bg.r0, 0.0)
    with pytest.raises(DecayError):
        solver.solve_mode(2, 0, np.full(grid96.N_r, np.nan), 0.0)


def test_estimate_sides_trivial(solver, grid96):
    prof = solver.solve_mode(2, 0, np.zeros(grid96.N_r), 0.0)
    assert estimate_sides(grid96, prof, np.zeros(grid96.N_r), 0.0, -0.75) == (0.0, 0.0, 0.0, 0.0)


def test_estimate_ratio_finite_l1(bg):
    grid = estimate_grid(bg.r0)
    solver = EllipticSolver(grid, bg)
    rng = np.random.default_rng(7)
    b, c = random_mode_data(rng, grid)
    prof = solver.solve_mode(1, 0, b, c)
    lh, rh, lc, rc = estimate_sides(grid, prof, b, c, -0.75)
    assert np.isfinite(lh / rh) and np.isfinite(lc / rc)
    assert lh > 0 and lc > 0


def test_estimate_report_small(bg):
    rep = verify_mode_estimates(EllipticSolver(estimate_grid(bg.r0), bg), 8, 4, -0.75, seed=3)
    assert set(rep.h_ratio) == set(range(9))
    assert all(np.isfinite(v) and v > 0 for v in rep.h_ratio.values())
    assert all(np.isfinite(v) and v > 0 for v in rep.c_ratio.values())


def test_estimate_delta_range(solver):
    with pytest.raises(ValueError):
        verify_mode_estimates(solver, 4, 1, -0.5)
