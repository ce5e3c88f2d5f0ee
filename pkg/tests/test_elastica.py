import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from elastica_feedback import kernels as K
from elastica_feedback.elastica import (
    Regime,
    RegimeError,
    RegimeProblem,
    SingularJacobian,
    assemble_jacobian,
    assemble_residual,
    build_system,
    observables,
    problem_kernels,
    shape_from_theta,
    solve_equilibrium,
)
from elastica_feedback.oracles import complex_step_jacobian_error, finite_difference_jacobian_error, smooth_state
from elastica_feedback.series import local_small_angle, mixed_linear_series
from elastica_feedback.spectral import build_grid


@pytest.fixture(scope="module")
def grid():
    return build_grid(129)


def _residual(problem, grid, theta):
    return assemble_residual(problem, grid, problem_kernels(problem, grid), theta)


# ---- problem construction


def test_regime_parameter_subsets():
    with pytest.raises(RegimeError):
        RegimeProblem(Regime.LOCAL)
    with pytest.raises(RegimeError):
        RegimeProblem(Regime.LOCAL, g_eff=1.0, a=1.0)
    with pytest.raises(RegimeError):
        RegimeProblem(Regime.NONLOCAL, g=1.0, a=1.0, w_s=0.2)
    with pytest.raises(RegimeError):
        RegimeProblem.mixed(1.0, 1.0)
    with pytest.raises(RegimeError):
        RegimeProblem.mixed(1.0, 1.0, w_s=0.2, w_a=0.2)
    with pytest.raises(RegimeError):
        RegimeProblem(Regime.GLOBAL_UNIFORM, g=1.0)


@pytest.mark.parametrize(
    "kwargs",
    [dict(g=-1.0, a=1.0, w_s=0.2, w_a=0.2), dict(g=1.0, a=-0.1, w_s=0.2, w_a=0.2),
     dict(g=1.0, a=1.0, w_s=0.0, w_a=0.2), dict(g=1.0, a=1.0, w_s=0.2, w_a=1.5),
     dict(g=np.nan, a=1.0, w_s=0.2, w_a=0.2)],
)
def test_parameter_ranges(kwargs):
    with pytest.raises(RegimeError):
        RegimeProblem.nonlocal_(**kwargs)


def test_bad_tip_condition():
    with pytest.raises(RegimeError):
        RegimeProblem.nonlocal_(1.0, 1.0, 0.2, 0.2, tip_condition="free")


def test_theta_length_must_match(grid):
    with pytest.raises(ValueError):
        _residual(RegimeProblem.local(1.0), grid, np.zeros(grid.n_points - 1))


def test_kernel_grid_mismatch(grid):
    other = build_grid(33)
    problem = RegimeProblem.mixed(1.0, 1.0, w_s=0.2)
    with pytest.raises(ValueError):
        build_system(problem, grid, problem_kernels(problem, other))


def test_moment_field_length_checked(grid):
    problem = RegimeProblem.prescribed_moment(1.0, np.zeros(10))
    with pytest.raises(ValueError):
        build_system(problem, grid)


# ---- residual


def test_straight_rod_without_gravity(grid):
    r = _residual(RegimeProblem.local(0.0), grid, np.zeros(grid.n_points))
    assert np.all(r == 0.0)


def test_straight_rod_residual_is_gravity(grid):
    r = _residual(RegimeProblem.local(1.0), grid, np.zeros(grid.n_points))
    s = grid.nodes
    np.testing.assert_allclose(r[1:-1], -(1 - s[1:-1]), atol=1e-14)
    assert r[0] == 0.0 and r[-1] == 0.0


def test_boundary_rows(grid):
    theta = smooth_state(grid, 3)
    theta[0] = 0.7
    for problem in (RegimeProblem.local(1.0), RegimeProblem.global_uniform(1.0, 0.4),
                    RegimeProblem.nonlocal_(1.0, 2.0, 0.2, 0.3)):
        r = _residual(problem, grid, theta)
        assert r[0] == 0.7
        d_end = problem.d_end or 0.0
        assert abs(r[-1] - ((grid.d1 @ theta)[-1] - d_end)) < 1e-12


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), g=st.floats(0.0, 10.0))
def test_mixed_with_zero_gain_is_local(seed, g):
    grid = build_grid(65)
    theta = smooth_state(grid, seed)
    mixed = _residual(RegimeProblem.mixed(g, 0.0, w_s=0.3), grid, theta)
    local = _residual(RegimeProblem.local(g), grid, theta)
    assert np.abs(mixed - local).max() <= 1e-14


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), g=st.floats(0.0, 10.0), a=st.floats(0.0, 50.0))
def test_sensing_actuation_swap(seed, g, a):
    grid = build_grid(65)
    theta = smooth_state(grid, seed)
    r1 = _residual(RegimeProblem.mixed(g, a, w_s=0.2), grid, theta)
    r2 = _residual(RegimeProblem.mixed(g, a, w_a=0.2), grid, theta)
    assert np.abs(r1 - r2).max() <= 1e-14 * max(1.0, np.abs(r1).max())


@settings(max_examples=25, deadline=None)
@given(seed=st.integers(0, 2**31 - 1), g=st.floats(0.0, 10.0))
def test_global_uniform_zero_slope_is_local(seed, g):
    grid = build_grid(65)
    theta = smooth_state(grid, seed)
    a = _residual(RegimeProblem.global_uniform(g, 0.0), grid, theta)
    b = _residual(RegimeProblem.local(g), grid, theta)
    assert np.abs(a - b).max() <= 1e-14


def test_nonlocal_residual_formula(grid):
    theta = smooth_state(grid, 5)
    g, a = 1.5, 3.0
    ks, ka = K.build_kernel(grid, 0.2), K.build_kernel(grid, 0.35)
    expected = grid.d2 @ theta + a * grid.d1 @ (ka.matrix @ (ks.matrix @ (grid.d1 @ theta)))
    expected -= g * (1 - grid.nodes) * np.cos(theta)
    r = _residual(RegimeProblem.nonlocal_(g, a, 0.2, 0.35), grid, theta)
    np.testing.assert_allclose(r[1:-1], expected[1:-1], atol=1e-9 * np.abs(expected).max())


def test_prescribed_moment_residual(grid):
    theta = smooth_state(grid, 6)
    m = np.sin(grid.nodes)
    r = _residual(RegimeProblem.prescribed_moment(1.0, m), grid, theta)
    expected = grid.d2 @ theta + grid.d1 @ m - (1 - grid.nodes) * np.cos(theta)
    np.testing.assert_allclose(r[1:-1], expected[1:-1], atol=1e-9)


def test_moment_tip_condition(grid):
    theta = smooth_state(grid, 7)
    problem = RegimeProblem.nonlocal_(1.0, 2.0, 0.2, 0.3, tip_condition="moment")
    r = _residual(problem, grid, theta)
    kappa = grid.d1 @ theta
    ks, ka = K.build_kernel(grid, 0.2), K.build_kernel(grid, 0.3)
    total = kappa[-1] + 2.0 * (ka.matrix @ (ks.matrix @ kappa))[-1]
    assert abs(r[-1] - total) < 1e-9


# ---- Jacobian


def test_jacobian_finite_differences():
    grid = build_grid(17)
    for problem in (RegimeProblem.local(2.0), RegimeProblem.mixed(2.0, 1.0, w_a=0.3),
                    RegimeProblem.nonlocal_(2.0, 1.0, 0.2, 0.3)):
        for seed in range(3):
            err = finite_difference_jacobian_error(build_system(problem, grid), smooth_state(grid, seed), eps=1e-7)
            assert err < 1e-5


@pytest.mark.parametrize("n", [65, 129])
def test_jacobian_complex_step(n):
    grid = build_grid(n)
    system = build_system(RegimeProblem.nonlocal_(2.0, 1.0, 0.2, 0.3), grid)
    assert complex_step_jacobian_error(system, smooth_state(grid, 1)) < 1e-12


def test_jacobian_at_straight_rod(grid):
    problem = RegimeProblem.mixed(2.0, 0.0, w_s=0.3)
    jac = assemble_jacobian(problem, grid, problem_kernels(problem, grid), np.zeros(grid.n_points))
    expected = grid.d2.copy()
    expected[0] = 0.0
    expected[0, 0] = 1.0
    expected[-1] = grid.d1[-1]
    assert np.array_equal(jac, expected)


def test_jacobian_without_gain(grid):
    theta = smooth_state(grid, 2)
    problem = RegimeProblem.nonlocal_(2.0, 0.0, 0.2, 0.3)
    jac = assemble_jacobian(problem, grid, problem_kernels(problem, grid), theta)
    idx = np.arange(1, grid.n_points - 1)
    expected = grid.d2.copy()
    expected[idx, idx] += 2.0 * (1 - grid.nodes[idx]) * np.sin(theta[idx])
    np.testing.assert_allclose(jac[1:-1], expected[1:-1], rtol=0, atol=1e-15 * np.abs(grid.d2).max())


def test_jacobian_along_newton_iterates():
    grid = build_grid(17)
    problem = RegimeProblem.nonlocal_(4.0, 5.0, 0.2, 0.3)
    system = build_system(problem, grid)
    for it in range(1, 5):
        sol = solve_equilibrium(problem, grid, max_iter=it)
        assert finite_difference_jacobian_error(system, sol.theta) < 1e-5


# ---- Newton


def test_small_angle_local(grid):
    sol = solve_equilibrium(RegimeProblem.local(0.1), grid)
    assert sol.converged
    assert abs(sol.kappa0 + 0.05) < 1e-4
    assert abs(sol.y_tip + 0.0125) < 1e-4
    assert observables(sol) == (sol.kappa0, sol.y_tip)


def test_no_gravity_converges_immediately(grid):
    sol = solve_equilibrium(RegimeProblem.local(0.0), grid)
    assert sol.converged and sol.newton_iters <= 1
    assert np.all(sol.theta == 0.0)


def test_mixed_matches_series(grid):
    sol = solve_equilibrium(RegimeProblem.mixed(0.5, 0.01, w_s=0.3), grid)
    ser = mixed_linear_series(0.5, 0.01, 0.3, 20)
    assert sol.converged
    assert np.abs(ser.evaluate(grid.nodes) - sol.theta).max() / 0.5 < 2e-3


@pytest.mark.parametrize(
    "problem",
    [RegimeProblem.local(3.0), RegimeProblem.global_uniform(2.0, -0.5),
     RegimeProblem.mixed(2.0, 1.0, w_a=0.2), RegimeProblem.nonlocal_(5.0, 20.0, 0.1, 0.1)],
    ids=["local", "global", "mixed", "nonlocal"],
)
def test_solution_invariants(grid, problem):
    sol = solve_equilibrium(problem, grid)
    assert sol.converged
    assert sol.theta[0] == 0.0
    assert abs(sol.curvature[-1] - (problem.d_end or 0.0)) < 1e-10
    assert sol.centerline_x[0] == 0.0 and sol.centerline_y[0] == 0.0
    speed = np.hypot(grid.d1 @ sol.centerline_x, grid.d1 @ sol.centerline_y)
    assert np.abs(speed - 1).max() < 1e-9
    # the residual floor sits near eps * ||d2||, which the relative
    # tolerance and the step criterion both allow for
    assert sol.residual_norm <= 1e-10 * sol.residual_scale * 100


def test_geff_collapse(grid):
    a = solve_equilibrium(RegimeProblem.local_from_gains(2.0, 0.0), grid)
    b = solve_equilibrium(RegimeProblem.local_from_gains(4.0, 1.0), grid)
    assert np.abs(a.theta - b.theta).max() <= 1e-12


def test_weak_mixed_tracks_local(grid):
    m = solve_equilibrium(RegimeProblem.mixed(1.0, 0.01, w_s=0.5), grid)
    loc = solve_equilibrium(RegimeProblem.local_from_gains(1.0, 0.01), grid)
    assert abs(m.kappa0 / loc.kappa0 - 1) < 0.01


@settings(max_examples=15, deadline=None)
@given(g=st.floats(1e-3, 0.5))
def test_sagging_sign_structure(g):
    grid = build_grid(33)
    sol = solve_equilibrium(RegimeProblem.local(g), grid)
    assert np.all(sol.theta[1:] < 0)
    assert np.all(np.diff(np.abs(sol.curvature)) <= 1e-12)


def test_solution_tracks_closed_form_off_nodes(grid):
    sol = solve_equilibrium(RegimeProblem.local(0.05), grid)
    np.testing.assert_allclose(sol.theta, local_small_angle(0.05, grid), atol=1e-4)


def test_nonconvergence_is_a_value(grid):
    sol = solve_equilibrium(RegimeProblem.local(40.0), grid, max_iter=2)
    assert not sol.converged
    assert np.all(np.isfinite(sol.theta))


@pytest.mark.filterwarnings("ignore::scipy.linalg.LinAlgWarning")
def test_singular_jacobian(grid):
    # no well-posed problem has a singular Jacobian, so zero the operator by hand
    system = build_system(RegimeProblem.local(1.0), grid)
    system.linear[:] = 0.0
    with pytest.raises(SingularJacobian):
        solve_equilibrium(RegimeProblem.local(1.0), grid, system=system)


def test_bad_tolerance(grid):
    with pytest.raises(ValueError):
        solve_equilibrium(RegimeProblem.local(1.0), grid, tol=0.0)


# ---- shape


def test_quarter_circle_observables(grid):
    sol = shape_from_theta(grid, -np.pi * grid.nodes / 2)
    assert abs(sol.kappa0 + np.pi / 2) < 1e-9
    assert abs(sol.y_tip + 2 / np.pi) < 1e-9
    assert abs(sol.x_tip - 2 / np.pi) < 1e-9


def test_straight_shape(grid):
    sol = shape_from_theta(grid, np.zeros(grid.n_points))
    assert observables(sol) == (0.0, 0.0)
    assert abs(sol.x_tip - 1) < 1e-14
