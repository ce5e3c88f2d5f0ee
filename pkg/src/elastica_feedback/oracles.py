"""Independent reference checks run by the ``validate`` command."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels as K
from .elastica import RegimeProblem, build_system, solve_equilibrium
from .morphing import default_target, morph_shape
from .series import local_series, local_small_angle, mixed_linear_series
from .spectral import build_grid, interpolation_matrix


@dataclass(frozen=True)
class OracleCheck:
    name: str
    deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(np.isfinite(self.deviation) and self.deviation <= self.tolerance)


def dense_convolution(f, width, query, n_dense: int = 20001):
    """Trapezoid-rule truncated Gaussian convolution on a uniform grid."""
    t = np.linspace(0.0, 1.0, n_dense)
    wt = np.full(n_dense, 1.0 / (n_dense - 1))
    wt[[0, -1]] *= 0.5
    vals = K.gaussian(np.asarray(query)[:, None] - t[None, :], width) * (wt * f(t))[None, :]
    return vals.sum(axis=1)


def finite_difference_jacobian_error(system, theta, eps=1e-7, central=False) -> float:
    """Largest column error of J against forward (or central) differences.
    Round-off in R grows with ||d2||, so either form needs a coarse grid."""
    jac = system.jacobian(theta)
    r0 = system.residual(theta)
    worst = 0.0
    for k in range(theta.size):
        e = np.zeros_like(theta)
        e[k] = eps
        if central:
            col = (system.residual(theta + e) - system.residual(theta - e)) / (2 * eps)
        else:
            col = (system.residual(theta + e) - r0) / eps
        worst = max(worst, float(np.abs(col - jac[:, k]).max()))
    return worst


def complex_step_jacobian_error(system, theta, h=1e-30) -> float:
    """Largest relative column error of J against imag(R(theta + i h e_k)) / h,
    which is free of subtractive cancellation."""
    jac = system.jacobian(theta)
    scale = np.abs(jac).max()
    worst = 0.0
    for k in range(theta.size):
        e = np.zeros(theta.size, dtype=complex)
        e[k] = 1j * h
        col = np.imag(system.residual(theta + e)) / h
        worst = max(worst, float(np.abs(col - jac[:, k]).max()) / scale)
    return worst


def smooth_state(grid, seed: int = 0, n_terms: int = 4):
    rng = np.random.default_rng(seed)
    s = grid.nodes
    c = rng.normal(size=n_terms)
    return sum(c[m] * np.sin((m + 1) * np.pi * s / 2) / (m + 1) for m in range(n_terms))


def run_oracles(n_points: int = 129, g_eff: float = 0.1) -> list:
    grid = build_grid(n_points)
    checks = []

    sol = solve_equilibrium(RegimeProblem.local(g_eff), grid)
    checks.append(OracleCheck("small_angle_kappa0", abs(sol.kappa0 + g_eff / 2), 0.01 * abs(g_eff / 2)))
    checks.append(OracleCheck("small_angle_y_tip", abs(sol.y_tip + g_eff / 8), 0.01 * abs(g_eff / 8)))

    small = 0.05
    ser = local_series(small, 50)
    closed = local_small_angle(small, grid)
    checks.append(OracleCheck("local_series_vs_closed_form", float(np.abs(ser.evaluate(grid.nodes) - closed).max()), 1e-6))
    nonlin = solve_equilibrium(RegimeProblem.local(small), grid)
    checks.append(OracleCheck("local_series_vs_solver", float(np.abs(ser.evaluate(grid.nodes) - nonlin.theta).max()), 1e-3))

    mixed = mixed_linear_series(0.5, 0.01, 0.3, 20)
    msol = solve_equilibrium(RegimeProblem.mixed(0.5, 0.01, w_s=0.3), grid)
    dev = float(np.abs(mixed.evaluate(grid.nodes) - msol.theta).max()) / 0.5
    checks.append(OracleCheck("mixed_series_vs_solver", dev if msol.converged else np.inf, 2e-3))

    kern = K.build_kernel(grid, 0.3)
    f = lambda x: np.sin(np.pi * x)  # noqa: E731
    dev = float(np.abs(K.apply(kern, f(grid.nodes)) - dense_convolution(f, 0.3, grid.nodes)).max())
    checks.append(OracleCheck("kernel_vs_dense_convolution", dev, 1e-6))

    # forward differences with eps = 1e-7 lose everything to round-off once
    # d2 entries grow like N^4, so that form runs on a 17-point grid
    fd_grid = build_grid(17)
    fd_system = build_system(RegimeProblem.nonlocal_(2.0, 1.0, 0.2, 0.3), fd_grid)
    checks.append(
        OracleCheck("jacobian_finite_difference", finite_difference_jacobian_error(fd_system, smooth_state(fd_grid)), 1e-5)
    )
    system = build_system(RegimeProblem.nonlocal_(2.0, 1.0, 0.2, 0.3), grid)
    checks.append(OracleCheck("jacobian_complex_step", complex_step_jacobian_error(system, smooth_state(grid)), 1e-12))

    target = default_target(grid)
    res = morph_shape(target, 1.0, 1.0, 0.0, grid)
    checks.append(OracleCheck("morph_round_trip", res.error, 1e-8))

    # a coarse grid must not hide behind the interpolant: compare off-node too
    fine = np.linspace(0.0, 1.0, 201)
    dev = float(np.abs(interpolation_matrix(grid, fine) @ nonlin.theta - local_small_angle(small, fine)).max())
    checks.append(OracleCheck("local_solver_off_node", dev, 1e-3))
    return checks
