"""Equilibrium of the clamped-free elastica with curvature feedback.

The discrete residual on the collocation grid is

    R(theta) = d2 theta + A d1 Ka Ks d1 theta + d1 m_a - G (1 - s) cos(theta)

with the first row replaced by theta(0) = 0 and the last row by the
free-end condition. Each regime switches on a subset of these terms.
"""

from __future__ import annotations

import dataclasses
import enum
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
import scipy.linalg

from . import kernels as K
from .spectral import SpectralGrid, cumulative_integral


class Regime(str, enum.Enum):
    LOCAL = "local"
    GLOBAL_UNIFORM = "global_uniform"
    MIXED = "mixed"
    NONLOCAL = "nonlocal"
    PRESCRIBED_MOMENT = "prescribed_moment"


TIP_CONDITIONS = ("curvature", "moment")


class RegimeError(ValueError):
    """The parameter set does not match the regime."""


class SingularJacobian(RuntimeError):
    pass


_REQUIRED = {
    Regime.LOCAL: {"g_eff"},
    Regime.GLOBAL_UNIFORM: {"g", "d_end"},
    Regime.MIXED: {"g", "a"},
    Regime.NONLOCAL: {"g", "a", "w_s", "w_a"},
    Regime.PRESCRIBED_MOMENT: {"g", "m_a_field"},
}
_OPTIONAL = {
    Regime.LOCAL: set(),
    Regime.GLOBAL_UNIFORM: set(),
    Regime.MIXED: {"w_s", "w_a"},
    Regime.NONLOCAL: set(),
    Regime.PRESCRIBED_MOMENT: {"d_end"},
}
_PARAMS = ("g_eff", "g", "a", "w_s", "w_a", "d_end", "m_a_field")


@dataclass(frozen=True, eq=False)
class RegimeProblem:
    """One of the four feedback regimes (or an open-loop prescribed moment)
    together with its dimensionless parameters.

    Construct through the classmethods; unused parameters must stay None.
    ``tip_condition="moment"`` replaces the free-end condition kappa(1) = 0
    by zero total (passive + actuation) moment at the tip.
    """

    regime: Regime
    g_eff: float | None = None
    g: float | None = None
    a: float | None = None
    w_s: float | None = None
    w_a: float | None = None
    d_end: float | None = None
    m_a_field: np.ndarray | None = field(default=None, repr=False)
    tip_condition: str = "curvature"

    def __post_init__(self):
        object.__setattr__(self, "regime", Regime(self.regime))
        present = {p for p in _PARAMS if getattr(self, p) is not None}
        required = _REQUIRED[self.regime]
        allowed = required | _OPTIONAL[self.regime]
        missing = required - present
        extra = present - allowed
        if missing:
            raise RegimeError(f"{self.regime.value} regime needs {sorted(missing)}")
        if extra:
            raise RegimeError(f"{self.regime.value} regime does not take {sorted(extra)}")
        if self.regime is Regime.MIXED and (self.w_s is None) == (self.w_a is None):
            raise RegimeError("mixed regime needs exactly one finite width (w_s or w_a)")
        for name in ("g_eff", "g", "a"):
            v = getattr(self, name)
            if v is not None and not (np.isfinite(v) and v >= 0):
                raise RegimeError(f"{name} must be finite and >= 0, got {v}")
        for name in ("w_s", "w_a"):
            v = getattr(self, name)
            if v is not None and not (0 < v <= 1):
                raise RegimeError(f"{name} must lie in (0, 1], got {v}")
        if self.tip_condition not in TIP_CONDITIONS:
            raise RegimeError(f"tip_condition must be one of {TIP_CONDITIONS}")
        if self.m_a_field is not None:
            m = np.array(self.m_a_field, dtype=float)
            m.setflags(write=False)
            object.__setattr__(self, "m_a_field", m)

    @classmethod
    def local(cls, g_eff: float) -> "RegimeProblem":
        return cls(Regime.LOCAL, g_eff=g_eff)

    @classmethod
    def local_from_gains(cls, g: float, a: float) -> "RegimeProblem":
        """Local regime with G_eff = G / (1 + A)."""
        return cls(Regime.LOCAL, g_eff=g / (1.0 + a))

    @classmethod
    def global_uniform(cls, g: float, d_end: float = 0.0) -> "RegimeProblem":
        return cls(Regime.GLOBAL_UNIFORM, g=g, d_end=d_end)

    @classmethod
    def mixed(cls, g, a, *, w_s=None, w_a=None, tip_condition="curvature") -> "RegimeProblem":
        return cls(Regime.MIXED, g=g, a=a, w_s=w_s, w_a=w_a, tip_condition=tip_condition)

    @classmethod
    def nonlocal_(cls, g, a, w_s, w_a, tip_condition="curvature") -> "RegimeProblem":
        return cls(Regime.NONLOCAL, g=g, a=a, w_s=w_s, w_a=w_a, tip_condition=tip_condition)

    @classmethod
    def prescribed_moment(cls, g, m_a_field, d_end=None, tip_condition="curvature") -> "RegimeProblem":
        return cls(
            Regime.PRESCRIBED_MOMENT, g=g, m_a_field=m_a_field, d_end=d_end, tip_condition=tip_condition
        )

    @property
    def gravity(self) -> float:
        return self.g_eff if self.regime is Regime.LOCAL else self.g

    @property
    def has_feedback(self) -> bool:
        return self.regime in (Regime.MIXED, Regime.NONLOCAL)

    def replace(self, **changes) -> "RegimeProblem":
        return dataclasses.replace(self, **changes)

    def params(self) -> dict:
        return {p: getattr(self, p) for p in _PARAMS[:-1] if getattr(self, p) is not None}


class KernelPair(NamedTuple):
    sensing: K.Kernel
    actuation: K.Kernel


def problem_kernels(problem: RegimeProblem, grid: SpectralGrid, **kernel_options) -> KernelPair:
    """Sensing and actuation kernels demanded by the regime."""
    if problem.regime is Regime.GLOBAL_UNIFORM:
        return KernelPair(K.uniform_kernel, K.uniform_kernel)
    if not problem.has_feedback:
        return KernelPair(K.delta_kernel, K.delta_kernel)
    return KernelPair(
        K.kernel_for(grid, problem.w_s, **kernel_options),
        K.kernel_for(grid, problem.w_a, **kernel_options),
    )


def feedback_operator(grid: SpectralGrid, kernels: KernelPair) -> np.ndarray:
    """d1 Ka Ks d1 without the gain; delta kernels are skipped, not multiplied."""
    op = grid.d1
    for kern in (kernels.sensing, kernels.actuation):
        m = K.kernel_matrix(kern, grid)
        if m is not None:
            op = m @ op
    return grid.d1 @ op, op


@dataclass(eq=False)
class ElasticaSystem:
    """Discretised residual and Jacobian for one problem on one grid.

    The constant linear part (including the boundary rows) is assembled
    once; ``with_problem`` reuses the kernel products when only the gains
    or gravity change.
    """

    problem: RegimeProblem
    grid: SpectralGrid
    kernels: KernelPair
    linear: np.ndarray
    forcing: np.ndarray
    tip_value: float
    _fb: np.ndarray | None = field(default=None, repr=False)
    _fb_tip: np.ndarray | None = field(default=None, repr=False)
    kernel_options: dict = field(default_factory=dict, repr=False)

    @property
    def gravity_profile(self) -> np.ndarray:
        return self.problem.gravity * (1.0 - self.grid.nodes)

    def residual(self, theta) -> np.ndarray:
        # complex input is kept so complex-step derivatives work
        self.grid.check(np.real(theta), "theta")
        th = np.asarray(theta)
        if not np.iscomplexobj(th):
            th = th.astype(float)
        r = self.linear @ th + self.forcing - self.gravity_profile * np.cos(th)
        r[0] = th[0]
        r[-1] = self.linear[-1] @ th - self.tip_value
        return r

    def jacobian(self, theta) -> np.ndarray:
        th = self.grid.check(theta, "theta")
        j = self.linear.copy()
        idx = np.arange(1, self.grid.n_points - 1)
        j[idx, idx] += self.gravity_profile[idx] * np.sin(th[idx])
        return j

    def residual_scale(self, theta) -> float:
        """Magnitude of the individual terms, used to make the Newton
        tolerance relative for strongly curved states."""
        th = np.asarray(theta)
        return max(
            1.0,
            float(np.abs(self.grid.d2 @ th).max()),
            float(np.abs(self.forcing).max()),
            float(self.problem.gravity),
        )

    def with_problem(self, problem: RegimeProblem) -> "ElasticaSystem":
        same_kernels = (
            problem.regime is self.problem.regime
            and problem.w_s == self.problem.w_s
            and problem.w_a == self.problem.w_a
            and problem.tip_condition == self.problem.tip_condition
            and problem.m_a_field is None
            and self.problem.m_a_field is None
        )
        if not same_kernels:
            return build_system(problem, self.grid, **self.kernel_options)
        return _assemble(problem, self.grid, self.kernels, self._fb, self._fb_tip, self.kernel_options)


def _assemble(problem, grid, kernels, fb, fb_tip, kernel_options=None) -> ElasticaSystem:
    n = grid.n_points
    lin = grid.d2.copy()
    if problem.has_feedback and problem.a != 0.0:
        lin += problem.a * fb
    forcing = np.zeros(n)
    tip_row = grid.d1[-1].copy()
    tip_value = 0.0
    if problem.regime is Regime.PRESCRIBED_MOMENT:
        m = grid.check(problem.m_a_field, "m_a_field")
        forcing = grid.d1 @ m
        if problem.tip_condition == "moment":
            tip_value = -m[-1]
    if problem.d_end is not None and problem.tip_condition == "curvature":
        tip_value = float(problem.d_end)
    if problem.has_feedback and problem.tip_condition == "moment":
        tip_row = tip_row + problem.a * fb_tip
    lin[0] = 0.0
    lin[0, 0] = 1.0
    lin[-1] = tip_row
    forcing[0] = forcing[-1] = 0.0
    return ElasticaSystem(problem, grid, kernels, lin, forcing, tip_value, fb, fb_tip, dict(kernel_options or {}))


def build_system(
    problem: RegimeProblem, grid: SpectralGrid, kernels: KernelPair | None = None, **kernel_options
) -> ElasticaSystem:
    if kernels is None:
        kernels = problem_kernels(problem, grid, **kernel_options)
    for kern in kernels:
        if isinstance(kern, K.GaussianKernel) and kern.grid.n_points != grid.n_points:
            raise ValueError("kernel was built on a different grid")
    fb = fb_tip = None
    if problem.has_feedback:
        fb, inner = feedback_operator(grid, kernels)
        fb_tip = inner[-1]
    return _assemble(problem, grid, kernels, fb, fb_tip, kernel_options)


def assemble_residual(problem, grid, kernels, theta) -> np.ndarray:
    return build_system(problem, grid, kernels).residual(theta)


def assemble_jacobian(problem, grid, kernels, theta) -> np.ndarray:
    return build_system(problem, grid, kernels).jacobian(theta)


@dataclass(eq=False)
class EquilibriumSolution:
    theta: np.ndarray
    curvature: np.ndarray
    centerline_x: np.ndarray
    centerline_y: np.ndarray
    kappa0: float
    y_tip: float
    converged: bool
    newton_iters: int
    residual_norm: float
    residual_scale: float = 1.0

    @property
    def x_tip(self) -> float:
        return float(self.centerline_x[-1])


def shape_from_theta(grid: SpectralGrid, theta, **status) -> EquilibriumSolution:
    th = np.array(grid.check(theta, "theta"), dtype=float)
    kappa = grid.d1 @ th
    x = cumulative_integral(grid, np.cos(th))
    y = cumulative_integral(grid, np.sin(th))
    status.setdefault("converged", True)
    status.setdefault("newton_iters", 0)
    status.setdefault("residual_norm", 0.0)
    return EquilibriumSolution(
        theta=th,
        curvature=kappa,
        centerline_x=x,
        centerline_y=y,
        kappa0=float(kappa[0]),
        y_tip=float(y[-1]),
        **status,
    )


def _lu(jac):
    lu, piv = scipy.linalg.lu_factor(jac, check_finite=False)
    if np.min(np.abs(np.diag(lu))) < 1e-14:
        raise SingularJacobian("Jacobian LU pivot below 1e-14")
    return lu, piv


def solve_equilibrium(
    problem: RegimeProblem,
    grid: SpectralGrid,
    kernels: KernelPair | None = None,
    theta_init=None,
    tol: float = 1e-10,
    max_iter: int = 50,
    *,
    damping_levels: int = 8,
    system: ElasticaSystem | None = None,
) -> EquilibriumSolution:
    """Damped Newton iteration from ``theta_init`` (straight rod by default).

    Convergence means ||R||_inf <= tol * scale, where scale is at least one
    and grows with the size of the discrete second derivative, or a full
    Newton step no larger than tol * (1 + ||theta||_inf). A failed
    solve is not an error: the best iterate comes back with
    ``converged=False``.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    if system is None:
        system = build_system(problem, grid, kernels)
    theta = np.zeros(grid.n_points) if theta_init is None else np.array(theta_init, dtype=float)
    grid.check(theta, "theta_init")
    theta[0] = 0.0

    r = system.residual(theta)
    rn = float(np.abs(r).max())
    scale = system.residual_scale(theta)
    best = (rn / scale, theta, rn, scale)
    converged = False
    it = 0
    while it < max_iter:
        if rn <= tol * scale:
            converged = True
            break
        it += 1
        step = scipy.linalg.lu_solve(_lu(system.jacobian(theta)), -r, check_finite=False)
        step_norm = float(np.abs(step).max())
        if step_norm <= tol * (1.0 + float(np.abs(theta).max())):
            # the residual has hit its round-off floor; the state no longer moves
            theta = theta + step
            r = system.residual(theta)
            rn = float(np.abs(r).max())
            scale = system.residual_scale(theta)
            converged = True
            break
        lam = 1.0
        for _ in range(damping_levels + 1):
            trial = theta + lam * step
            r_trial = system.residual(trial)
            rn_trial = float(np.abs(r_trial).max())
            if np.isfinite(rn_trial) and rn_trial < rn:
                break
            lam *= 0.5
        else:
            break
        theta, r, rn = trial, r_trial, rn_trial
        scale = system.residual_scale(theta)
        if rn / scale < best[0]:
            best = (rn / scale, theta, rn, scale)
    if not converged and it:
        _, theta, rn, scale = best
        converged = rn <= tol * scale
    # the clamp row is exact; LU round-off must not leak into it
    theta = np.array(theta)
    theta[0] = 0.0
    return shape_from_theta(
        grid,
        theta,
        converged=bool(converged),
        newton_iters=it,
        residual_norm=rn,
        residual_scale=scale,
    )


def observables(solution: EquilibriumSolution) -> tuple[float, float]:
    """Clamped-end curvature and free-end deflection."""
    return solution.kappa0, solution.y_tip
