"""Spectral solver for a gravity-loaded clamped rod with curvature feedback."""

from .spectral import SpectralGrid, build_grid, cumulative_integral, integrate, interpolate
from .kernels import GaussianKernel, build_kernel, delta_kernel, kernel_for, uniform_kernel
from .elastica import (
    EquilibriumSolution,
    Regime,
    RegimeError,
    RegimeProblem,
    SingularJacobian,
    build_system,
    solve_equilibrium,
)

__version__ = "0.1.0"
