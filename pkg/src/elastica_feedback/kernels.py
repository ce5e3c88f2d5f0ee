"""Gaussian sensing/actuation kernels discretised on a spectral grid.

A finite kernel is a dense matrix ``K`` with ``K[j, k] ~ w_k g(s_j - s_k)``
so that ``K @ v`` approximates the truncated convolution over [0, 1].
The Gaussian is normalised on the infinite line; near the ends of the rod
the effective gain drops towards one half.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Union

import numpy as np

from .spectral import SpectralGrid, interpolation_matrix

DELTA = "delta"
UNIFORM = "uniform"


def gaussian(u, width: float):
    return np.exp(-0.5 * (np.asarray(u) / width) ** 2) / np.sqrt(2.0 * np.pi * width**2)


@dataclass(frozen=True, eq=False)
class GaussianKernel:
    width: float
    grid: SpectralGrid
    matrix: np.ndarray
    quadrature: str = "nystrom"
    renormalized: bool = False

    def __repr__(self) -> str:
        return (
            f"GaussianKernel(width={self.width}, n_points={self.grid.n_points}, "
            f"quadrature={self.quadrature!r})"
        )


@dataclass(frozen=True)
class KernelLimit:
    """Limiting kernels that carry no Gaussian matrix.

    ``delta`` is the identity map. ``uniform`` is the flat 1/L kernel: every
    node receives the integral of the input, which for a curvature field is
    the end-angle difference theta(1) - theta(0).
    """

    tag: str

    def __post_init__(self):
        if self.tag not in (DELTA, UNIFORM):
            raise ValueError(f"unknown kernel limit {self.tag!r}")


Kernel = Union[GaussianKernel, KernelLimit]

delta_kernel = KernelLimit(DELTA)
uniform_kernel = KernelLimit(UNIFORM)


def _product_matrix(grid: SpectralGrid, width: float) -> np.ndarray:
    # integrate g(s_j - s') against each Lagrange cardinal function with
    # composite Gauss-Legendre panels narrower than the kernel
    panels = max(32, int(np.ceil(2.0 / width)), 2 * grid.n_points)
    gx, gw = np.polynomial.legendre.leggauss(10)
    edges = np.linspace(0.0, 1.0, panels + 1)
    h = np.diff(edges)
    pts = (edges[:-1, None] + 0.5 * h[:, None] * (gx[None, :] + 1.0)).ravel()
    wts = (0.5 * h[:, None] * gw[None, :]).ravel()
    lagrange = interpolation_matrix(grid, pts)
    g = gaussian(grid.nodes[:, None] - pts[None, :], width)
    return (g * wts[None, :]) @ lagrange


def build_kernel(
    grid: SpectralGrid,
    width: float,
    *,
    quadrature: str = "nystrom",
    renormalize: bool = False,
) -> GaussianKernel:
    """Discretise a Gaussian of the given scaled width on ``grid``.

    ``quadrature="nystrom"`` samples the kernel at the nodes and folds in the
    Clenshaw-Curtis weights. ``"product"`` integrates the kernel exactly
    against the node interpolant, which stays accurate when the width is
    below the node spacing. ``renormalize`` rescales every row to unit mass
    (off by default).
    """
    if not np.isfinite(width) or width <= 0.0:
        raise ValueError(f"kernel width must be > 0 (use delta_kernel for the local limit), got {width}")
    s = grid.nodes
    if quadrature == "nystrom":
        m = grid.quad_weights[None, :] * gaussian(s[:, None] - s[None, :], width)
    elif quadrature == "product":
        m = _product_matrix(grid, width)
    else:
        raise ValueError(f"unknown quadrature {quadrature!r}")
    if renormalize:
        m = m / m.sum(axis=1, keepdims=True)
    m.setflags(write=False)
    return GaussianKernel(
        width=float(width), grid=grid, matrix=m, quadrature=quadrature, renormalized=renormalize
    )


def kernel_for(grid: SpectralGrid, width, **kwargs) -> Kernel:
    """Map a width spec to a kernel: None/0/"delta" -> delta, "uniform" -> uniform."""
    if width is None or width == DELTA or (not isinstance(width, str) and width == 0):
        return delta_kernel
    if width == UNIFORM:
        return uniform_kernel
    return build_kernel(grid, float(width), **kwargs)


def kernel_matrix(kernel: Kernel, grid: SpectralGrid) -> np.ndarray | None:
    """Dense operator for ``kernel`` on ``grid``; None stands for identity."""
    if isinstance(kernel, GaussianKernel):
        if kernel.grid is not grid and kernel.grid.n_points != grid.n_points:
            raise ValueError("kernel was built on a different grid")
        return kernel.matrix
    if kernel.tag == DELTA:
        return None
    return np.tile(grid.quad_weights, (grid.n_points, 1))


def apply(kernel: Kernel, values, grid: SpectralGrid | None = None) -> np.ndarray:
    """Filter a node vector through ``kernel``."""
    v = np.asarray(values, dtype=float)
    if isinstance(kernel, GaussianKernel):
        kernel.grid.check(v)
        return kernel.matrix @ v
    if kernel.tag == DELTA:
        return v.copy()
    if grid is None:
        raise ValueError("the uniform kernel needs the grid to integrate over")
    grid.check(v)
    return np.full(grid.n_points, grid.quad_weights @ v)


def sensing_function(kernel: Kernel, curvature, k_s: float, grid: SpectralGrid | None = None):
    """S = k_s * (G_s * kappa)."""
    return k_s * apply(kernel, curvature, grid)


def feedback_function(kernel: Kernel, sensed, k_a: float, grid: SpectralGrid | None = None):
    """F = k_a * (G_a * S); the actuation moment is taken equal to F."""
    return k_a * apply(kernel, sensed, grid)


def total_variation(v) -> float:
    return float(np.abs(np.diff(np.asarray(v, dtype=float))).sum())
