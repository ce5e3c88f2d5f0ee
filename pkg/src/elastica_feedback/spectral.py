"""Chebyshev collocation primitives on the unit interval [0, 1].

Nodes are stored in ascending arc-length order, so index 0 is the clamped
end and index -1 is the free end.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MIN_POINTS = 4


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.ascontiguousarray(a, dtype=float)
    a.setflags(write=False)
    return a


def cheb_lobatto(n: int) -> tuple[np.ndarray, np.ndarray]:
    """Chebyshev-Gauss-Lobatto points x_j = cos(pi j / n) and the
    differentiation matrix on [-1, 1] (descending order)."""
    j = np.arange(n + 1)
    x = np.cos(np.pi * j / n)
    c = np.ones(n + 1)
    c[0] = c[-1] = 2.0
    c *= (-1.0) ** j
    dx = x[:, None] - x[None, :]
    d = np.outer(c, 1.0 / c) / (dx + np.eye(n + 1))
    # negative-sum trick for the diagonal
    d -= np.diag(d.sum(axis=1))
    return x, d


def clenshaw_curtis_weights(n: int) -> np.ndarray:
    """Clenshaw-Curtis weights on [-1, 1] for the n+1 Lobatto points."""
    theta = np.pi * np.arange(n + 1) / n
    w = np.zeros(n + 1)
    inner = np.arange(1, n)
    v = np.ones(n - 1)
    if n % 2 == 0:
        w[0] = w[n] = 1.0 / (n**2 - 1)
        for k in range(1, n // 2):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
        v -= np.cos(n * theta[inner]) / (n**2 - 1)
    else:
        w[0] = w[n] = 1.0 / n**2
        for k in range(1, (n - 1) // 2 + 1):
            v -= 2.0 * np.cos(2 * k * theta[inner]) / (4 * k**2 - 1)
    w[inner] = 2.0 * v / n
    return w


@dataclass(frozen=True, eq=False)
class SpectralGrid:
    """Collocation grid with differentiation, quadrature and antiderivative
    operators. All arrays are read-only, so a grid can be shared freely."""

    n_points: int
    nodes: np.ndarray
    d1: np.ndarray
    d2: np.ndarray
    quad_weights: np.ndarray
    bary_weights: np.ndarray
    cumint_matrix: np.ndarray

    def __repr__(self) -> str:
        return f"SpectralGrid(n_points={self.n_points})"

    def check(self, values, name: str = "values") -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.shape != (self.n_points,):
            raise ValueError(
                f"{name} has shape {v.shape}, expected ({self.n_points},)"
            )
        return v


def build_grid(n_points: int) -> SpectralGrid:
    if int(n_points) != n_points or n_points < MIN_POINTS:
        raise ValueError(f"n_points must be an integer >= {MIN_POINTS}, got {n_points}")
    n_points = int(n_points)
    n = n_points - 1
    x, d = cheb_lobatto(n)
    w = clenshaw_curtis_weights(n)

    # reverse to ascending s = (1 + x) / 2; d/ds = 2 d/dx
    nodes = (1.0 + x[::-1]) / 2.0
    nodes[0], nodes[-1] = 0.0, 1.0
    d1 = 2.0 * d[::-1, ::-1]
    d2 = d1 @ d1
    quad = w[::-1] / 2.0

    bary = (-1.0) ** np.arange(n_points)
    bary[0] *= 0.5
    bary[-1] *= 0.5

    # antiderivative: solve d1 F = f on rows 1..N with F(0) = 0 pinned
    pinned = d1.copy()
    pinned[0] = 0.0
    pinned[0, 0] = 1.0
    rhs_map = np.eye(n_points)
    rhs_map[0, 0] = 0.0
    cumint = np.linalg.solve(pinned, rhs_map)
    cumint[0] = 0.0

    return SpectralGrid(
        n_points=n_points,
        nodes=_readonly(nodes),
        d1=_readonly(d1),
        d2=_readonly(d2),
        quad_weights=_readonly(quad),
        bary_weights=_readonly(bary),
        cumint_matrix=_readonly(cumint),
    )


def integrate(grid: SpectralGrid, values) -> float:
    """Clenshaw-Curtis approximation of the integral over [0, 1]."""
    v = grid.check(values)
    return float(grid.quad_weights @ v)


def cumulative_integral(grid: SpectralGrid, values) -> np.ndarray:
    """F(s_j) = integral of f from 0 to s_j, with F(0) = 0."""
    v = grid.check(values)
    return grid.cumint_matrix @ v


def interpolation_matrix(grid: SpectralGrid, query) -> np.ndarray:
    """Rows of barycentric interpolation weights for each query point."""
    q = np.atleast_1d(np.asarray(query, dtype=float))
    if np.any(q < 0.0) or np.any(q > 1.0) or not np.all(np.isfinite(q)):
        raise ValueError("interpolation query must lie in [0, 1]")
    diff = q[:, None] - grid.nodes[None, :]
    exact = diff == 0.0
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = grid.bary_weights[None, :] / diff
    hit = exact.any(axis=1)
    terms[hit] = 0.0
    terms[exact] = 1.0
    terms[~hit] /= terms[~hit].sum(axis=1, keepdims=True)
    return terms


def interpolate(grid: SpectralGrid, values, query):
    """Barycentric Chebyshev interpolation; scalar in, scalar out."""
    v = grid.check(values)
    out = interpolation_matrix(grid, query) @ v
    if np.ndim(query) == 0:
        return float(out[0])
    return out
