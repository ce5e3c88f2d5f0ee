"""Linear (small-angle) reference solutions used to cross-check the solver.

The modal basis sin(k_n s) with k_n = (2n + 1) pi / 2 satisfies theta(0) = 0
and theta'(1) = 0 term by term.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .kernels import gaussian
from .spectral import SpectralGrid, build_grid

DEFAULT_MODES = 50
COUPLING_POINTS = 256


def local_small_angle(g_eff: float, grid: SpectralGrid | np.ndarray) -> np.ndarray:
    """theta = G (s^2/2 - s^3/6 - s/2), the exact linear local solution."""
    s = grid.nodes if isinstance(grid, SpectralGrid) else np.asarray(grid, dtype=float)
    return g_eff * (s**2 / 2.0 - s**3 / 6.0 - s / 2.0)


def wavenumbers(n_modes: int) -> np.ndarray:
    return (2 * np.arange(n_modes) + 1) * np.pi / 2.0


@dataclass(frozen=True, eq=False)
class SeriesSolution:
    coefficients: np.ndarray
    n_modes: int
    regime: str
    params: dict
    forcing: np.ndarray = field(repr=False)

    @property
    def wavenumbers(self) -> np.ndarray:
        return wavenumbers(self.n_modes)

    def evaluate(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return np.sin(np.multiply.outer(s, self.wavenumbers)) @ self.coefficients

    def curvature(self, s) -> np.ndarray:
        k = self.wavenumbers
        return np.cos(np.multiply.outer(np.asarray(s, dtype=float), k)) @ (self.coefficients * k)

    @property
    def kappa0(self) -> float:
        return float(self.coefficients @ self.wavenumbers)

    def clamp_curvature(self, n_quad: int = COUPLING_POINTS) -> float:
        """theta'(0) from the integrated equation,
        -G/2 + A [(g_W * theta')(1) - (g_W * theta')(0)].

        The direct modal sum converges only like 1/n_modes; smoothing by the
        kernel makes this form converge much faster.
        """
        g = self.params["g"]
        a = self.params.get("a", 0.0)
        if not a:
            return -0.5 * g
        quad = build_grid(n_quad)
        s, wq = quad.nodes, quad.quad_weights
        dtheta = self.curvature(s)
        ends = gaussian(np.array([0.0, 1.0])[:, None] - s[None, :], self.params["w"]) @ (wq * dtheta)
        return float(-0.5 * g + a * (ends[1] - ends[0]))

    @property
    def y_tip(self) -> float:
        # linearised deflection: integral of theta, and cos(k_n) = 0
        return float(self.coefficients @ (1.0 / self.wavenumbers))


def _check_modes(n_modes):
    if int(n_modes) != n_modes or n_modes < 1:
        raise ValueError(f"n_modes must be a positive integer, got {n_modes}")
    return int(n_modes)


def forcing_coefficients(g: float, n_modes: int) -> np.ndarray:
    """Sine coefficients b_n of G (1 - s) on the modal basis."""
    q = wavenumbers(n_modes) * 2.0
    sign = (-1.0) ** np.arange(n_modes)
    return 4.0 * g / q - 8.0 * g * sign / q**2


def local_series(g_eff: float, n_modes: int = DEFAULT_MODES, grid=None) -> SeriesSolution:
    """Closed-form modal amplitudes of theta'' = G (1 - s)."""
    n_modes = _check_modes(n_modes)
    q = wavenumbers(n_modes) * 2.0
    sign = (-1.0) ** np.arange(n_modes)
    a = -16.0 * g_eff / q**3 + 32.0 * g_eff * sign / q**4
    return SeriesSolution(a, n_modes, "local_linear", {"g": g_eff}, forcing_coefficients(g_eff, n_modes))


def coupling_matrix(w: float, n_modes: int, n_quad: int = COUPLING_POINTS) -> np.ndarray:
    """Projection of d/ds (g_W * d/ds) onto the modal basis, without the gain.

    C[n, m] = 2 int sin(k_n s) k_m int g_W'(s - s') cos(k_m s') ds' ds,
    both integrals by Clenshaw-Curtis on ``n_quad`` points.
    """
    if not w > 0:
        raise ValueError(f"kernel width must be > 0, got {w}")
    quad = build_grid(n_quad)
    s, wq = quad.nodes, quad.quad_weights
    k = wavenumbers(n_modes)
    u = s[:, None] - s[None, :]
    dker = -(u / w**2) * gaussian(u, w) * wq[None, :]
    inner = dker @ (np.cos(np.outer(s, k)) * k[None, :])
    return 2.0 * (np.sin(np.outer(s, k)) * wq[:, None]).T @ inner


def mixed_linear_series(
    g: float, a: float, w: float, n_modes: int = DEFAULT_MODES, grid=None, *, coupling=None
) -> SeriesSolution:
    """Galerkin amplitudes of theta'' + A d/ds (g_W * theta') = G (1 - s)."""
    n_modes = _check_modes(n_modes)
    k = wavenumbers(n_modes)
    b = forcing_coefficients(g, n_modes)
    c = coupling_matrix(w, n_modes) if coupling is None else coupling
    system = np.diag(-(k**2)) + a * c
    lu, piv = scipy.linalg.lu_factor(system)
    if np.min(np.abs(np.diag(lu))) < 1e-14:
        raise np.linalg.LinAlgError("modal system is singular")
    coeffs = scipy.linalg.lu_solve((lu, piv), b)
    return SeriesSolution(coeffs, n_modes, "mixed_linear", {"g": g, "a": a, "w": w}, b)


def projected_residual(series: SeriesSolution, n_quad: int = 2049) -> np.ndarray:
    """Weak-form residual of the linear equation against each basis mode.

    Evaluated with an independent fine quadrature after integrating the
    second-derivative term by parts, so it checks the amplitudes rather
    than restating the modal system.
    """
    quad = build_grid(n_quad)
    s, wq = quad.nodes, quad.quad_weights
    k = series.wavenumbers
    g = series.params["g"]
    a = series.params.get("a", 0.0)
    # int sin(k_n s) theta'' ds = [sin theta']_0^1 - k_n int cos theta' ds; theta'(1) = 0
    dtheta = series.curvature(s)
    cos_basis = np.cos(np.outer(s, k))
    sin_basis = np.sin(np.outer(s, k))
    second = -k * ((cos_basis * wq[:, None]).T @ dtheta)
    force = (sin_basis * wq[:, None]).T @ (g * (1.0 - s))
    res = second - force
    if a:
        w = series.params["w"]
        u = s[:, None] - s[None, :]
        smoothed = (gaussian(u, w) * wq[None, :]) @ dtheta
        # int sin(k_n s) (g*theta')' ds = sin(k_n) (g*theta')(1) - k_n int cos (g*theta')
        tip = np.sin(k) * smoothed[-1]
        res += a * (tip - k * ((cos_basis * wq[:, None]).T @ smoothed))
    return 2.0 * res
