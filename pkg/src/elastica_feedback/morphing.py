"""Shape morphing with filtered sensing and actuation.

Pipeline for one (K, W) cell: sense the target curvature through a kernel
of width W, integrate to a sensed angle, compute the moment that would hold
that angle in equilibrium, filter it through the actuation kernel, scale by
K and solve for the shape the rod actually takes.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import least_squares

from . import kernels as K
from .elastica import EquilibriumSolution, RegimeProblem, solve_equilibrium
from .spectral import SpectralGrid, build_grid, cumulative_integral, integrate


class EmptyColumn(ValueError):
    """Every width failed at some gain, so no optimum exists there."""


class DegenerateFit(ValueError):
    """The locus is too short in (K - K*) to pin down an exponent."""


def reference_curvature(s):
    """Coiled target used for the morphing study: 3 (s + 1)^3 - (2 s - 3)^2."""
    s = np.asarray(s, dtype=float)
    return 3.0 * (s + 1.0) ** 3 - (2.0 * s - 3.0) ** 2


@dataclass(frozen=True, eq=False)
class TargetShape:
    curvature: np.ndarray
    theta: np.ndarray
    x: np.ndarray
    y: np.ndarray

    @classmethod
    def from_curvature(cls, grid: SpectralGrid, curvature) -> "TargetShape":
        kappa = curvature(grid.nodes) if callable(curvature) else grid.check(curvature, "curvature")
        kappa = np.array(kappa, dtype=float)
        theta = cumulative_integral(grid, kappa)
        return cls(
            curvature=kappa,
            theta=theta,
            x=cumulative_integral(grid, np.cos(theta)),
            y=cumulative_integral(grid, np.sin(theta)),
        )


def default_target(grid: SpectralGrid) -> TargetShape:
    return TargetShape.from_curvature(grid, reference_curvature)


def sensed_target(target: TargetShape, kernel_s: K.Kernel, grid: SpectralGrid | None = None) -> np.ndarray:
    """Target curvature as seen through the sensing kernel."""
    return K.apply(kernel_s, target.curvature, grid)


def sensed_angle(grid: SpectralGrid, sensed_curvature) -> np.ndarray:
    return cumulative_integral(grid, sensed_curvature)


def ideal_feedback(sensed_theta, g: float, grid: SpectralGrid) -> np.ndarray:
    """Moment F with F(0) = 0 that balances gravity and bending for the
    sensed angle: F(s) = int_0^s [G (1 - s') cos(theta) - theta''] ds'."""
    th = grid.check(sensed_theta, "sensed_theta")
    return cumulative_integral(grid, g * (1.0 - grid.nodes) * np.cos(th) - grid.d2 @ th)


def free_end_feedback(feedback, sensed_curvature) -> np.ndarray:
    """Shift F by the constant that makes the total moment vanish at the
    free end, theta'(1) + m(1) = 0, for the sensed shape. Only the constant
    changes; its derivative, which enters the bulk equation, does not."""
    f = np.asarray(feedback, dtype=float)
    return f - f[-1] - float(sensed_curvature[-1])


def actuated_moment(feedback, kernel_a: K.Kernel, gain_k: float, grid: SpectralGrid | None = None) -> np.ndarray:
    return gain_k * K.apply(kernel_a, feedback, grid)


def shape_error(achieved: EquilibriumSolution, target: TargetShape, grid: SpectralGrid) -> float:
    """Clenshaw-Curtis integral of the squared centerline distance."""
    dx = grid.check(achieved.centerline_x) - target.x
    dy = grid.check(achieved.centerline_y) - target.y
    return integrate(grid, dx**2 + dy**2)


@dataclass
class MorphResult:
    gain_k: float
    width_w: float
    error: float
    achieved_shape: EquilibriumSolution | None = field(default=None, repr=False)


@dataclass(frozen=True)
class MorphConfig:
    tol: float = 1e-10
    max_iter: int = 50
    halvings: int = 6
    quadrature: str = "nystrom"
    # sensing width defaults to the shared width W
    sensing_width: float | None = None


@dataclass(frozen=True, eq=False)
class MorphCell:
    """Everything about one width that does not depend on the gain."""

    width: float
    sensed_curvature: np.ndarray
    sensed_theta: np.ndarray
    filtered_feedback: np.ndarray


def prepare_width(target, g, width, grid, config: MorphConfig | None = None) -> MorphCell:
    """W <= 0 or None means the delta (local) kernel."""
    cfg = config or MorphConfig()
    w_s = cfg.sensing_width if cfg.sensing_width is not None else width
    ks = K.kernel_for(grid, w_s if w_s and w_s > 0 else None, quadrature=cfg.quadrature)
    ka = K.kernel_for(grid, width if width and width > 0 else None, quadrature=cfg.quadrature)
    kappa = sensed_target(target, ks, grid)
    theta = sensed_angle(grid, kappa)
    feedback = free_end_feedback(ideal_feedback(theta, g, grid), kappa)
    return MorphCell(float(width or 0.0), kappa, theta, actuated_moment(feedback, ka, 1.0, grid))


def morph_problem(g: float, cell: MorphCell, gain_k: float) -> RegimeProblem:
    """Open-loop solve with the filtered moment and a moment-free tip, so
    K = 1 with delta kernels is exact and K = 0 leaves the rod passive."""
    return RegimeProblem.prescribed_moment(g, gain_k * cell.filtered_feedback, tip_condition="moment")


def morph_shape(target, g, gain_k, width, grid, config=None, theta_init=None) -> MorphResult:
    cfg = config or MorphConfig()
    cell = prepare_width(target, g, width, grid, cfg)
    seed = cell.sensed_theta if theta_init is None else theta_init
    sol = solve_equilibrium(morph_problem(g, cell, gain_k), grid, theta_init=seed, tol=cfg.tol, max_iter=cfg.max_iter)
    err = shape_error(sol, target, grid) if sol.converged else np.nan
    return MorphResult(gain_k, cell.width, err, sol)


def _column(target, g, gains, width, grid, cfg):
    """Errors for one width along all gains, continued outward from the
    gain closest to one (where the sensed shape is a good seed)."""
    cell = prepare_width(target, g, width, grid, cfg)
    out = np.full(gains.size, np.nan)
    start = int(np.argmin(np.abs(np.log(gains))))
    for order in (range(start, gains.size), range(start, -1, -1)):
        theta, k_prev = cell.sensed_theta, None
        for i in order:
            sol = _reach(g, cell, grid, cfg, theta, k_prev, gains[i])
            if sol is None:
                continue
            theta, k_prev = sol.theta, gains[i]
            out[i] = shape_error(sol, target, grid)
    return out


def _reach(g, cell, grid, cfg, theta, k_from, k_to):
    def solve(k, th):
        prob = morph_problem(g, cell, k)
        return solve_equilibrium(prob, grid, theta_init=th, tol=cfg.tol, max_iter=cfg.max_iter)

    sol = solve(k_to, theta)
    if sol.converged or k_from is None:
        return sol if sol.converged else None
    # sub-step halving in the gain
    h, cur, level = (k_to - k_from) / 2.0, k_from, 1
    while level <= cfg.halvings:
        nxt = k_to if abs(k_to - cur) <= abs(h) * (1 + 1e-12) else cur + h
        trial = solve(nxt, theta)
        if trial.converged:
            cur, theta = nxt, trial.theta
            if nxt == k_to:
                return trial
        else:
            level += 1
            h /= 2.0
    return None


def _column_worker(args):
    curvature, g, gains, width, n_points, cfg = args
    grid = build_grid(n_points)
    return _column(TargetShape.from_curvature(grid, curvature), g, gains, width, grid, cfg)


@dataclass(eq=False)
class ErrorLandscape:
    gains: np.ndarray
    widths: np.ndarray
    errors: np.ndarray  # (len(gains), len(widths)); NaN marks a failed solve
    g: float

    def cell(self, i, j) -> MorphResult:
        return MorphResult(float(self.gains[i]), float(self.widths[j]), float(self.errors[i, j]))

    @property
    def failed(self) -> int:
        return int(np.isnan(self.errors).sum())


def error_landscape(
    target: TargetShape,
    g: float,
    k_range,
    w_range,
    grid: SpectralGrid,
    config: MorphConfig | None = None,
    *,
    jobs: int = 1,
) -> ErrorLandscape:
    """Shape error over a (K, W) grid; one independent column per width."""
    cfg = config or MorphConfig()
    gains = np.asarray(k_range, dtype=float)
    widths = np.asarray(w_range, dtype=float)
    if gains.size == 0 or widths.size == 0:
        raise ValueError("empty gain or width range")
    if np.any(gains <= 0):
        raise ValueError("gains must be positive")
    if np.any(widths < 0):
        raise ValueError("widths must be >= 0 (0 selects the delta kernel)")
    if np.any(np.diff(gains) <= 0):
        raise ValueError("gains must be strictly increasing")
    tasks = [(target.curvature, g, gains, w, grid.n_points, cfg) for w in widths]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            cols = list(pool.map(_column_worker, tasks))
    else:
        cols = [_column(target, g, gains, w, grid, cfg) for w in widths]
    return ErrorLandscape(gains, widths, np.column_stack(cols), g)


@dataclass(frozen=True)
class LocusPoint:
    gain_k: float
    width: float
    error: float
    interior: bool


def _parabola_vertex(x, y):
    (x0, x1, x2), (y0, y1, y2) = x, y
    num = (x1 - x0) ** 2 * (y1 - y2) - (x1 - x2) ** 2 * (y1 - y0)
    den = (x1 - x0) * (y1 - y2) - (x1 - x2) * (y1 - y0)
    if den == 0:
        return x1
    return x1 - 0.5 * num / den


def optimal_width_locus(landscape: ErrorLandscape, *, skip_empty: bool = False) -> list:
    """Per-gain minimiser of the error over width, refined by a parabola
    through the three samples around an interior discrete minimum."""
    ws = landscape.widths
    locus = []
    for i, k in enumerate(landscape.gains):
        row = landscape.errors[i]
        if np.all(np.isnan(row)):
            if skip_empty:
                continue
            raise EmptyColumn(f"no width converged at K={k}")
        j = int(np.nanargmin(row))
        w_star, interior = float(ws[j]), False
        if 0 < j < ws.size - 1 and np.all(np.isfinite(row[j - 1 : j + 2])):
            w_star = float(_parabola_vertex(ws[j - 1 : j + 2], row[j - 1 : j + 2]))
            interior = True
        locus.append(LocusPoint(float(k), w_star, float(row[j]), interior))
    return locus


@dataclass(frozen=True)
class PowerLawFit:
    zeta: float
    k_star: float
    prefactor: float
    residual: float
    fit_window: tuple
    loglog_slope: float
    n_points: int


def _as_arrays(locus):
    if len(locus) and isinstance(locus[0], LocusPoint):
        k = np.array([p.gain_k for p in locus])
        w = np.array([p.width for p in locus])
    else:
        arr = np.asarray(locus, dtype=float).reshape(-1, 2)
        k, w = arr[:, 0], arr[:, 1]
    return k, w


def _starts(kmin, span):
    return [kmin - f * span for f in (1e-3, 1e-2, 0.05, 0.2, 0.5, 1.0)]


def fit_power_law(locus) -> PowerLawFit:
    """Least-squares fit of log W* = zeta log(K - K*) + c with K* < min K."""
    k, w = _as_arrays(locus)
    keep = w > 0
    k, w = k[keep], w[keep]
    if k.size < 8:
        raise ValueError(f"need at least 8 locus points with W* > 0, got {k.size}")
    kmin, span = k.min(), k.max() - k.min()
    lw = np.log(w)

    def resid(p):
        zeta, kstar, c = p
        return zeta * np.log(k - kstar) + c - lw

    best = None
    for ks0 in _starts(kmin, span):
        p0 = [0.5, ks0, np.mean(lw) - 0.5 * np.mean(np.log(k - ks0))]
        sol = least_squares(
            resid, p0, bounds=([0.0, -np.inf, -np.inf], [10.0, kmin - 1e-9 * max(1.0, span), np.inf])
        )
        if best is None or sol.cost < best.cost:
            best = sol
    zeta, kstar, c = best.x
    shifted = k - kstar
    decades = np.log10(shifted.max() / shifted.min())
    if decades < 0.5:
        raise DegenerateFit(f"locus spans only {decades:.2f} decades in K - K*")
    slope = float(np.polyfit(np.log(shifted), lw, 1)[0])
    rms = float(np.sqrt(np.mean(best.fun**2)))
    return PowerLawFit(float(zeta), float(kstar), float(np.exp(c)), rms, (float(k.min()), float(k.max())), slope, int(k.size))


@dataclass(frozen=True)
class PooledFit:
    zeta: float
    k_stars: dict
    prefactors: dict
    residual: float


def fit_power_law_pooled(loci: dict) -> PooledFit:
    """One exponent shared by several loci (e.g. one per G), each with its
    own K* and prefactor. Starts from the individual fits."""
    keys = list(loci)
    data, singles = [], []
    for key in keys:
        k, w = _as_arrays(loci[key])
        keep = w > 0
        data.append((k[keep], np.log(w[keep])))
        singles.append(fit_power_law(loci[key]))

    def resid(p):
        zeta = p[0]
        out = []
        for m, (k, lw) in enumerate(data):
            kstar, c = p[1 + 2 * m], p[2 + 2 * m]
            out.append(zeta * np.log(k - kstar) + c - lw)
        return np.concatenate(out)

    p0 = [np.mean([f.zeta for f in singles])]
    lo, hi = [0.0], [10.0]
    for (k, _), f in zip(data, singles):
        p0 += [min(f.k_star, k.min() - 1e-6), np.log(f.prefactor)]
        span = k.max() - k.min()
        lo += [-np.inf, -np.inf]
        hi += [k.min() - 1e-9 * max(1.0, span), np.inf]
    sol = least_squares(resid, p0, bounds=(lo, hi))
    return PooledFit(
        zeta=float(sol.x[0]),
        k_stars={key: float(sol.x[1 + 2 * m]) for m, key in enumerate(keys)},
        prefactors={key: float(np.exp(sol.x[2 + 2 * m])) for m, key in enumerate(keys)},
        residual=float(np.sqrt(np.mean(sol.fun**2))),
    )
