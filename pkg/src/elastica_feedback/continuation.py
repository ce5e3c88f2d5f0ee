"""Natural-parameter continuation, jump detection and phase-diagram sweeps."""

from __future__ import annotations

import itertools
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .elastica import ElasticaSystem, Regime, RegimeProblem, build_system, solve_equilibrium
from .series import coupling_matrix, mixed_linear_series
from .spectral import SpectralGrid, build_grid

SWEEPABLE = ("g", "g_eff", "a", "w_s", "w_a", "d_end")


@dataclass(frozen=True)
class ContinuationConfig:
    tol: float = 1e-10
    max_iter: int = 50
    damping_levels: int = 8
    halvings: int = 6
    ramp_steps: int = 20
    max_step: float | None = None
    jump_factor: float = 10.0
    jump_floor: float = 0.05
    refine: bool = True
    refine_tol: float = 1e-3
    quadrature: str = "nystrom"


@dataclass
class PathPoint:
    value: float
    kappa0: float
    y_tip: float
    converged: bool
    newton_iters: int
    reseeded: bool = False
    gap: bool = False


@dataclass(frozen=True)
class PathGap:
    """A sample that could not be reached by step halving or reseeding."""

    value_before: float
    value_after: float


@dataclass(frozen=True)
class JumpEvent:
    param_value_before: float
    param_value_after: float
    delta_kappa0: float
    delta_ytip: float
    refined: bool = False


@dataclass(eq=False)
class ContinuationPath:
    swept_param: str
    values: np.ndarray
    fixed_params: dict
    points: list = field(default_factory=list)
    jumps: list = field(default_factory=list)
    gaps: list = field(default_factory=list)
    thetas: list = field(default_factory=list, repr=False)
    # what detect_jumps needs to re-solve inside a bracket
    _context: tuple | None = field(default=None, repr=False)

    @property
    def kappa0(self) -> np.ndarray:
        return np.array([p.kappa0 for p in self.points])

    @property
    def y_tip(self) -> np.ndarray:
        return np.array([p.y_tip for p in self.points])

    @property
    def converged(self) -> np.ndarray:
        return np.array([p.converged for p in self.points], dtype=bool)


class _Stepper:
    """Warm-started solves along one parameter, with step halving."""

    def __init__(self, base: RegimeProblem, grid: SpectralGrid, cfg: ContinuationConfig):
        self.base = base
        self.grid = grid
        self.cfg = cfg
        self._system: ElasticaSystem | None = None

    def system(self, problem: RegimeProblem) -> ElasticaSystem:
        if self._system is None:
            self._system = build_system(problem, self.grid, quadrature=self.cfg.quadrature)
        else:
            self._system = self._system.with_problem(problem)
        return self._system

    def solve(self, problem, theta):
        return solve_equilibrium(
            problem,
            self.grid,
            theta_init=theta,
            tol=self.cfg.tol,
            max_iter=self.cfg.max_iter,
            damping_levels=self.cfg.damping_levels,
            system=self.system(problem),
        )

    def advance(self, make, theta, start, stop, max_step=None):
        """Walk the parameter from ``start`` to ``stop`` warm-starting each
        solve. Returns the solution at ``stop`` or None once the step has
        been halved ``halvings`` times without success."""
        h = stop - start
        if max_step is not None and abs(h) > max_step:
            h = math.copysign(max_step, h)
        cur, th, sol, level = start, theta, None, 0
        if h == 0:
            sol = self.solve(make(stop), th)
            return sol if sol.converged else None
        while True:
            nxt = stop if abs(stop - cur) <= abs(h) * (1 + 1e-12) else cur + h
            trial = self.solve(make(nxt), th)
            if trial.converged:
                cur, th, sol = nxt, trial.theta, trial
                if nxt == stop:
                    return sol
            else:
                level += 1
                if level > self.cfg.halvings:
                    return None
                h /= 2.0

    def ramp(self, make, theta, start, stop):
        n = self.cfg.ramp_steps
        th, sol = theta, None
        for v in np.linspace(start, stop, n + 1)[1:]:
            sol = self.advance(make, th, v - (stop - start) / n, v)
            if sol is None:
                return None
            th = sol.theta
        return sol


def _setter(base: RegimeProblem, name: str):
    def make(v):
        return base.replace(**{name: float(v)})

    return make


def seed_solution(problem: RegimeProblem, grid: SpectralGrid, cfg: ContinuationConfig, stepper=None):
    """Two-stage start: the feedback-free problem from a straight rod (ramping
    gravity if needed), then the gain or end slope ramped to its target."""
    st = stepper or _Stepper(problem, grid, cfg)
    ramp_name = None
    if problem.has_feedback and problem.a:
        ramp_name = "a"
    elif problem.regime is Regime.GLOBAL_UNIFORM and problem.d_end:
        ramp_name = "d_end"
    start = problem.replace(**{ramp_name: 0.0}) if ramp_name else problem

    zero = np.zeros(grid.n_points)
    sol = st.solve(start, zero)
    if not sol.converged:
        gname = "g_eff" if start.regime is Regime.LOCAL else "g"
        sol = st.ramp(_setter(start, gname), zero, 0.0, start.gravity)
    if sol is None or not sol.converged:
        return None
    if ramp_name:
        target = getattr(problem, ramp_name)
        sol = st.ramp(_setter(problem, ramp_name), sol.theta, 0.0, target)
    return sol


def run_continuation(
    base: RegimeProblem,
    swept_param: str,
    values,
    grid: SpectralGrid,
    config: ContinuationConfig | None = None,
) -> ContinuationPath:
    cfg = config or ContinuationConfig()
    if swept_param not in SWEEPABLE:
        raise ValueError(f"cannot sweep {swept_param!r}; choose from {SWEEPABLE}")
    if getattr(base, swept_param) is None:
        raise ValueError(f"{base.regime.value} regime has no parameter {swept_param!r}")
    vals = np.asarray(values, dtype=float)
    if vals.ndim != 1 or vals.size == 0:
        raise ValueError("values must be a non-empty 1-D sequence")
    d = np.diff(vals)
    if not (np.all(d > 0) or np.all(d < 0)):
        raise ValueError("values must be strictly monotone")

    make = _setter(base, swept_param)
    fixed = {k: v for k, v in base.params().items() if k != swept_param}
    fixed["regime"] = base.regime.value
    path = ContinuationPath(swept_param, vals, fixed, _context=(base, grid, cfg))
    st = _Stepper(base, grid, cfg)

    theta = None
    prev = None
    for v in vals:
        sol, reseeded = None, False
        if theta is not None:
            sol = st.advance(make, theta, prev, v, cfg.max_step)
        if sol is None:
            reseeded = theta is not None
            sol = seed_solution(make(v), grid, cfg, st)
        if sol is None:
            failed = st.solve(make(v), theta if theta is not None else np.zeros(grid.n_points))
            if prev is not None:
                path.gaps.append(PathGap(float(prev), float(v)))
            path.points.append(
                PathPoint(float(v), failed.kappa0, failed.y_tip, False, failed.newton_iters, reseeded, True)
            )
            path.thetas.append(failed.theta)
            continue
        path.points.append(PathPoint(float(v), sol.kappa0, sol.y_tip, True, sol.newton_iters, reseeded))
        path.thetas.append(sol.theta)
        theta, prev = sol.theta, v
    path.jumps = detect_jumps(path, cfg.jump_factor)
    return path


def _candidates(values, obs, ok, factor, floor):
    h = np.abs(np.diff(values))
    d = np.diff(obs)
    pair_ok = ok[:-1] & ok[1:]
    if pair_ok.sum() < 2:
        return np.zeros(d.size, dtype=bool)
    rate = np.median(np.abs(d[pair_ok]) / h[pair_ok])
    return pair_ok & (np.abs(d) > factor * rate * h) & (np.abs(d) > floor)


def detect_jumps(
    path: ContinuationPath, threshold: float = 10.0, *, floor: float | None = None, refine: bool | None = None
) -> list:
    """Flag consecutive samples whose change in kappa0 or y_tip exceeds
    ``threshold`` times the median change rate over the path (scaled by
    the local step) and an absolute floor; optionally bisect each bracket."""
    ctx = path._context
    cfg = ctx[2] if ctx else ContinuationConfig()
    floor = cfg.jump_floor if floor is None else floor
    refine = (cfg.refine and ctx is not None) if refine is None else (refine and ctx is not None)
    vals = np.asarray(path.values, dtype=float)
    if len(path.points) < 3:
        return []
    ok = path.converged
    flags = _candidates(vals, path.kappa0, ok, threshold, floor) | _candidates(
        vals, path.y_tip, ok, threshold, floor
    )
    events = []
    for i in np.flatnonzero(flags):
        ev = JumpEvent(
            float(vals[i]),
            float(vals[i + 1]),
            float(path.kappa0[i + 1] - path.kappa0[i]),
            float(path.y_tip[i + 1] - path.y_tip[i]),
        )
        if refine:
            refined = _refine(path, i, ev)
            if refined is None:
                events.append(ev)
            elif _persists(refined, ev):
                events.append(refined)
            # otherwise the change was steep but continuous
            continue
        events.append(ev)
    return events


def _persists(refined: JumpEvent, coarse: JumpEvent) -> bool:
    """A true discontinuity keeps most of its size when the bracket shrinks."""
    return (
        abs(refined.delta_kappa0) > 0.5 * abs(coarse.delta_kappa0)
        or abs(refined.delta_ytip) > 0.5 * abs(coarse.delta_ytip)
    )


def _refine(path: ContinuationPath, i: int, ev: JumpEvent) -> JumpEvent | None:
    base, grid, cfg = path._context
    st = _Stepper(base, grid, cfg)
    make = _setter(base, path.swept_param)
    lo, hi = ev.param_value_before, ev.param_value_after
    th_lo = path.thetas[i]
    obs_lo = np.array([path.kappa0[i], path.y_tip[i]])
    obs_hi = np.array([path.kappa0[i + 1], path.y_tip[i + 1]])
    jump = np.abs(obs_hi - obs_lo)
    while abs(hi - lo) > cfg.refine_tol:
        mid = 0.5 * (lo + hi)
        sol = st.advance(make, th_lo, lo, mid)
        if sol is None:
            return None
        change = np.abs(np.array([sol.kappa0, sol.y_tip]) - obs_lo)
        if np.any(change > 0.5 * jump):
            hi, obs_hi = mid, np.array([sol.kappa0, sol.y_tip])
        else:
            lo, th_lo, obs_lo = mid, sol.theta, np.array([sol.kappa0, sol.y_tip])
    return JumpEvent(lo, hi, float(obs_hi[0] - obs_lo[0]), float(obs_hi[1] - obs_lo[1]), True)


@dataclass
class Hysteresis:
    up: ContinuationPath
    down: ContinuationPath
    intervals: list


def hysteresis_probe(base, swept_param, values, grid, config=None) -> Hysteresis:
    """Sweep up and back down; pair jumps and report the interval between
    the two detections (empty when no jumps or when they coincide)."""
    vals = np.sort(np.asarray(values, dtype=float))
    up = run_continuation(base, swept_param, vals, grid, config)
    down = run_continuation(base, swept_param, vals[::-1], grid, config)
    intervals = []
    for a, b in zip(up.jumps, down.jumps[::-1]):
        lo = min(a.param_value_before, b.param_value_after)
        hi = max(a.param_value_after, b.param_value_before)
        intervals.append((lo, hi))
    return Hysteresis(up, down, intervals)


# phase diagrams

PHASE_COLUMNS = ("kappa0", "y_tip", "converged", "newton_iters", "jump", "composite")


@dataclass(eq=False)
class PhaseDiagram:
    axis_names: tuple
    columns: tuple
    rows: np.ndarray
    jump_points: np.ndarray
    path_ids: np.ndarray

    def column(self, name) -> np.ndarray:
        return self.rows[:, self.columns.index(name)]

    @property
    def jump_cells(self) -> int:
        return int(np.sum(self.column("jump") > 0))


def composite_gain(problem: RegimeProblem) -> float:
    """A/W for one finite kernel, A/(W_s W_a) for two; NaN otherwise."""
    if problem.regime is Regime.MIXED:
        return problem.a / (problem.w_s if problem.w_s is not None else problem.w_a)
    if problem.regime is Regime.NONLOCAL:
        return problem.a / (problem.w_s * problem.w_a)
    return float("nan")


def jump_flags(path: ContinuationPath) -> np.ndarray:
    """1.0 at the first sample past each jump bracket, else 0.0."""
    flags = np.zeros(len(path.points))
    vals = np.asarray(path.values)
    sign = 1.0 if vals.size < 2 or vals[-1] > vals[0] else -1.0
    for ev in path.jumps:
        idx = int(np.searchsorted(sign * vals, sign * ev.param_value_after - 1e-12))
        flags[min(idx, vals.size - 1)] = 1.0
    return flags


def path_rows(path: ContinuationPath, base: RegimeProblem, outer: dict, axis_names) -> tuple:
    """Flatten one path into phase-diagram rows plus refined jump points."""
    jump_after = jump_flags(path)
    rows = []
    for k, p in enumerate(path.points):
        prob = base.replace(**outer, **{path.swept_param: p.value})
        axes = [outer[n] if n in outer else p.value for n in axis_names]
        rows.append(
            axes + [p.kappa0, p.y_tip, float(p.converged), float(p.newton_iters), jump_after[k], composite_gain(prob)]
        )
    jumps = [
        [outer[n] if n in outer else 0.5 * (ev.param_value_before + ev.param_value_after) for n in axis_names]
        + [ev.param_value_before, ev.param_value_after, ev.delta_kappa0, ev.delta_ytip]
        for ev in path.jumps
    ]
    return np.array(rows, dtype=float), np.array(jumps, dtype=float).reshape(-1, len(axis_names) + 4)


def _path_worker(args):
    base, outer, swept, values, n_points, cfg, axis_names = args
    grid = build_grid(n_points)
    prob = base.replace(**outer)
    path = run_continuation(prob, swept, values, grid, cfg)
    return path_rows(path, base, outer, axis_names)


def sweep_phase_diagram(
    base: RegimeProblem,
    axes,
    grid: SpectralGrid | int,
    config: ContinuationConfig | None = None,
    *,
    jobs: int = 1,
    skip=None,
    on_path=None,
) -> PhaseDiagram:
    """Sweep 2 or 3 parameter axes given as (name, values) pairs.

    The last axis is continued; every combination of the outer axes is an
    independent path. Paths run in a process pool when ``jobs > 1`` and
    are assembled in outer-axis order. ``skip`` maps path ids to
    precomputed (rows, jumps) so an interrupted sweep can resume;
    ``on_path(path_id, rows, jumps)`` fires as each new path completes,
    in path order.
    """
    axes = [(str(n), np.asarray(v, dtype=float)) for n, v in axes]
    if len(axes) not in (1, 2, 3):
        raise ValueError("give 1 to 3 axes (the last one is continued)")
    for n, v in axes:
        if n not in SWEEPABLE:
            raise ValueError(f"cannot sweep {n!r}")
        if v.size == 0:
            raise ValueError(f"axis {n!r} is empty")
    n_points = grid if isinstance(grid, int) else grid.n_points
    cfg = config or ContinuationConfig()
    axis_names = tuple(n for n, _ in axes)
    swept, values = axes[-1]
    outer_axes = axes[:-1]
    combos = list(itertools.product(*[v for _, v in outer_axes]))
    skip = skip or {}

    tasks = []
    for pid, combo in enumerate(combos):
        outer = {n: float(x) for (n, _), x in zip(outer_axes, combo)}
        if pid not in skip:
            tasks.append((pid, (base, outer, swept, values, n_points, cfg, axis_names)))

    results = dict(skip)
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for (pid, _), res in zip(tasks, pool.map(_path_worker, [t for _, t in tasks])):
                results[pid] = res
                if on_path:
                    on_path(pid, *res)
    else:
        for pid, t in tasks:
            results[pid] = _path_worker(t)
            if on_path:
                on_path(pid, *results[pid])

    rows, jumps, ids = [], [], []
    for pid in range(len(combos)):
        r, j = results[pid]
        rows.append(r)
        jumps.append(j)
        ids.append(np.full(len(r), pid))
    return PhaseDiagram(
        axis_names=axis_names,
        columns=axis_names + PHASE_COLUMNS,
        rows=np.vstack(rows),
        jump_points=np.vstack(jumps),
        path_ids=np.concatenate(ids),
    )


@dataclass(eq=False)
class LinearResponseMap:
    widths: np.ndarray
    gains: np.ndarray
    kappa0: np.ndarray  # shape (len(widths), len(gains))
    y_tip: np.ndarray
    g: float


def linear_response_maps(w_range, a_range, g: float, grid=None, n_modes: int = 50) -> LinearResponseMap:
    """Clamped-end curvature and tip deflection of the linear mixed series
    over a (W, A) grid."""
    ws = np.asarray(w_range, dtype=float)
    As = np.asarray(a_range, dtype=float)
    k0 = np.empty((ws.size, As.size))
    yt = np.empty_like(k0)
    for i, w in enumerate(ws):
        c = coupling_matrix(w, n_modes)
        for j, a in enumerate(As):
            ser = mixed_linear_series(g, a, w, n_modes, coupling=c)
            k0[i, j] = ser.clamp_curvature()
            yt[i, j] = ser.y_tip
    return LinearResponseMap(ws, As, k0, yt, g)
