"""Command-line entry point.

Exit codes: 0 ok, 1 configuration error, 2 Newton did not converge,
3 an oracle check failed.
"""

from __future__ import annotations

import argparse
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import config as C
from . import records
from .continuation import (
    PHASE_COLUMNS,
    ContinuationConfig,
    jump_flags,
    linear_response_maps,
    run_continuation,
    sweep_phase_diagram,
)
from .elastica import RegimeError, RegimeProblem, problem_kernels, solve_equilibrium
from .morphing import (
    DegenerateFit,
    EmptyColumn,
    MorphConfig,
    default_target,
    error_landscape,
    fit_power_law,
    fit_power_law_pooled,
    morph_shape,
    optimal_width_locus,
)
from .oracles import run_oracles
from .spectral import build_grid

EXIT_OK, EXIT_CONFIG, EXIT_NONCONVERGED, EXIT_VALIDATION = 0, 1, 2, 3


def build_problem(p: C.ProblemSection) -> RegimeProblem:
    try:
        if p.regime == "local":
            if p.g_eff is None:
                raise C.ConfigError("problem.g_eff: required for the local regime")
            return RegimeProblem.local(p.g_eff)
        if p.g is None:
            raise C.ConfigError(f"problem.g: required for the {p.regime} regime")
        if p.regime == "global_uniform":
            return RegimeProblem.global_uniform(p.g, p.d_end or 0.0)
        if p.a is None:
            raise C.ConfigError(f"problem.a: required for the {p.regime} regime")
        if p.regime == "mixed":
            return RegimeProblem.mixed(p.g, p.a, w_s=p.w_s, w_a=p.w_a, tip_condition=p.tip_condition)
        return RegimeProblem.nonlocal_(p.g, p.a, p.w_s, p.w_a, tip_condition=p.tip_condition)
    except RegimeError as exc:
        raise C.ConfigError(f"problem: {exc}") from None


def continuation_config(cfg: C.RunConfig) -> ContinuationConfig:
    n = cfg.numerics
    return ContinuationConfig(
        tol=n.tol,
        max_iter=n.max_iter,
        damping_levels=n.damping_levels,
        halvings=n.halvings,
        ramp_steps=n.ramp_steps,
        jump_factor=n.jump_threshold,
        jump_floor=n.jump_floor,
        refine_tol=n.refine_tol,
        quadrature=n.kernel_quadrature,
    )


class _Writer:
    def __init__(self, cfg: C.RunConfig):
        self.cfg = cfg
        self.dir = cfg.output.directory
        os.makedirs(self.dir, exist_ok=True)
        self.text = C.record_text(cfg)
        self.hash = C.config_hash(cfg)

    def path(self, name):
        return os.path.join(self.dir, name)

    def table(self, name, columns, rows, meta=None):
        records.write_table(self.path(name), columns, rows, config_text=self.text, config_hash=self.hash, meta=meta)
        return self.path(name)


def cmd_solve(cfg: C.RunConfig, **_) -> int:
    t0 = time.perf_counter()
    problem = build_problem(cfg.problem)
    grid = build_grid(cfg.numerics.n_points)
    kernels = problem_kernels(problem, grid, quadrature=cfg.numerics.kernel_quadrature)
    sol = solve_equilibrium(
        problem,
        grid,
        kernels,
        tol=cfg.numerics.tol,
        max_iter=cfg.numerics.max_iter,
        damping_levels=cfg.numerics.damping_levels,
    )
    out = _Writer(cfg)
    path = out.table(
        "solution.csv",
        ["s", "theta", "curvature", "x", "y"],
        np.column_stack([grid.nodes, sol.theta, sol.curvature, sol.centerline_x, sol.centerline_y]),
        meta={
            "kappa0": sol.kappa0,
            "y_tip": sol.y_tip,
            "converged": int(sol.converged),
            "newton_iters": sol.newton_iters,
            "residual_norm": sol.residual_norm,
        },
    )
    records.write_sidecar(path, wall_time=time.perf_counter() - t0)
    print(f"kappa0={sol.kappa0:.10g} y_tip={sol.y_tip:.10g} converged={sol.converged}")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


PATH_COLUMNS = ["value", "kappa0", "y_tip", "converged", "newton_iters", "reseeded", "gap", "jump"]
JUMP_COLUMNS = ["value_before", "value_after", "delta_kappa0", "delta_ytip", "refined"]


def cmd_continue(cfg: C.RunConfig, **_) -> int:
    t0 = time.perf_counter()
    cc = cfg.continuation
    param = "g_eff" if cc.param == "g" and cfg.problem.regime == "local" else cc.param
    problem_section = cfg.problem
    if getattr(problem_section, param, None) is None:
        problem_section = replace(problem_section, **{param: float(cc.start)})
    base = build_problem(problem_section)
    values = np.linspace(cc.start, cc.stop, cc.count)
    grid = build_grid(cfg.numerics.n_points)
    try:
        path = run_continuation(base, param, values, grid, continuation_config(cfg))
    except ValueError as exc:
        raise C.ConfigError(f"continuation: {exc}") from None
    jump_flag = jump_flags(path)
    rows = [
        [p.value, p.kappa0, p.y_tip, p.converged, p.newton_iters, p.reseeded, p.gap, f]
        for p, f in zip(path.points, jump_flag)
    ]
    out = _Writer(cfg)
    meta = {"swept_param": param, "gaps": len(path.gaps)}
    p1 = out.table("path.csv", PATH_COLUMNS, rows, meta)
    jumps = [[e.param_value_before, e.param_value_after, e.delta_kappa0, e.delta_ytip, e.refined] for e in path.jumps]
    out.table("jumps.csv", JUMP_COLUMNS, jumps, meta)
    records.write_sidecar(p1, wall_time=time.perf_counter() - t0)
    print(f"{len(path.points)} samples, {len(path.jumps)} jumps, {len(path.gaps)} gaps")
    return EXIT_OK


def _axes(cfg):
    return [(a.name, np.linspace(a.start, a.stop, a.count)) for a in cfg.sweep.axes]


def cmd_sweep(cfg: C.RunConfig, jobs: int = 1, resume: bool = False, **_) -> int:
    t0 = time.perf_counter()
    axes = _axes(cfg)
    section = cfg.problem
    for name, vals in axes:
        if getattr(section, name, None) is None:
            section = replace(section, **{name: float(vals[0])})
    base = build_problem(section)
    out = _Writer(cfg)
    names = [n for n, _ in axes]
    row_cols = ["path_id"] + names + list(PHASE_COLUMNS)
    jump_cols = ["path_id"] + names + JUMP_COLUMNS[:-1]
    partial_rows = out.path("sweep.partial.csv")
    partial_jumps = out.path("jump_points.partial.csv")

    skip = {}
    if resume and os.path.exists(partial_rows):
        done = records.read_table(partial_rows)
        if done.meta.get("config_hash") != out.hash:
            raise C.ConfigError("--resume: partial sweep was produced by a different config")
        jtab = records.read_table(partial_jumps) if os.path.exists(partial_jumps) else None
        for pid in np.unique(done.data[:, 0]).astype(int):
            r = done.data[done.data[:, 0] == pid, 1:]
            j = jtab.data[jtab.data[:, 0] == pid, 1:] if jtab is not None else np.empty((0, len(jump_cols) - 1))
            skip[int(pid)] = (r, j)
    else:
        records.write_table(partial_rows, row_cols, [], config_text=out.text, config_hash=out.hash)
        records.write_table(partial_jumps, jump_cols, [], config_text=out.text, config_hash=out.hash)

    def on_path(pid, rows, jumps):
        records.append_rows(partial_rows, np.column_stack([np.full(len(rows), pid), rows]))
        if len(jumps):
            records.append_rows(partial_jumps, np.column_stack([np.full(len(jumps), pid), jumps]))

    try:
        diagram = sweep_phase_diagram(
            base, axes, cfg.sweep.n_points, continuation_config(cfg), jobs=jobs, skip=skip, on_path=on_path
        )
    except ValueError as exc:
        raise C.ConfigError(f"sweep: {exc}") from None
    p1 = out.table("sweep.csv", row_cols, np.column_stack([diagram.path_ids, diagram.rows]))
    jumps = _jump_rows(diagram)
    out.table("jump_points.csv", jump_cols, jumps)
    os.remove(partial_rows)
    os.remove(partial_jumps)
    records.write_sidecar(p1, wall_time=time.perf_counter() - t0, jobs=jobs, resumed_paths=len(skip))
    print(f"{len(diagram.rows)} cells, {diagram.jump_cells} jump cells")
    return EXIT_OK


def _jump_rows(diagram):
    # jump points carry no path id in the diagram; recover it from the
    # outer-axis coordinates, which identify the path uniquely
    n_outer = len(diagram.axis_names) - 1
    rows = []
    outer_of = {}
    for pid, r in zip(diagram.path_ids, diagram.rows):
        outer_of.setdefault(tuple(r[:n_outer]), int(pid))
    for j in diagram.jump_points:
        rows.append([outer_of[tuple(j[:n_outer])]] + list(j))
    return np.array(rows, dtype=float).reshape(-1, len(diagram.axis_names) + 5)


def cmd_linmap(cfg: C.RunConfig, **_) -> int:
    t0 = time.perf_counter()
    lm = cfg.linmap
    ws = np.linspace(lm.w_start, lm.w_stop, lm.w_count)
    res = linear_response_maps(ws, np.asarray(lm.a_values), lm.g, n_modes=lm.n_modes)
    rows = [[w, a, res.kappa0[i, j], res.y_tip[i, j]] for i, w in enumerate(ws) for j, a in enumerate(res.gains)]
    out = _Writer(cfg)
    p1 = out.table("linmap.csv", ["w", "a", "kappa0", "y_tip"], rows, {"g": lm.g})
    records.write_sidecar(p1, wall_time=time.perf_counter() - t0)
    return EXIT_OK


FIT_COLUMNS = ["g", "zeta", "k_star", "prefactor", "residual", "k_min", "k_max", "loglog_slope", "n_points", "valid"]


def cmd_morph(cfg: C.RunConfig, jobs: int = 1, gain_k=None, landscape_fn=None, **_) -> int:
    """``landscape_fn(g, gains, widths)`` replaces the physical landscape
    (used to inject synthetic data)."""
    t0 = time.perf_counter()
    m = cfg.morph
    grid = build_grid(m.n_points)
    target = default_target(grid)
    gains = np.geomspace(m.k_min, m.k_max, m.k_count) if gain_k is None else np.array([float(gain_k)])
    widths = np.linspace(m.w_min, m.w_max, m.w_count)
    if m.include_delta:
        widths = np.concatenate([[0.0], widths])
        gains = np.union1d(gains, [1.0])
    mcfg = MorphConfig(tol=cfg.numerics.tol, max_iter=cfg.numerics.max_iter, halvings=cfg.numerics.halvings,
                       quadrature=cfg.numerics.kernel_quadrature)
    out = _Writer(cfg)
    fits, loci = [], {}
    for g in m.g_values:
        if landscape_fn is None:
            land = error_landscape(target, g, gains, widths, grid, mcfg, jobs=jobs)
        else:
            land = landscape_fn(g, gains, widths)
        tag = f"{g:g}"
        out.table(
            f"landscape_g{tag}.csv",
            ["k", "w", "error"],
            [[k, w, land.errors[i, j]] for i, k in enumerate(land.gains) for j, w in enumerate(land.widths)],
            {"g": g, "failed_cells": land.failed},
        )
        try:
            locus = optimal_width_locus(land, skip_empty=True)
        except EmptyColumn:
            locus = []
        out.table(
            f"locus_g{tag}.csv",
            ["k", "w_star", "error", "interior"],
            [[p.gain_k, p.width, p.error, p.interior] for p in locus],
            {"g": g},
        )
        interior = [p for p in locus if p.interior and p.width > 0]
        try:
            fit = fit_power_law(interior)
            loci[g] = interior
            fits.append([g, fit.zeta, fit.k_star, fit.prefactor, fit.residual, *fit.fit_window,
                         fit.loglog_slope, fit.n_points, 1])
        except (DegenerateFit, ValueError) as exc:
            print(f"G={g:g}: fit invalid ({exc})")
            fits.append([g] + [np.nan] * 7 + [len(interior), 0])
        if landscape_fn is None:
            _write_shapes(out, tag, target, grid, g, land, mcfg)
    if len(loci) > 1:
        try:
            pooled = fit_power_law_pooled(loci)
            fits.append([np.nan, pooled.zeta, np.nan, np.nan, pooled.residual, np.nan, np.nan, np.nan,
                         sum(len(v) for v in loci.values()), 1])
        except (DegenerateFit, ValueError):
            pass
    p1 = out.table("fit.csv", FIT_COLUMNS, fits, {"pooled_row": "g = nan"})
    records.write_sidecar(p1, wall_time=time.perf_counter() - t0, jobs=jobs)
    for row in fits:
        print(f"G={row[0]:g} zeta={row[1]:.4g} K*={row[2]:.4g} residual={row[4]:.3g}")
    return EXIT_OK


def _write_shapes(out, tag, target, grid, g, land, mcfg):
    errs = np.where(np.isnan(land.errors), np.inf, land.errors)
    if not np.isfinite(errs).any():
        return
    best = np.unravel_index(np.argmin(errs), errs.shape)
    worst_vals = np.where(np.isfinite(errs), errs, -np.inf)
    worst = np.unravel_index(np.argmax(worst_vals), errs.shape)
    cols, data = ["s", "x_target", "y_target"], [grid.nodes, target.x, target.y]
    for label, (i, j) in (("best", best), ("worst", worst)):
        res = morph_shape(target, g, land.gains[i], land.widths[j], grid, mcfg)
        cols += [f"x_{label}", f"y_{label}"]
        data += [res.achieved_shape.centerline_x, res.achieved_shape.centerline_y]
    meta = {"best_k": float(land.gains[best[0]]), "best_w": float(land.widths[best[1]]),
            "worst_k": float(land.gains[worst[0]]), "worst_w": float(land.widths[worst[1]])}
    out.table(f"shapes_g{tag}.csv", cols, np.column_stack(data), meta)


def cmd_validate(cfg: C.RunConfig, **_) -> int:
    t0 = time.perf_counter()
    g_eff = cfg.problem.g_eff if cfg.problem.g_eff is not None else 0.1
    checks = run_oracles(cfg.numerics.n_points, g_eff)
    out = _Writer(cfg)
    names = ";".join(c.name for c in checks)
    p1 = out.table(
        "validate.csv",
        ["check", "deviation", "tolerance", "passed"],
        [[k, c.deviation, c.tolerance, c.passed] for k, c in enumerate(checks)],
        {"checks": names},
    )
    records.write_sidecar(p1, wall_time=time.perf_counter() - t0)
    for c in checks:
        print(f"{'PASS' if c.passed else 'FAIL'}  {c.name:32s} deviation={c.deviation:.3e} tolerance={c.tolerance:.1e}")
    return EXIT_OK if all(c.passed for c in checks) else EXIT_VALIDATION


COMMANDS = {
    "solve": cmd_solve,
    "continue": cmd_continue,
    "sweep": cmd_sweep,
    "linmap": cmd_linmap,
    "morph": cmd_morph,
    "validate": cmd_validate,
}


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="elastica-feedback", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="TOML run configuration")
        p.add_argument("--jobs", type=int, default=1, help="worker processes")
        p.add_argument("--out", help="output directory")
        p.add_argument("--resume", action="store_true", help="continue an interrupted sweep")
        p.add_argument("--n-points", type=int)
        p.add_argument("--g", type=float)
        p.add_argument("--a", type=float)
        p.add_argument("--w-s", type=float)
        p.add_argument("--w-a", type=float)
        p.add_argument("--d-end", type=float)
        p.add_argument("--g-eff", type=float)
        p.add_argument("--gain-k", type=float, help="single actuation gain for morph")
        p.add_argument("--regime", choices=C.REGIMES)
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        cfg = C.load(args.config) if args.config else C.RunConfig()
        if args.regime:
            cfg = replace(cfg, problem=replace(cfg.problem, regime=args.regime))
        cfg = C.with_overrides(
            cfg,
            command=args.command,
            n_points=args.n_points,
            out=args.out,
            g=args.g,
            a=args.a,
            w_s=args.w_s,
            w_a=args.w_a,
            d_end=args.d_end,
            g_eff=args.g_eff,
        )
        if args.jobs < 1:
            raise C.ConfigError("--jobs: must be >= 1")
        return COMMANDS[cfg.command](cfg, jobs=args.jobs, resume=args.resume, gain_k=args.gain_k)
    except C.ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"cannot read or write {exc.filename}: {exc.strerror}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
