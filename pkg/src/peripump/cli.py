"""Command-line driver: solve | forward | adjoint | gradient-check | optimize.

Exit codes: 0 success, 2 config error, 3 solver failure, 4 near-contact
abort, 5 gradient-check threshold violation, 6 optimizer iteration cap.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .config import ConfigError, RunConfig, load_config
from .evolution import run_adjoint, run_forward
from .mesh import NearContactError, build_mesh
from .optimizer import augmented_lagrangian
from .pipeline import (
    Problem,
    ShapeObjective,
    build_context,
    evaluate_values_dict,
    run_case,
)
from .sensitivity import flow_rate, functional_values
from .solver import InstantBC, SolverError, flux, flux_at_zero, solve_instant
from . import report

log = logging.getLogger("peripump")

FUNCTIONAL_KEYS = {"dissipation": "J_W", "net_motion": "D", "mass_flow": "C"}


def _setup_logging(cfg: RunConfig):
    if cfg.verbose:
        cfg.out_dir.mkdir(parents=True, exist_ok=True)
        handler = logging.FileHandler(cfg.out_dir / "solver_log.jsonl", mode="w")
        handler.setFormatter(logging.Formatter("%(message)s"))
        logging.getLogger("peripump").setLevel(logging.INFO)
        logging.getLogger("peripump").addHandler(handler)


def _write_csv(path: Path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def cmd_solve(cfg: RunConfig) -> int:
    ctx = build_context(cfg.ps, _geometry_problem(cfg))
    pmesh = ctx.mesh.particle
    bc = InstantBC(wall_velocity=ctx.wall_data_slip(),
                   mobility=((0.0, 0.0), 0.0) if pmesh is not None else None)
    flow = solve_instant(ctx, pmesh, bc, verbose=cfg.verbose,
                         cache=None if pmesh is None else cfg.problem().cache())
    cfg.out_dir.mkdir(parents=True, exist_ok=True)

    rows = []
    for side, m in zip("+-", ctx.walls):
        u = flow.wall_u[side]
        f = flow.wall_f[side]
        p = flow.wall_p[side] - flow.pressure_gauge
        for q in range(m.n_nodes):
            rows.append(["wall" + side, m.t[q], m.x[q, 0], m.x[q, 1],
                         u[q, 0], u[q, 1], f[q, 0], f[q, 1], p[q]])
    if pmesh is not None:
        p = flow.part_p - flow.pressure_gauge
        for q in range(pmesh.n_nodes):
            rows.append(["particle", pmesh.t[q], pmesh.x[q, 0], pmesh.x[q, 1],
                         flow.part_u[q, 0], flow.part_u[q, 1],
                         flow.part_h[q, 0], flow.part_h[q, 1], p[q]])
    _write_csv(cfg.out_dir / "traces.csv",
               ["curve", "t", "x1", "x2", "u1", "u2", "f1", "f2", "p"], rows)

    slip = ctx.wall_data_slip()
    bc_err = max(np.abs(flow.wall_u[s] - slip[s]).max() for s in "+-")
    diag = {
        "residual": flow.residual,
        "wall_bc_error": float(bc_err),
        "flux_0": flux_at_zero(ctx, pmesh, flow,
                               None if pmesh is None else (cfg.particle, cfg.start)),
        "flux_L": flux(ctx, pmesh, flow,
                       None if pmesh is None else (cfg.particle, cfg.start)),
        "pressure_gauge": flow.pressure_gauge,
    }
    if flow.rigid is not None:
        diag["rigid_velocity"] = {"w": flow.rigid.w.tolist(), "rho": flow.rigid.rho}
    (cfg.out_dir / "diagnostics.json").write_text(json.dumps(diag, indent=2))
    report.geometry_figure(cfg.out_dir / "geometry.png", ctx.shape, cfg.particle,
                           [cfg.start] if cfg.start is not None else None,
                           title="instantaneous solve")
    return 0


def _geometry_problem(cfg: RunConfig) -> Problem:
    # solve works with or without a particle
    if cfg.particle is not None:
        return cfg.problem()
    return Problem(spline=cfg.spline, particle=None, start=None, grid=cfg.grid,
                   resolution=cfg.resolution)


def cmd_forward(cfg: RunConfig) -> int:
    problem = cfg.problem()
    ctx = build_context(cfg.ps, problem)
    cache = problem.cache()
    traj = run_forward(ctx, problem.particle, problem.start, problem.grid,
                       n_particle_panels=cfg.resolution.particle_panels,
                       cache=cache, contact_factor=cfg.resolution.contact_factor,
                       verbose=cfg.verbose)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    times = problem.grid.times
    rows = [[times[n], s.config.c[0], s.config.c[1], s.config.phi,
             s.velocity.w[0], s.velocity.w[1], s.velocity.rho]
            for n, s in enumerate(traj.steps)]
    _write_csv(cfg.out_dir / "trajectory.csv",
               ["t", "c1", "c2", "phi", "w1", "w2", "rho"], rows)

    vals = functional_values(ctx, traj, problem.particle.area)
    out = {
        "J_W": vals.dissipation,
        "D": vals.net_motion,
        "V": vals.volume,
        "C": vals.mass_flow_c,
        "Q": flow_rate(vals, problem.particle.area, problem.grid.T),
    }
    (cfg.out_dir / "functionals.json").write_text(json.dumps(out, indent=2))
    report.geometry_figure(cfg.out_dir / "geometry.png", ctx.shape,
                           problem.particle, traj.configs, title="forward run")
    report.trajectory_figure(cfg.out_dir / "trajectory.png", times,
                             traj.configs, [s.velocity for s in traj.steps])
    return 0


def cmd_adjoint(cfg: RunConfig, functional: str) -> int:
    problem = cfg.problem()
    ctx = build_context(cfg.ps, problem)
    cache = problem.cache()
    traj = run_forward(ctx, problem.particle, problem.start, problem.grid,
                       n_particle_panels=cfg.resolution.particle_panels,
                       cache=cache, verbose=cfg.verbose)
    adj = run_adjoint(ctx, traj, functional,
                      n_particle_panels=cfg.resolution.particle_panels,
                      cache=cache, verbose=cfg.verbose)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    times = problem.grid.times
    rows = [[times[n], a.F_target[0], a.F_target[1], a.T_target,
             a.rigid.w[0], a.rigid.w[1], a.rigid.rho]
            for n, a in enumerate(adj.steps)]
    _write_csv(cfg.out_dir / f"adjoint_{functional}.csv",
               ["t", "F1_target", "F2_target", "T_target",
                "w1_hat", "w2_hat", "rho_hat"], rows)
    report.trajectory_figure(cfg.out_dir / f"adjoint_{functional}.png", times,
                             traj.configs, [a.rigid for a in adj.steps])
    return 0


def _fd_worker(args):
    raw, ps_list, i, eta, keys = args
    cfg = load_config(raw)
    problem = cfg.problem()
    ps = np.asarray(ps_list)
    delta = np.zeros_like(ps)
    delta[i] = 1.0
    cache = problem.cache()
    up = evaluate_values_dict(ps + eta * delta, problem, cache)
    dn = evaluate_values_dict(ps - eta * delta, problem, cache)
    return i, {k: (up[k] - dn[k]) / (2 * eta) for k in keys}


def cmd_gradient_check(cfg: RunConfig, threads: int,
                       functionals=("dissipation", "net_motion")) -> int:
    problem = cfg.problem()
    cache = problem.cache()
    _, _, _, values, grads = run_case(cfg.ps, problem, functionals=functionals,
                                      cache=cache)
    n_free = cfg.spline.n_free
    jobs = [(cfg.raw, cfg.ps.tolist(), i, cfg.eta, list(functionals))
            for i in range(n_free)]
    results = {}
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            for i, fd in pool.map(_fd_worker, jobs):
                results[i] = fd
    else:
        for job in jobs:
            i, fd = _fd_worker(job)
            results[i] = fd

    rows = []
    table = []
    offending = []
    for i in range(n_free):
        for name in functionals:
            analytic = grads[name][i]
            fd = results[i][name]
            abs_diff = abs(analytic - fd)
            if abs(fd) < 1e-8:
                rel = abs_diff  # absolute comparison below the FD floor
                ok = abs_diff <= 1e-8
            else:
                rel = abs_diff / abs(fd)
                ok = rel <= cfg.gradient_threshold
            if not ok:
                offending.append((i, name, rel))
            rows.append([i, FUNCTIONAL_KEYS.get(name, name), analytic, fd,
                         abs_diff, rel])
            table.append({"direction": i, "functional": name,
                          "analytic": analytic, "fd": fd, "rel_diff": rel})
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    _write_csv(cfg.out_dir / "gradient_check.csv",
               ["direction-index", "functional", "analytic", "fd",
                "abs-diff", "rel-diff"], rows)
    report.gradient_figure(cfg.out_dir / "gradient_check.png", table)
    if offending:
        for i, name, rel in offending:
            print(f"direction {i} ({name}): relative difference {rel:.3e} "
                  f"above threshold {cfg.gradient_threshold:g}", file=sys.stderr)
        return 5
    return 0


def cmd_optimize(cfg: RunConfig) -> int:
    if cfg.volume_target is None or cfg.motion_target is None:
        raise ConfigError("optimize requires targets.volume and targets.net_motion")
    problem = cfg.problem()
    objective = ShapeObjective(problem, cfg.volume_target, cfg.motion_target)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    snap_dir = cfg.out_dir / "snapshots"
    snap_dir.mkdir(exist_ok=True)

    history_rows = []
    iterate_rows = []
    restarts = []
    counter = {"outer": 1, "inner": 0, "accepted": 0}

    def snapshot(ps):
        path = snap_dir / f"iter_{counter['accepted']:04d}.json"
        path.write_text(json.dumps({"outer": counter["outer"],
                                    "inner": counter["inner"],
                                    "ps": list(map(float, ps))}))

    def inner_cb(x, f, g):
        counter["inner"] += 1
        counter["accepted"] += 1
        looked = objective.lookup(x)
        if looked is None:
            return
        values, grads = looked
        row = {"outer": counter["outer"], "inner": counter["inner"],
               "J": values.dissipation,
               "C_V": values.volume - cfg.volume_target,
               "C_D": values.net_motion - cfg.motion_target,
               "gnorm": float(np.linalg.norm(g)), "sigma": state_now["sigma"],
               "lam": list(state_now["lam"])}
        iterate_rows.append(row)
        snapshot(x)

    state_now = {"sigma": cfg.optimizer.sigma0, "lam": list(cfg.optimizer.lam0)}

    def record(kind, **data):
        counter["outer"] = data["outer"] + 1
        counter["inner"] = 0
        state_now["sigma"] = data["sigma"]
        state_now["lam"] = list(data["lam"])
        restarts.append(len(iterate_rows))
        history_rows.append(data)

    result = augmented_lagrangian(
        objective.objective, objective.constraints, cfg.ps,
        lam0=cfg.optimizer.lam0, sigma0=cfg.optimizer.sigma0,
        zeta_star=cfg.optimizer.zeta_star, outer_cap=cfg.optimizer.outer_cap,
        inner_maxiter=cfg.optimizer.inner_cap, gtol_scale=cfg.optimizer.gtol,
        record=record, inner_callback=inner_cb)

    rows = [[r["outer"], r["inner"], r["J"], r["C_V"], r["C_D"], r["gnorm"],
             r["sigma"], r["lam"][0], r["lam"][1]] for r in iterate_rows]
    _write_csv(cfg.out_dir / "history.csv",
               ["outer-iter", "inner-iter", "J_W", "C_V", "C_D", "grad-norm",
                "sigma", "lambda1", "lambda2"], rows)

    values, grads = objective._evaluate(result.x)
    summary = {
        "J_W": values.dissipation,
        "C_V": values.volume - cfg.volume_target,
        "C_D": values.net_motion - cfg.motion_target,
        "outer_iterations": result.state.outer_iter,
        "evaluations": objective.evaluations,
        "converged": bool(result.converged),
        "ps": list(map(float, result.x)),
    }
    (cfg.out_dir / "summary.json").write_text(json.dumps(summary, indent=2))
    if iterate_rows:
        report.history_figure(cfg.out_dir / "history.png", iterate_rows, restarts)
    from .splines import WallShape

    report.geometry_figure(cfg.out_dir / "final_shape.png",
                           WallShape(cfg.spline, result.x), cfg.particle,
                           [cfg.start], title="optimized shape")
    return 0 if result.converged else 6


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="peripump",
        description="Peristaltic pump shape optimization with a rigid particle")
    parser.add_argument("command",
                        choices=["solve", "forward", "adjoint",
                                 "gradient-check", "optimize"])
    parser.add_argument("--config", required=True, help="JSON run configuration")
    parser.add_argument("--out", default=None, help="output directory override")
    parser.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    parser.add_argument("--eta", type=float, default=None,
                        help="FD step for gradient-check (default 1e-4)")
    parser.add_argument("--functional", default="net_motion",
                        choices=["dissipation", "net_motion", "mass_flow"],
                        help="adjoint functional for the adjoint command")
    parser.add_argument("--verbose", action="store_true")
    args = parser.parse_args(argv)

    try:
        cfg = load_config(args.config)
        if args.out:
            cfg.out_dir = Path(args.out)
        if args.eta is not None:
            cfg.eta = args.eta
        if args.verbose:
            cfg.verbose = True
        _setup_logging(cfg)
        if args.command == "solve":
            return cmd_solve(cfg)
        if args.command == "forward":
            return cmd_forward(cfg)
        if args.command == "adjoint":
            return cmd_adjoint(cfg, args.functional)
        if args.command == "gradient-check":
            return cmd_gradient_check(cfg, max(1, args.threads))
        if args.command == "optimize":
            return cmd_optimize(cfg)
        raise AssertionError("unreachable")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NearContactError as exc:
        print(f"near-contact abort: {exc}", file=sys.stderr)
        return 4
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
