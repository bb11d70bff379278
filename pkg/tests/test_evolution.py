import numpy as np
import pytest

from peripump.evolution import TimeGrid, eshelby_trace, run_adjoint, run_forward
from peripump.mesh import build_mesh, particle_curve_mesh
from peripump.particle import ParticleShape, RigidConfig, RigidVelocity, rot90
from peripump.pipeline import Problem, Resolution, build_context
from peripump.solver import ParticleCache, evaluate_pressure, evaluate_velocity
from peripump.splines import SplineConfig, flat_ps, sine_ps

SPLINE = SplineConfig(M=7)
RES = Resolution(wall_panels=8, particle_panels=6, panel_order=8, proxy_points=48)


def make_problem(ps_kind="flat", radius=0.4, start=(np.pi, 0.0), T=0.2, N=4,
                 res=RES):
    problem = Problem(spline=SPLINE, particle=ParticleShape("circle", radius=radius),
                      start=RigidConfig(c=np.array(start)), grid=TimeGrid(T=T, N=N),
                      resolution=res)
    if ps_kind == "flat":
        ps = flat_ps(SPLINE, 1.0)
    else:
        ps = sine_ps(SPLINE, 1.1, 0.25)
    return ps, problem


@pytest.fixture(scope="module")
def flat_run():
    ps, problem = make_problem("flat")
    ctx = build_context(ps, problem)
    cache = problem.cache()
    traj = run_forward(ctx, problem.particle, problem.start, problem.grid,
                       n_particle_panels=RES.particle_panels, cache=cache)
    return ctx, problem, traj, cache


@pytest.fixture(scope="module")
def sine_run():
    ps, problem = make_problem("sine")
    ctx = build_context(ps, problem)
    cache = problem.cache()
    traj = run_forward(ctx, problem.particle, problem.start, problem.grid,
                       n_particle_panels=RES.particle_panels, cache=cache)
    return ctx, problem, traj, cache


def test_flat_channel_uniform_advection(flat_run):
    ctx, problem, traj, cache = flat_run
    for step in traj.steps:
        assert np.abs(step.velocity.w - [-1.0, 0.0]).max() < 1e-8
        assert abs(step.velocity.rho) < 1e-8
    # wave-frame displacement cancels the lab-frame wave speed
    assert abs(traj.net_motion + problem.grid.T) < 1e-8


def test_mirror_symmetric_channel_keeps_particle_on_axis(sine_run):
    ctx, problem, traj, cache = sine_run
    for step in traj.steps:
        assert abs(step.config.c[1]) < 1e-6


def test_forward_is_reproducible(flat_run):
    ctx, problem, traj, cache = flat_run
    again = run_forward(ctx, problem.particle, problem.start, problem.grid,
                        n_particle_panels=RES.particle_panels, cache=cache)
    for a, b in zip(traj.steps, again.steps):
        assert np.array_equal(a.config.c, b.config.c)
        assert np.array_equal(a.velocity.w, b.velocity.w)
        assert np.array_equal(a.part_h, b.part_h)


def test_dissipation_adjoint_vanishes_on_flat(flat_run):
    ctx, problem, traj, cache = flat_run
    adj = run_adjoint(ctx, traj, "dissipation",
                      n_particle_panels=RES.particle_panels, cache=cache)
    for step in adj.steps:
        assert np.abs(step.part_h).max() < 1e-10
        for s in "+-":
            assert np.abs(step.wall_f[s]).max() < 1e-10


def test_net_motion_adjoint_final_conditions(sine_run):
    ctx, problem, traj, cache = sine_run
    adj = run_adjoint(ctx, traj, "net_motion",
                      n_particle_panels=RES.particle_panels, cache=cache)
    last_fwd = traj.steps[-1]
    pm = particle_curve_mesh(problem.particle, last_fwd.solve_config,
                             RES.particle_panels, RES.panel_order)
    h = adj.steps[-1].part_h
    F = (h * pm.w_arc[:, None]).sum(axis=0)
    T = np.dot(pm.w_arc, np.einsum("ij,ij->i", h, rot90(pm.x)))
    hnorm = np.dot(pm.w_arc, np.linalg.norm(h, axis=1))
    assert np.abs(F - [-1.0, 0.0]).max() < 1e-8 * max(1.0, hnorm)
    assert abs(T - last_fwd.solve_config.c[1]) < 1e-8 * max(1.0, hnorm)


def test_adjoint_recursion_replay(sine_run):
    # stored targets at step n must reproduce the bracket built from step n+1
    ctx, problem, traj, cache = sine_run
    adj = run_adjoint(ctx, traj, "net_motion",
                      n_particle_panels=RES.particle_panels, cache=cache)
    grid = problem.grid
    for n in range(grid.N - 1, -1, -1):
        nxt = traj.steps[n + 1]
        pm = particle_curve_mesh(problem.particle, nxt.solve_config,
                                 RES.particle_panels, RES.panel_order)
        nE = eshelby_trace(nxt, adj.steps[n + 1].rigid, adj.steps[n + 1].part_h, pm)
        w = pm.w_arc
        F = (adj.steps[n + 1].part_h * w[:, None]).sum(axis=0) \
            - grid.dt * (nE * w[:, None]).sum(axis=0)
        arm = rot90(pm.x)
        T = np.dot(w, np.einsum("ij,ij->i", adj.steps[n + 1].part_h, arm)) \
            - grid.dt * np.dot(w, np.einsum("ij,ij->i", nE, arm))
        assert np.abs(adj.steps[n].F_target - F).max() < 1e-12
        assert abs(adj.steps[n].T_target - T) < 1e-12
        # and the solve enforced them on the transported arm
        fwd = traj.steps[n]
        pmn = particle_curve_mesh(problem.particle, fwd.solve_config,
                                  RES.particle_panels, RES.panel_order)
        xdot = fwd.velocity.w + fwd.velocity.rho * rot90(pmn.x - pmn.center)
        arm_n = rot90(pmn.x + grid.dt * xdot)
        arm_n[:, 1] += fwd.wrap_shift
        hn = adj.steps[n].part_h
        Fn = (hn * pmn.w_arc[:, None]).sum(axis=0)
        Tn = np.dot(pmn.w_arc, np.einsum("ij,ij->i", hn, arm_n))
        scale = max(1.0, np.dot(pmn.w_arc, np.linalg.norm(hn, axis=1)))
        assert np.abs(Fn - adj.steps[n].F_target).max() < 1e-7 * scale
        assert abs(Tn - adj.steps[n].T_target) < 1e-7 * scale


def test_eshelby_trivial_cases(sine_run):
    ctx, problem, traj, cache = sine_run
    fwd = traj.steps[0]
    pm = particle_curve_mesh(problem.particle, fwd.solve_config,
                             RES.particle_panels, RES.panel_order)
    # adjoint identically zero -> zero trace
    zero = np.zeros_like(fwd.part_h)
    nE = eshelby_trace(fwd, RigidVelocity(w=[0, 0], rho=0.0), zero, pm)
    assert np.abs(nE).max() == 0.0
    # rho = rho_hat = 0 and tangential-free h_hat -> zero
    from dataclasses import replace

    still = replace(fwd, velocity=RigidVelocity(w=fwd.velocity.w, rho=0.0))
    hn = pm.normal * 1.7  # purely normal adjoint traction
    nE = eshelby_trace(still, RigidVelocity(w=[1, 2], rho=0.0), hn, pm)
    assert np.abs(nE).max() < 1e-14


def _eshelby_fd_mismatch(wall_panels, part_panels, p):
    """Worst |formula - FD limit of n.E| over a few boundary nodes."""
    from peripump.evolution import _functional_bc
    from peripump.solver import InstantBC, solve_instant

    ps = sine_ps(SPLINE, 1.1, 0.2)
    res = Resolution(wall_panels=wall_panels, particle_panels=part_panels,
                     panel_order=p, proxy_points=48)
    problem = Problem(spline=SPLINE, particle=ParticleShape("circle", radius=0.35),
                      start=RigidConfig(c=[np.pi, 0.0]), grid=TimeGrid(T=0.1, N=2),
                      resolution=res)
    ctx = build_context(ps, problem)
    cache = problem.cache()
    traj = run_forward(ctx, problem.particle, problem.start, problem.grid,
                       n_particle_panels=part_panels, cache=cache)
    adj = run_adjoint(ctx, traj, "net_motion", n_particle_panels=part_panels,
                      cache=cache)
    n_step = 1
    fwd, ast = traj.steps[n_step], adj.steps[n_step]
    pm = particle_curve_mesh(problem.particle, fwd.solve_config, part_panels, p)
    formula = eshelby_trace(fwd, ast.rigid, ast.part_h, pm)
    fflow = solve_instant(ctx, pm, InstantBC(wall_velocity=ctx.wall_data_slip()),
                          cache=cache)
    wall_bc, dp = _functional_bc(ctx, "net_motion", problem.grid.T)
    xdot = fwd.velocity.w + fwd.velocity.rho * rot90(pm.x - pm.center)
    arm = rot90(pm.x + problem.grid.dt * xdot)
    arm[:, 1] += fwd.wrap_shift
    aflow = solve_instant(ctx, pm, InstantBC(
        wall_velocity=wall_bc, pressure_drop=dp,
        mobility=((ast.F_target[0], ast.F_target[1]), ast.T_target),
        torque_arm=arm), cache=cache)

    def energy_momentum_dot_n(x0, n0):
        h = 1e-4
        sten = x0[None, :] + np.array([[0, 0], [h, 0], [-h, 0], [0, h], [0, -h]])
        u = evaluate_velocity(ctx, pm, fflow, sten)
        uh = evaluate_velocity(ctx, pm, aflow, sten)
        pv = evaluate_pressure(ctx, pm, fflow, sten)
        ph = evaluate_pressure(ctx, pm, aflow, sten)

        def grad(v):
            return np.array([
                [(v[1, 0] - v[2, 0]) / (2 * h), (v[3, 0] - v[4, 0]) / (2 * h)],
                [(v[1, 1] - v[2, 1]) / (2 * h), (v[3, 1] - v[4, 1]) / (2 * h)],
            ])

        gu, guh = grad(u), grad(uh)
        Du = 0.5 * (gu + gu.T)
        Duh = 0.5 * (guh + guh.T)
        E = 2 * np.tensordot(Du, Duh) * np.eye(2) - 2 * Du @ guh - 2 * Duh @ gu
        E += pv[0] * (guh - np.trace(guh) * np.eye(2))
        E += ph[0] * (gu - np.trace(gu) * np.eye(2))
        return n0 @ E

    eps = np.mean(pm.panel_arc) * np.array([0.12, 0.09, 0.0675])
    worst = 0.0
    for i in [3, pm.n_nodes // 3, 2 * pm.n_nodes // 3]:
        vals = np.array([energy_momentum_dot_n(pm.x[i] - e * pm.normal[i],
                                               pm.normal[i]) for e in eps])
        lim = np.array([np.polyval(np.polyfit(eps, vals[:, c], 2), 0.0)
                        for c in range(2)])
        worst = max(worst, np.abs(lim - formula[i]).max())
    return worst


def test_eshelby_matches_fd_of_energy_momentum_tensor():
    """Boundary formula for n.E vs FD of E((u,p),(uh,ph)) off-boundary.

    The mismatch is discretization-limited; it must be small and shrink
    under mesh refinement (a wrong sign or term would stay O(1)).
    """
    coarse = _eshelby_fd_mismatch(8, 6, 8)
    fine = _eshelby_fd_mismatch(12, 10, 8)
    assert coarse < 5e-2
    assert fine < 5e-3
    assert fine < 0.6 * coarse


def test_forward_temporal_first_order():
    ps, problem = make_problem("sine", T=0.2, N=4,
                               res=Resolution(wall_panels=6, particle_panels=4,
                                              panel_order=6, proxy_points=32))
    ctx = build_context(ps, problem)
    cache = ParticleCache(problem.particle, 4, 6)

    def centroid_at_T(N):
        grid = TimeGrid(T=0.2, N=N)
        traj = run_forward(ctx, problem.particle, problem.start, grid,
                           n_particle_panels=4, cache=cache, store_traces=False)
        return traj.steps[-1].config.c

    ref = centroid_at_T(64)
    errs = [np.linalg.norm(centroid_at_T(N) - ref) for N in (4, 8, 16)]
    rates = [errs[i] / errs[i + 1] for i in range(2)]
    for r in rates:
        assert 1.5 < r < 2.6  # first order in dt
