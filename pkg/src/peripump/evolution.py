"""Time integration: forward flow/particle trajectory and backward adjoint.

Forward: at each instant solve the mobility problem with the slip data
uD = ell*tau on the walls, then advance the particle by explicit Euler
(rigidity-preserving: the centroid and angle are advanced and the
boundary regenerated).

Adjoint: one quasi-static Dirichlet solve per time step, marching
backwards.  The net force and torque prescribed on the particle evolve
by an explicit recursion driven by the boundary trace of the Eshelby
tensor; the recursion's torque bracket lives on the *next* step's
boundary, which is realized by transporting the moment arm with the
known rigid step (arm = e3 x (x + dx dt), plus a lattice-wrap shift when
the tracked particle copy re-enters the cell).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .mesh import BoundaryMesh, NearContactError, build_mesh, particle_curve_mesh
from .particle import (
    ParticleShape,
    RigidConfig,
    RigidVelocity,
    advance,
    net_motion,
    rot90,
)
from .solver import (
    InstantBC,
    ParticleCache,
    ShapeContext,
    SolverError,
    flux,
    flux_at_zero,
    solve_instant,
)

__all__ = [
    "TimeGrid",
    "ForwardTrajectory",
    "AdjointTrajectory",
    "run_forward",
    "run_adjoint",
    "eshelby_trace",
    "FUNCTIONALS",
]

FUNCTIONALS = ("dissipation", "net_motion", "mass_flow")


@dataclass(frozen=True)
class TimeGrid:
    """Uniform explicit grid on [0, T] with N steps."""

    T: float
    N: int

    def __post_init__(self):
        if self.N < 1 or self.T <= 0:
            raise ValueError("need N >= 1 and T > 0")

    @property
    def dt(self) -> float:
        return self.T / self.N

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.N + 1)


@dataclass
class ForwardStep:
    """State and boundary traces of one forward instant."""

    config: RigidConfig          # unwrapped (tracks D)
    solve_config: RigidConfig    # wrapped copy used for the solve
    velocity: RigidVelocity
    wrap_shift: float = 0.0      # x1 shift applied between this step and the next
    part_h: np.ndarray | None = None
    part_p: np.ndarray | None = None
    wall_f: dict = field(default_factory=dict)
    wall_p: dict = field(default_factory=dict)
    flux_L: float = 0.0
    flux_0: float = 0.0
    residual: float = 0.0


@dataclass
class ForwardTrajectory:
    grid: TimeGrid
    particle: ParticleShape
    steps: list
    ell: dict
    store_traces: bool

    @property
    def configs(self):
        return [s.config for s in self.steps]

    @property
    def net_motion(self) -> float:
        return net_motion(self.configs)


@dataclass
class AdjointStep:
    """Adjoint traces and recursion targets at one instant."""

    F_target: np.ndarray
    T_target: float
    rigid: RigidVelocity
    part_h: np.ndarray
    part_p: np.ndarray
    wall_f: dict
    wall_p: dict
    eshelby: np.ndarray | None = None   # n.E samples used to reach this step


@dataclass
class AdjointTrajectory:
    functional: str
    steps: list  # index n = 0..N, aligned with the forward steps


def _wrap_into_cell(cfg: RigidConfig, L: float):
    """Wrapped solving copy and the whole-period shift applied."""
    k = np.floor(cfg.c[0] / L)
    if k == 0:
        return cfg, 0.0
    shift = -k * L
    return RigidConfig(c=np.array([cfg.c[0] + shift, cfg.c[1]]), phi=cfg.phi), shift


def run_forward(ctx: ShapeContext, particle: ParticleShape, cfg0: RigidConfig,
                grid: TimeGrid, *, n_particle_panels: int, store_traces: bool = True,
                cache: ParticleCache | None = None, contact_factor: float = 0.5,
                verbose: bool = False) -> ForwardTrajectory:
    """March the coupled system over the grid, caching traces per step."""
    if cache is None:
        cache = ParticleCache(particle, n_particle_panels, ctx.walls[0].p)
    slip = ctx.wall_data_slip()
    cfg = cfg0
    steps = []
    for n in range(grid.N + 1):
        solve_cfg, _ = _wrap_into_cell(cfg, ctx.mesh.L)
        try:
            mesh = build_mesh(ctx.shape, particle, solve_cfg,
                              n_wall_panels=ctx.walls[0].n_panels,
                              n_particle_panels=n_particle_panels,
                              p=ctx.walls[0].p,
                              p_section=len(ctx.mesh.section.x0),
                              contact_factor=contact_factor)
        except NearContactError as exc:
            raise NearContactError(f"step {n}: {exc}") from exc
        pmesh = mesh.particle
        try:
            flow = solve_instant(ctx, pmesh, InstantBC(wall_velocity=slip),
                                 want_traces=store_traces, cache=cache,
                                 verbose=verbose)
        except SolverError as exc:
            raise SolverError(f"step {n}: {exc}") from exc
        step = ForwardStep(config=cfg, solve_config=solve_cfg, velocity=flow.rigid,
                           residual=flow.residual)
        if store_traces:
            step.part_h = flow.part_h
            step.part_p = flow.part_p
            step.wall_f = flow.wall_f
            step.wall_p = flow.wall_p
            pstate = (particle, solve_cfg)
            step.flux_L = flux(ctx, pmesh, flow, pstate)
            step.flux_0 = flux_at_zero(ctx, pmesh, flow, pstate)
        steps.append(step)
        if n < grid.N:
            cfg = advance(cfg, flow.rigid, grid.dt)
            new_solve, _ = _wrap_into_cell(cfg, ctx.mesh.L)
            step.wrap_shift = new_solve.c[0] - (step.solve_config.c[0]
                                                + flow.rigid.w[0] * grid.dt)
    return ForwardTrajectory(grid=grid, particle=particle, steps=steps,
                             ell=dict(ctx.ell), store_traces=store_traces)


def eshelby_trace(fwd: ForwardStep, adj_rigid: RigidVelocity, adj_h: np.ndarray,
                  pmesh) -> np.ndarray:
    """Boundary trace n.E of the Eshelby-type tensor on the particle.

    n.E = -(rho_hat h + rho h_hat) . r - h_s h_hat_s n, with r acting as
    the 90-degree rotation; requires forward and adjoint data at the same
    instant.
    """
    h = fwd.part_h
    hh = adj_h
    mix = adj_rigid.rho * h + fwd.velocity.rho * hh
    h_s = np.einsum("ij,ij->i", h, pmesh.tau)
    hh_s = np.einsum("ij,ij->i", hh, pmesh.tau)
    return rot90(mix) - (h_s * hh_s)[:, None] * pmesh.normal


def _functional_bc(ctx: ShapeContext, functional: str, T: float):
    slip = ctx.wall_data_slip()
    if functional == "dissipation":
        wall = {s: slip[s] + np.array([1.0, 0.0]) for s in "+-"}
        return wall, 0.0
    zero = {s: np.zeros_like(slip[s]) for s in "+-"}
    if functional == "net_motion":
        return zero, 0.0
    if functional == "mass_flow":
        # C carries the end-section coordinate x1 = L, so dH/du1 = L/T
        return zero, ctx.mesh.L / T
    raise ValueError(f"unknown functional {functional!r}")


def run_adjoint(ctx: ShapeContext, traj: ForwardTrajectory, functional: str,
                *, n_particle_panels: int, cache: ParticleCache | None = None,
                verbose: bool = False) -> AdjointTrajectory:
    """Backward adjoint sweep against a stored forward trajectory."""
    if not traj.store_traces:
        raise ValueError("forward trajectory was run without traces")
    if cache is None:
        cache = ParticleCache(traj.particle, n_particle_panels, ctx.walls[0].p)
    grid = traj.grid
    wall_bc, dp = _functional_bc(ctx, functional, grid.T)
    N = grid.N

    # final condition at t_N
    last = traj.steps[N]
    if functional == "net_motion":
        F_tar = np.array([-1.0, 0.0])
        T_tar = float(last.solve_config.c[1])
    else:
        F_tar = np.zeros(2)
        T_tar = 0.0

    steps: list = [None] * (N + 1)
    pmesh = particle_curve_mesh(traj.particle, last.solve_config,
                                n_particle_panels, ctx.walls[0].p)
    flow = solve_instant(ctx, pmesh, InstantBC(wall_velocity=wall_bc,
                                               pressure_drop=dp,
                                               mobility=((F_tar[0], F_tar[1]), T_tar)),
                         cache=cache, verbose=verbose)
    steps[N] = AdjointStep(F_target=F_tar, T_target=T_tar, rigid=flow.rigid,
                           part_h=flow.part_h, part_p=flow.part_p,
                           wall_f=flow.wall_f, wall_p=flow.wall_p)

    for n in range(N - 1, -1, -1):
        nxt_fwd = traj.steps[n + 1]
        nxt_adj = steps[n + 1]
        pmesh_next = particle_curve_mesh(traj.particle, nxt_fwd.solve_config,
                                         n_particle_panels, ctx.walls[0].p)
        nE = eshelby_trace(nxt_fwd, nxt_adj.rigid, nxt_adj.part_h, pmesh_next)
        w = pmesh_next.w_arc
        arm_next = rot90(pmesh_next.x)
        F_tar = (nxt_adj.part_h * w[:, None]).sum(axis=0) \
            - grid.dt * (nE * w[:, None]).sum(axis=0)
        T_tar = np.dot(w, np.einsum("ij,ij->i", nxt_adj.part_h, arm_next)) \
            - grid.dt * np.dot(w, np.einsum("ij,ij->i", nE, arm_next))

        fwd = traj.steps[n]
        pmesh = particle_curve_mesh(traj.particle, fwd.solve_config,
                                    n_particle_panels, ctx.walls[0].p)
        xdot = fwd.velocity.w + fwd.velocity.rho * rot90(pmesh.x - pmesh.center)
        arm = rot90(pmesh.x + grid.dt * xdot)
        arm[:, 1] += fwd.wrap_shift  # e3 x (s e1) = s e2 for the lattice wrap
        flow = solve_instant(ctx, pmesh,
                             InstantBC(wall_velocity=wall_bc, pressure_drop=dp,
                                       mobility=((F_tar[0], F_tar[1]), float(T_tar)),
                                       torque_arm=arm),
                             cache=cache, verbose=verbose)
        steps[n] = AdjointStep(F_target=F_tar, T_target=float(T_tar), rigid=flow.rigid,
                               part_h=flow.part_h, part_p=flow.part_p,
                               wall_f=flow.wall_f, wall_p=flow.wall_p, eshelby=nE)
    return AdjointTrajectory(functional=functional, steps=steps)
