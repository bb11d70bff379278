"""Functional values and boundary-only shape gradients.

Gradients are directional derivatives along the 4M-2 control-point basis
perturbations.  All wall expressions consume per-wall data (ell, dl*,
curvature) and the forward/adjoint traces f_s = f.tau and p = -f.n; time
integrals are left-endpoint sums matching the forward Euler stepping.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .evolution import AdjointTrajectory, ForwardTrajectory, TimeGrid
from .solver import ShapeContext

__all__ = [
    "FunctionalValues",
    "functional_values",
    "wall_perturbation",
    "volume",
    "volume_gradient",
    "grad_dissipation",
    "grad_net_motion",
    "grad_mass_flow",
    "fd_gradient",
]

TWO_PI = 2.0 * np.pi


@dataclass(frozen=True)
class FunctionalValues:
    dissipation: float
    net_motion: float
    volume: float
    mass_flow_c: float

    @property
    def flow_rate(self) -> float:
        # Q is assembled by the caller (needs the particle area and horizon)
        raise AttributeError("use flow_rate(values, area, T)")


def flow_rate(values: FunctionalValues, particle_area: float, T: float) -> float:
    """Q = V + C - (|omega|/T) D."""
    return values.volume + values.mass_flow_c \
        - particle_area / T * values.net_motion


def channel_area(ctx: ShapeContext) -> float:
    """Area enclosed between the walls over one period (boundary quadrature)."""
    area = 0.0
    for sign, m in zip((-1.0, 1.0), ctx.walls):
        x2 = m.x[:, 1]
        dx1 = m.tau[:, 0] * m.speed
        area += sign * np.dot(m.w_param, x2 * dx1)
    return float(area)


def volume(ctx: ShapeContext, particle_area: float) -> float:
    """Fluid volume V = |Omega| = wall-enclosed area minus the particle."""
    return channel_area(ctx) - particle_area


def wall_slip_plus_wave(ctx: ShapeContext):
    """uD + e1 per wall at the mesh nodes."""
    slip = ctx.wall_data_slip()
    return {s: slip[s] + np.array([1.0, 0.0]) for s in "+-"}


def functional_values(ctx: ShapeContext, traj: ForwardTrajectory,
                      particle_area: float) -> FunctionalValues:
    grid = traj.grid
    drive = wall_slip_plus_wave(ctx)
    J = 0.0
    C = 0.0
    for step in traj.steps[: grid.N]:
        for s, m in zip("+-", ctx.walls):
            J += grid.dt * np.dot(m.w_arc,
                                  np.einsum("ij,ij->i", step.wall_f[s], drive[s]))
        C += grid.dt * step.flux_L
    C *= ctx.mesh.L / grid.T
    return FunctionalValues(
        dissipation=float(J),
        net_motion=traj.net_motion,
        volume=volume(ctx, particle_area),
        mass_flow_c=float(C),
    )


def wall_perturbation(ctx: ShapeContext, delta):
    """Transformation velocity fields of both walls for one perturbation."""
    return {s: ctx.shape.transformation_velocity(delta, s, m.t, m.w_param)
            for s, m in zip("+-", ctx.walls)}


def volume_gradient(ctx: ShapeContext, fields) -> float:
    """V'(theta) = integral over Gamma of theta_n."""
    out = 0.0
    for s, m in zip("+-", ctx.walls):
        out += np.dot(m.w_arc, fields[s].theta_n)
    return float(out)


def _wall_gradient_sum(ctx, traj, adj, fields, include_forward: bool):
    """Time sum of the wall gradient integrand.

    include_forward=True gives the dissipation form
        [kappa ell (f_s + fhat_s) - f_s fhat_s] theta_n
        + dl* (f_s + fhat_s) - ell (ds theta_n)(p + phat),
    otherwise the net-motion/mass-flow form
        [ell kappa fhat_s - f_s fhat_s] theta_n + dl* fhat_s
        - ell (ds theta_n) phat.
    """
    grid = traj.grid
    total = 0.0
    for n in range(grid.N):
        fstep = traj.steps[n]
        astep = adj.steps[n]
        for s, m in zip("+-", ctx.walls):
            ell = ctx.ell[s]
            pf = fields[s]
            f = fstep.wall_f[s]
            fh = astep.wall_f[s]
            f_s = np.einsum("ij,ij->i", f, m.tau)
            fh_s = np.einsum("ij,ij->i", fh, m.tau)
            p = -np.einsum("ij,ij->i", f, m.normal)
            ph = -np.einsum("ij,ij->i", fh, m.normal)
            if include_forward:
                bulk = (m.kappa * ell * (f_s + fh_s) - f_s * fh_s) * pf.theta_n \
                    + pf.dl_star * (f_s + fh_s) \
                    - ell * pf.ds_theta_n * (p + ph)
            else:
                bulk = (m.kappa * ell * fh_s - f_s * fh_s) * pf.theta_n \
                    + pf.dl_star * fh_s \
                    - ell * pf.ds_theta_n * ph
            total += grid.dt * np.dot(m.w_arc, bulk)
    return float(total)


def grad_dissipation(ctx, traj, adj: AdjointTrajectory, fields) -> float:
    """Directional derivative of J_W for one perturbation field."""
    if adj.functional != "dissipation":
        raise ValueError("adjoint trajectory was not run for the dissipation functional")
    _check_lengths(traj, adj)
    return _wall_gradient_sum(ctx, traj, adj, fields, include_forward=True)


def grad_net_motion(ctx, traj, adj: AdjointTrajectory, fields) -> float:
    if adj.functional != "net_motion":
        raise ValueError("adjoint trajectory was not run for the net-motion functional")
    _check_lengths(traj, adj)
    return _wall_gradient_sum(ctx, traj, adj, fields, include_forward=False)


def grad_mass_flow(ctx, traj, adj: AdjointTrajectory, fields) -> float:
    """C'(theta): wall expression plus the end-section term.

    The end-section term samples u1 theta_2 at the wall endpoints z+/-;
    u1 there is the static slip data, so the term is L/T * T * [...] with
    the same left-endpoint time sum as every other integral.
    """
    if adj.functional != "mass_flow":
        raise ValueError("adjoint trajectory was not run for the mass-flow functional")
    _check_lengths(traj, adj)
    wall = _wall_gradient_sum(ctx, traj, adj, fields, include_forward=False)
    ends = {}
    for s in "+-":
        fr = ctx.shape.frenet(s, np.array([TWO_PI]))
        u1 = ctx.ell[s] * fr.tau[0, 0]
        ends[s] = u1 * fields[s].theta_end[1]
    grid = traj.grid
    end_term = ctx.mesh.L / grid.T * grid.N * grid.dt * (ends["+"] - ends["-"])
    return wall + end_term


def _check_lengths(traj, adj):
    if len(adj.steps) != len(traj.steps):
        raise ValueError("forward and adjoint trajectories have different lengths")


def basis_gradients(ctx, traj, adjoints: dict, particle_area: float) -> dict:
    """All 4M-2 directional derivatives for every requested functional.

    adjoints maps functional name -> AdjointTrajectory; always includes
    the volume gradient, and assembles Q' when all ingredients are there.
    """
    n_free = ctx.shape.cfg.n_free
    out = {"volume": np.zeros(n_free)}
    for name in adjoints:
        out[name] = np.zeros(n_free)
    if {"net_motion", "mass_flow"} <= set(adjoints):
        out["flow_rate"] = np.zeros(n_free)
    for i in range(n_free):
        delta = np.zeros(n_free)
        delta[i] = 1.0
        fields = wall_perturbation(ctx, delta)
        out["volume"][i] = volume_gradient(ctx, fields)
        if "dissipation" in adjoints:
            out["dissipation"][i] = grad_dissipation(ctx, traj,
                                                     adjoints["dissipation"], fields)
        if "net_motion" in adjoints:
            out["net_motion"][i] = grad_net_motion(ctx, traj,
                                                   adjoints["net_motion"], fields)
        if "mass_flow" in adjoints:
            out["mass_flow"][i] = grad_mass_flow(ctx, traj,
                                                 adjoints["mass_flow"], fields)
        if "flow_rate" in out:
            out["flow_rate"][i] = out["volume"][i] + out["mass_flow"][i] \
                - particle_area / traj.grid.T * out["net_motion"][i]
    return out


def fd_gradient(evaluate, ps, delta, eta=1e-4) -> float:
    """Central difference (J(ps + eta delta) - J(ps - eta delta)) / (2 eta)."""
    if eta <= 0:
        raise ValueError("step size must be positive")
    ps = np.asarray(ps, dtype=float)
    delta = np.asarray(delta, dtype=float)
    return (evaluate(ps + eta * delta) - evaluate(ps - eta * delta)) / (2 * eta)
