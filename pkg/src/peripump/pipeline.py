"""End-to-end drivers: control points in, functionals and gradients out."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .evolution import TimeGrid, run_adjoint, run_forward
from .mesh import build_mesh
from .particle import ParticleShape, RigidConfig
from .sensitivity import basis_gradients, flow_rate, functional_values
from .solver import ParticleCache, ProxyBasis, ShapeContext
from .splines import SplineConfig, WallShape

__all__ = ["Resolution", "Problem", "build_context", "run_case", "evaluate_values"]


@dataclass(frozen=True)
class Resolution:
    wall_panels: int = 21  # multiple of M keeps panels aligned with spline knots
    particle_panels: int = 6
    panel_order: int = 10
    proxy_points: int = 64
    proxy_radius_factor: float = 1.8
    contact_factor: float = 0.5
    section_order: int | None = None


@dataclass
class Problem:
    spline: SplineConfig
    particle: ParticleShape
    start: RigidConfig
    grid: TimeGrid
    resolution: Resolution = field(default_factory=Resolution)

    def cache(self) -> ParticleCache:
        return ParticleCache(self.particle, self.resolution.particle_panels,
                             self.resolution.panel_order)


def build_context(ps, problem: Problem) -> ShapeContext:
    res = problem.resolution
    shape = WallShape(problem.spline, ps)
    mesh = build_mesh(shape, problem.particle, problem.start,
                      n_wall_panels=res.wall_panels,
                      n_particle_panels=res.particle_panels,
                      p=res.panel_order,
                      p_section=res.section_order,
                      contact_factor=res.contact_factor)
    proxy = ProxyBasis.for_walls(shape, res.proxy_points, res.proxy_radius_factor)
    return ShapeContext(shape, mesh, proxy)


def run_case(ps, problem: Problem, functionals=("dissipation", "net_motion"),
             cache: ParticleCache | None = None, verbose: bool = False):
    """Forward + requested adjoints + gradients at one shape."""
    cache = cache or problem.cache()
    ctx = build_context(ps, problem)
    res = problem.resolution
    traj = run_forward(ctx, problem.particle, problem.start, problem.grid,
                       n_particle_panels=res.particle_panels, cache=cache,
                       contact_factor=res.contact_factor, verbose=verbose)
    adjoints = {name: run_adjoint(ctx, traj, name,
                                  n_particle_panels=res.particle_panels,
                                  cache=cache, verbose=verbose)
                for name in functionals}
    area = problem.particle.area
    values = functional_values(ctx, traj, area)
    grads = basis_gradients(ctx, traj, adjoints, area)
    return ctx, traj, adjoints, values, grads


def evaluate_values(ps, problem: Problem, cache: ParticleCache | None = None):
    """Forward-only functional values at one shape (used by FD checks)."""
    cache = cache or problem.cache()
    ctx = build_context(ps, problem)
    res = problem.resolution
    traj = run_forward(ctx, problem.particle, problem.start, problem.grid,
                       n_particle_panels=res.particle_panels, cache=cache,
                       contact_factor=res.contact_factor)
    vals = functional_values(ctx, traj, problem.particle.area)
    return vals


def evaluate_values_dict(ps, problem: Problem, cache=None) -> dict:
    vals = evaluate_values(ps, problem, cache)
    return {
        "dissipation": vals.dissipation,
        "net_motion": vals.net_motion,
        "volume": vals.volume,
        "mass_flow": vals.mass_flow_c,
        "flow_rate": flow_rate(vals, problem.particle.area, problem.grid.T),
    }


class ShapeObjective:
    """Cached dissipation/constraint evaluations over control points.

    Provides the (value, gradient) callables consumed by the augmented
    Lagrangian driver; each distinct shape runs one forward and two
    adjoint sweeps, shared between the objective and the constraints.
    """

    def __init__(self, problem: Problem, volume_target: float,
                 motion_target: float):
        self.problem = problem
        self.V0 = float(volume_target)
        self.D0 = float(motion_target)
        self.cache = problem.cache()
        self._store: dict = {}
        self.evaluations = 0

    def _evaluate(self, ps):
        key = np.asarray(ps, dtype=float).tobytes()
        if key not in self._store:
            self.evaluations += 1
            _, _, _, values, grads = run_case(
                np.asarray(ps, dtype=float), self.problem,
                functionals=("dissipation", "net_motion"), cache=self.cache)
            self._store[key] = (values, grads)
        return self._store[key]

    def lookup(self, ps):
        key = np.asarray(ps, dtype=float).tobytes()
        return self._store.get(key)

    def objective(self, ps):
        values, grads = self._evaluate(ps)
        return values.dissipation, grads["dissipation"]

    def constraints(self, ps):
        values, grads = self._evaluate(ps)
        C = np.array([values.volume - self.V0, values.net_motion - self.D0])
        G = np.vstack([grads["volume"], grads["net_motion"]])
        return C, G
