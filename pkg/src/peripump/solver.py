"""Instantaneous periodic Stokes solves.

Velocity ansatz: wall double layer + particle single layer, each summed
over the central lattice cell and its two neighbors, plus K proxy
Stokeslets on a circle enclosing the cell that carry the influence of
the far images.  Periodicity of velocity and traction across the end
sections is enforced algebraically at collocation nodes, the prescribed
pressure drop entering as a traction mismatch -dp * e1 on the far
section.  The particle block supports a mobility closure (net force and
torque of the particle traction prescribed, rigid velocity unknown) and
a prescribed-rigid-velocity variant.

The solved state exposes boundary traces: velocity anywhere, traction
and pressure on the particle from the on-curve operators, traction on
the walls by extrapolation along the inward normal (the wall double
layer is hypersingular on its own curve; a short graded-quadrature
ladder plus polynomial extrapolation avoids finite-part machinery).
Pressure on both boundaries uses p = -f.n, exact here because the
boundary data are tangential with normal-directed tangential derivative.
"""

from __future__ import annotations

import json
import logging
import time
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from . import kernels
from .mesh import BoundaryMesh, CurveMesh, cross_operator, self_operator
from .particle import ParticleShape, RigidConfig, RigidVelocity, rot90
from .splines import GeometryError, WallShape

__all__ = [
    "ProxyBasis",
    "InstantBC",
    "FlowSolution",
    "ShapeContext",
    "SolverError",
    "solve_instant",
]

log = logging.getLogger("peripump.solver")

TWO_PI = 2.0 * np.pi
TIKHONOV = 1e-8
EXTRAP_LADDER = (0.60, 0.45, 0.33, 0.24, 0.17, 0.12)


class SolverError(RuntimeError):
    """Instantaneous solve failed (conditioning or residual)."""


@dataclass
class ProxyBasis:
    """Stokeslet proxy sources on a circle enclosing the flow cell."""

    points: np.ndarray
    center: np.ndarray
    radius: float

    @classmethod
    def for_walls(cls, shape: WallShape, K: int, radius_factor: float = 1.8):
        ts = np.linspace(0.0, TWO_PI, 257)
        pts = np.vstack([shape.point("+", ts), shape.point("-", ts)])
        lo, hi = pts.min(axis=0), pts.max(axis=0)
        center = 0.5 * (lo + hi)
        half_diag = 0.5 * np.linalg.norm(hi - lo)
        radius = radius_factor * half_diag
        ang = TWO_PI * np.arange(K) / K
        points = center + radius * np.stack([np.cos(ang), np.sin(ang)], axis=-1)
        gap = min(np.linalg.norm(pts - p, axis=1).min() for p in points)
        if gap <= 0.05 * half_diag:
            raise GeometryError("proxy ring touches the fluid domain closure")
        return cls(points=points, center=center, radius=radius)

    @property
    def K(self) -> int:
        return len(self.points)


@dataclass
class InstantBC:
    """Boundary data of one instantaneous solve.

    Exactly one particle condition applies: mobility (net force/torque of
    the particle traction prescribed, rigid velocity solved for) or a
    prescribed rigid velocity.  torque_arm optionally replaces the moment
    arm e3 x x in the mobility closure (the adjoint recursion transports
    the arm by one explicit step).
    """

    wall_velocity: dict  # side -> (n, 2) velocity samples
    pressure_drop: float = 0.0
    mobility: tuple | None = ((0.0, 0.0), 0.0)       # (F_net, T_net)
    prescribed: RigidVelocity | None = None          # centroid-based (w, rho)
    torque_arm: np.ndarray | None = None

    def __post_init__(self):
        if self.mobility is not None and self.prescribed is not None:
            raise ValueError("exactly one particle condition variant allowed")


@dataclass
class FlowSolution:
    """Solved densities, proxy coefficients, rigid velocity and traces."""

    mesh: BoundaryMesh
    proxy: ProxyBasis
    bc: InstantBC
    tau_wall: np.ndarray
    tau_part: np.ndarray
    coeffs: np.ndarray
    rigid: RigidVelocity | None
    residual: float
    pressure_gauge: float = 0.0
    wall_u: dict = field(default_factory=dict)
    wall_f: dict = field(default_factory=dict)
    wall_p: dict = field(default_factory=dict)
    part_u: np.ndarray | None = None
    part_h: np.ndarray | None = None
    part_p: np.ndarray | None = None
    diagnostics: dict = field(default_factory=dict)


# ---------------------------------------------------------------------------
# shape-level cached context


class ShapeContext:
    """Per-shape cache: wall meshes, proxy ring, wall-only operator blocks.

    The walls are static in the wave frame, so everything that does not
    involve the particle is assembled once per shape and reused across
    time steps and adjoint sweeps.
    """

    def __init__(self, shape: WallShape, mesh: BoundaryMesh, proxy: ProxyBasis):
        self.shape = shape
        self.mesh = mesh
        self.proxy = proxy
        self.lattice = mesh.lattice
        self.walls = mesh.walls
        self.wall_n = mesh.wall_nodes()
        t, w = self._wall_quadrature()
        self.ell = {s: shape.length_ratio(s, t[s], w[s]) for s in "+-"}
        self._wall_blocks()
        self._section_blocks()
        self._trace_blocks()

    def _wall_quadrature(self):
        t = {s: m.t for s, m in zip("+-", self.walls)}
        w = {s: m.w_param for s, m in zip("+-", self.walls)}
        return t, w

    def wall_data_slip(self):
        """Forward wall Dirichlet data uD = ell * tau per wall."""
        return {s: self.ell[s] * m.tau for s, m in zip("+-", self.walls)}

    # -- operator blocks ---------------------------------------------------

    def _images(self):
        return (np.zeros(2), self.lattice, -self.lattice)

    def _wall_blocks(self):
        """Velocity of wall DLP and proxies at wall nodes (Dirichlet rows)."""
        wp, wm = self.walls
        n = self.wall_n
        A = np.zeros((2 * n, 2 * n))
        off = 2 * wp.n_nodes
        for i, tgt in enumerate((wp, wm)):
            rows = slice(0, off) if i == 0 else slice(off, 2 * n)
            for j, src in enumerate((wp, wm)):
                cols = slice(0, off) if j == 0 else slice(off, 2 * n)
                if i == j:
                    A[rows, cols] = self_operator(src, "D", images=(-1, 0, 1))
                else:
                    A[rows, cols] = cross_operator("D", tgt.x, src,
                                                   shifts=self._images())
        # fluid-side limit of the double layer: PV - tau/2
        A -= 0.5 * np.eye(2 * n)
        self.wall_wall_u = A
        self.wall_proxy_u = np.vstack([
            kernels.as_matrix(kernels.single_layer(m.x, self.proxy.points))
            for m in self.walls
        ])

    def _section_blocks(self):
        """u- and f-match rows of the periodicity conditions (wall + proxy part)."""
        sec = self.mesh.section
        x0 = sec.x0
        xL = x0 + self.lattice
        e1 = np.tile(np.array([1.0, 0.0]), (len(x0), 1))
        both = np.vstack([xL, x0])
        e1b = np.vstack([e1, e1])
        nsec2 = 2 * len(x0)
        rows_u, rows_f = [], []
        for m in self.walls:
            bu = cross_operator("D", both, m, shifts=self._images())
            bf = cross_operator("TD", both, m, shifts=self._images(), tgt_n=e1b)
            rows_u.append(bu[:nsec2] - bu[nsec2:])
            rows_f.append(bf[:nsec2] - bf[nsec2:])
        self.sec_wall_u = np.hstack(rows_u)
        self.sec_wall_f = np.hstack(rows_f)

        SL = kernels.kernel_suite(xL, self.proxy.points, n_tgt=e1, want=("S", "TS"))
        S0 = kernels.kernel_suite(x0, self.proxy.points, n_tgt=e1, want=("S", "TS"))
        self.sec_proxy_u = kernels.as_matrix(SL["S"]) - kernels.as_matrix(S0["S"])
        self.sec_proxy_f = kernels.as_matrix(SL["TS"]) - kernels.as_matrix(S0["TS"])

    def _trace_blocks(self):
        """Wall-traction extrapolation operators (wall and proxy sources).

        Traction is evaluated at a ladder of points x - eps*n inside the
        fluid and extrapolated to eps -> 0; the ladder collapse weights
        are Lagrange coefficients at 0.
        """
        lam = _ladder_coefficients()
        n_lad = len(EXTRAP_LADDER)
        self.extrap_targets = {}
        wall_ops = []
        proxy_ops = []
        for m in self.walls:
            eps = np.outer(np.array(EXTRAP_LADDER), m.panel_arc[m.panel_of])
            stacked = np.concatenate([m.x - e[:, None] * m.normal for e in eps])
            nrm = np.tile(m.normal, (n_lad, 1))
            self.extrap_targets[m.label] = (stacked, nrm)
            blk = np.hstack([
                cross_operator("TD", stacked, wsrc, shifts=self._images(), tgt_n=nrm)
                for wsrc in self.walls
            ])
            nw2 = 2 * m.n_nodes
            wall_ops.append(np.einsum("k,kij->ij",
                                      lam, blk.reshape(n_lad, nw2, -1)))
            TSp = kernels.as_matrix(kernels.kernel_suite(
                stacked, self.proxy.points, n_tgt=nrm, want=("TS",))["TS"])
            proxy_ops.append(np.einsum("k,kij->ij",
                                       lam, TSp.reshape(n_lad, nw2, -1)))
        self.trace_wall_f_wall = wall_ops
        self.trace_wall_f_proxy = proxy_ops


def _ladder_coefficients():
    """Lagrange extrapolation-to-zero coefficients for the eps ladder."""
    xs = np.array(EXTRAP_LADDER)
    lam = np.empty_like(xs)
    for k in range(len(xs)):
        others = np.delete(xs, k)
        lam[k] = np.prod(others / (others - xs[k]))
    return lam


# ---------------------------------------------------------------------------
# assembly


class ParticleCache:
    """Body-frame self-operators of the particle, conjugated per step.

    The particle's own single-layer and traction operators depend on the
    world placement only through the rotation, so they are assembled once
    in the body frame and rotated: A_world = (I (x) R) A_body (I (x) R^T).
    """

    def __init__(self, shape: ParticleShape, n_panels: int, p: int):
        from .mesh import particle_curve_mesh, self_operator as _self_op

        self.shape = shape
        self.n_panels = n_panels
        self.p = p
        body = particle_curve_mesh(shape, RigidConfig(c=[0.0, 0.0]), n_panels, p)
        self.body_mesh = body
        self.S_body = _self_op(body, "S")
        self.TS_body = _self_op(body, "TS") + 0.5 * np.eye(2 * body.n_nodes)

    @staticmethod
    def _conjugate(A, R):
        n = A.shape[0] // 2
        m = A.shape[1] // 2
        A4 = A.reshape(n, 2, m, 2)
        return np.einsum("ac,icjd,bd->iajb", R, A4, R).reshape(2 * n, 2 * m)

    def world_ops(self, cfg: RigidConfig):
        R = cfg.rotation()
        return self._conjugate(self.S_body, R), self._conjugate(self.TS_body, R)


def _particle_blocks(ctx: ShapeContext, pmesh: CurveMesh, cache: ParticleCache | None = None):
    """All particle-dependent operator blocks for one time step."""
    shifts = (np.zeros(2), ctx.lattice, -ctx.lattice)
    out = {}
    # velocity of the particle single layer at wall nodes
    out["wall_part_u"] = np.vstack([
        cross_operator("S", m.x, pmesh, shifts=shifts) for m in ctx.walls
    ])
    # velocity rows on the particle
    out["part_wall_u"] = np.hstack([
        cross_operator("D", pmesh.x, m, shifts=shifts) for m in ctx.walls
    ])
    if cache is not None:
        self_S, self_TS = cache.world_ops(pmesh.rigid_cfg)
    else:
        self_S = self_operator(pmesh, "S")
        self_TS = self_operator(pmesh, "TS") + 0.5 * np.eye(2 * pmesh.n_nodes)
    self_S = self_S + cross_operator("S", pmesh.x, pmesh,
                                     shifts=(ctx.lattice, -ctx.lattice))
    out["part_part_u"] = self_S
    out["part_proxy_u"] = kernels.as_matrix(
        kernels.single_layer(pmesh.x, ctx.proxy.points))
    # periodicity rows: particle sources
    sec = ctx.mesh.section
    x0, xL = sec.x0, sec.x0 + ctx.lattice
    e1 = np.tile(np.array([1.0, 0.0]), (len(x0), 1))
    both = np.vstack([xL, x0])
    e1b = np.vstack([e1, e1])
    n2 = 2 * len(x0)
    bu = cross_operator("S", both, pmesh, shifts=shifts)
    bf = cross_operator("TS", both, pmesh, shifts=shifts, tgt_n=e1b)
    out["sec_part_u"] = bu[:n2] - bu[n2:]
    out["sec_part_f"] = bf[:n2] - bf[n2:]
    # traction operators on the particle boundary (fluid side: PV + tau/2)
    out["part_h_part"] = self_TS + cross_operator(
        "TS", pmesh.x, pmesh, shifts=(ctx.lattice, -ctx.lattice),
        tgt_n=pmesh.normal)
    out["part_h_wall"] = np.hstack([
        cross_operator("TD", pmesh.x, m, shifts=shifts, tgt_n=pmesh.normal)
        for m in ctx.walls
    ])
    out["part_h_proxy"] = kernels.as_matrix(kernels.kernel_suite(
        pmesh.x, ctx.proxy.points, n_tgt=pmesh.normal, want=("TS",))["TS"])
    return out


def assemble(ctx: ShapeContext, pmesh: CurveMesh | None, bc: InstantBC,
             cache: ParticleCache | None = None):
    """Extended least-squares system for one instantaneous solve."""
    nw = ctx.wall_n
    npart = 0 if pmesh is None else pmesh.n_nodes
    K = ctx.proxy.K
    mobility = pmesh is not None and bc.mobility is not None
    ncols = 2 * nw + 2 * npart + 2 * K + (3 if mobility else 0)
    nsec = len(ctx.mesh.section.x0)
    nrows = 2 * nw + 2 * npart + 4 * nsec + (3 if mobility else 0)

    A = np.zeros((nrows, ncols))
    rhs = np.zeros(nrows)
    cw = slice(0, 2 * nw)
    cp = slice(2 * nw, 2 * nw + 2 * npart)
    cc = slice(2 * nw + 2 * npart, 2 * nw + 2 * npart + 2 * K)
    cr = slice(ncols - 3, ncols) if mobility else None

    pb = None if pmesh is None else _particle_blocks(ctx, pmesh, cache)

    # wall Dirichlet rows
    rw = slice(0, 2 * nw)
    A[rw, cw] = ctx.wall_wall_u
    A[rw, cc] = ctx.wall_proxy_u
    if pmesh is not None:
        A[rw, cp] = pb["wall_part_u"]
    rhs[rw] = np.concatenate([bc.wall_velocity["+"].ravel(),
                              bc.wall_velocity["-"].ravel()])

    # particle no-slip rows
    if pmesh is not None:
        rp = slice(2 * nw, 2 * nw + 2 * npart)
        A[rp, cw] = pb["part_wall_u"]
        A[rp, cp] = pb["part_part_u"]
        A[rp, cc] = pb["part_proxy_u"]
        if mobility:
            spin = rot90(pmesh.x - pmesh.center)  # centroid-based rigid columns
            A[rp, cr.start + 0] = -np.tile([1.0, 0.0], npart)
            A[rp, cr.start + 1] = -np.tile([0.0, 1.0], npart)
            A[rp, cr.start + 2] = -spin.ravel()
        else:
            u_rigid = bc.prescribed.w + bc.prescribed.rho * rot90(pmesh.x - pmesh.center)
            rhs[rp] = u_rigid.ravel()

    # periodicity rows
    r0 = 2 * nw + 2 * npart
    ru = slice(r0, r0 + 2 * nsec)
    rf = slice(r0 + 2 * nsec, r0 + 4 * nsec)
    A[ru, cw] = ctx.sec_wall_u
    A[ru, cc] = ctx.sec_proxy_u
    A[rf, cw] = ctx.sec_wall_f
    A[rf, cc] = ctx.sec_proxy_f
    if pmesh is not None:
        A[ru, cp] = pb["sec_part_u"]
        A[rf, cp] = pb["sec_part_f"]
    # traction mismatch f(GammaL) - f(Gamma0) = -dp * e1
    rhs[rf] = np.tile([-bc.pressure_drop, 0.0], nsec)

    # mobility closure rows: weighted integrals of the particle traction
    if mobility:
        rm = slice(nrows - 3, nrows)
        w2 = np.repeat(pmesh.w_arc, 2)
        Hp = pb["part_h_part"] * 1.0
        Hw = pb["part_h_wall"]
        Hc = pb["part_h_proxy"]
        pick = np.zeros((3, 2 * npart))
        pick[0, 0::2] = 1.0
        pick[1, 1::2] = 1.0
        arm = rot90(pmesh.x) if bc.torque_arm is None else bc.torque_arm
        pick[2] = arm.ravel()
        pick = pick * w2[None, :]
        A[rm, cp] = pick @ Hp
        A[rm, cw] = pick @ Hw
        A[rm, cc] = pick @ Hc
        F, T = bc.mobility
        rhs[rm] = [F[0], F[1], T]

    return A, rhs, pb


def solve_instant(ctx: ShapeContext, pmesh: CurveMesh | None, bc: InstantBC,
                  *, want_traces: bool = True, verbose: bool = False,
                  cache: ParticleCache | None = None) -> FlowSolution:
    t0 = time.perf_counter()
    A, rhs, pb = assemble(ctx, pmesh, bc, cache)
    nw = ctx.wall_n
    npart = 0 if pmesh is None else pmesh.n_nodes
    K = ctx.proxy.K
    mobility = pmesh is not None and bc.mobility is not None

    # Tikhonov damping picks the minimum-norm least-squares solution: the
    # collocation system is underdetermined and undamped basic solutions
    # excite aliasing modes of the densities (spurious interior fields).
    ncols = A.shape[1]
    c0 = 2 * nw + 2 * npart
    Afull = np.vstack([A, TIKHONOV * np.eye(ncols)])
    bfull = np.concatenate([rhs, np.zeros(ncols)])
    sol, _, rank, sv = scipy.linalg.lstsq(Afull, bfull, lapack_driver="gelsy")

    resid = A @ sol - rhs
    scale = max(1.0, np.max(np.abs(rhs)))
    residual = float(np.max(np.abs(resid)) / scale)
    if not np.all(np.isfinite(sol)) or residual > 1e-6:
        cond = float(np.linalg.cond(A))
        raise SolverError(
            f"instantaneous solve failed: residual {residual:.3e}, cond~{cond:.3e}")

    tau_wall = sol[0 : 2 * nw]
    tau_part = sol[2 * nw : 2 * nw + 2 * npart]
    coeffs = sol[c0 : c0 + 2 * K]
    rigid = None
    if pmesh is not None:
        if mobility:
            rigid = RigidVelocity(w=sol[-3:-1], rho=float(sol[-1]))
        else:
            rigid = bc.prescribed

    flow = FlowSolution(mesh=ctx.mesh, proxy=ctx.proxy, bc=bc,
                        tau_wall=tau_wall, tau_part=tau_part, coeffs=coeffs,
                        rigid=rigid, residual=residual)
    if want_traces:
        _attach_traces(ctx, pmesh, pb, flow)
    flow.diagnostics = {
        "residual": residual,
        "rank": int(rank),
        "rows": int(A.shape[0]),
        "cols": int(A.shape[1]),
        "time": time.perf_counter() - t0,
    }
    if verbose:
        log.info(json.dumps({"solve": flow.diagnostics}))
    return flow


# ---------------------------------------------------------------------------
# traces and field evaluation


def _attach_traces(ctx: ShapeContext, pmesh, pb, flow: FlowSolution):
    nwp = ctx.walls[0].n_nodes
    uw = ctx.wall_wall_u @ flow.tau_wall + ctx.wall_proxy_u @ flow.coeffs
    if pmesh is not None:
        uw = uw + pb["wall_part_u"] @ flow.tau_part
    flow.wall_u = {"+": uw[: 2 * nwp].reshape(-1, 2),
                   "-": uw[2 * nwp :].reshape(-1, 2)}

    for side, m, wop, popr in zip("+-", ctx.walls, ctx.trace_wall_f_wall,
                                  ctx.trace_wall_f_proxy):
        f = wop @ flow.tau_wall + popr @ flow.coeffs
        if pmesh is not None:
            lam = _ladder_coefficients()
            shifts = (np.zeros(2), ctx.lattice, -ctx.lattice)
            stacked, nrm = ctx.extrap_targets[m.label]
            blk = cross_operator("TS", stacked, pmesh, shifts=shifts, tgt_n=nrm)
            part_op = np.einsum("k,kij->ij", lam,
                                blk.reshape(len(lam), 2 * m.n_nodes, -1))
            f = f + part_op @ flow.tau_part
        f = f.reshape(-1, 2)
        flow.wall_f[side] = f
        flow.wall_p[side] = -np.einsum("ij,ij->i", f, m.normal)

    if pmesh is not None:
        h = pb["part_h_part"] @ flow.tau_part + pb["part_h_wall"] @ flow.tau_wall \
            + pb["part_h_proxy"] @ flow.coeffs
        flow.part_h = h.reshape(-1, 2)
        flow.part_p = -np.einsum("ij,ij->i", flow.part_h, pmesh.normal)
        flow.part_u = flow.rigid.w + flow.rigid.rho * rot90(pmesh.x - pmesh.center)

    flow.pressure_gauge = _section_pressure_mean(ctx, pmesh, flow)


def _section_pressure_mean(ctx: ShapeContext, pmesh, flow) -> float:
    sec = ctx.mesh.section
    p = evaluate_pressure(ctx, pmesh, flow, sec.x0)
    return float(np.dot(sec.weights, p) / sec.weights.sum())


def evaluate_velocity(ctx: ShapeContext, pmesh, flow: FlowSolution, pts) -> np.ndarray:
    """Velocity of the representation at interior points (near-aware)."""
    pts = np.atleast_2d(pts)
    shifts = (np.zeros(2), ctx.lattice, -ctx.lattice)
    u = kernels.as_matrix(kernels.single_layer(pts, ctx.proxy.points)) @ flow.coeffs
    for m, tw in zip(ctx.walls, _split_wall(flow.tau_wall, ctx)):
        u = u + cross_operator("D", pts, m, shifts=shifts) @ tw
    if pmesh is not None:
        u = u + cross_operator("S", pts, pmesh, shifts=shifts) @ flow.tau_part
    return u.reshape(-1, 2)


def evaluate_pressure(ctx: ShapeContext, pmesh, flow: FlowSolution, pts) -> np.ndarray:
    """Pressure of the representation at interior points (no gauge shift)."""
    pts = np.atleast_2d(pts)
    shifts = (np.zeros(2), ctx.lattice, -ctx.lattice)
    PS = kernels.pressure_kernels(pts, ctx.proxy.points,
                                  np.zeros_like(ctx.proxy.points))[0]
    p = PS.reshape(len(pts), -1) @ flow.coeffs
    for m, tw in zip(ctx.walls, _split_wall(flow.tau_wall, ctx)):
        p = p + cross_operator("PD", pts, m, shifts=shifts) @ tw
    if pmesh is not None:
        p = p + cross_operator("PS", pts, pmesh, shifts=shifts) @ flow.tau_part
    return p


def _split_wall(tau_wall, ctx):
    n0 = 2 * ctx.walls[0].n_nodes
    return tau_wall[:n0], tau_wall[n0:]


def flux(ctx: ShapeContext, pmesh, flow: FlowSolution,
         particle_state: tuple | None = None) -> float:
    """Volume flux of u through the x1 = L end section.

    particle_state: (ParticleShape, RigidConfig) for the rigid-velocity
    extension when the particle (or an image) straddles the section.
    """
    sec = ctx.mesh.section
    pts = sec.x0 + ctx.lattice
    u1 = _section_velocity(ctx, pmesh, flow, pts, particle_state)
    return float(np.dot(sec.weights, u1))


def flux_at_zero(ctx: ShapeContext, pmesh, flow: FlowSolution,
                 particle_state: tuple | None = None) -> float:
    sec = ctx.mesh.section
    u1 = _section_velocity(ctx, pmesh, flow, sec.x0, particle_state)
    return float(np.dot(sec.weights, u1))


def _section_velocity(ctx, pmesh, flow, pts, particle_state):
    pts = np.atleast_2d(pts)
    inside = np.zeros(len(pts), dtype=bool)
    if particle_state is not None:
        shape, cfg = particle_state
        for s in (np.zeros(2), ctx.lattice, -ctx.lattice):
            inside |= shape.contains(pts - s, cfg)
    u1 = np.empty(len(pts))
    if np.any(~inside):
        u = evaluate_velocity(ctx, pmesh, flow, pts[~inside])
        u1[~inside] = u[:, 0]
    if np.any(inside):
        shape, cfg = particle_state
        best = pts[inside].copy()
        # use the unwrapped particle copy nearest each point
        for k, pt in enumerate(pts[inside]):
            cands = [pt - s for s in (np.zeros(2), ctx.lattice, -ctx.lattice)
                     if shape.contains(pt - s, cfg)[0]]
            best[k] = cands[0]
        uin = flow.rigid.w + flow.rigid.rho * rot90(best - cfg.c)
        u1[inside] = uin[:, 0]
    return u1
