"""Rigid-particle kinematics.

The particle is a closed body-frame curve advected rigidly: a world
configuration is (c, phi) with c the current centroid and phi the total
rotation angle.  The boundary is parametrized counterclockwise and the
normal points out of the fluid, i.e. into the particle, so that the
identity d_s u = rho * rot90(tau) = rho * n holds for rigid velocity
fields (rot90 is the action of the skew tensor e2@e1 - e1@e2).
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np

from .splines import GeometryError

__all__ = [
    "ParticleShape",
    "RigidConfig",
    "RigidVelocity",
    "rot90",
    "rigid_velocity_field",
    "advance",
    "net_motion",
]

TWO_PI = 2.0 * np.pi


def rot90(v):
    """Action of e3 x ( . ): rot90(v) = (-v2, v1). Works on (..., 2) arrays."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


class ParticleShape:
    """Closed reference boundary curve in the body frame.

    kind: "circle" (radius r) or "ellipse" (semi-axes a >= b).  Sampled
    curves can be added by subclassing `_body_point`/`_body_derivs`.
    The body frame has its centroid at the origin; the initial world
    placement (centroid, tilt) lives in RigidConfig.
    """

    def __init__(self, kind: str, *, radius: float | None = None,
                 semi_axes: tuple[float, float] | None = None):
        self.kind = kind
        if kind == "circle":
            if radius is None or radius <= 0:
                raise GeometryError("circle particle needs a positive radius")
            self.a = self.b = float(radius)
        elif kind == "ellipse":
            if semi_axes is None:
                raise GeometryError("ellipse particle needs semi_axes=(a, b)")
            a, b = map(float, semi_axes)
            if a <= 0 or b <= 0:
                raise GeometryError("ellipse semi-axes must be positive")
            self.a, self.b = a, b
        else:
            raise GeometryError(f"unknown particle kind {kind!r}")

    @property
    def area(self) -> float:
        return np.pi * self.a * self.b

    def body_point(self, q):
        q = np.asarray(q, dtype=float)
        return np.stack([self.a * np.cos(q), self.b * np.sin(q)], axis=-1)

    def body_derivs(self, q):
        q = np.asarray(q, dtype=float)
        d1 = np.stack([-self.a * np.sin(q), self.b * np.cos(q)], axis=-1)
        d2 = np.stack([-self.a * np.cos(q), -self.b * np.sin(q)], axis=-1)
        return d1, d2

    def contains(self, pts, cfg: "RigidConfig") -> np.ndarray:
        """Point-in-particle test in world coordinates (exact for conics)."""
        pts = np.atleast_2d(np.asarray(pts, dtype=float))
        R = cfg.rotation()
        local = (pts - cfg.c) @ R  # R^T (x - c)
        return (local[:, 0] / self.a) ** 2 + (local[:, 1] / self.b) ** 2 <= 1.0


@dataclass(frozen=True)
class RigidConfig:
    """World placement: centroid c (unwrapped) and rotation angle phi."""

    c: np.ndarray
    phi: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "c", np.asarray(self.c, dtype=float))

    def rotation(self) -> np.ndarray:
        cs, sn = np.cos(self.phi), np.sin(self.phi)
        return np.array([[cs, -sn], [sn, cs]])


@dataclass(frozen=True)
class RigidVelocity:
    """Translational velocity of the centroid and angular velocity rho."""

    w: np.ndarray
    rho: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "w", np.asarray(self.w, dtype=float))


@dataclass
class ParticleBoundary:
    """World-frame boundary samples of the particle."""

    q: np.ndarray
    x: np.ndarray
    tau: np.ndarray
    normal: np.ndarray   # out of the fluid = into the particle
    kappa: np.ndarray
    speed: np.ndarray    # |dx/dq|


def boundary_nodes(shape: ParticleShape, cfg: RigidConfig, q) -> ParticleBoundary:
    """Boundary geometry at body parameters q, rigidly placed in the world."""
    q = np.atleast_1d(np.asarray(q, dtype=float))
    x0 = shape.body_point(q)
    d1, d2 = shape.body_derivs(q)
    speed = np.linalg.norm(d1, axis=-1)
    if np.any(speed < 1e-14):
        raise GeometryError("degenerate particle parametrization")
    tau0 = d1 / speed[:, None]
    normal0 = rot90(tau0)          # counterclockwise curve: rot90(tau) points inward
    kappa = np.einsum("ij,ij->i", normal0, d2) / speed**2
    R = cfg.rotation()
    return ParticleBoundary(
        q=q,
        x=cfg.c + x0 @ R.T,
        tau=tau0 @ R.T,
        normal=normal0 @ R.T,
        kappa=kappa,
        speed=speed,
    )


def rigid_velocity_field(v: RigidVelocity, x, center) -> np.ndarray:
    """w + rho * e3 x (x - center), vectorized over points."""
    x = np.asarray(x, dtype=float)
    center = np.asarray(center, dtype=float)
    return v.w + v.rho * rot90(x - center)


def advance(cfg: RigidConfig, v: RigidVelocity, dt: float) -> RigidConfig:
    """Explicit update c += w dt, phi += rho dt (rigidity-preserving Euler)."""
    if dt <= 0:
        raise ValueError("time step must be positive")
    return RigidConfig(c=cfg.c + v.w * dt, phi=cfg.phi + v.rho * dt)


def net_motion(configs) -> float:
    """Net axial centroid motion x1G(T) - x1G(0) in the wave frame (unwrapped)."""
    configs = list(configs)
    if not configs:
        raise ValueError("empty trajectory")
    return float(configs[-1].c[0] - configs[0].c[0])


def wrapped_copy(cfg: RigidConfig, L: float) -> RigidConfig:
    """Copy with the centroid wrapped into [0, L) for kernel evaluation."""
    c1 = cfg.c[0] % L
    return replace(cfg, c=np.array([c1, cfg.c[1]]))
