"""Run configuration: JSON schema, defaults, validation, presets."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .evolution import TimeGrid
from .particle import ParticleShape, RigidConfig
from .pipeline import Problem, Resolution
from .splines import SplineConfig, flat_ps, sine_ps

__all__ = ["ConfigError", "RunConfig", "load_config"]

TWO_PI = 2.0 * np.pi


class ConfigError(Exception):
    """Invalid or missing run-configuration field; message carries the path."""


def _get(d, path, default=None, required=False, kind=None):
    cur = d
    trail = []
    for part in path.split("."):
        trail.append(part)
        if not isinstance(cur, dict) or part not in cur:
            if required:
                raise ConfigError(f"missing required field: {'.'.join(trail)}")
            return default
        cur = cur[part]
    if kind is not None and not isinstance(cur, kind):
        raise ConfigError(f"field {'.'.join(trail)} has wrong type "
                          f"(expected {getattr(kind, '__name__', kind)})")
    return cur


@dataclass
class OptimizerParams:
    zeta_star: float = 0.01
    lam0: tuple = (0.0, 0.0)
    sigma0: float = 10.0
    outer_cap: int = 25
    inner_cap: int = 200
    gtol: float = 1e-5


@dataclass
class RunConfig:
    spline: SplineConfig
    ps: np.ndarray
    particle: ParticleShape | None
    start: RigidConfig | None
    grid: TimeGrid
    resolution: Resolution
    volume_target: float | None
    motion_target: float | None
    optimizer: OptimizerParams
    out_dir: Path
    verbose: bool = False
    eta: float = 1e-4
    gradient_threshold: float = 1e-2
    raw: dict = field(default_factory=dict)

    def problem(self) -> Problem:
        if self.particle is None:
            raise ConfigError("this command requires a particle "
                              "(field: particle)")
        return Problem(spline=self.spline, particle=self.particle,
                       start=self.start, grid=self.grid,
                       resolution=self.resolution)


def geometry_ps(section: dict, cfg: SplineConfig) -> np.ndarray:
    if "ps" in section:
        ps = np.asarray(section["ps"], dtype=float)
        if ps.shape != (cfg.n_free,):
            raise ConfigError(
                f"geometry.ps must have {cfg.n_free} entries (4M-2 with M={cfg.M}), "
                f"got {ps.size}")
        return ps
    if "preset" not in section:
        raise ConfigError("missing required field: geometry.preset (or geometry.ps)")
    preset = _get(section, "preset", required=True, kind=str)
    half = float(_get(section, "half_height", 1.0))
    if preset == "flat":
        return flat_ps(cfg, half)
    if preset == "sine":
        amp = float(_get(section, "amplitude", 0.3))
        return sine_ps(cfg, half, amp)
    raise ConfigError(f"geometry.preset must be 'flat' or 'sine', got {preset!r}")


def particle_from(section) -> tuple[ParticleShape | None, RigidConfig | None]:
    if section is None:
        return None, None
    if "kind" not in section:
        raise ConfigError("missing required field: particle.kind")
    kind = _get(section, "kind", required=True, kind=str)
    if kind == "circle":
        shape = ParticleShape("circle", radius=float(_get(section, "radius",
                                                          required=True)))
    elif kind == "ellipse":
        axes = _get(section, "semi_axes", required=True)
        shape = ParticleShape("ellipse", semi_axes=(float(axes[0]), float(axes[1])))
    else:
        raise ConfigError(f"particle.kind must be 'circle' or 'ellipse', got {kind!r}")
    center = _get(section, "center", [np.pi, 0.0])
    tilt = float(_get(section, "tilt", 0.0))
    return shape, RigidConfig(c=np.asarray(center, dtype=float), phi=tilt)


def load_config(path_or_dict) -> RunConfig:
    if isinstance(path_or_dict, (str, Path)):
        try:
            raw = json.loads(Path(path_or_dict).read_text())
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path_or_dict}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config is not valid JSON: {exc}") from exc
    else:
        raw = dict(path_or_dict)

    geo = _get(raw, "geometry", required=True, kind=dict)
    M = int(_get(geo, "M", 7))
    spline = SplineConfig(M=M)
    ps = geometry_ps(geo, spline)

    particle, start = particle_from(raw.get("particle"))

    res = Resolution(
        wall_panels=int(_get(raw, "resolution.wall_panels", 3 * M)),
        particle_panels=int(_get(raw, "resolution.particle_panels", 6)),
        panel_order=int(_get(raw, "resolution.panel_order", 10)),
        proxy_points=int(_get(raw, "resolution.proxy_points", 64)),
        proxy_radius_factor=float(_get(raw, "resolution.proxy_radius_factor", 1.8)),
        contact_factor=float(_get(raw, "resolution.contact_factor", 0.5)),
    )
    if res.panel_order < 4:
        raise ConfigError("resolution.panel_order must be >= 4")

    T = float(_get(raw, "time.horizon", 1.0))
    N = int(_get(raw, "time.steps", 40))
    if T <= 0 or N < 1:
        raise ConfigError("time.horizon must be > 0 and time.steps >= 1")

    opt = OptimizerParams(
        zeta_star=float(_get(raw, "optimizer.tol", 0.01)),
        lam0=tuple(_get(raw, "optimizer.lambda0", [0.0, 0.0])),
        sigma0=float(_get(raw, "optimizer.sigma0", 10.0)),
        outer_cap=int(_get(raw, "optimizer.outer_cap", 25)),
        inner_cap=int(_get(raw, "optimizer.inner_cap", 200)),
        gtol=float(_get(raw, "optimizer.gtol", 1e-5)),
    )

    return RunConfig(
        spline=spline,
        ps=ps,
        particle=particle,
        start=start,
        grid=TimeGrid(T=T, N=N),
        resolution=res,
        volume_target=_maybe_float(_get(raw, "targets.volume")),
        motion_target=_maybe_float(_get(raw, "targets.net_motion")),
        optimizer=opt,
        out_dir=Path(_get(raw, "output.dir", "out")),
        verbose=bool(_get(raw, "verbose", False)),
        eta=float(_get(raw, "gradient_check.eta", 1e-4)),
        gradient_threshold=float(_get(raw, "gradient_check.threshold", 1e-2)),
        raw=raw,
    )


def _maybe_float(v):
    return None if v is None else float(v)
