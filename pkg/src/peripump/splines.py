"""Quintic B-spline parametrization of the two periodic channel walls.

Each wall is a planar curve x(t), t in [0, 2pi], built from cardinal
B-splines of degree 5 on M uniform intervals.  The first coordinate
carries a linear ramp so that x1(0) = L and x1(2pi) = 0; periodicity of
the curve and of its derivatives up to order 4 is enforced through the
coefficient solve.  The free shape parameters are the grid values

    ps = [x1+ at interior knots | x1- at interior knots |
          x2+ at interior knots, x2+(0) | x2- at interior knots, x2-(0)]

with 4M-2 entries in total.  This ordering is the serialization order
used in run configs and snapshot files.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve

__all__ = [
    "SplineConfig",
    "WallSamples",
    "PerturbationField",
    "WallShape",
    "bspline_basis",
    "GeometryError",
]

TWO_PI = 2.0 * np.pi


class GeometryError(Exception):
    """Degenerate or inadmissible wall/particle geometry."""


def bspline_basis(k, n, t):
    """Cardinal B-spline B_{k,n}(t), by the two-term recurrence.

    Zero outside the support [k, k+n+1]; vectorized in t.
    """
    t = np.asarray(t, dtype=float)
    if n == 0:
        return np.where((t >= k) & (t < k + 1), 1.0, 0.0)
    a = (t - k) / n * bspline_basis(k, n - 1, t)
    b = (n + k + 1 - t) / n * bspline_basis(k + 1, n - 1, t)
    return a + b


def _basis_derivative(k, n, t, order):
    """d^order/dt^order of B_{k,n} via the difference recurrence."""
    if order == 0:
        return bspline_basis(k, n, t)
    lower = _basis_derivative
    return lower(k, n - 1, t, order - 1) - lower(k + 1, n - 1, t, order - 1)


def _basis_table(ks, n, s, order):
    """All-cardinal-spline table: d^order B_{k,n}(s) for every k in ks.

    One de Boor style triangle over a widened index range instead of a
    per-k recursion; s is a flat array.
    """
    k0 = ks[0]
    nk = len(ks)
    # degree-0 indicators on the widened range covering the recursion fan
    wide = nk + n
    idx = k0 + np.arange(wide)
    B = ((s[:, None] >= idx[None, :]) & (s[:, None] < idx[None, :] + 1)).astype(float)
    deg_top = n - order
    for d in range(1, deg_top + 1):
        left = (s[:, None] - idx[None, : wide - d]) / d
        right = (idx[None, : wide - d] + d + 1 - s[:, None]) / d
        B = left * B[:, : wide - d] + right * B[:, 1 : wide - d + 1]
    for _ in range(order):
        B = B[:, :-1] - B[:, 1:]
    return B[:, :nk]


@dataclass(frozen=True)
class SplineConfig:
    """Wall discretization: M uniform spline intervals of degree 5 over one period L."""

    M: int
    L: float = TWO_PI
    degree: int = 5

    def __post_init__(self):
        if self.M < 2:
            raise GeometryError(f"spline interval count M={self.M} must be >= 2")
        if self.degree != 5:
            raise GeometryError("only degree-5 wall splines are supported")
        if self.L <= 0:
            raise GeometryError("period length must be positive")

    @property
    def n_free(self) -> int:
        """Number of free grid values, 4M-2."""
        return 4 * self.M - 2

    @property
    def n_coeff(self) -> int:
        """Coefficients per component function, M+5."""
        return self.M + 5


@dataclass
class WallSamples:
    """Frenet data of one wall at a set of parameters."""

    t: np.ndarray
    x: np.ndarray        # (n, 2)
    tau: np.ndarray      # unit tangent, s directed leftwards
    normal: np.ndarray   # unit normal, out of the fluid
    kappa: np.ndarray    # curvature, kappa = n . d_s tau
    speed: np.ndarray    # |x'(t)|


@dataclass
class PerturbationField:
    """Transformation velocity of one wall for a control-point perturbation."""

    theta: np.ndarray       # (n, 2)
    theta_s: np.ndarray
    theta_n: np.ndarray
    ds_theta_n: np.ndarray  # analytic arclength derivative of theta_n
    dl_star: float          # derivative of the length ratio ell
    theta_end: np.ndarray   # theta at t = 2pi (the wall endpoint z+/-)


class WallShape:
    """Two-wall channel geometry solved from free control points."""

    def __init__(self, cfg: SplineConfig, ps):
        ps = np.asarray(ps, dtype=float)
        if ps.shape != (cfg.n_free,):
            raise GeometryError(
                f"control point vector has length {ps.size}, expected {cfg.n_free}")
        self.cfg = cfg
        self.ps = ps
        self._ks = np.arange(-cfg.degree, cfg.M)
        self._lu = self._factorize()
        self.xi = self._solve_all(ps)

    # -- coefficient solve ------------------------------------------------

    def _basis_row(self, t, order=0):
        cfg = self.cfg
        s = np.atleast_1d(np.asarray(t, dtype=float)) * cfg.M / TWO_PI
        scale = (cfg.M / TWO_PI) ** order
        return scale * _basis_table(self._ks, cfg.degree, s, order)

    def _factorize(self):
        cfg = self.cfg
        knots = TWO_PI * np.arange(1, cfg.M) / cfg.M
        rows = [self._basis_row(knots)]
        rows.append(self._basis_row([0.0]))
        rows.append(self._basis_row([TWO_PI]))
        for order in range(1, cfg.degree):
            rows.append(self._basis_row([0.0], order) - self._basis_row([TWO_PI], order))
        A = np.vstack(rows)
        try:
            return lu_factor(A)
        except np.linalg.LinAlgError as exc:  # pragma: no cover - defensive
            raise GeometryError(f"singular spline interpolation system for M={cfg.M}") from exc

    def _component_rhs(self, interior, value0):
        cfg = self.cfg
        rhs = np.zeros(cfg.n_coeff)
        rhs[: cfg.M - 1] = interior
        rhs[cfg.M - 1] = value0
        rhs[cfg.M] = value0
        return rhs

    def _split_ps(self, ps):
        M = self.cfg.M
        x1p = ps[0 : M - 1]
        x1m = ps[M - 1 : 2 * (M - 1)]
        x2p = ps[2 * (M - 1) : 2 * (M - 1) + M]
        x2m = ps[2 * (M - 1) + M :]
        return x1p, x1m, x2p, x2m

    def _solve_all(self, ps):
        cfg = self.cfg
        x1p, x1m, x2p, x2m = self._split_ps(ps)
        knots = TWO_PI * np.arange(1, cfg.M) / cfg.M
        lin = cfg.L * (TWO_PI - knots) / TWO_PI
        xi = {}
        xi["1+"] = lu_solve(self._lu, self._component_rhs(x1p - lin, 0.0))
        xi["1-"] = lu_solve(self._lu, self._component_rhs(x1m - lin, 0.0))
        xi["2+"] = lu_solve(self._lu, self._component_rhs(x2p[:-1], x2p[-1]))
        xi["2-"] = lu_solve(self._lu, self._component_rhs(x2m[:-1], x2m[-1]))
        return xi

    def coefficient_residual(self) -> float:
        """Max relative defect of the solved spline at the knots."""
        cfg = self.cfg
        knots = TWO_PI * np.arange(0, cfg.M) / cfg.M
        scale = max(1.0, np.max(np.abs(self.ps)))
        worst = 0.0
        for side in "+-":
            pts = self.point(side, knots)
            x1p, x1m, x2p, x2m = self._split_ps(self.ps)
            x1 = x1p if side == "+" else x1m
            x2 = x2p if side == "+" else x2m
            worst = max(worst, np.max(np.abs(pts[1:, 0] - x1)) / scale)
            worst = max(worst, np.max(np.abs(pts[1:, 1] - x2[:-1])) / scale)
            worst = max(worst, abs(pts[0, 1] - x2[-1]) / scale)
            worst = max(worst, abs(pts[0, 0] - self.cfg.L) / scale)
        return worst

    # -- evaluation --------------------------------------------------------

    def component(self, name: str, t, order=0):
        """Evaluate a component spline (name in {'1+','1-','2+','2-'})."""
        vals = self._basis_row(t, order) @ self.xi[name]
        if name.startswith("1"):
            t = np.atleast_1d(np.asarray(t, dtype=float))
            if order == 0:
                vals = vals + self.cfg.L * (TWO_PI - t) / TWO_PI
            elif order == 1:
                vals = vals - self.cfg.L / TWO_PI
        return vals

    def point(self, side: str, t):
        return np.stack([self.component("1" + side, t), self.component("2" + side, t)], axis=-1)

    def derivative(self, side: str, t, order=1):
        return np.stack(
            [self.component("1" + side, t, order), self.component("2" + side, t, order)],
            axis=-1,
        )

    def frenet(self, side: str, t) -> WallSamples:
        t = np.atleast_1d(np.asarray(t, dtype=float))
        b0 = self._basis_row(t, 0)
        b1 = self._basis_row(t, 1)
        b2 = self._basis_row(t, 2)
        xi1, xi2 = self.xi["1" + side], self.xi["2" + side]
        lin = self.cfg.L * (TWO_PI - t) / TWO_PI
        x = np.stack([b0 @ xi1 + lin, b0 @ xi2], axis=-1)
        d1 = np.stack([b1 @ xi1 - self.cfg.L / TWO_PI, b1 @ xi2], axis=-1)
        d2 = np.stack([b2 @ xi1, b2 @ xi2], axis=-1)
        speed = np.linalg.norm(d1, axis=-1)
        if np.any(speed < 1e-12):
            raise GeometryError("wall parametrization degenerates: |x'(t)| ~ 0")
        tau = d1 / speed[:, None]
        normal = self._rotate(tau, side)
        kappa = np.einsum("ij,ij->i", normal, d2) / speed**2
        return WallSamples(t=t, x=x, tau=tau, normal=normal, kappa=kappa, speed=speed)

    @staticmethod
    def _rotate(tau, side):
        # rotation of tau that points out of the fluid: clockwise on the
        # upper wall, counterclockwise on the lower wall
        if side == "+":
            return np.stack([tau[:, 1], -tau[:, 0]], axis=-1)
        return np.stack([-tau[:, 1], tau[:, 0]], axis=-1)

    def length_ratio(self, side: str, t, w) -> float:
        """ell = (wall arclength) / L from parameter quadrature (t, w)."""
        speed = np.linalg.norm(self.derivative(side, t, 1), axis=-1)
        return float(np.dot(w, speed) / self.cfg.L)

    def endpoints(self):
        """Wall endpoints z+/- on the x1 = 0 section (parameter 2pi)."""
        return {side: self.point(side, [TWO_PI])[0] for side in "+-"}

    # -- shape perturbations ------------------------------------------------

    def perturbation_coeffs(self, delta):
        """Coefficient increments for a control-point perturbation (linear map)."""
        delta = np.asarray(delta, dtype=float)
        if delta.shape != (self.cfg.n_free,):
            raise GeometryError(
                f"perturbation vector has length {delta.size}, expected {self.cfg.n_free}")
        d1p, d1m, d2p, d2m = self._split_ps(delta)
        return {
            "1+": lu_solve(self._lu, self._component_rhs(d1p, 0.0)),
            "1-": lu_solve(self._lu, self._component_rhs(d1m, 0.0)),
            "2+": lu_solve(self._lu, self._component_rhs(d2p[:-1], d2p[-1])),
            "2-": lu_solve(self._lu, self._component_rhs(d2m[:-1], d2m[-1])),
        }

    def transformation_velocity(self, delta, side: str, t, w) -> PerturbationField:
        """Transformation velocity field theta on one wall.

        theta(x(t)) = x(t; xi(ps + delta)) - x(t; xi(ps)), exact for any
        perturbation size because ps -> xi is linear.  (t, w) is the
        parameter quadrature at which the field is sampled; w also feeds
        the length-ratio derivative dl*.
        """
        dxi = self.perturbation_coeffs(delta)
        t = np.atleast_1d(np.asarray(t, dtype=float))
        b0 = self._basis_row(t, 0)
        b1 = self._basis_row(t, 1)
        theta = np.stack([b0 @ dxi["1" + side], b0 @ dxi["2" + side]], axis=-1)
        dtheta = np.stack([b1 @ dxi["1" + side], b1 @ dxi["2" + side]], axis=-1)
        fr = self.frenet(side, t)
        theta_s = np.einsum("ij,ij->i", theta, fr.tau)
        theta_n = np.einsum("ij,ij->i", theta, fr.normal)
        ds_theta_n = np.einsum("ij,ij->i", dtheta, fr.normal) / fr.speed - fr.kappa * theta_s
        dl_star = float(np.dot(w, np.einsum("ij,ij->i", dtheta, fr.tau)) / self.cfg.L)
        bend = self._basis_row([TWO_PI], 0)[0]
        theta_end = np.array([bend @ dxi["1" + side], bend @ dxi["2" + side]])
        return PerturbationField(
            theta=theta, theta_s=theta_s, theta_n=theta_n,
            ds_theta_n=ds_theta_n, dl_star=dl_star, theta_end=theta_end,
        )


def flat_ps(cfg: SplineConfig, half_height: float) -> np.ndarray:
    """Control points of a flat channel with walls at +/- half_height."""
    knots = TWO_PI * np.arange(1, cfg.M) / cfg.M
    x1 = cfg.L * (TWO_PI - knots) / TWO_PI
    M = cfg.M
    ps = np.concatenate([
        x1, x1,
        np.full(M, half_height),
        np.full(M, -half_height),
    ])
    return ps


def sine_ps(cfg: SplineConfig, half_height: float, amplitude: float,
            phase: float = 0.0) -> np.ndarray:
    """Mirror-symmetric sinusoidal channel: x2+/- = +/-(h0 + a sin(t + phase))."""
    knots = TWO_PI * np.arange(1, cfg.M) / cfg.M
    x1 = cfg.L * (TWO_PI - knots) / TWO_PI
    knots0 = np.concatenate([knots, [0.0]])
    upper = half_height + amplitude * np.sin(knots0 + phase)
    return np.concatenate([x1, x1, upper, -upper])
