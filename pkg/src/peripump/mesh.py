"""Panel-based Nystrom discretization of the channel and particle boundaries.

Composite Gauss-Legendre panels carry the smooth quadrature; three kinds
of corrections complete the scheme:

* product quadrature against log moments (Legendre Q recursion) for the
  single-layer kernel on its own curve, applied on the target's panel and
  on parametrically adjacent panels (including periodic wall images,
  which continue the wall curve smoothly);
* diagonal limits for kernels that are smooth along the curve (double
  layer, single-layer traction), obtained by Chebyshev extrapolation of
  the kernel along the curve parameter and cached per mesh;
* distance-graded dyadic panel subdivision with barycentric density
  interpolation for near-singular targets off the source curve.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import lqn

from . import kernels
from .particle import ParticleShape, RigidConfig, boundary_nodes
from .splines import GeometryError, WallShape

__all__ = [
    "CurveMesh",
    "BoundaryMesh",
    "NearContactError",
    "build_mesh",
    "wall_curve_mesh",
    "particle_curve_mesh",
]

TWO_PI = 2.0 * np.pi

NEAR_FACTOR = 1.5        # off-curve targets closer than this (in panel arcs) get graded rules
LOG_ADJ_FACTOR = 0.75    # parametric adjacency window for log corrections, in panel spans
HARD_FLOOR = 1e-3        # near-contact floor, in panel arcs
GRADE_RATIO = 0.8        # split a subpanel while chord > GRADE_RATIO * distance


class NearContactError(GeometryError):
    """Particle and wall (or an evaluation target) are too close to resolve."""


# ---------------------------------------------------------------------------
# quadrature building blocks


@lru_cache(maxsize=32)
def gauss_rule(p: int):
    nodes, weights = np.polynomial.legendre.leggauss(p)
    return nodes, weights


def bary_weights(nodes):
    nodes = np.asarray(nodes, dtype=float)
    diff = nodes[:, None] - nodes[None, :]
    np.fill_diagonal(diff, 1.0)
    w = 1.0 / np.prod(diff, axis=1)
    return w / np.max(np.abs(w))


def bary_interp_matrix(nodes, w, pts):
    """Barycentric Lagrange interpolation matrix from nodes to pts."""
    pts = np.asarray(pts, dtype=float)
    diff = pts[:, None] - nodes[None, :]
    exact = np.isclose(diff, 0.0, atol=1e-15)
    diff = np.where(exact, 1.0, diff)
    terms = w[None, :] / diff
    mat = terms / terms.sum(axis=1)[:, None]
    hit = exact.any(axis=1)
    if np.any(hit):
        mat[hit] = 0.0
        mat[hit, np.argmax(exact[hit], axis=1)] = 1.0
    return mat


def legendre_log_moments(xi0: float, kmax: int):
    """q_k = int_{-1}^{1} P_k(xi) log|xi0 - xi| dxi for k = 0..kmax."""
    q = np.empty(kmax + 1)
    q[0] = ((1 - xi0) * np.log(abs(1 - xi0)) if xi0 != 1.0 else 0.0) \
        + ((1 + xi0) * np.log(abs(1 + xi0)) if xi0 != -1.0 else 0.0) - 2.0
    if kmax == 0:
        return q
    x = abs(xi0)
    Q = lqn(kmax + 1, x)[0]
    if xi0 < 0:
        signs = np.array([(-1) ** (k + 1) for k in range(kmax + 2)])
        Q = Q * signs
    for k in range(1, kmax + 1):
        q[k] = 2.0 * (Q[k + 1] - Q[k - 1]) / (2 * k + 1)
    return q


def log_product_weights(xi0: float, p: int):
    """Weights W so that sum_j W_j g(xi_j) ~ int g(xi) log|xi - xi0| dxi.

    Exact for polynomial g up to degree p-1; xi_j are the p Gauss nodes.
    """
    nodes, w = gauss_rule(p)
    q = legendre_log_moments(xi0, p - 1)
    V = np.polynomial.legendre.legvander(nodes, p - 1)
    scale = (2 * np.arange(p) + 1) / 2.0
    return w * ((V * scale[None, :]) @ q)


def chebyshev_limit_points(n: int):
    """First-kind Chebyshev nodes on [-1, 1]; none of them is zero for even n."""
    return np.cos((2 * np.arange(n) + 1) * np.pi / (2 * n))


def kernel_curve_limit(sample_fn, delta0: float, n: int = 12):
    """Limit of an analytic function of the parameter offset at offset 0.

    sample_fn(deltas) -> (n, ...) values; extrapolates by a Chebyshev fit
    on [-delta0, delta0].
    """
    xs = chebyshev_limit_points(n)
    vals = np.asarray(sample_fn(xs * delta0))
    flat = vals.reshape(n, -1)
    coef = np.polynomial.chebyshev.chebfit(xs, flat, deg=n - 1)
    at0 = np.polynomial.chebyshev.chebval(0.0, coef)
    return at0.reshape(vals.shape[1:])


# ---------------------------------------------------------------------------
# curve meshes


@dataclass
class CurveMesh:
    """Composite Gauss panels on one smooth curve.

    frenet(t) must return an object with fields x, tau, normal, kappa,
    speed at parameters t.  For walls the parametrization extends
    periodically with a geometric shift: x(t + period) = x(t) + period_shift,
    which is how the +-1 lattice images join the curve smoothly.  Closed
    curves (the particle) have period_shift = 0 and wrap parametrically.
    """

    frenet: callable
    edges: np.ndarray            # panel edges in parameter, shape (n_panels+1,)
    p: int
    period: float = TWO_PI
    period_shift: np.ndarray = field(default_factory=lambda: np.zeros(2))
    closed: bool = False
    label: str = ""

    def __post_init__(self):
        xi, wq = gauss_rule(self.p)
        a = self.edges[:-1]
        b = self.edges[1:]
        self.half = 0.5 * (b - a)
        self.mid = 0.5 * (a + b)
        self.t = (self.mid[:, None] + self.half[:, None] * xi[None, :]).ravel()
        self.w_param = (self.half[:, None] * wq[None, :]).ravel()
        fr = self.frenet(self.t)
        self.x = fr.x
        self.tau = fr.tau
        self.normal = fr.normal
        self.kappa = fr.kappa
        self.speed = fr.speed
        self.w_arc = self.w_param * self.speed
        self.n_panels = len(self.edges) - 1
        self.n_nodes = self.n_panels * self.p
        self.panel_of = np.repeat(np.arange(self.n_panels), self.p)
        self.panel_arc = self.w_arc.reshape(self.n_panels, self.p).sum(axis=1)
        self.bary_w = bary_weights(xi)
        self.xi = xi

    # -- geometry helpers --------------------------------------------------

    def panel_slice(self, j: int) -> slice:
        return slice(j * self.p, (j + 1) * self.p)

    def image_points(self, shift: np.ndarray, t=None):
        pts = self.x if t is None else self.frenet(t).x
        return pts + shift

    def param_distance(self, t0: float, j: int, param_offset: float = 0.0) -> float:
        """Distance from parameter t0 to panel j living at + param_offset."""
        a = self.edges[j] + param_offset
        b = self.edges[j + 1] + param_offset
        if a <= t0 <= b:
            return 0.0
        d = min(abs(t0 - a), abs(t0 - b))
        if self.closed:
            d = min(d, abs(t0 - a + self.period), abs(t0 - a - self.period),
                    abs(t0 - b + self.period), abs(t0 - b - self.period))
        return d

    def _coarse_point(self, j: int, t):
        """Piecewise-linear position estimate on panel j (decision use only)."""
        sl = self.panel_slice(j)
        tb = self.t[sl]
        x = np.interp(t, tb, self.x[sl, 0])
        y = np.interp(t, tb, self.x[sl, 1])
        return np.stack([x, y], axis=-1)

    def refined_rule(self, j: int, target: np.ndarray, shift=None, factor=None):
        """Graded (or uniform, if factor given) subdivision rule for panel j.

        Returns (t_fine, w_fine, interp) where interp maps densities at the
        panel's base nodes onto the fine nodes.  Subdivision decisions use a
        piecewise-linear geometry estimate; leaf quadrature uses the exact
        curve.
        """
        a, b = self.edges[j], self.edges[j + 1]
        shift = np.zeros(2) if shift is None else shift
        xi, wq = gauss_rule(self.p)
        segs = []
        if factor is not None:
            cuts = np.linspace(a, b, factor + 1)
            segs = list(zip(cuts[:-1], cuts[1:]))
        else:
            tshift = target - shift
            stack = [(a, b, 0)]
            while stack:
                lo, hi, depth = stack.pop()
                pts = self._coarse_point(j, np.array([lo, 0.5 * (lo + hi), hi]))
                chord = np.linalg.norm(pts[2] - pts[0])
                dist = np.min(np.linalg.norm(pts - tshift[None, :], axis=1))
                if depth >= 40 or chord <= GRADE_RATIO * dist:
                    segs.append((lo, hi))
                else:
                    mid = 0.5 * (lo + hi)
                    stack.append((lo, mid, depth + 1))
                    stack.append((mid, hi, depth + 1))
        half = np.array([0.5 * (hi - lo) for lo, hi in segs])
        mid = np.array([0.5 * (hi + lo) for lo, hi in segs])
        t_fine = (mid[:, None] + half[:, None] * xi[None, :]).ravel()
        w_fine = (half[:, None] * wq[None, :]).ravel()
        base_xi = (self.t[self.panel_slice(j)] - 0.5 * (a + b)) / (0.5 * (b - a))
        fine_xi = (t_fine - 0.5 * (a + b)) / (0.5 * (b - a))
        interp = bary_interp_matrix(base_xi, self.bary_w, fine_xi)
        return t_fine, w_fine, interp

    def min_distance(self, pts) -> float:
        pts = np.atleast_2d(pts)
        d = np.linalg.norm(pts[:, None, :] - self.x[None, :, :], axis=-1)
        return float(d.min())


def wall_curve_mesh(shape: WallShape, side: str, n_panels: int, p: int) -> CurveMesh:
    period_shift = np.array([-shape.cfg.L, 0.0])

    def frenet(t, s=side):
        # periodic extension of the wall curve: x(t + 2pi) = x(t) - L e1
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.floor(t / TWO_PI)
        fr = shape.frenet(s, t - TWO_PI * k)
        fr.x = fr.x + k[:, None] * period_shift
        return fr

    edges = np.linspace(0.0, TWO_PI, n_panels + 1)
    return CurveMesh(
        frenet=frenet,
        edges=edges,
        p=p,
        period=TWO_PI,
        period_shift=period_shift,
        closed=False,
        label=f"wall{side}",
    )


def particle_curve_mesh(shape: ParticleShape, cfg: RigidConfig,
                        n_panels: int, p: int) -> CurveMesh:
    edges = np.linspace(0.0, TWO_PI, n_panels + 1)
    mesh = CurveMesh(
        frenet=lambda q: boundary_nodes(shape, cfg, q),
        edges=edges,
        p=p,
        period=TWO_PI,
        closed=True,
        label="particle",
    )
    mesh.center = np.asarray(cfg.c, dtype=float)
    mesh.rigid_cfg = cfg
    return mesh


# ---------------------------------------------------------------------------
# kernel dispatch helpers


def eval_blocks(name, tx, sx, s_n=None, t_n=None):
    """Kernel blocks by name; matrix kernels (nt,ns,2,2), pressures (nt,ns,2)."""
    out = kernels.kernel_suite(tx, sx, n_src=s_n, n_tgt=t_n, want=(name,))
    return out[name]


def flatten(block):
    """Node-major flattening for matrix (2nt x 2ns) or pressure (nt x 2ns) kernels."""
    if block.ndim == 4:
        return kernels.as_matrix(block)
    nt, ns = block.shape[:2]
    return block.reshape(nt, 2 * ns)


def _weighted(block_flat, w_arc):
    """Multiply a flattened kernel by per-source-node arc weights."""
    return block_flat * np.repeat(w_arc, 2)[None, :]


# ---------------------------------------------------------------------------
# operators


def self_operator(mesh: CurveMesh, name: str, images=(0,)) -> np.ndarray:
    """Nystrom operator of kernel `name` on the mesh's own curve.

    images: lattice image indices to include (walls: (-1, 0, 1)); image n
    contributes sources at x + n*(-period_shift)?  No: image n means the
    source curve shifted by n * image_shift where image_shift is supplied
    by the caller through mesh.period_shift convention: the wall curve
    satisfies x(t + period) = x(t) + period_shift, so the lattice copy at
    geometric shift -n*period_shift coincides with the curve at parameter
    t - n*period.  Corrections therefore use the extended parameter.
    """
    p = mesh.p
    n = mesh.n_nodes
    rows = n if name in ("PS", "PD") else 2 * n
    A = np.zeros((rows, 2 * n))
    for img in images:
        shift = -img * mesh.period_shift
        param_offset = img * mesh.period
        if mesh.closed and img != 0:
            raise ValueError("closed curves have no parametric images")
        blk = eval_blocks_self_safe(name, mesh, shift)
        flat = flatten(blk)
        A += _weighted(flat, mesh.w_arc)
        _apply_self_corrections(A, mesh, name, shift, param_offset)
    return A


def eval_blocks_self_safe(name, mesh, shift):
    """Plain kernel block of the curve against its shifted self.

    Coincident points (the diagonal of the unshifted block) are set to
    zero here and replaced by diagonal limits in the corrections.
    """
    tx = mesh.x
    sx = mesh.x + shift
    if np.allclose(shift, 0.0):
        z = tx[:, None, :] - sx[None, :, :]
        r2 = np.einsum("ijk,ijk->ij", z, z)
        np.fill_diagonal(r2, 1.0)
        blk = _suite_with_r2(name, z, r2, mesh.normal, mesh.normal, mesh.tau)
        idx = np.arange(mesh.n_nodes)
        blk[idx, idx] = 0.0
        return blk
    return eval_blocks(name, tx, sx, s_n=mesh.normal, t_n=mesh.normal)


def _suite_with_r2(name, z, r2, n_src, n_tgt, tau):
    inv_r2 = 1.0 / r2
    zz = np.einsum("ijk,ijl->ijkl", z, z) * inv_r2[..., None, None]
    if name == "S":
        S = zz.copy()
        logterm = -0.5 * np.log(r2)
        S[..., 0, 0] += logterm
        S[..., 1, 1] += logterm
        return S / (4.0 * np.pi)
    if name == "D":
        dx = np.einsum("ijk,jk->ij", z, n_src) * inv_r2
        return zz * (dx / np.pi)[..., None, None]
    if name == "TS":
        dy = np.einsum("ijk,ik->ij", z, n_tgt) * inv_r2
        return -zz * (dy / np.pi)[..., None, None]
    if name == "PS":
        return z * (inv_r2 / (2.0 * np.pi))[..., None]
    raise ValueError(f"kernel {name} is not available as a self operator")


def _apply_self_corrections(A, mesh: CurveMesh, name, shift, param_offset):
    """Diagonal limits and log corrections for one (possibly image) copy."""
    smooth_diag = name in ("D", "TS")
    logsplit = name == "S"
    p = mesh.p
    for i in range(mesh.n_nodes):
        t0 = mesh.t[i]
        if smooth_diag:
            if param_offset == 0.0:
                lim = _diag_limit(mesh, name, i)
                A[2 * i : 2 * i + 2, 2 * i : 2 * i + 2] += lim * mesh.w_arc[i]
            continue
        if not logsplit:
            continue
        for j in range(mesh.n_panels):
            dpar = mesh.param_distance(t0, j, param_offset)
            span = mesh.edges[j + 1] - mesh.edges[j]
            if dpar > LOG_ADJ_FACTOR * span:
                continue
            _log_correct_panel(A, mesh, i, j, shift, param_offset)


def _diag_limit(mesh: CurveMesh, name, i):
    """Kernel limit along the curve at node i (smooth kernels only)."""
    t0 = mesh.t[i]
    j = mesh.panel_of[i]
    delta0 = 0.5 * (mesh.edges[j + 1] - mesh.edges[j])
    x0 = mesh.x[i]
    n0 = mesh.normal[i]

    def sample(ds):
        fr = mesh.frenet(t0 + ds)
        if name == "D":
            return eval_blocks("D", [x0], fr.x, s_n=fr.normal)[0]
        return eval_blocks("TS", [x0], fr.x, s_n=fr.normal, t_n=[n0])[0]

    return kernel_curve_limit(sample, delta0)


def _log_correct_panel(A, mesh: CurveMesh, i, j, shift, param_offset):
    """Replace plain quadrature of the single layer on panel j for target i.

    Splits S = -(1/4pi) I log|xi - xi0| + smooth and integrates the log part
    by product quadrature, the smooth part by the panel's Gauss rule.
    """
    p = mesh.p
    a = mesh.edges[j] + param_offset
    b = mesh.edges[j + 1] + param_offset
    half = 0.5 * (b - a)
    t0 = mesh.t[i]
    if mesh.closed:
        # wrap the target parameter next to this panel
        mid = 0.5 * (a + b)
        t0 += mesh.period * np.round((mid - t0) / mesh.period)
    xi0 = (t0 - 0.5 * (a + b)) / half
    sl = mesh.panel_slice(j)
    ts_eff = mesh.t[sl] + param_offset
    xs = mesh.x[sl] + shift
    x0 = mesh.x[i]
    w_arc = mesh.w_arc[sl]
    speed = mesh.speed[sl]

    z = x0[None, :] - xs
    r2 = np.einsum("ij,ij->i", z, z)
    coincident = r2 < 1e-28
    r2safe = np.where(coincident, 1.0, r2)
    zz = np.einsum("ij,ik->ijk", z, z) / r2safe[:, None, None]
    S_plain = zz.copy()
    logt = -0.5 * np.log(r2safe)
    S_plain[:, 0, 0] += logt
    S_plain[:, 1, 1] += logt
    S_plain /= 4 * np.pi
    S_plain[coincident] = 0.0

    # smooth remainder S + (1/4pi) log|xi - xi0| I, with its analytic limit
    # at a coincident node: (1/4pi)(-log(speed*half) I + tau tau^T)
    xi_nodes = (ts_eff - 0.5 * (a + b)) / half
    with np.errstate(divide="ignore"):
        logdiff = np.log(np.abs(xi_nodes - xi0))
    logdiff[np.isinf(logdiff)] = 0.0
    S_smooth = S_plain.copy()
    S_smooth[:, 0, 0] += logdiff / (4 * np.pi)
    S_smooth[:, 1, 1] += logdiff / (4 * np.pi)
    if np.any(coincident):
        k = int(np.argmax(coincident))
        S_smooth[k, 0, 0] = 0.0
        S_smooth[k, 1, 1] = 0.0
        tau0 = mesh.tau[sl][k]
        val = -np.log(speed[k] * half) * np.eye(2) + np.outer(tau0, tau0)
        S_smooth[k] = val / (4 * np.pi)

    row = slice(2 * i, 2 * i + 2)
    colsl = slice(2 * sl.start, 2 * sl.stop)
    A[row, colsl] += flatten((S_smooth - S_plain)[None]) * np.repeat(w_arc, 2)[None, :]

    logw = -(half / (4 * np.pi)) * log_product_weights(xi0, p) * speed
    contrib = np.zeros((2, 2 * p))
    contrib[0, 0::2] = logw
    contrib[1, 1::2] = logw
    A[row, colsl] += contrib


def cross_operator(name, tgt_x, src_mesh: CurveMesh, shift=None, tgt_n=None,
                   factor=None, shifts=None) -> np.ndarray:
    """Operator of kernel `name` from src_mesh (optionally shifted) to targets.

    `shifts` sums the operator over several lattice copies of the source in
    one kernel evaluation.  Graded near-singular rules replace the plain
    panel quadrature for close targets, with a hard near-contact floor.
    """
    if shifts is None:
        shifts = [np.zeros(2) if shift is None else np.asarray(shift, dtype=float)]
    shifts = [np.asarray(s, dtype=float) for s in shifts]
    tgt_x = np.atleast_2d(np.asarray(tgt_x, dtype=float))
    nt = len(tgt_x)
    ns = src_mesh.n_nodes
    k = len(shifts)
    src_all = np.concatenate([src_mesh.x + s for s in shifts], axis=0)
    n_all = np.tile(src_mesh.normal, (k, 1))
    blk = eval_blocks(name, tgt_x, src_all, s_n=n_all, t_n=tgt_n)
    flat = flatten(blk)
    rows_per = 1 if name in ("PS", "PD") else 2
    A_parts = flat.reshape(rows_per * nt, k, 2 * ns)
    w2 = np.repeat(src_mesh.w_arc, 2)[None, :]
    A = (A_parts.sum(axis=1)) * w2

    # near corrections per lattice copy
    d = np.linalg.norm(tgt_x[:, None, :] - src_all[None, :, :], axis=-1)
    d_panel = d.reshape(nt, k, src_mesh.n_panels, src_mesh.p).min(axis=3)
    near = d_panel < NEAR_FACTOR * src_mesh.panel_arc[None, None, :]
    if not np.any(near):
        return A
    for i, g, j in zip(*np.nonzero(near)):
        if d_panel[i, g, j] < HARD_FLOOR * src_mesh.panel_arc[j]:
            raise NearContactError(
                f"evaluation target within the near-contact floor of {src_mesh.label}")
        sh = shifts[g]
        t_f, w_f, interp = src_mesh.refined_rule(j, tgt_x[i] - sh, factor=factor)
        fr = src_mesh.frenet(t_f)
        n_t = None if tgt_n is None else [tgt_n[i]]
        fine = eval_blocks(name, [tgt_x[i]], fr.x + sh, s_n=fr.normal, t_n=n_t)
        fine_flat = flatten(fine)  # (rows_per, 2*nf)
        wf_arc = w_f * fr.speed
        fine_w = fine_flat * np.repeat(wf_arc, 2)[None, :]
        nf = len(t_f)
        fine_mat = fine_w.reshape(rows_per, nf, 2)
        corr = np.einsum("rfc,fb->rbc", fine_mat, interp)  # (rows_per, p, 2)
        sl = src_mesh.panel_slice(j)
        colsl = slice(2 * sl.start, 2 * sl.stop)
        rowsl = slice(rows_per * i, rows_per * i + rows_per)
        # replace this copy's plain contribution with the refined one
        plain = blk[i, g * ns + sl.start : g * ns + sl.stop]
        plain_flat = flatten(plain[None]) if plain.ndim == 3 else plain.reshape(1, -1)
        A[rowsl, colsl] += corr.reshape(rows_per, 2 * src_mesh.p) \
            - plain_flat.reshape(rows_per, 2 * src_mesh.p) * w2[:, 2 * sl.start : 2 * sl.stop]
    return A


# ---------------------------------------------------------------------------
# boundary mesh


@dataclass
class SectionNodes:
    """Collocation/flux nodes on the periodic end sections."""

    x0: np.ndarray       # nodes on Gamma_0 (x1 = 0)
    weights: np.ndarray  # line quadrature weights along the section
    height: float
    z_minus: np.ndarray
    z_plus: np.ndarray


@dataclass
class BoundaryMesh:
    wall_plus: CurveMesh
    wall_minus: CurveMesh
    particle: CurveMesh | None
    section: SectionNodes
    L: float
    lattice: np.ndarray

    @property
    def walls(self):
        return (self.wall_plus, self.wall_minus)

    def wall_nodes(self) -> int:
        return self.wall_plus.n_nodes + self.wall_minus.n_nodes

    def particle_nodes(self) -> int:
        return 0 if self.particle is None else self.particle.n_nodes


def section_nodes(shape: WallShape, p_sec: int) -> SectionNodes:
    ends = shape.endpoints()
    z_plus = ends["+"]
    z_minus = ends["-"]
    if z_plus[1] <= z_minus[1]:
        raise GeometryError("walls cross at the periodic section")
    xi, wq = gauss_rule(p_sec)
    mid = 0.5 * (z_plus[1] + z_minus[1])
    half = 0.5 * (z_plus[1] - z_minus[1])
    ys = mid + half * xi
    pts = np.stack([np.zeros_like(ys), ys], axis=-1)
    return SectionNodes(x0=pts, weights=half * wq, height=2 * half,
                        z_minus=z_minus, z_plus=z_plus)


def build_mesh(shape: WallShape, particle_shape: ParticleShape | None,
               particle_cfg: RigidConfig | None, *, n_wall_panels: int,
               n_particle_panels: int, p: int, p_section: int | None = None,
               contact_factor: float = 0.5) -> BoundaryMesh:
    """Assemble the boundary mesh; aborts on particle/wall near contact."""
    if n_wall_panels < 2 or (particle_shape is not None and n_particle_panels < 2):
        raise GeometryError("need at least 2 panels per curve")
    if p < 4:
        raise GeometryError("panel order p must be >= 4")
    wp = wall_curve_mesh(shape, "+", n_wall_panels, p)
    wm = wall_curve_mesh(shape, "-", n_wall_panels, p)
    part = None
    if particle_shape is not None:
        part = particle_curve_mesh(particle_shape, particle_cfg,
                                   n_particle_panels, p)
        gap = min(
            min(wp.min_distance(part.x + s) for s in
                ([0.0, 0.0], [shape.cfg.L, 0.0], [-shape.cfg.L, 0.0])),
            min(wm.min_distance(part.x + s) for s in
                ([0.0, 0.0], [shape.cfg.L, 0.0], [-shape.cfg.L, 0.0])),
        )
        if gap < contact_factor * np.max(part.panel_arc):
            raise NearContactError(
                f"particle-wall gap {gap:.3g} below contact threshold")
    sec = section_nodes(shape, p_section or p)
    return BoundaryMesh(wall_plus=wp, wall_minus=wm, particle=part, section=sec,
                        L=shape.cfg.L, lattice=np.array([shape.cfg.L, 0.0]))
