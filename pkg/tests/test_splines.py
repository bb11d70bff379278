import numpy as np
import pytest
from scipy.integrate import quad
from scipy.interpolate import make_interp_spline

from peripump.splines import (
    GeometryError,
    SplineConfig,
    WallShape,
    bspline_basis,
    flat_ps,
    sine_ps,
)

TWO_PI = 2 * np.pi
RNG = np.random.default_rng(3)


def gauss_grid(n_panels=24, p=8):
    """Composite Gauss parameter grid on [0, 2pi] with weights."""
    nodes, weights = np.polynomial.legendre.leggauss(p)
    edges = np.linspace(0.0, TWO_PI, n_panels + 1)
    ts, ws = [], []
    for a, b in zip(edges[:-1], edges[1:]):
        ts.append(0.5 * (b - a) * nodes + 0.5 * (a + b))
        ws.append(0.5 * (b - a) * weights)
    return np.concatenate(ts), np.concatenate(ws)


def test_basis_degree_zero_indicator():
    assert bspline_basis(0, 0, 0.5) == 1.0
    assert bspline_basis(0, 0, 1.5) == 0.0


def test_basis_outside_support():
    assert bspline_basis(0, 5, 6.5) == 0.0
    assert bspline_basis(0, 5, -0.1) == 0.0


def test_basis_partition_of_unity_scalar():
    t = 3.37
    total = sum(bspline_basis(k, 5, t) for k in range(-5, 10))
    assert abs(total - 1.0) < 1e-14


def test_partition_of_unity_on_wall_grid():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, flat_ps(cfg, 1.0))
    ts = np.linspace(0.0, TWO_PI, 200)
    B = shape._basis_row(ts)
    assert np.max(np.abs(B.sum(axis=1) - 1.0)) < 1e-12


def test_flat_channel_reproduces_constants():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, flat_ps(cfg, 0.8))
    ts = np.linspace(0, TWO_PI, 313)
    assert np.max(np.abs(shape.component("2+", ts) - 0.8)) < 1e-11
    assert np.max(np.abs(shape.component("2-", ts) + 0.8)) < 1e-11
    # x1 is the exact linear ramp
    assert np.max(np.abs(shape.component("1+", ts) - (TWO_PI - ts))) < 1e-11


def test_knot_reproduction_residual():
    cfg = SplineConfig(M=9)
    ps = flat_ps(cfg, 1.0) + 0.1 * RNG.normal(size=cfg.n_free)
    shape = WallShape(cfg, ps)
    assert shape.coefficient_residual() < 1e-10


def test_sine_interpolation_accuracy_against_dense_quintic():
    cfg = SplineConfig(M=7)
    knots = TWO_PI * np.arange(1, cfg.M) / cfg.M
    ps = flat_ps(cfg, 0.0)
    ps[2 * (cfg.M - 1) : 2 * (cfg.M - 1) + cfg.M - 1] = np.sin(knots)
    ps[2 * (cfg.M - 1) + cfg.M - 1] = 0.0
    shape = WallShape(cfg, ps)
    ts = np.linspace(0, TWO_PI, 2000)
    err = np.max(np.abs(shape.component("2+", ts) - np.sin(ts)))
    # independent oracle: scipy periodic quintic interpolation of the same data
    tref = np.concatenate([[0.0], knots, [TWO_PI]])
    ref = make_interp_spline(tref, np.sin(tref), k=5, bc_type="periodic")
    err_ref = np.max(np.abs(ref(ts) - np.sin(ts)))
    assert err <= 3 * err_ref + 1e-12


def test_endpoint_conditions_and_periodicity():
    cfg = SplineConfig(M=8)
    ps = flat_ps(cfg, 1.0) + 0.15 * RNG.normal(size=cfg.n_free)
    shape = WallShape(cfg, ps)
    for side in "+-":
        p0 = shape.point(side, [0.0])[0]
        p1 = shape.point(side, [TWO_PI])[0]
        assert abs(p0[0] - cfg.L) < 1e-11
        assert abs(p1[0]) < 1e-11
        assert abs(p0[1] - p1[1]) < 1e-11
        for order in range(1, 5):
            d0 = shape.derivative(side, [0.0], order)[0]
            d1 = shape.derivative(side, [TWO_PI], order)[0]
            assert np.max(np.abs(d0 - d1)) < 1e-9


def test_frenet_flat_and_normal_orientation():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, flat_ps(cfg, 0.9))
    ts = np.linspace(0.1, TWO_PI - 0.1, 50)
    for side, sign in (("+", 1.0), ("-", -1.0)):
        fr = shape.frenet(side, ts)
        assert np.max(np.abs(fr.kappa)) < 1e-11
        assert np.max(np.abs(np.linalg.norm(fr.tau, axis=1) - 1)) < 1e-12
        assert np.max(np.abs(np.linalg.norm(fr.normal, axis=1) - 1)) < 1e-12
        assert np.max(np.abs(np.einsum("ij,ij->i", fr.tau, fr.normal))) < 1e-12
        # normal points out of the fluid (away from the centerline x2=0)
        assert np.all(sign * fr.normal[:, 1] > 0.99)
        # s runs leftwards
        assert np.all(fr.tau[:, 0] < 0)


def test_frenet_consistency_by_finite_differences():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, sine_ps(cfg, 1.0, 0.35))
    ts = np.linspace(0.3, TWO_PI - 0.3, 25)
    h = 1e-5
    for side in "+-":
        fr = shape.frenet(side, ts)
        frp = shape.frenet(side, ts + h)
        frm = shape.frenet(side, ts - h)
        # d_s x = tau
        dx = (frp.x - frm.x) / (2 * h) / fr.speed[:, None]
        assert np.max(np.abs(dx - fr.tau)) < 1e-8
        # d_s tau = kappa n
        dtau = (frp.tau - frm.tau) / (2 * h) / fr.speed[:, None]
        assert np.max(np.abs(dtau - fr.kappa[:, None] * fr.normal)) < 1e-7
        # d_s n = -kappa tau
        dn = (frp.normal - frm.normal) / (2 * h) / fr.speed[:, None]
        assert np.max(np.abs(dn + fr.kappa[:, None] * fr.tau)) < 1e-7


def test_wall_length_flat_is_one():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, flat_ps(cfg, 1.2))
    t, w = gauss_grid()
    assert abs(shape.length_ratio("+", t, w) - 1.0) < 1e-12
    assert abs(shape.length_ratio("-", t, w) - 1.0) < 1e-12


def test_wall_length_sine_against_quadrature_oracle():
    a = 0.4
    cfg = SplineConfig(M=12)  # enough intervals that the spline tracks the sine
    shape = WallShape(cfg, sine_ps(cfg, 1.0, a))
    t, w = gauss_grid(32, 10)
    ell = shape.length_ratio("+", t, w)
    oracle = quad(lambda s: np.sqrt(1 + a**2 * np.cos(s) ** 2), 0, TWO_PI,
                  epsabs=1e-12, limit=200)[0] / TWO_PI
    # the spline interpolates the sine, so lengths agree to spline accuracy
    assert abs(ell - oracle) < 1e-6
    assert ell >= 1.0


def test_wall_length_self_convergence():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, sine_ps(cfg, 1.0, 0.3))
    t1, w1 = gauss_grid(12, 8)
    t2, w2 = gauss_grid(24, 8)
    assert abs(shape.length_ratio("+", t1, w1) - shape.length_ratio("+", t2, w2)) < 1e-10


def test_transformation_zero_delta():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, sine_ps(cfg, 1.0, 0.3))
    t, w = gauss_grid()
    pf = shape.transformation_velocity(np.zeros(cfg.n_free), "+", t, w)
    assert np.max(np.abs(pf.theta)) == 0.0
    assert pf.dl_star == 0.0


def test_transformation_flat_wall_dl_star_zero():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, flat_ps(cfg, 1.0))
    # panels aligned with the spline knots so quadrature sees smooth pieces
    t, w = gauss_grid(4 * cfg.M, 10)
    for i in range(cfg.n_free):
        delta = np.zeros(cfg.n_free)
        delta[i] = 1.0
        pf = shape.transformation_velocity(delta, "+", t, w)
        assert abs(pf.dl_star) < 1e-12


def test_transformation_matches_fd_of_geometry():
    cfg = SplineConfig(M=7)
    ps = sine_ps(cfg, 1.0, 0.3)
    shape = WallShape(cfg, ps)
    t, w = gauss_grid(12, 6)
    eta = 1e-6
    for i in [0, cfg.M, 2 * cfg.M - 1, 3 * cfg.M, cfg.n_free - 1]:
        delta = np.zeros(cfg.n_free)
        delta[i] = 1.0
        pf = shape.transformation_velocity(delta, "+", t, w)
        xp = WallShape(cfg, ps + eta * delta).point("+", t)
        xm = WallShape(cfg, ps - eta * delta).point("+", t)
        fd = (xp - xm) / (2 * eta)
        assert np.max(np.abs(pf.theta - fd)) < 1e-8


def test_transformation_linearity():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, sine_ps(cfg, 1.0, 0.3))
    t, w = gauss_grid(8, 6)
    d1 = RNG.normal(size=cfg.n_free)
    d2 = RNG.normal(size=cfg.n_free)
    a, b = 1.7, -0.6
    f1 = shape.transformation_velocity(d1, "-", t, w)
    f2 = shape.transformation_velocity(d2, "-", t, w)
    f12 = shape.transformation_velocity(a * d1 + b * d2, "-", t, w)
    assert np.max(np.abs(f12.theta - a * f1.theta - b * f2.theta)) < 1e-12
    assert abs(f12.dl_star - a * f1.dl_star - b * f2.dl_star) < 1e-12


def test_admissibility_x1_endpoints_fixed():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, sine_ps(cfg, 1.0, 0.3))
    t, w = gauss_grid(8, 6)
    for i in range(cfg.n_free):
        delta = np.zeros(cfg.n_free)
        delta[i] = 1.0
        for side in "+-":
            dxi = shape.perturbation_coeffs(delta)
            for tt in (0.0, TWO_PI):
                row = shape._basis_row([tt], 0)[0]
                assert abs(row @ dxi["1" + side]) < 1e-11


def test_dl_star_equals_curvature_integral():
    cfg = SplineConfig(M=7)
    shape = WallShape(cfg, sine_ps(cfg, 1.0, 0.35))
    t, w = gauss_grid(4 * cfg.M, 10)
    fr = shape.frenet("+", t)
    for i in [2 * cfg.M - 2, 2 * cfg.M, 3 * cfg.M - 2]:
        delta = np.zeros(cfg.n_free)
        delta[i] = 1.0
        pf = shape.transformation_velocity(delta, "+", t, w)
        # dl* = -(1/L) integral kappa theta_n ds
        oracle = -np.dot(w, fr.kappa * pf.theta_n * fr.speed) / cfg.L
        assert abs(pf.dl_star - oracle) < 1e-12


def test_invalid_configuration_rejected():
    with pytest.raises(GeometryError):
        SplineConfig(M=1)
    with pytest.raises(GeometryError):
        SplineConfig(M=7, degree=4)
    cfg = SplineConfig(M=7)
    with pytest.raises(GeometryError):
        WallShape(cfg, np.zeros(5))
