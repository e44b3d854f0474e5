import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy.integrate import quad

from fracbubble import DomainSpec, build_operator, make_grid
from fracbubble.errors import CapabilityError, DomainError
from fracbubble.green import (BallTable, K_theta, K_theta_closed_derivative, NumericTable, ball_green,
                              ball_robin_closed, d_half_from_limit, fit_blowup_slope, gamma_fundamental,
                              green_numeric, half_space_green, half_space_robin, kelvin_point, kelvin_robin_lower_bound,
                              kelvin_transform, kernel_K, kernel_K_and_partials, kernel_K_partials_closed,
                              regular_part, robin, spectral_green_series, spectral_half_space_green)

UNIT = DomainSpec.interval(-1.0, 1.0)
GRID = np.geomspace(0.1, 10.0, 10)

# a d iota and a d iota / 2^{n-2s} for n = 1, s = 0.3 (mpmath, 30 digits)
R_BALL_CENTER = 0.36859883825144567
R_PLUS_UNIT_HEIGHT = 0.27934568276710141


@pytest.mark.parametrize("n,s", [(1, 0.3), (2, 0.5), (3, 0.7)])
def test_kernel_partials_match_differences(n, s):
    for r in GRID:
        for t in GRID:
            K, Kr, Kt = kernel_K_and_partials(r, t, n, s)
            hr, ht = 1e-5 * r, 1e-5 * t
            fr = (kernel_K(r + hr, t, n, s) - kernel_K(r - hr, t, n, s)) / (2 * hr)
            ft = (kernel_K(r, t + ht, n, s) - kernel_K(r, t - ht, n, s)) / (2 * ht)
            assert Kr == pytest.approx(fr, rel=1e-6)
            assert Kt == pytest.approx(ft, rel=1e-6)
            assert Kr > 0 > Kt


def test_kernel_hyp_matches_quad():
    r, t = np.meshgrid(GRID, GRID)
    Kh = kernel_K(r, t, 1, 0.3, method="hyp")
    Kq = np.vectorize(lambda a, b: kernel_K(a, b, 1, 0.3))(r, t)
    assert Kh == pytest.approx(Kq, rel=1e-10)


def test_closed_partials_three_dimensions():
    for r in GRID[::3]:
        for t in GRID[::3]:
            _, Kr, Kt = kernel_K_and_partials(r, t, 3, 0.4)
            cr, ct = kernel_K_partials_closed(r, t, 3, 0.4)
            assert (cr, ct) == pytest.approx((Kr, Kt), rel=1e-8)
    with pytest.raises(CapabilityError):
        kernel_K_partials_closed(1.0, 1.0, 1, 0.3)


@pytest.mark.parametrize("theta", [1.1, 2.0, 5.0, 10.0])
def test_K_theta_increasing(theta):
    assert K_theta(theta, 1, 0.3)[1] > 0
    _, d3 = K_theta(theta, 3, 0.5)
    assert d3 > 0
    assert d3 == pytest.approx(K_theta_closed_derivative(theta, 3, 0.5), rel=1e-8)


def test_d_half_limit(consts):
    d, via_k1, via_k4 = d_half_from_limit(1, 0.3)
    assert d == pytest.approx(math.sin(0.3 * math.pi) / math.pi, rel=1e-12)
    assert via_k1 == pytest.approx(d, rel=1e-8)
    assert via_k4 == pytest.approx(d, rel=1e-8)


def test_gamma_fundamental(consts):
    assert gamma_fundamental(consts, 1.3, 0.3) == pytest.approx(consts.a)
    assert gamma_fundamental(consts, 0.2, 1.7) == gamma_fundamental(consts, 1.7, 0.2)
    with pytest.raises(DomainError):
        gamma_fundamental(consts, 0.5, 0.5)


def test_gamma_fourier_mass(consts):
    # int Gamma phi = (1/pi) int_0^inf k^{-2s} phi_hat(k) dk for a unit-mass Gaussian
    sig = 0.3
    lhs = 2 * quad(lambda x: consts.a * x ** -0.4 * math.exp(-x * x / (2 * sig * sig)) / (sig * math.sqrt(2 * math.pi)),
                   0, np.inf, limit=200)[0]
    rhs = quad(lambda k: k ** -0.6 * math.exp(-0.5 * (sig * k) ** 2), 0, np.inf, limit=200)[0] / math.pi
    assert lhs == pytest.approx(rhs, rel=1e-3)


@given(x1=st.floats(-3, 3), h1=st.floats(0.01, 3), x2=st.floats(-3, 3), h2=st.floats(0.01, 3))
def test_half_space_green_bounds(consts2, x1, h1, x2, h2):
    a, b = (x1, h1), (x2, h2)
    if math.dist(a, b) < 1e-3:
        return
    G = half_space_green(consts2, a, b)
    assert G == pytest.approx(half_space_green(consts2, b, a), rel=1e-12)
    assert 0 <= G <= gamma_fundamental(consts2, a, b) * (1 + 1e-12)


def test_half_space_green_vanishes_at_boundary(consts):
    hs = np.array([1e-4, 1e-6, 1e-8])
    vals = np.array([half_space_green(consts, [h], [1.0]) for h in hs])
    assert np.all(np.diff(vals) < 0) and vals[-1] > 0
    # G_+ ~ height^s near the boundary
    assert fit_blowup_slope(hs, vals) == pytest.approx(0.3, rel=1e-3)


def test_half_space_robin(consts):
    assert half_space_robin(consts, 1.0) == pytest.approx(R_PLUS_UNIT_HEIGHT, rel=1e-9)
    assert half_space_robin(consts, 0.5) == pytest.approx(2 ** 0.4 * half_space_robin(consts, 1.0), rel=1e-14)


def test_truncated_half_space_robin(desk, consts):
    hs = DomainSpec.truncated_half_space(1, 40.0, roi=1.0)
    op = build_operator(hs, desk, make_grid(hs, N=2000), "restricted")
    assert robin(op, 1.0, consts) == pytest.approx(half_space_robin(consts, 1.0), rel=0.05)


@given(z=st.floats(-5, 5), y=st.floats(-5, 5), hy=st.floats(0.01, 5),
       hz=st.one_of(st.just(0.0), st.floats(1e-3, 5)))
def test_spectral_half_space_images(consts2, z, y, hy, hz):
    Z, Y = (z, hz), (y, hy)
    if math.dist(Z, Y) < 1e-6:
        return
    G = spectral_half_space_green(consts2, Z, Y)
    if hz == 0.0:
        assert G == 0.0
    else:
        assert G > 0


def test_spectral_half_space_far_height(consts2):
    Z = np.array([0.0, 1e6])
    Y = np.array([0.5, 1e6 + 1.0])
    assert spectral_half_space_green(consts2, Z, Y) == pytest.approx(gamma_fundamental(consts2, Z, Y), rel=1e-5)


@given(a=st.lists(st.floats(-3, 3), min_size=2, max_size=2), b=st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_kelvin_identity(a, b):
    a, b = np.array(a), np.array(b)
    if min(np.linalg.norm(a), np.linalg.norm(b)) < 1e-3:
        return
    lhs = np.linalg.norm(kelvin_point(a) - kelvin_point(b)) * np.linalg.norm(a) * np.linalg.norm(b)
    assert lhs == pytest.approx(np.linalg.norm(a - b), rel=1e-12, abs=1e-12)


def test_kelvin_sphere_and_involution():
    u = lambda x: float(np.exp(-np.sum(np.atleast_1d(x) ** 2)) * (1 + np.atleast_1d(x)[0]))
    xi = np.array([0.6, 0.8])
    assert kelvin_point(xi) == pytest.approx(xi)
    assert kelvin_transform(u, xi, 2, 0.3) == pytest.approx(u(xi))
    x = np.array([0.3, -1.7])
    uu = lambda p: kelvin_transform(u, p, 2, 0.3)
    assert kelvin_transform(uu, x, 2, 0.3) == pytest.approx(u(x), rel=1e-12)


def test_kelvin_robin_lower_bound(consts):
    assert kelvin_robin_lower_bound(consts, 2.0) == pytest.approx(R_BALL_CENTER * 3 ** -0.4)
    with pytest.raises(DomainError):
        kelvin_robin_lower_bound(consts, 0.5)


def test_ball_closed_forms(consts, ball):
    assert ball_robin_closed(consts, 0.0) == pytest.approx(R_BALL_CENTER, rel=1e-9)
    assert ball.R(0.0) == pytest.approx(R_BALL_CENTER, rel=1e-9)
    assert ball_green(consts, 0.2, -0.5) == pytest.approx(ball_green(consts, -0.5, 0.2), rel=1e-12)
    # scaling to a ball of radius 2
    assert ball_robin_closed(consts, 0.6, radius=2.0) == pytest.approx(2 ** -0.4 * ball_robin_closed(consts, 0.3))


@pytest.fixture(scope="module")
def unit_ops(desk):
    return {k: build_operator(UNIT, desk, make_grid(UNIT, N=800), k) for k in ("restricted", "spectral")}


@pytest.mark.parametrize("kind", ["restricted", "spectral"])
def test_numeric_green_symmetric_nonnegative(unit_ops, kind):
    op = unit_ops[kind]
    x = op.points
    g1, g2 = green_numeric(op, 0.3), green_numeric(op, -0.4)
    i, j = np.argmin(np.abs(x + 0.4)), np.argmin(np.abs(x - 0.3))
    assert g1[i] == pytest.approx(g2[j], rel=0.02)
    assert np.min(g1) >= 0


def test_spectral_green_series(unit_ops):
    op = unit_ops["spectral"]
    x = op.points[::50]
    G = green_numeric(op, 0.3)[::50]
    ser = spectral_green_series(UNIT, 0.3, x, 0.3, K=200000)
    assert G == pytest.approx(ser, rel=0.01)


def test_regular_part_near_boundary(unit_ops, consts):
    op = unit_ops["restricted"]
    H = regular_part(op, 0.3, consts)
    x = op.points
    gam = consts.a * np.abs(x - 0.3) ** -0.4
    rel = np.abs(H - gam) / gam  # = G / Gamma
    assert rel[0] < 0.1 and rel[-1] < 0.1
    k = np.argmin(np.abs(x - 0.5))
    assert rel[0] < rel[k] and rel[-1] < rel[k]


def test_numeric_robin_vs_ball(unit_ops, consts):
    op = unit_ops["restricted"]
    pts = [0.0, 0.3, 0.6, 0.9]
    R = [robin(op, p, consts) for p in pts]
    assert R == pytest.approx([ball_robin_closed(consts, p) for p in pts], rel=0.01)
    assert all(a < b for a, b in zip(R, R[1:]))


@pytest.mark.parametrize("kind", ["restricted", "spectral"])
def test_robin_blowup_slope(desk, consts, kind):
    op = build_operator(UNIT, desk, make_grid(UNIT, N=1000), kind)
    h = op.grid.h
    d = np.maximum(np.round(np.geomspace(0.01, 0.1, 8) / h), 4) * h
    R = [robin(op, 1.0 - v, consts) for v in d]
    assert fit_blowup_slope(d, R) == pytest.approx(-0.4, rel=0.1)


def test_robin_slope_wide_window(desk, consts):
    # on d in [0.05, 0.2] diam the ball's own closed form has slope about -0.351, not -0.4
    op = build_operator(UNIT, desk, make_grid(UNIT, N=1000), "restricted")
    d = np.round(np.geomspace(0.1, 0.4, 6) / op.grid.h) * op.grid.h
    closed = fit_blowup_slope(d, [ball_robin_closed(consts, 1.0 - v) for v in d])
    assert closed == pytest.approx(-0.351, abs=2e-3)
    assert fit_blowup_slope(d, [robin(op, 1.0 - v, consts) for v in d]) == pytest.approx(closed, rel=0.02)


def test_numeric_table_matches_ball(desk, consts, ball):
    T = NumericTable(build_operator(UNIT, desk, make_grid(UNIT, N=800), "restricted"), consts)
    for x in (0.0, 0.25, -0.5):
        assert T.R(x) == pytest.approx(ball.R(x), rel=0.01)
    assert T.G(0.2, -0.3) == pytest.approx(ball.G(0.2, -0.3), rel=0.02)
    assert T.H(0.2, -0.3) == pytest.approx(T.H(-0.3, 0.2), rel=1e-10)
