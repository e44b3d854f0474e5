import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracbubble import DomainSpec
from fracbubble.constants import SUBCRITICAL, SUPERCRITICAL
from fracbubble.errors import DomainError
from fracbubble.green import FunctionTable, HalfSpaceTable
from fracbubble.landscape import (CriticalPoint, TruncationParams, check_admissible, classify_stability,
                                  critical_level, find_critical, grid_scan_minimum, halfspace_phi_plus,
                                  halfspace_phi_root, lambda_critical, minmax_estimate, psi_eval, psi_scan,
                                  psi_truncated, varphi)

TOY = FunctionTable(1.0, 2.0)


def test_psi_toy_values():
    assert psi_eval(FunctionTable(1.0), [0.0], [1.0], SUBCRITICAL).value == pytest.approx(0.5)
    assert psi_eval(TOY, [0.0, 1.0], [1.0, 1.0], SUPERCRITICAL).value == pytest.approx(-1.0)


def test_varphi_toy_and_lambda():
    assert varphi(TOY, 0.0, 1.0) == pytest.approx(-1.0)
    L1, L2, Q = lambda_critical(TOY, 0.0, 1.0)
    assert (L1, L2) == pytest.approx((1.0, 1.0), rel=1e-12)
    assert Q == pytest.approx(-2.0, abs=1e-10)
    p = psi_eval(TOY, [0.0, 1.0], [L1, L2], SUPERCRITICAL)
    assert np.max(np.abs(p.grad_Lambda)) < 1e-12
    assert p.value == pytest.approx(critical_level(-1.0), abs=1e-12)


@given(c=st.floats(0.01, 100.0))
def test_lambda_homogeneity(c):
    L1, L2, _ = lambda_critical(TOY, 0.0, 1.0)
    M1, M2, Q = lambda_critical(FunctionTable(c, 2.0 * c), 0.0, 1.0)
    assert (M1, M2) == pytest.approx((L1 / math.sqrt(c), L2 / math.sqrt(c)), rel=1e-10)
    assert Q == pytest.approx(-2.0, abs=1e-10)


@given(x1=st.floats(-0.8, 0.8), x2=st.floats(-0.8, 0.8))
def test_varphi_symmetric(ball, x1, x2):
    if abs(x1 - x2) < 1e-3:
        return
    assert varphi(ball, x1, x2) == varphi(ball, x2, x1)


def test_varphi_positive_when_far_apart(consts):
    assert varphi(HalfSpaceTable(consts), [1.0], [101.0]) > 0


@given(x1=st.floats(-0.7, 0.7), x2=st.floats(-0.7, 0.7), l1=st.floats(0.3, 3.0), l2=st.floats(0.3, 3.0),
       sign=st.sampled_from([SUBCRITICAL, SUPERCRITICAL]))
def test_gradient_matches_differences(ball, x1, x2, l1, l2, sign):
    if abs(x1 - x2) < 0.1:
        return
    z = np.array([x1, x2, l1, l2])
    f = lambda v: psi_eval(ball, v[:2], v[2:], sign).value
    g = psi_eval(ball, z[:2], z[2:], sign).gradient
    for k in range(4):
        e = np.zeros(4)
        e[k] = 1e-6
        fd = (f(z + e) - f(z - e)) / 2e-6
        assert g[k] == pytest.approx(fd, rel=1e-6, abs=1e-6 * max(1.0, np.max(np.abs(g))))


@given(x1=st.floats(-0.6, 0.6), gap=st.floats(0.05, 0.3))
def test_lambda_critical_on_ball(ball, x1, gap):
    x2 = min(x1 + gap, 0.8)
    if varphi(ball, x1, x2) >= 0:
        return
    L1, L2, Q = lambda_critical(ball, x1, x2)
    p = psi_eval(ball, [x1, x2], [L1, L2], SUPERCRITICAL)
    assert np.max(np.abs(p.grad_Lambda)) < 1e-12 * max(1.0, L1 * L1 + L2 * L2) * 100
    assert Q == pytest.approx(-2.0, abs=1e-10)
    assert p.value == pytest.approx(critical_level(varphi(ball, x1, x2)), rel=1e-10)


def test_truncation_properties(ball):
    tp = TruncationParams(M=50.0, rho=0.01)
    xi, L = [-0.3, 0.4], [1.0, 0.8]
    assert ball.G(*xi) < 50
    assert psi_truncated(ball, tp, xi, L)[0] == psi_eval(ball, xi, L, SUPERCRITICAL).value
    v, g = psi_truncated(ball, tp, [0.1, 0.1], L)
    assert math.isfinite(v) and np.all(np.isfinite(g))
    # straddle the level set G = M
    Mlev = ball.G(0.1, 0.1 + 1e-3)
    tp2 = TruncationParams(M=Mlev, rho=0.01)
    a = psi_truncated(ball, tp2, [0.1, 0.1 + 1e-3 * (1 - 1e-9)], L)[0]
    b = psi_truncated(ball, tp2, [0.1, 0.1 + 1e-3 * (1 + 1e-9)], L)[0]
    assert abs(a - b) < 1e-10 * max(1.0, abs(a)) * 100


def test_admissibility(ball):
    check_admissible(ball, [-0.2, 0.3], [1.0, 1.0], 0.05)
    with pytest.raises(DomainError):
        check_admissible(ball, [0.98], [1.0], 0.05)
    with pytest.raises(DomainError):
        check_admissible(ball, [0.1, 0.12], [1.0, 1.0], 0.05)
    with pytest.raises(DomainError):
        psi_eval(ball, [0.1, 0.12], [1.0, 1.0], delta=0.05)


def test_psi_scan_rows(ball):
    pts = [([x], [l]) for x in np.linspace(-0.5, 0.5, 5) for l in (0.5, 1.0, 2.0)]
    rows = psi_scan(ball, pts)
    assert rows.shape == (15, 4)


def test_find_critical_ball_center(ball):
    cps = find_critical(ball, [([0.3], [0.7]), ([-0.2], [2.0])], SUBCRITICAL)
    assert len(cps) == 1
    cp = cps[0]
    assert cp.converged and abs(cp.xi.ravel()[0]) < 1e-8
    assert cp.Lambda[0] == pytest.approx(ball.R(0.0) ** -0.5, abs=1e-6)
    assert cp.signature == (2, 0, 0)


def test_find_critical_decoupled_toy():
    cps = find_critical(FunctionTable(1.0, 0.0), [([0.0, 5.0], [0.4, 3.0])], SUBCRITICAL, dedup=1e-6)
    assert cps[0].Lambda == pytest.approx([1.0, 1.0], rel=1e-10)


def test_grid_scan_agrees_with_newton(ball):
    xs = np.linspace(-0.5, 0.5, 41)
    ls = np.linspace(1.0, 2.5, 61)
    x, lam, _ = grid_scan_minimum(ball, xs, ls)
    cp = find_critical(ball, [([x], [lam])])[0]
    assert abs(x - cp.xi.ravel()[0]) <= xs[1] - xs[0]
    assert abs(lam - cp.Lambda[0]) <= ls[1] - ls[0]


def test_stability_of_robin_minimum(ball):
    cp = find_critical(ball, [([0.2], [1.0])])[0]
    st_ = classify_stability(ball, cp, mu=1e-3, trials=10, seed=1)
    assert st_["stable"] and st_["nondegenerate"]
    assert st_["max_move"] < 1e-3


def test_stability_flags_degenerate_ridge():
    # Psi = 1/2 H(x) Lambda^2 - log Lambda with H = 1 + x^4: flat to fourth order in x
    ridge = FunctionTable(lambda a, b: 1.0 + a ** 4, domain=DomainSpec.interval(-5.0, 5.0))
    cp = find_critical(ridge, [([0.05], [1.0])], tol=1e-10)[0]
    st_ = classify_stability(ridge, cp, mu=1e-3, trials=10, seed=2)
    assert np.min(np.abs(cp.hessian_eigs)) < 1e-4 * np.max(np.abs(cp.hessian_eigs))
    assert not st_["stable"]


def test_minmax_sandwich_on_ball(ball):
    tp = TruncationParams(M=50.0, rho=0.01, sigma0=0.1)
    r = minmax_estimate(ball, tp, [-0.05, -0.04, 0.04, 0.05], flow_steps=300)
    assert r.observed_inf <= r.value <= r.initial_sup
    assert r.all_in_D and r.rejected_steps >= 0
    assert r.value == pytest.approx(r.predicted_level, rel=0.05)
    assert r.predicted_level == pytest.approx(critical_level(r.saddle_phi))


@pytest.mark.parametrize("kind", ["spectral", "restricted"])
def test_halfspace_phi(consts, kind):
    assert halfspace_phi_plus(consts, 1.0 + 1e-8, kind)[0] < -1e2
    assert halfspace_phi_plus(consts, 1e3, kind)[0] > 0
    root, dphi, changes = halfspace_phi_root(consts, kind)
    assert changes == 1
    assert abs(halfspace_phi_plus(consts, root, kind)[0]) < 1e-9
    assert dphi > 0


def test_halfspace_phi_derivative(consts):
    for kind in ("spectral", "restricted"):
        for th in (1.5, 3.0, 8.0):
            h = 1e-5
            fd = (halfspace_phi_plus(consts, th + h, kind)[0] - halfspace_phi_plus(consts, th - h, kind)[0]) / (2 * h)
            assert halfspace_phi_plus(consts, th, kind)[1] == pytest.approx(fd, rel=1e-6)


def test_spectral_root_value(consts):
    assert halfspace_phi_root(consts, "spectral")[0] == pytest.approx(1.4254, abs=1e-4)


def test_critical_point_record(ball):
    cp = find_critical(ball, [([0.1], [1.0])])[0]
    rec = cp.to_record()
    assert isinstance(cp, CriticalPoint) and rec["converged"]
