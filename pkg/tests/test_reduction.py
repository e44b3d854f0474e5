import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracbubble import DomainSpec, build_operator, make_grid
from fracbubble.constants import SUBCRITICAL, bubble_value, kernel_functions
from fracbubble.errors import ConfigurationError
from fracbubble.reduction import (AnsatzConfig, Discretization, ProjectedSystem, WeightedNorm, a_priori_bound_probe,
                                  ansatz_operator, asymptotic_profile, back_transform, build_ansatz,
                                  convolution_bound_probe, energy, energy_expansion_check, error_terms,
                                  nondegeneracy_check, nonlinearity, predicted_slope, project_bubble,
                                  solve_nonlinear_projected, solve_projected_linear, weighted_norm)

UNIT = DomainSpec.interval(-1.0, 1.0)


@pytest.fixture(scope="module")
def lam_star(ball):
    return ball.R(0.0) ** -0.5


def setup(desk, consts, xi, Lam, eps):
    cfg = AnsatzConfig(desk, UNIT, xi, Lam, eps, consts)
    op = ansatz_operator(cfg)
    return cfg, op, build_ansatz(op, cfg)


@pytest.fixture(scope="module")
def one(desk, consts, lam_star):
    return setup(desk, consts, [0.0], [lam_star], 0.02)


@pytest.fixture(scope="module")
def two(desk, consts):
    return setup(desk, consts, [-0.4, 0.35], [1.1, 0.9], 0.02)


# weighted norms -----------------------------------------------------------

def test_weighted_norm_examples():
    x = np.linspace(-50, 50, 1001)
    wn = WeightedNorm(0.9, [3.0])
    assert weighted_norm((1 + np.abs(x - 3.0)) ** -0.9, wn, x) == pytest.approx(1.0)
    assert weighted_norm(np.zeros_like(x), wn, x) == 0.0
    with pytest.raises(ConfigurationError):
        WeightedNorm(1.3, [0.0]).check_linear_theory(0.3)
    with pytest.raises(ConfigurationError):
        WeightedNorm(0.0, [0.0])


@given(seed=st.integers(0, 10 ** 6), frac=st.floats(0.0, 1.0))
def test_weighted_norm_monotone(seed, frac):
    rng = np.random.default_rng(seed)
    x = np.linspace(-20, 20, 201)
    h2 = rng.normal(size=x.size)
    h1 = h2 * frac * rng.uniform(0, 1, size=x.size)
    wn = WeightedNorm(0.9, [0.0, 5.0])
    assert weighted_norm(h1, wn, x) <= weighted_norm(h2, wn, x)


# projections --------------------------------------------------------------

def test_whole_space_projection_is_bubble(desk, consts):
    cfg = AnsatzConfig(desk, UNIT, [0.0], [1.0], 0.02, consts)
    d = DomainSpec.interval(-50.0, 50.0)
    op = build_operator(d, desk, make_grid(d, N=200), "whole-space")
    v = project_bubble(op, cfg, 0, Discretization(op))
    assert np.array_equal(v, bubble_value(desk, cfg.bubble(0), op.points, consts))


def test_projection_below_bubble(one):
    cfg, op, ans = one
    y = op.points
    gap = bubble_value(cfg.params, cfg.bubble(0), y, cfg.constants) - ans.v[0]
    assert np.min(gap) >= 0
    assert abs(y[np.argmax(gap)]) > 0.99 * cfg.scale


def test_projection_methods_agree(one):
    cfg, op, ans = one
    vs = project_bubble(op, cfg, 0, ans.disc, "solve")
    assert np.max(np.abs(vs - ans.v[0])) < 2e-3 * np.max(ans.v[0])


def test_interior_expansion(desk, consts, ball, lam_star):
    # v(eps^{-1/(n-2s)} x) / eps -> alpha lambda^{(n-2s)/2} G(x, xi), lambda^{(n-2s)/2} = beta^{1/2} Lambda
    errs = []
    for e in (0.04, 0.01):
        cfg, op, ans = setup(desk, consts, [0.0], [lam_star], e)
        y = op.points
        for x in (0.3, -0.6):
            k = int(np.argmin(np.abs(y - x * cfg.scale)))
            ref = consts.alpha * math.sqrt(consts.beta) * lam_star * ball.G(y[k] / cfg.scale, 0.0)
            errs.append(abs(ans.v[0][k] / e / ref - 1))
    assert max(errs) < 1e-2


def test_ansatz_superposition(two, one):
    cfg, op, ans = two
    assert ans.vbar == pytest.approx(ans.v[0] + ans.v[1])
    assert np.array_equal(one[2].vbar, one[2].v[0])
    y = op.points
    for i in range(2):
        near = np.abs(y - cfg.xi_scaled[i]) < 0.3 * cfg.scale
        k = np.argmax(np.where(near, ans.vbar, -np.inf))
        spacing = np.max(np.diff(y)[max(k - 1, 0):k + 1])
        assert abs(y[k] - cfg.xi_scaled[i]) <= spacing


# error terms --------------------------------------------------------------

def test_nonlinearity_examples(one):
    cfg, op, ans = one
    assert np.all(nonlinearity(ans.vbar_q, np.zeros_like(ans.vbar_q), cfg.params.p) == 0)
    _, N = error_terms(ans, np.zeros_like(ans.vbar_q))
    assert np.all(N == 0)


def test_nonlinearity_order(one):
    cfg, op, ans = one
    shape = np.exp(-np.abs(ans.disc.xq) / cfg.scale)
    mags = np.geomspace(1e-4, 1e-2, 5)
    sizes = [np.max(np.abs(nonlinearity(ans.vbar_q, m * shape, cfg.params.p))) for m in mags]
    slope = np.polyfit(np.log(mags), np.log(sizes), 1)[0]
    assert slope == pytest.approx(min(cfg.params.p_star, 2.0), abs=0.05)


# projected linear problem -------------------------------------------------

@pytest.fixture(scope="module")
def small(desk, consts, lam_star):
    cfg = AnsatzConfig(desk, UNIT, [0.0], [lam_star], 0.005, consts)
    op = ansatz_operator(cfg)
    ans = build_ansatz(op, cfg)
    return ans, ProjectedSystem(ans), WeightedNorm(0.9, cfg.xi_scaled)


def test_projected_zero_rhs(small):
    ans, system, wn = small
    sol = solve_projected_linear(ans, lambda x: np.zeros_like(x), wn, system)
    assert np.all(sol.phi == 0) and np.all(sol.c == 0)


def test_constraint_generator_absorbed(small):
    ans, system, wn = small
    cfg = ans.cfg
    h = lambda x: bubble_value(cfg.params, cfg.bubble(0), x, cfg.constants) ** (cfg.params.p_star - 1) * \
        kernel_functions(cfg.params, cfg.bubble(0), 0, x, cfg.constants)
    sol = solve_projected_linear(ans, h, wn, system)
    assert np.max(np.abs(sol.phi)) < 1e-10
    assert sol.c[0, 0] == pytest.approx(-1.0, abs=1e-10)
    assert abs(sol.c[0, 1]) < 1e-10


def test_dense_oracle(small):
    ans, system, wn = small
    assert 300 <= ans.op.size <= 500
    h = lambda x: np.cos(0.1 * x) / (1 + np.abs(x)) ** 0.9
    a = solve_projected_linear(ans, h, wn, system)
    b = solve_projected_linear(ans, h, wn, system, method="dense")
    assert np.max(np.abs(a.phi - b.phi)) < 1e-8 * np.max(np.abs(b.phi))
    assert np.max(np.abs(a.c - b.c)) < 1e-8
    assert a.orthogonality < 1e-12


@given(k=st.floats(0.01, 1.0), scale=st.floats(-20, 20))
def test_projected_linearity(small, k, scale):
    ans, system, wn = small
    h = lambda x: np.sin(k * x) / (1 + np.abs(x)) ** 0.9
    a = solve_projected_linear(ans, h, wn, system)
    b = solve_projected_linear(ans, lambda x: scale * h(x), wn, system)
    assert np.max(np.abs(b.phi - scale * a.phi)) <= 1e-9 * (1 + abs(scale)) * max(1e-300, np.max(np.abs(a.phi)))
    assert np.max(np.abs(b.c - scale * a.c)) <= 1e-9 * (1 + abs(scale)) * max(1.0, np.max(np.abs(a.c)))


# nonlinear problem --------------------------------------------------------

def test_fixed_point_contracts(one):
    cfg, op, ans = one
    sol = solve_nonlinear_projected(ans, WeightedNorm(0.9, cfg.xi_scaled))
    assert sol.contraction < 0.5
    assert sol.orthogonality < 1e-12
    assert sol.residuals[-1] < 1e-10


def test_whole_space_fixed_point_is_zero(desk, consts):
    # on a huge domain the ansatz is nearly the bubble: phi tiny
    cfg = AnsatzConfig(desk, UNIT, [0.0], [1.0], 0.0005, consts)
    op = ansatz_operator(cfg)
    ans = build_ansatz(op, cfg)
    sol = solve_nonlinear_projected(ans, WeightedNorm(0.9, cfg.xi_scaled))
    assert sol.norms["phi_inf"] < 1e-2 * np.max(ans.vbar)


def test_multiplier_smaller_at_critical_point(desk, consts, lam_star):
    cs = []
    for xi, L in (([0.0], [lam_star]), ([0.3], [1.2])):
        cfg, op, ans = setup(desk, consts, xi, L, 0.01)
        cs.append(np.max(np.abs(solve_nonlinear_projected(ans, WeightedNorm(0.9, cfg.xi_scaled)).c)))
    assert cs[1] >= 10 * cs[0]


# energy -------------------------------------------------------------------

def test_energy_zero_and_nehari(one):
    cfg, op, ans = one
    assert energy(ans, cfg, v=np.zeros_like(ans.vbar)) == 0.0
    ts = np.linspace(0.9, 1.1, 21)
    J = [energy(ans, cfg, v=t * ans.vbar) for t in ts]
    assert abs(ts[int(np.argmax(J))] - 1.0) <= 0.02


def test_predicted_slope_arithmetic(desk, consts, ball):
    cfg = AnsatzConfig(desk, UNIT, [0.2], [0.8], 0.01, consts)
    H = ball.R(0.2)
    d = predicted_slope(cfg.with_point(Lambda=[1.6]), ball) - predicted_slope(cfg, ball)
    assert d == pytest.approx(consts.omega * (0.5 * H * 3 * 0.8 ** 2 - math.log(2)), rel=1e-12)


def test_interaction_lowers_slope(desk, consts, ball):
    cfg = AnsatzConfig(desk, UNIT, [-0.5, 0.5], [1.0, 1.0], 0.01, consts)
    apart = sum(predicted_slope(AnsatzConfig(desk, UNIT, [x], [1.0], 0.01, consts), ball) for x in (-0.5, 0.5))
    assert predicted_slope(cfg, ball) < apart


def test_energy_expansion_single_bubble(desk, consts, ball, lam_star):
    cfg = AnsatzConfig(desk, UNIT, [0.0], [lam_star], 0.04, consts)
    rep = energy_expansion_check(cfg, ball, gradient=False)
    assert rep["passed"] and rep["rel_error"] < 0.05


# profile -------------------------------------------------------------------

def test_asymptotic_profile(desk, consts, lam_star):
    diffs = []
    for e in (0.04, 0.02, 0.01):
        cfg, op, ans = setup(desk, consts, [0.0], [lam_star], e)
        sol = solve_nonlinear_projected(ans, WeightedNorm(0.9, cfg.xi_scaled))
        u, sc = back_transform(cfg, ans.vbar + sol.phi)
        prof = asymptotic_profile(cfg, op.points / sc)
        assert np.min(u) > 0
        k = desk.amplitude_exponent(e)
        lam = cfg.lam[0]
        assert asymptotic_profile(cfg, np.array([0.0]))[0] == pytest.approx(
            lam ** -0.2 * consts.b * e ** -k, rel=1e-12)
        diffs.append(np.max(np.abs(u - prof)) / np.max(prof))
    assert diffs[0] > diffs[1] > diffs[2]
    far = asymptotic_profile(cfg, np.array([0.9]))[0]
    assert far < 0.05 * asymptotic_profile(cfg, np.array([0.0]))[0]


# non-degeneracy and bounds ------------------------------------------------

def test_nondegeneracy(desk, consts):
    r = nondegeneracy_check(desk, consts)
    assert r["passed"]
    assert len(r["near_zero"]) == 2
    assert r["negative"] >= 1
    assert max(r["angles"]) < 0.05


def test_a_priori_probe(desk, consts, lam_star):
    def builder(e):
        cfg = AnsatzConfig(desk, UNIT, [0.0], [lam_star], e, consts)
        return build_ansatz(ansatz_operator(cfg), cfg)

    rep = a_priori_bound_probe(builder, [0.02, 0.01], trials=2)
    assert rep["bounded"]
    assert max(r["linearity_defect"] for r in rep["rows"]) < 1e-10


def test_convolution_probe():
    out = convolution_bound_probe(0.3, alphas=(0.8, 1.0), trials=2)
    assert all(0 < v < 50 for v in out.values())
