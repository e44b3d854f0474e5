"""Bubble profiles and constants.

Frozen reference values were produced once with mpmath at 30 digits from the
closed forms (Gamma / Beta functions) and direct quadrature of the profile.
"""

import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracbubble import BubbleParams, ConfigurationError, ConstantSet, FracParams, resolve_constants
from fracbubble.constants import (SUPERCRITICAL, beta_series_oracle, bubble_value, closed_form_a, closed_form_b,
                                  hypersingular_at_center, kernel_functions, poisson_extension)

FROZEN = {
    "b": 0.72708980668287099,
    "a": 0.571216247620264,
    "alpha": 1.2728801215161327,
    "omega": 0.12767919892171874,
    "beta": 0.078803433591169927,
    "energy_c": 0.19151879838257811,
    "iota": 2.5057955763406788,
    "d_half": 0.25751810740024193,
    "int_w_p1_log": -0.38046112679399128,
}
GAMMA_UNIT = -0.060575506786832425


@pytest.mark.parametrize("name", sorted(FROZEN))
def test_frozen_desk_constants(consts, name):
    assert getattr(consts, name) == pytest.approx(FROZEN[name], rel=1e-9)


def test_gamma_sign_and_unit(consts):
    assert consts.gamma_unit() == pytest.approx(GAMMA_UNIT, rel=1e-9)
    assert consts.gamma == pytest.approx(-GAMMA_UNIT, rel=1e-9)
    assert consts.gamma_for(2, SUPERCRITICAL) == pytest.approx(2 * GAMMA_UNIT, rel=1e-9)


def test_p_star(desk):
    assert desk.p_star == pytest.approx(4.0)


def test_residuals_below_tol(consts):
    for k, v in consts.residuals.items():
        assert v < 1e-10, k


def test_energy_identity(consts):
    # C = (s/n) int w^{p*+1}; in 1-D with s = 0.3, w^5 = b^5/(1+x^2) so the integral is pi b^5
    assert consts.energy_c == pytest.approx(0.3 * math.pi * consts.b ** 5, rel=1e-10)


def test_b_bisection_residual(desk, consts):
    t1, _ = hypersingular_at_center(1, 0.3, lambda r: consts.b * (1 + r * r) ** -0.2)
    assert t1 == pytest.approx(consts.b ** 4, rel=1e-9)


@pytest.mark.parametrize("n,s", [(1, 0.1), (1, 0.45), (2, 0.3), (2, 0.8), (3, 0.5)])
def test_closed_forms_across_dimensions(n, s):
    c = resolve_constants(FracParams(n, s))
    assert c.b == pytest.approx(closed_form_b(n, s), rel=1e-9)
    assert c.a == pytest.approx(closed_form_a(n, s), rel=1e-8)
    assert c.iota == pytest.approx(beta_series_oracle(n, s), rel=1e-12)
    assert c.d_half == pytest.approx(math.sin(math.pi * s) / math.pi, rel=1e-12)


def test_json_round_trip(consts):
    c2 = ConstantSet.from_json(consts.to_json())
    assert c2.values() == consts.values()


@pytest.mark.parametrize("kw", [dict(n=1, s=1.5), dict(n=1, s=0.0), dict(n=1, s=0.5), dict(n=0, s=0.3),
                                dict(n=1, s=0.3, sign="sideways"), dict(n=1, s=0.3, eps=-1.0)])
def test_param_validation(kw):
    with pytest.raises(ConfigurationError):
        FracParams(**kw)


def test_bubble_examples(desk, consts):
    assert bubble_value(desk, BubbleParams(1.0, (0.0,)), 0.0, consts) == pytest.approx(consts.b)
    assert bubble_value(desk, BubbleParams(1.0, (0.0,)), 1.0, consts) == pytest.approx(consts.b * 2 ** -0.2)
    lam = 0.37
    assert bubble_value(desk, BubbleParams(lam, (0.4,)), 0.4, consts) == pytest.approx(lam ** -0.2 * consts.b)


def test_kernel_functions_at_center(desk, consts):
    bp = BubbleParams(0.7, (0.2,))
    w0 = bubble_value(desk, bp, 0.2, consts)
    assert kernel_functions(desk, bp, 0, 0.2, consts) == pytest.approx(0.2 * w0)
    assert kernel_functions(desk, bp, 1, 0.2, consts) == 0.0
    with pytest.raises(ConfigurationError):
        kernel_functions(desk, bp, 2, 0.2, consts)


@given(lam=st.floats(0.05, 5.0), xi=st.floats(-2, 2), x=st.floats(-5, 5))
def test_kernel_functions_match_differences(desk, consts, lam, xi, x):
    h = 1e-5
    f = lambda L, c: bubble_value(desk, BubbleParams(L, (c,)), x, consts)
    z0 = -lam * (f(lam * (1 + h), xi) - f(lam * (1 - h), xi)) / (2 * h * lam)
    z1 = (f(lam, xi + h) - f(lam, xi - h)) / (2 * h)
    scale = consts.b * lam ** -0.2
    assert abs(kernel_functions(desk, BubbleParams(lam, (xi,)), 0, x, consts) - z0) <= 1e-6 * scale
    assert abs(kernel_functions(desk, BubbleParams(lam, (xi,)), 1, x, consts) - z1) <= 1e-6 * scale / lam


@given(lam=st.floats(0.1, 10.0), x=st.floats(-50, 50))
def test_bubble_scaling_invariance(desk, consts, lam, x):
    # w_lambda(x) = lambda^{-(n-2s)/2} w_1(x/lambda)
    w1 = bubble_value(desk, BubbleParams(1.0, (0.0,)), x / lam, consts)
    assert bubble_value(desk, BubbleParams(lam, (0.0,)), x, consts) == pytest.approx(lam ** -0.2 * w1, rel=1e-12)


@given(eps=st.floats(0.001, 0.5))
def test_amplitude_exponent_invariance(desk, eps):
    # K^{p-1} = rho^{-2s} with K = eps^k and rho = eps^{1/(n-2s)}
    p = desk.with_eps(eps)
    k = p.amplitude_exponent()
    assert k * (p.p - 1) == pytest.approx(2 * p.s / (p.n - 2 * p.s), rel=1e-12)


@given(L=st.floats(0.01, 100.0))
def test_lambda_round_trip(consts, L):
    assert consts.Lambda_of_lam(consts.lam_of_Lambda(L)) == pytest.approx(L, rel=1e-12)


def test_poisson_extension(desk, consts):
    assert poisson_extension(desk, lambda z: np.ones_like(z), 0.3, 2.0) == pytest.approx(1.0, rel=1e-12)
    w = lambda z: bubble_value(desk, BubbleParams(1.0, (0.0,)), z, consts)
    # boundary trace
    assert poisson_extension(desk, w, 0.5, 1e-6, decay=0.4) == pytest.approx(float(w(0.5)), rel=1e-4)
    assert poisson_extension(desk, w, 0.5, 1e-6) == pytest.approx(float(w(0.5)), rel=1e-4)
    # refinement oracle at (0, 1)
    v1 = poisson_extension(desk, w, 0.0, 1.0, tol=1e-6, decay=0.4)
    v2 = poisson_extension(desk, w, 0.0, 1.0, tol=1e-11, decay=0.4)
    assert v1 == pytest.approx(v2, rel=1e-4)
    assert poisson_extension(desk, w, 0.0, 1.0, tol=1e-11) == pytest.approx(v2, rel=1e-7)
    # independent adaptive quadrature in z
    from scipy.integrate import quad

    from fracbubble.constants import poisson_constant

    f = lambda z: poisson_constant(1, 0.3) * float(w(z)) / (z * z + 1.0) ** 0.8
    ref = sum(quad(f, a, b, limit=200)[0] for a, b in [(-np.inf, -1), (-1, 1), (1, np.inf)])
    assert v2 == pytest.approx(ref, rel=1e-6)
