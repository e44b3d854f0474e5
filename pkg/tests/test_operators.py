import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fracbubble import BubbleParams, DomainSpec, apply, build_operator, make_grid, solve
from fracbubble.constants import bubble_value
from fracbubble.errors import CapabilityError, ConfigurationError
from fracbubble.operators import dense_matrix, eigenpairs, max_principle_check, spectral_truncation

PI_DOM = DomainSpec.interval(0.0, math.pi)
UNIT = DomainSpec.interval(-1.0, 1.0)


@pytest.fixture(scope="module")
def spec_pi():
    return build_operator(PI_DOM, 0.3, make_grid(PI_DOM, N=128), "spectral")


@pytest.fixture(scope="module")
def restricted():
    return build_operator(UNIT, 0.3, make_grid(UNIT, N=300), "restricted")


def test_spectral_dirichlet_spectrum(spec_pi):
    ev, V = eigenpairs(spec_pi, 3)
    assert ev == pytest.approx([1.0, 2 ** 0.6, 3 ** 0.6], rel=1e-12)
    x = spec_pi.points
    v = V[:, 0] * np.sign(V[np.argmax(np.abs(V[:, 0])), 0])
    assert v / np.max(v) == pytest.approx(np.sin(x), abs=1e-12)


def test_spectral_rectangle_first_eigenvalue():
    r = DomainSpec.rectangle(0, math.pi, 0, math.pi)
    op = build_operator(r, 0.3, make_grid(r, N=32), "spectral")
    assert eigenpairs(op, 1)[0][0] == pytest.approx(2 ** 0.3, rel=1e-12)


def test_spectral_apply_and_solve(spec_pi):
    x = spec_pi.points
    assert apply(spec_pi, np.sin(2 * x)) == pytest.approx(4 ** 0.3 * np.sin(2 * x), abs=1e-12)
    assert solve(spec_pi, np.sin(x)) == pytest.approx(np.sin(x), abs=1e-12)
    assert np.all(apply(spec_pi, np.zeros_like(x)) == 0)
    assert np.all(solve(spec_pi, np.zeros_like(x)) == 0)


def test_spectral_truncation(spec_pi):
    x = spec_pi.points
    assert spectral_truncation(spec_pi, np.sin(x) + 0.1 * np.sin(3 * x)) == 3


def test_restricted_first_eigenvalue_half_laplacian():
    ev = [eigenpairs(build_operator(UNIT, 0.5, make_grid(UNIT, N=N), "restricted"), 1)[0][0] for N in (200, 400)]
    assert ev[0] == pytest.approx(ev[1], rel=1e-2)
    # literature value for (-Delta)^{1/2} on (-1,1)
    assert ev[1] == pytest.approx(1.1577738836977, rel=1e-2)


def test_restricted_symmetric_positive(restricted):
    A = dense_matrix(restricted)
    assert np.max(np.abs(A - A.T)) <= 1e-12 * np.max(np.abs(A))
    assert np.min(np.linalg.eigvalsh(0.5 * (A + A.T))) > 0


@given(seed=st.integers(0, 2 ** 31 - 1))
def test_restricted_round_trip(restricted, seed):
    rng = np.random.default_rng(seed)
    x = restricted.points
    k = rng.integers(1, 6, size=3)
    u = (1 - x ** 2) * sum(rng.normal() * np.cos(kk * x) for kk in k)
    assert np.max(np.abs(solve(restricted, apply(restricted, u)) - u)) <= 1e-8 * max(np.max(np.abs(u)), 1e-12)


@given(a=st.floats(-10, 10), b=st.floats(-10, 10))
def test_apply_is_linear(restricted, a, b):
    x = restricted.points
    u, v = np.cos(3 * x) * (1 - x * x), np.exp(x) * (1 - x * x)
    lhs = apply(restricted, a * u + b * v)
    rhs = a * apply(restricted, u) + b * apply(restricted, v)
    assert np.max(np.abs(lhs - rhs)) <= 1e-10 * (1 + np.max(np.abs(rhs)))


def test_whole_space_bubble_residual_decreases(desk, consts):
    bp = BubbleParams(1.0, (0.0,))
    res = []
    for N in (1000, 2000, 4000):
        d = DomainSpec.interval(-100.0, 100.0)
        op = build_operator(d, desk, make_grid(d, N=N), "whole-space")
        w = bubble_value(desk, bp, op.points, consts)
        res.append(np.max(np.abs(apply(op, w) - w ** 4)) / np.max(w ** 4))
    assert res[0] > res[1] > res[2]
    assert res[2] < 5e-2


def test_max_principle_constants_and_noise():
    rng = np.random.default_rng(3)
    ratios = []
    for N in (200, 400):
        op = build_operator(UNIT, 0.3, make_grid(UNIT, N=N), "restricted")
        r1 = max_principle_check(op, lambda x: np.ones_like(x))
        assert r1["ratio"] == pytest.approx(1.0, abs=1e-10)
        assert max_principle_check(op, lambda x: np.zeros_like(x))["sup_u"] == 0.0
        r = max_principle_check(op, lambda x: rng.uniform(-1, 1, np.shape(x)))
        assert r["ratio"] <= 1 + 2 * op.grid.h
        ratios.append(r["ratio"])


def test_max_principle_spectral():
    op = build_operator(UNIT, 0.3, make_grid(UNIT, N=100), "spectral")
    assert max_principle_check(op, lambda x: np.ones_like(x))["ratio"] == pytest.approx(1.0, abs=1e-10)


def test_whole_space_has_no_max_principle(desk):
    d = DomainSpec.interval(-10.0, 10.0)
    op = build_operator(d, desk, make_grid(d, N=100), "whole-space")
    with pytest.raises(CapabilityError):
        max_principle_check(op, lambda x: np.ones_like(x))


@pytest.mark.parametrize("kw", [dict(lo=1.0, hi=-1.0), dict(lo=-1.0, hi=1.0, holes=[(0.5, 2.0)])])
def test_domain_validation(kw):
    with pytest.raises(ConfigurationError):
        DomainSpec.interval(**kw)


def test_holes_remove_nodes():
    d = DomainSpec.interval(-1.0, 1.0, holes=[(-0.1, 0.1)])
    op = build_operator(d, 0.3, make_grid(d, N=200), "restricted")
    assert not np.any(np.abs(op.points) < 0.1)
    assert d.dist_boundary(0.5) == pytest.approx(0.4)
