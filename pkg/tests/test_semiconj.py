import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.optimize import brentq

from torusendo import gallery as G
from torusendo.errors import EigenvalueTieError, NotExpanding
from torusendo.intlinalg import IntMat2, inverse_power_norms
from torusendo.maps import TorusEndomorphism, eval_lift, sup_displacement_bound
from torusendo.semiconj import (dichotomy_test, estimate_fiber, is_expanding, kappa_bound, semiconj_defect,
                                semiconj_eval, semiconj_eval_many, verify_fiber)

dyadic = st.integers(0, 1023).map(lambda k: k / 1024)


def circle_fixed_point_width(g):
    """Oracle: width of the basin of 0 for the lifted circle map, 2 y* with g(y*) = y*."""
    return 2 * brentq(lambda y: g(y) - y, 1e-3, 0.49)


def circle_survivors(g, r, N, n=20001):
    """Oracle: 1D iteration of the lift from a fine grid; width of the surviving interval."""
    y = np.linspace(-r, r, n)
    z = y.copy()
    alive = np.ones(n, bool)
    for _ in range(N):
        z = g(z)
        alive &= np.abs(z) < r
    return y[alive].max() - y[alive].min()


def skew_circle(eps):
    return lambda y: 2 * y - (1 + eps) * np.sin(2 * np.pi * y) / (2 * np.pi)


def product_circle(y):
    return 2 * y - np.sin(2 * np.pi * y) / (2 * np.pi) - 0.2 * np.sin(4 * np.pi * y) / (4 * np.pi)


def test_is_expanding_exact():
    assert is_expanding(IntMat2.diag(5, 2)) and is_expanding(IntMat2(4, 1, 2, 3))
    assert not is_expanding(IntMat2(2, 1, 1, 1))      # cat map, one eigenvalue < 1
    assert not is_expanding(IntMat2.diag(2, -1))
    assert is_expanding(IntMat2(0, -2, 1, 0))          # complex pair of modulus sqrt 2


def test_not_expanding_raises():
    with pytest.raises(NotExpanding):
        kappa_bound(TorusEndomorphism(IntMat2(2, 1, 1, 1)))


def test_linear_kappa_zero(lin):
    assert kappa_bound(lin).kappa == 0.0


def test_skew_kappa_is_geometric_sum(skew):
    # ||A^-m||_inf = 2^-m for diag(5, 2), so the sum is 1 / (2 - 1)
    p = kappa_bound(skew)
    assert p.kappa == pytest.approx(p.kappa0, rel=1e-12)
    assert p.kappa >= p.kappa0
    assert p.kappa0 == sup_displacement_bound(skew)


def test_kappa_scales_linearly(skew):
    k1 = kappa_bound(skew).kappa
    assert kappa_bound(skew.scaled(2.0)).kappa == pytest.approx(2 * k1, rel=1e-12)


def test_kappa_tail_is_rigorous():
    A = IntMat2(4, 1, 2, 3)
    f = TorusEndomorphism(A, G.paper_example(0.1).displacement)
    p = kappa_bound(f)
    exact = math.fsum(inverse_power_norms(A, 400))
    assert p.kappa / p.kappa0 >= exact * (1 - 1e-12)
    assert p.kappa / p.kappa0 <= exact * 1.01


def test_linear_h_is_identity(lin, rng):
    pts = rng.random((100, 2)) * 10 - 5
    vals, n = semiconj_eval_many(lin, pts)
    assert n == 0 and np.array_equal(vals, pts)


def test_skew_fixed_point(skew):
    assert np.allclose(semiconj_eval(skew, np.array([0.0, 0.0]), 1e-8), 0.0, atol=1e-8)


@pytest.mark.parametrize("name", ["skew", "product"])
@given(x=dyadic, y=dyadic, v=st.tuples(st.integers(-4, 4), st.integers(-4, 4)))
def test_equivariance(name, x, y, v, request):
    f = request.getfixturevalue(name)
    tol = 1e-8
    a = semiconj_eval(f, np.array([x, y]), tol)
    b = semiconj_eval(f, np.array([x + v[0], y + v[1]]), tol)
    assert np.all(np.abs(b - a - np.asarray(v)) <= 2 * tol)


@pytest.mark.parametrize("name", ["skew", "product"])
def test_h_close_to_identity(name, request, rng):
    f = request.getfixturevalue(name)
    k = kappa_bound(f)
    pts = rng.random((3000, 2))
    vals, _ = semiconj_eval_many(f, pts, 1e-8, k)
    assert np.max(np.abs(vals - pts)) <= k.kappa


def test_truncation_error_decay(skew, rng):
    k = kappa_bound(skew)
    pts = rng.random((200, 2))
    prev = pts.copy()
    cur = pts.copy()
    for n in range(12):
        cur = eval_lift(skew, cur)
        h_next = cur @ np.linalg.matrix_power(np.diag([1 / 5, 1 / 2]), n + 1).T
        step = np.max(np.abs(h_next - prev))
        assert step <= 2.0 ** -(n + 1) * k.kappa0 + 1e-12
        prev = h_next


def test_mp_agrees_with_float(skew):
    x = np.array([0.3, 0.7])
    a = semiconj_eval(skew, x, 1e-10)
    b = semiconj_eval(skew, x, 1e-10, dps=40)
    assert np.allclose(a, b, atol=1e-10)


def test_depth_grows_as_tol_shrinks(skew):
    k = kappa_bound(skew)
    assert k.depth_for(1e-4) < k.depth_for(1e-8) < k.depth_for(1e-12)
    with pytest.raises(ValueError):
        semiconj_eval_many(skew, [[0.1, 0.1]], 0.0)


def test_defect_linear_is_zero(lin):
    d, _ = semiconj_defect(lin, 32)
    assert d == 0.0


@pytest.mark.parametrize("name", ["skew", "product"])
def test_defect_within_bound(name, request):
    f = request.getfixturevalue(name)
    d, bound = semiconj_defect(f, 64, 1e-8)
    assert bound == pytest.approx((float(np.abs(f.A).sum(axis=1).max()) + 1) * 1e-8)
    assert d <= bound


# ------------------------------------------------------------------ fibres


def test_linear_fiber_is_trivial(lin):
    e = estimate_fiber(lin, (0.3, 0.6), N=40)
    assert e.diameter == 0.0 and len(e.offsets) == 1


def test_skew_fiber_vertical_and_matches_circle_oracle(skew):
    e = estimate_fiber(skew, (0.0, 0.0), N=60)
    width = circle_fixed_point_width(skew_circle(0.1))
    assert e.direction == (0.0, 1.0)
    assert np.all(np.abs(e.offsets[:, 0]) < 1e-15)  # along x = 0
    assert 0.98 * width <= e.diameter <= width + 1e-9
    assert e.diameter <= circle_survivors(skew_circle(0.1), e.radius, e.depth) + 1e-3
    assert verify_fiber(skew, e)


def test_product_fiber_matches_basin(product):
    e = estimate_fiber(product, (0.0, 0.0), N=60)
    width = circle_fixed_point_width(product_circle)
    assert e.direction == (0.0, 1.0)
    assert 0.98 * width <= e.diameter <= width + 1e-9
    assert verify_fiber(product, e)


def test_fiber_requires_r_above_two_kappa(skew):
    k = kappa_bound(skew).kappa
    with pytest.raises(ValueError):
        estimate_fiber(skew, (0, 0), r=1.5 * k)


@pytest.mark.parametrize("p", [(0.0, 0.0), (0.5, 0.5), (0.21, 0.83)])
def test_witnesses_survive_reverification(skew, p):
    e = estimate_fiber(skew, p, N=30, samples=200, seed=3)
    assert verify_fiber(skew, e)


def test_dichotomy_linear(lin):
    v = dichotomy_test(lin, grid=4)
    assert v.kind == "ConjugacyEvidence" and v.to_dict()["evidence_only"]


def test_dichotomy_product_vertical_annulus(product):
    v = dichotomy_test(product, grid=4)
    assert v.kind == "AnnulusCandidate"
    assert v.direction == (0.0, 1.0) and v.diameter >= 0.05


def test_dichotomy_skew_not_conjugate(skew):
    v = dichotomy_test(skew, grid=2)
    assert v.kind == "AnnulusCandidate" and v.diameter >= 0.01


def test_dichotomy_rejects_eigenvalue_tie():
    with pytest.raises(EigenvalueTieError):
        dichotomy_test(G.linear(IntMat2.diag(3, 3)), grid=2)
    with pytest.raises(EigenvalueTieError):
        dichotomy_test(G.linear(IntMat2.diag(-3, 3)), grid=2)
