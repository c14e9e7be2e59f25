import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from torusendo import _backend
from torusendo import gallery as G
from torusendo.certify import (CERTIFIED, FAILED, INCONCLUSIVE, ConeSpec, GridSpec, certify_cone_invariance,
                               certify_strong_volume_expansion, cone_condition_pointwise,
                               min_expansion_on_cone, sve_condition_pointwise)
from torusendo.errors import NoIntegerEigenvalues
from torusendo.intlinalg import IntMat2
from torusendo.maps import TorusEndomorphism


def sampled_min_expansion(M, cone, n=20001):
    """Brute force over the sector, parametrised by the slope of the ray."""
    t = np.linspace(-cone.slope, cone.slope, n)
    v = np.stack([np.ones_like(t), t], axis=1)
    if cone.orientation == "vertical":
        v = v[:, ::-1]
    img = v @ np.asarray(M, float).T
    return float(np.min(np.linalg.norm(img, axis=1) / np.linalg.norm(v, axis=1)))


def test_identity_expands_by_one():
    for cone in (ConeSpec(), ConeSpec(0.3), ConeSpec(4.0, "vertical")):
        assert min_expansion_on_cone(np.eye(2), cone) == pytest.approx(1.0, abs=1e-15)


def test_diag_two_half():
    assert min_expansion_on_cone(np.diag([2.0, 0.5])) == pytest.approx(math.sqrt(2.125), abs=1e-12)


@pytest.mark.parametrize("eps", [0.0, 0.1, 0.5])
def test_boundary_ray_value(eps):
    v = min_expansion_on_cone(np.diag([6.0, 1 - eps]))
    assert v == pytest.approx(math.sqrt((36 + (1 - eps) ** 2) / 2), abs=1e-12)


def test_interior_singular_direction():
    # the least expanded direction of diag(1, 3) is e1, which lies in the cone
    assert min_expansion_on_cone(np.diag([1.0, 3.0])) == pytest.approx(1.0)


def test_vertical_cone_is_swap_conjugate():
    M = np.array([[1.3, -0.4], [2.2, 0.7]])
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert min_expansion_on_cone(M, ConeSpec(0.7, "vertical")) == pytest.approx(
        min_expansion_on_cone(P @ M @ P, ConeSpec(0.7)), abs=1e-14)


@given(st.lists(st.floats(-5, 5), min_size=4, max_size=4), st.floats(0.05, 5),
       st.sampled_from(["horizontal", "vertical"]))
def test_min_expansion_lower_bounds_sampling(m, s, orient):
    M = np.array(m).reshape(2, 2)
    cone = ConeSpec(s, orient)
    exact = min_expansion_on_cone(M, cone)
    sampled = sampled_min_expansion(M, cone)
    assert exact <= sampled + 1e-9
    assert sampled - exact <= 1e-3 * (1 + np.abs(M).max())


def test_batched_min_expansion(rng):
    Ms = rng.normal(size=(50, 2, 2))
    batch = min_expansion_on_cone(Ms, ConeSpec(0.8))
    assert batch.shape == (50,)
    assert np.allclose(batch, [min_expansion_on_cone(M, ConeSpec(0.8)) for M in Ms], atol=1e-14)


def test_cone_spec_validation():
    with pytest.raises(ValueError):
        ConeSpec(0.0)
    with pytest.raises(ValueError):
        ConeSpec(1.0, "diagonal")
    with pytest.raises(ValueError):
        GridSpec(1)
    assert list(ConeSpec().contains([[1, 1], [1, 1.01]])) == [True, False]


# ------------------------------------------------------------ certificates


def test_skew_cone_certified(skew):
    c = certify_cone_invariance(skew, ConeSpec(1.0), grid=512, lam=2 * math.sqrt(2))
    assert c.verdict == CERTIFIED
    assert c.certified_margin > 0 and c.worst_margin > c.slack


def test_linear_cone_certified_without_slack(lin):
    c = certify_cone_invariance(lin, lam=2.0)
    assert c.verdict == CERTIFIED
    assert c.slack < 1e-10  # only the rounding guard
    assert c.worst_margin == pytest.approx(0.6)


def test_swapped_linear_fails_horizontal_cone():
    c = certify_cone_invariance(G.linear(IntMat2.diag(2, 5)), lam=2.0, grid=16)
    assert c.verdict == FAILED and c.witness is not None
    assert certify_cone_invariance(G.linear(IntMat2.diag(2, 5)), ConeSpec(1.0, "vertical"),
                                   lam=2.0, grid=16).verdict == CERTIFIED


def test_skew_sve_certified(skew):
    c = certify_strong_volume_expansion(skew, grid=1024)
    assert c.verdict == CERTIFIED
    assert c.certified_margin >= 0.3
    assert c.params["threshold"] == 5 and c.params["min_det_lower"] >= 5.3


def test_product_sve_fails_near_bottom_circle():
    c = certify_strong_volume_expansion(G.product_example(), grid=256)
    assert c.verdict == FAILED
    y = c.witness[1]
    assert min(y, 1 - y) < 0.1
    assert sve_condition_pointwise(G.product_example(), np.array([c.witness]))[0] <= 0


def test_linear_sve_margin_five(lin):
    c = certify_strong_volume_expansion(lin, grid=64)
    assert c.verdict == CERTIFIED and c.worst_margin == pytest.approx(5.0)


def test_coarse_grid_is_inconclusive(skew):
    c = certify_strong_volume_expansion(skew, grid=2, max_grid=2)
    assert c.verdict == INCONCLUSIVE and c.grids_tried == [2]


def test_auto_doubling_reaches_certificate(skew):
    c = certify_strong_volume_expansion(skew, grid=16, max_grid=1024)
    assert c.verdict == CERTIFIED
    assert c.grids_tried[0] == 16 and c.grids_tried == sorted(c.grids_tried)
    assert all(b == 2 * a for a, b in zip(c.grids_tried, c.grids_tried[1:]))


def test_sve_needs_integer_eigenvalues():
    f = TorusEndomorphism(IntMat2(2, 1, 1, 1))
    with pytest.raises(NoIntegerEigenvalues):
        certify_strong_volume_expansion(f, grid=8)


@pytest.mark.parametrize("m", [64, 128, 256, 512])
def test_refinement_never_fails_a_certificate(skew, m):
    a = certify_strong_volume_expansion(skew, grid=m, max_grid=m)
    b = certify_strong_volume_expansion(skew, grid=2 * m, max_grid=2 * m)
    if a.verdict == CERTIFIED:
        assert b.verdict == CERTIFIED
    assert b.verdict != FAILED


def test_sve_slack_is_closed_form(skew):
    # min J >= 6 - 6 eps on the whole torus
    c = certify_strong_volume_expansion(skew, grid=512)
    assert c.worst_margin - c.slack >= 6 - 6 * 0.1 - 5 - c.slack - 1e-12
    assert c.params["min_det_lower"] <= 5.4 + 1e-9 + c.slack


def test_certificates_are_backend_independent(skew, backend):
    c = certify_strong_volume_expansion(skew, grid=256)
    d = certify_cone_invariance(skew, grid=256, lam=2 * math.sqrt(2))
    key = (c.verdict, round(c.worst_margin, 12), round(c.slack, 12), d.verdict, round(d.worst_margin, 12))
    prev = _backend.use("python")
    try:
        c2 = certify_strong_volume_expansion(skew, grid=256)
        d2 = certify_cone_invariance(skew, grid=256, lam=2 * math.sqrt(2))
    finally:
        _backend.use(prev)
    assert key == (c2.verdict, round(c2.worst_margin, 12), round(c2.slack, 12), d2.verdict,
                   round(d2.worst_margin, 12))


def test_thread_count_does_not_change_result(skew, monkeypatch):
    monkeypatch.setenv("TORUSENDO_THREADS", "1")
    a = certify_cone_invariance(skew, grid=256, lam=2.5).to_dict(timing=False)
    monkeypatch.setenv("TORUSENDO_THREADS", "4")
    b = certify_cone_invariance(skew, grid=256, lam=2.5).to_dict(timing=False)
    assert a == b and "elapsed" not in a


def test_iterated_cone_certificate(skew):
    c = certify_cone_invariance(skew, grid=256, iterate=2, lam=8.0)
    assert c.verdict == CERTIFIED


@pytest.mark.parametrize("seed", range(3))
def test_pointwise_fuzz_on_certified(skew, seed):
    pts = np.random.default_rng(seed).random((20000, 2))
    assert np.all(sve_condition_pointwise(skew, pts) > 0)
    assert np.all(cone_condition_pointwise(skew, pts, ConeSpec(1.0), 1, 2 * math.sqrt(2)) > 0)


def test_pointwise_cone_detects_flip():
    f = G.linear(IntMat2.diag(2, 5))
    assert np.all(cone_condition_pointwise(f, np.array([[0.1, 0.2]]), lam=1.5) < 0)
