import csv
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from torusendo import gallery as G
from torusendo.certify import ConeSpec
from torusendo.directions import (CSV_COLUMNS, center_direction, cone_widths, direction_field, pre_orbit,
                                  projective_angle, special_ph_test, unstable_direction, write_direction_csv)
from torusendo.errors import ExclusionFailed, PreconditionViolated
from torusendo.intlinalg import IntMat2
from torusendo.maps import eval_derivative, preimages

points = st.tuples(st.floats(0, 1, exclude_max=True), st.floats(0, 1, exclude_max=True))


def fixed_cone_width(D, depth, s=1.0):
    """Oracle: angle between the images of the rays (1, +-s) under D^depth."""
    M = np.linalg.matrix_power(np.asarray(D, float), depth)
    a, b = M @ [1.0, s], M @ [1.0, -s]
    return projective_angle(a, b)


def test_projective_angle():
    assert projective_angle((1, 0), (-1, 0)) == 0.0
    assert projective_angle((1, 0), (0, 1)) == pytest.approx(math.pi / 2)
    assert projective_angle((1, 1), (-1, 1)) == pytest.approx(math.pi / 2)
    assert projective_angle((1, 0), (1, 1)) == pytest.approx(math.pi / 4)


@given(points, st.lists(st.integers(0, 9), min_size=1, max_size=6))
def test_linear_unstable_is_e1(p, br):
    pr = unstable_direction(G.linear(), p, br)
    assert projective_angle(pr.direction, (1, 0)) <= pr.width / 2 + 1e-15
    assert pr.width == pytest.approx(fixed_cone_width(np.diag([5, 2]), len(br)), rel=1e-12)


def test_linear_width_geometric():
    w = cone_widths(G.linear(), (0.3, 0.1), [0] * 10)
    t = np.tan(w / 2)
    assert np.allclose(t[1:] / t[:-1], 0.4, rtol=1e-9)  # the slope shrinks by 2/5 per step


def test_product_unstable_is_horizontal(product):
    for br in ([0] * 8, [5, 1, 3, 0, 2, 4, 1, 5], [1, 2, 3, 4, 5, 0, 1, 2]):
        pr = unstable_direction(product, (0.37, 0.61), br)
        assert projective_angle(pr.direction, (1, 0)) <= pr.width / 2 + 1e-15


def test_skew_origin_fixed_preorbit(skew):
    assert np.allclose(preimages(skew, (0, 0))[0], (0, 0))
    for d in (1, 5, 12):
        pr = unstable_direction(skew, (0, 0), [0] * d)
        assert np.allclose(pr.direction, (1, 0), atol=1e-15)
        assert pr.width == pytest.approx(fixed_cone_width([[6, 0], [0, 0.9]], d), rel=1e-10)


def test_pre_orbit_maps_back(skew):
    orb = pre_orbit(skew, (0.2, 0.3), [3, 7, 1, 9])
    img = np.mod(skew(orb[1:]), 1.0)
    d = np.abs(img - orb[:-1])
    assert np.all(np.minimum(d, 1 - d) < 1e-9)
    with pytest.raises(PreconditionViolated):
        pre_orbit(skew, (0.2, 0.3), [10])
    with pytest.raises(PreconditionViolated):
        unstable_direction(skew, (0.2, 0.3), [1, 2], depth=3)


@pytest.mark.parametrize("name", ["skew", "product", "shear"])
@pytest.mark.parametrize("seed", range(4))
def test_push_forward_invariance(name, seed, request):
    f = request.getfixturevalue(name)
    rng = np.random.default_rng(seed)
    k = abs(f.linear_part.det)
    p = rng.random(2)
    br = list(rng.integers(0, k, size=10))
    up = unstable_direction(f, p, br)
    q = np.mod(f(up.base), 1.0)
    pre = preimages(f, q)
    idx = int(np.argmin(np.abs((pre - np.asarray(up.base) + 0.5) % 1.0 - 0.5).max(axis=1)))
    uq = unstable_direction(f, q, [idx] + br)
    pushed = eval_derivative(f, up.base) @ np.asarray(up.direction)
    assert projective_angle(pushed, uq.direction) <= up.width + uq.width + 1e-12


@pytest.mark.parametrize("name", ["skew", "product", "shear"])
def test_widths_decrease(name, request, rng):
    f = request.getfixturevalue(name)
    k = abs(f.linear_part.det)
    for _ in range(5):
        w = cone_widths(f, rng.random(2), rng.integers(0, k, size=15))
        assert np.all(np.diff(w) < 0)
        assert w[-1] < 0.1 * w[0]


def test_special_ph_linear_and_product(lin, product):
    assert special_ph_test(lin, (0.4, 0.2), depth=10).max_deviation == 0.0
    rep = special_ph_test(product, (0.4, 0.2), depth=20)
    assert rep.max_deviation <= rep.max_width + 1e-15
    assert rep.to_dict()["seed"] == 0


def test_special_ph_shear_is_measured(shear):
    rep = special_ph_test(shear, (0.4, 0.2), depth=20, trials=8, seed=5)
    assert rep.max_deviation > rep.max_width
    assert rep.bound == rep.max_deviation + rep.max_width
    again = special_ph_test(shear, (0.4, 0.2), depth=20, trials=8, seed=5)
    assert again.max_deviation == rep.max_deviation


@pytest.mark.parametrize("name", ["lin", "skew", "product"])
@pytest.mark.parametrize("p", [(0.0, 0.0), (0.3, 0.8), (0.71, 0.05)])
def test_center_direction_vertical(name, p, request):
    f = request.getfixturevalue(name)
    pr = center_direction(f, p, depth=20)
    assert pr.kind == "center" and pr.verified_steps == 21
    if name != "skew" or p == (0.0, 0.0):
        assert np.allclose(pr.direction, (0, 1), atol=1e-12)


def test_center_exclusion_checked_every_step(skew, rng):
    cone = ConeSpec()
    for _ in range(5):
        p = rng.random(2)
        pr = center_direction(skew, p, depth=15)
        u = np.asarray(pr.direction)
        x = np.asarray(pr.base)
        for _ in range(15):
            assert abs(u[1]) > abs(u[0]) * cone.slope
            u = eval_derivative(skew, x) @ u
            u /= np.linalg.norm(u)
            x = np.mod(skew(x), 1.0)


def test_center_exclusion_failure():
    # the least expanded direction e2 of diag(5, 2) sits inside a vertical cone
    with pytest.raises(ExclusionFailed):
        center_direction(G.linear(IntMat2.diag(5, 2)), (0.1, 0.1), depth=5, cone=ConeSpec(1.0, "vertical"))


def test_direction_field_csv(tmp_path, skew):
    probes = direction_field(skew, grid=3, depth=8)
    assert len(probes) == 9
    assert all(abs(np.hypot(*pr.direction) - 1) < 1e-12 for pr in probes)
    path = tmp_path / "d.csv"
    write_direction_csv(path, probes)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == CSV_COLUMNS and len(rows) == 10
    assert direction_field(skew, grid=2, depth=8, seed=1)[0] == direction_field(skew, grid=2, depth=8, seed=1)[0]
    with pytest.raises(ValueError):
        direction_field(skew, grid=1, kind="stable")
