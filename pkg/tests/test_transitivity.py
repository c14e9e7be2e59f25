import csv
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from torusendo import gallery as G
from torusendo.errors import CellBlowup, LiftOverflow, NoFiniteN, NotFoundWithin, PreconditionViolated
from torusendo.intlinalg import IntMat2
from torusendo.maps import eval_lift
from torusendo.transitivity import (CSV_COLUMNS, INNER, OUTER, RegionCover, covering_witness,
                                    doubly_essential_witness, essential_iterate_bound, iterate_region,
                                    relative_image, sandwich_violations, verify_essential, write_witness_csv)

MAPS = {"lin": G.linear(), "skew": G.paper_example(0.1), "product": G.product_example(),
        "shear": G.shear_example()}


def test_linear_outer_box(lin):
    U = RegionCover.from_cells([(0, 0)], level=3)
    V = iterate_region(lin, U, 1)
    assert V.kind == OUTER and V.n == 1
    assert np.allclose(V.boxes[0], [0, 5 / 8, 0, 1 / 4], atol=1e-11)


def test_zero_steps_is_identity(skew):
    U = RegionCover.from_ball((0.3, 0.4), 0.1)
    assert iterate_region(skew, U, 0) is U
    W = U.witnesses(4)
    assert iterate_region(skew, W, 0) is W


def test_region_constructors():
    B = RegionCover.from_ball((0, 0), 0.05, level=6)
    corners = np.concatenate([B.cells + d for d in ([0, 0], [0, 1], [1, 0], [1, 1])]) / 64
    assert np.all(np.hypot(corners[:, 0], corners[:, 1]) <= 0.05)
    assert B.area <= math.pi * 0.05 ** 2
    box = RegionCover.from_box(0, 0.5, 0, 0.25, level=3)
    assert len(box.cells) == 4 * 2 and box.area == pytest.approx(0.125)
    ann = RegionCover.annulus(0.05, level=7)
    assert ann.cells[:, 0].min() == 0 and ann.cells[:, 0].max() == 127
    assert np.all(np.abs((ann.cells[:, 1] + 0.5) / 128) < 0.05)
    with pytest.raises(PreconditionViolated):
        RegionCover.from_ball((0, 0), 1e-4, level=3)


def test_witnesses_lie_in_source():
    U = RegionCover.from_ball((0.2, 0.7), 0.1)
    W = U.witnesses(4)
    assert W.kind == INNER and len(W.frac) == 16 * len(U.cells)
    assert np.all(U.contains_source(W.source))
    assert np.array_equal(W.lifts, W.source)


def test_skew_origin_cell_spreads_in_x(skew):
    U = RegionCover.from_cells([(0, 0)], level=5)
    W = U.witnesses(8)
    V = iterate_region(skew, W, 3)
    x0 = np.ptp(W.lifts[:, 0])
    assert np.ptp(V.lifts[:, 0]) >= 4 ** 3 * x0


def test_inner_iteration_matches_plane(skew):
    W = RegionCover.from_ball((0.5, 0.5), 0.08).witnesses(4)
    V = iterate_region(skew, W, 2)
    p = W.source
    for _ in range(2):
        p = eval_lift(skew, p)
    assert np.allclose(V.lifts, p, atol=1e-9)
    assert np.all((V.frac >= 0) & (V.frac < 1))


@settings(max_examples=25)
@given(name=st.sampled_from(sorted(MAPS)), cx=st.floats(0, 1), cy=st.floats(0, 1),
       r=st.floats(0.07, 0.15), n=st.integers(0, 6))
def test_sandwich(name, cx, cy, r, n):
    f = MAPS[name]
    U = RegionCover.from_ball((cx, cy), r, level=5)
    inner = iterate_region(f, U.witnesses(3), n)
    outer = iterate_region(f, U, n)
    assert sandwich_violations(inner, outer) == 0


def test_sandwich_detects_violation(lin):
    U = RegionCover.from_cells([(0, 0)], level=3)
    inner = iterate_region(lin, U.witnesses(2), 1)
    assert sandwich_violations(inner, U) > 0


def test_refined_outer_cover_contains_witnesses(skew):
    U = RegionCover.from_ball((0.4, 0.4), 0.05, level=6)
    outer = iterate_region(skew, U, 2, refine_level=6)
    inner = iterate_region(skew, U.witnesses(3), 2)
    assert sandwich_violations(inner, outer) == 0


def test_cell_blowup(skew):
    U = RegionCover.from_ball((0.4, 0.4), 0.1, level=6)
    with pytest.raises(CellBlowup):
        iterate_region(skew, U, 4, refine_level=8, budget=10_000)


def test_lift_overflow(lin):
    W = RegionCover.from_cells([(1, 1)], level=1).witnesses(1)
    V = iterate_region(lin, W, 20)
    assert V.shift.dtype == np.int64 and V.shift[0, 0] == 5 ** 20 * 3 // 4
    with pytest.raises(LiftOverflow):
        iterate_region(lin, V, 20)


def test_relative_image_matches_plane(skew, rng):
    p = rng.random((20, 2))
    q = p + 0.01 * rng.random((20, 2))
    d = relative_image(skew, p, q, 3)
    a, b = p.copy(), q.copy()
    for _ in range(3):
        a, b = eval_lift(skew, a), eval_lift(skew, b)
    assert np.allclose(d, b - a, atol=1e-9)


# ------------------------------------------------------------------ essential witnesses


def test_skew_doubly_essential(skew):
    U = RegionCover.from_ball((0, 0), 0.05)
    rep = doubly_essential_witness(skew, U, n_max=20)
    assert rep.n <= 20
    assert verify_essential(skew, rep)
    assert all(r <= 1e-8 for r in rep.residuals)
    assert all(k != 0 for k in rep.multiples)
    pts = [p for pair in (rep.e1_pair, rep.e2_pair) for p in pair]
    assert np.all(U.contains_source(np.array(pts)))


@pytest.mark.parametrize("method", ["direct", "blichfeldt"])
def test_linear_square_needs_two_steps(lin, method):
    U = RegionCover.from_box(0, 0.3, 0, 0.3, level=5)
    rep = doubly_essential_witness(lin, U, n_max=5, method=method)
    assert rep.n == 2 and rep.method == method
    assert verify_essential(lin, rep)


def test_region_wrapping_the_torus_is_immediate(lin):
    U = RegionCover.from_box(-0.2, 1.2, -0.2, 1.2, level=3)
    rep = doubly_essential_witness(lin, U, n_max=2)
    assert rep.n == 0 and verify_essential(lin, rep)


def test_verify_rejects_tampered_report(skew):
    rep = doubly_essential_witness(skew, RegionCover.from_ball((0, 0), 0.05), n_max=20)
    bad = type(rep)(rep.n, rep.e1_pair, rep.e2_pair, (rep.multiples[0] + 1, rep.multiples[1]), rep.residuals)
    assert not verify_essential(skew, bad)


def test_trapped_annulus_is_not_doubly_essential(product):
    with pytest.raises(NotFoundWithin):
        doubly_essential_witness(product, RegionCover.from_ball((0.5, 0), 0.05), n_max=8)


def test_unknown_method(lin):
    with pytest.raises(ValueError):
        doubly_essential_witness(lin, RegionCover.from_box(0, 0.3, 0, 0.3), method="magic")


def test_iterate_bound_worked_case():
    b = essential_iterate_bound(0.0, 1.0, IntMat2.diag(5, 2), 6.0)
    assert b.N == 4
    assert 2 * 5 ** 3 >= 6 ** 3 and 2 * 5 ** 4 < 6 ** 4


def test_iterate_bound_equal_rates():
    with pytest.raises(NoFiniteN):
        essential_iterate_bound(0.0, 1.0, IntMat2.diag(5, 2), 5.0)
    with pytest.raises(PreconditionViolated):
        essential_iterate_bound(0.0, 0.0, IntMat2.diag(5, 2), 6.0)


@given(st.floats(0, 2), st.floats(1e-4, 1.0), st.floats(5.2, 9))
def test_iterate_bound_monotone_in_area(kappa, leb, lam):
    A = IntMat2.diag(5, 2)
    a = essential_iterate_bound(kappa, leb, A, lam)
    b = essential_iterate_bound(kappa, 2 * leb, A, lam)
    assert b.N <= a.N
    assert a.log_lhs < a.log_rhs


def test_iterate_bound_dominates_observation(skew):
    from torusendo.semiconj import kappa_bound
    U = RegionCover.from_ball((0, 0), 0.05)
    rep = doubly_essential_witness(skew, U)
    b = essential_iterate_bound(kappa_bound(skew).kappa, math.pi * 0.05 ** 2, skew.linear_part, 5.4)
    assert b.N >= rep.n


# ------------------------------------------------------------------ covering


def test_linear_covering(lin):
    res = covering_witness(lin, RegionCover.from_box(0, 0.3, 0, 0.3), m=16)
    assert res.n == 2 and res.resolution == 16


def test_skew_covering(skew):
    res = covering_witness(skew, RegionCover.from_ball((0, 0), 0.05), m=32, n_max=25)
    assert res.n <= 25


def test_product_annulus_never_covers(product):
    with pytest.raises(NotFoundWithin) as exc:
        covering_witness(product, RegionCover.annulus(0.05), m=32, n_max=40, max_density=16)
    assert exc.value.best < 1.0


@pytest.mark.parametrize("name,U,d", [
    ("lin", RegionCover.from_box(0, 0.3, 0, 0.3), 16),
    ("skew", RegionCover.from_ball((0, 0), 0.05), 64),
])
def test_covering_monotone_over_divisors(name, U, d):
    f = MAPS[name]
    fine = covering_witness(f, U, m=32, density=d, max_density=d)
    for m in (16, 8, 4, 2):
        assert covering_witness(f, U, m=m, density=d, max_density=d).n <= fine.n


def test_witness_csv(tmp_path, skew):
    W = RegionCover.from_ball((0, 0), 0.05).witnesses(2)
    sets = [W, iterate_region(skew, W, 2)]
    path = tmp_path / "w.csv"
    write_witness_csv(path, sets)
    rows = list(csv.reader(path.open()))
    assert tuple(rows[0]) == CSV_COLUMNS
    assert len(rows) == 1 + 2 * len(W.frac)
    n, x, y, i, j = rows[-1]
    assert n == "2" and 0 <= float(x) < 1 and int(i) == int(i)
