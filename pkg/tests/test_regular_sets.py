import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fup_lab.errors import (
    ChildCountViolation,
    ConfigError,
    DerivativeBoundViolated,
    EmptySetError,
    NoEmptyCell,
    PreconditionViolated,
    ResolutionTooCoarse,
)
from fup_lab.generators import CantorSpec, gen_cantor
from fup_lab.regular_sets import (
    MonotoneMap,
    RegularityCertificate,
    RegularSetApprox,
    affine_map,
    cover_bound,
    cover_count,
    intersect_interval,
    lebesgue_bound,
    missing_subinterval,
    neighborhood,
    nonlinear_image,
    pieces_disjoint,
    raise_upper_scale,
    recheck,
    split_regular,
    tree_children,
    tree_level,
    verify_regularity,
)


def cantor(L=3, A=(0, 2), k=5):
    return gen_cantor(CantorSpec(L, A, k))


@st.composite
def cantor_sets(draw, bases=(3, 4, 5), depths=(2, 5)):
    L = draw(st.sampled_from(bases))
    A = draw(st.lists(st.integers(0, L - 1), min_size=1, max_size=L - 1, unique=True))
    k = draw(st.integers(*depths))
    return gen_cantor(CantorSpec(L, tuple(A), k))


def test_interval_is_one_regular():
    u = RegularSetApprox(2, 4, np.arange(16), np.full(16, 1 / 16))
    assert verify_regularity(u, 1.0, 2.0, Fraction(1, 16), 1).verified


def test_point_is_zero_regular_at_all_scales():
    p = RegularSetApprox.point(0)
    cert = verify_regularity(p, 0.0, 1.0, 0, math.inf)
    assert cert.verified
    assert cert.worst_ratio_upper == pytest.approx(1.0)


def test_interval_with_isolated_point_fails_every_delta():
    cells = np.concatenate([np.arange(16), [32]])
    w = np.concatenate([np.full(16, 1 / 16), [1e-12]])
    s = RegularSetApprox(2, 4, cells, w)
    for delta in (0.0, 0.5, 1.0):
        assert not verify_regularity(s, delta, 1000.0, Fraction(1, 16), 1).verified


def test_cantor_verifies_at_generator_constant():
    s = cantor(k=6)
    assert recheck(s).verified
    assert s.cert.c_r == pytest.approx(2.399, abs=1e-3)


def test_verify_rejects_bad_config():
    s = cantor()
    with pytest.raises(ConfigError):
        verify_regularity(s, 1.5, 2.0, s.cert.alpha0, 1)
    with pytest.raises(ConfigError):
        verify_regularity(s, 0.5, 0.5, s.cert.alpha0, 1)
    with pytest.raises(ResolutionTooCoarse):
        verify_regularity(s, 0.5, 2.0, Fraction(1, 3**9), 1)


def test_round_trip_dict():
    s = cantor(k=4)
    t = RegularSetApprox.from_dict(s.to_dict())
    assert t.same_points(s)
    assert t.cert.c_r == s.cert.c_r


@given(cantor_sets(), st.sampled_from([Fraction(1, 2), Fraction(3), Fraction(2, 7)]), st.integers(-4, 4))
def test_affine_image_reverifies(s, lam, y):
    s = s.with_cert(recheck(s))
    if not s.cert.verified:
        return
    a = affine_map(s, lam, y)
    assert recheck(a).verified
    assert a.cert.c_r == s.cert.c_r


@given(cantor_sets(), st.sampled_from([1, 2, Fraction(5, 2)]))
def test_expanding_top_scale_reverifies(s, T):
    s = s.with_cert(recheck(s))
    if not s.cert.verified:
        return
    c = raise_upper_scale(s.cert, T)
    assert c.c_r == pytest.approx(2 * float(T) * s.cert.c_r)
    assert recheck(s, c).verified


@given(cantor_sets(depths=(3, 5)), st.sampled_from([1, 2]))
def test_neighborhood_reverifies(s, T):
    s = s.with_cert(recheck(s))
    if not s.cert.verified:
        return
    n = neighborhood(s, T)
    assert n.cert.c_r == pytest.approx(4 * T * s.cert.c_r)
    assert recheck(n).verified


def test_neighborhood_of_point():
    p = RegularSetApprox.point(0, cert=RegularityCertificate(0.0, 1.0, Fraction(1), math.inf))
    n = neighborhood(p, 1, 1)
    assert n.intervals() == [(Fraction(-1), Fraction(1))]


def test_nonlinear_image_reverifies():
    s = cantor(k=5)
    F = MonotoneMap.from_function(lambda x: x / 2 + np.sin(x) / 4, lambda x: 0.5 + np.cos(x) / 4, -0.01, 1.01)
    g = nonlinear_image(s, F, 2)
    assert g.cert.c_r == pytest.approx(2 * s.cert.c_r)
    assert recheck(g).verified


def test_nonlinear_image_rejects_steep_map():
    F = MonotoneMap.from_function(lambda x: 5 * x, lambda x: 5 + 0 * x, 0, 1)
    with pytest.raises(DerivativeBoundViolated):
        nonlinear_image(cantor(), F, 2)


def test_intersection_keeps_constant():
    s = cantor(k=5)
    x = intersect_interval(s, (0, Fraction(1, 3)), (Fraction(-1, 3), Fraction(2, 3)))
    assert x.cert.c_r == s.cert.c_r
    assert x.cert.alpha1 == Fraction(2, 3)
    assert recheck(x).verified
    assert all(b <= Fraction(1, 3) for _, b in x.intervals())


def test_intersection_preconditions():
    s = cantor(k=5)
    with pytest.raises(PreconditionViolated):
        intersect_interval(s, (0, Fraction(1, 3)), (0, Fraction(2, 3)))  # not concentric
    with pytest.raises(PreconditionViolated):
        intersect_interval(s, (0, Fraction(1, 2)), (Fraction(-1, 4), Fraction(3, 4)))  # X meets J' \ J


def test_missing_subinterval_fixtures():
    assert missing_subinterval(cantor(k=4), (0, 1), 9) == 5
    assert missing_subinterval(RegularSetApprox.point(0), (1, 2), 5) == 1
    u = RegularSetApprox(2, 4, np.arange(16), np.full(16, 1 / 16))
    with pytest.raises(NoEmptyCell) as ei:
        missing_subinterval(u, (0, 1), 9)
    assert ei.value.precondition_held is False


def test_missing_child_fixture():
    s = gen_cantor(CantorSpec(128, (30, 90), 2))
    kids = tree_children(s, 0)
    assert kids == {0: [30, 90]}
    with pytest.raises(ChildCountViolation):
        tree_children(cantor(k=4), 0)  # closed cells: every base-3 parent looks full


def test_tree_levels_mid_third():
    s = cantor(k=4)
    # closed cells: the neighbours touching 0 and 1 count
    assert tree_level(s, 1) == [-1, 0, 1, 2, 3]
    assert set(tree_level(s, 2)) >= {0, 2, 6, 8}


def test_cover_count_mid_third():
    _, n = cover_count(cantor(k=4), (0, 1), Fraction(1, 9))
    assert n == 4


@given(cantor_sets(depths=(3, 5)), st.integers(1, 3))
def test_cover_count_respects_bound(s, j):
    rho = Fraction(1, s.base**j)
    _, n = cover_count(s, (0, 1), rho)
    assert n <= cover_bound(s.cert, (0, 1), rho)


@given(st.integers(1, 7))
def test_lebesgue_mid_third_exact(k):
    m, bound = lebesgue_bound(cantor(k=k))
    assert m == pytest.approx((2 / 3) ** k, rel=1e-12)
    assert m <= bound


def test_split_pieces_partition_input():
    s = gen_cantor(CantorSpec(128, (30, 90), 3))
    pieces = split_regular(s, Fraction(1, 128), strict=False)
    assert pieces_disjoint(pieces)
    cells = np.sort(np.concatenate([p.cells for p in pieces]))
    assert np.array_equal(cells, s.cells)
    assert all(p.hull()[1] - p.hull()[0] <= Fraction(1, 128) for p in pieces)


def test_split_strict_precondition():
    with pytest.raises(PreconditionViolated):
        split_regular(cantor(k=3), Fraction(1, 3))


def test_empty_set_raises():
    e = RegularSetApprox(3, 2, np.zeros(0, dtype=np.int64), np.zeros(0))
    with pytest.raises(EmptySetError):
        verify_regularity(e, 0.5, 2.0, Fraction(1, 9), 1)
