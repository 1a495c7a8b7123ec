import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fup_lab.errors import ConfigError, DiskOverlapError, InsufficientScales
from fup_lab.generators import (
    CantorSpec,
    SchottkySpec,
    cantor_cells,
    cantor_constant,
    certify,
    estimate_dimension,
    gen_cantor,
    gen_schottky_cover,
)
from fup_lab.regular_sets import RegularSetApprox, recheck


def test_parse_forms():
    assert CantorSpec.parse("3:0,2:5") == CantorSpec(3, (0, 2), 5)
    assert CantorSpec.parse("3:2,0", depth=4) == CantorSpec(3, (0, 2), 4)
    for bad in ("3", "3:0,9:2", "x:0:2", "3:0,2"):
        with pytest.raises(ConfigError):
            CantorSpec.parse(bad)


@given(st.integers(2, 6), st.integers(1, 5), st.data())
def test_cell_count_and_mass(L, k, data):
    A = data.draw(st.lists(st.integers(0, L - 1), min_size=1, max_size=L, unique=True))
    s = gen_cantor(CantorSpec(L, tuple(A), k))
    assert s.cells.size == len(A) ** k
    assert s.total_mass == pytest.approx(1.0)
    assert np.all(np.diff(s.cells) > 0)


def test_cells_are_words():
    assert list(cantor_cells(3, (0, 2), 2)) == [0, 2, 6, 8]


def test_mid_third_constant_and_dimension():
    assert cantor_constant(3, (0, 2)) == pytest.approx(2.399, abs=1e-3)
    est = estimate_dimension(gen_cantor(CantorSpec(3, (0, 2), 10)))
    assert est.value == pytest.approx(math.log(2) / math.log(3), abs=0.05)


def test_dimension_needs_scales():
    with pytest.raises(InsufficientScales):
        estimate_dimension(gen_cantor(CantorSpec(3, (0, 2), 1)))


def test_certify_attaches_verified_cert():
    s = certify(gen_cantor(CantorSpec(4, (0, 3), 4)))
    assert s.cert.verified
    assert recheck(s).verified


def test_schottky_cover_nested_and_round_trip():
    spec = SchottkySpec.symmetric()
    prev = None
    for n in range(0, 4):
        S = gen_schottky_cover(SchottkySpec.from_dict(dict(spec.to_dict(), depth=n)))
        assert not S.is_empty
        m = S.lebesgue_measure()
        if prev is not None:
            assert m <= prev + 1e-9
        prev = m
    assert SchottkySpec.from_dict(spec.to_dict()).to_dict() == spec.to_dict()


def test_schottky_rejects_overlap():
    with pytest.raises((DiskOverlapError, ConfigError)):
        SchottkySpec.symmetric(centers=(-1.0, -0.5, 0.5, 1.0), radius=0.5)


def test_point_set_dimension_is_zero():
    assert estimate_dimension(RegularSetApprox.point(0.3)).value == pytest.approx(0.0, abs=1e-9)
