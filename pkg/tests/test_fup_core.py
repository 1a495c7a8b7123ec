import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fup_lab.errors import ConfigError, InsufficientPoints
from fup_lab.fup_core import (
    FupInstance,
    fit_beta,
    fourier_restricted_norm,
    scan_and_fit,
    semiclassical_fourier_norm,
    set_to_indices,
    shift_invariance_check,
    volume_baseline,
)
from fup_lab.generators import CantorSpec, gen_cantor


@st.composite
def instances(draw, max_n=64):
    N = draw(st.integers(2, max_n))
    x = draw(st.lists(st.integers(0, N - 1), min_size=1, max_size=N, unique=True))
    y = draw(st.lists(st.integers(0, N - 1), min_size=1, max_size=N, unique=True))
    return FupInstance(N, np.array(sorted(x)), np.array(sorted(y)))


@given(instances())
def test_norm_between_volume_bounds(inst):
    v = fourier_restricted_norm(inst).value
    # each entry has modulus N^(-1/2); norm >= max entry, <= Cauchy-Schwarz
    assert v >= 1 / math.sqrt(inst.N) - 1e-12
    assert v <= min(1.0, math.sqrt(inst.x_idx.size * inst.y_idx.size / inst.N)) + 1e-12


@given(instances(), st.integers(0, 100), st.integers(0, 100))
def test_shift_invariance(inst, x0, y0):
    a, b = shift_invariance_check(inst, x0, y0)
    assert a == pytest.approx(b, rel=1e-10, abs=1e-12)


@given(instances(max_n=40))
def test_power_matches_dense(inst):
    d = fourier_restricted_norm(inst, "dense").value
    p = fourier_restricted_norm(inst, "power").value
    assert p == pytest.approx(d, rel=1e-6)


def test_full_sets_give_one():
    N = 27
    inst = FupInstance(N, np.arange(N), np.arange(N))
    assert fourier_restricted_norm(inst).value == pytest.approx(1.0, abs=1e-12)


@given(st.integers(2, 4000))
def test_singletons_give_inverse_sqrt(N):
    inst = FupInstance(N, np.array([0]), np.array([N // 2]))
    assert abs(fourier_restricted_norm(inst).value - N**-0.5) < 1e-12


def test_instance_validation_and_round_trip():
    with pytest.raises(ConfigError):
        FupInstance(8, np.array([8]), np.array([0]))
    inst = FupInstance(9, np.array([0, 2]), np.array([1]))
    back = FupInstance.from_dict(inst.to_dict())
    assert back.N == 9 and list(back.x_idx) == [0, 2]
    with pytest.raises(ConfigError):
        fourier_restricted_norm(inst, "bogus")


def test_set_to_indices_mid_third():
    C = gen_cantor(CantorSpec(3, (0, 2), 2))
    assert list(set_to_indices(C, 9)) == [0, 2, 6, 8]


@given(st.floats(0.05, 2.0), st.floats(0.1, 5.0))
def test_fit_recovers_power_law(beta, c):
    Ns = [3**k for k in range(2, 9)]
    b, se = fit_beta(Ns, [c * N**-beta for N in Ns])
    assert b == pytest.approx(beta, abs=1e-9)
    assert se < 1e-8


def test_fit_needs_points():
    with pytest.raises(InsufficientPoints):
        fit_beta([9], [0.5])


def test_scan_is_worker_independent():
    spec = CantorSpec(3, (0, 2), 1)
    a = scan_and_fit(spec, spec, range(2, 7), workers=1)
    b = scan_and_fit(spec, spec, range(2, 7), workers=3)
    assert a == b
    assert all(y < x for x, y in zip(a.norms, a.norms[1:]))


def test_volume_baseline_delta_zero():
    N = 243
    inst = FupInstance(N, np.array([0]), np.array([0]))
    vb = volume_baseline(inst, 0.0, 1.0)
    assert vb.holds and vb.paper == pytest.approx(24 * N**-0.5)


def test_continuous_full_interval_norm_is_one():
    iv = np.array([[0.0, 1.0]])
    assert semiclassical_fourier_norm(iv, iv, 1 / 40) == pytest.approx(1.0, abs=2e-2)
