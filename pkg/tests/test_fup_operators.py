import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fup_lab.errors import ConfigError, DegeneratePhase, GridTooCoarse, SupportTouchesDiagonal
from fup_lab.fup_core import semiclassical_fourier_norm
from fup_lab.fup_operators import (
    AmplitudeSpec,
    PhaseSpec,
    amplitude_restricted_norm,
    arc_embedding,
    default_arc_chi,
    fattened_intervals,
    hyperbolic_norm,
    phase_restricted_norm,
    plateau,
)
from fup_lab.generators import CantorSpec, gen_cantor

C3 = gen_cantor(CantorSpec(3, (0, 2), 3))


def test_plateau_profile():
    x = np.linspace(-1, 2, 301)
    p = plateau(x, 0, 1, 0.5)
    assert np.all((p >= 0) & (p <= 1))
    assert np.all(p[(x >= 0) & (x <= 1)] == 1)
    assert np.all(p[(x <= -0.5) | (x >= 1.5)] == 0)


def test_plateau_amplitude_declares_bounds():
    a = AmplitudeSpec.plateau((0, 1), (0, 1), 0.25)
    assert a.check()
    assert a.derivative_bounds[0] == pytest.approx(1.0)


def test_zero_amplitude_gives_zero():
    assert amplitude_restricted_norm(C3, C3, 1 / 27, AmplitudeSpec.zero()).value == 0.0


@given(st.complex_numbers(max_magnitude=5, allow_nan=False, allow_infinity=False))
def test_amplitude_norm_is_homogeneous(c):
    a = AmplitudeSpec.plateau((0, 1), (0, 1), 0.25)
    h = 1 / 27
    base = amplitude_restricted_norm(C3, C3, h, a).value
    scaled = amplitude_restricted_norm(C3, C3, h, a.scaled(c)).value
    assert scaled == pytest.approx(abs(c) * base, rel=1e-9, abs=1e-12)


def test_coarse_grid_rejected():
    with pytest.raises(GridTooCoarse):
        phase_restricted_norm(C3, C3, 1 / 27, PhaseSpec.linear(((-1, 2), (-1, 2))), spacing=1 / 100)


def test_degenerate_phase_rejected():
    co = np.zeros((3, 3))
    co[2, 0] = 1.0  # x^2 has no mixed derivative
    with pytest.raises(DegeneratePhase):
        PhaseSpec("polynomial", ((0, 1), (0, 1)), coeffs=co).check_nondegenerate()
    with pytest.raises(ConfigError):
        PhaseSpec("cubic", ((0, 1), (0, 1)))


def test_linear_phase_matches_continuous_fourier():
    h = 3.0**-4
    C = gen_cantor(CantorSpec(3, (0, 2), 4))
    v = phase_restricted_norm(C, C, h, PhaseSpec.linear(((-1, 2), (-1, 2))), spacing=h / 20).value
    iv = fattened_intervals(C, h)
    ref = semiclassical_fourier_norm(iv, iv, h)
    assert abs(v - ref) / ref < 0.02


def test_linear_phase_refinement_tightens():
    h = 3.0**-4
    C = gen_cantor(CantorSpec(3, (0, 2), 4))
    iv = fattened_intervals(C, h)
    ref = semiclassical_fourier_norm(iv, iv, h)
    ph = PhaseSpec.linear(((-1, 2), (-1, 2)))
    errs = [abs(phase_restricted_norm(C, C, h, ph, spacing=h / m).value - ref) for m in (10, 20, 40)]
    assert errs[0] > errs[1] > errs[2]


def test_fattening_merges():
    iv = fattened_intervals(np.array([[0, 1], [1.5, 2]]), 0.3)
    assert iv.tolist() == [[-0.3, 2.3]]


def test_hyperbolic_rejects_diagonal():
    with pytest.raises(SupportTouchesDiagonal):
        hyperbolic_norm(np.array([[0.1, 0.2]]), 0.01, ((0, 1), (0.5, 1.5)))


def test_hyperbolic_scan_decays():
    rect = default_arc_chi()
    norms = []
    for k in (3, 4, 5):
        C = gen_cantor(CantorSpec(3, (0, 2), k))
        norms.append(hyperbolic_norm(arc_embedding(C), 3.0**-k, rect).value)
    assert norms[0] > norms[1] > norms[2]


def test_arc_embedding_offsets():
    iv = arc_embedding(gen_cantor(CantorSpec(3, (0, 2), 1)))
    assert iv.shape == (4, 2)
    assert iv[0, 0] == pytest.approx(0.3) and iv[2, 0] == pytest.approx(0.3 + math.pi)
