import math
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fup_lab.errors import ConfigError, PreconditionViolated, RegularityPreconditionFailed
from fup_lab.generators import CantorSpec, gen_cantor
from fup_lab.multiplier_iteration import (
    BandLimitedSample,
    WeightGrid,
    admissibility_check,
    build_psi,
    build_weight,
    bump,
    bump_derivative,
    c0_bound,
    c_phi,
    coarse_grain,
    contraction_estimate,
    interpolation_check,
    iterate_fup,
    max_steps,
    phi,
    phi_hat,
    phi_tail,
    psi_lower_bound,
    theta,
    unique_continuation_constant,
    unit_cells,
    weight_posts,
    x_samples,
)
from fup_lab.regular_sets import RegularSetApprox, affine_map

LOG32 = math.log(2) / math.log(3)


def cantor(k, L=3, A=(0, 2)):
    return gen_cantor(CantorSpec(L, A, k))


def full_interval(L=3, k=3):
    return RegularSetApprox(L, k, np.arange(L**k), np.full(L**k, L**-k))


# weight side ------------------------------------------------------------------------------

def test_bump_shape_and_slope():
    u = np.linspace(-1.5, 1.5, 3001)
    b = bump(u)
    assert np.all((b >= 0) & (b <= 1))
    assert np.all(b[np.abs(u) <= 0.5] == 1) and np.all(b[np.abs(u) >= 1] == 0)
    assert np.max(np.abs(bump_derivative(u))) <= math.pi + 1e-12
    num = np.gradient(b, u)
    assert np.allclose(num[5:-5], bump_derivative(u)[5:-5], atol=1e-2)


def test_theta_and_c0():
    assert theta(0.0, 0.5) == pytest.approx(math.log(10) ** -0.75)
    with pytest.raises(ConfigError):
        theta(1.0, 2.0)
    assert math.isfinite(c0_bound(0.5, 3.0))


def test_weight_for_point_is_base_factor():
    w = build_weight(RegularSetApprox.point(0), 0.5, 1.0)
    assert np.allclose(w.log_omega, -2 * (1 + w.xi**2) ** 0.25)
    assert admissibility_check(w, 1e5).passes


def test_weight_posts_for_scaled_cantor():
    C = cantor(5)
    Y = affine_map(C, 3**5, 0)
    w = build_weight(Y, LOG32, Y.cert.c_r)
    posts = weight_posts(w, Y, LOG32)
    assert posts.all_hold
    adm = admissibility_check(w, w.c0)
    assert adm.passes and adm.integral <= w.c0


def test_weight_needs_certificate_on_annuli():
    Y = affine_map(cantor(4), 3**4, 0).with_cert(None)
    with pytest.raises(RegularityPreconditionFailed):
        build_weight(Y, LOG32, 3.0)


def test_admissibility_reference_weights():
    one = WeightGrid.from_function(lambda x: 0 * x, lambda x: 0 * x, 100, tail_exponent=None)
    assert admissibility_check(one, 1.0).integral == 0 and admissibility_check(one, 1.0).passes
    e = WeightGrid.from_function(lambda x: -np.abs(x), lambda x: -np.sign(x), 100, tail_exponent=None)
    chk = admissibility_check(e, 1e9)
    assert chk.tail_divergent and not chk.passes


def test_weight_grid_validation():
    with pytest.raises(ConfigError):
        WeightGrid(np.array([0.0, 1.0, 3.0]), np.zeros(3), np.zeros(3))
    with pytest.raises(ConfigError):
        WeightGrid(np.arange(5.0), np.ones(5), np.zeros(5))


# interpolation --------------------------------------------------------------------------------

@given(st.floats(-3, 3), st.integers(0, 3), st.floats(0.3, 0.9))
def test_interpolation_inequality_on_exponentials(xi0, width, r):
    f = BandLimitedSample.exponential(xi0, 16, width)
    kappa = math.exp(-10 / r)
    chk = interpolation_check(f, unit_cells(16, 0.25), r, kappa)
    assert chk.holds


def test_interpolation_kappa_precondition():
    f = BandLimitedSample.exponential(0.0, 4)
    with pytest.raises(PreconditionViolated):
        interpolation_check(f, unit_cells(4, 0.5), 0.5, 0.5)


# unique continuation -------------------------------------------------------------------------

@given(st.floats(0.01, 1.0))
def test_uc_constants_for_point(c1):
    assert unique_continuation_constant(RegularSetApprox.point(0), c1).c3 == pytest.approx(math.sqrt(c1), abs=1e-12)


def test_uc_full_cell_is_one():
    Y = affine_map(cantor(3), 27, 0)
    assert unique_continuation_constant(Y, 1.0).c3 == pytest.approx(1.0, abs=1e-9)


def test_uc_torus_agrees_with_floquet():
    iv = np.array([[j + 0.001, j + 0.999] for j in (0, 1, 3)])
    fl = unique_continuation_constant(iv, 0.25, offset=0.3)
    P = 10
    to = unique_continuation_constant(iv, 0.25, offsets=[0.3] * P, period=P)
    assert to.method == "torus" and fl.method == "floquet"
    assert to.c3 == pytest.approx(fl.c3, abs=1e-9)


def test_uc_cantor_bounded_decrease():
    vals = [unique_continuation_constant(affine_map(cantor(k), 3**k, 0), 0.25).c3 for k in (3, 4, 5)]
    assert all(v > 0 for v in vals)
    assert all(b / a >= 0.5 for a, b in zip(vals, vals[1:]))


# coarse graining and Psi --------------------------------------------------------------------

def test_coarse_grain_fixtures():
    assert coarse_grain(full_interval(), 1, 3) == [(Fraction(-1, 30), Fraction(31, 30))]
    U = coarse_grain(cantor(4), 2, 3)
    assert len(U) == 4
    assert U[0] == (Fraction(-1, 90), Fraction(1, 9) + Fraction(1, 90))


@given(st.sampled_from([3, 4, 5]), st.integers(3, 5), st.integers(1, 2), st.data())
def test_coarse_grain_contains_fattened_set(L, k, n, data):
    A = data.draw(st.lists(st.integers(0, L - 1), min_size=1, max_size=L - 1, unique=True))
    X = gen_cantor(CantorSpec(L, tuple(A), k))
    U = coarse_grain(X, n, L)
    r = Fraction(1, 10 * L**n)
    for a, b in X.intervals():
        assert any(u0 <= a - r and b + r <= u1 for u0, u1 in U)


def test_phi_kernel():
    total, _ = integrate.quad(phi, -np.inf, np.inf, limit=500)
    assert total == pytest.approx(1.0, abs=1e-8)
    for xi in (0.0, 0.3, 0.7):
        v = 2 * integrate.quad(lambda x: phi(x) * np.cos(2 * np.pi * x * xi), 0, 400, limit=4000)[0]
        assert v == pytest.approx(phi_hat(xi), abs=1e-6)
    assert phi_hat(1.0) == 0 and phi_hat(1.3) == 0
    assert phi_tail(3.999) == pytest.approx(phi_tail(4.001), rel=1e-2)


def test_c_phi_value():
    assert c_phi(3) == pytest.approx(1.714, abs=1e-3)
    assert psi_lower_bound(3, 6) > 0.99


def test_psi_band_limit_and_range():
    X = cantor(6)
    p = build_psi(X, 1, 6, 3)
    assert p.leakage() < 1e-8
    assert p.values.min() >= -1e-9 and p.values.max() <= 1 + 1e-9
    assert p.values[x_samples(X, p.M)].min() >= 0.999


def test_psi_on_full_interval_is_one_inside():
    X = full_interval(k=4)
    p = build_psi(X, 1, 3, 3)
    inner = (p.x > 0.05) & (p.x < 0.95)
    assert np.all(p.values[inner] >= 1 - 1e-3)


# contraction and iteration -------------------------------------------------------------------

def test_tau_zero_for_full_interval():
    X = full_interval(k=5)
    c = contraction_estimate(X, cantor(5), 1, 2, 3)
    assert c.tau == pytest.approx(0.0, abs=1e-6)


def test_tau_positive_and_enlarging_u_shrinks_it():
    X, Y = cantor(6), cantor(6)
    base = contraction_estimate(X, Y, 1, 2, 3)
    bigger = contraction_estimate(X, Y, 1, 2, 3, extra=[(Fraction(1, 3), Fraction(2, 3))])
    assert base.tau > 0
    assert bigger.tau <= base.tau + 1e-12


def test_iteration_small():
    X = cantor(6)
    res = iterate_fup(X, X, 3, 2, 3)
    assert res.ratio_bounds_hold and res.product_bounds_hold
    assert res.beta_empirical > 0
    assert all(0 < r < 1 for r in res.ratios)


def test_iteration_step_cap():
    X = cantor(6)
    assert max_steps(6, 2) == 3
    with pytest.raises(PreconditionViolated):
        iterate_fup(X, X, 3, 2, 5)
    assert iterate_fup(X, X, 3, 2, 5, strict=False).m == 3


def test_iteration_rejects_mismatch():
    with pytest.raises(ConfigError):
        iterate_fup(cantor(4), cantor(5), 3, 2, 2)
