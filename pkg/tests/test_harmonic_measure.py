import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from fup_lab.errors import ConfigError, PointOnSlit, PreconditionViolated
from fup_lab.harmonic_measure import (
    LINE_DOWN,
    LINE_UP,
    SLIT_DOWN,
    SLIT_UP,
    SlitDomainSpec,
    brownian_exit,
    lower_bound,
    slit_plane_cdf,
    slit_plane_chi2,
    slit_plane_density,
    slit_plane_lp_norm,
    slit_plane_quantile,
    slit_strip_lower_bound,
    strip_cdf,
    strip_chi2,
    strip_density,
    strip_density_bound,
    strip_density_line,
    strip_quantile,
    subharmonic_bound_check,
    test_function as lookup,
)

far_t = st.one_of(st.floats(1.1, 20.0), st.floats(-20.0, -0.1))


@given(far_t, st.floats(0.2, 3.0))
def test_slit_plane_density_has_half_mass_per_side(t_rel, ell):
    t = t_rel * ell if t_rel > 0 else t_rel * ell
    if t > 0 and t < 1.1 * ell:
        t = 1.1 * ell
    f = lambda z: slit_plane_density(t, ell, z)
    val, _ = integrate.quad(f, 0, ell, limit=200, epsabs=1e-12)
    assert val == pytest.approx(0.5, abs=1e-6)


@given(far_t, st.floats(0.01, 0.99))
def test_slit_plane_cdf_is_antiderivative(t, frac):
    ell = 1.0
    z = frac * ell
    val, _ = integrate.quad(lambda s: slit_plane_density(t, ell, s), 0, z, limit=200, epsabs=1e-13)
    assert slit_plane_cdf(t, ell, z) == pytest.approx(val, abs=1e-8)


@given(far_t, st.floats(0.01, 0.49))
def test_slit_plane_quantile_inverts_cdf(t, q):
    z = slit_plane_quantile(t, 1.0, q)
    assert slit_plane_cdf(t, 1.0, z) == pytest.approx(q, abs=1e-12)


@pytest.mark.parametrize("t", [2.0, -0.5, 5.0])
def test_slit_plane_density_is_derivative_of_conformal_cdf(t):
    # the CDF comes from the conformal map sqrt(z/(z-ell)); differentiate it independently
    ell = mpmath.mpf(1)
    cdf = lambda z: mpmath.atan(mpmath.sqrt((t - ell) / t * z / (ell - z))) / mpmath.pi
    for z in (0.1, 0.37, 0.8):
        d = mpmath.diff(cdf, z)
        assert abs(float(d) - slit_plane_density(t, 1.0, z)) < 1e-10


def test_slit_plane_endpoint_slope():
    z = np.logspace(-9, -6, 20)
    d = slit_plane_density(2.0, 1.0, z)
    slope = np.polyfit(np.log(z), np.log(d), 1)[0]
    assert slope == pytest.approx(-0.5, abs=1e-4)


def test_slit_plane_lp_norms():
    assert slit_plane_lp_norm(2.0, 1.0, 1.0) == pytest.approx(0.5, abs=1e-8)
    p = 1.5
    direct, _ = integrate.quad(lambda z: slit_plane_density(2.0, 1.0, z) ** p, 0, 1, limit=400, epsabs=1e-13)
    assert slit_plane_lp_norm(2.0, 1.0, p) == pytest.approx(direct ** (1 / p), rel=1e-6)
    assert slit_plane_lp_norm(2.0, 1.0, 2.0) == math.inf


def test_slit_plane_preconditions():
    with pytest.raises(PointOnSlit):
        slit_plane_density(0.5, 1.0, 0.2)
    with pytest.raises(PreconditionViolated):
        slit_plane_density(1.05, 1.0, 0.2)
    assert slit_plane_density(1.05, 1.0, 0.2, strict=False) > 0


@given(st.floats(-3, 3), st.floats(0.05, 0.95))
def test_strip_density_half_mass_and_cdf(t, r):
    val, _ = integrate.quad(lambda x: strip_density(t, r, x), -np.inf, np.inf, epsabs=1e-12)
    assert val == pytest.approx(0.5, abs=1e-6)
    x = t + 0.3
    part, _ = integrate.quad(lambda s: strip_density(t, r, s), -np.inf, x, epsabs=1e-13)
    assert strip_cdf(t, r, x) == pytest.approx(part, abs=1e-8)


@given(st.floats(-3, 3), st.floats(0.05, 0.95), st.floats(0.01, 0.49))
def test_strip_quantile_inverts_cdf(t, r, q):
    assert strip_cdf(t, r, strip_quantile(t, r, q)) == pytest.approx(q, abs=1e-10)


@given(st.floats(-0.9, 0.9), st.floats(0.1, 0.9))
def test_off_axis_strip_density_masses(s, r):
    t = complex(0.2, s * r)
    up, _ = integrate.quad(lambda x: strip_density_line(t, r, x, 1), -np.inf, np.inf, epsabs=1e-12)
    down, _ = integrate.quad(lambda x: strip_density_line(t, r, x, -1), -np.inf, np.inf, epsabs=1e-12)
    # the upper-line mass is the harmonic function 1/2 + Im t / (2r)
    assert up == pytest.approx(0.5 + s / 2, abs=1e-6)
    assert up + down == pytest.approx(1.0, abs=1e-6)


def test_off_axis_density_reduces_to_real_case():
    x = np.linspace(-2, 2, 9)
    assert np.allclose(strip_density_line(0.3 + 0j, 0.5, x, 1), strip_density(0.3, 0.5, x), atol=1e-14)


def test_spec_validation():
    with pytest.raises(ConfigError):
        SlitDomainSpec(1.5, (-1, 0), 0.5)
    with pytest.raises(ConfigError):
        SlitDomainSpec(0.5, (-2, 0), 0.5)
    with pytest.raises(PointOnSlit):
        SlitDomainSpec(0.5, (-1, 0), -0.5)


def test_sampler_rejects_tiny_runs():
    with pytest.raises(ConfigError):
        brownian_exit(SlitDomainSpec(0.5, (-1, 0), 0.5), n_paths=10)


def test_sampler_is_deterministic_and_worker_independent():
    spec = SlitDomainSpec(0.5, (-1, 0), 0.5)
    a = brownian_exit(spec, "slit-strip", 70000, seed=5, workers=1)
    b = brownian_exit(spec, "slit-strip", 70000, seed=5, workers=2)
    assert np.array_equal(a.pieces, b.pieces) and np.array_equal(a.x, b.x)
    assert a.unresolved == 0
    assert sum(a.mass(k) for k in range(4)) == pytest.approx(1.0)


def test_strip_sample_fits_closed_form():
    spec = SlitDomainSpec(0.4, (5, 6), 0.0)
    s = brownian_exit(spec, "strip", 100_000, seed=1)
    assert s.mass(LINE_UP) == pytest.approx(0.5, abs=4 * s.sigma(LINE_UP))
    assert strip_chi2(s, spec).passes(0.01)


def test_slit_plane_sample_fits_closed_form():
    spec = SlitDomainSpec(0.5, (0, 1), 2.0)
    s = brownian_exit(spec, "slit-plane", 100_000, seed=2)
    assert s.mass(SLIT_UP) + s.mass(SLIT_DOWN) == pytest.approx(1.0)
    assert slit_plane_chi2(s, spec).passes(0.01)


def test_slit_strip_lower_bound_and_density_bound():
    spec = SlitDomainSpec(0.5, (-1, 0), 0.5)
    chk = slit_strip_lower_bound(spec, n_paths=100_000, seed=3)
    assert chk.holds
    assert chk.bound == pytest.approx(lower_bound(spec))
    s = brownian_exit(spec, "slit-strip", 100_000, seed=3)
    edges = np.linspace(-3, 3, 13)
    p, sig = s.histogram(LINE_UP, edges)
    dens = p / np.diff(edges)
    mids = 0.5 * (edges[1:] + edges[:-1])
    assert np.all(dens <= strip_density_bound(mids, spec.slit, spec.r) + 3 * sig / np.diff(edges))
    with pytest.raises(PreconditionViolated):
        slit_strip_lower_bound(SlitDomainSpec(0.5, (-1, 0), 1.5))


def test_catalog():
    assert lookup("one").log_abs(np.array([1 + 1j]))[0] == 0
    assert lookup("exp:2").log_abs(np.array([0.3 + 0.25j]))[0] == pytest.approx(-0.5)
    for bad in ("poly:1,2", "polyexp:1:0:0", "nope"):
        with pytest.raises(ConfigError):
            lookup(bad)


def test_subharmonic_catalog_holds():
    spec = SlitDomainSpec(0.5, (-1, 0), 0.5)
    s = brownian_exit(spec, "slit-strip", 100_000, seed=4)
    for name in ("one", "exp:1", "exp:-2", "polyexp:1:0.5:0.3+0.1j,-2"):
        assert subharmonic_bound_check(spec, name, sample=s).holds
    eq = subharmonic_bound_check(spec, "exp:1", sample=s)
    assert abs(eq.lhs - eq.rhs) <= 4 * eq.sigma  # equality case


def test_named_substreams_are_independent_and_stable():
    spec = SlitDomainSpec(0.5, (-1, 0), 0.5)
    a = brownian_exit(spec, "slit-strip", 2000, seed=0, stream="a")
    a2 = brownian_exit(spec, "slit-strip", 2000, seed=0, stream="a")
    b = brownian_exit(spec, "slit-strip", 2000, seed=0, stream="b")
    assert np.array_equal(a.x, a2.x, equal_nan=True)
    assert not np.array_equal(a.x, b.x, equal_nan=True)
