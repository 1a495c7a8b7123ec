"""Multiplier weights, unique continuation and the contraction iteration.

Frequency-side weights are stored as ``log omega`` because ``omega`` itself
underflows long before the end of a typical grid. Space-side weights live on
the period-1 torus with integer frequencies; all their Fourier coefficients
are computed in closed form, so the sampled weights are exactly band limited.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Sequence

import numpy as np
from scipy import fft as sfft
from scipy import integrate, linalg, signal, special
from scipy.sparse.linalg import LinearOperator, eigsh

from .errors import (
    ConfigError,
    ContractionFailed,
    EmptySupport,
    PreconditionViolated,
    RegularityPreconditionFailed,
)
from .fup_core import FupInstance, fourier_restricted_norm, set_to_indices
from .regular_sets import RegularSetApprox, _positive_cover

DLOG_LIMIT = 1e5
OVERLAP_LIMIT = 500
DENSE_MAX = 3000


# theta and the frequency weight ---------------------------------------------------

def theta(xi, delta: float):
    """``log(10 + |xi|)^(-(1 + delta)/2)``."""
    if not 0 <= delta <= 1:
        raise ConfigError("delta", f"must lie in [0,1], got {delta}")
    out = np.log(10 + np.abs(np.asarray(xi, dtype=float))) ** (-(1 + delta) / 2)
    return float(out) if out.ndim == 0 else out


def bump(u):
    """C^1 cutoff: 1 on [-1/2, 1/2], ``cos^2`` ramp to 0 at |u| = 1; slope <= pi."""
    a = np.abs(np.asarray(u, dtype=float))
    return np.where(a <= 0.5, 1.0, np.where(a >= 1, 0.0, np.cos(np.pi * (a - 0.5)) ** 2))


def bump_derivative(u):
    u = np.asarray(u, dtype=float)
    a = np.abs(u)
    ramp = (a > 0.5) & (a < 1)
    return np.where(ramp, -np.pi * np.sin(2 * np.pi * (a - 0.5)) * np.sign(u), 0.0)


def rho_n(n: int, delta: float) -> float:
    return n ** (-(1 + delta) / 2) * 2.0**n


def c0_bound(delta: float, c_r: float) -> float:
    """``1e5 + 1e7 C_R^2 sum_n (2^n / rho_n)^(delta - 2)`` summed as a zeta value."""
    if not 0 < delta < 1:
        raise ConfigError("delta", "must lie in (0,1)")
    s = (1 + delta) * (2 - delta) / 2
    return 1e5 + 1e7 * c_r**2 * float(special.zeta(s))


@dataclass(frozen=True, eq=False)
class WeightGrid:
    """Samples of a weight on a uniform grid, kept as ``log omega``.

    Beyond the grid the weight is described by a tail model
    ``|log omega(xi)| / (1 + xi^2) <= tail_coeff * |xi|^(tail_exponent - 2)``;
    ``tail_exponent=None`` asks the checker to estimate it from the edge.
    """

    xi: np.ndarray
    log_omega: np.ndarray
    dlog: np.ndarray
    tail_exponent: float | None = None
    tail_coeff: float | None = None
    intervals: tuple = ()
    max_overlap: int = 0
    c0: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        xi = np.asarray(self.xi, dtype=float)
        if xi.ndim != 1 or xi.size < 3:
            raise ConfigError("xi", "need at least three grid points")
        h = np.diff(xi)
        if np.any(h <= 0) or not np.allclose(h, h[0], rtol=1e-9, atol=0):
            raise ConfigError("xi", "grid must be uniform and increasing")
        lw = np.asarray(self.log_omega, dtype=float)
        if lw.shape != xi.shape or np.any(lw > 0) or not np.all(np.isfinite(lw)):
            raise ConfigError("log_omega", "need finite log omega <= 0 on the grid")
        object.__setattr__(self, "xi", xi)
        object.__setattr__(self, "log_omega", lw)
        object.__setattr__(self, "dlog", np.asarray(self.dlog, dtype=float))

    @property
    def spacing(self) -> float:
        return float(self.xi[1] - self.xi[0])

    @property
    def values(self) -> np.ndarray:
        return np.exp(self.log_omega)

    @classmethod
    def from_function(cls, f, dlog, half_width: float, spacing: float = 0.25, **kw) -> "WeightGrid":
        """Grid from callables for ``log omega`` and its derivative."""
        n = int(math.ceil(half_width / spacing))
        xi = spacing * np.arange(-n, n + 1)
        return cls(xi, f(xi), dlog(xi), **kw)


def _y_contains(Y: RegularSetApprox, xi: np.ndarray) -> np.ndarray:
    if Y.is_degenerate:
        return np.isclose(xi, float(Y.origin), rtol=0, atol=1e-12)
    iv = Y.intervals_float()
    k = np.searchsorted(iv[:, 0], xi, side="right") - 1
    ok = k >= 0
    out = np.zeros(xi.shape, bool)
    out[ok] = xi[ok] <= iv[k[ok], 1] + 1e-12
    return out


def _annulus_covers(Y: RegularSetApprox, delta: float, n1: int) -> list[tuple[int, float, float]]:
    """(n, left, right) of the grid intervals rho_n [j, j+1] meeting Y cap A_n."""
    out = []
    for n in range(1, n1 + 1):
        rho = Fraction(rho_n(n, delta))
        for a, b in ((Fraction(2**n), Fraction(2 ** (n + 1))), (Fraction(-(2 ** (n + 1))), Fraction(-(2**n)))):
            for j in _positive_cover(Y, rho, a, b):
                out.append((n, float(rho * j), float(rho * (j + 1))))
    return out


def build_weight(Y: RegularSetApprox, delta: float, c_r: float, spacing: float = 0.25) -> WeightGrid:
    """The weight ``exp(-2<xi>^(1/2)) prod_J exp(-10 chi_J)`` adapted to ``Y``.

    Covers ``J`` of ``Y cap A_n`` use grid intervals of size ``rho_n``. The grid
    spans ``[-alpha1, alpha1]`` and is widened to hold every ``supp chi_J``.
    """
    if not 0 < delta < 1:
        raise ConfigError("delta", f"must lie in (0,1), got {delta}")
    if spacing > 0.25:
        raise ConfigError("spacing", "grid spacing must be <= 1/4")
    lo, hi = Y.hull()
    alpha1 = max(abs(float(lo)), abs(float(hi)), 2.0)
    n1 = max(1, math.ceil(math.log2(alpha1)) - 1)
    covers = _annulus_covers(Y, delta, n1)
    if covers:
        cert = Y.cert
        if cert is None:
            raise RegularityPreconditionFailed("Y meets the annuli but carries no certificate")
        if cert.alpha0 > 2 or cert.alpha1 < alpha1:
            raise RegularityPreconditionFailed(
                f"certificate scales [{cert.alpha0}, {cert.alpha1}] do not contain [2, {alpha1}]"
            )
        if abs(cert.delta - delta) > 1e-9 or cert.c_r > c_r * (1 + 1e-12):
            raise RegularityPreconditionFailed(f"certificate (delta={cert.delta}, C_R={cert.c_r}) does not match")
    reach = max([alpha1] + [max(abs(2 * a - (a + b) / 2), abs(2 * b - (a + b) / 2)) for _, a, b in covers])
    half = math.ceil(reach / spacing) * spacing
    n = int(round(half / spacing))
    xi = spacing * np.arange(-n, n + 1)
    x2 = 1 + xi * xi
    log_w = -2 * x2**0.25
    dlog = -xi * x2 ** (-0.75)
    overlap = np.zeros(xi.size, dtype=np.int64)
    for _, a, b in covers:
        size, mid = b - a, 0.5 * (a + b)
        sel = slice(np.searchsorted(xi, mid - size), np.searchsorted(xi, mid + size, side="right"))
        u = (xi[sel] - mid) / size
        log_w[sel] -= 10 * size * bump(u)
        dlog[sel] -= 10 * bump_derivative(u)
        overlap[sel] += 1
    return WeightGrid(
        xi,
        log_w,
        dlog,
        tail_exponent=0.5,
        tail_coeff=2.0,
        intervals=tuple((a, b) for _, a, b in covers),
        max_overlap=int(overlap.max()),
        c0=c0_bound(delta, c_r),
        meta={"delta": delta, "c_r": c_r, "alpha1": alpha1, "n1": n1},
    )


@dataclass(frozen=True)
class WeightPosts:
    wt1: bool
    wt2: bool
    dlog_max: float
    dlog_ok: bool
    log_integral: float
    c0: float
    integral_ok: bool
    max_overlap: int

    @property
    def all_hold(self) -> bool:
        return self.wt1 and self.wt2 and self.dlog_ok and self.integral_ok

    def to_dict(self) -> dict:
        return dict(self.__dict__, all_hold=self.all_hold)


def weight_posts(w: WeightGrid, Y: RegularSetApprox, delta: float) -> WeightPosts:
    """Check both pointwise upper bounds, the derivative bound and the log integral."""
    xi = w.xi
    wt1 = bool(np.all(w.log_omega <= -np.sqrt(np.sqrt(1 + xi * xi)) + 1e-12))
    inY = _y_contains(Y, xi)
    wt2 = bool(np.all(w.log_omega[inY] <= -theta(xi[inY], delta) * np.abs(xi[inY]) + 1e-12))
    dmax = float(np.max(np.abs(w.dlog)))
    adm = admissibility_check(w, w.c0 if w.c0 is not None else c0_bound(delta, w.meta.get("c_r", 1.0)))
    return WeightPosts(
        wt1, wt2, dmax, dmax <= DLOG_LIMIT, adm.integral, adm.c0, adm.integral <= adm.c0, w.max_overlap
    )


@dataclass(frozen=True)
class Admissibility:
    integral: float
    tail: float
    dlog_max: float
    c0: float
    tail_divergent: bool
    tail_estimated: bool

    @property
    def passes(self) -> bool:
        return (not self.tail_divergent) and self.integral <= self.c0 and self.dlog_max <= self.c0

    def to_dict(self) -> dict:
        return dict(self.__dict__, passes=self.passes)


def _estimate_tail(w: WeightGrid) -> tuple[float, float]:
    """Exponent and coefficient of ``|log omega| ~ c |xi|^a`` from the outer tenth of the grid."""
    xi, lw = w.xi, np.abs(w.log_omega)
    cut = 0.9 * xi[-1]
    sel = (np.abs(xi) >= cut) & (lw > 0)
    if np.count_nonzero(sel) < 2 or np.all(lw[np.abs(xi) >= cut] == 0):
        return 0.0, 0.0
    a, logc = np.polyfit(np.log(np.abs(xi[sel])), np.log(lw[sel]), 1)
    c = float(np.max(lw[sel] / np.abs(xi[sel]) ** a))
    return float(a), c


def admissibility_check(w: WeightGrid, c0: float) -> Admissibility:
    """Trapezoid log integral plus a tail bound beyond the grid, and the derivative bound."""
    f = np.abs(w.log_omega) / (1 + w.xi**2)
    inner = float(integrate.trapezoid(f, w.xi))
    estimated = w.tail_exponent is None
    a, c = (w.tail_exponent, w.tail_coeff) if not estimated else _estimate_tail(w)
    edge = float(min(-w.xi[0], w.xi[-1]))
    divergent = False
    if c == 0:
        tail = 0.0
    elif a >= 1 - 1e-3:
        tail, divergent = math.inf, True
    else:
        tail = 2 * c * edge ** (a - 1) / (1 - a)
    return Admissibility(inner + tail, tail, float(np.max(np.abs(w.dlog))), float(c0), divergent, estimated)


# band-limited samples on a torus --------------------------------------------------------

def _interval_gram(freqs: np.ndarray, P: float, a: float, b: float) -> np.ndarray:
    """G[k, k'] = int_a^b e^{2 pi i (k' - k) x / P} dx."""
    d = (freqs[None, :] - freqs[:, None]).astype(float)
    w = 2 * np.pi * d / P
    safe = np.where(d == 0, 1.0, w)
    val = (np.exp(1j * safe * b) - np.exp(1j * safe * a)) / (1j * safe)
    return np.where(d == 0, b - a, val)


@dataclass(frozen=True, eq=False)
class BandLimitedSample:
    """``f(x) = sum_k c_k e^{2 pi i k x / P}`` on the torus of period ``P``."""

    period: float
    freqs: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        k = np.asarray(self.freqs, dtype=np.int64).reshape(-1)
        c = np.asarray(self.coeffs, dtype=complex).reshape(-1)
        if k.size != c.size:
            raise ConfigError("coeffs", "one coefficient per frequency")
        if k.size == 0:
            raise EmptySupport("no frequencies")
        if np.unique(k).size != k.size:
            raise ConfigError("freqs", "frequencies must be distinct")
        if self.period <= 0:
            raise ConfigError("period", "must be positive")
        object.__setattr__(self, "freqs", k)
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def exponential(cls, xi0: float, period: float, width: int = 0) -> "BandLimitedSample":
        """``e^{2 pi i xi0 x}`` rounded to the period's lattice, with optional triangular window."""
        k0 = int(round(xi0 * period))
        ks = np.arange(k0 - width, k0 + width + 1)
        return cls(period, ks, 1.0 - np.abs(ks - k0) / (width + 1))

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return np.exp(2j * np.pi * np.multiply.outer(x, self.freqs) / self.period) @ self.coeffs

    @property
    def xi(self) -> np.ndarray:
        return self.freqs / self.period

    def norm2(self) -> float:
        return float(self.period * np.sum(np.abs(self.coeffs) ** 2))

    def norm2_on(self, a: float, b: float) -> float:
        G = _interval_gram(self.freqs, self.period, a, b)
        return float(np.real(np.conj(self.coeffs) @ G @ self.coeffs))

    def weighted_fourier_norm2(self, r: float) -> float:
        """``||e^{2 pi r |xi|} f^||^2`` by Parseval on the torus."""
        return float(self.period * np.sum(np.exp(4 * np.pi * r * np.abs(self.xi)) * np.abs(self.coeffs) ** 2))


@dataclass(frozen=True)
class InterpolationCheck:
    lhs: float
    rhs: float
    kappa: float
    r: float
    C: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs

    def to_dict(self) -> dict:
        return dict(self.__dict__, holds=self.holds)


def unit_cells(period: int, c0: float, offset: float | None = None) -> list[tuple[tuple[float, float], tuple[float, float]]]:
    """Pairs ``([j, j+1], I'')`` over one period, ``I''`` of length ``c0`` (centred by default)."""
    if not 0 < c0 <= 1:
        raise ConfigError("c0", "must lie in (0,1]")
    off = (1 - c0) / 2 if offset is None else offset
    return [((j, j + 1.0), (j + off, j + off + c0)) for j in range(int(period))]


def interpolation_check(f: BandLimitedSample, pairs, r: float, kappa: float, C: float = 10.0) -> InterpolationCheck:
    """Both sides of the interpolation inequality for a sample ``f``."""
    if not 0 < r < 1:
        raise ConfigError("r", "must lie in (0,1)")
    if not 0 < kappa <= math.exp(-C / r):
        raise PreconditionViolated("0 < kappa <= exp(-C/r)", f"kappa={kappa}, bound={math.exp(-C / r)}")
    lhs = sum(f.norm2_on(*I) for I, _ in pairs)
    inner = sum(f.norm2_on(*J) for _, J in pairs)
    weighted = f.weighted_fourier_norm2(r)
    rhs = C / r * inner**kappa * weighted ** (1 - kappa)
    return InterpolationCheck(float(lhs), float(rhs), kappa, r, C)


# unique continuation ------------------------------------------------------------------------

def _floquet_gram(ns: np.ndarray, a: float, b: float) -> np.ndarray:
    return _interval_gram(ns, 1.0, a, b)


def _intervals_of(Y) -> np.ndarray:
    if isinstance(Y, RegularSetApprox):
        if Y.is_degenerate:
            p = float(Y.origin)
            return np.array([[p, p]])
        return Y.intervals_float()
    arr = np.atleast_2d(np.asarray(Y, dtype=float))
    if arr.shape[1] == 1:
        arr = np.hstack([arr, arr])
    return arr


def _theta_index_sets(iv: np.ndarray) -> list[np.ndarray]:
    """Distinct sets ``{n : n + theta in Y}`` for almost every theta in [0, 1).

    Only theta strictly between breakpoints count, since single theta carry no
    L^2 mass; a set made of points alone is probed at its own offsets.
    """
    if np.all(iv[:, 1] - iv[:, 0] <= 0):
        probes = list(np.unique(np.mod(iv[:, 0], 1.0)))
    else:
        fr = np.unique(np.concatenate([np.mod(iv[:, 0], 1.0), np.mod(iv[:, 1], 1.0), [0.0]]))
        probes = list(0.5 * (fr + np.append(fr[1:], 1.0)))
    seen, out = set(), []
    for th in probes:
        lo = np.ceil(iv[:, 0] - th - 1e-12)
        hi = np.floor(iv[:, 1] - th + 1e-12)
        ns = set()
        for a, b in zip(lo, hi):
            ns.update(range(int(a), int(b) + 1))
        key = tuple(sorted(ns))
        if key and key not in seen:
            seen.add(key)
            out.append(np.array(key, dtype=np.int64))
    return out


@dataclass(frozen=True)
class UCResult:
    c3: float
    method: str
    size: int

    def __float__(self) -> float:
        return self.c3


def unique_continuation_constant(Y, c1: float, offset: float | None = None, offsets: Sequence[float] | None = None, period: int | None = None) -> UCResult:
    """Largest ``c3`` with ``||f||_{L^2(U')} >= c3 ||f||`` for ``supp f^ in Y``.

    ``U'`` takes ``[j + offset, j + offset + c1]`` from every unit cell. For
    such 1-periodic ``U'`` the Bloch-Floquet reduction is exact: ``c3^2`` is the
    least eigenvalue of ``int_{I'} e^{2 pi i (n - n') x} dx`` over the integer
    shifts ``n`` with ``n + theta in Y``, minimised over ``theta``. Passing
    per-cell ``offsets`` (one per cell of a torus of period ``P``) switches to
    the torus model with frequencies in ``Y cap P^-1 Z``.
    """
    if not 0 < c1 <= 1:
        raise ConfigError("c1", "must lie in (0,1]")
    iv = _intervals_of(Y)
    if iv.size == 0:
        raise EmptySupport("Y is empty")
    if offsets is None:
        off = (1 - c1) / 2 if offset is None else float(offset)
        if not 0 <= off <= 1 - c1:
            raise ConfigError("offset", "I' must sit inside [0, 1]")
        best = math.inf
        sizes = 0
        for ns in _theta_index_sets(iv):
            lam = linalg.eigvalsh(_floquet_gram(ns, off, off + c1), subset_by_index=[0, 0])[0]
            best = min(best, float(lam))
            sizes = max(sizes, ns.size)
        return UCResult(math.sqrt(max(best, 0.0)), "floquet", sizes)
    P = int(period if period is not None else len(offsets))
    offs = np.asarray(offsets, dtype=float)
    if offs.size != P:
        raise ConfigError("offsets", f"need {P} offsets, one per unit cell")
    if np.any(offs < 0) or np.any(offs > 1 - c1):
        raise ConfigError("offsets", "I' must sit inside its cell")
    ks = []
    for a, b in iv:
        ks.extend(range(int(math.ceil(a * P - 1e-9)), int(math.floor(b * P + 1e-9)) + 1))
    ks = np.unique(np.array(ks, dtype=np.int64))
    if ks.size == 0:
        raise EmptySupport("Y meets no torus frequency")
    if ks.size > DENSE_MAX:
        raise ConfigError("period", f"torus model needs {ks.size} frequencies; reduce period or alpha1")
    G = np.zeros((ks.size, ks.size), complex)
    for j, o in enumerate(offs):
        G += _interval_gram(ks, P, j + o, j + o + c1)
    lam = linalg.eigvalsh(G / P, subset_by_index=[0, 0])[0]
    return UCResult(math.sqrt(max(float(lam), 0.0)), "torus", int(ks.size))


# coarse graining and the weights Psi_n -----------------------------------------------------

def tree_cells(X: RegularSetApprox, n: int, L: int) -> list[int]:
    """Level-n cells ``L^-n [j, j+1]`` meeting X (positive length; the cell of a point)."""
    return _positive_cover(X, Fraction(1, L**n))


def coarse_grain(X: RegularSetApprox, n: int, L: int) -> list[tuple[Fraction, Fraction]]:
    """Union of the level-n cells of X fattened by ``1/(10 L^n)``, merged."""
    if n < 0:
        raise ConfigError("n", "level must be >= 0")
    s = Fraction(1, L**n)
    pad = s / 10
    out: list[list[Fraction]] = []
    for j in tree_cells(X, n, L):
        a, b = j * s - pad, (j + 1) * s + pad
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def phi(x):
    """Default kernel ``(3/4) sinc^4(x/2)``: nonnegative, unit mass, Fourier support [-1, 1]."""
    return 0.75 * np.sinc(np.asarray(x, dtype=float) / 2) ** 4


def phi_hat(xi):
    """Fourier transform of :func:`phi`: ``(3/2) B(2 xi)`` with B the centred cubic B-spline."""
    s = 2 * np.abs(np.asarray(xi, dtype=float))
    inner = 2 / 3 - s**2 + s**3 / 2
    outer = (2 - s) ** 3 / 6
    return 1.5 * np.where(s <= 1, inner, np.where(s <= 2, outer, 0.0))


def phi_tail(R: float) -> float:
    """``int_{|x| > R} phi``."""
    if R <= 0:
        return 1.0
    if R <= 4:
        v, _ = integrate.quad(phi, 0, R, epsabs=1e-14, epsrel=1e-13, limit=200)
        return 1 - 2 * v
    # sin^4 expansion: 3/pi^4 * int_R^inf (3 - 4 cos(pi x) + cos(2 pi x)) / x^4
    g = lambda x: x**-4.0
    c1, _ = integrate.quad(g, R, np.inf, weight="cos", wvar=np.pi)
    c2, _ = integrate.quad(g, R, np.inf, weight="cos", wvar=2 * np.pi)
    return 3 / np.pi**4 * (R**-3.0 - 4 * c1 + c2)


def c_phi(L: int, jmax: int = 40) -> float:
    """``sup_j L^j * tail(L^j / 10)``, so that ``1 - C_phi / L^(T-1)`` bounds Psi_n on X for every T."""
    return max(L**j * phi_tail(L**j / 10) for j in range(jmax))


def psi_lower_bound(L: int, T: int) -> float:
    return 1 - c_phi(L) / L ** (T - 1)


@dataclass(frozen=True, eq=False)
class PsiWeight:
    """``Psi_n = 1_{U_{n+1}} * phi_{n+T}`` sampled at ``i / M`` on the unit torus."""

    n: int
    T: int
    L: int
    band: int
    values: np.ndarray
    spectrum: np.ndarray

    @property
    def M(self) -> int:
        return int(self.values.size)

    @property
    def x(self) -> np.ndarray:
        return np.arange(self.M) / self.M

    def leakage(self) -> float:
        """Largest coefficient of the sampled weight outside ``[-band, band]``."""
        c = sfft.fft(self.values) / self.M
        k = sfft.fftfreq(self.M, 1.0 / self.M)
        return float(np.max(np.abs(c[np.abs(k) > self.band]), initial=0.0))


def _indicator_coeffs(boxes: np.ndarray, Q: int, ks: np.ndarray) -> np.ndarray:
    """Fourier coefficients at integers ``ks`` of the union of boxes ``[i/Q, (i+1)/Q]``."""
    cov = np.zeros(Q)
    cov[np.mod(boxes, Q)] = 1.0
    D = sfft.fft(cov)
    k = ks.astype(float)
    safe = np.where(ks == 0, 1.0, k)
    box = np.where(ks == 0, 1.0 / Q, (1 - np.exp(-2j * np.pi * safe / Q)) / (2j * np.pi * safe))
    return D[np.mod(ks, Q)] * box


def _u_boxes(X: RegularSetApprox, level: int, L: int, extra=()) -> tuple[np.ndarray, int]:
    Q = 10 * L**level
    boxes = [np.arange(10 * j - 1, 10 * j + 11) for j in tree_cells(X, level, L)]
    for a, b in extra:
        lo, hi = math.floor(Fraction(a) * Q), math.ceil(Fraction(b) * Q)
        boxes.append(np.arange(lo, hi))
    return (np.unique(np.concatenate(boxes)) if boxes else np.zeros(0, np.int64)), Q


def psi_spectrum(X: RegularSetApprox, n: int, T: int, L: int, M: int, extra=()) -> np.ndarray:
    """Length-M array of the Fourier coefficients of ``Psi_n`` (index ``k mod M``)."""
    band = L ** (n + T)
    if M <= 2 * band:
        raise ConfigError("M", f"need M > {2 * band} samples")
    boxes, Q = _u_boxes(X, n + 1, L, extra)
    ks = np.arange(-band + 1, band)
    spec = np.zeros(M, complex)
    if boxes.size:
        spec[np.mod(ks, M)] = _indicator_coeffs(boxes, Q, ks) * phi_hat(ks / band)
    return spec


def build_psi(X: RegularSetApprox, n: int, T: int, L: int, M: int | None = None, extra=()) -> PsiWeight:
    """Coarse-graining weight ``Psi_n`` on the unit torus, exactly band limited to ``L^(n+T)``.

    ``extra`` adds hand-picked intervals to ``U_{n+1}``.
    """
    if T < 1:
        raise ConfigError("T", "must be >= 1")
    band = L ** (n + T)
    M = int(M or sfft.next_fast_len(4 * band + 1))
    spec = psi_spectrum(X, n, T, L, M, extra)
    vals = np.real(sfft.ifft(spec)) * M
    return PsiWeight(n, T, L, band, vals, spec)


def x_samples(X: RegularSetApprox, M: int) -> np.ndarray:
    """Indices ``i`` with ``i / M`` in X (mod 1)."""
    x = np.arange(M) / M
    if X.is_degenerate:
        return np.array([int(round(float(X.origin) * M)) % M])
    iv = X.intervals_float()
    k = np.searchsorted(iv[:, 0], x, side="right") - 1
    ok = k >= 0
    inside = np.zeros(M, bool)
    inside[ok] = x[ok] <= iv[k[ok], 1]
    return np.nonzero(inside)[0]


# Toeplitz Gram matrices on integer frequency sets -------------------------------------------

def _weight_coeffs(W_samples: np.ndarray) -> np.ndarray:
    return sfft.fft(W_samples) / W_samples.size


def _gram_lambda_max(freqs: np.ndarray, what: np.ndarray, wband: int | None = None, dense_max: int = DENSE_MAX) -> float:
    """Largest eigenvalue of ``G[b, a] = what[(f_b - f_a) mod M]``.

    ``wband`` bounds the support of the weight's coefficients; on sorted
    frequencies it makes G banded, which ``eig_banded`` exploits.
    """
    M = what.size
    f = np.sort(np.asarray(freqs, dtype=np.int64))
    n = f.size
    if n <= dense_max:
        G = what[np.mod(f[:, None] - f[None, :], M)]
        return float(linalg.eigvalsh(G, subset_by_index=[n - 1, n - 1])[0])
    if wband is not None:
        b = int(np.max(np.searchsorted(f, f + wband, side="right") - 1 - np.arange(n)))
        if b < n // 4 and n * b * b <= 4e9:
            ab = np.zeros((b + 1, n), complex)
            for i in range(b + 1):
                ab[i, : n - i] = what[np.mod(f[i:] - f[: n - i], M)]
            ev = linalg.eig_banded(ab, lower=True, eigvals_only=True, select="i", select_range=(n - 1, n - 1))
            return float(ev[0])
    base = f[0]
    span = int(f[-1] - base)
    K = span if wband is None else min(int(wband), span)
    size = sfft.next_fast_len(span + 2 * K + 1)
    kern_hat = sfft.fft(what[np.mod(np.arange(-K, K + 1), M)], size)
    pos = f - base

    def mv(v):
        full = np.zeros(span + 1, complex)
        full[pos] = np.ravel(v)
        out = sfft.ifft(sfft.fft(full, size) * kern_hat)
        return out[pos + K]

    op = LinearOperator((n, n), matvec=mv, dtype=complex)
    vals = eigsh(op, k=1, which="LA", v0=np.ones(n, complex), tol=1e-8, maxiter=20000, return_eigenvectors=False)
    return float(np.real(vals[0]))


def neighborhood_indices(y_idx: np.ndarray, radius: int) -> np.ndarray:
    """Integers within ``radius`` of the index set (no wrap)."""
    y = np.asarray(y_idx, dtype=np.int64)
    lo, hi = int(y.min()) - radius, int(y.max()) + radius
    mark = np.zeros(hi - lo + 2, np.int64)
    np.add.at(mark, y - radius - lo, 1)
    np.add.at(mark, y + radius + 1 - lo, -1)
    return np.nonzero(np.cumsum(mark)[:-1] > 0)[0] + lo


@dataclass(frozen=True)
class Contraction:
    tau: float
    norm: float
    n: int
    T: int
    size: int

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _check_levels(X: RegularSetApprox, L: int, N: int, n: int):
    if L ** (n + 1) > N:
        raise PreconditionViolated("L^(n+1) <= N", f"L={L}, n={n}, N={N}")


def contraction_estimate(X: RegularSetApprox, Y: RegularSetApprox, n: int, T: int, L: int, extra=(), N: int | None = None) -> Contraction:
    """``tau`` with ``1 - tau = ||Psi_n P||``, ``P`` projecting onto spectra in ``Y(2 L^n)``.

    X lives in [0, 1]; Y is given on [0, 1] and dilated by ``N = L^depth``.
    """
    N = int(N or Y.base**Y.depth)
    _check_levels(X, L, N, n)
    freqs = neighborhood_indices(set_to_indices(Y, N), 2 * L**n)
    span = int(freqs.max() - freqs.min())
    band = L ** (n + T)
    M = sfft.next_fast_len(span + 4 * band + 1)
    psi = build_psi(X, n, T, L, M, extra)
    lam = _gram_lambda_max(freqs, _weight_coeffs(psi.values**2), 2 * band)
    norm = math.sqrt(max(lam, 0.0))
    return Contraction(1 - norm, norm, n, T, int(freqs.size))


def _x_gram_coeffs(x_idx: np.ndarray, N: int, M: int) -> np.ndarray:
    """Coefficients (length M, index mod M) of the indicator of the cells ``[j/N, (j+1)/N]``."""
    ks = sfft.fftfreq(M, 1.0 / M).astype(np.int64)
    return _indicator_coeffs(np.asarray(x_idx), N, ks)


def torus_fup_norm(X: RegularSetApprox, Y: RegularSetApprox, N: int | None = None) -> float:
    """``sup ||f||_{L^2(X)} / ||f||`` over trigonometric polynomials with spectrum in N*Y."""
    N = int(N or Y.base**Y.depth)
    y = set_to_indices(Y, N)
    M = sfft.next_fast_len(2 * N + 1)
    coeffs = _x_gram_coeffs(set_to_indices(X, N), N, M)
    return math.sqrt(max(_gram_lambda_max(y, coeffs), 0.0))


@dataclass(frozen=True)
class IterationResult:
    L: int
    T: int
    m: int
    N: int
    step_norms: list
    ratios: list
    taus: list
    c_phi: float
    psi_floor: float
    bounds: list
    torus_norm: float
    dft_norm: float
    beta_empirical: float
    beta_formula: float
    t_condition: bool
    ratio_bounds_hold: bool
    product_bounds_hold: bool

    def rows(self) -> list[dict]:
        out = []
        for i, s in enumerate(self.step_norms):
            out.append(
                {
                    "m": i + 1,
                    "step_norm": s,
                    "ratio": self.ratios[i - 1] if i else "",
                    "tau": self.taus[i - 1] if i else "",
                    "bound": self.bounds[i],
                }
            )
        return out

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def max_steps(depth: int, T: int) -> int:
    """Largest m with ``L^((m-1) T + 1) <= L^depth``."""
    return 1 + (depth - 1) // T


def iterate_fup(X: RegularSetApprox, Y: RegularSetApprox, L: int, T: int, m_max: int, strict: bool = True) -> IterationResult:
    """Norms of ``f -> (prod_{l<m} Psi_{lT}) f`` on spectra in ``N*Y`` for m = 1..m_max.

    ``s_m = sup ||f_m|| / ||f||`` comes from the Gram matrix of ``|prod Psi|^2``.
    Each ratio ``s_{m+1}/s_m`` is compared with ``1 - tau_{mT}``, and the
    chain bound ``(1 - C_phi/L^(T-1))^(1-m) s_m`` with the exact torus norm of X.
    Too many steps for the depth raise unless ``strict=False``, which caps m.
    """
    if X.base != L or Y.base != L or X.depth != Y.depth:
        raise ConfigError("L", "X and Y must be base-L sets of equal depth")
    if T < 1 or m_max < 1:
        raise ConfigError("T", "T and m must be >= 1")
    k = X.depth
    N = L**k
    if m_max > max_steps(k, T) and not strict:
        m_max = max_steps(k, T)
    if m_max > max_steps(k, T):
        raise PreconditionViolated("L^((m-1)T+1) <= N", f"m={m_max}, T={T}, depth={k}; at most {max_steps(k, T)} steps")
    y = set_to_indices(Y, N)
    band = sum(L ** (l * T + T) for l in range(1, m_max))
    M = sfft.next_fast_len(N + 2 * band + 1)
    prod = np.ones(M)
    norms, ratios, taus = [1.0], [], []
    for m in range(1, m_max):
        n = m * T
        psi = build_psi(X, n, T, L, M)
        prod = prod * psi.values
        s = math.sqrt(max(_gram_lambda_max(y, _weight_coeffs(prod**2), 2 * band), 0.0))
        ratio = s / norms[-1]
        if ratio >= 1:
            raise ContractionFailed(f"step {m}: ratio {ratio:.6f} >= 1")
        norms.append(s)
        ratios.append(ratio)
        taus.append(contraction_estimate(X, Y, n, T, L, N=N).tau)
    cphi = c_phi(L)
    floor = 1 - cphi / L ** (T - 1)
    torus = torus_fup_norm(X, Y, N)
    dft = fourier_restricted_norm(FupInstance.from_sets(X, Y)).value
    bounds = [floor ** (1 - (i + 1)) * s if floor > 0 else math.inf for i, s in enumerate(norms)]
    ratio_ok = all(r <= (1 - t) + 1e-9 for r, t in zip(ratios, taus))
    prod_ok = all(torus <= b * (1 + 1e-9) for b in bounds)
    if ratios:
        gm = math.exp(np.mean(np.log(ratios)))
        beta_emp = -math.log(gm) / (T * math.log(L))
        tmin = min(taus)
        beta_formula = -math.log(1 - tmin / 2) / (T * math.log(L))
        t_cond = floor > 0 and (1 - tmin) / floor <= 1 - tmin / 2
    else:
        beta_emp = beta_formula = 0.0
        t_cond = False
    return IterationResult(
        L, T, m_max, N, norms, ratios, taus, cphi, floor, bounds, torus, dft, beta_emp, beta_formula, t_cond, ratio_ok, prod_ok
    )
