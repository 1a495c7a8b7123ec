"""Variable-amplitude and general-phase operators restricted to fractal sets.

Kernels are discretised with the midpoint rule on the fattened sets X(h^rho),
Y(h^rho) at spacing h/10 (configurable, never coarser), and the operator
norm is the top singular value of the weighted quadrature matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import ConfigError, DegeneratePhase, GridTooCoarse, SupportTouchesDiagonal
from .fup_core import NormResult, fit_beta, top_singular
from .regular_sets import RegularSetApprox

Rect = tuple  # ((x0, x1), (y0, y1))


# ---------------------------------------------------------------------------
# cutoffs


def smooth_step(t):
    """C-infinity step: 0 for t <= 0, 1 for t >= 1."""
    t = np.asarray(t, float)
    a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
    b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return np.where(t >= 1, 1.0, np.where(t <= 0, 0.0, a / np.where(a + b > 0, a + b, 1.0)))


def plateau(x, lo: float, hi: float, margin: float):
    """1 on [lo, hi], smooth decay to 0 over ``margin`` on either side."""
    x = np.asarray(x, float)
    return smooth_step((x - (lo - margin)) / margin) * smooth_step(((hi + margin) - x) / margin)


def inner_half_bump(x, a: float, b: float):
    """Smooth bump supported in [a, b], equal to 1 on the inner half."""
    m = (a + b) / 2
    w = (b - a) / 2
    return plateau(x, m - w / 2, m + w / 2, w / 2)


# ---------------------------------------------------------------------------
# specs


@dataclass(frozen=True)
class AmplitudeSpec:
    """Smooth amplitude a(x, xi) supported in ``support`` = ((x0, x1), (xi0, xi1)).

    ``derivative_bounds`` holds declared sup norms of d^k a / dx^k for
    k = 0, 1, 2 and ``diameter`` the support diameter C_a.
    """

    func: Callable
    support: Rect
    derivative_bounds: tuple = ()
    diameter: float = 0.0
    scale: complex = 1.0
    name: str = "custom"

    def __call__(self, x, xi):
        x = np.asarray(x, float)
        xi = np.asarray(xi, float)
        (x0, x1), (y0, y1) = self.support
        inside = (x >= x0) & (x <= x1) & (xi >= y0) & (xi <= y1)
        if self.scale == 0:
            return np.zeros(np.broadcast(x, xi).shape)
        return np.where(inside, self.scale * self.func(x, xi), 0.0)

    def scaled(self, c: complex) -> "AmplitudeSpec":
        return AmplitudeSpec(self.func, self.support, tuple(abs(c) * b for b in self.derivative_bounds),
                             self.diameter, self.scale * c, self.name)

    @classmethod
    def plateau(cls, x_range, xi_range, margin: float, name: str = "plateau") -> "AmplitudeSpec":
        """Tensor product equal to 1 on x_range x xi_range."""
        (xa, xb), (ya, yb) = x_range, xi_range

        def f(x, xi):
            return plateau(x, xa, xb, margin) * plateau(xi, ya, yb, margin)

        support = ((xa - margin, xb + margin), (ya - margin, yb + margin))
        spec = cls(f, support, (), 0.0, 1.0, name)
        return spec.with_measured_bounds()

    @classmethod
    def zero(cls, support: Rect = ((0.0, 1.0), (0.0, 1.0))) -> "AmplitudeSpec":
        return cls(lambda x, xi: np.zeros(np.broadcast(x, xi).shape), support, (0.0, 0.0, 0.0), 0.0, 0.0, "zero")

    def with_measured_bounds(self, n: int = 801) -> "AmplitudeSpec":
        """Fill derivative_bounds and diameter from dense finite differences."""
        (x0, x1), (y0, y1) = self.support
        xs = np.linspace(x0, x1, n)
        ys = np.linspace(y0, y1, 41)
        vals = np.abs(self(xs[:, None], ys[None, :]))
        dx = xs[1] - xs[0]
        d1 = np.abs(np.diff(self(xs[:, None], ys[None, :]), axis=0)) / dx
        d2 = np.abs(np.diff(self(xs[:, None], ys[None, :]), 2, axis=0)) / dx**2
        bounds = (float(vals.max()), float(d1.max()), float(d2.max()))
        diam = math.hypot(x1 - x0, y1 - y0)
        return AmplitudeSpec(self.func, self.support, bounds, diam, self.scale, self.name)

    def check(self, slack: float = 0.1, n: int = 401) -> bool:
        """Samples vanish off the support and FD derivatives respect the declared bounds."""
        (x0, x1), (y0, y1) = self.support
        w = x1 - x0
        xs = np.linspace(x0 - 0.1 * w, x1 + 0.1 * w, n)
        ys = np.linspace(y0, y1, 21)
        v = self(xs[:, None], ys[None, :])
        off = (xs < x0) | (xs > x1)
        if np.any(v[off] != 0):
            return False
        if not self.derivative_bounds:
            return True
        dx = xs[1] - xs[0]
        est = [np.abs(v).max(), (np.abs(np.diff(v, axis=0)) / dx).max(), (np.abs(np.diff(v, 2, axis=0)) / dx**2).max()]
        return all(e <= b * (1 + slack) + 1e-12 for e, b in zip(est, self.derivative_bounds))


PHASE_KINDS = ("linear", "hyperbolic", "polynomial")


@dataclass(frozen=True)
class PhaseSpec:
    """Phase Phi(x, y) from a small catalogue and amplitude b on ``support``.

    ``polynomial`` uses ``coeffs[i][j]`` as the coefficient of x^i y^j.
    """

    kind: str
    support: Rect
    amplitude: Callable | None = None
    coeffs: tuple = ()
    scale: complex = 1.0
    min_mixed: float = 1e-6

    def __post_init__(self):
        if self.kind not in PHASE_KINDS:
            raise ConfigError("phase.kind", f"must be one of {PHASE_KINDS}, got {self.kind!r}")
        if self.kind == "polynomial":
            c = np.asarray(self.coeffs, float)
            if c.ndim != 2:
                raise ConfigError("phase.coeffs", "need a 2-d coefficient table")
            object.__setattr__(self, "coeffs", tuple(map(tuple, c)))

    @classmethod
    def linear(cls, support: Rect, amplitude=None, scale=1.0) -> "PhaseSpec":
        return cls("linear", support, amplitude, (), scale)

    def phase(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.kind == "linear":
            return -2 * np.pi * x * y
        if self.kind == "hyperbolic":
            return math.log(4) + 2 * np.log(np.abs(np.sin((x - y) / 2)))
        x, y = np.broadcast_arrays(x, y)
        return np.polynomial.polynomial.polyval2d(x, y, np.asarray(self.coeffs))

    def mixed(self, x, y):
        """d^2 Phi / dx dy in closed form."""
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        if self.kind == "linear":
            return np.full(np.broadcast(x, y).shape, -2 * np.pi)
        if self.kind == "hyperbolic":
            return 0.5 / np.sin((x - y) / 2) ** 2
        c = np.asarray(self.coeffs)
        d = np.polynomial.polynomial.polyder(np.polynomial.polynomial.polyder(c, axis=0), axis=1)
        x, y = np.broadcast_arrays(x, y)
        return np.polynomial.polynomial.polyval2d(x, y, d)

    def b(self, x, y):
        x = np.asarray(x, float)
        y = np.asarray(y, float)
        (x0, x1), (y0, y1) = self.support
        inside = (x >= x0) & (x <= x1) & (y >= y0) & (y <= y1)
        if self.scale == 0:
            return np.zeros(np.broadcast(x, y).shape)
        val = np.ones(np.broadcast(x, y).shape) if self.amplitude is None else self.amplitude(x, y)
        return np.where(inside, self.scale * val, 0.0)

    def check_nondegenerate(self, n: int = 64) -> float:
        """min |d^2 Phi/dx dy| on a grid over the support; raises if too small."""
        (x0, x1), (y0, y1) = self.support
        X, Y = np.meshgrid(np.linspace(x0, x1, n), np.linspace(y0, y1, n), indexing="ij")
        with np.errstate(divide="ignore", invalid="ignore"):
            m = np.abs(self.mixed(X, Y))
        lo = float(np.nanmin(m)) if np.isfinite(m).any() else 0.0
        if not np.all(np.isfinite(m)) or lo < self.min_mixed:
            raise DegeneratePhase(f"min |d2 Phi/dxdy| = {lo:.3g} on the support")
        return lo


# ---------------------------------------------------------------------------
# quadrature


def fattened_intervals(S, r: float) -> np.ndarray:
    """Merged intervals of S + [-r, r]; S is a RegularSetApprox or an (n, 2) array."""
    iv = S.intervals_float() if isinstance(S, RegularSetApprox) else np.asarray(S, float).reshape(-1, 2)
    if iv.size == 0:
        return iv
    iv = iv[np.argsort(iv[:, 0])]
    a = iv[:, 0] - r
    b = iv[:, 1] + r
    out = [[a[0], b[0]]]
    for lo, hi in zip(a[1:], b[1:]):
        if lo <= out[-1][1]:
            out[-1][1] = max(out[-1][1], hi)
        else:
            out.append([lo, hi])
    return np.array(out)


def clip_intervals(iv: np.ndarray, lo: float, hi: float) -> np.ndarray:
    if iv.size == 0:
        return iv
    a = np.maximum(iv[:, 0], lo)
    b = np.minimum(iv[:, 1], hi)
    keep = b > a
    return np.column_stack([a[keep], b[keep]])


def midpoint_nodes(iv: np.ndarray, spacing: float) -> tuple[np.ndarray, np.ndarray]:
    """Midpoint rule with step at most ``spacing`` on each interval."""
    xs, ws = [], []
    for a, b in np.asarray(iv, float).reshape(-1, 2):
        n = max(1, math.ceil((b - a) / spacing - 1e-9))
        step = (b - a) / n
        xs.append(a + step * (np.arange(n) + 0.5))
        ws.append(np.full(n, step))
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def _spacing(h: float, spacing: float | None) -> float:
    if spacing is None:
        return h / 10
    if spacing > h / 10 * (1 + 1e-12):
        raise GridTooCoarse(f"spacing {spacing:.3g} exceeds h/10 = {h / 10:.3g}")
    return float(spacing)


def _norm(K: np.ndarray) -> NormResult:
    if K.size == 0:
        return NormResult(0.0, "dense-SVD")
    method = "dense-SVD" if min(K.shape) <= 2000 else "arpack"
    return NormResult(top_singular(K), method)


def amplitude_restricted_norm(X, Y, h: float, spec: AmplitudeSpec, rho: float = 1.0, spacing: float | None = None) -> NormResult:
    """|| 1_{X(h^rho)} A(h) 1_{Y(h^rho)} || with A f(x) = h^(-1/2) int e^(2 pi i x xi/h) a(x, xi) f(xi) dxi."""
    sp = _spacing(h, spacing)
    r = h**rho
    (x0, x1), (y0, y1) = spec.support
    xi_ = clip_intervals(fattened_intervals(X, r), x0, x1)
    yi_ = clip_intervals(fattened_intervals(Y, r), y0, y1)
    xs, wx = midpoint_nodes(xi_, sp)
    ys, wy = midpoint_nodes(yi_, sp)
    if xs.size == 0 or ys.size == 0 or spec.scale == 0:
        return NormResult(0.0, "dense-SVD")
    K = np.exp(2j * np.pi * np.outer(xs, ys) / h) / math.sqrt(h)
    K *= spec(xs[:, None], ys[None, :])
    K *= np.sqrt(wx)[:, None] * np.sqrt(wy)[None, :]
    return _norm(K)


def phase_restricted_norm(X, Y, h: float, spec: PhaseSpec, rho: float = 1.0, spacing: float | None = None) -> NormResult:
    """|| 1_{X(h^rho)} B(h) 1_{Y(h^rho)} || with B f(x) = h^(-1/2) int e^(i Phi(x, y)/h) b(x, y) f(y) dy."""
    spec.check_nondegenerate()
    sp = _spacing(h, spacing)
    r = h**rho
    (x0, x1), (y0, y1) = spec.support
    xi_ = clip_intervals(fattened_intervals(X, r), x0, x1)
    yi_ = clip_intervals(fattened_intervals(Y, r), y0, y1)
    xs, wx = midpoint_nodes(xi_, sp)
    ys, wy = midpoint_nodes(yi_, sp)
    if xs.size == 0 or ys.size == 0 or spec.scale == 0:
        return NormResult(0.0, "dense-SVD")
    Xg, Yg = xs[:, None], ys[None, :]
    K = np.exp(1j * spec.phase(Xg, Yg) / h) * spec.b(Xg, Yg) / math.sqrt(h)
    K *= np.sqrt(wx)[:, None] * np.sqrt(wy)[None, :]
    return _norm(K)


# ---------------------------------------------------------------------------
# hyperbolic operator


def diagonal_distance(chi_support: Rect) -> float:
    """Distance from {theta - theta' : (theta, theta') in the rectangle} to 2 pi Z."""
    (a, b), (c, d) = chi_support
    lo, hi = a - d, b - c
    m0 = math.ceil(lo / (2 * math.pi))
    if 2 * math.pi * m0 <= hi:
        return 0.0
    return min(lo - 2 * math.pi * math.floor(lo / (2 * math.pi)), 2 * math.pi * m0 - hi)


def _lifted(iv: np.ndarray, lo: float, hi: float) -> np.ndarray:
    """Copies of angle intervals shifted by 2 pi k, clipped to [lo, hi]."""
    parts = []
    for k in (-2, -1, 0, 1, 2):
        c = clip_intervals(iv + 2 * math.pi * k, lo, hi)
        if c.size:
            parts.append(c)
    if not parts:
        return np.zeros((0, 2))
    out = np.concatenate(parts)
    return out[np.argsort(out[:, 0])]


def hyperbolic_norm(
    limit_set,
    h: float,
    chi_support: Rect,
    rho: float = 1.0,
    chi_scale: float = 1.0,
    min_gap: float = 0.05,
    spacing: float | None = None,
    chi: Callable | None = None,
) -> NormResult:
    """|| 1_{Lambda(h^rho)} B_chi(h) 1_{Lambda(h^rho)} || on the circle.

    Kernel (2 pi h)^(-1/2) exp(i Phi/h) chi(theta, theta') with
    Phi = log 4 + 2 log|sin((theta - theta')/2)|. The default chi is the
    tensor product of smooth bumps equal to 1 on the inner half of each side
    of ``chi_support``.
    """
    gap = diagonal_distance(chi_support)
    if gap < min_gap:
        raise SupportTouchesDiagonal(f"cutoff support comes within {gap:.3g} of the diagonal (need {min_gap})")
    sp = _spacing(h, spacing)
    r = h**rho
    (a, b), (c, d) = chi_support
    base = fattened_intervals(limit_set, r)
    rows = _lifted(base, a, b)
    cols = _lifted(base, c, d)
    xs, wx = midpoint_nodes(rows, sp)
    ys, wy = midpoint_nodes(cols, sp)
    if xs.size == 0 or ys.size == 0 or chi_scale == 0:
        return NormResult(0.0, "dense-SVD")
    Xg, Yg = xs[:, None], ys[None, :]
    if chi is None:
        cut = inner_half_bump(xs, a, b)[:, None] * inner_half_bump(ys, c, d)[None, :]
    else:
        cut = chi(Xg, Yg)
    phase = math.log(4) + 2 * np.log(np.abs(np.sin((Xg - Yg) / 2)))
    K = chi_scale * cut * np.exp(1j * phase / h) / math.sqrt(2 * math.pi * h)
    K *= np.sqrt(wx)[:, None] * np.sqrt(wy)[None, :]
    return _norm(K)


def arc_embedding(C: RegularSetApprox, offsets: Sequence[float] = (0.3, 0.3 + math.pi)) -> np.ndarray:
    """Angle intervals of copies of a [0, 1] set placed at the given offsets."""
    iv = C.intervals_float()
    return np.concatenate([iv + o for o in offsets])


def default_arc_chi(offsets: Sequence[float] = (0.3, 0.3 + math.pi), pad: float = 0.5) -> Rect:
    """Cutoff rectangle whose inner half covers both unit arcs."""
    return tuple((o - pad, o + 1 + pad) for o in offsets)


@dataclass(frozen=True)
class HyperbolicScan:
    ks: tuple
    hs: tuple
    norms: tuple
    beta: float
    stderr: float

    @property
    def monotone(self) -> bool:
        return all(b < a for a, b in zip(self.norms, self.norms[1:]))


def hyperbolic_scan(base: int, alphabet: Sequence[int], ks: Sequence[int], rho: float = 1.0) -> HyperbolicScan:
    """Norms of B_chi on a synthetic two-arc Cantor set at h = base^(-k)."""
    from .generators import CantorSpec, gen_cantor

    norms, hs = [], []
    rect = default_arc_chi()
    for k in ks:
        C = gen_cantor(CantorSpec(base, tuple(alphabet), k))
        h = float(base) ** (-k)
        norms.append(hyperbolic_norm(arc_embedding(C), h, rect, rho).value)
        hs.append(h)
    beta, se = fit_beta([1 / h for h in hs], norms)
    return HyperbolicScan(tuple(ks), tuple(hs), tuple(norms), beta, se)
