"""Finite-resolution delta-regular sets and the structure lemmas acting on them.

A set is stored as a sorted array of integer cell indices at base-L depth k
inside an affine frame: cell ``j`` is the closed interval

    [origin + scale * j / L**k, origin + scale * (j + 1) / L**k].

Each cell carries a positive weight and the measure is uniform inside a cell.
A frame with ``scale == 0`` encodes a single atom at ``origin``.
"""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Iterable, Sequence, Union

import numpy as np
from scipy.interpolate import CubicHermiteSpline

from .errors import (
    ChildCountViolation,
    ConfigError,
    DerivativeBoundViolated,
    EmptySetError,
    NoEmptyCell,
    PreconditionViolated,
    ResolutionTooCoarse,
)

Scale = Union[Fraction, float]
Interval = tuple  # (Fraction, Fraction)

_RTOL = 1e-9


def as_fraction(v) -> Fraction:
    """Exact rational from int, str ("p/q" or decimal), float or Fraction."""
    if isinstance(v, Fraction):
        return v
    if isinstance(v, (int, np.integer)):
        return Fraction(int(v))
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, (float, np.floating)):
        if not math.isfinite(v):
            raise ValueError(f"non-finite value {v!r}")
        return Fraction(repr(float(v)))
    raise TypeError(f"cannot convert {type(v).__name__} to Fraction")


def as_scale(v) -> Scale:
    """Like :func:`as_fraction` but lets +inf through."""
    if isinstance(v, (float, np.floating)) and math.isinf(v) and v > 0:
        return math.inf
    if isinstance(v, str) and v.strip().lower() in ("inf", "+inf", "infinity"):
        return math.inf
    return as_fraction(v)


def _fmt_rational(v: Scale) -> Union[int, str]:
    if isinstance(v, float):
        return "inf"
    if v.denominator == 1:
        return int(v.numerator)
    return f"{v.numerator}/{v.denominator}"


@dataclass(frozen=True)
class RegularityCertificate:
    """Regularity claim (delta, C_R, alpha0, alpha1) plus scan statistics.

    ``source`` records where the claim came from: ``"scan"`` for a direct
    verification, ``"lemma:<name>"`` for a constant propagated by a lemma and
    not yet re-scanned.
    """

    delta: float
    c_r: float
    alpha0: Scale
    alpha1: Scale
    verified: bool = False
    worst_ratio_upper: float = math.nan
    worst_ratio_lower: float = math.nan
    source: str = "scan"

    def __post_init__(self):
        if not 0.0 <= self.delta <= 1.0:
            raise ConfigError("delta", f"must lie in [0, 1], got {self.delta}")
        if not self.c_r >= 1.0:
            raise ConfigError("c_r", f"must be >= 1, got {self.c_r}")
        if self.alpha0 < 0 or self.alpha0 > self.alpha1:
            raise ConfigError("alpha", f"need 0 <= alpha0 <= alpha1, got {self.alpha0}, {self.alpha1}")
        if self.verified:
            ok = self.worst_ratio_upper <= self.c_r * (1 + _RTOL) and self.worst_ratio_lower >= (1 - _RTOL) / self.c_r
            if not ok:
                raise ValueError("verified certificate with ratios outside [1/C_R, C_R]")

    def claim(self, **changes) -> "RegularityCertificate":
        """Unverified copy with some fields replaced."""
        changes.setdefault("verified", False)
        changes.setdefault("worst_ratio_upper", math.nan)
        changes.setdefault("worst_ratio_lower", math.nan)
        return replace(self, **changes)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "c_r": self.c_r,
            "alpha0": _fmt_rational(self.alpha0),
            "alpha1": _fmt_rational(self.alpha1),
            "verified": self.verified,
            "worst_ratio_upper": None if math.isnan(self.worst_ratio_upper) else self.worst_ratio_upper,
            "worst_ratio_lower": None if math.isnan(self.worst_ratio_lower) else self.worst_ratio_lower,
            "source": self.source,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RegularityCertificate":
        wu = d.get("worst_ratio_upper")
        wl = d.get("worst_ratio_lower")
        return cls(
            delta=float(d["delta"]),
            c_r=float(d["c_r"]),
            alpha0=as_scale(d["alpha0"]),
            alpha1=as_scale(d["alpha1"]),
            verified=bool(d.get("verified", False)),
            worst_ratio_upper=math.nan if wu is None else float(wu),
            worst_ratio_lower=math.nan if wl is None else float(wl),
            source=d.get("source", "scan"),
        )


@dataclass(frozen=True, eq=False)
class RegularSetApprox:
    """Union of base-L cells in an affine frame, with a cellwise-uniform measure."""

    base: int
    depth: int
    cells: np.ndarray
    weights: np.ndarray
    origin: Fraction = Fraction(0)
    scale: Fraction = Fraction(1)
    cert: RegularityCertificate | None = None

    def __post_init__(self):
        if int(self.base) < 2:
            raise ConfigError("base", f"must be >= 2, got {self.base}")
        if int(self.depth) < 0:
            raise ConfigError("depth", f"must be >= 0, got {self.depth}")
        cells = np.asarray(self.cells, dtype=np.int64).reshape(-1)
        weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
        if cells.shape != weights.shape:
            raise ValueError("cells and weights differ in length")
        if cells.size > 1 and np.any(np.diff(cells) <= 0):
            raise ValueError("cells must be strictly increasing")
        if np.any(~(weights > 0)):
            raise ValueError("weights must be positive")
        scale = as_fraction(self.scale)
        if scale < 0:
            raise ValueError("frame scale must be nonnegative")
        if scale == 0 and cells.size > 1:
            raise ValueError("a degenerate frame holds a single atom")
        cells.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "base", int(self.base))
        object.__setattr__(self, "depth", int(self.depth))
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "weights", weights)
        object.__setattr__(self, "origin", as_fraction(self.origin))
        object.__setattr__(self, "scale", scale)

    # basic geometry -----------------------------------------------------

    @classmethod
    def point(cls, p=0, mass: float = 1.0, base: int = 2, cert=None) -> "RegularSetApprox":
        return cls(base, 0, np.array([0]), np.array([mass]), as_fraction(p), Fraction(0), cert)

    @property
    def is_degenerate(self) -> bool:
        return self.scale == 0

    @property
    def is_empty(self) -> bool:
        return self.cells.size == 0

    @property
    def cell_size(self) -> Fraction:
        return self.scale / Fraction(self.base) ** self.depth

    @property
    def total_mass(self) -> float:
        return float(self.weights.sum())

    def with_cert(self, cert: RegularityCertificate | None) -> "RegularSetApprox":
        return replace(self, cert=cert)

    def cell_left(self, j: int) -> Fraction:
        return self.origin + self.cell_size * int(j)

    def runs(self) -> list[tuple[int, int]]:
        """Maximal runs of consecutive cell indices as (first, last) pairs."""
        if self.is_empty:
            return []
        c = self.cells
        breaks = np.nonzero(np.diff(c) > 1)[0]
        starts = np.concatenate([[0], breaks + 1])
        ends = np.concatenate([breaks, [c.size - 1]])
        return [(int(c[s]), int(c[e])) for s, e in zip(starts, ends)]

    def intervals(self) -> list[Interval]:
        """Merged closed intervals (exact) making up the set."""
        if self.is_degenerate:
            return [] if self.is_empty else [(self.origin, self.origin)]
        return [(self.cell_left(a), self.cell_left(b + 1)) for a, b in self.runs()]

    def intervals_float(self) -> np.ndarray:
        if self.is_empty:
            return np.zeros((0, 2))
        if self.is_degenerate:
            o = float(self.origin)
            return np.array([[o, o]])
        runs = np.array(self.runs(), dtype=np.float64)
        c = float(self.cell_size)
        o = float(self.origin)
        return np.column_stack([o + c * runs[:, 0], o + c * (runs[:, 1] + 1)])

    def hull(self) -> Interval:
        if self.is_empty:
            raise EmptySetError("empty set has no hull")
        return (self.cell_left(self.cells[0]), self.cell_left(self.cells[-1] + 1))

    def lebesgue_measure(self) -> float:
        return float(self.cells.size * self.cell_size)

    # measure -------------------------------------------------------------

    def _cumulative(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.weights)])

    def cdf_units(self, u) -> np.ndarray:
        """mu((-inf, origin + u * cell_size]) for u in cell units."""
        u = np.asarray(u, dtype=np.float64)
        if self.is_empty:
            return np.zeros_like(u)
        cells = self.cells.astype(np.float64)
        cum = self._cumulative()
        i = np.searchsorted(cells, u, side="right") - 1
        ic = np.clip(i, 0, cells.size - 1)
        inside = np.clip(u - cells[ic], 0.0, 1.0)
        out = cum[ic] + self.weights[ic] * inside
        return np.where(i < 0, 0.0, out)

    def measure(self, a, b) -> np.ndarray:
        """mu([a, b]) for absolute endpoints (vectorised)."""
        a = np.asarray(a, dtype=np.float64)
        b = np.asarray(b, dtype=np.float64)
        if self.is_degenerate:
            p = float(self.origin)
            return np.where((a <= p) & (p <= b), self.total_mass, 0.0)
        c = float(self.cell_size)
        o = float(self.origin)
        return self.cdf_units((b - o) / c) - self.cdf_units((a - o) / c)

    # refinement ------------------------------------------------------------

    def refine(self, d: int) -> "RegularSetApprox":
        """Same set and measure written at depth k + d."""
        if d == 0 or self.is_degenerate:
            return self
        m = self.base**d
        cells = (self.cells[:, None] * m + np.arange(m)[None, :]).reshape(-1)
        weights = np.repeat(self.weights / m, m)
        return replace(self, depth=self.depth + d, cells=cells, weights=weights)

    def _depth_for(self, points: Iterable[Fraction], max_extra: int = 12) -> int | None:
        """Smallest refinement putting every point on the cell grid."""
        pts = [as_fraction(p) for p in points]
        for d in range(max_extra + 1):
            c = self.cell_size / Fraction(self.base) ** d
            if all(((p - self.origin) / c).denominator == 1 for p in pts):
                return d
        return None

    # serialisation ------------------------------------------------------

    def to_dict(self) -> dict:
        d = {
            "base": self.base,
            "depth": self.depth,
            "frame": {"origin": _fmt_rational(self.origin), "scale": _fmt_rational(self.scale)},
            "cells": [int(c) for c in self.cells],
            "weights": [float(w) for w in self.weights],
        }
        if self.cert is not None:
            d["certificate"] = self.cert.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RegularSetApprox":
        for key in ("base", "depth", "cells"):
            if key not in d:
                raise ConfigError(key, "missing")
        frame = d.get("frame", {})
        cells = np.asarray(d["cells"], dtype=np.int64)
        weights = d.get("weights")
        if weights is None:
            weights = np.full(cells.size, 1.0 / max(cells.size, 1))
        cert = d.get("certificate")
        return cls(
            base=int(d["base"]),
            depth=int(d["depth"]),
            cells=cells,
            weights=np.asarray(weights, dtype=np.float64),
            origin=as_fraction(frame.get("origin", 0)),
            scale=as_fraction(frame.get("scale", 1)),
            cert=None if cert is None else RegularityCertificate.from_dict(cert),
        )

    def same_points(self, other: "RegularSetApprox") -> bool:
        """Equal as point sets (exact)."""
        return self.intervals() == other.intervals()


# ---------------------------------------------------------------------------
# verification


def _scan_sizes(a0: float, a1: float, base: int, ratio: float = 2.0) -> np.ndarray:
    """Test sizes in cell units: geometric progression plus powers of the base."""
    sizes = []
    s = a0
    while s < a1 * (1 - 1e-12):
        sizes.append(s)
        s *= ratio
    sizes.append(a1)
    p = 1.0
    while p <= a1 * (1 + 1e-12):
        if p >= a0 * (1 - 1e-12):
            sizes.append(p)
        p *= base
    return np.unique(np.asarray(sizes))


def _upper_ratio(set_: RegularSetApprox, s: float) -> float:
    """sup over all real positions of mu(I) for |I| = s (cell units).

    mu([l, l + s]) is piecewise linear in l with breaks where an endpoint hits
    a cell edge, so the sup is attained with l or l + s on an edge.
    """
    edges = np.unique(np.concatenate([set_.cells, set_.cells + 1]).astype(np.float64))
    lefts = np.concatenate([edges, edges - s])
    return float(np.max(set_.cdf_units(lefts + s) - set_.cdf_units(lefts)))


def _lower_ratio(set_: RegularSetApprox, s: float, exact: bool) -> float:
    """min of mu(I) over intervals of size s centred on the set.

    With ``exact`` the minimum is over every centre in the set (breakpoint
    search); otherwise over cell midpoints only.
    """
    cells = set_.cells.astype(np.float64)
    centres = cells + 0.5
    if exact:
        edges = np.unique(np.concatenate([cells, cells + 1]))
        cand = np.concatenate([edges, edges - s / 2, edges + s / 2, centres])
        i = np.searchsorted(cells, cand, side="right") - 1
        ok = (i >= 0) & (cand <= cells[np.clip(i, 0, None)] + 1)
        centres = cand[ok]
    return float(np.min(set_.cdf_units(centres + s / 2) - set_.cdf_units(centres - s / 2)))


def scan_ratios(
    set_: RegularSetApprox,
    delta: float,
    alpha0: Scale,
    alpha1: Scale,
    size_ratio: float = 2.0,
    exact_centres: bool = False,
) -> tuple[float, float]:
    """(max mu(I)/|I|^delta, min over centred I of mu(I)/|I|^delta)."""
    if set_.is_empty:
        raise EmptySetError("set has no cells")
    mass = set_.total_mass
    if set_.is_degenerate:
        a0 = float(alpha0)
        a1 = float(alpha1)
        up = mass if delta == 0 else (math.inf if a0 == 0 else mass / a0**delta)
        lo = mass if delta == 0 else (0.0 if math.isinf(a1) else mass / a1**delta)
        return up, lo
    c = float(set_.cell_size)
    a0 = float(alpha0) / c
    span = float(set_.cells[-1] + 1 - set_.cells[0])
    infinite_top = isinstance(alpha1, float) and math.isinf(alpha1)
    a1 = 4.0 * span + 4.0 if infinite_top else float(alpha1) / c
    a1 = max(a1, a0)
    up = 0.0
    lo = math.inf
    for s in _scan_sizes(a0, a1, set_.base, size_ratio):
        norm = (s * c) ** delta
        up = max(up, _upper_ratio(set_, s) / norm)
        lo = min(lo, _lower_ratio(set_, s, exact_centres) / norm)
    if infinite_top and delta > 0:
        lo = 0.0
    return up, lo


def verify_regularity(set_: RegularSetApprox, delta: float, c_r: float, alpha0, alpha1) -> RegularityCertificate:
    """Scan test intervals and certify delta-regularity with constant c_r.

    Upper bounds are checked at every real position (exact sup of a
    piecewise-linear function); lower bounds on intervals centred at cell
    midpoints. Sizes run in a ratio-2 progression from alpha0 to alpha1 plus
    the powers of the base in between.
    """
    delta = float(delta)
    if not 0.0 <= delta <= 1.0:
        raise ConfigError("delta", f"must lie in [0, 1], got {delta}")
    if not c_r >= 1.0:
        raise ConfigError("c_r", f"must be >= 1, got {c_r}")
    alpha0 = as_scale(alpha0)
    alpha1 = as_scale(alpha1)
    if alpha0 > alpha1:
        raise ConfigError("alpha", "alpha0 exceeds alpha1")
    if set_.is_empty:
        raise EmptySetError("set has no cells")
    if not set_.is_degenerate and alpha0 < set_.cell_size:
        raise ResolutionTooCoarse(f"alpha0={alpha0} below cell size {set_.cell_size}")
    up, lo = scan_ratios(set_, delta, alpha0, alpha1)
    ok = bool(up <= c_r * (1 + _RTOL) and lo >= (1 - _RTOL) / c_r)
    return RegularityCertificate(delta, float(c_r), alpha0, alpha1, ok, float(up), float(lo), "scan")


def measured_constant(set_: RegularSetApprox, delta: float, alpha0, alpha1, size_ratio: float = 2 ** 0.125) -> float:
    """Smallest C_R passing a dense scan (fine size ratio, every centre)."""
    up, lo = scan_ratios(set_, delta, as_scale(alpha0), as_scale(alpha1), size_ratio, exact_centres=True)
    return max(1.0, up, 1.0 / lo if lo > 0 else math.inf)


def recheck(set_: RegularSetApprox, cert: RegularityCertificate | None = None) -> RegularityCertificate:
    """Re-run :func:`verify_regularity` against the set's own (or given) claim."""
    cert = cert or set_.cert
    if cert is None:
        raise PreconditionViolated("certificate", "set carries no certificate")
    return verify_regularity(set_, cert.delta, cert.c_r, cert.alpha0, cert.alpha1)


def _need_cert(set_: RegularSetApprox) -> RegularityCertificate:
    if set_.cert is None:
        raise PreconditionViolated("certificate", "set carries no certificate")
    return set_.cert


# ---------------------------------------------------------------------------
# transformation lemmas


def affine_map(set_: RegularSetApprox, lam, y, delta: float | None = None) -> RegularSetApprox:
    """y + lam * X with measure lam**delta * mu((A - y) / lam)."""
    lam = as_fraction(lam)
    y = as_fraction(y)
    if lam <= 0:
        raise ConfigError("lambda", "must be positive")
    if lam == 1 and y == 0:
        return set_
    if delta is None:
        delta = set_.cert.delta if set_.cert is not None else 0.0
    cert = None
    if set_.cert is not None:
        c = set_.cert
        top = c.alpha1 if isinstance(c.alpha1, float) else lam * c.alpha1
        cert = c.claim(alpha0=lam * c.alpha0, alpha1=top, source="lemma:scale")
    return replace(
        set_,
        weights=set_.weights * float(lam) ** delta,
        origin=y + lam * set_.origin,
        scale=lam * set_.scale,
        cert=cert,
    )


def raise_upper_scale(cert: RegularityCertificate, T) -> RegularityCertificate:
    """Same set viewed on scales [alpha0, T alpha1] with constant 2 T C_R."""
    T = as_fraction(T)
    if T < 1:
        raise ConfigError("T", "must be >= 1")
    if not cert.verified:
        raise PreconditionViolated("cert.verified", "input certificate is not verified")
    top = cert.alpha1 if isinstance(cert.alpha1, float) else T * cert.alpha1
    return cert.claim(c_r=2 * float(T) * cert.c_r, alpha1=top, source="lemma:expand-top")


def neighborhood(set_: RegularSetApprox, T=1, alpha0=None) -> RegularSetApprox:
    """X + [-T alpha0, T alpha0] with the convolved measure.

    The measure is mu convolved with the density 1/(T alpha0) on
    [-T alpha0, T alpha0], so total mass doubles. The radius is placed on the
    cell grid by refining when possible, else rounded up to whole cells.
    """
    T = as_fraction(T)
    if T < 1:
        raise ConfigError("T", "must be >= 1")
    cert = set_.cert
    if alpha0 is None:
        if cert is None:
            raise PreconditionViolated("certificate", "alpha0 needed")
        alpha0 = cert.alpha0
    alpha0 = as_fraction(alpha0)
    if cert is not None and cert.alpha1 < 2 * cert.alpha0:
        raise PreconditionViolated("alpha1 >= 2 alpha0", f"alpha0={cert.alpha0}, alpha1={cert.alpha1}")
    radius = T * alpha0
    new_cert = None
    if cert is not None:
        new_cert = cert.claim(c_r=4 * float(T) * cert.c_r, alpha0=2 * cert.alpha0, source="lemma:fatten")
    if set_.is_empty:
        raise EmptySetError("set has no cells")
    if set_.is_degenerate:
        return RegularSetApprox(
            set_.base, 0, np.array([0]), np.array([2 * set_.total_mass]),
            set_.origin - radius, 2 * radius, new_cert,
        )
    d = set_._depth_for([set_.origin + radius], max_extra=8)
    fine = set_.refine(d or 0)
    r_units = radius / fine.cell_size
    r = int(r_units) if r_units.denominator == 1 else math.ceil(r_units)
    r = max(r, 1)
    lo = int(fine.cells[0])
    dense = np.zeros(int(fine.cells[-1]) - lo + 1)
    dense[fine.cells - lo] = fine.weights
    kern = np.full(2 * r + 1, 1.0 / r)
    kern[0] = kern[-1] = 0.5 / r
    conv = np.convolve(dense, kern)
    nz = np.nonzero(conv > 0)[0]
    return replace(fine, cells=nz + lo - r, weights=conv[nz], cert=new_cert)


@dataclass(frozen=True)
class MonotoneMap:
    """A C^1 monotone map given by a sampled table (x, F(x), F'(x))."""

    xs: np.ndarray
    values: np.ndarray
    derivs: np.ndarray
    exact: Callable | None = field(default=None, compare=False)

    def __post_init__(self):
        xs = np.asarray(self.xs, float)
        if xs.ndim != 1 or xs.size < 2 or np.any(np.diff(xs) <= 0):
            raise ValueError("xs must be strictly increasing with >= 2 samples")
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "values", np.asarray(self.values, float))
        object.__setattr__(self, "derivs", np.asarray(self.derivs, float))

    @classmethod
    def from_function(cls, f, df, a: float, b: float, n: int = 257) -> "MonotoneMap":
        xs = np.linspace(a, b, n)
        return cls(xs, f(xs), df(xs), exact=f)

    @classmethod
    def identity(cls, a: float, b: float) -> "MonotoneMap":
        return cls.from_function(lambda x: np.asarray(x, float), np.ones_like, a, b, 2)

    def __call__(self, x):
        if self.exact is not None:
            return np.asarray(self.exact(np.asarray(x, float)), float)
        return CubicHermiteSpline(self.xs, self.values, self.derivs)(x)


def nonlinear_image(set_: RegularSetApprox, F: MonotoneMap, c_f: float, extra_depth: int | None = None) -> RegularSetApprox:
    """F(X) with the pushforward measure, cells rounded outward.

    Image cells are covered by the frame's grid refined ``extra_depth`` times
    (default: enough that one refined cell is at most a quarter of the
    smallest image cell). Each source cell's mass is spread over the
    refined cells in proportion to overlap.
    """
    c_f = float(c_f)
    if c_f < 1:
        raise ConfigError("C_F", "must be >= 1")
    cert = set_.cert
    if cert is not None and cert.alpha1 < Fraction(repr(c_f * c_f)) * as_fraction(cert.alpha0):
        raise PreconditionViolated("alpha1 >= C_F^2 alpha0", f"alpha0={cert.alpha0}, alpha1={cert.alpha1}")
    ad = np.abs(F.derivs)
    if np.any(ad < (1 - 1e-12) / c_f) or np.any(ad > c_f * (1 + 1e-12)):
        raise DerivativeBoundViolated(f"|F'| samples span [{ad.min():.6g}, {ad.max():.6g}] outside [1/{c_f}, {c_f}]")
    if set_.is_empty:
        raise EmptySetError("set has no cells")
    new_cert = None
    if cert is not None:
        top = cert.alpha1 if isinstance(cert.alpha1, float) else as_fraction(cert.alpha1) / Fraction(repr(c_f))
        new_cert = cert.claim(
            c_r=c_f * cert.c_r, alpha0=Fraction(repr(c_f)) * as_fraction(cert.alpha0), alpha1=top, source="lemma:nonlinear"
        )
    lo, hi = (float(v) for v in set_.hull())
    if lo < F.xs[0] - 1e-12 or hi > F.xs[-1] + 1e-12:
        raise PreconditionViolated("domain", f"map table [{F.xs[0]}, {F.xs[-1]}] does not cover hull [{lo}, {hi}]")
    if set_.is_degenerate:
        p = as_fraction(float(F(float(set_.origin))))
        return replace(set_, origin=p, cert=new_cert)
    if extra_depth is None:
        extra_depth = max(0, math.ceil(math.log(4 * c_f) / math.log(set_.base) - 1e-12))
    c = float(set_.cell_size)
    o = float(set_.origin)
    fine_c = c / set_.base**extra_depth
    left = F(o + c * set_.cells)
    right = F(o + c * (set_.cells + 1))
    p = (np.minimum(left, right) - o) / fine_c
    q = (np.maximum(left, right) - o) / fine_c
    first = np.floor(p + 1e-9).astype(np.int64)
    last = np.ceil(q - 1e-9).astype(np.int64) - 1
    last = np.maximum(last, first)
    counts = last - first + 1
    owner = np.repeat(np.arange(first.size), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    idx = first[owner] + offs
    overlap = np.minimum(idx + 1, q[owner]) - np.maximum(idx, p[owner])
    overlap = np.clip(overlap, 0.0, None)
    length = (q - p)[owner]
    frac = np.where(length > 0, overlap / np.where(length > 0, length, 1.0), 1.0 / counts[owner])
    mass = set_.weights[owner] * frac
    uniq, inv = np.unique(idx, return_inverse=True)
    w = np.bincount(inv, weights=mass)
    keep = w > 0
    return replace(
        set_, depth=set_.depth + extra_depth, cells=uniq[keep], weights=w[keep], cert=new_cert
    )


def _restrict_cells(set_: RegularSetApprox, mask: np.ndarray, cert) -> RegularSetApprox:
    return replace(set_, cells=set_.cells[mask], weights=set_.weights[mask], cert=cert)


def _overlap_mask(set_: RegularSetApprox, a: Fraction, b: Fraction) -> np.ndarray:
    """Cells with positive-length overlap with [a, b] (atoms: closed test)."""
    if set_.is_degenerate:
        return np.array([a <= set_.origin <= b] * set_.cells.size, dtype=bool)
    ua = (a - set_.origin) / set_.cell_size
    ub = (b - set_.origin) / set_.cell_size
    # j + 1 > ua  <=>  j >= floor(ua);  j < ub  <=>  j <= ceil(ub) - 1
    return (set_.cells >= math.floor(ua)) & (set_.cells <= math.ceil(ub) - 1)


def intersect_interval(set_: RegularSetApprox, J, Jp) -> RegularSetApprox:
    """X intersected with J, certified with the same C_R on [alpha0, min(alpha1, |J'| - |J|)].

    Intersections use positive-length overlap for cells, so a cell touching J'
    only at an endpoint does not count as lying in J'.
    """
    cert = _need_cert(set_)
    a, b = (as_fraction(v) for v in J)
    ap, bp = (as_fraction(v) for v in Jp)
    if not (ap <= a and b <= bp):
        raise PreconditionViolated("J subset of J'", f"J=[{a}, {b}], J'=[{ap}, {bp}]")
    if a + b != ap + bp:
        raise PreconditionViolated("same center", f"J=[{a}, {b}], J'=[{ap}, {bp}]")
    gap = (bp - ap) - (b - a)
    if gap < cert.alpha0 or gap == 0:
        raise PreconditionViolated("|J'| - |J| >= alpha0", f"|J'| - |J| = {gap}, alpha0 = {cert.alpha0}")
    work = set_
    if not set_.is_degenerate:
        d = set_._depth_for([a, b])
        if d is None:
            raise PreconditionViolated("J on grid", "endpoints of J are not representable at this base")
        work = set_.refine(d)
    in_j = _overlap_mask(work, a, b)
    if not in_j.any():
        raise PreconditionViolated("X cap J nonempty")
    in_jp = _overlap_mask(work, ap, bp)
    if np.any(in_jp & ~in_j):
        raise PreconditionViolated("X cap J' subset of J")
    top = gap if isinstance(cert.alpha1, float) else min(as_fraction(cert.alpha1), gap)
    new_cert = cert.claim(alpha1=top, source="lemma:intersection")
    return _restrict_cells(work, in_j, new_cert)


# ---------------------------------------------------------------------------
# structure lemmas


def missingint_threshold(cert: RegularityCertificate) -> float:
    """(3 C_R)^(2/(1 - delta)); infinite for delta = 1."""
    if cert.delta >= 1:
        return math.inf
    return (3 * cert.c_r) ** (2 / (1 - cert.delta))


def split_threshold(cert: RegularityCertificate) -> float:
    """(4 C_R)^(2/(1 - delta)); infinite for delta = 1."""
    if cert.delta >= 1:
        return math.inf
    return (4 * cert.c_r) ** (2 / (1 - cert.delta))


def _meets_closed(set_: RegularSetApprox, p: Fraction, q: Fraction) -> bool:
    """Does the closed interval [p, q] meet the (closed) set?"""
    if set_.is_degenerate:
        return p <= set_.origin <= q
    up = (p - set_.origin) / set_.cell_size
    uq = (q - set_.origin) / set_.cell_size
    lo = math.ceil(up) - 1
    hi = math.floor(uq)
    i = bisect.bisect_left(set_.cells, lo)
    return i < set_.cells.size and set_.cells[i] <= hi


def missing_subinterval(set_: RegularSetApprox, I, L_part: int) -> int:
    """Smallest l in 1..L_part with X disjoint from the l-th closed subinterval of I."""
    a, b = (as_fraction(v) for v in I)
    L_part = int(L_part)
    if L_part < 1 or b <= a:
        raise ConfigError("I", "need b > a and L_part >= 1")
    step = (b - a) / L_part
    for ell in range(1, L_part + 1):
        if not _meets_closed(set_, a + (ell - 1) * step, a + ell * step):
            return ell
    held = False
    cert = set_.cert
    if cert is not None:
        held = L_part >= missingint_threshold(cert) and cert.alpha0 <= step and (b - a) <= cert.alpha1
    raise NoEmptyCell(f"all {L_part} subintervals of [{a}, {b}] meet the set", held)


def _positive_cover(set_: RegularSetApprox, rho: Fraction, a=None, b=None) -> list[int]:
    """Indices j with rho[j, j+1] meeting X (cut to [a, b]) in positive length."""
    out: set[int] = set()
    if set_.is_degenerate:
        p = set_.origin
        if (a is None or a <= p) and (b is None or p <= b):
            out.add(math.floor(p / rho))
            if (p / rho).denominator == 1:
                out.add(int(p / rho) - 1)
        return sorted(out)
    for lo, hi in set_.intervals():
        if a is not None:
            lo = max(lo, a)
        if b is not None:
            hi = min(hi, b)
        if hi <= lo:
            continue
        out.update(range(math.floor(lo / rho), math.ceil(hi / rho)))
    return sorted(out)


def cover_count(set_: RegularSetApprox, I, rho) -> tuple[list[Interval], int]:
    """Grid intervals rho[j, j+1] meeting X cap I, and their number."""
    a, b = (as_fraction(v) for v in I)
    rho = as_fraction(rho)
    js = _positive_cover(set_, rho, a, b)
    return [(rho * j, rho * (j + 1)) for j in js], len(js)


def cover_bound(cert: RegularityCertificate, I, rho) -> float:
    """12 C_R^2 (|I| / rho)^delta."""
    a, b = (as_fraction(v) for v in I)
    return 12 * cert.c_r**2 * float((b - a) / as_fraction(rho)) ** cert.delta


def split_regular(set_: RegularSetApprox, rho, L_part: int | None = None, strict: bool = True) -> list[RegularSetApprox]:
    """Split X into pieces X cap J of diameter at most rho.

    The J start as maximal runs of grid cells (rho/L_part)[l, l+1] meeting X
    (positive-length overlap); adjacent runs are then merged left to right
    while the merged hull stays within rho. Neighbouring grid cells of each J
    are empty, which is what the certificate of every piece rests on.
    """
    cert = _need_cert(set_)
    rho = as_fraction(rho)
    thr = split_threshold(cert)
    if strict and not (thr * float(cert.alpha0) <= float(rho) * (1 + 1e-12) and rho <= cert.alpha1):
        raise PreconditionViolated("(4 C_R)^(2/(1-delta)) alpha0 <= rho <= alpha1", f"rho={rho}")
    if L_part is None:
        t3 = missingint_threshold(cert)
        L_part = math.ceil(t3) if math.isfinite(t3) else 1
    grid = rho / int(L_part)
    js = _positive_cover(set_, grid)
    if not js:
        raise EmptySetError("set has no cells")
    runs: list[list[int]] = [[js[0], js[0]]]
    for j in js[1:]:
        if j == runs[-1][1] + 1:
            runs[-1][1] = j
        else:
            runs.append([j, j])
    blocks: list[list[int]] = [runs[0][:]]
    for lo, hi in runs[1:]:
        if (hi + 1 - blocks[-1][0]) * grid <= rho:
            blocks[-1][1] = hi
        else:
            blocks.append([lo, hi])
    c_new = thr * cert.c_r if math.isfinite(thr) else math.inf
    piece_cert = None
    if math.isfinite(c_new):
        piece_cert = cert.claim(c_r=c_new, alpha1=rho, source="lemma:split")
    pieces = []
    taken = np.zeros(set_.cells.size, dtype=bool)
    for lo, hi in blocks:
        # cells belong to the block containing their left part
        m = _overlap_mask(set_, grid * lo, grid * (hi + 1)) & ~taken
        if not m.any():
            continue
        taken |= m
        pieces.append(_restrict_cells(set_, m, piece_cert))
    return pieces


def lebesgue_bound(set_: RegularSetApprox) -> tuple[float, float]:
    """(Lebesgue measure of X, 24 C_R^2 alpha1^delta alpha0^(1-delta))."""
    cert = _need_cert(set_)
    if cert.alpha0 <= 0 or isinstance(cert.alpha1, float):
        raise PreconditionViolated("0 < alpha0 and finite alpha1")
    bound = 24 * cert.c_r**2 * float(cert.alpha1) ** cert.delta * float(cert.alpha0) ** (1 - cert.delta)
    return set_.lebesgue_measure(), bound


def tree_level(set_: RegularSetApprox, n: int, L: int | None = None) -> list[int]:
    """V_n(X): indices j with [j/L^n, (j+1)/L^n] meeting X (closed)."""
    L = L or set_.base
    s = Fraction(L) ** n
    out: set[int] = set()
    for lo, hi in set_.intervals():
        out.update(range(math.ceil(lo * s) - 1, math.floor(hi * s) + 1))
    return sorted(out)


def tree_children(set_: RegularSetApprox, n: int, L: int | None = None) -> dict[int, list[int]]:
    """V_n(X) -> V_{n+1}(X) adjacency; raises if some parent has all L children."""
    L = int(L or set_.base)
    parents = tree_level(set_, n, L)
    kids = tree_level(set_, n + 1, L)
    out: dict[int, list[int]] = {p: [] for p in parents}
    for k in kids:
        out[k // L].append(k)
    full = [p for p, ch in out.items() if len(ch) >= L]
    if full:
        cert = set_.cert
        held = False
        if cert is not None:
            held = (
                L >= missingint_threshold(cert)
                and cert.alpha0 <= Fraction(1, L ** (n + 1))
                and Fraction(1, L**n) <= cert.alpha1
            )
        raise ChildCountViolation(f"{len(full)} parent(s) at level {n} have all {L} children", full, held)
    return out


def pieces_disjoint(pieces: Sequence[RegularSetApprox]) -> bool:
    """Pieces are pairwise disjoint as cell sets (same frame)."""
    seen: set[int] = set()
    for p in pieces:
        s = set(int(c) for c in p.cells)
        if seen & s:
            return False
        seen |= s
    return True
