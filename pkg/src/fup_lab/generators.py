"""Canonical regular inputs: base-L Cantor sets and Schottky limit-set covers."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from typing import Sequence

import numpy as np

from .errors import ConfigError, DiskOverlapError, InsufficientScales
from .regular_sets import (
    RegularityCertificate,
    RegularSetApprox,
    _positive_cover,
    as_fraction,
    measured_constant,
    verify_regularity,
)

CONSTANT_DEPTH = 3


@dataclass(frozen=True)
class CantorSpec:
    """Words of length ``depth`` over ``alphabet`` in base ``base``."""

    base: int
    alphabet: tuple
    depth: int

    def __post_init__(self):
        if int(self.base) < 2:
            raise ConfigError("base", f"must be >= 2, got {self.base}")
        alpha = tuple(sorted(set(int(a) for a in self.alphabet)))
        if not alpha:
            raise ConfigError("alphabet", "must be nonempty")
        bad = [a for a in alpha if not 0 <= a < int(self.base)]
        if bad:
            raise ConfigError("alphabet", f"digits {bad} outside 0..{int(self.base) - 1}")
        if int(self.depth) < 1:
            raise ConfigError("depth", f"must be >= 1, got {self.depth}")
        object.__setattr__(self, "base", int(self.base))
        object.__setattr__(self, "alphabet", alpha)
        object.__setattr__(self, "depth", int(self.depth))

    @property
    def delta(self) -> float:
        return math.log(len(self.alphabet)) / math.log(self.base)

    def at_depth(self, k: int) -> "CantorSpec":
        return CantorSpec(self.base, self.alphabet, k)

    @classmethod
    def parse(cls, text: str, depth: int | None = None) -> "CantorSpec":
        """Parse ``"L:a,b,c"`` or ``"L:a,b,c:k"``."""
        parts = text.split(":")
        if len(parts) not in (2, 3):
            raise ConfigError("cantor", f"expected L:digits[:depth], got {text!r}")
        try:
            base = int(parts[0])
            alphabet = tuple(int(a) for a in parts[1].split(",") if a.strip() != "")
            k = int(parts[2]) if len(parts) == 3 else depth
        except ValueError as exc:
            raise ConfigError("cantor", f"cannot parse {text!r}: {exc}") from None
        if k is None:
            raise ConfigError("cantor.depth", "depth missing")
        return cls(base, alphabet, k)


def cantor_cells(base: int, alphabet: Sequence[int], depth: int) -> np.ndarray:
    """Sorted indices of all depth-k words over the alphabet."""
    a = np.asarray(sorted(alphabet), dtype=np.int64)
    cells = np.zeros(1, dtype=np.int64)
    for _ in range(depth):
        cells = (cells[:, None] * base + a[None, :]).reshape(-1)
    return cells


@lru_cache(maxsize=None)
def cantor_constant(base: int, alphabet: tuple) -> float:
    """C_R of the self-similar Cantor measure, measured once at small depth.

    Uses a dense scan (size ratio 2^(1/8), every centre) on scales
    [L^-3, 1]; self-similarity makes the value reusable at every depth.
    """
    spec = CantorSpec(base, alphabet, CONSTANT_DEPTH)
    cells = cantor_cells(base, spec.alphabet, CONSTANT_DEPTH)
    s = RegularSetApprox(base, CONSTANT_DEPTH, cells, np.full(cells.size, 1.0 / cells.size))
    c = measured_constant(s, spec.delta, Fraction(1, base**CONSTANT_DEPTH), Fraction(1))
    # round up in the 4th significant digit; exact values such as 2 stay put
    mag = 10 ** (math.floor(math.log10(c)) - 3)
    near = round(c / mag) * mag
    if abs(near - c) <= 1e-9 * c:
        return float(near)
    return math.ceil(c / mag) * mag


def gen_cantor(spec: CantorSpec) -> RegularSetApprox:
    """Cantor set with the self-similar measure and its certificate claim."""
    cells = cantor_cells(spec.base, spec.alphabet, spec.depth)
    weights = np.full(cells.size, float(len(spec.alphabet)) ** (-spec.depth))
    cert = RegularityCertificate(
        delta=spec.delta,
        c_r=cantor_constant(spec.base, spec.alphabet),
        alpha0=Fraction(1, spec.base**spec.depth),
        alpha1=Fraction(1),
        source="generator:cantor",
    )
    return RegularSetApprox(spec.base, spec.depth, cells, weights, Fraction(0), Fraction(1), cert)


# ---------------------------------------------------------------------------
# Schottky covers


def _mobius(m: np.ndarray, z):
    return (m[0, 0] * z + m[0, 1]) / (m[1, 0] * z + m[1, 1])


def pairing_matrix(src: tuple, dst: tuple) -> np.ndarray:
    """Determinant-one map sending the exterior of disk ``src`` onto the interior of ``dst``.

    z -> c_dst - r_src r_dst / (z - c_src), scaled to unit determinant.
    """
    (ca, ra), (cb, rb) = src, dst
    m = np.array([[cb, -ra * rb - ca * cb], [1.0, -ca]])
    return m / math.sqrt(ra * rb)


@dataclass(frozen=True)
class SchottkySpec:
    """Disks on the real line and maps pairing them.

    ``pairs[i] = (a, b)`` means ``maps[i]`` sends the exterior of disk ``a``
    onto the interior of disk ``b``.
    """

    disks: tuple
    maps: tuple
    pairs: tuple
    depth: int = 0
    chart: str = "angle"

    def __post_init__(self):
        disks = tuple((float(c), float(r)) for c, r in self.disks)
        maps = tuple(np.asarray(m, dtype=float).reshape(2, 2) for m in self.maps)
        pairs = tuple((int(a), int(b)) for a, b in self.pairs)
        object.__setattr__(self, "disks", disks)
        object.__setattr__(self, "maps", maps)
        object.__setattr__(self, "pairs", pairs)
        if len(disks) != 2 * len(maps) or len(pairs) != len(maps):
            raise ConfigError("schottky", "need 2r disks, r maps and r pairs")
        if sorted(i for p in pairs for i in p) != list(range(len(disks))):
            raise ConfigError("schottky.pairs", "each disk must appear in exactly one pair")
        if any(r <= 0 for _, r in disks):
            raise ConfigError("schottky.disks", "radii must be positive")
        if self.chart not in ("angle", "line"):
            raise ConfigError("schottky.chart", "must be 'angle' or 'line'")
        if int(self.depth) < 0:
            raise ConfigError("depth", "must be >= 0")
        _check_disjoint(sorted((c - r, c + r) for c, r in disks), "base disks")
        for m, (a, b) in zip(maps, pairs):
            if abs(np.linalg.det(m) - 1) > 1e-9:
                raise ConfigError("schottky.maps", "determinant must be 1")
            ca, ra = disks[a]
            cb, rb = disks[b]
            phi = np.linspace(0, 2 * np.pi, 64, endpoint=False) + 0.01
            w = _mobius(m, ca + ra * np.exp(1j * phi))
            if np.max(np.abs(np.abs(w - cb) - rb)) > 1e-8 * max(1.0, rb):
                raise ConfigError("schottky.maps", f"map {a}->{b} does not send circle to circle")
            w_out = _mobius(m, ca + 2 * ra * np.exp(1j * phi))
            if np.any(np.abs(w_out - cb) >= rb):
                raise ConfigError("schottky.maps", f"map {a}->{b} does not send exterior inside")

    @classmethod
    def from_disks(cls, disks: Sequence, pairs: Sequence, depth: int = 0, chart: str = "angle") -> "SchottkySpec":
        maps = tuple(pairing_matrix(tuple(disks[a]), tuple(disks[b])) for a, b in pairs)
        return cls(tuple(tuple(d) for d in disks), maps, tuple(tuple(p) for p in pairs), depth, chart)

    @classmethod
    def symmetric(cls, depth: int = 0, centers=(-3.0, -1.0, 1.0, 3.0), radius: float = 0.5) -> "SchottkySpec":
        """Four equal disks paired outer-with-outer and inner-with-inner."""
        disks = [(c, radius) for c in centers]
        return cls.from_disks(disks, [(0, 3), (1, 2)], depth)

    def to_dict(self) -> dict:
        return {
            "disks": [list(d) for d in self.disks],
            "maps": [m.tolist() for m in self.maps],
            "pairs": [list(p) for p in self.pairs],
            "depth": self.depth,
            "chart": self.chart,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SchottkySpec":
        if "disks" not in d or "pairs" not in d:
            raise ConfigError("schottky", "needs 'disks' and 'pairs'")
        if "maps" in d:
            return cls(tuple(tuple(x) for x in d["disks"]), tuple(d["maps"]), tuple(tuple(p) for p in d["pairs"]),
                       int(d.get("depth", 0)), d.get("chart", "angle"))
        return cls.from_disks(d["disks"], d["pairs"], int(d.get("depth", 0)), d.get("chart", "angle"))


def _check_disjoint(iv: list, what: str) -> None:
    for (a0, b0), (a1, b1) in zip(iv, iv[1:]):
        if a1 <= b0:
            raise DiskOverlapError(f"{what}: [{a0:.6g}, {b0:.6g}] and [{a1:.6g}, {b1:.6g}] overlap")


def _letters(spec: SchottkySpec):
    """All 2r letters as (matrix, source disk, target disk)."""
    out = []
    for m, (a, b) in zip(spec.maps, spec.pairs):
        out.append((m, a, b))
        inv = np.array([[m[1, 1], -m[0, 1]], [-m[1, 0], m[0, 0]]])
        out.append((inv, b, a))
    return out


def schottky_intervals(spec: SchottkySpec, depth: int | None = None) -> np.ndarray:
    """Depth-n cover of the limit set on the real line, sorted (n, 2) array."""
    depth = spec.depth if depth is None else depth
    pieces = [((c - r, c + r), j) for j, (c, r) in enumerate(spec.disks)]
    letters = _letters(spec)
    for level in range(depth):
        nxt = []
        for m, src, dst in letters:
            for (a, b), j in pieces:
                if j == src:
                    continue
                u, v = _mobius(m, a), _mobius(m, b)
                nxt.append(((min(u, v), max(u, v)), dst))
        pieces = nxt
        _check_disjoint(sorted(p[0] for p in pieces), f"depth {level + 1}")
    return np.array(sorted(p[0] for p in pieces), dtype=float)


def _to_chart(x: np.ndarray, chart: str) -> np.ndarray:
    if chart == "line":
        return x
    return np.pi + 2 * np.arctan(x)


def intervals_to_set(
    iv: np.ndarray, base: int, depth: int, origin, scale, weights: np.ndarray | None = None
) -> RegularSetApprox:
    """Outward-rounded cell cover of float intervals; mass spread by overlap."""
    origin = as_fraction(origin)
    scale = as_fraction(scale)
    c = float(scale) / base**depth
    o = float(origin)
    p = (iv[:, 0] - o) / c
    q = (iv[:, 1] - o) / c
    first = np.floor(p).astype(np.int64)
    last = np.maximum(np.ceil(q).astype(np.int64) - 1, first)
    counts = last - first + 1
    owner = np.repeat(np.arange(first.size), counts)
    offs = np.arange(counts.sum()) - np.repeat(np.cumsum(counts) - counts, counts)
    idx = first[owner] + offs
    ov = np.clip(np.minimum(idx + 1, q[owner]) - np.maximum(idx, p[owner]), 0, None)
    length = (q - p)[owner]
    frac = np.where(length > 0, ov / np.where(length > 0, length, 1), 1.0 / counts[owner])
    if weights is None:
        weights = np.ones(first.size)
    mass = weights[owner] * frac
    uniq, inv = np.unique(idx, return_inverse=True)
    w = np.bincount(inv, weights=mass)
    keep = w > 0
    w = w[keep] / w[keep].sum()
    return RegularSetApprox(base, depth, uniq[keep], w, origin, scale)


def gen_schottky_cover(spec: SchottkySpec, base: int = 2, grid_depth: int | None = None) -> RegularSetApprox:
    """Union of all depth-n image disks, as a set on the angle (or line) chart.

    Cells come from a base-``base`` grid fine enough that the shortest
    interval spans at least eight cells. Weights are proportional to
    (length)^delta_hat with delta_hat the box-count estimate of the cover.
    """
    iv = _to_chart(schottky_intervals(spec), spec.chart)
    if spec.chart == "angle":
        origin, scale = Fraction(0), Fraction(7)
    else:
        lo = math.floor(iv[0, 0])
        origin, scale = Fraction(lo), Fraction(max(1, math.ceil(iv[-1, 1] - lo)))
    if grid_depth is None:
        shortest = float(np.min(iv[:, 1] - iv[:, 0]))
        grid_depth = max(1, math.ceil(math.log(8 * float(scale) / shortest, base)))
    flat = intervals_to_set(iv, base, grid_depth, origin, scale)
    if spec.depth >= 1 and iv.shape[0] >= 8:
        est = estimate_dimension(flat, alpha0=8 * float(flat.cell_size), alpha1=float(np.max(iv[:, 1] - iv[:, 0])) * 4)
        d_hat = min(max(est.value, 0.0), 1.0)
    else:
        d_hat = 0.0
    lengths = iv[:, 1] - iv[:, 0]
    cover = intervals_to_set(iv, base, grid_depth, origin, scale, weights=lengths**d_hat)
    cert = RegularityCertificate(
        delta=d_hat, c_r=1.0, alpha0=cover.cell_size, alpha1=cover.scale, source="generator:schottky-unscanned"
    )
    return cover.with_cert(cert)


# ---------------------------------------------------------------------------
# dimension estimate


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    residual: float
    stderr: float
    scales: tuple = field(default=(), repr=False)
    counts: tuple = field(default=(), repr=False)

    def __float__(self) -> float:
        return self.value


def estimate_dimension(set_: RegularSetApprox, alpha0: float | None = None, alpha1: float | None = None) -> DimensionEstimate:
    """Least-squares slope of log N(rho) against log(1/rho) over dyadic rho.

    N(rho) counts grid intervals rho[j, j+1] meeting the set. The default
    range is [4 alpha0, alpha1 / 2] from the certificate, or from the cell
    size and hull when no certificate is attached.
    """
    if set_.is_degenerate:
        lo, hi = 2.0**-14, 0.5
    else:
        c = float(set_.cell_size)
        a, b = set_.hull()
        lo = 4 * (alpha0 if alpha0 is not None else (float(set_.cert.alpha0) if set_.cert else c))
        top = alpha1 if alpha1 is not None else (
            float(set_.cert.alpha1) if set_.cert and not isinstance(set_.cert.alpha1, float) else float(b - a)
        )
        hi = top / 2
    j0 = math.ceil(-math.log2(hi))
    j1 = math.floor(-math.log2(lo))
    js = list(range(j0, j1 + 1))
    if len(js) < 3:
        raise InsufficientScales(f"only {len(js)} dyadic scales in [{lo:.3g}, {hi:.3g}]")
    counts = [len(_positive_cover(set_, Fraction(1, 2**j) if j >= 0 else Fraction(2**-j))) for j in js]
    x = np.array(js, float) * math.log(2)
    y = np.log(np.array(counts, float))
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    dof = max(len(js) - 2, 1)
    s2 = float(res @ res) / dof
    stderr = math.sqrt(s2 / float(((x - x.mean()) ** 2).sum()))
    return DimensionEstimate(float(coef[0]), float(np.sqrt(np.mean(res**2))), stderr, tuple(js), tuple(counts))


def certify(set_: RegularSetApprox, delta: float | None = None) -> RegularSetApprox:
    """Attach a scanned certificate with the measured constant."""
    cert = set_.cert
    delta = cert.delta if delta is None else delta
    a0, a1 = cert.alpha0, cert.alpha1
    c = measured_constant(set_, delta, a0, a1)
    return set_.with_cert(verify_regularity(set_, delta, c * (1 + 1e-9), a0, a1))
