"""Harmonic measure of slit strips and slit planes.

Closed-form exit densities, a walk-on-spheres Brownian oracle and a Monte
Carlo check of the subharmonic upper bound for ``log|F|``.

Boundary pieces are coded as integers: 0 = upper copy of the slit, 1 = lower
copy, 2 = upper line ``y = r``, 3 = lower line ``y = -r``.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate

from .errors import ConfigError, PointOnSlit, PreconditionViolated

SLIT_UP, SLIT_DOWN, LINE_UP, LINE_DOWN = 0, 1, 2, 3
PIECE_NAMES = ("I+", "I-", "line+", "line-")
KINDS = ("strip", "slit-strip", "slit-plane")
CHUNK = 1 << 16


@dataclass(frozen=True)
class SlitDomainSpec:
    """Strip ``|Im z| < r`` minus the real slit ``[a, b]``, observed from real ``t``."""

    r: float
    slit: tuple[float, float]
    t: float

    def __post_init__(self):
        a, b = (float(v) for v in self.slit)
        object.__setattr__(self, "slit", (a, b))
        if not 0 < self.r < 1:
            raise ConfigError("r", f"strip half-height must lie in (0,1), got {self.r}")
        if not 0 < b - a <= 1:
            raise ConfigError("slit", f"slit length must lie in (0,1], got {b - a}")
        if a <= self.t <= b:
            raise PointOnSlit(f"t={self.t} lies on the slit [{a}, {b}]")

    @property
    def length(self) -> float:
        return self.slit[1] - self.slit[0]

    @property
    def slit_distance(self) -> float:
        a, b = self.slit
        return max(a - self.t, self.t - b, 0.0)

    def to_dict(self) -> dict:
        return {"r": self.r, "slit": list(self.slit), "t": self.t}


# closed forms -----------------------------------------------------------------

def _slit_checks(t: float, ell: float, strict: bool):
    if ell <= 0:
        raise ConfigError("ell", "slit length must be positive")
    if 0 <= t <= ell:
        raise PointOnSlit(f"t={t} lies on the slit [0, {ell}]")
    if strict and min(abs(t), abs(t - ell)) < ell / 10:
        raise PreconditionViolated("d(t, I0) >= |I0|/10", f"t={t}, ell={ell}")


def slit_plane_density(t: float, ell: float, z, strict: bool = True):
    """Exit density of ``C \\ [0, ell]`` from real ``t`` on either copy of the slit.

    Zero outside the open slit. ``strict`` enforces ``d(t, I0) >= ell/10``.
    """
    _slit_checks(t, ell, strict)
    z = np.asarray(z, dtype=float)
    inside = (z > 0) & (z < ell)
    zc = np.where(inside, z, ell / 2)
    val = np.sqrt(t * (t - ell) / (zc * (ell - zc))) / (2 * np.pi * np.abs(t - zc))
    out = np.where(inside, val, 0.0)
    return float(out) if out.ndim == 0 else out


def slit_plane_cdf(t: float, ell: float, z, strict: bool = True):
    """Mass of ``[0, z]`` on one copy of the slit; tends to 1/2 at ``z = ell``."""
    _slit_checks(t, ell, strict)
    z = np.clip(np.asarray(z, dtype=float), 0.0, ell)
    with np.errstate(divide="ignore"):
        w = np.sqrt((t - ell) / t * z / (ell - z))
    out = np.arctan(w) / np.pi
    return float(out) if out.ndim == 0 else out


def slit_plane_quantile(t: float, ell: float, q):
    """Inverse of :func:`slit_plane_cdf` for ``q`` in ``[0, 1/2]``."""
    q = np.asarray(q, dtype=float)
    w2 = np.tan(np.pi * np.clip(q, 0, 0.5)) ** 2
    A = (t - ell) / t
    with np.errstate(invalid="ignore"):
        out = np.where(q >= 0.5, ell, ell * w2 / (A + w2))
    return out


def slit_plane_lp_norm(t: float, ell: float, p: float, strict: bool = True) -> float:
    """``L^p`` norm of the slit-plane density on one copy; ``inf`` for ``p >= 2``."""
    _slit_checks(t, ell, strict)
    if p >= 2:
        return math.inf
    # density = g(z) * (z (ell - z))^{-1/2} with g smooth on [0, ell]
    g = lambda z: (math.sqrt(t * (t - ell)) / (2 * math.pi * abs(t - z))) ** p
    val, _ = integrate.quad(g, 0.0, ell, weight="alg", wvar=(-p / 2, -p / 2), epsabs=1e-13, epsrel=1e-12)
    return val ** (1 / p)


def strip_density(t, r: float, x, side: int = 1):
    """Exit density of the unslit strip ``|Im z| < r`` at ``x + i side r``.

    For real ``t`` both lines carry the same density and ``side`` is ignored.
    """
    t = complex(t)
    if abs(t.imag) >= r:
        raise PreconditionViolated("|Im t| < r", f"t={t}, r={r}")
    if t.imag != 0:
        return strip_density_line(t, r, x, side)
    x = np.asarray(x, dtype=float)
    with np.errstate(over="ignore"):
        out = 1.0 / (4 * r * np.cosh(np.pi * (x - t.real) / (2 * r)))
    return float(out) if out.ndim == 0 else out


def strip_density_line(t: complex, r: float, x, side: int):
    """Exit density on the line ``y = +r`` (``side=+1``) or ``y = -r`` (``side=-1``) for complex ``t``."""
    t = complex(t)
    if abs(t.imag) >= r:
        raise PreconditionViolated("|Im t| < r", f"t={t}, r={r}")
    # w = i exp(pi (z - Re t)/(2r)) maps the strip to the upper half-plane and t to
    # exp(i phi); the pulled-back Poisson kernel simplifies to the form below
    x = np.asarray(x, dtype=float)
    u = np.pi * (x - t.real) / (2 * r)
    phi = np.pi / 2 + np.pi * t.imag / (2 * r)
    with np.errstate(over="ignore"):
        out = np.sin(phi) / (4 * r * (np.cosh(u) + side * np.cos(phi)))
    return float(out) if out.ndim == 0 else out


def strip_cdf(t: float, r: float, x):
    """Mass of ``(-inf, x]`` on one line of the unslit strip; tends to 1/2."""
    u = np.pi * (np.asarray(x, dtype=float) - t) / (2 * r)
    gd = 2 * np.arctan(np.tanh(u / 2))
    out = (gd + np.pi / 2) / (2 * np.pi)
    return float(out) if out.ndim == 0 else out


def strip_quantile(t: float, r: float, q):
    """Inverse of :func:`strip_cdf` for ``q`` in ``[0, 1/2]``."""
    q = np.asarray(q, dtype=float)
    v = np.clip(2 * np.pi * q - np.pi / 2, -np.pi / 2, np.pi / 2)
    with np.errstate(over="ignore", divide="ignore"):
        u = np.arcsinh(np.tan(v))
    u = np.where(q <= 0, -np.inf, np.where(q >= 0.5, np.inf, u))
    return t + 2 * r * u / np.pi


def strip_density_bound(x, slit: tuple[float, float], r: float):
    """The upper bound ``(2/r) exp(-d(x, I0))`` for the slit-strip density on the lines."""
    a, b = slit
    x = np.asarray(x, dtype=float)
    d = np.maximum(np.maximum(a - x, x - b), 0.0)
    return 2.0 / r * np.exp(-d)


def lower_bound(spec: SlitDomainSpec) -> float:
    """Lower bound ``(|I0|/8) exp(-2/r)`` on the slit-strip mass of each copy."""
    return spec.length / 8 * math.exp(-2 / spec.r)


# walk on spheres ---------------------------------------------------------------

@dataclass
class ExitSample:
    """Exit pieces and positions (real part) of simulated Brownian paths."""

    kind: str
    pieces: np.ndarray
    x: np.ndarray
    steps: int
    unresolved: int
    eps: float
    seed: int

    @property
    def n_paths(self) -> int:
        return int(self.pieces.size)

    def mass(self, piece: int) -> float:
        return float(np.count_nonzero(self.pieces == piece)) / self.n_paths

    def sigma(self, piece: int) -> float:
        p = self.mass(piece)
        return math.sqrt(p * (1 - p) / self.n_paths)

    def histogram(self, piece: int, edges) -> tuple[np.ndarray, np.ndarray]:
        """Bin frequencies (over all paths) and their binomial sigmas on one piece."""
        edges = np.asarray(edges, dtype=float)
        xs = self.x[self.pieces == piece]
        idx = np.searchsorted(edges, xs, side="right") - 1
        ok = (idx >= 0) & (idx < edges.size - 1)
        counts = np.bincount(idx[ok], minlength=edges.size - 1)
        p = counts / self.n_paths
        return p, np.sqrt(p * (1 - p) / self.n_paths)

    def summary(self) -> dict:
        return {
            "kind": self.kind,
            "n_paths": self.n_paths,
            "seed": self.seed,
            "eps": self.eps,
            "unresolved": self.unresolved,
            "mass": {PIECE_NAMES[k]: self.mass(k) for k in range(4)},
            "sigma": {PIECE_NAMES[k]: self.sigma(k) for k in range(4)},
        }


def _walk_chunk(kind: str, spec: SlitDomainSpec, n: int, eps: float, rng: np.random.Generator, max_iter: int):
    a, b = spec.slit
    r = spec.r
    c = 0.5 * (a + b)
    R0 = spec.length  # exterior disk used by the slit plane
    pieces = np.full(n, -1, dtype=np.int8)
    xs = np.full(n, np.nan)
    idx = np.arange(n)
    z = np.full(n, complex(spec.t, 0.0))
    steps = 0
    for _ in range(max_iter):
        if idx.size == 0:
            break
        if kind == "slit-plane":
            far = np.abs(z - c) > R0
            if far.any():
                zf = z[far] - c
                alpha = R0 / np.conj(zf)  # reflected point, unit-disk coordinates
                u = np.exp(2j * np.pi * rng.random(zf.size))
                z[far] = c + R0 * (u + alpha) / (1 + np.conj(alpha) * u)
        x, y = z.real, z.imag
        if kind == "strip":
            d_slit = np.full(x.shape, np.inf)
        else:
            dx = np.maximum(np.maximum(a - x, x - b), 0.0)
            d_slit = np.hypot(dx, y)
        d_line = r - np.abs(y) if kind != "slit-plane" else np.full(x.shape, np.inf)
        d = np.minimum(d_slit, d_line)
        hit = d < eps
        if hit.any():
            h = idx[hit]
            on_slit = d_slit[hit] <= d_line[hit]
            up = y[hit] >= 0
            pieces[h] = np.where(on_slit, np.where(up, SLIT_UP, SLIT_DOWN), np.where(up, LINE_UP, LINE_DOWN))
            xs[h] = np.where(on_slit, np.clip(x[hit], a, b), x[hit])
            keep = ~hit
            idx, z, d = idx[keep], z[keep], d[keep]
        if idx.size == 0:
            break
        z = z + d * np.exp(2j * np.pi * rng.random(idx.size))
        steps += idx.size
    return pieces, xs, steps, int(idx.size)


def brownian_exit(
    spec: SlitDomainSpec,
    kind: str = "slit-strip",
    n_paths: int = 100_000,
    seed: int = 0,
    eps: float = 1e-6,
    workers: int = 1,
    max_iter: int = 100_000,
    stream: str | None = None,
) -> ExitSample:
    """Simulate Brownian exit from the domain by walk on spheres.

    Paths are split into fixed chunks, each with its own child stream of
    ``SeedSequence(seed)``, so results do not depend on ``workers``. A
    ``stream`` name selects an independent named substream of the same seed.
    ``slit-plane`` ignores ``r``; a walker outside the disk of radius ``|I0|``
    around the slit centre jumps back onto the circle with its exact exterior
    hitting law.
    """
    if kind not in KINDS:
        raise ConfigError("kind", f"unknown domain kind {kind!r}")
    n_paths = int(n_paths)
    if n_paths < 1000:
        raise ConfigError("n_paths", "need at least 1000 paths")
    sizes = [CHUNK] * (n_paths // CHUNK)
    if n_paths % CHUNK:
        sizes.append(n_paths % CHUNK)
    key = () if stream is None else (zlib.crc32(stream.encode()),)
    streams = np.random.SeedSequence(seed, spawn_key=key).spawn(len(sizes))
    job = lambda k: _walk_chunk(kind, spec, sizes[k], eps, np.random.default_rng(streams[k]), max_iter)
    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            parts = list(ex.map(job, range(len(sizes))))
    else:
        parts = [job(k) for k in range(len(sizes))]
    return ExitSample(
        kind=kind,
        pieces=np.concatenate([p[0] for p in parts]),
        x=np.concatenate([p[1] for p in parts]),
        steps=sum(p[2] for p in parts),
        unresolved=sum(p[3] for p in parts),
        eps=eps,
        seed=seed,
    )


# goodness of fit -----------------------------------------------------------------

@dataclass(frozen=True)
class ChiSquare:
    stat: float
    dof: int
    p_value: float
    bins: int

    def passes(self, level: float = 0.01) -> bool:
        return self.p_value >= level


def _chi2(observed: np.ndarray, expected: np.ndarray) -> ChiSquare:
    from scipy import stats

    stat = float(np.sum((observed - expected) ** 2 / expected))
    dof = observed.size - 1
    return ChiSquare(stat, dof, float(stats.chi2.sf(stat, dof)), observed.size)


def strip_chi2(sample: ExitSample, spec: SlitDomainSpec, bins_per_line: int = 10) -> ChiSquare:
    """Chi-square of an unslit-strip sample on equal-mass bins of both lines."""
    q = np.linspace(0, 0.5, bins_per_line + 1)
    edges = strip_quantile(spec.t, spec.r, q)
    obs = []
    for piece in (LINE_UP, LINE_DOWN):
        p, _ = sample.histogram(piece, edges)
        obs.append(p * sample.n_paths)
    obs = np.concatenate(obs)
    return _chi2(obs, np.full(obs.size, sample.n_paths / obs.size))


def slit_plane_chi2(sample: ExitSample, spec: SlitDomainSpec, bins_per_side: int = 10) -> ChiSquare:
    """Chi-square of a slit-plane sample on equal-mass bins of both copies."""
    a, b = spec.slit
    t, ell = spec.t - a, spec.length
    q = np.linspace(0, 0.5, bins_per_side + 1)
    edges = a + slit_plane_quantile(t, ell, q)
    edges[0], edges[-1] = a - 1.0, b + 1.0  # exits are clipped onto [a, b]
    obs = []
    for piece in (SLIT_UP, SLIT_DOWN):
        p, _ = sample.histogram(piece, edges)
        obs.append(p * sample.n_paths)
    obs = np.concatenate(obs)
    return _chi2(obs, np.full(obs.size, sample.n_paths / obs.size))


# lemma checks ------------------------------------------------------------------------

@dataclass(frozen=True)
class LowerBoundCheck:
    estimates: tuple[float, float]
    sigmas: tuple[float, float]
    bound: float

    @property
    def holds(self) -> bool:
        return all(e >= self.bound - 3 * s for e, s in zip(self.estimates, self.sigmas))

    def to_dict(self) -> dict:
        return {
            "estimates": list(self.estimates),
            "sigmas": list(self.sigmas),
            "paper_bound": self.bound,
            "verdict": self.holds,
        }


def slit_strip_lower_bound(spec: SlitDomainSpec, n_paths: int = 1_000_000, seed: int = 0, workers: int = 1, eps: float = 1e-6) -> LowerBoundCheck:
    """Monte Carlo masses of both slit copies against ``(|I0|/8) exp(-2/r)``."""
    if spec.slit_distance > 1:
        raise PreconditionViolated("d(t, I0) <= 1", f"distance {spec.slit_distance}")
    s = brownian_exit(spec, "slit-strip", n_paths, seed, eps=eps, workers=workers)
    return LowerBoundCheck(
        (s.mass(SLIT_UP), s.mass(SLIT_DOWN)),
        (s.sigma(SLIT_UP), s.sigma(SLIT_DOWN)),
        lower_bound(spec),
    )


@dataclass(frozen=True)
class TestFunction:
    """Entire function bounded on the closed strip, with a vectorised ``log|F|``."""

    name: str
    log_abs: Callable[[np.ndarray], np.ndarray]


def test_function(name: str) -> TestFunction:
    """Look up a catalog function.

    ``one``; ``exp:a`` for ``exp(i a z)`` with real ``a``;
    ``polyexp:a:b:s1,s2,...`` for ``prod (z - s_j) exp(i a z - b z^2)``, ``b > 0``,
    roots given as Python complex literals. A bare polynomial is rejected because
    it is unbounded on the strip.
    """
    parts = name.split(":")
    if parts[0] == "one" and len(parts) == 1:
        return TestFunction(name, lambda z: np.zeros(np.shape(z)))
    if parts[0] == "exp" and len(parts) == 2:
        a = float(parts[1])
        return TestFunction(name, lambda z: -a * np.imag(z))
    if parts[0] == "polyexp" and len(parts) == 4:
        a, b = float(parts[1]), float(parts[2])
        if b <= 0:
            raise ConfigError("F", "polynomial factor needs a Gaussian damping b > 0 to stay bounded")
        roots = [complex(s) for s in parts[3].split(",") if s]

        def log_abs(z):
            z = np.asarray(z, dtype=complex)
            out = -a * z.imag - b * (z * z).real
            for s in roots:
                with np.errstate(divide="ignore"):
                    out = out + np.log(np.abs(z - s))
            return out

        return TestFunction(name, log_abs)
    if parts[0] == "poly":
        raise ConfigError("F", "polynomials are unbounded on the strip; use polyexp with b > 0")
    raise ConfigError("F", f"unknown test function {name!r}")


test_function.__test__ = False
TestFunction.__test__ = False


@dataclass(frozen=True)
class SubharmonicCheck:
    lhs: float
    rhs: float
    sigma: float

    @property
    def holds(self) -> bool:
        return self.lhs <= self.rhs + 3 * self.sigma

    def to_dict(self) -> dict:
        return {"lhs": self.lhs, "rhs": self.rhs, "sigma": self.sigma, "verdict": self.holds}


def exit_points(sample: ExitSample, spec: SlitDomainSpec) -> np.ndarray:
    """Complex boundary points of a sample (slit copies sit on the real axis)."""
    y = np.select(
        [sample.pieces == LINE_UP, sample.pieces == LINE_DOWN],
        [spec.r, -spec.r],
        0.0,
    )
    return sample.x + 1j * y


def subharmonic_bound_check(
    spec: SlitDomainSpec,
    F: str | TestFunction,
    n_paths: int = 200_000,
    seed: int = 0,
    kind: str = "slit-strip",
    workers: int = 1,
    sample: ExitSample | None = None,
) -> SubharmonicCheck:
    """Compare ``log|F(t)|`` with the exit-measure average of ``log|F|``."""
    f = test_function(F) if isinstance(F, str) else F
    if sample is None:
        sample = brownian_exit(spec, kind, n_paths, seed, workers=workers)
    vals = f.log_abs(exit_points(sample, spec))
    lhs = float(f.log_abs(np.array([complex(spec.t)]))[0])
    rhs = float(np.mean(vals))
    sigma = float(np.std(vals) / math.sqrt(vals.size))
    return SubharmonicCheck(lhs, rhs, sigma)
