"""Discrete semiclassical Fourier transform and restricted-operator norms."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import ConfigError, InsufficientPoints
from .generators import CantorSpec, gen_cantor
from .regular_sets import RegularSetApprox

DENSE_THRESHOLD = 4096
POWER_SEED = 0x5EED
POWER_RTOL = 1e-10


@dataclass(frozen=True, eq=False)
class FupInstance:
    """Index sets X, Y in {0..N-1} of the size-N unitary DFT (h = 1/N)."""

    N: int
    x_idx: np.ndarray
    y_idx: np.ndarray
    kind: str = "fourier"

    def __post_init__(self):
        N = int(self.N)
        if N < 1:
            raise ConfigError("N", "must be positive")
        x = np.asarray(self.x_idx, dtype=np.int64).reshape(-1)
        y = np.asarray(self.y_idx, dtype=np.int64).reshape(-1)
        for name, idx in (("x_idx", x), ("y_idx", y)):
            if idx.size == 0:
                raise ConfigError(name, "must be nonempty")
            if idx.min() < 0 or idx.max() >= N:
                raise ConfigError(name, f"indices must lie in 0..{N - 1}")
            if np.any(np.diff(idx) <= 0):
                raise ConfigError(name, "must be strictly increasing")
        if self.kind != "fourier":
            raise ConfigError("kind", f"unknown operator kind {self.kind!r}")
        object.__setattr__(self, "N", N)
        object.__setattr__(self, "x_idx", x)
        object.__setattr__(self, "y_idx", y)

    @classmethod
    def from_sets(cls, X: RegularSetApprox, Y: RegularSetApprox) -> "FupInstance":
        """X at resolution 1/N inside [0, 1]; Y given on [0, 1] and dilated by N."""
        N = X.base**X.depth
        return cls(N, set_to_indices(X, N), set_to_indices(Y, N))

    def matrix(self) -> np.ndarray:
        """N^(-1/2) exp(2 pi i j k / N), j in X, k in Y."""
        ph = np.outer(self.x_idx, self.y_idx) % self.N
        return np.exp(2j * np.pi * ph / self.N) / math.sqrt(self.N)

    def shifted(self, x0: int, y0: int) -> "FupInstance":
        return FupInstance(self.N, np.sort((self.x_idx + x0) % self.N), np.sort((self.y_idx + y0) % self.N))

    def to_dict(self) -> dict:
        return {"N": self.N, "x_idx": self.x_idx.tolist(), "y_idx": self.y_idx.tolist(), "kind": self.kind}

    @classmethod
    def from_dict(cls, d: dict) -> "FupInstance":
        for key in ("N", "x_idx", "y_idx"):
            if key not in d:
                raise ConfigError(key, "missing")
        return cls(int(d["N"]), d["x_idx"], d["y_idx"], d.get("kind", "fourier"))


def set_to_indices(S: RegularSetApprox, N: int) -> np.ndarray:
    """Grid indices j with [j/N, (j+1)/N] inside the set (set in [0, 1])."""
    if S.is_degenerate:
        j = int(S.origin * N)
        return np.array([j % N])
    step = S.cell_size * N
    if step.denominator != 1:
        raise ConfigError("N", f"cell size {S.cell_size} is not a multiple of 1/{N}")
    off = S.origin * N
    if off.denominator != 1:
        raise ConfigError("N", "frame origin is off the grid")
    m = int(step)
    idx = (S.cells[:, None] * m + np.arange(m)[None, :]).reshape(-1) + int(off)
    return np.unique(idx % N)


@dataclass(frozen=True)
class NormResult:
    value: float
    method: str
    iterations: int = 0
    residual: float = 0.0

    def __float__(self) -> float:
        return self.value


def top_singular_dense(M: np.ndarray) -> float:
    if M.size == 0:
        return 0.0
    return float(np.linalg.svd(M, compute_uv=False)[0])


def power_iteration(
    apply, apply_adj, n: int, rtol: float = POWER_RTOL, max_iter: int = 20000, seed: int = POWER_SEED
) -> NormResult:
    """Largest singular value by power iteration on A*A.

    Stops when ||A*A v - lam v|| <= rtol * lam for the unit iterate v.
    """
    rng = np.random.default_rng(seed)
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam = 0.0
    res = math.inf
    for it in range(1, max_iter + 1):
        w = apply_adj(apply(v))
        lam = float(np.real(np.vdot(v, w)))
        if lam <= 0:
            return NormResult(0.0, "power-iteration", it, 0.0)
        res = float(np.linalg.norm(w - lam * v)) / lam
        v = w / np.linalg.norm(w)
        if res <= rtol:
            break
    return NormResult(math.sqrt(lam), "power-iteration", it, res)


def fourier_restricted_norm(inst: FupInstance, method: str = "auto") -> NormResult:
    """Largest singular value of the X-by-Y submatrix of the unitary DFT."""
    nx, ny = inst.x_idx.size, inst.y_idx.size
    if method == "auto":
        method = "dense" if min(nx, ny) <= DENSE_THRESHOLD else "power"
    if method == "dense":
        return NormResult(top_singular_dense(inst.matrix()), "dense-SVD")
    if method != "power":
        raise ConfigError("method", f"unknown method {method!r}")
    N = inst.N
    rt = math.sqrt(N)

    def apply(v):
        full = np.zeros(N, complex)
        full[inst.y_idx] = v
        return (np.fft.ifft(full) * rt)[inst.x_idx]

    def apply_adj(u):
        full = np.zeros(N, complex)
        full[inst.x_idx] = u
        return (np.fft.fft(full) / rt)[inst.y_idx]

    return power_iteration(apply, apply_adj, ny)


def shift_invariance_check(inst: FupInstance, x0: int, y0: int) -> tuple[float, float]:
    """Norms before and after shifting X by x0 and Y by y0 (mod N)."""
    a = fourier_restricted_norm(inst).value
    b = fourier_restricted_norm(inst.shifted(int(x0), int(y0))).value
    return a, b


# ---------------------------------------------------------------------------
# scans and fits


def fit_beta(Ns: Sequence[float], norms: Sequence[float]) -> tuple[float, float]:
    """Least-squares slope beta of -log(norm) against log N, with stderr."""
    x = np.log(np.asarray(Ns, float))
    y = -np.log(np.asarray(norms, float))
    if x.size < 2:
        raise InsufficientPoints("need at least two points")
    A = np.column_stack([x, np.ones_like(x)])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    res = y - A @ coef
    sxx = float(((x - x.mean()) ** 2).sum())
    stderr = math.sqrt(float(res @ res) / max(x.size - 2, 1) / sxx) if x.size > 2 and sxx > 0 else 0.0
    beta = float(coef[0])
    return (0.0 if abs(beta) < 1e-14 else beta), stderr


@dataclass(frozen=True)
class ScanResult:
    """Norm table and exponent fits.

    ``beta`` fits the upper half of the k-range; ``beta_full`` and
    ``beta_lower`` the whole range and the lower half.
    """

    ks: tuple
    Ns: tuple
    norms: tuple
    beta: float
    stderr: float
    beta_full: float
    beta_lower: float
    methods: tuple = field(default=(), repr=False)

    def rows(self) -> list[tuple]:
        out = []
        for k, N, v in zip(self.ks, self.Ns, self.norms):
            lr = -math.log(v) / math.log(N) if N > 1 and v > 0 else float("nan")
            out.append((k, N, v, lr))
        return out

    @property
    def half_agreement(self) -> float:
        """|beta_upper - beta_lower| / max(|beta_upper|, |beta_lower|)."""
        m = max(abs(self.beta), abs(self.beta_lower))
        return 0.0 if m == 0 else abs(self.beta - self.beta_lower) / m


def fit_table(ks: Sequence[int], Ns: Sequence[int], norms: Sequence[float], methods=()) -> ScanResult:
    n = len(ks)
    if n < 3:
        raise InsufficientPoints(f"need at least 3 values of k, got {n}")
    h = (n + 1) // 2
    beta_full, _ = fit_beta(Ns, norms)
    beta_lo, _ = fit_beta(Ns[:h], norms[:h])
    beta_hi, se = fit_beta(Ns[n - h:], norms[n - h:])
    return ScanResult(tuple(ks), tuple(Ns), tuple(norms), beta_hi, se, beta_full, beta_lo, tuple(methods))


def scan_and_fit(spec_x: CantorSpec, spec_y: CantorSpec, k_range: Sequence[int], workers: int = 1) -> ScanResult:
    """Norms for X, Y regenerated at each depth k (N = L^k), and beta fits."""
    ks = sorted(int(k) for k in k_range)
    if len(ks) < 3:
        raise InsufficientPoints(f"need at least 3 values of k, got {len(ks)}")
    if spec_x.base != spec_y.base:
        raise ConfigError("spec_y.base", "X and Y must share the base")

    def one(k):
        X = gen_cantor(spec_x.at_depth(k))
        Y = gen_cantor(spec_y.at_depth(k))
        inst = FupInstance.from_sets(X, Y)
        r = fourier_restricted_norm(inst)
        return inst.N, r

    if workers > 1:
        with ThreadPoolExecutor(workers) as ex:
            out = list(ex.map(one, ks))
    else:
        out = [one(k) for k in ks]
    return fit_table(ks, [o[0] for o in out], [o[1].value for o in out], [o[1].method for o in out])


@dataclass(frozen=True)
class VolumeBaseline:
    measured: float
    cauchy_schwarz: float
    paper: float | None

    @property
    def holds(self) -> bool:
        ok = self.measured <= self.cauchy_schwarz + 1e-9
        if self.paper is not None:
            ok = ok and self.measured <= self.paper + 1e-9
        return ok


def volume_baseline(inst: FupInstance, delta: float, c_r: float, measured: float | None = None) -> VolumeBaseline:
    """Cauchy-Schwarz bound min(1, sqrt(|X||Y|/N)) and, for delta < 1/2, 24 C_R^2 N^(delta - 1/2)."""
    if measured is None:
        measured = fourier_restricted_norm(inst).value
    cs = min(1.0, math.sqrt(inst.x_idx.size * inst.y_idx.size / inst.N))
    paper = 24 * c_r**2 * inst.N ** (delta - 0.5) if delta < 0.5 else None
    return VolumeBaseline(float(measured), cs, paper)


# ---------------------------------------------------------------------------
# continuous reference


def gauss_nodes(intervals: np.ndarray, panel: float, order: int = 8) -> tuple[np.ndarray, np.ndarray]:
    """Composite Gauss-Legendre nodes/weights with panels no longer than ``panel``."""
    g, w = np.polynomial.legendre.leggauss(order)
    xs, ws = [], []
    for a, b in np.asarray(intervals, float):
        if b <= a:
            continue
        n = max(1, math.ceil((b - a) / panel - 1e-12))
        edges = np.linspace(a, b, n + 1)
        mid = (edges[1:] + edges[:-1]) / 2
        half = (edges[1:] - edges[:-1]) / 2
        xs.append((mid[:, None] + half[:, None] * g[None, :]).ravel())
        ws.append((half[:, None] * w[None, :]).ravel())
    if not xs:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(xs), np.concatenate(ws)


def semiclassical_fourier_norm(x_intervals, y_intervals, h: float, order: int = 8, panels_per_wavelength: float = 1.0) -> float:
    """||1_X F_h^* 1_Y|| on L^2(R) for finite interval unions (Nystrom, Gauss-Legendre).

    Panels are at most one oscillation wavelength h / max|x| long, which
    gives spectral accuracy for the smooth kernel on each panel.
    """
    xi = np.asarray(x_intervals, float).reshape(-1, 2)
    yi = np.asarray(y_intervals, float).reshape(-1, 2)
    reach_x = max(float(np.max(np.abs(yi))), 1e-300)
    reach_y = max(float(np.max(np.abs(xi))), 1e-300)
    xs, wx = gauss_nodes(xi, min(h / reach_x / panels_per_wavelength, float(np.max(xi[:, 1] - xi[:, 0]))), order)
    ys, wy = gauss_nodes(yi, min(h / reach_y / panels_per_wavelength, float(np.max(yi[:, 1] - yi[:, 0]))), order)
    K = np.exp(2j * np.pi * np.outer(xs, ys) / h) / math.sqrt(h)
    K *= np.sqrt(wx)[:, None] * np.sqrt(wy)[None, :]
    return top_singular(K)


def top_singular(K: np.ndarray, dense_max: int = 2000) -> float:
    """Largest singular value; ARPACK with a fixed start vector for big matrices."""
    if min(K.shape) <= dense_max:
        return top_singular_dense(K)
    from scipy.sparse.linalg import svds

    rng = np.random.default_rng(POWER_SEED)
    v0 = rng.standard_normal(min(K.shape))
    s = svds(K, k=1, v0=v0, tol=1e-12, return_singular_vectors=False)
    return float(s[0])
