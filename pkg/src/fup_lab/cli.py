"""Command-line entry point: ``fup-lab <subcommand> ...``.

Every run validates its configuration before computing, writes its
artifacts (CSV for scans, JSON for verdicts) and a ``manifest.json`` beside
them. Exit status: 0 when all checks pass, 1 when a check fails, 2 on a
configuration error.
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from . import fup_core, fup_operators, generators, harmonic_measure, multiplier_iteration
from .errors import ConfigError, ContractionFailed, FupLabError, PointOnSlit, PreconditionViolated, RegularityPreconditionFailed
from .regular_sets import RegularSetApprox, affine_map, verify_regularity

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2
CONFIG_ERRORS = (ConfigError, PointOnSlit, PreconditionViolated, RegularityPreconditionFailed)


@dataclass
class ExperimentConfig:
    """Subcommand name plus every parameter (defaults included) and output path."""

    command: str
    params: dict = field(default_factory=dict)
    out: str | None = None
    workers: int = 1

    def echo(self) -> dict:
        return {"command": self.command, "params": dict(sorted(self.params.items())), "out": self.out, "workers": self.workers}


# serialisation ---------------------------------------------------------------------

def _plain(obj):
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, Fraction):
        return str(obj)
    if isinstance(obj, (tuple, set)):
        return list(obj)
    if isinstance(obj, float) and not math.isfinite(obj):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def dumps(payload) -> str:
    return json.dumps(payload, sort_keys=True, indent=2, default=_plain, allow_nan=True) + "\n"


def write_json(path: Path, payload) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(dumps(payload))


def write_csv(path: Path, header: list[str], rows: list[list]) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


# input parsing ---------------------------------------------------------------------------

def parse_set(text: str, field_name: str) -> RegularSetApprox:
    """``cantor:L:digits:k`` (or ``L:digits:k``) inline, else a JSON file of a set."""
    if text is None:
        raise ConfigError(field_name, "missing set")
    if text.endswith(".json") or os.path.sep in text:
        return RegularSetApprox.from_dict(_load_json(text, field_name))
    body = text[len("cantor:"):] if text.startswith("cantor:") else text
    try:
        spec = generators.CantorSpec.parse(body)
    except ConfigError as exc:
        raise ConfigError(f"{field_name}.{exc.field}", str(exc).split(": ", 1)[-1]) from None
    return generators.gen_cantor(spec)


def parse_cantor(text: str, field_name: str, depth: int | None = None) -> generators.CantorSpec:
    try:
        return generators.CantorSpec.parse(text[len("cantor:"):] if text.startswith("cantor:") else text, depth=depth or 1)
    except ConfigError as exc:
        raise ConfigError(f"{field_name}.{exc.field}", str(exc).split(": ", 1)[-1]) from None


def _load_json(path: str, field_name: str):
    p = Path(path)
    if not p.exists():
        raise ConfigError(field_name, f"file not found: {path}")
    try:
        return json.loads(p.read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{field_name}:{exc.lineno}:{exc.colno}", exc.msg) from None


def parse_pair(text: str, field_name: str) -> tuple[float, float]:
    try:
        a, b = (float(v) for v in text.split(","))
    except ValueError:
        raise ConfigError(field_name, f"expected 'a,b', got {text!r}") from None
    if not a < b:
        raise ConfigError(field_name, "need a < b")
    return a, b


def _range(v: float, lo: float, hi: float, name: str) -> float:
    if not lo <= v <= hi:
        raise ConfigError(name, f"must lie in [{lo}, {hi}], got {v}")
    return v


def _positive_int(v, name: str) -> int:
    try:
        iv = int(float(v))
    except (TypeError, ValueError):
        raise ConfigError(name, f"expected an integer, got {v!r}") from None
    if iv < 1:
        raise ConfigError(name, "must be >= 1")
    return iv


# subcommands: each returns (prepare, execute) ----------------------------------------------
# prepare(params) validates and builds inputs; execute(prepared, cfg) -> (payload, checks, files)

def _out(cfg: ExperimentConfig, default: str) -> Path:
    return Path(cfg.out or default)


def prep_gen(p):
    if p["kind"] == "cantor":
        alphabet = p["alphabet"] or ""
        try:
            digits = tuple(int(a) for a in alphabet.split(",") if a.strip())
        except ValueError:
            raise ConfigError("alphabet", f"cannot parse {alphabet!r}") from None
        return {"set": generators.CantorSpec(p["base"], digits, p["depth"])}
    if p["spec"]:
        spec = generators.SchottkySpec.from_dict(_load_json(p["spec"], "spec"))
    else:
        spec = generators.SchottkySpec.symmetric()
    return {"schottky": generators.SchottkySpec.from_dict(dict(spec.to_dict(), depth=p["depth"]))}


def exec_gen(prep, cfg):
    if "set" in prep:
        S = generators.gen_cantor(prep["set"])
    else:
        S = generators.gen_schottky_cover(prep["schottky"])
    path = _out(cfg, "set.json")
    payload = S.to_dict()
    write_json(path, payload)
    return payload, {"nonempty": not S.is_empty}, [path]


def prep_verify(p):
    S = parse_set(p["set"], "set")
    delta = _range(p["delta"], 0.0, 1.0, "delta")
    if p["cr"] < 1:
        raise ConfigError("cr", "C_R must be >= 1")
    a0 = Fraction(p["alpha0"]) if p["alpha0"] else S.cell_size
    a1 = Fraction(p["alpha1"]) if p["alpha1"] else S.scale or Fraction(1)
    return {"set": S, "delta": delta, "cr": p["cr"], "a0": a0, "a1": a1}


def exec_verify(prep, cfg):
    cert = verify_regularity(prep["set"], prep["delta"], prep["cr"], prep["a0"], prep["a1"])
    path = _out(cfg, "certificate.json")
    payload = cert.to_dict()
    write_json(path, payload)
    return payload, {"verified": cert.verified}, [path]


def _volume_bound(X, Y, N):
    cx, cy = X.cert, Y.cert
    if cx is None or cy is None:
        return None
    delta = max(cx.delta, cy.delta)
    c_r = max(cx.c_r, cy.c_r)
    return 24 * c_r**2 * N ** (delta - 0.5)


def prep_fup_norm(p):
    if p["instance"]:
        return {"inst": fup_core.FupInstance.from_dict(_load_json(p["instance"], "instance")), "sets": None}
    X, Y = parse_set(p["x"], "x"), parse_set(p["y"] or p["x"], "y")
    return {"inst": fup_core.FupInstance.from_sets(X, Y), "sets": (X, Y)}


def exec_fup_norm(prep, cfg):
    inst = prep["inst"]
    res = fup_core.fourier_restricted_norm(inst)
    payload = {"N": inst.N, "norm": res.value, "method": res.method, "iterations": res.iterations, "residual": res.residual}
    checks = {"norm_le_1": res.value <= 1 + 1e-9}
    if prep["sets"]:
        vb = _volume_bound(*prep["sets"], inst.N)
        payload["volume_bound"] = vb
        if vb is not None:
            checks["volume_bound"] = res.value <= vb
    path = _out(cfg, "norm.json")
    write_json(path, payload)
    return payload, checks, [path]


def prep_fup_scan(p):
    sx = parse_cantor(p["cantor"], "cantor")
    sy = parse_cantor(p["cantor_y"] or p["cantor"], "cantor_y")
    if sx.base != sy.base:
        raise ConfigError("cantor_y", "bases must agree")
    kmin, kmax = _positive_int(p["kmin"], "kmin"), _positive_int(p["kmax"], "kmax")
    if kmax < kmin + 2:
        raise ConfigError("kmax", "need at least three depths")
    if sx.base**kmax > 10**6:
        raise ConfigError("kmax", "N = L^kmax above 10^6 is out of desk scale")
    return {"sx": sx, "sy": sy, "ks": list(range(kmin, kmax + 1))}


def exec_fup_scan(prep, cfg):
    res = fup_core.scan_and_fit(prep["sx"], prep["sy"], prep["ks"], workers=cfg.workers)
    rows = []
    for i, (k, N, v) in enumerate(zip(res.ks, res.Ns, res.norms)):
        lr = "" if i == 0 else math.log(v / res.norms[i - 1])
        rows.append([k, N, float(v), lr])
    path = _out(cfg, "scan.csv")
    write_csv(path, ["k", "N", "norm", "log_ratio"], rows)
    cr = generators.cantor_constant(prep["sx"].base, prep["sx"].alphabet)
    delta = max(prep["sx"].delta, prep["sy"].delta)
    bounds = [24 * cr**2 * N ** (delta - 0.5) for N in res.Ns]
    fit = {
        "beta": res.beta,
        "stderr": res.stderr,
        "beta_full": res.beta_full,
        "beta_lower": res.beta_lower,
        "half_agreement": res.half_agreement,
        "volume_bounds": bounds,
        "norms": list(res.norms),
        "Ns": list(res.Ns),
    }
    fpath = path.with_suffix(".json")
    write_json(fpath, fit)
    checks = {
        "norm_le_1": all(v <= 1 + 1e-9 for v in res.norms),
        "volume_bound": all(v <= b for v, b in zip(res.norms, bounds)),
    }
    return fit, checks, [path, fpath]


def _rect(obj, field_name):
    try:
        (a, b), (c, d) = obj
        return (float(a), float(b)), (float(c), float(d))
    except (TypeError, ValueError):
        raise ConfigError(field_name, "expected [[a, b], [c, d]]") from None


def prep_hyperbolic(p):
    if p["chi"]:
        rect = _rect(_load_json(p["chi"], "chi"), "chi")
    else:
        rect = fup_operators.default_arc_chi()
    rho = _range(p["rho"], 0.0, 1.0, "rho")
    if p["set"]:
        S = parse_set(p["set"], "set")
        if not p["h"] or not 0 < p["h"] < 1:
            raise ConfigError("h", "give --h in (0,1) with --set")
        return {"jobs": [(None, float(p["h"]), S)], "rect": rect, "rho": rho}
    spec = parse_cantor(p["cantor"], "cantor")
    ks = list(range(_positive_int(p["kmin"], "kmin"), _positive_int(p["kmax"], "kmax") + 1))
    jobs = []
    for k in ks:
        C = generators.gen_cantor(spec.at_depth(k))
        jobs.append((k, float(spec.base) ** (-k), fup_operators.arc_embedding(C)))
    return {"jobs": jobs, "rect": rect, "rho": rho}


def exec_hyperbolic(prep, cfg):
    rows, norms, hs = [], [], []
    for k, h, iv in prep["jobs"]:
        v = fup_operators.hyperbolic_norm(iv, h, prep["rect"], prep["rho"]).value
        rows.append([k if k is not None else "", h, v])
        norms.append(v)
        hs.append(h)
    path = _out(cfg, "hyperbolic.csv")
    write_csv(path, ["k", "h", "norm"], rows)
    payload = {"hs": hs, "norms": norms}
    checks = {}
    if len(norms) >= 3:
        beta, se = fup_core.fit_beta([1 / h for h in hs], norms)
        payload.update(beta=beta, stderr=se)
        checks["beta_positive"] = beta > 0
    fpath = path.with_suffix(".json")
    write_json(fpath, payload)
    return payload, checks, [path, fpath]


PHASE_CATALOG = ("linear", "quartic")


def _phase(name: str):
    if name == "linear":
        return fup_operators.PhaseSpec.linear(((-1.0, 2.0), (-1.0, 2.0))), 0.0
    if name == "quartic":
        co = np.zeros((3, 3))
        co[1, 1] = -2 * math.pi
        co[2, 2] = -0.25
        return fup_operators.PhaseSpec("polynomial", ((0.5, 2.5), (0.5, 2.5)), coeffs=co), 1.0
    raise ConfigError("phase", f"unknown phase {name!r}; catalog: {PHASE_CATALOG}")


def prep_phase(p):
    spec, shift = _phase(p["phase"])
    spec.check_nondegenerate()
    S = parse_set(p["set"], "set")
    if shift:
        S = affine_map(S, 1, Fraction(shift))
    h = float(p["h"]) if p["h"] else float(S.cell_size)
    if not 0 < h < 1:
        raise ConfigError("h", "must lie in (0,1)")
    return {"spec": spec, "set": S, "h": h, "rho": _range(p["rho"], 0.0, 1.0, "rho"), "spacing": p["spacing"]}


def exec_phase(prep, cfg):
    S, h = prep["set"], prep["h"]
    sp = prep["spacing"] * h if prep["spacing"] else None
    res = fup_operators.phase_restricted_norm(S, S, h, prep["spec"], prep["rho"], spacing=sp)
    payload = {"h": h, "norm": res.value, "phase": cfg.params["phase"]}
    if prep["spec"].kind == "linear":
        iv = fup_operators.fattened_intervals(S, h ** prep["rho"])
        ref = fup_core.semiclassical_fourier_norm(iv, iv, h)
        payload["continuous_reference"] = ref
        payload["relative_error"] = abs(res.value - ref) / ref
    path = _out(cfg, "phase.json")
    write_json(path, payload)
    checks = {"finite": math.isfinite(res.value)}
    if "relative_error" in payload:
        checks["within_2pct"] = payload["relative_error"] <= 0.02
    return payload, checks, [path]


def prep_harmonic(p):
    if p["action"] != "check":
        raise ConfigError("action", "only 'check' is supported")
    if p["domain"] not in harmonic_measure.KINDS:
        raise ConfigError("domain", f"must be one of {harmonic_measure.KINDS}")
    slit = parse_pair(p["slit"], "slit")
    if p["domain"] == "strip":
        slit = (p["t"] + 10.0, p["t"] + 11.0)  # the unslit strip ignores the slit
    spec = harmonic_measure.SlitDomainSpec(p["r"], slit, p["t"])
    paths = _positive_int(p["paths"], "paths")
    if paths < 1000:
        raise ConfigError("paths", "need at least 1000 paths")
    funcs = [harmonic_measure.test_function(f) for f in (p["F"] or "").split(";") if f]
    return {"spec": spec, "paths": paths, "funcs": funcs}


def exec_harmonic(prep, cfg):
    spec, kind = prep["spec"], cfg.params["domain"]
    seed = cfg.params["seed"]
    stream = f"harmonic/{kind}/r={spec.r!r}/slit={spec.slit[0]!r},{spec.slit[1]!r}/t={spec.t!r}"
    sample = harmonic_measure.brownian_exit(spec, kind, prep["paths"], seed, workers=cfg.workers, stream=stream)
    names = harmonic_measure.PIECE_NAMES
    est = {names[k]: sample.mass(k) for k in range(4)}
    sig = {names[k]: sample.sigma(k) for k in range(4)}
    bounds, verdicts = {}, {}
    extra = {}
    if kind == "slit-strip":
        lb = harmonic_measure.lower_bound(spec)
        for k in (harmonic_measure.SLIT_UP, harmonic_measure.SLIT_DOWN):
            bounds[names[k]] = lb
            verdicts[names[k]] = est[names[k]] >= lb - 3 * sig[names[k]]
    elif kind == "strip":
        chi = harmonic_measure.strip_chi2(sample, spec)
        extra["chi2"] = chi.__dict__
        verdicts["chi2"] = chi.passes(0.01)
        for k in (harmonic_measure.LINE_UP, harmonic_measure.LINE_DOWN):
            bounds[names[k]] = 0.5
    else:
        chi = harmonic_measure.slit_plane_chi2(sample, spec)
        extra["chi2"] = chi.__dict__
        verdicts["chi2"] = chi.passes(0.01)
        for k in (harmonic_measure.SLIT_UP, harmonic_measure.SLIT_DOWN):
            bounds[names[k]] = 0.5
    sub = {}
    for f in prep["funcs"]:
        r = harmonic_measure.subharmonic_bound_check(spec, f, sample=sample)
        sub[f.name] = r.to_dict()
        verdicts[f"subharmonic[{f.name}]"] = r.holds
    payload = {
        "domain": kind,
        "spec": spec.to_dict(),
        "n_paths": sample.n_paths,
        "seed": seed,
        "stream": stream,
        "estimates": est,
        "sigmas": sig,
        "paper_bounds": bounds,
        "verdicts": verdicts,
        "subharmonic": sub,
        **extra,
    }
    path = _out(cfg, "harmonic.json")
    write_json(path, payload)
    return payload, dict(verdicts), [path]


def prep_weight(p):
    Y = parse_set(p["y"], "y")
    if p["scale"]:
        Y = affine_map(Y, Fraction(p["scale"]), 0)
    delta = p["delta"] if p["delta"] is not None else (Y.cert.delta if Y.cert else None)
    if delta is None or not 0 < delta < 1:
        raise ConfigError("delta", "must lie in (0,1)")
    if p["cr"] < 1:
        raise ConfigError("cr", "C_R must be >= 1")
    return {"y": Y, "delta": delta, "cr": p["cr"]}


def exec_weight(prep, cfg):
    w = multiplier_iteration.build_weight(prep["y"], prep["delta"], prep["cr"])
    posts = multiplier_iteration.weight_posts(w, prep["y"], prep["delta"])
    payload = {
        "posts": posts.to_dict(),
        "c0": w.c0,
        "grid": {"min": float(w.xi[0]), "max": float(w.xi[-1]), "spacing": w.spacing, "points": int(w.xi.size)},
        "covers": [list(iv) for iv in w.intervals],
        "dlog_limit": multiplier_iteration.DLOG_LIMIT,
    }
    path = _out(cfg, "weight.json")
    write_json(path, payload)
    files = [path]
    if cfg.params.get("csv"):
        cpath = Path(cfg.params["csv"])
        write_csv(cpath, ["xi", "log_omega", "dlog"], [[float(a), float(b), float(c)] for a, b, c in zip(w.xi, w.log_omega, w.dlog)])
        files.append(cpath)
    return payload, {"all_posts": posts.all_hold}, files


def prep_uc(p):
    Y = parse_set(p["y"], "y")
    if p["scale"]:
        Y = affine_map(Y, Fraction(p["scale"]), 0)
    elif not Y.is_degenerate and Y.scale == 1 and Y.origin == 0:
        Y = affine_map(Y, Fraction(Y.base) ** Y.depth, 0)
    c1 = _range(p["c1"], 1e-9, 1.0, "c1")
    return {"y": Y, "c1": c1, "offset": p["offset"]}


def exec_uc(prep, cfg):
    res = multiplier_iteration.unique_continuation_constant(prep["y"], prep["c1"], prep["offset"])
    payload = {"c3": res.c3, "method": res.method, "size": res.size, "c1": prep["c1"]}
    path = _out(cfg, "uc.json")
    write_json(path, payload)
    return payload, {"c3_positive": res.c3 > 0}, [path]


def prep_iterate(p):
    X, Y = parse_set(p["x"], "x"), parse_set(p["y"] or p["x"], "y")
    L, T, m = _positive_int(p["L"], "L"), _positive_int(p["T"], "T"), _positive_int(p["m"], "m")
    if X.base != L or Y.base != L:
        raise ConfigError("L", f"sets are base {X.base}/{Y.base}, not {L}")
    if X.depth != Y.depth:
        raise ConfigError("y", "X and Y need the same depth")
    if L ** X.depth > 2 * 10**5:
        raise ConfigError("x.depth", "N above 2e5 is out of desk scale")
    m_used = min(m, multiplier_iteration.max_steps(X.depth, T))
    return {"X": X, "Y": Y, "L": L, "T": T, "m": m_used, "m_requested": m}


def exec_iterate(prep, cfg):
    res = multiplier_iteration.iterate_fup(prep["X"], prep["Y"], prep["L"], prep["T"], prep["m"])
    path = _out(cfg, "steps.csv")
    rows = [[r["m"], r["step_norm"], r["ratio"], r["tau"], r["bound"]] for r in res.rows()]
    write_csv(path, ["m", "step_norm", "ratio", "tau", "bound"], rows)
    payload = dict(res.to_dict(), m_requested=prep["m_requested"])
    fpath = path.with_suffix(".json")
    write_json(fpath, payload)
    checks = {
        "ratio_bounds": res.ratio_bounds_hold,
        "product_bounds": res.product_bounds_hold,
        "beta_positive": res.beta_empirical > 0 if res.ratios else True,
    }
    return payload, checks, [path, fpath]


COMMANDS = {
    "gen": (prep_gen, exec_gen),
    "verify": (prep_verify, exec_verify),
    "fup-norm": (prep_fup_norm, exec_fup_norm),
    "fup-scan": (prep_fup_scan, exec_fup_scan),
    "hyperbolic-norm": (prep_hyperbolic, exec_hyperbolic),
    "phase-norm": (prep_phase, exec_phase),
    "harmonic": (prep_harmonic, exec_harmonic),
    "weight": (prep_weight, exec_weight),
    "uc-constant": (prep_uc, exec_uc),
    "iterate": (prep_iterate, exec_iterate),
}


# parser -------------------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="fup-lab", description="Fractal uncertainty experiments.")
    ap.add_argument("--version", action="version", version=f"fup-lab {__version__}")
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", help="output file; manifest.json is written beside it")
    common.add_argument("--workers", type=int, default=1, help="worker count (FUP_LAB_THREADS overrides)")
    common.add_argument("--config", help="JSON file of option values")
    sub = ap.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", parents=[common], help="generate a Cantor set or Schottky cover")
    g.add_argument("kind", choices=["cantor", "schottky"])
    g.add_argument("--base", type=int, default=3)
    g.add_argument("--alphabet", default="0,2")
    g.add_argument("--depth", type=int, default=4)
    g.add_argument("--spec", help="Schottky spec JSON (default: symmetric four-disk spec)")

    v = sub.add_parser("verify", parents=[common], help="verify delta-regularity of a set")
    v.add_argument("--set", required=True)
    v.add_argument("--delta", type=float, required=True)
    v.add_argument("--cr", type=float, default=2.0)
    v.add_argument("--alpha0")
    v.add_argument("--alpha1")

    f = sub.add_parser("fup-norm", parents=[common], help="restricted DFT norm")
    f.add_argument("--instance")
    f.add_argument("--x")
    f.add_argument("--y")

    s = sub.add_parser("fup-scan", parents=[common], help="norm scan over depths and beta fit")
    s.add_argument("--cantor", required=True, help="L:digits for X (and Y unless --cantor-y)")
    s.add_argument("--cantor-y", dest="cantor_y")
    s.add_argument("--kmin", type=int, default=2)
    s.add_argument("--kmax", type=int, default=8)

    h = sub.add_parser("hyperbolic-norm", parents=[common], help="hyperbolic FUP operator norm")
    h.add_argument("--set", help="angle-chart set JSON (with --h)")
    h.add_argument("--h", type=float)
    h.add_argument("--chi", help="JSON rectangle [[a, b], [c, d]]")
    h.add_argument("--cantor", default="3:0,2", help="synthetic limit set on two arcs")
    h.add_argument("--kmin", type=int, default=3)
    h.add_argument("--kmax", type=int, default=7)
    h.add_argument("--rho", type=float, default=1.0)

    ph = sub.add_parser("phase-norm", parents=[common], help="phase-operator norm from the catalog")
    ph.add_argument("--phase", default="linear", help=f"one of {PHASE_CATALOG}")
    ph.add_argument("--set", default="3:0,2:5")
    ph.add_argument("--h", type=float)
    ph.add_argument("--rho", type=float, default=1.0)
    ph.add_argument("--spacing", type=float, help="quadrature spacing as a fraction of h (<= 0.1)")

    hm = sub.add_parser("harmonic", parents=[common], help="harmonic-measure Monte Carlo checks")
    hm.add_argument("action", choices=["check"])
    hm.add_argument("--domain", default="slit-strip")
    hm.add_argument("--r", type=float, default=0.5)
    hm.add_argument("--slit", default="-1,0", help="ignored for --domain strip")
    hm.add_argument("--t", type=float, default=0.5)
    hm.add_argument("--paths", default="1e5")
    hm.add_argument("--seed", type=int, default=0)
    hm.add_argument("--F", default="one;exp:1", help="';'-separated test functions")

    w = sub.add_parser("weight", parents=[common], help="build the adapted weight and check it")
    w.add_argument("--y", required=True)
    w.add_argument("--scale", help="dilate Y by this factor first")
    w.add_argument("--delta", type=float, help="defaults to the certified delta of Y")
    w.add_argument("--cr", type=float, required=True)
    w.add_argument("--csv", help="also write grid samples")

    u = sub.add_parser("uc-constant", parents=[common], help="unique continuation constant c3")
    u.add_argument("--y", required=True)
    u.add_argument("--scale", help="dilate Y by this factor (default: unit cells)")
    u.add_argument("--c1", type=float, default=0.25)
    u.add_argument("--offset", type=float)

    it = sub.add_parser("iterate", parents=[common], help="contraction iteration and empirical beta")
    it.add_argument("--x", required=True)
    it.add_argument("--y")
    it.add_argument("--L", type=int, default=3)
    it.add_argument("--T", type=int, default=3)
    it.add_argument("--m", type=int, default=4)
    return ap


def _apply_config_file(ap: argparse.ArgumentParser, argv: list[str]) -> argparse.Namespace:
    ns = ap.parse_args(argv)
    if not getattr(ns, "config", None):
        return ns
    data = _load_json(ns.config, "config")
    if not isinstance(data, dict):
        raise ConfigError("config", "top level must be an object")
    known = set(vars(ns))
    for key in data:
        if key not in known:
            raise ConfigError(f"config.{key}", "unknown option")
    explicit = {a.split("=")[0].lstrip("-").replace("-", "_") for a in argv if a.startswith("--")}
    for key, val in data.items():
        if key not in explicit:
            setattr(ns, key, val)
    return ns


def resolve_workers(flag: int) -> int:
    env = os.environ.get("FUP_LAB_THREADS")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ConfigError("FUP_LAB_THREADS", f"expected an integer, got {env!r}") from None
        return max(1, n)
    return max(1, int(flag or 1))


def _manifest(cfg: ExperimentConfig, files, checks, status, wall) -> dict:
    return {
        "config": cfg.echo(),
        "versions": {"fup_lab": __version__, "numpy": np.__version__, "scipy": scipy.__version__, "python": platform.python_version()},
        "seeds": {k: v for k, v in cfg.params.items() if k == "seed"},
        "outputs": [str(f) for f in files],
        "checks": checks,
        "exit_status": status,
        "wall_time_s": wall,
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def run(cfg: ExperimentConfig) -> int:
    """Validate, execute and write artifacts plus manifest; returns the exit status."""
    if cfg.command not in COMMANDS:
        raise ConfigError("command", f"unknown subcommand {cfg.command!r}")
    prepare, execute = COMMANDS[cfg.command]
    t0 = time.perf_counter()
    prep = prepare(cfg.params)
    try:
        payload, checks, files = execute(prep, cfg)
    except ContractionFailed as exc:
        payload, checks, files = {"error": str(exc)}, {"contraction": False}, []
    checks = {k: bool(v) for k, v in checks.items()}
    status = EXIT_OK if all(checks.values()) else EXIT_FAIL
    out_dir = Path(files[0]).parent if files else Path(cfg.out or ".").parent
    write_json(out_dir / "manifest.json", _manifest(cfg, files, checks, status, time.perf_counter() - t0))
    for name, ok in checks.items():
        print(f"{'PASS' if ok else 'FAIL'} {name}")
    return status


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    ap = build_parser()
    try:
        ns = _apply_config_file(ap, argv)
        params = {k: v for k, v in vars(ns).items() if k not in ("command", "out", "workers", "config")}
        if ns.command == "harmonic":
            params["paths"] = str(params["paths"])
        cfg = ExperimentConfig(ns.command, params, ns.out, resolve_workers(ns.workers))
        return run(cfg)
    except CONFIG_ERRORS as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FupLabError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
