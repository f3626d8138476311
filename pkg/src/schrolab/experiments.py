"""Named experiments, their JSON schemas, and the batch runner.

An experiment file is a JSON object::

    {
      "seed": 0,
      "output_dir": "out",
      "caps": {"max_grid_points": 4000000, "max_qubits": 14, "max_krylov_steps": 100000},
      "experiments": [{"name": "...", "kind": "gap-law", ...kind parameters...}]
    }

Every experiment writes ``<output_dir>/<name>.json`` (plus a CSV for tabular
kinds); the run writes ``manifest.json`` with the tool version, the SHA-256
of the canonical spec, seeds, verdicts and wall-clock times.  Report files
contain no timestamps, so identical inputs give byte-identical reports.
"""

from __future__ import annotations

import copy
import csv
import hashlib
import io
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from functools import partial
from importlib import resources
from pathlib import Path
from typing import Any, Callable

import jsonschema
import numpy as np

from . import __version__
from .atomic import atomic_write_json, atomic_write_text, dumps_json
from .double_well import (AGMON_S0, DEFAULT_M, V_DW, X_STAR, agmon_distance, calibrate,
                          gap_law_fit, right_well_mass)
from .dynamics import MeasurementM, measure_acceptance, propagate
from .grid import (MAX_GRID_POINTS, Grid1D, PotentialTerm, TensorGrid, assemble_schrodinger,
                   lowest_eigenpairs)
from .pauli import TimHamiltonian
from .perturbation import run_suite, suite_summary
from .reduction import (ReductionConfig, build_reduction, complement_gap, coupling_norm,
                        precondition_tim, verify_dynamics, verify_spectrum)
from .stoquastic import assemble_hstar, grid_ground_energy, penalty_gap
from .universality import XXZZHamiltonian, embed_xxzz, random_state, verify_sector_dynamics

KINDS = ("spectrum-1d", "reduce", "verify-spectrum", "verify-dynamics", "stoq-embed",
         "tim-embed", "pert-suite", "gap-law", "sdg-sim")

DEFAULT_CAPS = {"max_grid_points": MAX_GRID_POINTS, "max_qubits": 14,
                "max_krylov_steps": 100_000}

ACCEPT_THRESHOLD = 2.0 / 3.0


class SpecError(ValueError):
    """The experiment file is malformed or violates its schema."""


class ResourceCapError(ValueError):
    """A configured resource cap would be exceeded."""


# ---------------------------------------------------------------- schemas

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_posint = {"type": "integer", "minimum": 1}
_coord = {"type": "integer", "minimum": 0, "maximum": 2}

_POTENTIAL = {
    "type": "array",
    "items": {
        "oneOf": [
            {"type": "object", "required": ["kind"], "additionalProperties": False,
             "properties": {"kind": {"const": "zero"}}},
            {"type": "object", "required": ["kind", "coord"], "additionalProperties": False,
             "properties": {"kind": {"const": "double_well"}, "coord": _coord, "scale": _num}},
            {"type": "object", "required": ["kind", "coord", "k"], "additionalProperties": False,
             "properties": {"kind": {"const": "harmonic"}, "coord": _coord, "k": _num}},
            {"type": "object", "required": ["kind", "coord", "coeffs"],
             "additionalProperties": False,
             "properties": {"kind": {"const": "polynomial"}, "coord": _coord,
                            "coeffs": {"type": "array", "items": _num, "minItems": 1}}},
            {"type": "object", "required": ["kind", "coords", "coef"],
             "additionalProperties": False,
             "properties": {"kind": {"const": "bilinear"},
                            "coords": {"type": "array", "items": _coord,
                                       "minItems": 2, "maxItems": 2},
                            "coef": _num}},
        ]
    },
}

_STATE = {
    "oneOf": [
        {"type": "object", "required": ["kind", "modes"], "additionalProperties": False,
         "properties": {"kind": {"enum": ["sine_mode", "plane_wave"]},
                        "modes": {"type": "array", "items": {"type": "integer"},
                                  "minItems": 1, "maxItems": 3}}},
        {"type": "object", "required": ["kind", "center", "width"], "additionalProperties": False,
         "properties": {"kind": {"const": "gaussian"},
                        "center": {"type": "array", "items": _num, "minItems": 1, "maxItems": 3},
                        "width": _pos,
                        "momentum": {"type": "array", "items": _num, "minItems": 1,
                                     "maxItems": 3}}},
    ]
}

_TIM = {
    "oneOf": [
        {"type": "string", "pattern": "^bundled:[a-z0-9_]+$"},
        {"type": "object", "required": ["n", "a", "b"],
         "properties": {"n": {"type": "integer", "minimum": 1, "maximum": 3},
                        "a": {"type": "array", "items": _num},
                        "b": {"type": "array", "items": _num},
                        "bzz": {"type": "array",
                                "items": {"type": "array", "minItems": 3, "maxItems": 3}}}},
    ]
}

_CONFIG = {
    "type": "object", "additionalProperties": False,
    "properties": {"w": _pos, "m": {"type": ["integer", "null"], "minimum": 3},
                   "M1": _pos, "M2": _pos, "t": _num, "eps1": _pos,
                   "m_start": {"type": "integer", "minimum": 3},
                   "m_max": {"type": "integer", "minimum": 3}, "refine_tol": _pos,
                   "h_bracket": {"type": "array", "items": _pos, "minItems": 2, "maxItems": 2},
                   "eig_tol": _pos, "t_max": _pos},
}

_G_SWEEP = {"type": "array", "items": {"type": "number", "minimum": 1}, "minItems": 1}


def _kind_schema(kind: str, props: dict, required: list[str]) -> dict:
    base = {"name": {"type": "string", "pattern": "^[A-Za-z0-9_.-]+$"},
            "kind": {"const": kind}, "seed": {"type": "integer", "minimum": 0}}
    return {"type": "object", "required": ["name", "kind", *required],
            "additionalProperties": False, "properties": {**base, **props}}


KIND_SCHEMAS: dict[str, dict] = {
    "spectrum-1d": _kind_schema("spectrum-1d", {
        "m": _posint, "boundary": {"enum": ["dirichlet", "periodic"]}, "g": _pos,
        "potential": _POTENTIAL, "k": _posint, "tol": _pos,
        "expected": {"type": "array", "items": _num}, "expected_tol": _pos}, ["m"]),
    "reduce": _kind_schema("reduce", {
        "tim": _TIM, "config": _CONFIG, "G_star": {"type": "number", "minimum": 1},
        "precondition": {"type": "boolean"}}, ["tim"]),
    "verify-spectrum": _kind_schema("verify-spectrum", {
        "tim": _TIM, "config": _CONFIG, "G_star": _G_SWEEP, "precondition": {"type": "boolean"},
        "require_decreasing": {"type": "boolean"}}, ["tim", "G_star"]),
    "verify-dynamics": _kind_schema("verify-dynamics", {
        "tim": _TIM, "config": _CONFIG, "G_star": _G_SWEEP, "t": {"type": "number", "minimum": 0},
        "precondition": {"type": "boolean"}, "require_decreasing": {"type": "boolean"}},
        ["tim", "G_star", "t"]),
    "stoq-embed": _kind_schema("stoq-embed", {
        "n": {"type": "integer", "minimum": 1, "maximum": 3},
        "points": {"type": "integer", "minimum": 3},
        "g": {"oneOf": [_pos, {"type": "array", "items": _pos}]},
        "potential": _POTENTIAL, "closure": {"type": "boolean"}, "tol": _pos,
        "max_locality": _posint}, ["n", "points"]),
    "tim-embed": _kind_schema("tim-embed", {
        "n": {"type": "integer", "minimum": 2, "maximum": 6}, "instances": _posint,
        "times": {"type": "array", "items": _num, "minItems": 1}, "tol": _pos}, []),
    "pert-suite": _kind_schema("pert-suite", {"instances": _posint}, []),
    "gap-law": _kind_schema("gap-law", {
        "h": {"type": "array", "items": _pos, "minItems": 2}, "m": {"type": "integer", "minimum": 3},
        "tolerance": _pos, "s0_tol": _pos}, ["h"]),
    "sdg-sim": _kind_schema("sdg-sim", {
        "n": {"type": "integer", "minimum": 1, "maximum": 3}, "m": _posint,
        "boundary": {"enum": ["dirichlet", "periodic"]},
        "g": {"oneOf": [_pos, {"type": "array", "items": _pos}]},
        "potential": _POTENTIAL, "initial": _STATE,
        "mu": {"type": "object", "required": ["coords", "state"], "additionalProperties": False,
               "properties": {"coords": {"type": "integer", "minimum": 1, "maximum": 3},
                              "state": _STATE}},
        "t": {"type": "number", "minimum": 0},
        "method": {"enum": ["dense", "krylov", "crank_nicolson", "split_step"]},
        "tol": _pos, "expect": {"enum": ["yes", "no"]}}, ["n", "m", "initial", "mu", "t"]),
}

SPEC_SCHEMA = {
    "type": "object", "required": ["experiments"], "additionalProperties": False,
    "properties": {
        "seed": {"type": "integer", "minimum": 0},
        "output_dir": {"type": "string"},
        "caps": {"type": "object", "additionalProperties": False,
                 "properties": {"max_grid_points": _posint, "max_qubits": _posint,
                                "max_krylov_steps": _posint}},
        "experiments": {"type": "array", "minItems": 1,
                        "items": {"type": "object", "required": ["name", "kind"],
                                  "properties": {"kind": {"enum": list(KINDS)}}}},
    },
}


def validate_spec(spec: Any) -> list[str]:
    """All schema violations of an experiment file, as readable messages."""
    errors = []
    v = jsonschema.Draft202012Validator(SPEC_SCHEMA)
    errors += [f"{'/'.join(map(str, e.absolute_path)) or '<root>'}: {e.message}"
               for e in sorted(v.iter_errors(spec), key=lambda e: list(e.absolute_path))]
    if errors:
        return errors
    names = set()
    for i, exp in enumerate(spec["experiments"]):
        kv = jsonschema.Draft202012Validator(KIND_SCHEMAS[exp["kind"]])
        for e in kv.iter_errors(exp):
            path = "/".join(map(str, e.absolute_path))
            errors.append(f"experiments/{i}{'/' + path if path else ''} ({exp.get('name')}): "
                          f"{e.message}")
        if exp["name"] in names:
            errors.append(f"experiments/{i}: duplicate name {exp['name']!r}")
        names.add(exp["name"])
    return errors


def load_spec(path: str | Path) -> dict:
    try:
        with open(path) as fh:
            spec = json.load(fh)
    except json.JSONDecodeError as exc:
        raise SpecError(f"{path}: invalid JSON ({exc})") from None
    errors = validate_spec(spec)
    if errors:
        raise SpecError("\n".join(errors))
    return spec


def config_hash(spec: dict) -> str:
    return hashlib.sha256(json.dumps(spec, sort_keys=True, separators=(",", ":"))
                          .encode()).hexdigest()


# ---------------------------------------------------------------- payload builders

def bundled_instances() -> list[str]:
    root = resources.files("schrolab") / "instances"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".json"))


def resolve_tim(payload: str | dict) -> TimHamiltonian:
    if isinstance(payload, str):
        name = payload.split(":", 1)[1]
        path = resources.files("schrolab") / "instances" / f"{name}.json"
        if not path.is_file():
            raise SpecError(f"unknown bundled instance {name!r}; have {bundled_instances()}")
        return TimHamiltonian.from_json(path.read_text())
    return TimHamiltonian.from_json(payload)


def build_potential(items: list[dict]) -> list[PotentialTerm]:
    terms = []
    for it in items:
        kind = it["kind"]
        if kind == "zero":
            continue
        if kind == "double_well":
            terms.append(PotentialTerm((it["coord"],), partial(_scaled_dw, it.get("scale", 1.0)),
                                       "double_well"))
        elif kind == "harmonic":
            terms.append(PotentialTerm((it["coord"],), partial(_poly, (0.0, 0.0, it["k"])),
                                       "harmonic"))
        elif kind == "polynomial":
            terms.append(PotentialTerm((it["coord"],), partial(_poly, tuple(it["coeffs"])),
                                       "polynomial"))
        elif kind == "bilinear":
            terms.append(PotentialTerm(tuple(it["coords"]), partial(_bilinear, it["coef"]),
                                       "bilinear"))
    return terms


def _scaled_dw(scale, x):
    return scale * V_DW(x)


def _poly(coeffs, x):
    return np.polynomial.polynomial.polyval(x, coeffs)


def _bilinear(coef, x, y):
    return coef * x * y


def build_state(spec: dict, dims: tuple[Grid1D, ...]) -> np.ndarray:
    """Product state on the given coordinates, l2-normalized on the grid.

    Gaussians are ``exp(-(x - center)² / (2 width²) + i momentum x)`` per
    coordinate; sine modes ``sin(j π (x + 1) / 2)``; plane waves ``exp(i π j x)``.
    """
    kind = spec["kind"]
    if kind in ("sine_mode", "plane_wave"):
        modes = spec["modes"]
        if len(modes) != len(dims):
            raise SpecError(f"{kind} needs one mode per coordinate ({len(dims)})")
    factors = []
    for u, d in enumerate(dims):
        x = d.nodes
        if kind == "sine_mode":
            if d.boundary != "dirichlet":
                raise SpecError("sine modes need a Dirichlet grid")
            f = np.sin(spec["modes"][u] * np.pi * (x + 1.0) / 2.0).astype(complex)
        elif kind == "plane_wave":
            if d.boundary != "periodic":
                raise SpecError("plane waves need a periodic grid")
            f = np.exp(1j * np.pi * spec["modes"][u] * x)
        else:
            if len(spec["center"]) != len(dims):
                raise SpecError("gaussian center needs one entry per coordinate")
            k = spec.get("momentum", [0.0] * len(dims))[u]
            f = np.exp(-((x - spec["center"][u]) ** 2) / (2 * spec["width"] ** 2) + 1j * k * x)
        factors.append(f)
    out = factors[0]
    for f in factors[1:]:
        out = np.kron(out, f)
    nrm = np.linalg.norm(out)
    if nrm == 0:
        raise SpecError(f"state {spec} vanishes on the grid")
    out = out / nrm
    return out.real.copy() if np.all(out.imag == 0) else out


def _g_list(g, n: int) -> list[float]:
    if isinstance(g, (int, float)):
        return [float(g)] * n
    if len(g) != n:
        raise SpecError(f"need {n} kinetic coefficients, got {len(g)}")
    return [float(x) for x in g]


def _reduction_config(p: dict, G: float) -> ReductionConfig:
    cfg = dict(p.get("config", {}))
    if "h_bracket" in cfg:
        cfg["h_bracket"] = tuple(cfg["h_bracket"])
    return ReductionConfig(G_star=float(G), **cfg)


def _prepared_tim(p: dict, caps: dict) -> tuple[TimHamiltonian, dict]:
    H = resolve_tim(p["tim"])
    if H.n > caps["max_qubits"]:
        raise ResourceCapError(f"{H.n} qubits exceeds cap {caps['max_qubits']}")
    info = {"input": H.to_json()}
    if p.get("precondition", True):
        M2 = p.get("config", {}).get("M2", ReductionConfig.M2)
        pre = precondition_tim(H, M2)
        info.update({"preconditioned": pre.H.to_json(), "z_conjugated": list(pre.mask),
                     "clamped": list(pre.clamped), "eigenvalue_shift_bound": pre.eigenvalue_bound})
        H = pre.H
    return H, info


def _check_reduction_size(cfg: ReductionConfig, n: int, caps: dict) -> None:
    m = cfg.m if cfg.m is not None else cfg.m_max
    if cfg.m is not None and m**n > caps["max_grid_points"]:
        raise ResourceCapError(f"{m}^{n} grid points exceeds cap {caps['max_grid_points']}")


def _decreasing(vals: list[float]) -> bool:
    return all(b < a for a, b in zip(vals, vals[1:]))


# ---------------------------------------------------------------- experiments

@dataclass
class Outcome:
    result: dict
    verdict: bool
    table: tuple[list[str], list[list]] | None = None
    extra: dict = field(default_factory=dict)


def exp_spectrum_1d(p: dict, seed: int, caps: dict) -> Outcome:
    grid = TensorGrid((Grid1D(p["m"], p.get("boundary", "dirichlet")),))
    op = assemble_schrodinger(grid, [p.get("g", 1.0)], build_potential(p.get("potential", [])),
                              max_points=caps["max_grid_points"])
    tol = p.get("tol", 1e-10)
    spec = lowest_eigenpairs(op, min(p.get("k", 6), op.N), tol=tol, seed=seed)
    res = {"eigenvalues": spec.eigenvalues.tolist(), "residuals": spec.residuals.tolist(),
           "method": spec.method, "grid": grid.to_json()}
    ok = True
    if "expected" in p:
        exp = np.asarray(p["expected"], dtype=float)
        k = min(len(exp), len(spec.eigenvalues))
        errs = np.abs(spec.eigenvalues[:k] - exp[:k])
        res["expected_errors"] = errs.tolist()
        ok = bool(np.all(errs <= p.get("expected_tol", 1e-6)))
    rows = [[j, float(e), float(r)] for j, (e, r) in
            enumerate(zip(spec.eigenvalues, spec.residuals))]
    return Outcome(res, ok, (["k", "eigenvalue", "residual"], rows))


def exp_reduce(p: dict, seed: int, caps: dict) -> Outcome:
    H, info = _prepared_tim(p, caps)
    cfg = _reduction_config(p, p.get("G_star", ReductionConfig.G_star))
    _check_reduction_size(cfg, H.n, caps)
    art = build_reduction(H, cfg)
    W = art.W()
    iso = float(np.abs(W.T @ W - np.eye(W.shape[1])).max())
    cp = coupling_norm(art)
    gap = complement_gap(art, seed=seed)
    res = {"tim": info, "config": cfg.to_json(), "c": art.c, "coupling_norm": cp.norm,
           "x_residual": cp.x_residual, "s_defect": art.s_block_defect(),
           "isometry_error": iso, "gap": gap, "grid": art.grid.to_json(), **art.meta,
           "encodings": [e.to_json() for e in art.encodings]}
    return Outcome(res, iso <= 1e-10 and gap["delta"] > 0)


def _sweep(p: dict, caps: dict, fn: Callable) -> tuple[dict, list]:
    H, info = _prepared_tim(p, caps)
    runs = []
    for G in p["G_star"]:
        cfg = _reduction_config(p, G)
        _check_reduction_size(cfg, H.n, caps)
        art = build_reduction(H, cfg)
        runs.append((G, art, fn(art, H)))
    return info, runs


def exp_verify_spectrum(p: dict, seed: int, caps: dict) -> Outcome:
    info, runs = _sweep(p, caps, lambda art, H: verify_spectrum(art, H))
    diffs = [rep.max_diff for _, _, rep in runs]
    dec = _decreasing(diffs)
    ok = all(rep.verdict for _, _, rep in runs) and (dec or not p.get("require_decreasing", False))
    rows = [[G, r["k"], r["qubit"], r["grid"], r["diff"], rep.bound]
            for G, _, rep in runs for r in rep.rows]
    res = {"tim": info, "runs": [{"G_star": G, **rep.to_json(),
                                   "encodings": [e.to_json() for e in art.encodings]}
                                  for G, art, rep in runs],
           "max_diffs": diffs, "strictly_decreasing": dec}
    return Outcome(res, ok, (["G_star", "k", "lambda_qubit", "lambda_grid", "diff", "bound"], rows))


def exp_verify_dynamics(p: dict, seed: int, caps: dict) -> Outcome:
    t = float(p["t"])
    info, runs = _sweep(p, caps, lambda art, H: verify_dynamics(art, t, H))
    errs = [rep.error for _, _, rep in runs]
    dec = _decreasing(errs)
    ok = all(rep.verdict for _, _, rep in runs) and (dec or not p.get("require_decreasing", False))
    rows = [[G, rep.error, rep.envelope, rep.meta["allowance"]] for G, _, rep in runs]
    res = {"tim": info, "t": t, "runs": [{"G_star": G, **rep.to_json(),
                                          "encodings": [e.to_json() for e in art.encodings]}
                                         for G, art, rep in runs],
           "errors": errs, "strictly_decreasing": dec}
    return Outcome(res, ok, (["G_star", "error", "envelope", "allowance"], rows))


def exp_stoq_embed(p: dict, seed: int, caps: dict) -> Outcome:
    n, points = p["n"], p["points"]
    nq = n * (points - 1)
    if nq > caps["max_qubits"]:
        raise ResourceCapError(f"{nq} qubits exceeds cap {caps['max_qubits']}")
    grid = TensorGrid.uniform(n, points)
    g = _g_list(p.get("g", 1.0), n)
    pot = build_potential(p.get("potential", []))
    hs = assemble_hstar(grid, g, pot, closure=p.get("closure", True))
    lam_star = float(np.linalg.eigvalsh(hs.dense())[0])
    lam_grid = grid_ground_energy(grid, g, pot)
    pen = penalty_gap(n, points - 1)
    diff = abs(lam_star - lam_grid)
    tol = p.get("tol", 1e-10)
    max_loc = p.get("max_locality", 3)
    checks = {"ground_energy": diff <= tol, "stoquastic": hs.verdict.ok,
              "penalty_gap": pen["gap"] == 4.0 and pen["kernel_is_code"],
              "locality": hs.verdict.max_locality <= max_loc}
    res = {"qubits": nq, "lambda_hstar": lam_star, "lambda_grid": lam_grid, "difference": diff,
           "c": hs.c, "terms": len(hs.all_terms), "certificate": hs.verdict.to_json(),
           "locality_histogram": {str(k): int(v) for k, v in
                                  zip(*np.unique(hs.verdict.localities, return_counts=True))},
           "penalty": pen, "checks": checks, "max_locality_allowed": max_loc}
    return Outcome(res, all(checks.values()))


def exp_tim_embed(p: dict, seed: int, caps: dict) -> Outcome:
    n, count = p.get("n", 3), p.get("instances", 100)
    times, tol = p.get("times", [0.5, 2.0]), p.get("tol", 1e-10)
    rng = np.random.default_rng(seed)
    rows = []
    for i in range(count):
        emb = embed_xxzz(XXZZHamiltonian.random(n, rng))
        psi = random_state(2**n, rng)
        for t in times:
            r = verify_sector_dynamics(emb, psi, t)
            rows.append([i, t, r.error, r.leakage])
    err = max(r[2] for r in rows)
    leak = max(r[3] for r in rows)
    res = {"n": n, "instances": count, "times": times, "max_error": err, "max_leakage": leak,
           "tol": tol}
    return Outcome(res, err <= tol and leak <= tol, (["instance", "t", "error", "leakage"], rows))


def exp_pert_suite(p: dict, seed: int, caps: dict) -> Outcome:
    summary = suite_summary(run_suite(p.get("instances", 200), seed0=seed))
    ok = all(v["failed"] == 0 and v["passed"] >= p.get("instances", 200)
             for v in summary.values())
    return Outcome({"lemmas": summary}, ok)


def exp_gap_law(p: dict, seed: int, caps: dict) -> Outcome:
    m = p.get("m", DEFAULT_M)
    fit = gap_law_fit(p["h"], m)
    s0 = agmon_distance(V_DW, 0.0, -X_STAR, X_STAR)
    s0_err = abs(s0 - AGMON_S0)
    ok = fit["relative_deviation"] <= p.get("tolerance", 0.2) and s0_err <= p.get("s0_tol", 1e-9)
    rows = [[h, 1.0 / h, gap, float(np.log(gap))] for h, gap in zip(fit["h"], fit["gap"])]
    res = {**fit, "m": m, "S0_quadrature": s0, "S0_error": s0_err,
           "encodings": [{"h": h, "grid": Grid1D(m).to_json()} for h in fit["h"]]}
    return Outcome(res, ok, (["h", "inv_h", "gap", "ln_gap"], rows))


def exp_sdg_sim(p: dict, seed: int, caps: dict) -> Outcome:
    n, boundary = p["n"], p.get("boundary", "dirichlet")
    grid = TensorGrid.uniform(n, p["m"], boundary)
    op = assemble_schrodinger(grid, _g_list(p.get("g", 1.0), n),
                              build_potential(p.get("potential", [])),
                              max_points=caps["max_grid_points"])
    psi = build_state(p["initial"], grid.dims)
    k = p["mu"]["coords"]
    if k > n:
        raise SpecError("mu acts on more coordinates than the grid has")
    lead = TensorGrid(grid.dims[:k])
    M = MeasurementM(build_state(p["mu"]["state"], lead.dims), lead)
    method = p.get("method", "dense" if op.N <= 4096 else "krylov")
    tol = p.get("tol", 1e-10)
    prop = propagate(op, psi, float(p["t"]), method=method, tol=tol,
                     max_steps=caps["max_krylov_steps"])
    acc = measure_acceptance(prop.psi, M, grid)
    decision = "yes" if acc > ACCEPT_THRESHOLD else "no"
    healthy = prop.norm_drift <= max(tol, 1e-12)
    ok = healthy and (p.get("expect") is None or p["expect"] == decision)
    res = {"acceptance": acc, "decision": decision, "threshold": ACCEPT_THRESHOLD,
           "method": method, "steps": prop.steps, "norm_drift": prop.norm_drift,
           "energy_drift": prop.energy_drift, "grid": grid.to_json()}
    return Outcome(res, ok)


RUNNERS: dict[str, Callable[[dict, int, dict], Outcome]] = {
    "spectrum-1d": exp_spectrum_1d, "reduce": exp_reduce,
    "verify-spectrum": exp_verify_spectrum, "verify-dynamics": exp_verify_dynamics,
    "stoq-embed": exp_stoq_embed, "tim-embed": exp_tim_embed, "pert-suite": exp_pert_suite,
    "gap-law": exp_gap_law, "sdg-sim": exp_sdg_sim,
}


# ---------------------------------------------------------------- runner

def _csv_text(header: list[str], rows: list[list]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in r])
    return buf.getvalue()


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    return obj


def run_experiment(exp: dict, seed: int, caps: dict, out_dir: str) -> dict:
    """Run one experiment, write its report files, return its manifest entry."""
    params = {k: v for k, v in exp.items() if k not in ("name", "kind", "seed")}
    t0 = time.perf_counter()
    report = {"name": exp["name"], "kind": exp["kind"], "seed": seed,
              "params": copy.deepcopy(params), "tool_version": __version__}
    files = [f"{exp['name']}.json"]
    error = None
    try:
        out = RUNNERS[exp["kind"]](exp, seed, caps)
        report["verdict"] = bool(out.verdict)
        report["result"] = _jsonable(out.result)
        if out.table is not None:
            name = f"{exp['name']}.csv"
            atomic_write_text(Path(out_dir) / name, _csv_text(*out.table))
            files.append(name)
            report["table"] = name
    except Exception as exc:  # surfaced with the experiment's context
        error = f"{type(exc).__name__}: {exc}"
        report["verdict"] = False
        report["error"] = error
    atomic_write_json(Path(out_dir) / files[0], report)
    entry = {"name": exp["name"], "kind": exp["kind"], "seed": seed,
             "verdict": report["verdict"], "report": files[0], "files": files,
             "wall_time_s": time.perf_counter() - t0}
    if error:
        entry["error"] = error
    return entry


def run(spec: dict, out_dir: str | Path | None = None, jobs: int = 1,
        spec_path: str | None = None) -> dict:
    """Run every experiment of a validated spec and write ``manifest.json``."""
    errors = validate_spec(spec)
    if errors:
        raise SpecError("\n".join(errors))
    out_dir = Path(out_dir or spec.get("output_dir", "schrolab-out"))
    out_dir.mkdir(parents=True, exist_ok=True)
    caps = {**DEFAULT_CAPS, **spec.get("caps", {})}
    base_seed = spec.get("seed", 0)
    tasks = [(exp, exp.get("seed", base_seed)) for exp in spec["experiments"]]
    t0 = time.perf_counter()
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            futs = [pool.submit(run_experiment, e, s, caps, str(out_dir)) for e, s in tasks]
            entries = [f.result() for f in futs]
    else:
        entries = [run_experiment(e, s, caps, str(out_dir)) for e, s in tasks]
    manifest = {
        "tool": "schrolab", "version": __version__, "config_sha256": config_hash(spec),
        "spec_path": spec_path, "caps": caps, "seeds": {e["name"]: e["seed"] for e in entries},
        "experiments": entries, "all_passed": all(e["verdict"] for e in entries),
        "wall_time_s": time.perf_counter() - t0,
        "created": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    atomic_write_json(out_dir / "manifest.json", manifest)
    return manifest


# ---------------------------------------------------------------- plot data

PLOT_NOTE = ("quartic double well V(x) = (x - 1/2)^2 (x + 1/2)^2 after gap calibration; "
             "not a square-well model")


def _encodings_in(report: dict) -> list[dict]:
    res = report.get("result", {})
    if "encodings" in res:
        return res["encodings"]
    out = []
    for run_ in res.get("runs", []):
        out += run_.get("encodings", [])
    return out


def emit_plotdata(report_path: str | Path, out_path: str | Path | None = None,
                  index: int = 0) -> Path:
    """CSV of (x, V, psi0, psi1, psi_right, psi_left) for one stored encoding.

    The eigenfunctions are rescaled to unit L² norm on [-1, 1], i.e. grid
    vectors divided by sqrt(spacing).
    """
    report_path = Path(report_path)
    with open(report_path) as fh:
        report = json.load(fh)
    encs = _encodings_in(report)
    if not encs:
        raise SpecError(f"{report_path} holds no double-well encodings")
    if not 0 <= index < len(encs):
        raise SpecError(f"index {index} out of range (report has {len(encs)} encodings)")
    info = encs[index]
    m = info["grid"]["m"]
    enc = calibrate(info["h"], m, h_range=(0.0, np.inf), check_refinement=False)
    d = enc.grid.spacing
    cols = np.column_stack([enc.grid.nodes, enc.potential, enc.psi0 / np.sqrt(d),
                            enc.psi1 / np.sqrt(d), enc.psi_right / np.sqrt(d),
                            enc.psi_left / np.sqrt(d)])
    header = [
        f"# schrolab {__version__} plot data from {report_path.name} (encoding {index})",
        f"# {PLOT_NOTE}",
        f"# h = {enc.h!r}, C_h = {enc.C!r}, G = {enc.G!r}, m = {m}, spacing = {d!r}",
        f"# E0 = {enc.E0!r}, E1 = {enc.E1!r}, right-well mass of psi_right = "
        f"{right_well_mass(enc)!r}",
        "# columns: x = grid node; V = calibrated potential C_h V(x); psi0, psi1 = two lowest "
        f"eigenfunctions (L2-normalized); psi_right = (psi0 + c psi1)/sqrt2; "
        f"psi_left = (psi0 - c psi1)/sqrt2 with sign c = {enc.sign:+d}",
    ]
    body = _csv_text(["x", "V", "psi0", "psi1", "psi_right", "psi_left"], cols.tolist())
    out_path = Path(out_path) if out_path else report_path.with_name(
        f"{report_path.stem}-plot{index}.csv")
    atomic_write_text(out_path, "\n".join(header) + "\n" + body)
    return out_path


def read_plotdata(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Header comment lines and the numeric table of a plot-data CSV."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    comments = [l for l in lines if l.startswith("#")]
    data = [l for l in lines if not l.startswith("#")]
    table = np.array([[float(x) for x in row] for row in csv.reader(data[1:])])
    return comments, table


__all__ = ["KINDS", "KIND_SCHEMAS", "SPEC_SCHEMA", "SpecError", "ResourceCapError",
           "validate_spec", "load_spec", "run", "run_experiment", "emit_plotdata",
           "read_plotdata", "dumps_json", "bundled_instances", "resolve_tim"]
