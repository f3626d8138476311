"""Quartic double well, its gap-calibrated operator and smoothed sign.

The calibrated operator is ``X(h) = C_h (-h² d²/dx² + V_dw)`` on a Dirichlet
grid over [-1, 1], with ``C_h`` fixed so that its two lowest levels are
exactly 2 apart.  The two lowest eigenvectors then play the role of the
qubit basis ``|+>``, ``|->`` and their sum/difference the wells ``|0>``, ``|1>``.

Eigenproblems are solved separately in the even and odd parity sectors of
the (reflection-symmetric) grid, which makes all parity statements exact up
to round-off rather than up to eigensolver tolerance.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.integrate import quad
from scipy.optimize import brentq

from .atomic import atomic_write_bytes, atomic_write_json
from .grid import BISECTION_TOL, Grid1D, SparseSymOp, TensorGrid, _lap1d_matrix

X_STAR = 0.5
AGMON_S0 = 1.0 / 6.0
DEFAULT_H_RANGE = (0.02, 0.15)
# G(h) = C_h h² is only monotone below h ~ 0.13, so the inverse map brackets there
DEFAULT_G_BRACKET = (0.02, 0.12)
DEFAULT_M = 2001
DEFAULT_STATES = 18
CACHE_ENV = "SCHROLAB_CACHE"


class CalibrationError(RuntimeError):
    """The tunneling gap did not converge under grid refinement."""


class AttainableRangeError(ValueError):
    """A requested kinetic scale is outside what the h bracket can produce."""

    def __init__(self, G: float, interval: tuple[float, float], qubit: int | None = None):
        where = "" if qubit is None else f"qubit {qubit}: "
        super().__init__(f"{where}G={G:.6g} outside attainable interval "
                         f"[{interval[0]:.6g}, {interval[1]:.6g}]")
        self.G = G
        self.interval = interval
        self.qubit = qubit


@dataclass(frozen=True)
class DoubleWellPotential:
    """V(x) = (x - 1/2)² (x + 1/2)²."""

    minima: tuple[float, float] = (-X_STAR, X_STAR)

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return (x - X_STAR) ** 2 * (x + X_STAR) ** 2

    @staticmethod
    def second_derivative(x):
        x = np.asarray(x, dtype=float)
        return 12.0 * x**2 - 1.0


V_DW = DoubleWellPotential()


def _mollifier(y: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    pos = y > 0
    out[pos] = np.exp(-1.0 / y[pos])
    return out


def smooth_sign(w: float, x) -> np.ndarray | float:
    """Smooth odd step equal to sign(x) for |x| >= w and monotone in between."""
    if w <= 0:
        raise ValueError("w must be positive")
    xa = np.asarray(x, dtype=float)
    up = _mollifier(np.atleast_1d((1.0 + xa / w) / 2.0))
    dn = _mollifier(np.atleast_1d((1.0 - xa / w) / 2.0))
    val = (up - dn) / (up + dn)
    return float(val[0]) if xa.ndim == 0 else val.reshape(xa.shape)


@dataclass(frozen=True)
class SmoothSign:
    w: float

    def __call__(self, x):
        return smooth_sign(self.w, x)

    def measured_lipschitz(self, samples: int = 100_001) -> float:
        """Largest finite-difference slope over [-w, w]; compare with 2/w."""
        x = np.linspace(-self.w, self.w, samples)
        return float(np.max(np.abs(np.diff(self(x)) / np.diff(x))))


def agmon_distance(V, E: float, x: float, y: float) -> float:
    """Integral of sqrt(max(V - E, 0)) along the segment between x and y."""
    if x == y:
        return 0.0
    lo, hi = min(x, y), max(x, y)
    val, _ = quad(lambda s: np.sqrt(max(float(V(s)) - E, 0.0)), lo, hi,
                  epsabs=1e-13, epsrel=1e-13, limit=200)
    return float(val)


def _parity_bases(m: int) -> tuple[sp.csr_matrix, sp.csr_matrix]:
    """Orthonormal even/odd bases of R^m under index reversal, as sparse columns."""
    p = m // 2
    rows_e, cols_e, vals_e = [], [], []
    rows_o, cols_o, vals_o = [], [], []
    s = 1.0 / np.sqrt(2.0)
    # Columns ordered from the centre outward so that B^T A B stays tridiagonal
    col_e = 0
    if m % 2:
        rows_e.append(p), cols_e.append(0), vals_e.append(1.0)
        col_e = 1
    for i in range(p):
        left = p - 1 - i
        right = m - 1 - left
        rows_e += [left, right]
        cols_e += [col_e + i] * 2
        vals_e += [s, s]
        rows_o += [left, right]
        cols_o += [i] * 2
        vals_o += [-s, s]
    even = sp.csr_matrix((vals_e, (rows_e, cols_e)), shape=(m, col_e + p))
    odd = sp.csr_matrix((vals_o, (rows_o, cols_o)), shape=(m, p))
    return even, odd


def symmetric_samples(grid: Grid1D, fn) -> np.ndarray:
    """Samples of an even function made exactly mirror-symmetric on the grid."""
    v = np.asarray(fn(grid.nodes), dtype=float)
    return 0.5 * (v + v[::-1])


def antisymmetric_samples(grid: Grid1D, fn) -> np.ndarray:
    """Samples of an odd function made exactly mirror-antisymmetric on the grid."""
    v = np.asarray(fn(grid.nodes), dtype=float)
    return 0.5 * (v - v[::-1])


def _sector_eigs(mat: sp.csr_matrix, basis: sp.csr_matrix, k: int):
    red = (basis.T @ mat @ basis).tocsr()
    k = min(k, red.shape[0])
    w, y = la.eigh_tridiagonal(red.diagonal(), red.diagonal(1), select="i",
                               select_range=(0, k - 1), lapack_driver="stebz",
                               tol=BISECTION_TOL)
    return w, basis @ y


def parity_spectrum(grid: Grid1D, kinetic: float, potential: np.ndarray, n_states: int):
    """Lowest ``n_states`` eigenpairs of ``kinetic*(-d²) + diag(potential)``
    with a mirror-symmetric potential, merged from the two parity sectors.

    Returns eigenvalues, eigenvectors (columns) and parities (+1 even, -1 odd).
    """
    if grid.boundary != "dirichlet":
        raise ValueError("parity solver expects a Dirichlet grid")
    mat = (kinetic * _lap1d_matrix(grid) + sp.diags(potential)).tocsr()
    even, odd = _parity_bases(grid.m)
    half = (n_states + 1) // 2 + 1
    we, ve = _sector_eigs(mat, even, half)
    wo, vo = _sector_eigs(mat, odd, half)
    w = np.concatenate([we, wo])
    v = np.hstack([ve, vo])
    par = np.concatenate([np.ones(len(we)), -np.ones(len(wo))])
    order = np.argsort(w, kind="stable")[:n_states]
    return w[order], v[:, order], par[order]


def _raw_spectrum(h: float, grid: Grid1D, n_states: int):
    V = symmetric_samples(grid, V_DW)
    return parity_spectrum(grid, h * h, V, n_states)


def tunneling_gap(h: float, m: int = DEFAULT_M) -> float:
    """Uncalibrated E1 - E0 of -h² d² + V_dw on an m-point Dirichlet grid."""
    w, _, _ = _raw_spectrum(h, Grid1D(m), 2)
    return float(w[1] - w[0])


@dataclass(frozen=True)
class LogicalEncoding:
    """Calibrated double-well data for one qubit.

    ``energies``/``states`` hold the lowest eigenpairs of the calibrated
    operator; ``states`` are l2-normalized grid vectors.
    """

    h: float
    C: float
    grid: Grid1D
    energies: np.ndarray
    states: np.ndarray
    parities: np.ndarray
    raw_gap: float
    sign: int = 1
    refinement: dict = field(default_factory=dict)

    @property
    def G(self) -> float:
        """Kinetic coefficient C_h h² of the calibrated operator."""
        return self.C * self.h * self.h

    @property
    def E0(self) -> float:
        return float(self.energies[0])

    @property
    def E1(self) -> float:
        return float(self.energies[1])

    @property
    def E2(self) -> float:
        return float(self.energies[2])

    @property
    def psi0(self) -> np.ndarray:
        return self.states[:, 0]

    @property
    def psi1(self) -> np.ndarray:
        return self.states[:, 1]

    @property
    def psi_right(self) -> np.ndarray:
        return (self.psi0 + self.sign * self.psi1) / np.sqrt(2.0)

    @property
    def psi_left(self) -> np.ndarray:
        return (self.psi0 - self.sign * self.psi1) / np.sqrt(2.0)

    @property
    def potential(self) -> np.ndarray:
        """Samples of C_h V_dw (the potential part of the calibrated operator)."""
        return self.C * symmetric_samples(self.grid, V_DW)

    def operator(self) -> SparseSymOp:
        mat = (self.G * _lap1d_matrix(self.grid) + sp.diags(self.potential)).tocsr()
        return SparseSymOp(self.grid.m, mat, grid=TensorGrid((self.grid,)),
                           kinetic=(self.G,), potential=self.potential)

    def sign_samples(self, w: float) -> np.ndarray:
        return antisymmetric_samples(self.grid, SmoothSign(w))

    def to_json(self) -> dict:
        return {
            "h": self.h, "C_h": self.C, "G": self.G, "grid": self.grid.to_json(),
            "energies": [float(e) for e in self.energies],
            "parities": [int(p) for p in self.parities],
            "raw_gap": self.raw_gap, "sign": self.sign, "refinement": self.refinement,
        }


def _calibrate_on(h: float, grid: Grid1D, n_states: int) -> LogicalEncoding:
    w, v, par = _raw_spectrum(h, grid, max(n_states, 3))
    if par[0] != 1 or par[1] != -1:
        raise CalibrationError(f"unexpected parity ordering {par[:2]} at h={h}")
    gap = float(w[1] - w[0])
    C = 2.0 / gap
    # Sign convention: psi0 has positive mean, psi1 positive mean on x > 0
    x = grid.nodes
    for j in range(v.shape[1]):
        ref = v[:, j].sum() if par[j] > 0 else v[x > 0, j].sum()
        if ref < 0:
            v[:, j] = -v[:, j]
    return LogicalEncoding(h=float(h), C=C, grid=grid, energies=C * w, states=v,
                           parities=par, raw_gap=gap)


def calibrate(h: float, m: int = DEFAULT_M, *, h_range: tuple[float, float] = DEFAULT_H_RANGE,
              n_states: int = DEFAULT_STATES, check_refinement: bool = True,
              refine_tol: float = 0.01) -> LogicalEncoding:
    """Gap-calibrate the double well at semiclassical parameter ``h``.

    With ``check_refinement`` the tunneling gap is recomputed on the nested
    grid with 2m+1 points; a relative change above ``refine_tol`` raises.
    """
    if not h_range[0] <= h <= h_range[1]:
        raise ValueError(f"h={h} outside supported range {h_range}")
    enc = _calibrate_on(h, Grid1D(m), n_states)
    if check_refinement:
        fine = tunneling_gap(h, Grid1D(m).refined().m)
        rel = abs(fine - enc.raw_gap) / fine
        info = {"m_refined": Grid1D(m).refined().m, "gap_refined": fine, "relative_change": rel}
        if rel > refine_tol:
            raise CalibrationError(
                f"gap not grid-converged at h={h}: {enc.raw_gap:.6e} (m={m}) vs "
                f"{fine:.6e} (m={info['m_refined']})")
        object.__setattr__(enc, "refinement", info)
    return enc


def kinetic_scale(h: float, m: int = DEFAULT_M) -> float:
    """G(h) = C_h h² = 2 h² / gap(h)."""
    return 2.0 * h * h / tunneling_gap(h, m)


def attainable_G_range(m: int = DEFAULT_M,
                       h_bracket: tuple[float, float] = DEFAULT_G_BRACKET) -> tuple[float, float]:
    return kinetic_scale(h_bracket[1], m), kinetic_scale(h_bracket[0], m)


def encoding_for_G(G: float, m: int = DEFAULT_M, *,
                   h_bracket: tuple[float, float] = DEFAULT_G_BRACKET,
                   rtol: float = 1e-6, **calib_kw) -> LogicalEncoding:
    """Find h with C_h h² = G (bisection on ln h) and calibrate there."""
    lo_G, hi_G = attainable_G_range(m, h_bracket)
    if not lo_G <= G <= hi_G:
        raise AttainableRangeError(G, (lo_G, hi_G))
    lnG = np.log(G)
    lnh = brentq(lambda t: np.log(kinetic_scale(np.exp(t), m)) - lnG,
                 np.log(h_bracket[0]), np.log(h_bracket[1]), xtol=1e-12)
    h = float(np.exp(lnh))
    calib_kw.setdefault("h_range", (min(h_bracket[0], DEFAULT_H_RANGE[0]),
                                    max(h_bracket[1], DEFAULT_H_RANGE[1])))
    enc = calibrate(h, m, **calib_kw)
    if abs(enc.G / G - 1.0) > rtol:
        raise CalibrationError(f"root-finding reached G={enc.G:.8g}, wanted {G:.8g}")
    return enc


@dataclass(frozen=True)
class PauliResiduals:
    offdiag: float
    diag0: float
    diag1: float
    leakage0: float
    leakage1: float
    truncated_leakage0: float
    truncated_leakage1: float
    complement0: float
    complement1: float

    def to_json(self) -> dict:
        return dict(self.__dict__)


def logical_pauli_residuals(enc: LogicalEncoding, w: float, K: int = 16) -> PauliResiduals:
    """How closely the smoothed sign acts as a logical Pauli on (psi0, psi1).

    ``leakage`` is the exact norm of the component of ``Z psi`` outside
    span(psi0, psi1).  It splits into the part captured by eigenvectors
    2..K (``truncated``) and the remainder beyond K (``complement``).
    """
    s = enc.sign_samples(w)
    p0, p1 = enc.psi0, enc.psi1
    K = min(K, enc.states.shape[1] - 1)
    low = enc.states[:, :2]
    band = enc.states[:, 2:K + 1]
    out = {}
    for tag, psi in (("0", p0), ("1", p1)):
        z = s * psi
        outside = z - low @ (low.T @ z)
        captured = band.T @ z
        out["leakage" + tag] = float(np.linalg.norm(outside))
        out["truncated_leakage" + tag] = float(np.linalg.norm(captured))
        out["complement" + tag] = float(np.linalg.norm(outside - band @ captured))
    return PauliResiduals(offdiag=float(p0 @ (s * p1)), diag0=float(p0 @ (s * p0)),
                          diag1=float(p1 @ (s * p1)), **out)


@dataclass(frozen=True)
class ConcentrationProfile:
    probes: np.ndarray
    tail_right: np.ndarray
    tail_left_mirror: np.ndarray
    distance: np.ndarray
    envelope: np.ndarray


def _tail_mass(x: np.ndarray, weights: np.ndarray, x0: float) -> float:
    return float(weights[x < x0].sum() + 0.5 * weights[x == x0].sum())


def concentration_profile(enc: LogicalEncoding, probes: Sequence[float],
                          eps: float = 0.2) -> ConcentrationProfile:
    """Mass of the right-well state left of each probe, with its decay envelope.

    ``tail_left_mirror`` is the mass of the left-well state right of the
    mirrored probe; by reflection symmetry it equals ``tail_right``.
    """
    probes = np.asarray(probes, dtype=float)
    if np.any(np.abs(probes) >= X_STAR):
        raise ValueError("probes must lie strictly between the wells")
    x = enc.grid.nodes
    pr, pl = enc.psi_right**2, enc.psi_left**2
    right = np.array([_tail_mass(x, pr, x0) for x0 in probes])
    # Mass of psi_left on x > -x0 equals the tail of the reversed vector below x0
    left = np.array([_tail_mass(x, pl[::-1], x0) for x0 in probes])
    dist = np.array([agmon_distance(V_DW, 0.0, x0, X_STAR) for x0 in probes])
    env = np.exp(-2.0 * (1.0 - eps) * dist / enc.h)
    return ConcentrationProfile(probes, right, left, dist, env)


def right_well_mass(enc: LogicalEncoding) -> float:
    return float((enc.psi_right[enc.grid.nodes > 0] ** 2).sum())


def gap_law_fit(hs: Sequence[float], m: int = DEFAULT_M) -> dict:
    """Least-squares slope of ln(gap) against 1/h."""
    hs = np.asarray(hs, dtype=float)
    gaps = np.array([tunneling_gap(h, m) for h in hs])
    slope, intercept = np.polyfit(1.0 / hs, np.log(gaps), 1)
    return {"h": hs.tolist(), "gap": gaps.tolist(), "slope": float(slope),
            "intercept": float(intercept), "target": -AGMON_S0,
            "relative_deviation": float(abs(slope + AGMON_S0) / AGMON_S0)}


def c1_norms(enc: LogicalEncoding, count: int = 2) -> list[float]:
    """max|psi| + max|psi'| of the continuum-normalized eigenfunctions."""
    d = enc.grid.spacing
    out = []
    for j in range(count):
        f = enc.states[:, j] / np.sqrt(d)
        out.append(float(np.abs(f).max() + np.abs(np.diff(f) / d).max()))
    return out


def save_encoding(enc: LogicalEncoding, stem: str) -> None:
    """Write ``stem.bin`` (little-endian float64 states) and ``stem.json``.

    The JSON sidecar is written last, so its presence marks a complete pair.
    """
    atomic_write_bytes(stem + ".bin", np.ascontiguousarray(enc.states, dtype="<f8").tobytes())
    atomic_write_json(stem + ".json", enc.to_json())


def load_encoding(stem: str) -> LogicalEncoding:
    with open(stem + ".json") as fh:
        meta = json.load(fh)
    grid = Grid1D(meta["grid"]["m"], meta["grid"]["boundary"])
    energies = np.asarray(meta["energies"])
    states = np.fromfile(stem + ".bin", dtype="<f8").reshape(grid.m, len(energies))
    return LogicalEncoding(h=meta["h"], C=meta["C_h"], grid=grid, energies=energies,
                           states=states, parities=np.asarray(meta["parities"], dtype=float),
                           raw_gap=meta["raw_gap"], sign=meta["sign"],
                           refinement=meta["refinement"])


def _cache_key(G: float, m: int, kw: dict) -> str:
    payload = json.dumps({"G": repr(float(G)), "m": int(m),
                          **{k: repr(v) for k, v in sorted(kw.items())}}, sort_keys=True)
    return hashlib.sha256(payload.encode()).hexdigest()[:24]


def cached_encoding_for_G(G: float, m: int = DEFAULT_M, **kw) -> LogicalEncoding:
    """``encoding_for_G`` backed by an on-disk cache in ``$SCHROLAB_CACHE``.

    Without the environment variable this is a plain call.  Only successful
    calibrations are stored; the stored states are bit-identical to a fresh
    computation.
    """
    root = os.environ.get(CACHE_ENV)
    if not root:
        return encoding_for_G(G, m, **kw)
    stem = os.path.join(root, f"enc-{_cache_key(G, m, kw)}")
    if os.path.exists(stem + ".json") and os.path.exists(stem + ".bin"):
        return load_encoding(stem)
    enc = encoding_for_G(G, m, **kw)
    save_encoding(enc, stem)
    return enc
