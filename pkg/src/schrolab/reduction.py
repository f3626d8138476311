"""Perturbative reduction of a transverse-field Ising model to a Schrödinger
operator on [-1, 1]^n.

Each qubit u becomes one coordinate carrying a gap-calibrated double well
with kinetic scale ``G_u = G*/a_u``:

    H_hat = sum_u a_u X_u(G_u) + sum_u b_u Z_u + sum_{u<v} b_uv Z_u Z_v

where ``X_u`` is the calibrated double-well operator on coordinate u and
``Z_u`` multiplication by the smoothed sign.  The low-energy subspace S is
spanned by tensor products of the two lowest double-well states, and the
isometry W sends |0>, |1> to the right/left-well states.  With the shift
``c = sum_u a_u (E0_u + 1)`` the spectrum and dynamics of ``H_hat - c`` on S
reproduce those of H up to the coupling ``||R|| = ||P_perp H_hat P_S||``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import reduce

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .double_well import (AttainableRangeError, CalibrationError, LogicalEncoding,
                          cached_encoding_for_G, parity_spectrum, symmetric_samples, V_DW)
from .dynamics import spectral_block_propagator
from .grid import (BISECTION_TOL, SparseSymOp, TensorGrid, _lap1d_matrix,
                   assemble_schrodinger, lowest_eigenpairs)
from .pauli import TimHamiltonian, exact_propagator, exact_spectrum, to_dense, z_conjugate

# basis change from (psi0, psi1) coefficients to the (|0>, |1>) images of W
_M = np.array([[1.0, -1.0], [1.0, 1.0]]) / np.sqrt(2.0)


@dataclass(frozen=True)
class ReductionConfig:
    """Parameters of one reduction run.

    ``m`` fixes the grid points per coordinate; ``None`` refines from
    ``m_start`` until the tunneling gap changes by less than ``refine_tol``.
    """

    G_star: float = 100.0
    w: float = 0.05
    m: int | None = None
    M1: float = 10.0
    M2: float = 100.0
    t: float = 1.0
    eps1: float = 0.1
    m_start: int = 301
    m_max: int = 4001
    refine_tol: float = 0.005
    h_bracket: tuple[float, float] = (0.008, 0.12)
    eig_tol: float = 1e-12
    t_max: float = 100.0

    def __post_init__(self):
        if self.G_star < 1:
            raise ValueError("G_star must be at least 1")
        if self.w <= 0:
            raise ValueError("w must be positive")

    def to_json(self) -> dict:
        return dict(self.__dict__)


@dataclass(frozen=True)
class Preconditioned:
    H: TimHamiltonian
    mask: tuple[int, ...]
    clamped: tuple[int, ...]
    eigenvalue_bound: float
    propagator_rate: float

    def propagator_bound(self, t: float) -> float:
        return self.propagator_rate * t


def precondition_tim(H: TimHamiltonian, M2: float) -> Preconditioned:
    """Make every transverse field at least 1/M2.

    Negative fields are flipped by Z-conjugation (a unitary, spectrum
    preserving); fields still below 1/M2 are raised to 1/M2, which moves
    every eigenvalue by at most n/M2 and every propagator by at most nt/M2.
    """
    mask = tuple(u for u in range(H.n) if H.a[u] < 0)
    Hc = z_conjugate(H, mask)
    floor = 1.0 / M2
    clamped = tuple(u for u in range(H.n) if Hc.a[u] < floor)
    a = tuple(max(x, floor) for x in Hc.a)
    return Preconditioned(TimHamiltonian(H.n, a, H.b, H.bzz), mask, clamped,
                          H.n / M2, H.n / M2)


@dataclass
class ReductionArtifact:
    H: TimHamiltonian
    cfg: ReductionConfig
    encodings: list[LogicalEncoding]
    grid: TensorGrid
    op: SparseSymOp
    hz: np.ndarray
    c: float
    factors: list[np.ndarray]
    sign: list[np.ndarray]
    kinetic: tuple[float, ...]
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.H.n

    def W(self) -> np.ndarray:
        """Dense N x 2^n isometry (qubit 0 = leading coordinate)."""
        return reduce(np.kron, self.factors)

    def hx_block(self) -> np.ndarray:
        """W^T H_X W from the calibrated energies (exact up to round-off)."""
        out = np.zeros((2**self.n, 2**self.n))
        for u, enc in enumerate(self.encodings):
            blk = self.H.a[u] * (_M.T @ np.diag(enc.energies[:2]) @ _M)
            out += _embed(blk, u, self.n)
        return out

    def z_blocks(self) -> list[np.ndarray]:
        return [F.T @ (s[:, None] * F) for F, s in zip(self.factors, self.sign)]

    def hz_block(self) -> np.ndarray:
        zb = self.z_blocks()
        out = np.zeros((2**self.n, 2**self.n))
        for u in range(self.n):
            out += self.H.b[u] * _embed(zb[u], u, self.n)
        for u, v, bc in self.H.bzz:
            out += bc * _embed(zb[u], u, self.n) @ _embed(zb[v], v, self.n)
        return out

    def s_block(self) -> np.ndarray:
        """A = W^T H_hat W, the restriction of H_hat to S in qubit coordinates."""
        return self.hx_block() + self.hz_block()

    def s_block_defect(self) -> float:
        """|| W^T H_hat W - (H + c) ||."""
        ref = to_dense(self.H) + self.c * np.eye(2**self.n)
        return float(np.linalg.norm(self.s_block() - ref, 2))


def _embed(blk: np.ndarray, u: int, n: int) -> np.ndarray:
    mats = [np.eye(2)] * n
    mats[u] = blk
    return reduce(np.kron, mats)


def _encoding_for(G: float, cfg: ReductionConfig, u: int) -> LogicalEncoding:
    try:
        if cfg.m is not None:
            return cached_encoding_for_G(G, cfg.m, h_bracket=cfg.h_bracket,
                                  refine_tol=np.inf)
        m = cfg.m_start
        while True:
            try:
                return cached_encoding_for_G(G, m, h_bracket=cfg.h_bracket,
                                      refine_tol=cfg.refine_tol)
            except CalibrationError:
                m = 2 * m + 1
                if m > cfg.m_max:
                    raise
    except AttainableRangeError as exc:
        raise AttainableRangeError(exc.G, exc.interval, qubit=u) from None


def build_reduction(H: TimHamiltonian, cfg: ReductionConfig) -> ReductionArtifact:
    """Assemble H_hat, the shift c and the factors of W for a preconditioned TIM."""
    if H.n > 3:
        raise ValueError("reductions are limited to 3 qubits")
    floor = 1.0 / cfg.M2
    for u, a in enumerate(H.a):
        if a < floor * (1 - 1e-12):
            raise ValueError(f"qubit {u}: a_u = {a} below 1/M2; run precondition_tim first")
    cache: dict[float, LogicalEncoding] = {}
    encs = []
    for u, a in enumerate(H.a):
        G = cfg.G_star / a
        if G not in cache:
            cache[G] = _encoding_for(G, cfg, u)
        encs.append(cache[G])
    grid = TensorGrid(tuple(e.grid for e in encs))
    sign = [e.sign_samples(cfg.w) for e in encs]
    # kinetic coefficient a_u C_u h_u² equals G* up to the root-finding tolerance
    kinetic = tuple(a * e.G for a, e in zip(H.a, encs))
    shape = grid.shape
    hz = np.zeros(shape)
    pot = np.zeros(shape)
    for u, e in enumerate(encs):
        bshape = [1] * H.n
        bshape[u] = shape[u]
        pot = pot + (H.a[u] * e.potential).reshape(bshape)
        hz = hz + (H.b[u] * sign[u]).reshape(bshape)
    for u, v, bc in H.bzz:
        su = sign[u].reshape([shape[u] if k == u else 1 for k in range(H.n)])
        sv = sign[v].reshape([shape[v] if k == v else 1 for k in range(H.n)])
        hz = hz + bc * su * sv
    hz = np.broadcast_to(hz, shape).ravel().copy()
    op = assemble_schrodinger(grid, kinetic, pot.ravel() + hz, matrix_free=False)
    c = float(sum(a * (e.E0 + 1.0) for a, e in zip(H.a, encs)))
    factors = [e.states[:, :2] @ _M for e in encs]
    meta = {
        "h": [e.h for e in encs], "C_h": [e.C for e in encs], "G_u": [e.G for e in encs],
        "m": list(shape), "refinement": [e.refinement for e in encs],
    }
    return ReductionArtifact(H, cfg, encs, grid, op, hz, c, factors, sign, kinetic, meta)


@dataclass(frozen=True)
class CouplingInfo:
    norm: float
    x_residual: float
    singular_values: np.ndarray


def _apply_hx(art: ReductionArtifact, X: np.ndarray) -> np.ndarray:
    return art.op.matvec(X) - art.hz[:, None] * X


def coupling_norm(art: ReductionArtifact) -> CouplingInfo:
    """||P_perp H_hat P_S|| by SVD of the thin block P_perp H_hat W.

    Only the sign part couples S to its complement; the transverse part acts
    on exact eigenvectors of the per-coordinate double wells, and its
    numerical leakage (eigenvector residual plus round-off) is reported
    separately as ``x_residual``.
    """
    W = art.W()
    ZW = art.hz[:, None] * W
    R = ZW - W @ (W.T @ ZW)
    sv = la.svdvals(R)
    XW = _apply_hx(art, W)
    xres = float(np.linalg.norm(XW - W @ (W.T @ XW), 2))
    return CouplingInfo(float(sv[0]), xres, sv)


def _one_dim_eigs(art: ReductionArtifact, k: int):
    """Low spectrum of a one-coordinate H_hat in the calibration's own units."""
    enc = art.encodings[0]
    a, b = art.H.a[0], art.H.b[0]
    scale = a * enc.C
    V = symmetric_samples(enc.grid, V_DW) + (b / scale) * art.sign[0]
    if b == 0:
        w, v, _ = parity_spectrum(enc.grid, enc.h**2, V, k)
    else:
        T = enc.h**2 * _lap1d_matrix(enc.grid)
        w, v = la.eigh_tridiagonal(T.diagonal() + V, T.diagonal(1), select="i",
                                   select_range=(0, k - 1), lapack_driver="stebz",
                               tol=BISECTION_TOL)
    return scale * w, v


def low_spectrum(art: ReductionArtifact, k: int):
    """Lowest k eigenvalues of H_hat with eigenvectors and residual norms."""
    if art.n == 1:
        w, v = _one_dim_eigs(art, k)
        res = np.linalg.norm(art.op.matvec(v) - v * w, axis=0)
        return w, v, res
    sigma = art.op.lower_bound() - 1.0
    spec = lowest_eigenpairs(art.op, k, tol=art.cfg.eig_tol, sigma=sigma)
    return spec.eigenvalues, spec.eigenvectors, spec.residuals


def complement_gap(art: ReductionArtifact, s_block: np.ndarray | None = None,
                   seed: int = 0) -> dict:
    """Delta = lambda_min(H_hat on S_perp) - lambda_max(H_hat on S).

    The restricted minimum is found by shift-invert Lanczos on the compressed
    operator: for v in S_perp, ``(P_perp (H - sigma) P_perp)^{-1} v`` is
    ``K(v + W y)`` with ``K = (H - sigma)^{-1}`` and ``y`` chosen to keep the
    result orthogonal to W.  One sparse LU serves every application.
    """
    W = art.W()
    A = art.op.matrix.tocsc()
    sigma = art.op.lower_bound() - 1.0
    lu = spla.splu((A - sigma * sp.identity(A.shape[0], format="csc")).tocsc())
    KW = lu.solve(W)
    schur = W.T @ KW

    def op_inv(v):
        v = v - W @ (W.T @ v)
        x = lu.solve(v)
        y = -np.linalg.solve(schur, W.T @ x)
        out = x + KW @ y
        return out - W @ (W.T @ out)

    N = A.shape[0]
    lin = spla.LinearOperator((N, N), matvec=op_inv, dtype=float)
    v0 = np.random.default_rng(seed).standard_normal(N)
    v0 -= W @ (W.T @ v0)
    theta, vec = spla.eigsh(lin, k=1, which="LA", v0=v0, tol=1e-12)
    lam = float(sigma + 1.0 / theta[0])
    vec = vec[:, 0] - W @ (W.T @ vec[:, 0])
    vec /= np.linalg.norm(vec)
    hv = art.op.matvec(vec)
    resid = float(np.linalg.norm(hv - W @ (W.T @ hv) - lam * vec))
    if s_block is None:
        s_block = art.s_block()
    lam_s = float(np.linalg.eigvalsh(s_block).max())
    return {"lambda_min_perp": lam, "lambda_max_S": lam_s, "delta": lam - lam_s,
            "residual": resid}


@dataclass
class SpectrumReport:
    rows: list[dict]
    coupling: float
    s_defect: float
    allowance: float
    bound: float
    delta: float
    verdict: bool
    meta: dict = field(default_factory=dict)

    @property
    def max_diff(self) -> float:
        return max(r["diff"] for r in self.rows)

    def to_json(self) -> dict:
        return {"rows": self.rows, "coupling_norm": self.coupling, "s_defect": self.s_defect,
                "allowance": self.allowance, "bound": self.bound, "delta": self.delta,
                "max_diff": self.max_diff, "verdict": self.verdict, **self.meta}

    def table(self) -> str:
        lines = [f"{'k':>3} {'lambda_k(H)':>16} {'lambda_k(Hhat-c)':>18} {'|diff|':>11}"]
        for r in self.rows:
            lines.append(f"{r['k']:>3} {r['qubit']:>16.10f} {r['grid']:>18.10f} {r['diff']:>11.3e}")
        lines.append(f"bound = ||R|| + ||A - (H+c)|| + allowance = {self.bound:.3e}; "
                     f"Delta = {self.delta:.4g}; verdict = {'PASS' if self.verdict else 'FAIL'}")
        return "\n".join(lines)


def verify_spectrum(art: ReductionArtifact, H: TimHamiltonian | None = None) -> SpectrumReport:
    """Compare the lowest 2^n eigenvalues of H_hat - c with those of H.

    The bound is ||R|| + ||W^T H_hat W - (H + c)||; the allowance adds the
    transverse leakage and the eigen-residuals of the grid solve, each of
    which bounds a further eigenvalue perturbation.
    """
    H = H or art.H
    k = 2**art.n
    lam_q = exact_spectrum(H)[0]
    w, _, res = low_spectrum(art, k)
    lam_g = w - art.c
    cp = coupling_norm(art)
    A = art.s_block()
    s_def = float(np.linalg.norm(A - to_dense(H) - art.c * np.eye(k), 2))
    gap = complement_gap(art, A)
    allowance = cp.x_residual + float(res.max())
    bound = cp.norm + s_def + allowance
    rows = [{"k": j, "qubit": float(lam_q[j]), "grid": float(lam_g[j]),
             "diff": float(abs(lam_g[j] - lam_q[j])), "residual": float(res[j])}
            for j in range(k)]
    verdict = all(r["diff"] <= bound for r in rows) and gap["delta"] > 0
    meta = {"c": art.c, "G_star": art.cfg.G_star, "w": art.cfg.w, "x_residual": cp.x_residual,
            "pert_spec_diffs": [float(abs(wj - aj)) for wj, aj in
                                zip(w, np.linalg.eigvalsh(A))],
            "gap": gap, **art.meta}
    return SpectrumReport(rows, cp.norm, s_def, allowance, bound, gap["delta"], verdict, meta)


@dataclass
class DynamicsReport:
    t: float
    error: float
    envelope: float
    coupling: float
    s_defect: float
    remainder: float
    verdict: bool
    meta: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {"t": self.t, "error": self.error, "envelope": self.envelope,
                "coupling_norm": self.coupling, "s_defect": self.s_defect,
                "remainder": self.remainder, "verdict": self.verdict, **self.meta}


def projected_propagator(art: ReductionArtifact, t: float, tol: float = 1e-12):
    """W^T exp(-i(H_hat - c)t) W via the low spectrum of H_hat.

    Returns the compressed propagator as a ``SpectralBlock``.
    """
    W = art.W()
    if art.n == 1:
        k = 2
        while True:
            k = min(2 * k + 8, art.op.N - 1)
            w, v = _one_dim_eigs(art, k)
            blk = spectral_block_propagator(art.op, W, t, shift=art.c, eigs=(w, v))
            if blk.remainder_bound <= tol or k >= art.op.N - 1:
                return blk
    return spectral_block_propagator(art.op, W, t, shift=art.c, tol=tol, k0=2 * W.shape[1] + 8)


def verify_dynamics(art: ReductionArtifact, t: float, H: TimHamiltonian | None = None,
                    tol: float = 1e-12) -> DynamicsReport:
    """|| W^T e^{-i(H_hat - c)t} W - e^{-iHt} || against its perturbative envelope
    (2 sqrt2 / 3)(||R|| t)^{3/2} + ||A - (H + c)|| t."""
    if t > art.cfg.t_max:
        raise ValueError(f"t={t} exceeds the configured cap {art.cfg.t_max}")
    H = H or art.H
    if t == 0:
        U, rem, eres = np.eye(2**art.n, dtype=complex), 0.0, 0.0
    else:
        blk = projected_propagator(art, t, tol)
        U, rem, eres = blk.matrix, blk.remainder_bound, blk.max_residual
    err = float(np.linalg.norm(U - exact_propagator(H, t), 2))
    cp = coupling_norm(art)
    s_def = art.s_block_defect()
    env = (2.0 * np.sqrt(2.0) / 3.0) * (cp.norm * t) ** 1.5 + s_def * t
    # numerical allowance: neglected spectral tail, plus transverse leakage and
    # eigenpair residuals, each of which perturbs phases and vectors linearly in t
    allowance = rem + 2.0 * (cp.x_residual + eres) * t
    verdict = err <= env + allowance
    return DynamicsReport(t, err, env, cp.norm, s_def, rem, verdict,
                          {"allowance": allowance, "G_star": art.cfg.G_star, "c": art.c,
                           "x_residual": cp.x_residual, **art.meta})
