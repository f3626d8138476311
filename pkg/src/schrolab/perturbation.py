"""Executable checks of the block-perturbation inequalities.

Each checker evaluates the left-hand side by direct numerics and the
right-hand side by its closed-form bound; none assumes the inequality it tests.
For ``H = [[A, R^†], [R, B]]`` with respect to ``S ⊕ S_perp``:

* Weyl: ``|λ_k(A) - λ_k(B)| <= ||A - B||``;
* pert-spec: if ``Δ = λ_min(B) - λ_max(A) > 0`` then ``|λ_k(H) - λ_k(A)| <= ||R||``
  for ``k < dim S``;
* Duhamel: ``||e^{-iAt} - e^{-iBt}|| <= ||A - B|| t``;
* truncation leakage: ``||P_perp e^{-iHt} P_S|| <= sqrt(2 ||R|| t)``;
* pert-sim: ``||P_S e^{-iHt} P_S - e^{-iAt}|| <= (2 sqrt2 / 3)(||R|| t)^{3/2}``.

Random instances are generated from a seed, so any violation reproduces
bit-identically.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from typing import Callable

import numpy as np
import scipy.linalg as la

from .grid import SparseSymOp

TOL_SPEC = 1e-10
TOL_DYN = 1e-8
LEMMAS = ("weyl", "pert_spec", "duhamel", "trunc_leak", "pert_sim")


class LemmaViolation(AssertionError):
    """A numerically measured left-hand side exceeded its bound."""


@dataclass
class CheckResult:
    lemma: str
    lhs: float
    rhs: float
    skipped: bool = False
    worst_k: int | None = None
    detail: dict = field(default_factory=dict)

    @property
    def margin(self) -> float:
        return self.rhs - self.lhs

    @property
    def ok(self) -> bool:
        return self.skipped or self.lhs <= self.rhs


def _finish(res: CheckResult, strict: bool) -> CheckResult:
    if strict and not res.ok:
        raise LemmaViolation(f"{res.lemma}: lhs {res.lhs:.3e} > rhs {res.rhs:.3e}"
                             + (f" at k={res.worst_k}" if res.worst_k is not None else ""))
    return res


def _hermitian(M: np.ndarray, name: str) -> np.ndarray:
    M = np.asarray(M)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise ValueError(f"{name} must be square")
    if not np.allclose(M, M.conj().T, atol=1e-12 * max(1.0, np.abs(M).max())):
        raise ValueError(f"{name} must be Hermitian")
    return M


def _expm_herm(M: np.ndarray, t: float) -> np.ndarray:
    w, v = la.eigh(M)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


@dataclass
class BlockSplit:
    """An operator together with an orthonormal frame spanning S.

    The frame's columns define ``P_S = F F^†``; ``A = F^† H F`` and
    ``R = P_perp H F`` (thin, rank <= dim S).
    """

    operator: np.ndarray | SparseSymOp
    frame: np.ndarray

    def __post_init__(self):
        F = np.asarray(self.frame)
        if F.ndim != 2 or F.shape[1] > F.shape[0]:
            raise ValueError("frame must be a tall N x m matrix")
        if np.abs(F.conj().T @ F - np.eye(F.shape[1])).max() > 1e-12:
            raise ValueError("frame is not orthonormal to 1e-12")
        if not isinstance(self.operator, SparseSymOp):
            self.operator = _hermitian(self.operator, "operator")
        self.frame = F

    @property
    def N(self) -> int:
        return self.frame.shape[0]

    @property
    def m(self) -> int:
        return self.frame.shape[1]

    def _apply(self, X: np.ndarray) -> np.ndarray:
        if isinstance(self.operator, SparseSymOp):
            return self.operator.matvec(X)
        return self.operator @ X

    def dense(self) -> np.ndarray:
        if isinstance(self.operator, SparseSymOp):
            return self.operator.toarray()
        return self.operator

    def A(self) -> np.ndarray:
        A = self.frame.conj().T @ self._apply(self.frame)
        return 0.5 * (A + A.conj().T)

    def R(self) -> np.ndarray:
        HF = self._apply(self.frame)
        return HF - self.frame @ (self.frame.conj().T @ HF)

    def r_norm(self) -> float:
        return float(la.svdvals(self.R())[0]) if self.m else 0.0

    def complement_basis(self) -> np.ndarray:
        """Orthonormal basis of S_perp (dense; small problems only)."""
        return la.null_space(self.frame.conj().T)

    def B(self) -> np.ndarray:
        Q = self.complement_basis()
        B = Q.conj().T @ self.dense() @ Q
        return 0.5 * (B + B.conj().T)

    def delta(self) -> float:
        """Measured Δ = λ_min(B) - λ_max(A)."""
        if self.m == self.N:
            return np.inf
        return float(la.eigvalsh(self.B())[0] - la.eigvalsh(self.A())[-1])


def check_weyl(A: np.ndarray, B: np.ndarray, ks=None, tol: float = TOL_SPEC,
               strict: bool = True) -> CheckResult:
    A, B = _hermitian(A, "A"), _hermitian(B, "B")
    if A.shape != B.shape:
        raise ValueError("A and B must have the same dimension")
    la_, lb = la.eigvalsh(A), la.eigvalsh(B)
    ks = np.arange(len(la_)) if ks is None else np.asarray(list(ks))
    diffs = np.abs(la_[ks] - lb[ks])
    rhs = float(np.linalg.norm(A - B, 2))
    j = int(np.argmax(diffs))
    res = CheckResult("weyl", float(diffs[j]), rhs + tol, worst_k=int(ks[j]),
                      detail={"margins": (rhs - diffs).tolist(), "norm": rhs})
    return _finish(res, strict)


def check_pert_spec(split: BlockSplit, tol: float = TOL_SPEC, strict: bool = True,
                    eigenvalues: np.ndarray | None = None, delta: float | None = None) -> CheckResult:
    """Low eigenvalues of H against those of A, given a measured positive Δ.

    ``eigenvalues`` (lowest ``dim S`` of H) and ``delta`` may be supplied for
    operators too large for dense diagonalization.
    """
    delta = split.delta() if delta is None else delta
    if not delta > 0:
        return CheckResult("pert_spec", 0.0, 0.0, skipped=True, detail={"delta": delta})
    lam_a = la.eigvalsh(split.A())
    if eigenvalues is None:
        eigenvalues = la.eigvalsh(split.dense(), subset_by_index=(0, split.m - 1))
    diffs = np.abs(np.asarray(eigenvalues)[:split.m] - lam_a)
    r = split.r_norm()
    j = int(np.argmax(diffs))
    res = CheckResult("pert_spec", float(diffs[j]), r + tol, worst_k=j,
                      detail={"delta": delta, "r_norm": r, "margins": (r - diffs).tolist()})
    return _finish(res, strict)


def check_duhamel(A: np.ndarray, B: np.ndarray, t: float, tol: float = TOL_SPEC,
                  strict: bool = True) -> CheckResult:
    A, B = _hermitian(A, "A"), _hermitian(B, "B")
    if A.shape[0] > 256:
        raise ValueError("dense Duhamel check limited to dimension 256")
    lhs = float(np.linalg.norm(_expm_herm(A, t) - _expm_herm(B, t), 2))
    rhs = float(np.linalg.norm(A - B, 2)) * abs(t)
    return _finish(CheckResult("duhamel", lhs, rhs + tol, detail={"t": t}), strict)


def _propagated_frame(split: BlockSplit, t: float,
                      propagator: Callable[[np.ndarray, float], np.ndarray] | None) -> np.ndarray:
    if propagator is not None:
        return propagator(split.frame, t)
    if split.N <= 4096:
        return _expm_herm(split.dense(), t) @ split.frame
    from .dynamics import propagate
    cols = [propagate(split.operator, split.frame[:, j].astype(complex), t,
                      method="krylov", tol=1e-11).psi for j in range(split.m)]
    return np.stack(cols, axis=1)


def check_trunc_leak(split: BlockSplit, t: float, tol: float = TOL_DYN, strict: bool = True,
                     propagator=None) -> CheckResult:
    """``||P_perp e^{-iHt} P_S||`` as the largest singular value of the leaked frame."""
    UF = _propagated_frame(split, t, propagator)
    leaked = UF - split.frame @ (split.frame.conj().T @ UF)
    lhs = float(la.svdvals(leaked)[0])
    r = split.r_norm()
    rhs = float(np.sqrt(2.0 * r * abs(t)))
    return _finish(CheckResult("trunc_leak", lhs, rhs + tol, detail={"t": t, "r_norm": r}), strict)


def pert_sim_envelope(r_norm: float, t: float) -> float:
    return (2.0 * np.sqrt(2.0) / 3.0) * (r_norm * abs(t)) ** 1.5


def check_pert_sim(split: BlockSplit, t: float, tol: float = TOL_DYN, strict: bool = True,
                   propagator=None) -> CheckResult:
    """``||F^† e^{-iHt} F - e^{-iAt}||`` against the 3/2-power envelope."""
    UF = _propagated_frame(split, t, propagator)
    lhs = float(np.linalg.norm(split.frame.conj().T @ UF - _expm_herm(split.A(), t), 2))
    r = split.r_norm()
    rhs = float(pert_sim_envelope(r, t))
    return _finish(CheckResult("pert_sim", lhs, rhs + tol, detail={"t": t, "r_norm": r}), strict)


# ---------------------------------------------------------------- random ensemble

def random_hermitian(n: int, rng: np.random.Generator, complex_: bool = True) -> np.ndarray:
    M = rng.standard_normal((n, n))
    if complex_:
        M = M + 1j * rng.standard_normal((n, n))
    return 0.5 * (M + M.conj().T)


def random_block_split(m: int, nb: int, rng: np.random.Generator, r_norm: float | None = None,
                       delta: float | None = None, rotate: bool = True) -> BlockSplit:
    """Gaussian block-Hermitian instance with knobs for ``||R||`` and the gap Δ.

    With ``delta`` given, B is shifted so that ``λ_min(B) - λ_max(A) = delta``
    exactly; with ``r_norm`` given, R is rescaled to that spectral norm.  When
    ``rotate`` is set the whole problem is conjugated by a random unitary so
    that S is not a coordinate subspace.
    """
    A = random_hermitian(m, rng)
    B = random_hermitian(nb, rng)
    if delta is not None:
        B = B + (la.eigvalsh(A)[-1] + delta - la.eigvalsh(B)[0]) * np.eye(nb)
    R = rng.standard_normal((nb, m)) + 1j * rng.standard_normal((nb, m))
    if r_norm is not None:
        R = R * (r_norm / la.svdvals(R)[0]) if r_norm > 0 else 0 * R
    H = np.block([[A, R.conj().T], [R, B]])
    F = np.eye(m + nb, m, dtype=complex)
    if rotate:
        Q, _ = np.linalg.qr(rng.standard_normal((m + nb,) * 2) + 1j * rng.standard_normal((m + nb,) * 2))
        H, F = Q @ H @ Q.conj().T, Q @ F
        H = 0.5 * (H + H.conj().T)
    return BlockSplit(H, F)


@dataclass
class LemmaTally:
    passed: int = 0
    failed: int = 0
    skipped: int = 0
    worst_margin: float = np.inf
    worst_seed: int | None = None
    failing_seeds: list[int] = field(default_factory=list)

    def record(self, res: CheckResult, seed: int) -> None:
        if res.skipped:
            self.skipped += 1
            return
        if res.ok:
            self.passed += 1
        else:
            self.failed += 1
            self.failing_seeds.append(seed)
        if res.margin < self.worst_margin:
            self.worst_margin, self.worst_seed = float(res.margin), seed


def _instance(lemma: str, seed: int) -> CheckResult:
    rng = np.random.default_rng([seed, LEMMAS.index(lemma)])
    m = int(rng.integers(1, 9))
    nb = int(rng.integers(1, 33))
    r_norm = float(10 ** rng.uniform(-3, 0.5))
    if lemma == "weyl":
        n = m + nb
        A = random_hermitian(n, rng)
        B = A + float(10 ** rng.uniform(-3, 1)) * random_hermitian(n, rng)
        return check_weyl(A, B, strict=False)
    if lemma == "duhamel":
        A = random_hermitian(nb, rng)
        B = A + float(10 ** rng.uniform(-3, 1)) * random_hermitian(nb, rng)
        return check_duhamel(A, B, float(rng.choice([0.1, 1.0, 10.0])), strict=False)
    if lemma == "pert_spec":
        # Δ drawn from both sides of zero so that the precondition is exercised
        split = random_block_split(m, nb, rng, r_norm=r_norm, delta=float(rng.uniform(-2.0, 6.0)))
        return check_pert_spec(split, strict=False)
    split = random_block_split(m, nb, rng, r_norm=r_norm)
    t = float(10 ** rng.uniform(-1, 1))
    check = check_trunc_leak if lemma == "trunc_leak" else check_pert_sim
    return check(split, t, strict=False)


def run_suite(n_instances: int = 200, seed0: int = 0,
              lemmas: tuple[str, ...] = LEMMAS) -> dict[str, LemmaTally]:
    """Check every lemma until ``n_instances`` seeded instances were decided.

    Instances whose measured precondition fails are counted as skipped and
    replaced by the next seed, so each lemma gets ``n_instances`` real checks.
    """
    out = {}
    for lemma in lemmas:
        tally = LemmaTally()
        s = seed0
        while tally.passed + tally.failed < n_instances:
            tally.record(_instance(lemma, s), s)
            s += 1
            if tally.skipped > 10 * n_instances:
                raise RuntimeError(f"{lemma}: precondition almost never met")
        out[lemma] = tally
    return out


def suite_summary(tallies: dict[str, LemmaTally]) -> dict:
    return {k: {**asdict(v), "worst_margin": (None if not np.isfinite(v.worst_margin)
                                              else v.worst_margin)}
            for k, v in tallies.items()}


def write_summary(tallies: dict[str, LemmaTally], path) -> None:
    with open(path, "w") as fh:
        json.dump(suite_summary(tallies), fh, indent=2)
