"""Entrywise block embedding of real Hamiltonians into stoquastic ones.

Every entry x of a real symmetric matrix is replaced by a 2x2 block acting on
one extra ancilla qubit (placed last): ``x I`` if x >= 0 and ``-x X`` if x < 0.
Equivalently ``H_k -> H_k ⊗ |-><-| + |H_k| ⊗ |+><+|`` with ``|.|`` entrywise.
Writing ``H = -sum_k H_k`` and ``H~ = -sum_k H~_k``, the ancilla sector ``|->``
carries H exactly, while every term ``-H~_k`` has non-positive off-diagonal
entries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as la

from .pauli import PauliString
from .stoquastic import LocalQubitTerm, StoqVerdict, certify_stoquastic, terms_to_sparse

KET_MINUS = np.array([1.0, -1.0]) / np.sqrt(2.0)
KET_PLUS = np.array([1.0, 1.0]) / np.sqrt(2.0)
PROJ_MINUS = np.outer(KET_MINUS, KET_MINUS)
PROJ_PLUS = np.outer(KET_PLUS, KET_PLUS)


def replace_entries(Hk: np.ndarray) -> np.ndarray:
    """Blockwise substitution x -> x I (x >= 0) or [[0, -x], [-x, 0]] (x < 0)."""
    Hk = np.asarray(Hk, dtype=float)
    if not np.array_equal(Hk, Hk.T):
        raise ValueError("H_k must be real symmetric")
    N = Hk.shape[0]
    out = np.zeros((2 * N, 2 * N))
    pos = np.where(Hk >= 0, Hk, 0.0)
    neg = np.where(Hk < 0, -Hk, 0.0)
    out[0::2, 0::2] = pos
    out[1::2, 1::2] = pos
    out[0::2, 1::2] = neg
    out[1::2, 0::2] = neg
    return out


def closed_form(Hk: np.ndarray) -> np.ndarray:
    """H_k ⊗ |-><-| + |H_k| ⊗ |+><+| (ancilla as the last tensor factor)."""
    Hk = np.asarray(Hk, dtype=float)
    return np.kron(Hk, PROJ_MINUS) + np.kron(np.abs(Hk), PROJ_PLUS)


@dataclass(frozen=True)
class XXZZHamiltonian:
    """H = sum a_ij X_i X_j + sum b_ij Z_i Z_j with entries (i, j, value), i < j."""

    n: int
    xx: tuple[tuple[int, int, float], ...]
    zz: tuple[tuple[int, int, float], ...]

    def terms(self) -> list[tuple[int, int, str, float]]:
        return ([(i, j, "X", float(v)) for i, j, v in self.xx if v != 0]
                + [(i, j, "Z", float(v)) for i, j, v in self.zz if v != 0])

    def dense(self) -> np.ndarray:
        out = np.zeros((2**self.n, 2**self.n))
        for i, j, s, v in self.terms():
            out += v * PauliString.single(self.n, {i: s, j: s}).dense()
        return out

    @classmethod
    def random(cls, n: int, rng: np.random.Generator) -> "XXZZHamiltonian":
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        return cls(n, tuple((i, j, rng.normal()) for i, j in pairs),
                   tuple((i, j, rng.normal()) for i, j in pairs))


@dataclass
class BlockEmbedding:
    n: int
    source: list[LocalQubitTerm]
    embedded: list[LocalQubitTerm]
    verdict: StoqVerdict

    @property
    def hamiltonian_terms(self) -> list[LocalQubitTerm]:
        """The terms -H~_k whose sum is H~."""
        return [t.scaled(-1.0) for t in self.embedded]

    def source_dense(self) -> np.ndarray:
        """H = -sum_k H_k on n qubits."""
        return -terms_to_sparse(self.source, self.n).toarray()

    def dense(self) -> np.ndarray:
        """H~ = -sum_k H~_k on n + 1 qubits (ancilla last)."""
        return terms_to_sparse(self.hamiltonian_terms, self.n + 1).toarray()

    def abs_sum_dense(self) -> np.ndarray:
        return terms_to_sparse([LocalQubitTerm(t.support, np.abs(t.matrix)) for t in self.source],
                               self.n).toarray()


def embed_xxzz(H: XXZZHamiltonian) -> BlockEmbedding:
    """Embed each 2-local term separately, with H_k = -(coefficient * P_i P_j)."""
    if H.n > 12:
        raise ValueError("supported up to 12 qubits")
    pauli = {"X": np.array([[0.0, 1.0], [1.0, 0.0]]), "Z": np.diag([1.0, -1.0])}
    source, embedded = [], []
    for i, j, s, v in H.terms():
        hk = -v * np.kron(pauli[s], pauli[s])
        source.append(LocalQubitTerm((i, j), hk, f"{s}{i}{s}{j}"))
        embedded.append(LocalQubitTerm((i, j, H.n), replace_entries(hk), f"~{s}{i}{s}{j}"))
    verdict = certify_stoquastic([t.scaled(-1.0) for t in embedded])
    if not verdict.ok:
        raise RuntimeError(f"embedded term {verdict.worst_term} is not stoquastic")
    return BlockEmbedding(H.n, source, embedded, verdict)


def _propagator(Hd: np.ndarray, t: float) -> np.ndarray:
    w, v = la.eigh(Hd)
    return (v * np.exp(-1j * w * t)) @ v.T


@dataclass(frozen=True)
class SectorResult:
    error: float
    leakage: float


def verify_sector_dynamics(emb: BlockEmbedding, psi: np.ndarray, t: float,
                           norm_tol: float = 1e-10) -> SectorResult:
    """Compare the |-> ancilla sector of exp(-iH~t)(psi ⊗ |->) with exp(-iHt)psi."""
    if emb.n > 6:
        raise ValueError("dense sector verification limited to 6 qubits")
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > norm_tol:
        raise ValueError("state is not normalized")
    big = _propagator(emb.dense(), t) @ np.kron(psi, KET_MINUS)
    blocks = big.reshape(-1, 2)
    minus_part = blocks @ KET_MINUS
    plus_part = blocks @ KET_PLUS
    ref = _propagator(emb.source_dense(), t) @ psi
    return SectorResult(float(np.linalg.norm(minus_part - ref)), float(np.linalg.norm(plus_part)))


def sector_spectra(emb: BlockEmbedding) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvalues of H and of H~ compressed to the |-> ancilla sector."""
    Ht = emb.dense()
    iso = np.kron(np.eye(2**emb.n), KET_MINUS.reshape(2, 1))
    return np.linalg.eigvalsh(emb.source_dense()), np.linalg.eigvalsh(iso.T @ Ht @ iso)


def random_state(dim: int, rng: np.random.Generator) -> np.ndarray:
    v = rng.standard_normal(dim) + 1j * rng.standard_normal(dim)
    return v / np.linalg.norm(v)
