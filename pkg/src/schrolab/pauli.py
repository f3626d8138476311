"""Small qubit Hamiltonians: Pauli sums, transverse-field Ising models and
their exact spectra and propagators.

Qubit 0 is the leftmost Kronecker factor (most significant bit of a basis
index), and Z|0> = |0>.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import reduce
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as la

MAX_DENSE_QUBITS = 14
MAX_SPECTRUM_QUBITS = 12

_PAULI = {
    "I": np.eye(2),
    "X": np.array([[0.0, 1.0], [1.0, 0.0]]),
    "Y": np.array([[0.0, -1j], [1j, 0.0]]),
    "Z": np.array([[1.0, 0.0], [0.0, -1.0]]),
}


class DimensionError(ValueError):
    """Raised when a dense realization would exceed the supported qubit count."""


@dataclass(frozen=True)
class PauliString:
    factors: str

    def __post_init__(self):
        bad = set(self.factors) - set("IXYZ")
        if bad:
            raise ValueError(f"invalid Pauli symbols {sorted(bad)}")

    @property
    def n(self) -> int:
        return len(self.factors)

    @classmethod
    def single(cls, n: int, sites: dict[int, str]) -> "PauliString":
        """String with the given symbols on ``sites`` and identity elsewhere."""
        chars = ["I"] * n
        for q, s in sites.items():
            if not 0 <= q < n:
                raise IndexError(f"qubit {q} out of range for n={n}")
            chars[q] = s
        return cls("".join(chars))

    @property
    def is_real(self) -> bool:
        return self.factors.count("Y") % 2 == 0

    def dense(self) -> np.ndarray:
        mats = [_PAULI[c] for c in self.factors]
        out = reduce(np.kron, mats, np.ones((1, 1)))
        return out.real if self.is_real else out


@dataclass(frozen=True)
class PauliOperator:
    """Real-weighted sum of Pauli strings on ``n`` qubits."""

    n: int
    terms: tuple[tuple[float, PauliString], ...] = field(default_factory=tuple)

    def __post_init__(self):
        for coef, s in self.terms:
            if s.n != self.n:
                raise ValueError(f"term {s.factors!r} has {s.n} qubits, expected {self.n}")
            if not np.isfinite(coef):
                raise ValueError("non-finite coefficient")

    @classmethod
    def from_terms(cls, n: int, terms: Iterable[tuple[float, str | PauliString]]):
        """Build from ``(coef, "XZI...")`` pairs, merging identical strings."""
        merged: dict[str, float] = {}
        for coef, s in terms:
            key = s.factors if isinstance(s, PauliString) else s
            merged[key] = merged.get(key, 0.0) + float(coef)
        return cls(n, tuple((c, PauliString(k)) for k, c in merged.items()))

    def __add__(self, other: "PauliOperator") -> "PauliOperator":
        if other.n != self.n:
            raise ValueError("qubit counts differ")
        return PauliOperator.from_terms(self.n, list(self.terms) + list(other.terms))

    def __mul__(self, alpha: float) -> "PauliOperator":
        return PauliOperator(self.n, tuple((alpha * c, s) for c, s in self.terms))

    __rmul__ = __mul__

    @property
    def is_real(self) -> bool:
        return all(s.is_real for _, s in self.terms)


@dataclass(frozen=True)
class TimHamiltonian:
    """H = sum_u (a_u X_u + b_u Z_u) + sum_{u<v} b_uv Z_u Z_v."""

    n: int
    a: tuple[float, ...]
    b: tuple[float, ...]
    bzz: tuple[tuple[int, int, float], ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "a", tuple(float(x) for x in self.a))
        object.__setattr__(self, "b", tuple(float(x) for x in self.b))
        object.__setattr__(
            self, "bzz", tuple((int(u), int(v), float(c)) for u, v, c in self.bzz)
        )
        if len(self.a) != self.n or len(self.b) != self.n:
            raise ValueError("a and b must have length n")
        for u, v, c in self.bzz:
            if not (0 <= u < v < self.n):
                raise ValueError(f"coupling index ({u}, {v}) must satisfy 0 <= u < v < n")
        coefs = list(self.a) + list(self.b) + [c for *_, c in self.bzz]
        if not np.all(np.isfinite(coefs)):
            raise ValueError("non-finite TIM coefficient")

    def to_pauli(self) -> PauliOperator:
        n = self.n
        terms = []
        for u in range(n):
            if self.a[u] != 0.0:
                terms.append((self.a[u], PauliString.single(n, {u: "X"})))
            if self.b[u] != 0.0:
                terms.append((self.b[u], PauliString.single(n, {u: "Z"})))
        for u, v, c in self.bzz:
            if c != 0.0:
                terms.append((c, PauliString.single(n, {u: "Z", v: "Z"})))
        return PauliOperator.from_terms(n, terms)

    def x_part(self) -> "TimHamiltonian":
        return TimHamiltonian(self.n, self.a, (0.0,) * self.n, ())

    def z_part(self) -> "TimHamiltonian":
        return TimHamiltonian(self.n, (0.0,) * self.n, self.b, self.bzz)

    def coupling_matrix(self) -> np.ndarray:
        out = np.zeros((self.n, self.n))
        for u, v, c in self.bzz:
            out[u, v] += c
        return out

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "a": list(self.a),
            "b": list(self.b),
            "bzz": [[u, v, c] for u, v, c in self.bzz],
        }

    @classmethod
    def from_json(cls, data: dict | str) -> "TimHamiltonian":
        if isinstance(data, str):
            data = json.loads(data)
        return cls(
            int(data["n"]),
            tuple(data["a"]),
            tuple(data["b"]),
            tuple(tuple(t) for t in data.get("bzz", [])),
        )


def _as_pauli(op: PauliOperator | TimHamiltonian) -> PauliOperator:
    return op.to_pauli() if isinstance(op, TimHamiltonian) else op


def to_dense(op: PauliOperator | TimHamiltonian) -> np.ndarray:
    """Dense matrix of a Pauli sum (real dtype when every term is real)."""
    op = _as_pauli(op)
    if op.n > MAX_DENSE_QUBITS:
        raise DimensionError(f"n={op.n} exceeds the dense limit of {MAX_DENSE_QUBITS} qubits")
    dim = 2**op.n
    out = np.zeros((dim, dim), dtype=float if op.is_real else complex)
    for coef, s in op.terms:
        out += coef * s.dense()
    # Hermitian by construction; symmetrize away the last ulp of round-off
    return 0.5 * (out + out.conj().T)


def exact_spectrum(op: PauliOperator | TimHamiltonian) -> tuple[np.ndarray, np.ndarray]:
    """Ascending eigenvalues and orthonormal eigenvectors (as columns)."""
    op = _as_pauli(op)
    if op.n > MAX_SPECTRUM_QUBITS:
        raise DimensionError(f"n={op.n} exceeds the spectrum limit of {MAX_SPECTRUM_QUBITS} qubits")
    return la.eigh(to_dense(op))


def exact_propagator(op: PauliOperator | TimHamiltonian, t: float) -> np.ndarray:
    """The full unitary exp(-iHt) via eigendecomposition."""
    w, v = exact_spectrum(op)
    return (v * np.exp(-1j * w * t)) @ v.conj().T


def exact_propagate(op: PauliOperator | TimHamiltonian, t: float, psi: Sequence[complex],
                    norm_tol: float = 1e-10) -> np.ndarray:
    """Apply exp(-iHt) to a normalized state vector."""
    psi = np.asarray(psi, dtype=complex)
    if abs(np.linalg.norm(psi) - 1.0) > norm_tol:
        raise ValueError("input state is not normalized")
    w, v = exact_spectrum(op)
    return v @ (np.exp(-1j * w * t) * (v.conj().T @ psi))


def z_conjugate(h: TimHamiltonian, qubits: Iterable[int]) -> TimHamiltonian:
    """Conjugate by Z on ``qubits``: flips the sign of their transverse fields."""
    a = list(h.a)
    for q in qubits:
        a[q] = -a[q]
    return TimHamiltonian(h.n, tuple(a), h.b, h.bzz)


def random_tim(n: int, rng: np.random.Generator, scale: float = 1.0) -> TimHamiltonian:
    a = rng.normal(scale=scale, size=n)
    b = rng.normal(scale=scale, size=n)
    bzz = [(u, v, rng.normal(scale=scale)) for u in range(n) for v in range(u + 1, n)]
    return TimHamiltonian(n, tuple(a), tuple(b), tuple(bzz))


def load_tim(path) -> TimHamiltonian:
    with open(path) as fh:
        return TimHamiltonian.from_json(json.load(fh))


def save_tim(h: TimHamiltonian, path) -> None:
    with open(path, "w") as fh:
        json.dump(h.to_json(), fh, indent=2)
