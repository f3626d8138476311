"""Unary embedding of grid operators into qubits and stoquasticity checks.

An (m+1)-level coordinate is stored in m qubits through the codewords
``|j> -> |0^j 1^(m-j)>`` (qubit l is 0 iff l < j).  ``sigma_embed`` turns a
real symmetric (m+1)x(m+1) matrix into a list of local qubit terms whose sum
acts on the code space exactly as the matrix does, and a diagonal penalty
with zero-eigenspace equal to the code space pins low-energy states to it.

Hopping between codewords j < k is realized as
``|0><0|_(j-1) ⊗ (|0^r><1^r| + h.c.)_(j..k-1) ⊗ |1><1|_k`` (controls dropped at
the ends), which keeps the code space exactly invariant and is stoquastic
whenever the matrix entry is non-positive.  Nearest-neighbour hopping is
therefore 3-local.  The uncontrolled variant ``X_j ... X_(k-1)`` is 1-local for
nearest neighbours but leaks out of the code space; it is available with
``closure=False``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from functools import reduce
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .grid import PotentialTerm, TensorGrid, assemble_schrodinger

STOQ_TOL = 1e-12
_P0 = np.array([[1.0, 0.0], [0.0, 0.0]])
_P1 = np.array([[0.0, 0.0], [0.0, 1.0]])
_X = np.array([[0.0, 1.0], [1.0, 0.0]])
_Z = np.diag([1.0, -1.0])


class EmbeddingError(RuntimeError):
    """The code-space restriction identity failed for a constructed term list."""


class StoquasticityError(RuntimeError):
    """A term has a positive off-diagonal entry."""


@dataclass(frozen=True)
class UnaryCode:
    m: int

    @property
    def dim(self) -> int:
        return self.m + 1

    def bits(self, j: int) -> tuple[int, ...]:
        return tuple(0 if l < j else 1 for l in range(self.m))

    def index(self, j: int) -> int:
        """Computational-basis index of codeword j (qubit 0 most significant)."""
        return int("".join(map(str, self.bits(j))) or "0", 2)

    def indices(self) -> np.ndarray:
        return np.array([self.index(j) for j in range(self.m + 1)])

    def isometry(self) -> np.ndarray:
        """2^m x (m+1) matrix U with U e_j = codeword j."""
        U = np.zeros((2**self.m, self.m + 1))
        U[self.indices(), np.arange(self.m + 1)] = 1.0
        return U


@dataclass(frozen=True)
class LocalQubitTerm:
    support: tuple[int, ...]
    matrix: np.ndarray
    label: str = ""

    def __post_init__(self):
        object.__setattr__(self, "support", tuple(int(q) for q in self.support))
        mat = np.asarray(self.matrix, dtype=float)
        object.__setattr__(self, "matrix", mat)
        if mat.shape != (2 ** len(self.support),) * 2:
            raise ValueError("matrix size does not match support")
        if len(set(self.support)) != len(self.support):
            raise ValueError("repeated qubit in support")
        if not np.allclose(mat, mat.T, atol=1e-14, rtol=0):
            raise ValueError("term is not symmetric")

    @property
    def locality(self) -> int:
        return len(self.support)

    @property
    def worst_offdiagonal(self) -> float:
        off = self.matrix - np.diag(np.diag(self.matrix))
        return float(off.max()) if off.size > 1 else 0.0

    @property
    def stoquastic(self) -> bool:
        return self.worst_offdiagonal <= STOQ_TOL

    def shifted(self, offset: int) -> "LocalQubitTerm":
        return LocalQubitTerm(tuple(q + offset for q in self.support), self.matrix, self.label)

    def scaled(self, alpha: float) -> "LocalQubitTerm":
        return LocalQubitTerm(self.support, alpha * self.matrix, self.label)

    def to_json(self) -> dict:
        return {"support": list(self.support), "matrix": self.matrix.ravel().tolist(),
                "label": self.label}


def _kron(mats: Sequence[np.ndarray]) -> np.ndarray:
    return reduce(np.kron, mats, np.ones((1, 1)))


def terms_to_sparse(terms: Sequence[LocalQubitTerm], nq: int) -> sp.csr_matrix:
    """Sum of local terms as a sparse 2^nq x 2^nq matrix."""
    dim = 2**nq
    idx = np.arange(dim)
    rows, cols, vals = [], [], []
    for term in terms:
        k = term.locality
        if k == 0:
            rows.append(idx), cols.append(idx), vals.append(np.full(dim, term.matrix[0, 0]))
            continue
        shifts = [nq - 1 - q for q in term.support]
        if max(term.support) >= nq:
            raise IndexError("term support exceeds qubit count")
        sub = np.zeros(dim, dtype=np.int64)
        mask = 0
        for s in shifts:
            sub = (sub << 1) | ((idx >> s) & 1)
            mask |= 1 << s
        rest = idx & ~mask
        place = np.zeros(2**k, dtype=np.int64)
        for a in range(2**k):
            for pos, s in enumerate(shifts):
                if (a >> (k - 1 - pos)) & 1:
                    place[a] |= 1 << s
        nz_a, nz_b = np.nonzero(term.matrix)
        for a, b in zip(nz_a, nz_b):
            src = idx[sub == b]
            rows.append(rest[src] | place[a])
            cols.append(src)
            vals.append(np.full(src.size, term.matrix[a, b]))
    if not rows:
        return sp.csr_matrix((dim, dim))
    return sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                         shape=(dim, dim))


def number_term(q: int, coef: float, label: str = "") -> LocalQubitTerm:
    return LocalQubitTerm((q,), coef * _P1, label)


def _hop_term(j: int, k: int, m: int, alpha: float, closure: bool) -> LocalQubitTerm:
    r = k - j
    if not closure:
        return LocalQubitTerm(tuple(range(j, k)), alpha * _kron([_X] * r), f"hop {j}-{k}")
    flip = np.zeros((2**r, 2**r))
    flip[0, -1] = flip[-1, 0] = 1.0  # |0^r><1^r| + |1^r><0^r|
    mats, support = [], []
    if j > 0:
        mats.append(_P0), support.append(j - 1)
    mats.append(flip), support.extend(range(j, k))
    if k < m:
        mats.append(_P1), support.append(k)
    return LocalQubitTerm(tuple(support), alpha * _kron(mats), f"hop {j}-{k}")


def _diag_terms(d: np.ndarray, tag: str = "") -> list[LocalQubitTerm]:
    """d_m I + sum_l (d_l - d_(l+1)) n_l, zero coefficients dropped."""
    m = len(d) - 1
    out = []
    if d[m] != 0:
        out.append(LocalQubitTerm((), np.array([[d[m]]]), f"const{tag}"))
    for l in range(m):
        cl = d[l] - d[l + 1]
        if cl != 0:
            out.append(number_term(l, cl, f"n{l}{tag}"))
    return out


def restriction_check(terms: Sequence[LocalQubitTerm], A: np.ndarray) -> tuple[float, float]:
    """(||U^T L U - A||, ||P_perp L U||) for the summed term list L."""
    m = A.shape[0] - 1
    code = UnaryCode(m)
    L = terms_to_sparse(terms, m)
    LU = L[:, code.indices()].toarray()
    restricted = LU[code.indices(), :]
    leak = LU.copy()
    leak[code.indices(), :] = 0.0
    return float(np.abs(restricted - A).max()), float(np.linalg.norm(leak, 2))


def sigma_embed(A: np.ndarray, closure: bool = True, verify: bool = True) -> list[LocalQubitTerm]:
    """Local qubit terms realizing the real symmetric matrix A on the unary code.

    The sum of the returned terms restricted to the code space equals
    U A U^T; with ``closure`` it also maps the code space into itself.
    Both identities are checked by brute force for m <= 10 when ``verify``.
    """
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 2:
        raise ValueError("A must be square with at least 2 levels")
    if not np.allclose(A, A.T, atol=0, rtol=0):
        raise ValueError("A must be exactly symmetric")
    m = A.shape[0] - 1
    terms = _diag_terms(np.diag(A))
    for j in range(m + 1):
        for k in range(j + 1, m + 1):
            if A[j, k] != 0:
                terms.append(_hop_term(j, k, m, A[j, k], closure))
    if verify and m <= 10:
        restr, leak = restriction_check(terms, A)
        if restr > 1e-12 * max(1.0, np.abs(A).max()):
            raise EmbeddingError(f"restriction identity violated by {restr:.3e}")
        if closure and leak > 0:
            raise EmbeddingError(f"code space not invariant: leakage {leak:.3e}")
    return terms


def penalty_hamiltonian(n: int, m: int) -> list[LocalQubitTerm]:
    """Diagonal penalty vanishing exactly on the unary code space of each block.

    Per block of m qubits: (m-1) I - sum_j Z_j Z_(j+1) - Z_0 + Z_(m-1),
    which counts twice the domain walls plus the boundary mismatch; every
    non-codeword costs at least 4.
    """
    if m < 2:
        raise ValueError("need at least 2 qubits per coordinate")
    out = []
    for i in range(n):
        off = i * m
        out.append(LocalQubitTerm((), np.array([[float(m - 1)]]), f"Q const {i}"))
        for j in range(m - 1):
            out.append(LocalQubitTerm((off + j, off + j + 1), -np.kron(_Z, _Z), f"Q zz {i}:{j}"))
        out.append(LocalQubitTerm((off,), -_Z, f"Q left {i}"))
        out.append(LocalQubitTerm((off + m - 1,), _Z, f"Q right {i}"))
    return out


def penalty_gap(n: int, m: int) -> dict:
    """Brute-force spectrum of the penalty: kernel dimension and smallest
    nonzero value over all 2^(nm) computational basis states."""
    nq = n * m
    if nq > 20:
        raise ValueError("brute-force penalty check limited to 20 qubits")
    d = terms_to_sparse(penalty_hamiltonian(n, m), nq).diagonal().real
    zero = np.abs(d) < 1e-12
    code = np.zeros(2**nq, dtype=bool)
    idx = UnaryCode(m).indices()
    grids = np.meshgrid(*([idx] * n), indexing="ij")
    flat = np.zeros_like(grids[0])
    for g in grids:
        flat = (flat << m) | g
    code[flat.ravel()] = True
    return {"kernel_dim": int(zero.sum()), "kernel_is_code": bool(np.array_equal(zero, code)),
            "gap": float(d[~zero].min()) if (~zero).any() else np.inf,
            "min_value": float(d.min())}


@dataclass(frozen=True)
class StoqVerdict:
    ok: bool
    worst_value: float
    worst_term: int | None
    localities: tuple[int, ...]

    @property
    def max_locality(self) -> int:
        return max(self.localities, default=0)

    def to_json(self) -> dict:
        return {"stoquastic": self.ok, "worst_offdiagonal": self.worst_value,
                "worst_term": self.worst_term, "max_locality": self.max_locality}


def certify_stoquastic(terms: Sequence[LocalQubitTerm]) -> StoqVerdict:
    worst, where = -np.inf, None
    for i, t in enumerate(terms):
        v = t.worst_offdiagonal
        if t.locality > 0 and v > worst:
            worst, where = v, i
    if where is None:
        worst = 0.0
    return StoqVerdict(bool(worst <= STOQ_TOL), float(worst), where,
                       tuple(t.locality for t in terms))


def _axis_table(grid: TensorGrid, term: PotentialTerm) -> np.ndarray:
    """Samples of one potential term on its own coordinates only."""
    nodes = [grid.dims[c].nodes for c in term.coords]
    if len(nodes) == 1:
        return np.asarray(term.fn(nodes[0]), dtype=float) * np.ones(len(nodes[0]))
    X, Y = np.meshgrid(*nodes, indexing="ij")
    return np.asarray(term.fn(X, Y), dtype=float) * np.ones(X.shape)


def _difference_coeffs(f: np.ndarray, axis: int) -> np.ndarray:
    """c_l = f_l - f_(l+1) for l < m and c_m = f_m along ``axis``."""
    f = np.moveaxis(f, axis, 0)
    c = np.empty_like(f)
    c[:-1] = f[:-1] - f[1:]
    c[-1] = f[-1]
    return np.moveaxis(c, 0, axis)


def _embed_pair_diagonal(table: np.ndarray, off_u: int, off_v: int, m: int, tag: str):
    """Terms for a diagonal function of two unary registers.

    With n_m := 1, f(j, k) = sum_(l,l') c_(l,l') [j <= l][k <= l'] where c is
    the two-axis difference transform, and [j <= l] is n_l on codeword j.
    """
    c = _difference_coeffs(_difference_coeffs(table, 0), 1)
    out = []
    for l in range(m + 1):
        for lp in range(m + 1):
            v = c[l, lp]
            if v == 0:
                continue
            support, mats = [], []
            if l < m:
                support.append(off_u + l), mats.append(_P1)
            if lp < m:
                support.append(off_v + lp), mats.append(_P1)
            out.append(LocalQubitTerm(tuple(support), v * _kron(mats), f"V{tag}[{l},{lp}]"))
    return out


@dataclass
class HStar:
    terms: list[LocalQubitTerm]
    penalty: list[LocalQubitTerm]
    c: float
    n: int
    m: int
    verdict: StoqVerdict

    @property
    def nq(self) -> int:
        return self.n * self.m

    @property
    def all_terms(self) -> list[LocalQubitTerm]:
        return list(self.terms) + [t.scaled(self.c) for t in self.penalty]

    def sparse(self) -> sp.csr_matrix:
        return terms_to_sparse(self.all_terms, self.nq)

    def dense(self) -> np.ndarray:
        if self.nq > 14:
            raise ValueError("dense realization limited to 14 qubits")
        return self.sparse().toarray()

    def to_json(self) -> dict:
        return {"n": self.n, "m": self.m, "c": self.c, "certificate": self.verdict.to_json(),
                "terms": [t.to_json() for t in self.all_terms]}


def assemble_hstar(grid: TensorGrid, g: Sequence[float], potential: Sequence[PotentialTerm],
                   c: float | None = None, closure: bool = True) -> HStar:
    """Qubit Hamiltonian sigma(H_grid) + c Q for H_grid = sum_u g_u(-d²_u) + V.

    Each coordinate's kinetic tridiagonal matrix and each 1- or 2-body
    potential term is embedded separately.  The default ``c`` is one more
    than the sum of the term norms.
    """
    n = grid.n
    m_levels = {d.m for d in grid.dims}
    if len(m_levels) != 1:
        raise ValueError("all coordinates need the same number of grid points")
    m = m_levels.pop() - 1
    terms: list[LocalQubitTerm] = []
    for u, (gu, d) in enumerate(zip(g, grid.dims)):
        lap = assemble_schrodinger(TensorGrid((d,)), [gu], np.zeros(d.m)).toarray()
        terms += [t.shifted(u * m) for t in sigma_embed(lap, closure=closure)]
    for i, term in enumerate(potential):
        table = _axis_table(grid, term)
        if len(term.coords) == 1:
            u = term.coords[0]
            terms += [t.shifted(u * m) for t in _diag_terms(table, f" V{i}")]
        else:
            u, v = term.coords
            terms += _embed_pair_diagonal(table, u * m, v * m, m, f"{i}")
    verdict = certify_stoquastic(terms)
    if not verdict.ok:
        raise StoquasticityError(f"term {verdict.worst_term} has off-diagonal {verdict.worst_value}")
    if c is None:
        c = float(sum(np.linalg.norm(t.matrix, 2) for t in terms)) + 1.0
    pen = penalty_hamiltonian(n, m)
    full = certify_stoquastic(terms + [t.scaled(c) for t in pen])
    return HStar(terms, pen, float(c), n, m, full)


def grid_ground_energy(grid: TensorGrid, g: Sequence[float],
                       potential: Sequence[PotentialTerm]) -> float:
    return float(np.linalg.eigvalsh(assemble_schrodinger(grid, g, potential).toarray())[0])


def export_terms(terms: Sequence[LocalQubitTerm], path) -> None:
    with open(path, "w") as fh:
        json.dump([t.to_json() for t in terms], fh, indent=2)


def load_terms(path) -> list[LocalQubitTerm]:
    with open(path) as fh:
        data = json.load(fh)
    out = []
    for d in data:
        k = len(d["support"])
        out.append(LocalQubitTerm(tuple(d["support"]),
                                  np.asarray(d["matrix"]).reshape(2**k, 2**k), d.get("label", "")))
    return out
