"""Finite-difference grids over [-1, 1]^n, Schrödinger operator assembly and
low-end eigensolvers.

Grid vectors are plain l2-normalized arrays in C order (last coordinate
fastest); a continuum wave function is recovered as ``psi / sqrt(cell volume)``.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
import scipy.sparse.linalg as spla

Boundary = Literal["dirichlet", "periodic"]

MAX_GRID_POINTS = 4_000_000
DENSE_LIMIT = 4096
# absolute bisection tolerance: tiny, so eigenvalues are resolved relative to
# their own size instead of the matrix norm
BISECTION_TOL = np.finfo(float).tiny


class GridSizeError(ValueError):
    """Raised when an operator would exceed the configured point cap."""


class NonConvergence(RuntimeError):
    """Eigensolver failure; carries the best eigenvalues and residuals found."""

    def __init__(self, message: str, eigenvalues=None, residuals=None):
        super().__init__(message)
        self.eigenvalues = eigenvalues
        self.residuals = residuals


@dataclass(frozen=True)
class Grid1D:
    m: int
    boundary: Boundary = "dirichlet"

    def __post_init__(self):
        if self.boundary not in ("dirichlet", "periodic"):
            raise ValueError(f"unknown boundary {self.boundary!r}")
        if self.m < 1:
            raise ValueError("m must be positive")

    @property
    def spacing(self) -> float:
        return 2.0 / (self.m + 1) if self.boundary == "dirichlet" else 2.0 / self.m

    @property
    def nodes(self) -> np.ndarray:
        d = self.spacing
        if self.boundary == "dirichlet":
            return -1.0 + d * np.arange(1, self.m + 1)
        return -1.0 + d * np.arange(self.m)

    def refined(self) -> "Grid1D":
        """Nested refinement: every old node stays a node."""
        if self.boundary == "dirichlet":
            return Grid1D(2 * self.m + 1, self.boundary)
        return Grid1D(2 * self.m, self.boundary)

    def to_json(self) -> dict:
        return {"m": self.m, "boundary": self.boundary, "spacing": self.spacing}


@dataclass(frozen=True)
class TensorGrid:
    dims: tuple[Grid1D, ...]

    def __post_init__(self):
        object.__setattr__(self, "dims", tuple(self.dims))
        if not 1 <= len(self.dims) <= 3:
            raise ValueError("tensor grids support 1 to 3 coordinates")
        if len({g.boundary for g in self.dims}) != 1:
            raise ValueError("all coordinates must share a boundary type")

    @classmethod
    def uniform(cls, n: int, m: int, boundary: Boundary = "dirichlet") -> "TensorGrid":
        return cls(tuple(Grid1D(m, boundary) for _ in range(n)))

    @property
    def n(self) -> int:
        return len(self.dims)

    @property
    def shape(self) -> tuple[int, ...]:
        return tuple(g.m for g in self.dims)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def boundary(self) -> Boundary:
        return self.dims[0].boundary

    @property
    def cell_volume(self) -> float:
        return float(np.prod([g.spacing for g in self.dims]))

    def flat_index(self, multi: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(multi), self.shape))

    def multi_index(self, flat: int) -> tuple[int, ...]:
        return tuple(int(i) for i in np.unravel_index(flat, self.shape))

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable coordinate arrays (``indexing='ij'``, sparse)."""
        return np.meshgrid(*[g.nodes for g in self.dims], indexing="ij", sparse=True)

    def to_json(self) -> dict:
        return {"dims": [g.to_json() for g in self.dims]}


@dataclass(frozen=True)
class PotentialTerm:
    """One term of a k-body potential: ``fn`` applied to the listed coordinates."""

    coords: tuple[int, ...]
    fn: Callable[..., np.ndarray]
    label: str = ""

    def __post_init__(self):
        if not 1 <= len(self.coords) <= 2:
            raise ValueError("potential terms may depend on 1 or 2 coordinates")


@dataclass
class SparseSymOp:
    """Real symmetric operator on a grid.

    ``matrix`` holds the full symmetric CSR matrix unless the operator is
    matrix-free, in which case ``apply`` is used for products.  ``kinetic``
    and ``potential`` keep the Schrödinger structure when known.
    """

    N: int
    matrix: sp.csr_matrix | None = None
    apply: Callable[[np.ndarray], np.ndarray] | None = None
    grid: TensorGrid | None = None
    kinetic: tuple[float, ...] | None = None
    potential: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix is None and self.apply is None:
            raise ValueError("need a matrix or an apply hook")
        if self.matrix is not None:
            self.matrix = sp.csr_matrix(self.matrix)
            if self.matrix.shape != (self.N, self.N):
                raise ValueError("matrix shape does not match N")
            if not np.all(np.isfinite(self.matrix.data)):
                raise ValueError("non-finite operator entry")

    @classmethod
    def from_entries(cls, N: int, rows, cols, vals, **kw) -> "SparseSymOp":
        """Build from upper-triangle entries (row <= col); mirrored automatically."""
        rows, cols, vals = map(np.asarray, (rows, cols, vals))
        if np.any(rows > cols):
            raise ValueError("entries must satisfy row <= col")
        off = rows != cols
        r = np.concatenate([rows, cols[off]])
        c = np.concatenate([cols, rows[off]])
        v = np.concatenate([vals, vals[off]])
        return cls(N, sp.csr_matrix((v, (r, c)), shape=(N, N)), **kw)

    def entries(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        up = sp.triu(self.matrix).tocoo()
        return up.row, up.col, up.data

    def matvec(self, v: np.ndarray) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix @ v
        return self.apply(v)

    __matmul__ = matvec

    def as_linear_operator(self) -> spla.LinearOperator:
        return spla.LinearOperator((self.N, self.N), matvec=self.matvec,
                                   matmat=self.matvec, dtype=float)

    def toarray(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.toarray()
        return self.apply(np.eye(self.N))

    def diagonal(self) -> np.ndarray:
        if self.matrix is not None:
            return self.matrix.diagonal()
        return np.array([self.apply(e)[i] for i, e in enumerate(np.eye(self.N))])

    def norm_bound(self) -> float:
        """Upper bound on the 2-norm (max absolute row sum)."""
        if self.matrix is not None:
            return float(abs(self.matrix).sum(axis=1).max())
        return _matrix_free_norm_bound(self)

    def lower_bound(self) -> float:
        """Gershgorin lower bound on the spectrum."""
        if self.matrix is not None:
            a = self.matrix
            off = np.asarray(abs(a).sum(axis=1)).ravel() - np.abs(a.diagonal())
            return float((a.diagonal() - off).min())
        return float(self.potential.min())  # Laplacian part is positive semidefinite

    def is_tridiagonal(self) -> bool:
        if self.matrix is None:
            return False
        coo = self.matrix.tocoo()
        return bool(np.all(np.abs(coo.row - coo.col) <= 1))

    def __add__(self, other: "SparseSymOp") -> "SparseSymOp":
        if self.matrix is None or other.matrix is None:
            raise TypeError("sums are only defined for assembled operators")
        return SparseSymOp(self.N, self.matrix + other.matrix, grid=self.grid or other.grid)

    def scaled(self, alpha: float) -> "SparseSymOp":
        return SparseSymOp(self.N, alpha * self.matrix, grid=self.grid)

    def shifted(self, c: float) -> "SparseSymOp":
        """``self - c I``."""
        return SparseSymOp(self.N, self.matrix - c * sp.identity(self.N, format="csr"),
                           grid=self.grid, kinetic=self.kinetic,
                           potential=None if self.potential is None else self.potential - c)

    def to_json(self) -> dict:
        out = {"N": self.N, "matrix_free": self.matrix is None}
        if self.grid is not None:
            out["grid"] = self.grid.to_json()
        if self.kinetic is not None:
            out["kinetic"] = list(self.kinetic)
        if self.matrix is not None:
            out["nnz"] = int(self.matrix.nnz)
        out.update(self.meta)
        return out


def _matrix_free_norm_bound(op: SparseSymOp) -> float:
    lap = sum(4.0 * g / d.spacing**2 for g, d in zip(op.kinetic, op.grid.dims))
    return float(lap + np.abs(op.potential).max())


def _lap1d_matrix(grid: Grid1D) -> sp.csr_matrix:
    m, d = grid.m, grid.spacing
    main = np.full(m, 2.0 / d**2)
    off = np.full(m - 1, -1.0 / d**2)
    mat = sp.diags([off, main, off], [-1, 0, 1], format="lil")
    if grid.boundary == "periodic":
        mat[0, m - 1] += -1.0 / d**2
        mat[m - 1, 0] += -1.0 / d**2
    return mat.tocsr()


def laplacian_1d(grid: Grid1D) -> SparseSymOp:
    """Second-order stencil for -d²/dx² (zero boundary or wraparound)."""
    if grid.m < 3:
        raise ValueError("need at least 3 points")
    return SparseSymOp(grid.m, _lap1d_matrix(grid), grid=TensorGrid((grid,)),
                       kinetic=(1.0,), potential=np.zeros(grid.m))


def sample_potential_values(grid: TensorGrid, terms: Sequence[PotentialTerm]) -> np.ndarray:
    """Flattened samples of a sum of 1- and 2-body terms."""
    coords = grid.coordinates()
    total = np.zeros(grid.shape)
    for term in terms:
        if max(term.coords) >= grid.n:
            raise IndexError(f"term {term.label or term.coords} exceeds grid dimension")
        vals = term.fn(*[coords[c] for c in term.coords])
        total = total + np.broadcast_to(vals, grid.shape)
    flat = np.ascontiguousarray(total).ravel()
    if not np.all(np.isfinite(flat)):
        raise ValueError("non-finite potential sample")
    return flat


def sample_potential(grid: TensorGrid, terms: Sequence[PotentialTerm]) -> SparseSymOp:
    """Diagonal operator with the potential sampled at every node."""
    vals = sample_potential_values(grid, terms)
    return SparseSymOp(grid.size, sp.diags(vals, format="csr"), grid=grid, potential=vals)


def _kron_extend(mat: sp.spmatrix, axis: int, shape: tuple[int, ...]) -> sp.csr_matrix:
    out = sp.identity(1, format="csr")
    for u, m in enumerate(shape):
        out = sp.kron(out, mat if u == axis else sp.identity(m, format="csr"), format="csr")
    return out


def _apply_axis_laplacian(v: np.ndarray, grid: TensorGrid, axis: int) -> np.ndarray:
    d = grid.dims[axis]
    arr = v.reshape(grid.shape + v.shape[1:])
    out = 2.0 * arr
    lo = [slice(None)] * arr.ndim
    hi = [slice(None)] * arr.ndim
    lo[axis], hi[axis] = slice(0, -1), slice(1, None)
    out[tuple(lo)] -= arr[tuple(hi)]
    out[tuple(hi)] -= arr[tuple(lo)]
    if d.boundary == "periodic":
        first = [slice(None)] * arr.ndim
        last = [slice(None)] * arr.ndim
        first[axis], last[axis] = 0, -1
        out[tuple(first)] -= arr[tuple(last)]
        out[tuple(last)] -= arr[tuple(first)]
    return (out / d.spacing**2).reshape(v.shape)


def assemble_schrodinger(grid: TensorGrid, g: Sequence[float],
                         V: Sequence[PotentialTerm] | np.ndarray,
                         max_points: int = MAX_GRID_POINTS,
                         matrix_free: bool | None = None) -> SparseSymOp:
    """sum_u g_u (-d²/dx_u²) + V on a tensor grid.

    ``V`` is either a list of potential terms or an already sampled flat
    array.  Three-dimensional grids default to a matrix-free apply.
    """
    g = tuple(float(x) for x in g)
    if len(g) != grid.n:
        raise ValueError("one kinetic coefficient per coordinate required")
    if any(x <= 0 for x in g):
        raise ValueError("kinetic coefficients must be positive")
    if grid.size > max_points:
        raise GridSizeError(f"{grid.size} grid points exceeds cap {max_points}")
    vals = (np.asarray(V, dtype=float).ravel() if isinstance(V, np.ndarray)
            else sample_potential_values(grid, V))
    if vals.shape != (grid.size,):
        raise ValueError("potential sample has the wrong length")
    if matrix_free is None:
        matrix_free = grid.n == 3
    if matrix_free:
        def apply(v, _g=g, _grid=grid, _vals=vals):
            v = np.asarray(v)
            scale = _vals if v.ndim == 1 else _vals[:, None]
            out = scale * v
            for axis, gu in enumerate(_g):
                out = out + gu * _apply_axis_laplacian(v, _grid, axis)
            return out
        return SparseSymOp(grid.size, apply=apply, grid=grid, kinetic=g, potential=vals)
    mat = sp.diags(vals, format="csr")
    for axis, (gu, d) in enumerate(zip(g, grid.dims)):
        mat = mat + gu * _kron_extend(_lap1d_matrix(d), axis, grid.shape)
    return SparseSymOp(grid.size, mat.tocsr(), grid=grid, kinetic=g, potential=vals)


@dataclass
class LowSpectrum:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    method: str
    seed: int | None = None

    @property
    def k(self) -> int:
        return len(self.eigenvalues)

    def to_csv(self) -> str:
        lines = ["index,eigenvalue,residual"]
        lines += [f"{i},{lam:.17g},{r:.6e}" for i, (lam, r)
                  in enumerate(zip(self.eigenvalues, self.residuals))]
        return "\n".join(lines) + "\n"


def _residuals(op: SparseSymOp, w: np.ndarray, v: np.ndarray) -> np.ndarray:
    return np.linalg.norm(op.matvec(v) - v * w, axis=0)


def lowest_eigenpairs(op: SparseSymOp, k: int, tol: float = 1e-10,
                      sigma: float | None = None, seed: int = 0,
                      maxiter: int | None = None) -> LowSpectrum:
    """The ``k`` smallest eigenpairs with residuals checked against ``tol * ||A||``.

    Tridiagonal operators go to LAPACK's bisection solver at any size; other
    operators up to ``DENSE_LIMIT`` are diagonalized densely.  Larger ones use
    implicitly restarted Lanczos (ARPACK) in shift-invert mode about a
    Gershgorin lower bound, or in plain mode when matrix-free.
    """
    if not 0 < k < op.N:
        raise ValueError("need 0 < k < N")
    scale = op.norm_bound()
    if op.is_tridiagonal():
        a = op.matrix
        w, v = la.eigh_tridiagonal(a.diagonal(), a.diagonal(1), select="i",
                                   select_range=(0, k - 1), lapack_driver="stebz",
                               tol=BISECTION_TOL)
        method = "tridiagonal"
    elif op.N <= DENSE_LIMIT:
        w, v = la.eigh(op.toarray(), subset_by_index=(0, k - 1))
        method = "dense"
    else:
        v0 = np.random.default_rng(seed).standard_normal(op.N)
        ncv = min(op.N - 1, max(2 * k + 1, 40))
        if op.matrix is not None:
            if sigma is None:
                sigma = op.lower_bound() - 1.0
            w, v = spla.eigsh(op.matrix.tocsc(), k=k, sigma=sigma, which="LM", v0=v0,
                              ncv=ncv, tol=0.0, maxiter=maxiter)
            method = "lanczos-shift-invert"
        else:
            shift = op.norm_bound()
            lin = spla.LinearOperator((op.N, op.N), dtype=float,
                                      matvec=lambda x: op.matvec(x) - shift * x)
            w, v = spla.eigsh(lin, k=k, which="LM", v0=v0, ncv=max(ncv, 80),
                              tol=tol, maxiter=maxiter or 20 * op.N)
            w = w + shift
            method = "lanczos"
        order = np.argsort(w)
        w, v = w[order], v[:, order]
    res = _residuals(op, w, v)
    if np.any(res > tol * scale):
        raise NonConvergence(f"residuals {res.max():.3e} exceed {tol * scale:.3e}", w, res)
    return LowSpectrum(w, v, res, method, seed)


def dump_vectors(path_stem: str, vectors: np.ndarray, grid: TensorGrid) -> None:
    """Little-endian float64 array plus a JSON sidecar describing the grid."""
    arr = np.ascontiguousarray(vectors, dtype="<f8")
    arr.tofile(path_stem + ".bin")
    with open(path_stem + ".json", "w") as fh:
        json.dump({"grid": grid.to_json(), "shape": list(arr.shape), "dtype": "<f8"}, fh, indent=2)
