"""Sparse storage, deterministic assembly, and Krylov solvers.

Matrices are kept in canonical CSR form (strictly increasing column indices
per row, duplicates summed). Assembly from triplets sorts entries by
(row, col, value) before summation, so the result is bit-identical under any
permutation of the input triplets.

`spd_solve` is a Jacobi-preconditioned conjugate gradient; `factorize`
provides a reusable direct factorization behind the same vector-to-vector
interface, which the boundary-operator layer uses for the repeated interior
solves on a fixed mesh. `gmres` is restarted GMRES with modified
Gram-Schmidt and Givens rotations for matrix-free operators.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

__all__ = [
    "SparseMatrix",
    "LinearOperator",
    "SolverFailure",
    "GmresResult",
    "assemble_from_triplets",
    "spd_solve",
    "factorize",
    "gmres",
]


class SolverFailure(RuntimeError):
    """Iterative solver did not meet its tolerance.

    Carries the best iterate, its relative residual, and the iteration count
    so callers can inspect or reuse the partial result.
    """

    def __init__(self, message, solution=None, residual=np.nan, iterations=0):
        super().__init__(message)
        self.solution = solution
        self.residual = float(residual)
        self.iterations = int(iterations)


class SparseMatrix:
    """Compressed-sparse-row matrix (canonical form)."""

    __slots__ = ("csr",)

    def __init__(self, data):
        csr = sp.csr_matrix(data)
        if not csr.has_canonical_format:
            csr.sum_duplicates()
            csr.sort_indices()
        self.csr = csr

    @property
    def shape(self) -> tuple[int, int]:
        return self.csr.shape

    @property
    def n_rows(self) -> int:
        return self.csr.shape[0]

    @property
    def n_cols(self) -> int:
        return self.csr.shape[1]

    @property
    def nnz(self) -> int:
        return self.csr.nnz

    @property
    def row_offsets(self) -> np.ndarray:
        return self.csr.indptr

    @property
    def col_indices(self) -> np.ndarray:
        return self.csr.indices

    @property
    def values(self) -> np.ndarray:
        return self.csr.data

    @property
    def T(self) -> "SparseMatrix":
        return SparseMatrix(self.csr.T.tocsr())

    def diagonal(self) -> np.ndarray:
        return self.csr.diagonal()

    def toarray(self) -> np.ndarray:
        return self.csr.toarray()

    def submatrix(self, rows, cols) -> "SparseMatrix":
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        return SparseMatrix(self.csr[rows][:, cols])

    def symmetry_defect(self) -> float:
        """max |A_ij - A_ji| relative to max |A_ij| (0 for exactly symmetric)."""
        d = self.csr - self.csr.T
        scale = np.abs(self.csr.data).max(initial=0.0)
        if scale == 0.0:
            return 0.0
        return float(np.abs(d.data).max(initial=0.0) / scale)

    def __matmul__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self.csr @ other.csr)
        out = self.csr @ np.asarray(other, dtype=float)
        return out

    def __add__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self.csr + other.csr)
        return NotImplemented

    def __sub__(self, other):
        if isinstance(other, SparseMatrix):
            return SparseMatrix(self.csr - other.csr)
        return NotImplemented

    def __rmul__(self, scalar):
        return SparseMatrix(float(scalar) * self.csr)

    def dump_coo(self, path) -> None:
        """Debug dump in coordinate text format: one `row col value` per line."""
        coo = self.csr.tocoo()
        with open(path, "w", encoding="ascii") as fh:
            fh.write(f"% {self.n_rows} {self.n_cols} {self.nnz}\n")
            for r, c, v in zip(coo.row, coo.col, coo.data):
                fh.write(f"{r} {c} {v:.17g}\n")

    def __repr__(self):
        return f"<SparseMatrix {self.n_rows}x{self.n_cols}, nnz={self.nnz}>"


class LinearOperator:
    """Matrix-free linear map on vectors of a fixed dimension."""

    def __init__(self, dimension: int, apply: Callable[[np.ndarray], np.ndarray]):
        self.dimension = int(dimension)
        self._apply = apply

    def apply(self, v) -> np.ndarray:
        v = np.asarray(v, dtype=float)
        if v.shape != (self.dimension,):
            raise ValueError(
                f"operator dimension {self.dimension}, got vector of size {v.size}"
            )
        return np.asarray(self._apply(v), dtype=float)

    __call__ = apply

    def __matmul__(self, v):
        return self.apply(v)


def _as_apply(op) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(op, SparseMatrix):
        return lambda v: op.csr @ v
    if isinstance(op, LinearOperator):
        return op.apply
    if sp.issparse(op):
        return lambda v: op @ v
    if isinstance(op, np.ndarray) and op.ndim == 2:
        return lambda v: op @ v
    if callable(op):
        return op
    raise TypeError(f"cannot interpret {type(op).__name__} as a linear operator")


def assemble_from_triplets(n_rows, n_cols, triplets) -> SparseMatrix:
    """Build a SparseMatrix from (row, col, value) entries, summing duplicates.

    The result is independent of the triplet ordering down to the last bit:
    entries are sorted by (row, col, value) first, so duplicate coordinates
    are always accumulated in the same order. `triplets` may be a sequence of
    3-tuples or a `(rows, cols, values)` triple of equal-length arrays.
    """
    n_rows = int(n_rows)
    n_cols = int(n_cols)
    if (
        isinstance(triplets, tuple)
        and len(triplets) == 3
        and not np.isscalar(triplets[0])
    ):
        rows = np.asarray(triplets[0], dtype=np.int64).ravel()
        cols = np.asarray(triplets[1], dtype=np.int64).ravel()
        vals = np.asarray(triplets[2], dtype=float).ravel()
        if not (rows.size == cols.size == vals.size):
            raise ValueError("rows, cols, values must have equal length")
    else:
        arr = np.asarray(list(triplets), dtype=float)
        if arr.size == 0:
            arr = arr.reshape(0, 3)
        if arr.ndim != 2 or arr.shape[1] != 3:
            raise ValueError("triplets must be (row, col, value) entries")
        rows = arr[:, 0].astype(np.int64)
        cols = arr[:, 1].astype(np.int64)
        vals = arr[:, 2]

    if rows.size:
        if rows.min() < 0 or rows.max() >= n_rows:
            raise ValueError("triplet row index out of range")
        if cols.min() < 0 or cols.max() >= n_cols:
            raise ValueError("triplet column index out of range")

    # fuse (row, col) into one sort key; keeps the lexicographic order while
    # halving the peak memory of the sort (large meshes assemble ~50M triplets)
    key = rows * np.int64(n_cols) + cols
    del rows, cols
    order = np.lexsort((vals, key))
    key = key[order]
    vals = vals[order]
    del order
    if key.size:
        first = np.empty(key.size, dtype=bool)
        first[0] = True
        first[1:] = key[1:] != key[:-1]
        starts = np.flatnonzero(first)
        vals = np.add.reduceat(vals, starts)
        key = key[starts]
    rows = key // n_cols
    cols = key % n_cols

    indptr = np.zeros(n_rows + 1, dtype=np.int64)
    np.cumsum(np.bincount(rows, minlength=n_rows), out=indptr[1:])
    csr = sp.csr_matrix((vals, cols, indptr), shape=(n_rows, n_cols))
    csr.has_canonical_format = True  # sorted, duplicate-free by construction
    return SparseMatrix(csr)


def spd_solve(A, b, rel_tol: float = 1e-12, max_iter: int | None = None) -> np.ndarray:
    """Jacobi-preconditioned conjugate gradients for SPD systems.

    Guarantees ||A x - b|| <= rel_tol * ||b|| on return; raises SolverFailure
    (with the best iterate attached) if the iteration cap is hit first.
    """
    apply_A = _as_apply(A)
    b = np.asarray(b, dtype=float)
    n = b.size
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return np.zeros(n)

    try:
        diag = np.asarray(A.diagonal(), dtype=float)
        if np.any(diag <= 0.0):
            raise AttributeError
        inv_diag = 1.0 / diag
    except AttributeError:
        inv_diag = np.ones(n)

    if max_iter is None:
        max_iter = 20 * n + 200

    x = np.zeros(n)
    r = b.copy()
    z = inv_diag * r
    p = z.copy()
    rz = float(r @ z)
    rnorm = bnorm
    for it in range(1, max_iter + 1):
        Ap = apply_A(p)
        pAp = float(p @ Ap)
        if pAp <= 0.0:
            raise SolverFailure(
                f"matrix not positive definite (p^T A p = {pAp:.3e})",
                solution=x,
                residual=rnorm / bnorm,
                iterations=it,
            )
        alpha = rz / pAp
        x += alpha * p
        r -= alpha * Ap
        rnorm = float(np.linalg.norm(r))
        if rnorm <= rel_tol * bnorm:
            return x
        z = inv_diag * r
        rz_new = float(r @ z)
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise SolverFailure(
        f"CG did not reach rel_tol={rel_tol:g} in {max_iter} iterations "
        f"(relative residual {rnorm / bnorm:.3e})",
        solution=x,
        residual=rnorm / bnorm,
        iterations=max_iter,
    )


# above this size a sparse LU of a 2D stiffness-type matrix costs gigabytes
# of fill; multigrid-preconditioned CG keeps memory at operator size
_DIRECT_LIMIT = 40_000


def factorize(A, rel_tol: float = 1e-12) -> Callable[[np.ndarray], np.ndarray]:
    """Reusable solver setup for an SPD system; returns a solve callable.

    Factor (or build the multigrid hierarchy) once per matrix, then apply
    to many right-hand sides: moderate sizes get a direct sparse LU, large
    ones an algebraic-multigrid-preconditioned conjugate gradient solved
    to `rel_tol` (only meaningful on the iterative path).
    """
    csr = A.csr if isinstance(A, SparseMatrix) else sp.csr_matrix(A)
    n = csr.shape[0]
    if n <= _DIRECT_LIMIT:
        lu = spla.splu(sp.csc_matrix(csr), permc_spec="COLAMD")
        return lu.solve

    import pyamg

    # classical AMG wants an M-matrix; P1 stiffness on obtuse triangles has
    # positive off-diagonal entries, where aggregation coarsening holds up
    offdiag = csr.copy()
    offdiag.setdiag(0.0)
    scale = float(np.abs(csr.diagonal()).max(initial=0.0))
    if offdiag.data.max(initial=0.0) > 1e-12 * scale:
        ml = pyamg.smoothed_aggregation_solver(csr)
    else:
        ml = pyamg.ruge_stuben_solver(csr)
    M = ml.aspreconditioner(cycle="V")

    def solve(b: np.ndarray) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        x, info = spla.cg(csr, b, rtol=rel_tol, atol=0.0, maxiter=400, M=M)
        if info != 0:
            r = b - csr @ x
            raise SolverFailure(
                f"multigrid CG did not reach rel_tol={rel_tol:g} "
                f"(info={info}, n={n})",
                solution=x,
                residual=float(np.linalg.norm(r))
                / max(float(np.linalg.norm(b)), 1e-300),
                iterations=abs(int(info)),
            )
        return x

    return solve


@dataclass
class GmresResult:
    """Solution vector plus the iteration report required of the solver."""

    solution: np.ndarray
    iterations: int
    residual: float
    converged: bool


def gmres(
    op,
    b,
    rel_tol: float = 1e-10,
    restart: int = 50,
    max_iters: int = 500,
    M=None,
    x0=None,
) -> GmresResult:
    """Restarted GMRES with optional left preconditioning.

    `op` may be a SparseMatrix, LinearOperator, 2-d array, or a callable
    vector map; `M` (if given) is applied as an approximate inverse to
    residuals. `max_iters` caps the number of restart cycles. Raises
    SolverFailure with the best iterate when the cap is exceeded or the
    iteration stagnates across restarts.
    """
    apply_A = _as_apply(op)
    precond = _as_apply(M) if M is not None else None
    b = np.asarray(b, dtype=float)
    n = b.size

    pb = precond(b) if precond is not None else b
    bnorm = float(np.linalg.norm(pb))
    if bnorm == 0.0:
        return GmresResult(np.zeros(n), 0, 0.0, True)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float).copy()
    m = max(1, min(int(restart), n))
    total = 0
    prev_beta = np.inf
    stalled = 0

    for _ in range(int(max_iters)):
        r = b - apply_A(x)
        if precond is not None:
            r = precond(r)
        beta = float(np.linalg.norm(r))
        if beta <= rel_tol * bnorm:
            return GmresResult(x, total, beta / bnorm, True)
        if beta >= prev_beta * (1.0 - 1e-12):
            stalled += 1
            if stalled >= 2:
                raise SolverFailure(
                    f"GMRES stagnated at relative residual {beta / bnorm:.3e}",
                    solution=x,
                    residual=beta / bnorm,
                    iterations=total,
                )
        else:
            stalled = 0
        prev_beta = beta

        V = np.empty((m + 1, n))
        H = np.zeros((m + 1, m))
        cs = np.zeros(m)
        sn = np.zeros(m)
        g = np.zeros(m + 1)
        g[0] = beta
        V[0] = r / beta

        j = 0
        res = beta
        while j < m:
            w = apply_A(V[j])
            if precond is not None:
                w = precond(w)
            w = np.array(w, dtype=float)  # the MGS update below is in place
            for i in range(j + 1):  # modified Gram-Schmidt
                H[i, j] = float(V[i] @ w)
                w -= H[i, j] * V[i]
            H[j + 1, j] = float(np.linalg.norm(w))

            for i in range(j):  # previously accumulated rotations
                t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
                H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
                H[i, j] = t
            rho = float(np.hypot(H[j, j], H[j + 1, j]))
            cs[j] = H[j, j] / rho
            sn[j] = H[j + 1, j] / rho
            H[j, j] = rho
            g[j + 1] = -sn[j] * g[j]
            g[j] = cs[j] * g[j]

            total += 1
            res = abs(g[j + 1])
            happy = H[j + 1, j] == 0.0
            if not happy:
                V[j + 1] = w / H[j + 1, j]
            j += 1
            if res <= rel_tol * bnorm or happy:
                break

        y = np.zeros(j)
        for i in range(j - 1, -1, -1):  # back substitution
            y[i] = (g[i] - H[i, i + 1 : j] @ y[i + 1 : j]) / H[i, i]
        x = x + V[:j].T @ y
        if res <= rel_tol * bnorm:
            r = b - apply_A(x)
            if precond is not None:
                r = precond(r)
            beta = float(np.linalg.norm(r))
            if beta <= rel_tol * bnorm * 10.0:
                return GmresResult(x, total, beta / bnorm, True)

    r = b - apply_A(x)
    if precond is not None:
        r = precond(r)
    beta = float(np.linalg.norm(r))
    raise SolverFailure(
        f"GMRES exceeded {max_iters} restart cycles "
        f"(relative residual {beta / bnorm:.3e})",
        solution=x,
        residual=beta / bnorm,
        iterations=total,
    )
