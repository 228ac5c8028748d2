"""Sparse symmetric matrices, Matrix Market I/O, spectral bounds and the
Cholesky oracle.

Everything downstream consumes :class:`SparseSymMatrix`.  It keeps the full
(both-triangle) pattern in CSR form with every diagonal entry stored, so row
scans such as the Gershgorin bound never need to special-case a missing
diagonal.
"""

import warnings
from pathlib import Path
from typing import NamedTuple

import numpy as np
import scipy.sparse as sp
from scipy.linalg import lapack
from scipy.sparse.csgraph import reverse_cuthill_mckee

from .errors import (
    ContractError,
    MatrixMarketError,
    NotPositiveDefiniteError,
    SymmetryError,
    UnsupportedFormatError,
)

#: Largest dimension factorised densely by the oracle.
DENSE_THRESHOLD = 4096
#: Upper limit on band storage for the banded oracle (bytes).
BAND_MEMORY_LIMIT = 2 * 1024**3


def _readonly(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    a.setflags(write=False)
    return a


class SparseSymMatrix:
    """Immutable symmetric matrix in full-pattern CSR storage.

    Construct through :meth:`from_triplets`, :meth:`from_dense` or
    :func:`load_matrix_market` rather than the raw constructor, which trusts
    its arrays apart from cheap shape checks.
    """

    __slots__ = ("dim", "row_offsets", "col_indices", "values", "_csr", "_diag_pos")

    def __init__(self, dim, row_offsets, col_indices, values):
        dim = int(dim)
        if dim < 1:
            raise ContractError(f"dimension must be positive, got {dim}")
        self.dim = dim
        self.row_offsets = _readonly(row_offsets, np.int64)
        self.col_indices = _readonly(col_indices, np.int64)
        self.values = _readonly(values, np.float64)
        if self.row_offsets.shape != (dim + 1,):
            raise ContractError("row_offsets must have length dim + 1")
        if self.col_indices.shape != self.values.shape:
            raise ContractError("col_indices and values differ in length")
        self._csr = sp.csr_matrix(
            (self.values, self.col_indices, self.row_offsets), shape=(dim, dim)
        )
        rows = np.repeat(np.arange(dim), np.diff(self.row_offsets))
        diag_pos = np.flatnonzero(rows == self.col_indices)
        if diag_pos.size != dim:
            raise ContractError("every diagonal entry must be stored explicitly")
        self._diag_pos = diag_pos

    # construction -------------------------------------------------------

    @classmethod
    def from_triplets(cls, dim, rows, cols, vals, *, check_symmetry=True, rtol=0.0):
        """Build from full-pattern coordinate triplets (0-based).

        Duplicates are summed and missing diagonal entries are stored as
        explicit zeros.  With ``check_symmetry`` the assembled matrix must
        equal its transpose to within ``rtol`` of the largest magnitude;
        it is then symmetrised exactly.
        """
        dim = int(dim)
        rows = np.asarray(rows, dtype=np.int64)
        cols = np.asarray(cols, dtype=np.int64)
        vals = np.asarray(vals, dtype=np.float64)
        if rows.size and (rows.min() < 0 or cols.min() < 0 or rows.max() >= dim or cols.max() >= dim):
            raise ContractError("triplet index out of range")
        csr = _assemble(dim, rows, cols, vals)
        if check_symmetry:
            diff = csr - csr.T
            diff.eliminate_zeros()
            if diff.nnz:
                worst = np.abs(diff.data).max()
                if worst > rtol * np.abs(csr.data).max():
                    raise SymmetryError(f"matrix is not symmetric (max |A - A^T| = {worst:.3e})")
                sym = ((csr + csr.T) * 0.5).tocoo()
                csr = _assemble(dim, sym.row, sym.col, sym.data)
        return cls(dim, csr.indptr, csr.indices, csr.data)

    @classmethod
    def from_dense(cls, M, *, check_symmetry=True, rtol=0.0):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 2 or M.shape[0] != M.shape[1]:
            raise ContractError(f"expected a square matrix, got shape {M.shape}")
        rows, cols = np.nonzero(M)
        return cls.from_triplets(
            M.shape[0], rows, cols, M[rows, cols], check_symmetry=check_symmetry, rtol=rtol
        )

    @classmethod
    def identity(cls, n):
        idx = np.arange(n + 1)
        return cls(n, idx, idx[:-1], np.ones(n))

    @classmethod
    def diagonal_matrix(cls, d):
        d = np.asarray(d, dtype=np.float64)
        idx = np.arange(d.size + 1)
        return cls(d.size, idx, idx[:-1], d)

    # derived matrices ---------------------------------------------------

    def scaled(self, s):
        """Return ``s * A`` with the same pattern."""
        return SparseSymMatrix(self.dim, self.row_offsets, self.col_indices, self.values * s)

    def shifted(self, s):
        """Return ``A + s I`` with the same pattern."""
        values = self.values.copy()
        values[self._diag_pos] += s
        return SparseSymMatrix(self.dim, self.row_offsets, self.col_indices, values)

    # access -------------------------------------------------------------

    @property
    def nnz(self):
        return int(self.values.size)

    @property
    def shape(self):
        return (self.dim, self.dim)

    def diagonal(self):
        return self.values[self._diag_pos].copy()

    def to_dense(self):
        return self._csr.toarray()

    def to_scipy(self):
        """A CSR copy usable with scipy routines."""
        return self._csr.copy()

    def matvec(self, x):
        return matvec(self, x)

    def matmat(self, X):
        """Product with a block of column vectors ``X`` of shape (dim, m)."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[0] != self.dim:
            raise ContractError(f"block of shape {X.shape} does not match dim {self.dim}")
        return self._csr @ X

    def __matmul__(self, x):
        x = np.asarray(x)
        return self.matvec(x) if x.ndim == 1 else self.matmat(x)

    def __eq__(self, other):
        if not isinstance(other, SparseSymMatrix):
            return NotImplemented
        return (
            self.dim == other.dim
            and np.array_equal(self.row_offsets, other.row_offsets)
            and np.array_equal(self.col_indices, other.col_indices)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None

    def __repr__(self):
        return f"SparseSymMatrix(dim={self.dim}, nnz={self.nnz})"


def _assemble(dim, rows, cols, vals):
    # explicit zero diagonal so every row stores its diagonal; tocsr keeps zeros
    diag = np.arange(dim, dtype=np.int64)
    csr = sp.coo_matrix(
        (np.concatenate([vals, np.zeros(dim)]), (np.concatenate([rows, diag]), np.concatenate([cols, diag]))),
        shape=(dim, dim),
    ).tocsr()
    csr.sum_duplicates()
    csr.sort_indices()
    return csr


def matvec(A, x):
    """Exact CSR product ``A @ x``."""
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (A.dim,):
        raise ContractError(f"vector of shape {x.shape} does not match dim {A.dim}")
    return A._csr @ x


# Matrix Market ------------------------------------------------------------


def load_matrix_market(path):
    """Read a real symmetric matrix from a Matrix Market coordinate file.

    ``symmetric`` files may list either triangle; ``general`` files must be
    symmetric in structure and value.  Integer fields are promoted to float.
    """
    path = Path(path)
    with path.open("r") as fh:
        header = fh.readline()
        lineno = 1
        tokens = header.split()
        if len(tokens) != 5 or tokens[0].lower() != "%%matrixmarket":
            raise MatrixMarketError("missing %%MatrixMarket banner", lineno)
        obj, fmt, field, symmetry = (t.lower() for t in tokens[1:])
        if obj != "matrix":
            raise UnsupportedFormatError(f"unsupported object {obj!r}", lineno)
        if fmt != "coordinate":
            raise UnsupportedFormatError(f"unsupported format {fmt!r}", lineno)
        if field not in ("real", "integer", "double"):
            raise UnsupportedFormatError(f"unsupported field {field!r}", lineno)
        if symmetry not in ("symmetric", "general"):
            raise UnsupportedFormatError(f"unsupported symmetry {symmetry!r}", lineno)

        size = None
        for line in fh:
            lineno += 1
            s = line.strip()
            if not s or s.startswith("%"):
                continue
            size = s.split()
            break
        if size is None:
            raise MatrixMarketError("missing size line", lineno)
        try:
            nrows, ncols, nnz = (int(t) for t in size)
        except ValueError:
            raise MatrixMarketError(f"malformed size line {s!r}", lineno) from None
        if nrows != ncols:
            raise SymmetryError(f"matrix is {nrows}x{ncols}, not square")
        if nrows < 1:
            raise MatrixMarketError("dimension must be positive", lineno)

        rows = np.empty(nnz, dtype=np.int64)
        cols = np.empty(nnz, dtype=np.int64)
        vals = np.empty(nnz, dtype=np.float64)
        k = 0
        for line in fh:
            lineno += 1
            parts = line.split()
            if not parts or parts[0].startswith("%"):
                continue
            if k >= nnz:
                raise MatrixMarketError("more entries than declared", lineno)
            if len(parts) != 3:
                raise MatrixMarketError(f"expected 'row col value', got {line.strip()!r}", lineno)
            try:
                i, j, v = int(parts[0]), int(parts[1]), float(parts[2])
            except ValueError:
                raise MatrixMarketError(f"malformed entry {line.strip()!r}", lineno) from None
            if not (1 <= i <= nrows and 1 <= j <= ncols):
                raise MatrixMarketError(f"index ({i}, {j}) out of range", lineno)
            rows[k], cols[k], vals[k] = i - 1, j - 1, v
            k += 1
        if k != nnz:
            raise MatrixMarketError(f"expected {nnz} entries, found {k}", lineno)

    if symmetry == "symmetric":
        off = rows != cols
        rows, cols, vals = (
            np.concatenate([rows, cols[off]]),
            np.concatenate([cols, rows[off]]),
            np.concatenate([vals, vals[off]]),
        )
        return SparseSymMatrix.from_triplets(nrows, rows, cols, vals, check_symmetry=False)
    return SparseSymMatrix.from_triplets(nrows, rows, cols, vals, check_symmetry=True)


def write_matrix_market(A, path, comment=None):
    """Write ``A`` as ``coordinate real symmetric``, lower triangle only."""
    csr = A._csr
    rows = np.repeat(np.arange(A.dim), np.diff(csr.indptr))
    lower = csr.indices <= rows
    r, c, v = rows[lower] + 1, csr.indices[lower] + 1, csr.data[lower]
    with Path(path).open("w") as fh:
        fh.write("%%MatrixMarket matrix coordinate real symmetric\n")
        if comment:
            for line in comment.splitlines():
                fh.write(f"% {line}\n")
        fh.write(f"{A.dim} {A.dim} {r.size}\n")
        for i, j, x in zip(r.tolist(), c.tolist(), v.tolist()):
            fh.write(f"{i} {j} {x!r}\n")


# spectral bounds ----------------------------------------------------------


def gershgorin_upper(A):
    """max_i (a_ii + sum_{j != i} |a_ij|), an upper bound on lambda_max."""
    abs_rows = np.add.reduceat(np.abs(A.values), A.row_offsets[:-1])
    d = A.values[A._diag_pos]
    return float(np.max(abs_rows - np.abs(d) + d))


class PowerIterationInfo(NamedTuple):
    iterations: int
    converged: bool
    degenerate: bool


def spectral_norm_estimate(A, max_iters=100, tol=1e-10, *, seed=0, full_output=False):
    """Power-iteration estimate of the largest eigenvalue of a PSD matrix.

    Stops once successive Rayleigh quotients agree to ``tol`` relatively.
    If ``max_iters`` is exhausted the last quotient is returned and a
    ``RuntimeWarning`` is issued.  A zero matrix gives 0.
    """
    if max_iters < 1:
        raise ContractError("max_iters must be >= 1")
    x = np.random.default_rng(seed).standard_normal(A.dim)
    x /= np.linalg.norm(x)
    rq = 0.0
    info = None
    for it in range(1, max_iters + 1):
        y = A.matvec(x)
        rq_new = float(x @ y)
        ynorm = np.linalg.norm(y)
        if ynorm == 0.0:
            rq, info = 0.0, PowerIterationInfo(it, True, True)
            break
        x = y / ynorm
        if it > 1 and abs(rq_new - rq) < tol * abs(rq_new):
            rq, info = rq_new, PowerIterationInfo(it, True, False)
            break
        rq = rq_new
    if info is None:
        info = PowerIterationInfo(max_iters, False, False)
        warnings.warn(
            f"power iteration did not converge in {max_iters} iterations", RuntimeWarning, stacklevel=2
        )
    return (rq, info) if full_output else rq


# synthetic matrices -------------------------------------------------------


def synth_wishart_identity(n, seed):
    """``G^T G / ||G^T G||_2 + I`` for an n-by-n standard normal ``G``.

    The spectrum lies in [1, 2] up to the accuracy of the norm estimate.
    """
    if n < 2:
        raise ContractError("n must be >= 2")
    G = np.random.default_rng(seed).standard_normal((n, n))
    W = G.T @ G
    W = 0.5 * (W + W.T)
    Wm = SparseSymMatrix.from_dense(W, check_symmetry=False)
    norm = spectral_norm_estimate(Wm, max_iters=100, tol=1e-10, seed=seed)
    M = W / norm
    M[np.diag_indices(n)] += 1.0
    return SparseSymMatrix.from_dense(M, check_symmetry=False)


# Cholesky oracle -----------------------------------------------------------


class CholeskyFactor:
    """Upper Cholesky factor ``U`` with ``P A P^T = U^T U``.

    Dense storage for small matrices, LAPACK band storage (after an optional
    reverse Cuthill-McKee reordering) for large sparse ones.
    """

    def __init__(self, dim, upper, perm=None, bandwidth=None):
        self.dim = dim
        self._u = upper
        self._perm = perm
        self.bandwidth = bandwidth

    @property
    def banded(self):
        return self.bandwidth is not None

    def diagonal(self):
        if self.banded:
            return self._u[self.bandwidth]
        return np.diagonal(self._u)

    def logdet(self):
        return 2.0 * float(np.sum(np.log(self.diagonal())))

    def _to_internal(self, b):
        return b if self._perm is None else b[self._perm]

    def _from_internal(self, x):
        if self._perm is None:
            return x
        out = np.empty_like(x)
        out[self._perm] = x
        return out

    def solve(self, b):
        """Solve ``A x = b``."""
        b = self._to_internal(np.asarray(b, dtype=np.float64))
        if self.banded:
            x, info = lapack.dpbtrs(self._u, b, lower=0)
        else:
            x, info = lapack.dpotrs(self._u, b, lower=0)
        if info != 0:
            raise ValueError(f"LAPACK solve failed (info={info})")
        return self._from_internal(x)

    def solve_upper(self, z):
        """Solve ``U x = z`` and undo the ordering; with standard normal ``z``
        the result has covariance ``A^{-1}``."""
        z = np.asarray(z, dtype=np.float64)
        if self.banded:
            x, info = lapack.dtbtrs(self._u, z, uplo="U", trans="N", diag="N")
            if info != 0:
                raise ValueError(f"LAPACK triangular solve failed (info={info})")
        else:
            from scipy.linalg import solve_triangular

            x = solve_triangular(self._u, z, lower=False)
        return self._from_internal(x)


def _bandwidth(csr):
    rows = np.repeat(np.arange(csr.shape[0]), np.diff(csr.indptr))
    return int(np.max(np.abs(csr.indices - rows))) if csr.nnz else 0


def cholesky(A, dense_threshold=DENSE_THRESHOLD):
    """Factorise a symmetric positive definite ``A``.

    Raises :class:`NotPositiveDefiniteError` naming the failing pivot.  The
    pivot index refers to the (possibly reordered) banded system for large
    matrices.
    """
    n = A.dim
    if n <= dense_threshold:
        u, info = lapack.dpotrf(A.to_dense(), lower=0, clean=1)
        if info > 0:
            raise NotPositiveDefiniteError(info - 1)
        if info < 0:
            raise ValueError(f"dpotrf argument error (info={info})")
        return CholeskyFactor(n, u)

    csr = A._csr
    perm = None
    kd = _bandwidth(csr)
    rcm = reverse_cuthill_mckee(csr, symmetric_mode=True)
    csr_rcm = csr[rcm][:, rcm].tocsr()
    kd_rcm = _bandwidth(csr_rcm)
    if kd_rcm < kd:
        csr, kd, perm = csr_rcm, kd_rcm, np.asarray(rcm, dtype=np.int64)
    if (kd + 1) * n * 8 > BAND_MEMORY_LIMIT:
        raise MemoryError(f"band storage for bandwidth {kd} at n={n} exceeds the oracle limit")
    coo = sp.triu(csr).tocoo()
    ab = np.zeros((kd + 1, n))
    ab[kd + coo.row - coo.col, coo.col] = coo.data
    u, info = lapack.dpbtrf(ab, lower=0)
    if info > 0:
        raise NotPositiveDefiniteError(info - 1)
    if info < 0:
        raise ValueError(f"dpbtrf argument error (info={info})")
    return CholeskyFactor(n, u, perm=perm, bandwidth=kd)


def exact_logdet(A, dense_threshold=DENSE_THRESHOLD):
    """Log determinant from the Cholesky factor: ``2 sum log diag(U)``."""
    return cholesky(A, dense_threshold).logdet()
