"""Compressed sparse row storage and the handful of kernels the solvers need.

Dense blocks of several right-hand sides are plain ``(n, k)`` float arrays
stored column-major, so ``X[:, j]`` is contiguous.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatchError, InvalidMatrixError, QNotSPDError

__all__ = [
    "CsrMatrix",
    "spmv",
    "spmv_transpose",
    "block_spmv",
    "diag_solve",
    "as_block",
    "frobenius_inner",
]


def _readonly(a, dtype):
    a = np.ascontiguousarray(a, dtype=dtype)
    if a.flags.writeable:
        a = a.copy()
        a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class CsrMatrix:
    """Immutable CSR matrix.

    Construction validates the layout: ``row_ptr`` nondecreasing from 0 to
    ``nnz``, column indices strictly increasing within each row (which also
    rules out duplicates) and inside ``[0, cols)``.
    """

    rows: int
    cols: int
    row_ptr: np.ndarray
    col_idx: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "row_ptr", _readonly(self.row_ptr, np.int64))
        object.__setattr__(self, "col_idx", _readonly(self.col_idx, np.int64))
        object.__setattr__(self, "values", _readonly(self.values, np.float64))
        rp, ci = self.row_ptr, self.col_idx
        if self.rows < 0 or self.cols < 0:
            raise InvalidMatrixError("negative shape")
        if rp.shape != (self.rows + 1,):
            raise InvalidMatrixError(f"row_ptr must have length {self.rows + 1}")
        if rp[0] != 0 or rp[-1] != len(ci) or len(ci) != len(self.values):
            raise InvalidMatrixError("row_ptr[0] must be 0 and row_ptr[rows] == nnz")
        if np.any(np.diff(rp) < 0):
            raise InvalidMatrixError("row_ptr must be nondecreasing")
        if len(ci):
            if ci.min() < 0 or ci.max() >= self.cols:
                raise InvalidMatrixError("column index out of range")
            # within-row increments must be positive; row starts are exempt
            step = np.diff(ci)
            starts = np.zeros(len(ci), dtype=bool)
            starts[rp[1:-1][rp[1:-1] < len(ci)]] = True
            bad = (step <= 0) & ~starts[1:]
            if np.any(bad):
                row = int(np.searchsorted(rp, np.flatnonzero(bad)[0] + 1, side="right") - 1)
                raise InvalidMatrixError(
                    f"row {row}: column indices not strictly increasing (duplicate or unsorted)"
                )

    # -- constructors -----------------------------------------------------

    @classmethod
    def from_coo(cls, rows, cols, i, j, v, *, sum_duplicates=False):
        """Build from triplets. Duplicates raise unless ``sum_duplicates``."""
        i = np.asarray(i, dtype=np.int64)
        j = np.asarray(j, dtype=np.int64)
        v = np.asarray(v, dtype=np.float64)
        if not sum_duplicates and len(i):
            key = i * max(cols, 1) + j
            if len(np.unique(key)) != len(key):
                raise InvalidMatrixError("duplicate (row, col) entries in triplets")
        m = sp.coo_matrix((v, (i, j)), shape=(rows, cols)).tocsr()
        m.sum_duplicates()
        return cls.from_scipy(m)

    @classmethod
    def from_scipy(cls, m):
        m = sp.csr_matrix(m)
        m.sum_duplicates()
        m.sort_indices()
        return cls(m.shape[0], m.shape[1], m.indptr, m.indices, m.data)

    @classmethod
    def from_dense(cls, a, *, keep_zeros=False):
        a = np.atleast_2d(np.asarray(a, dtype=np.float64))
        if keep_zeros:
            i, j = np.indices(a.shape)
            return cls.from_coo(a.shape[0], a.shape[1], i.ravel(), j.ravel(), a.ravel())
        i, j = np.nonzero(a)
        return cls.from_coo(a.shape[0], a.shape[1], i, j, a[i, j])

    @classmethod
    def identity(cls, n):
        idx = np.arange(n)
        return cls(n, n, np.arange(n + 1), idx, np.ones(n))

    @classmethod
    def diag(cls, d):
        d = np.asarray(d, dtype=np.float64)
        n = len(d)
        return cls(n, n, np.arange(n + 1), np.arange(n), d)

    # -- views ------------------------------------------------------------

    @property
    def shape(self):
        return (self.rows, self.cols)

    @property
    def nnz(self):
        return len(self.values)

    @cached_property
    def scipy(self) -> sp.csr_matrix:
        """Read-only scipy view sharing this matrix's arrays."""
        m = sp.csr_matrix((self.values, self.col_idx, self.row_ptr), shape=self.shape, copy=False)
        m.has_sorted_indices = True
        m.has_canonical_format = True
        return m

    def to_dense(self):
        return self.scipy.toarray()

    def diagonal(self):
        return self.scipy.diagonal()

    def transpose(self) -> "CsrMatrix":
        """Explicit transpose. Kernels never need this; exporters and tests do."""
        return CsrMatrix.from_scipy(self.scipy.T.tocsr())

    def row_norms(self):
        return np.sqrt(np.asarray(self.scipy.multiply(self.scipy).sum(axis=1)).ravel())

    def max_abs(self):
        return float(np.abs(self.values).max()) if self.nnz else 0.0

    def asymmetry(self):
        """max |M - M^T| (0 for an exactly symmetric matrix)."""
        if self.rows != self.cols:
            raise DimensionMismatchError("asymmetry needs a square matrix", self.rows, self.cols)
        d = (self.scipy - self.scipy.T).tocsr()
        return float(np.abs(d.data).max()) if d.nnz else 0.0

    def __matmul__(self, x):
        x = np.asarray(x)
        return spmv(self, x) if x.ndim == 1 else block_spmv(self, x)

    def __repr__(self):
        return f"CsrMatrix({self.rows}x{self.cols}, nnz={self.nnz})"


def spmv(m: CsrMatrix, x) -> np.ndarray:
    """y = M x, each output summed in stored (row) order."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.cols:
        raise DimensionMismatchError("spmv operand length", m.cols, x.shape)
    return m.scipy @ x


def spmv_transpose(m: CsrMatrix, x) -> np.ndarray:
    """y = M^T x without forming M^T (scatter over rows)."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 1 or x.shape[0] != m.rows:
        raise DimensionMismatchError("spmv_transpose operand length", m.rows, x.shape)
    # .T of a csr_matrix is a csc view on the same arrays
    return m.scipy.T @ x


def as_block(x, n=None) -> np.ndarray:
    """Coerce to an ``(n, k)`` column-major block, promoting vectors to k=1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    if x.ndim != 2:
        raise DimensionMismatchError("block rank", 2, x.ndim)
    if n is not None and x.shape[0] != n:
        raise DimensionMismatchError("block rows", n, x.shape[0])
    return np.asfortranarray(x)


def block_spmv(m: CsrMatrix, x) -> np.ndarray:
    x = as_block(x)
    if x.shape[0] != m.cols:
        raise DimensionMismatchError("block_spmv operand rows", m.cols, x.shape[0])
    out = np.empty((m.rows, x.shape[1]), order="F")
    for j in range(x.shape[1]):
        out[:, j] = spmv(m, x[:, j])
    return out


def diag_solve(d, x) -> np.ndarray:
    """Entrywise ``x / d``; blocks are scaled column by column."""
    d = np.asarray(d, dtype=np.float64)
    if np.any(~(d > 0)):
        k = int(np.flatnonzero(~(d > 0))[0])
        raise QNotSPDError(f"Q not SPD: diagonal entry {k} is {d[k]!r}")
    x = np.asarray(x, dtype=np.float64)
    if x.shape[0] != d.shape[0]:
        raise DimensionMismatchError("diag_solve operand rows", d.shape[0], x.shape[0])
    if x.ndim == 1:
        return x / d
    return np.asfortranarray(x / d[:, None])


def frobenius_inner(x, y) -> float:
    """trace(X^T Y); for vectors the ordinary dot product."""
    return float(np.dot(np.ravel(x, order="F"), np.ravel(y, order="F")))
