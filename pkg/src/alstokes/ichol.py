"""Threshold incomplete Cholesky (ICT) and its triangular solves.

The factorization is column-oriented and left-looking. Column ``j`` of ``L``
is formed in a dense work vector from column ``j`` of ``A`` minus the
contributions of earlier columns ``k`` with ``L[j, k] != 0``. Those columns
are found through per-row linked lists (each column sits in the list of the
next row it touches). Off-diagonal entries with
``|l_ij| < droptol * ||A[:, j]||_2`` are dropped once computed; the diagonal
is always kept.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numba
import numpy as np

from .errors import DimensionMismatchError, IcBreakdownError
from .sparse import CsrMatrix

log = logging.getLogger(__name__)

__all__ = ["IcFactor", "ict_factor", "ic_apply"]


@numba.njit(cache=True)
def _ict_kernel(n, a_ptr, a_idx, a_val, colnorm, droptol, shift):
    cap = max(2 * len(a_val), 4 * n)
    l_ptr = np.zeros(n + 1, dtype=np.int64)
    l_idx = np.empty(cap, dtype=np.int64)
    l_val = np.empty(cap, dtype=np.float64)

    w = np.zeros(n)
    marked = np.zeros(n, dtype=np.bool_)
    pattern = np.empty(n, dtype=np.int64)
    head = -np.ones(n, dtype=np.int64)
    link = -np.ones(n, dtype=np.int64)
    nextpos = np.zeros(n, dtype=np.int64)

    nnz = 0
    for j in range(n):
        npat = 1
        pattern[0] = j
        marked[j] = True
        w[j] = 0.0
        for p in range(a_ptr[j], a_ptr[j + 1]):
            i = a_idx[p]
            if i < j:
                continue
            if i == j:
                w[j] += a_val[p] * (1.0 + shift)
            else:
                if not marked[i]:
                    marked[i] = True
                    pattern[npat] = i
                    npat += 1
                    w[i] = 0.0
                w[i] += a_val[p]

        k = head[j]
        head[j] = -1
        while k != -1:
            knext = link[k]
            p = nextpos[k]
            ljk = l_val[p]
            for q in range(p, l_ptr[k + 1]):
                i = l_idx[q]
                if not marked[i]:
                    marked[i] = True
                    pattern[npat] = i
                    npat += 1
                    w[i] = 0.0
                w[i] -= ljk * l_val[q]
            p += 1
            if p < l_ptr[k + 1]:
                nextpos[k] = p
                r = l_idx[p]
                link[k] = head[r]
                head[r] = k
            k = knext

        d = w[j]
        if not d > 0.0:
            return l_ptr, l_idx, l_val, j, d
        d = np.sqrt(d)

        if nnz + npat > cap:
            cap = max(2 * cap, nnz + npat)
            grown_i = np.empty(cap, dtype=np.int64)
            grown_v = np.empty(cap, dtype=np.float64)
            grown_i[:nnz] = l_idx[:nnz]
            grown_v[:nnz] = l_val[:nnz]
            l_idx = grown_i
            l_val = grown_v

        l_idx[nnz] = j
        l_val[nnz] = d
        nnz += 1
        thresh = droptol * colnorm[j]
        rows = np.sort(pattern[1:npat])
        for t in range(rows.shape[0]):
            i = rows[t]
            lij = w[i] / d
            if abs(lij) >= thresh and lij != 0.0:
                l_idx[nnz] = i
                l_val[nnz] = lij
                nnz += 1
        for t in range(npat):
            marked[pattern[t]] = False
            w[pattern[t]] = 0.0
        l_ptr[j + 1] = nnz

        if nnz - l_ptr[j] > 1:
            p = l_ptr[j] + 1
            nextpos[j] = p
            r = l_idx[p]
            link[j] = head[r]
            head[r] = j

    return l_ptr, l_idx[:nnz].copy(), l_val[:nnz].copy(), -1, 0.0


@numba.njit(cache=True)
def _lower_solve_csc(ptr, idx, val, b):
    # L stored by columns, diagonal first in each column
    n = b.shape[0]
    z = b.copy()
    for j in range(n):
        p0 = ptr[j]
        zj = z[j] / val[p0]
        z[j] = zj
        for p in range(p0 + 1, ptr[j + 1]):
            z[idx[p]] -= val[p] * zj
    return z


@numba.njit(cache=True)
def _upper_solve_csc(ptr, idx, val, b):
    # solves L^T x = b using the column storage of L as rows of L^T
    n = b.shape[0]
    x = np.empty(n)
    for j in range(n - 1, -1, -1):
        s = b[j]
        p0 = ptr[j]
        for p in range(p0 + 1, ptr[j + 1]):
            s -= val[p] * x[idx[p]]
        x[j] = s / val[p0]
    return x


@dataclass(frozen=True, eq=False)
class IcFactor:
    """Lower-triangular ``L`` with ``L L^T ~ A``.

    ``L`` is kept as a :class:`CsrMatrix`; the solves run on its column
    storage (``L^T`` in CSR), with the diagonal leading each column.
    """

    L: CsrMatrix
    droptol: float
    shift: float
    _cptr: np.ndarray
    _cidx: np.ndarray
    _cval: np.ndarray

    @property
    def n(self):
        return self.L.rows

    def solve(self, r):
        r = np.ascontiguousarray(r, dtype=np.float64)
        z = _lower_solve_csc(self._cptr, self._cidx, self._cval, r)
        return _upper_solve_csc(self._cptr, self._cidx, self._cval, z)


def _factor_once(A: CsrMatrix, droptol, shift):
    colnorm = A.row_norms()  # symmetric: row j norm == column j norm
    ptr, idx, val, bad, pivot = _ict_kernel(
        A.rows, A.row_ptr, A.col_idx, A.values, colnorm, float(droptol), float(shift)
    )
    if bad >= 0:
        raise IcBreakdownError(int(bad), float(pivot), shift)
    n = A.rows
    # column storage of L is row storage of L^T; transpose for the CSR view
    Lt = CsrMatrix(n, n, ptr, idx, val)
    L = Lt.transpose()
    return IcFactor(L, float(droptol), float(shift), Lt.row_ptr, Lt.col_idx, Lt.values)


def ict_factor(A: CsrMatrix, droptol=1e-2, *, retries=3, initial_shift=1e-3) -> IcFactor:
    """Threshold incomplete Cholesky of a symmetric matrix with positive diagonal.

    On a nonpositive pivot the whole factorization is redone on
    ``A + s diag(A)`` with ``s = 1e-3, 1e-2, 1e-1``; if that still breaks
    down the last :class:`IcBreakdownError` propagates.
    """
    if A.rows != A.cols:
        raise DimensionMismatchError("ict_factor needs a square matrix", A.rows, A.cols)
    diag = A.diagonal()
    if np.any(diag <= 0):
        j = int(np.flatnonzero(diag <= 0)[0])
        raise IcBreakdownError(j, float(diag[j]))
    shift = 0.0
    for attempt in range(retries + 1):
        try:
            return _factor_once(A, droptol, shift)
        except IcBreakdownError as exc:
            if attempt == retries:
                raise
            shift = initial_shift if shift == 0.0 else shift * 10
            log.info("%s; retrying with shift %g", exc, shift)
    raise AssertionError("unreachable")


def ic_apply(F: IcFactor, r):
    """Solve ``L L^T z = r``; 2-D input is solved column by column."""
    r = np.asarray(r, dtype=np.float64)
    if r.shape[0] != F.n:
        raise DimensionMismatchError("ic_apply operand rows", F.n, r.shape[0])
    if r.ndim == 1:
        return F.solve(r)
    out = np.empty_like(r, order="F")
    for j in range(r.shape[1]):
        out[:, j] = F.solve(r[:, j])
    return out
