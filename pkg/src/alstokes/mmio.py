"""Matrix Market reading and writing for :class:`CsrMatrix` and dense vectors."""
from __future__ import annotations

import os

import numpy as np
import scipy.io
import scipy.sparse as sp

from .errors import MissingFileError
from .sparse import CsrMatrix


def write_matrix(path, m: CsrMatrix, *, symmetric=False, comment=""):
    """Write ``m`` in coordinate format.

    With ``symmetric=True`` only the lower triangle is stored and the header
    says ``symmetric``; the caller is responsible for ``m`` actually being
    symmetric.
    """
    scipy.io.mmwrite(
        os.fspath(path),
        m.scipy,
        comment=comment,
        field="real",
        precision=17,
        symmetry="symmetric" if symmetric else "general",
    )


def read_matrix(path) -> CsrMatrix:
    """Read a real coordinate file; symmetric storage is expanded to full."""
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such Matrix Market file: {path}")
    m = scipy.io.mmread(path)
    if not sp.issparse(m):
        m = sp.csr_matrix(m)
    if np.iscomplexobj(m.data):
        raise ValueError(f"{path}: complex matrices are not supported")
    return CsrMatrix.from_scipy(m.tocsr().astype(np.float64))


def write_vector(path, v, *, comment=""):
    v = np.asarray(v, dtype=np.float64).reshape(-1, 1)
    scipy.io.mmwrite(os.fspath(path), v, comment=comment, field="real", precision=17)


def read_vector(path) -> np.ndarray:
    path = os.fspath(path)
    if not os.path.exists(path):
        raise MissingFileError(f"no such Matrix Market file: {path}")
    a = scipy.io.mmread(path)
    if sp.issparse(a):
        a = a.toarray()
    return np.asarray(a, dtype=np.float64).ravel()
