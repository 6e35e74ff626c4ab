"""Export and import of assembled systems as Matrix Market files.

A system is stored as one file per block and per right-hand-side vector,
next to a plain-text manifest of ``key=value`` lines (``#`` starts a
comment). File names are relative to the manifest's directory. Example::

    kind=3x3
    n=225
    n_p=80
    A=A.mtx
    A_storage=symmetric
    Bx=Bx.mtx
    By=By.mtx
    f_x=f_x.mtx
    f_y=f_y.mtx
    g=g.mtx
    mass=mass.mtx
    pressure_pinned=true
    domain=cavity
    level=3

Two-by-two systems use ``kind=2x2``, ``n_u`` and blocks ``A2``, ``B``,
``f``. ``mass`` is optional; without it only ``Q = I`` is available.
Any other key is carried into ``meta``.
"""
from __future__ import annotations

import os
from pathlib import Path

import numpy as np

from .errors import (
    AsymmetricMatrixError,
    ManifestDimensionError,
    ManifestError,
    MissingFileError,
    RankDeficientError,
)
from .mmio import read_matrix, read_vector, write_matrix, write_vector
from .stokes import Stokes2x2System, Stokes3x3System

__all__ = ["MANIFEST_NAME", "parse_manifest", "format_manifest", "export_system", "import_system"]

MANIFEST_NAME = "system.manifest"
SYMMETRY_TOL = 1e-12
# dense rank checks are skipped above this size
RANK_CHECK_MAX = 3000

_BLOCKS = {
    "3x3": (("A", "Bx", "By"), ("f_x", "f_y", "g")),
    "2x2": (("A2", "B"), ("f", "g")),
}
_RESERVED = {"kind", "n", "n_u", "n_p", "A_storage", "A2_storage", "mass", "pressure_pinned"}


def parse_manifest(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep or not key.strip():
            raise ManifestError(f"line {lineno}: expected key=value, got {raw!r}")
        key = key.strip()
        if key in out:
            raise ManifestError(f"line {lineno}: duplicate key {key!r}")
        out[key] = value.strip()
    return out


def format_manifest(entries: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in entries.items())


def _flag(v):
    return str(v).lower() in ("1", "true", "yes")


def export_system(sys, directory, *, name=MANIFEST_NAME, symmetric=True) -> Path:
    """Write ``sys`` into ``directory`` and return the manifest path.

    The leading block is written in symmetric storage unless
    ``symmetric=False``.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    if isinstance(sys, Stokes3x3System):
        kind, lead = "3x3", "A"
        entries = {"kind": kind, "n": sys.n, "n_p": sys.n_p}
        mats = {"A": sys.A, "Bx": sys.Bx, "By": sys.By}
        vecs = {"f_x": sys.f_x, "f_y": sys.f_y, "g": sys.g}
    elif isinstance(sys, Stokes2x2System):
        kind, lead = "2x2", "A2"
        entries = {"kind": kind, "n_u": sys.n_u, "n_p": sys.n_p}
        mats = {"A2": sys.A2, "B": sys.B}
        vecs = {"f": sys.f, "g": sys.g}
    else:
        raise TypeError(f"cannot export {type(sys).__name__}")
    for key, m in mats.items():
        fname = f"{key}.mtx"
        write_matrix(d / fname, m, symmetric=symmetric and key == lead)
        entries[key] = fname
    entries[f"{lead}_storage"] = "symmetric" if symmetric else "general"
    for key, v in vecs.items():
        fname = f"{key}.mtx"
        write_vector(d / fname, v)
        entries[key] = fname
    if sys.mass is not None:
        write_vector(d / "mass.mtx", sys.mass)
        entries["mass"] = "mass.mtx"
    entries["pressure_pinned"] = "true" if sys.pressure_pinned else "false"
    for k, v in sys.meta.items():
        if k not in entries and k not in _RESERVED:
            entries[k] = v
    path = d / name
    path.write_text(format_manifest(entries))
    return path


def _count(entries, key, path):
    if key not in entries:
        raise ManifestError(f"{path}: missing required key {key!r}")
    try:
        v = int(entries[key])
    except ValueError:
        raise ManifestError(f"{path}: {key}={entries[key]!r} is not an integer") from None
    if v < 0:
        raise ManifestError(f"{path}: {key} must be nonnegative")
    return v


def _shape(what, m, shape):
    if m.shape != shape:
        raise ManifestDimensionError(what, shape, m.shape)


def _length(what, v, n):
    if v.shape != (n,):
        raise ManifestDimensionError(what, (n,), v.shape)


def import_system(path):
    """Load and validate a system written by :func:`export_system`.

    Raises :class:`MissingFileError`, :class:`ManifestDimensionError` or
    :class:`AsymmetricMatrixError` for the respective defects, and
    :class:`RankDeficientError` when the constraint block has an empty row
    or, for systems small enough to check densely, lacks full row rank.
    """
    path = Path(os.fspath(path))
    if path.is_dir():
        path = path / MANIFEST_NAME
    if not path.exists():
        raise MissingFileError(f"no such manifest: {path}")
    entries = parse_manifest(path.read_text())
    kind = entries.get("kind")
    if kind not in _BLOCKS:
        raise ManifestError(f"{path}: kind must be one of {sorted(_BLOCKS)}, got {kind!r}")
    mat_keys, vec_keys = _BLOCKS[kind]
    for key in mat_keys + vec_keys:
        if key not in entries:
            raise ManifestError(f"{path}: missing required key {key!r}")

    def file(key):
        return path.parent / entries[key]

    mats = {k: read_matrix(file(k)) for k in mat_keys}
    vecs = {k: read_vector(file(k)) for k in vec_keys}
    n_p = _count(entries, "n_p", path)
    mass = read_vector(file("mass")) if "mass" in entries else None
    if mass is not None:
        _length("mass", mass, n_p)

    if kind == "3x3":
        n = _count(entries, "n", path)
        lead = mats["A"]
        _shape("A", lead, (n, n))
        _shape("Bx", mats["Bx"], (n_p, n))
        _shape("By", mats["By"], (n_p, n))
        _length("f_x", vecs["f_x"], n)
        _length("f_y", vecs["f_y"], n)
        constraint = [mats["Bx"], mats["By"]]
    else:
        n_u = _count(entries, "n_u", path)
        lead = mats["A2"]
        _shape("A2", lead, (n_u, n_u))
        _shape("B", mats["B"], (n_p, n_u))
        _length("f", vecs["f"], n_u)
        constraint = [mats["B"]]
    _length("g", vecs["g"], n_p)

    asym = lead.asymmetry()
    if asym > SYMMETRY_TOL * max(lead.max_abs(), 1e-300):
        raise AsymmetricMatrixError(
            f"{path}: leading block is not symmetric (max |A - A^T| = {asym:.3e})"
        )
    _check_constraint(constraint, path)

    meta = {k: v for k, v in entries.items() if k not in _RESERVED and k not in mat_keys + vec_keys}
    meta["source"] = str(path)
    pinned = _flag(entries.get("pressure_pinned", "false"))
    if kind == "3x3":
        return Stokes3x3System(mats["A"], mats["Bx"], mats["By"], vecs["f_x"], vecs["f_y"],
                               vecs["g"], mass, pinned, meta)
    return Stokes2x2System(mats["A2"], mats["B"], vecs["f"], vecs["g"], mass, pinned, meta)


def _check_constraint(blocks, path):
    row_nnz = sum(np.diff(b.row_ptr) for b in blocks)
    empty = np.flatnonzero(row_nnz == 0)
    if empty.size:
        raise RankDeficientError(f"{path}: constraint row {int(empty[0])} is empty")
    n_p = blocks[0].rows
    ncols = sum(b.cols for b in blocks)
    if n_p + ncols > RANK_CHECK_MAX:
        return
    B = np.hstack([b.to_dense() for b in blocks])
    if n_p > ncols or np.linalg.matrix_rank(B) < n_p:
        raise RankDeficientError(f"{path}: constraint block does not have full row rank {n_p}")
