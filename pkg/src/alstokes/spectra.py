"""Dense spectral checks for the preconditioned two-by-two operator.

Everything here forms dense matrices, so it is limited to small meshes.
The preconditioner is taken in matrix form::

    P = [A2 + g B^T Q^-1 B   (1 - g/alpha) B^T]
        [0                   s alpha^-1 Q     ]

with ``s = -1`` by default. With that sign the non-unit eigenvalues solve
``(a + g q) l^2 - (a + alpha q) l + alpha q = 0`` for the Rayleigh
quotients ``a`` of ``A2`` and ``q`` of ``B^T Q^-1 B`` taken on the velocity
part of each eigenvector. Its roots are real only when
``(a - alpha q)^2 >= 4 alpha g q^2``; some ``(g, alpha)`` pairs therefore
give complex pairs with positive real part. ``s = +1`` gives the operator that the
back-substitution in :mod:`alstokes.alprec` applies.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la

from .alprec import AugParams
from .errors import RankDeficientError, SizeGuardError
from .stokes import Stokes2x2System, Stokes3x3System, build_Q, to_2x2

__all__ = [
    "MAX_DENSE_SIZE",
    "EigenSample",
    "SpectralReport",
    "dense_blocks",
    "assemble_dense_preconditioned",
    "count_distinct",
    "verify_theorem",
    "unit_eigenvector_residual",
    "eigenvalues_csv",
    "write_eigenvalues_csv",
]

MAX_DENSE_SIZE = 3000
TAU = 1e-6


@dataclass(frozen=True)
class EigenSample:
    """Rayleigh data of one non-unit eigenpair and its quadratic residual."""

    eigenvalue: complex
    a: float
    q: float
    b: float
    c: float
    residual: float


@dataclass
class SpectralReport:
    eigenvalues: np.ndarray
    n_u: int
    n_p: int
    max_imag: float
    max_abs: float
    min_real: float
    distinct_count: int
    multiplicity_one: int
    lambda1_bound: float
    lambda2_bound: float
    bounds_hold: bool
    lambda1_bound_sharp: float
    lambda2_bound_sharp: float
    sharp_bounds_hold: bool
    a_q_samples: list = field(default_factory=list)
    eigvec_cond: float = float("nan")
    tau: float = TAU

    @property
    def real(self):
        return self.max_imag <= 1e-8 * self.max_abs

    @property
    def positive(self):
        return self.min_real > 0

    @property
    def distinct_ok(self):
        return self.distinct_count <= self.n_p + 1

    @property
    def unit_cluster_ok(self):
        return self.multiplicity_one >= self.n_u - self.n_p

    @property
    def max_quadratic_residual(self):
        return max((s.residual for s in self.a_q_samples), default=0.0)

    def summary(self):
        return {
            "n_u": self.n_u,
            "n_p": self.n_p,
            "max_imag": self.max_imag,
            "max_abs": self.max_abs,
            "min_real": self.min_real,
            "distinct_count": self.distinct_count,
            "multiplicity_one": self.multiplicity_one,
            "lambda1_bound": self.lambda1_bound,
            "lambda2_bound": self.lambda2_bound,
            "bounds_hold": self.bounds_hold,
            "lambda1_bound_sharp": self.lambda1_bound_sharp,
            "lambda2_bound_sharp": self.lambda2_bound_sharp,
            "sharp_bounds_hold": self.sharp_bounds_hold,
            "max_quadratic_residual": self.max_quadratic_residual,
            "eigvec_cond": self.eigvec_cond,
        }


def _as_2x2(sys):
    if isinstance(sys, Stokes3x3System):
        return to_2x2(sys)
    if not isinstance(sys, Stokes2x2System):
        raise TypeError(f"expected a Stokes system, got {type(sys).__name__}")
    return sys


def dense_blocks(sys2, params: AugParams):
    """Dense ``A2``, ``B``, ``Q`` diagonal and ``K = B^T Q^-1 B``."""
    sys2 = _as_2x2(sys2)
    if sys2.N > MAX_DENSE_SIZE:
        raise SizeGuardError(f"dense spectral work needs N <= {MAX_DENSE_SIZE}, got {sys2.N}")
    A2 = sys2.A2.to_dense()
    B = sys2.B.to_dense()
    q = build_Q(sys2, params.q_choice)
    K = B.T @ (B / q[:, None])
    return A2, B, q, K


def _check_rank(B):
    if B.shape[0] == 0:
        return
    s = la.svdvals(B)
    if s[0] == 0.0 or s[-1] <= max(B.shape) * np.finfo(float).eps * s[0]:
        raise RankDeficientError(
            f"constraint block has rank below {B.shape[0]} (smallest singular value {s[-1]:.3e})"
        )


def assemble_dense_preconditioned(sys2, params: AugParams, *, q_sign=-1.0):
    """Dense ``P^-1 Abar`` for a two-by-two system.

    ``B`` must have full row rank; otherwise the pressure part of the
    operator is singular and :class:`RankDeficientError` is raised.
    """
    A2, B, q, K = dense_blocks(sys2, params)
    _check_rank(B)
    n_u, n_p = A2.shape[0], B.shape[0]
    g, alpha = params.gamma, params.alpha
    top = A2 + g * K
    Abar = np.block([[top, B.T], [B, np.zeros((n_p, n_p))]])
    P = np.block([
        [top, params.coupling * B.T],
        [np.zeros((n_p, n_u)), np.diag(q_sign * q / alpha)],
    ])
    return la.solve(P, Abar)


def count_distinct(values, tau=TAU):
    """Number of clusters after sorting real parts and merging neighbours
    whose gap is within ``tau`` relative to the larger magnitude."""
    x = np.sort(np.real(np.asarray(values)))
    if x.size == 0:
        return 0
    gaps = np.diff(x)
    scale = np.maximum(np.abs(x[1:]), np.abs(x[:-1]))
    return int(1 + np.count_nonzero(gaps > tau * scale))


def _rayleigh(M, u):
    return float(np.real(np.vdot(u, M @ u) / np.vdot(u, u)))


def verify_theorem(sys2, params: AugParams, *, tau=TAU, q_sign=-1.0) -> SpectralReport:
    """Eigenvalues of the preconditioned operator and the checks on them.

    Eigenvalues within ``tau`` of 1 are counted as the unit cluster; every
    other one is compared against the bounds and gets an
    :class:`EigenSample`. Two bound pairs are returned: the literal one,
    whose ``lambda_min(B^T Q^-1 B)`` is zero up to roundoff (clipped to 0),
    and a sharpened one using the smallest nonzero eigenvalue instead.
    """
    sys2 = _as_2x2(sys2)
    A2, B, q, K = dense_blocks(sys2, params)
    n_u, n_p = A2.shape[0], B.shape[0]
    M = assemble_dense_preconditioned(sys2, params, q_sign=q_sign)
    lam, V = la.eig(M)

    max_abs = float(np.max(np.abs(lam)))
    unit = np.abs(lam - 1.0) <= tau
    eigA = la.eigvalsh(A2)
    eigK = la.eigvalsh(K)
    kmin = max(float(eigK[0]), 0.0)
    kmax = float(eigK[-1])
    # K = B^T Q^-1 B has rank n_p; its n_p largest eigenvalues are the nonzero ones
    kmin_nz = float(eigK[n_u - n_p]) if n_p else 0.0
    g, alpha = params.gamma, params.alpha

    def bounds(kmin_):
        lo = 2 * kmin_ / (eigA[-1] + (1 + alpha - g) * kmax)
        den = eigA[0] + (alpha - g) * kmin_
        hi = 2 * alpha * kmax / den if den > 0 else np.inf
        return float(lo), float(hi)

    lo, hi = bounds(kmin)
    lo_s, hi_s = bounds(kmin_nz)
    other = lam[~unit]
    slack = 1e-12 * max_abs
    re = np.real(other)
    hold = bool(np.all((re >= lo - slack) & (re <= hi + slack)))
    hold_s = bool(np.all((re >= lo_s - slack) & (re <= hi_s + slack)))

    samples = []
    for j in np.flatnonzero(~unit):
        u = V[:n_u, j]
        if np.linalg.norm(u) == 0.0:
            continue
        a = _rayleigh(A2, u)
        qq = _rayleigh(K, u)
        den = a + g * qq
        b = (a + alpha * qq) / den
        c = alpha * qq / den
        lj = lam[j]
        samples.append(EigenSample(complex(lj), a, qq, b, c, float(abs(lj * lj - b * lj + c))))

    return SpectralReport(
        eigenvalues=lam,
        n_u=n_u,
        n_p=n_p,
        max_imag=float(np.max(np.abs(np.imag(lam)))),
        max_abs=max_abs,
        min_real=float(np.min(np.real(lam))),
        distinct_count=count_distinct(lam, tau),
        multiplicity_one=int(np.count_nonzero(unit)),
        lambda1_bound=lo,
        lambda2_bound=hi,
        bounds_hold=hold,
        lambda1_bound_sharp=lo_s,
        lambda2_bound_sharp=hi_s,
        sharp_bounds_hold=hold_s,
        a_q_samples=samples,
        eigvec_cond=float(np.linalg.cond(V)),
        tau=tau,
    )


def unit_eigenvector_residual(sys2, params: AugParams, *, q_sign=-1.0, seed=0):
    """``||M v - v|| / ||v||`` for ``v = (u; 0)`` with ``u`` a random
    combination of a kernel basis of ``B``."""
    sys2 = _as_2x2(sys2)
    _, B, _, _ = dense_blocks(sys2, params)
    Z = la.null_space(B)
    coef = np.random.default_rng(seed).standard_normal(Z.shape[1])
    v = np.concatenate([Z @ coef, np.zeros(B.shape[0])])
    M = assemble_dense_preconditioned(sys2, params, q_sign=q_sign)
    return float(np.linalg.norm(M @ v - v) / np.linalg.norm(v))


def eigenvalues_csv(eigenvalues) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["real", "imag"])
    for z in np.asarray(eigenvalues, dtype=complex):
        w.writerow([repr(float(z.real)), repr(float(z.imag))])
    return buf.getvalue()


def write_eigenvalues_csv(path, eigenvalues):
    with open(path, "w", newline="") as fh:
        fh.write(eigenvalues_csv(eigenvalues))
