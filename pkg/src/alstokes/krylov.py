"""Unrestarted left-preconditioned GMRES, PCG and global PCG."""
from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatchError, NotSPDError
from .sparse import CsrMatrix, as_block, block_spmv, frobenius_inner, spmv

__all__ = ["LinearOperator", "SolveReport", "gmres", "pcg", "global_pcg", "identity_precond"]


@dataclass(frozen=True)
class LinearOperator:
    """Square operator given by its action.

    ``matmat`` is optional; without it blocks are applied column by column,
    which keeps block results bitwise equal to repeated ``apply`` calls.
    """

    n: int
    matvec: Callable[[np.ndarray], np.ndarray]
    matmat: Optional[Callable[[np.ndarray], np.ndarray]] = None
    tag: str = ""

    def apply(self, x):
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.n,):
            raise DimensionMismatchError(f"operator {self.tag or ''} operand", (self.n,), x.shape)
        return self.matvec(x)

    def apply_block(self, X):
        X = as_block(X, self.n)
        if self.matmat is not None:
            return np.asfortranarray(self.matmat(X))
        out = np.empty_like(X, order="F")
        for j in range(X.shape[1]):
            out[:, j] = self.matvec(X[:, j])
        return out

    __call__ = apply

    @classmethod
    def from_matrix(cls, m: CsrMatrix, tag="matrix"):
        if m.rows != m.cols:
            raise DimensionMismatchError("operator must be square", m.rows, m.cols)
        return cls(m.rows, lambda x: spmv(m, x), lambda X: block_spmv(m, X), tag)

    @classmethod
    def from_dense(cls, a, tag="dense"):
        a = np.asarray(a, dtype=np.float64)
        return cls(a.shape[0], lambda x: a @ x, lambda X: a @ X, tag)

    @classmethod
    def identity(cls, n):
        return cls(n, lambda x: x.copy(), lambda X: X.copy(), "identity")


def identity_precond(x):
    return np.array(x, dtype=np.float64, copy=True)


@dataclass
class SolveReport:
    """Outcome of one solve.

    ``res`` is always recomputed from the returned iterate. For GMRES,
    ``history`` holds the relative preconditioned residual estimates (one per
    iteration, starting with 1.0), ``true_history`` the ``(iteration,
    residual)`` pairs where the unpreconditioned residual was evaluated and
    ``trigger_iter`` the first iteration whose estimate reached the tolerance.
    """

    outer_iters: int
    inner_iters_total: int = 0
    res: float = float("nan")
    err: Optional[float] = None
    wall_seconds: float = 0.0
    converged: bool = False
    history: list = field(default_factory=list)
    true_history: list = field(default_factory=list)
    inner_iters_mean: float = 0.0
    inner_iters_max: int = 0
    inner_solves: int = 0
    inner_nonconverged: int = 0
    precond_applications: int = 0
    breakdown: bool = False
    trigger_iter: Optional[int] = None


def _relres(r, b):
    nb = np.linalg.norm(b)
    nr = np.linalg.norm(r)
    return nr / nb if nb > 0 else nr


def gmres(op: LinearOperator, precond, b, tol=1e-7, maxit=500, *, check=None, stop="true"):
    """Left-preconditioned GMRES(inf) with modified Gram-Schmidt Arnoldi.

    The Krylov space is built on ``precond(op(.))`` started from
    ``precond(b)``, with a zero initial guess. The Givens-updated estimate of
    the preconditioned residual acts as a trigger: once it drops to ``tol``
    the iterate is formed and the unpreconditioned residual
    ``||c - C x|| / ||c||`` is evaluated, and from then on at every step
    until it also drops to ``tol``. ``(C, c)`` defaults to ``(op, b)`` and
    can be replaced through ``check=(matvec, rhs)`` so an equivalent
    reformulated system is judged against the original one.

    ``stop="preconditioned"`` ends the solve on the trigger alone, i.e. on
    the preconditioned relative residual; the unpreconditioned residual is
    still evaluated and reported. Reaching ``maxit`` is not an error: the
    report has ``converged=False``. On Arnoldi breakdown the solve ends and
    ``converged`` reflects the true residual of that iterate.
    """
    if stop not in ("true", "preconditioned"):
        raise ValueError(f"stop must be 'true' or 'preconditioned', got {stop!r}")
    t0 = time.perf_counter()
    M = precond if precond is not None else identity_precond
    b = np.asarray(b, dtype=np.float64)
    n = op.n
    if b.shape != (n,):
        raise DimensionMismatchError("gmres right-hand side", (n,), b.shape)
    check_mv, check_b = (op.apply, b) if check is None else check
    check_b = np.asarray(check_b, dtype=np.float64)

    def true_res(x):
        return _relres(check_b - check_mv(x), check_b)

    x = np.zeros(n)
    if np.linalg.norm(b) == 0.0:
        return x, SolveReport(0, res=0.0, converged=True, history=[0.0], true_history=[(0, 0.0)],
                              trigger_iter=0, wall_seconds=time.perf_counter() - t0)

    r0 = M(b)
    beta = np.linalg.norm(r0)
    napply = 1
    if beta == 0.0:
        res = true_res(x)
        return x, SolveReport(0, res=res, converged=bool(res <= tol), breakdown=True, history=[0.0],
                              true_history=[(0, res)], precond_applications=napply,
                              wall_seconds=time.perf_counter() - t0)

    V = [r0 / beta]
    H = np.zeros((maxit + 1, maxit))
    cs = np.zeros(maxit)
    sn = np.zeros(maxit)
    g = np.zeros(maxit + 1)
    g[0] = beta
    history = [1.0]
    true_history = []
    converged = breakdown = False
    trigger = None
    res = None
    its = 0
    for j in range(maxit):
        w = M(op.apply(V[j]))
        napply += 1
        wnorm0 = np.linalg.norm(w)
        for i in range(j + 1):
            H[i, j] = np.dot(w, V[i])
            w -= H[i, j] * V[i]
        hnext = np.linalg.norm(w)
        H[j + 1, j] = hnext
        breakdown = hnext <= 1e-14 * max(wnorm0, 1e-300)
        if not breakdown:
            V.append(w / hnext)

        for i in range(j):
            t = cs[i] * H[i, j] + sn[i] * H[i + 1, j]
            H[i + 1, j] = -sn[i] * H[i, j] + cs[i] * H[i + 1, j]
            H[i, j] = t
        denom = np.hypot(H[j, j], H[j + 1, j])
        cs[j], sn[j] = H[j, j] / denom, H[j + 1, j] / denom
        H[j, j] = denom
        H[j + 1, j] = 0.0
        g[j + 1] = -sn[j] * g[j]
        g[j] = cs[j] * g[j]
        history.append(abs(g[j + 1]) / beta)

        its = j + 1
        if trigger is None and history[-1] <= tol:
            trigger = its
        if trigger is None and not breakdown and its < maxit:
            continue
        x = _assemble_iterate(H, g, V, its)
        res = true_res(x)
        true_history.append((its, res))
        if trigger is not None and (stop == "preconditioned" or res <= tol):
            converged = bool(stop == "preconditioned" or res <= tol)
            break
        if breakdown:
            converged = bool(res <= tol)
            break

    if res is None:
        res = true_res(x)
    return x, SolveReport(
        its,
        res=res,
        converged=converged,
        history=history,
        true_history=true_history,
        trigger_iter=trigger,
        breakdown=breakdown,
        precond_applications=napply,
        wall_seconds=time.perf_counter() - t0,
    )


def _assemble_iterate(H, g, V, k):
    y = solve_triangular(H[:k, :k], g[:k])
    return np.asarray(V[:k]).T @ y


def pcg(op: LinearOperator, precond, b, tol=1e-6, maxit=100):
    """Preconditioned conjugate gradients from a zero initial guess.

    Stops when the recurrence residual satisfies ``||r_k|| <= tol ||b||``.
    Raises :class:`NotSPDError` if a search direction has ``p^T A p <= 0``.
    """
    t0 = time.perf_counter()
    M = precond if precond is not None else identity_precond
    b = np.asarray(b, dtype=np.float64)
    n = op.n
    if b.shape != (n,):
        raise DimensionMismatchError("pcg right-hand side", (n,), b.shape)
    x = np.zeros(n)
    nb = np.linalg.norm(b)
    if nb == 0.0:
        return x, SolveReport(0, res=0.0, converged=True, history=[0.0])

    r = b.copy()
    z = M(r)
    p = z.copy()
    rz = np.dot(r, z)
    history = [1.0]
    converged = False
    k = 0
    for k in range(1, maxit + 1):
        w = op.apply(p)
        pw = np.dot(p, w)
        if not pw > 0:
            raise NotSPDError(f"operator not SPD: p^T A p = {pw:.3e} at iteration {k}")
        a = rz / pw
        x += a * p
        r -= a * w
        rel = np.linalg.norm(r) / nb
        history.append(rel)
        if rel <= tol:
            converged = True
            break
        z = M(r)
        rz_new = np.dot(r, z)
        p = z + (rz_new / rz) * p
        rz = rz_new

    res = _relres(b - op.apply(x), b)
    return x, SolveReport(k, res=res, converged=converged, history=history,
                          wall_seconds=time.perf_counter() - t0)


def global_pcg(op: LinearOperator, precond, H, tol=1e-6, maxit=100):
    """Global CG for ``A X = H`` with ``k`` right-hand sides at once.

    This is the scalar PCG recurrence with dot products replaced by
    ``<X, Y> = trace(X^T Y)``, so a single step length and a single
    conjugation coefficient are shared by all columns. ``precond`` acts on
    ``(n, k)`` blocks. Stops when ``||R||_F <= tol ||H||_F``.
    """
    t0 = time.perf_counter()
    M = precond if precond is not None else identity_precond
    H = as_block(H)
    n = op.n
    if H.shape[0] != n:
        raise DimensionMismatchError("global_pcg right-hand side rows", n, H.shape[0])
    X = np.zeros_like(H, order="F")
    nh = np.sqrt(frobenius_inner(H, H))
    if nh == 0.0:
        return X, SolveReport(0, res=0.0, converged=True, history=[0.0])

    R = H.copy(order="F")
    Z = as_block(M(R))
    P = Z.copy(order="F")
    rz = frobenius_inner(R, Z)
    history = [1.0]
    converged = False
    k = 0
    for k in range(1, maxit + 1):
        W = op.apply_block(P)
        pw = frobenius_inner(P, W)
        if not pw > 0:
            raise NotSPDError(f"operator not SPD: <P, AP>_F = {pw:.3e} at iteration {k}")
        a = rz / pw
        X += a * P
        R -= a * W
        rel = np.sqrt(frobenius_inner(R, R)) / nh
        history.append(rel)
        if rel <= tol:
            converged = True
            break
        Z = as_block(M(R))
        rz_new = frobenius_inner(R, Z)
        P = Z + (rz_new / rz) * P
        rz = rz_new

    Rt = H - op.apply_block(X)
    res = np.sqrt(frobenius_inner(Rt, Rt)) / nh
    return X, SolveReport(k, res=res, converged=converged, history=history,
                          wall_seconds=time.perf_counter() - t0)
