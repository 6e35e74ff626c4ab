"""Augmented Lagrangian reformulation and its block preconditioners.

The two-by-two system ``[A2 B^T; B 0]`` becomes ``[A2 + g B^T Q^-1 B, B^T;
B, 0]`` with right-hand side ``(f + g B^T Q^-1 c; c)``, ``c`` being the
constraint right-hand side. Since ``B u = c`` at every solution the added
terms cancel and both systems share their solution.

In three-by-three form with ``B = [Bx By]`` the same augmentation has
cross blocks ``g Bx^T Q^-1 By`` and ``g By^T Q^-1 Bx``; this coupled form is
the default. The block-diagonal variant keeps only ``g Bx^T Q^-1 Bx`` and
``g By^T Q^-1 By``. Its right-hand side is the same, so it is *not*
equivalent: its solution is off by a term of order ``gamma``. It is kept for
comparison.

Preconditioner applications follow the block back-substitution: first
``z = alpha Q^-1 r_p``, then solve the augmented velocity block(s) with
PCG (or global PCG for both velocity components at once) against
``r_1 - Bx^T z`` and ``r_2 - (1 - gamma/alpha) By^T z``. Every augmented
block is applied matrix-free as ``A v + gamma B_d^T (Q^-1 (B_d v))``.
"""
from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import DimensionMismatchError
from .ichol import IcFactor, ic_apply, ict_factor
from .krylov import LinearOperator, SolveReport, gmres, global_pcg, pcg
from .sparse import CsrMatrix, diag_solve, spmv, spmv_transpose
from .stokes import QChoice, Stokes2x2System, Stokes3x3System, build_Q, to_2x2

__all__ = [
    "Direction",
    "Approach",
    "Strategy",
    "IcTarget",
    "Augmentation",
    "AugParams",
    "AugmentedSystem",
    "Preconditioner3x3",
    "Preconditioner2x2",
    "build_augmented",
    "make_preconditioner",
    "apply_prec_3x3",
    "apply_prec_2x2",
    "to_3x3",
    "solve_stokes",
]


class Direction(str, Enum):
    X = "x"
    Y = "y"


class Approach(str, Enum):
    INDEPENDENT = "independent"
    GLOBAL = "global"


class Strategy(str, Enum):
    TWO_BY_TWO = "2x2"
    THREE_BY_THREE = "3x3"


class IcTarget(str, Enum):
    A = "A"
    AUGMENTED = "augmented"


class Augmentation(str, Enum):
    COUPLED = "coupled"
    BLOCK_DIAGONAL = "block-diagonal"


@dataclass(frozen=True)
class AugParams:
    gamma: float = 1e-4
    alpha: float = 10.0
    direction: Direction = Direction.X
    approach: Approach = Approach.GLOBAL
    q_choice: QChoice = QChoice.MASS
    inner_tol: float = 1e-6
    inner_maxit: int = 100
    droptol: float = 1e-2
    ic_target: IcTarget = IcTarget.A
    augmentation: Augmentation = Augmentation.COUPLED

    def __post_init__(self):
        object.__setattr__(self, "direction", Direction(self.direction))
        object.__setattr__(self, "approach", Approach(self.approach))
        object.__setattr__(self, "q_choice", QChoice(self.q_choice))
        object.__setattr__(self, "ic_target", IcTarget(self.ic_target))
        object.__setattr__(self, "augmentation", Augmentation(self.augmentation))
        if not self.gamma > 0:
            raise ValueError(f"gamma must be positive, got {self.gamma}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if not 0 < self.inner_tol < 1:
            raise ValueError(f"inner_tol must lie in (0, 1), got {self.inner_tol}")

    @property
    def coupling(self):
        """The ``1 - gamma/alpha`` factor on the velocity-pressure block."""
        return 1.0 - self.gamma / self.alpha

    def tag(self, strategy):
        if Strategy(strategy) is Strategy.TWO_BY_TWO:
            return "P_2x2"
        g = ",G" if self.approach is Approach.GLOBAL else ""
        return f"P_{self.direction.value}{g}"


@dataclass(frozen=True, eq=False)
class AugmentedSystem:
    base: object
    q_diag: np.ndarray
    gamma: float
    operator: LinearOperator
    rhs_bar: np.ndarray
    augmentation: Augmentation = Augmentation.COUPLED
    _cache: dict = field(default_factory=dict, repr=False)

    @property
    def is_3x3(self):
        return isinstance(self.base, Stokes3x3System)

    def _constraint(self, d=None):
        if not self.is_3x3:
            return self.base.B
        return self.base.Bx if Direction(d) is Direction.X else self.base.By

    def _leading(self):
        return self.base.A if self.is_3x3 else self.base.A2

    def augmented_block(self, d=None) -> LinearOperator:
        """``A + gamma B_d^T Q^-1 B_d`` applied matrix-free (``B`` for 2x2)."""
        key = ("block", None if d is None else Direction(d))
        if key not in self._cache:
            A = self._leading()
            B = self._constraint(d)
            q, gamma = self.q_diag, self.gamma

            def mv(v):
                return spmv(A, v) + gamma * spmv_transpose(B, diag_solve(q, spmv(B, v)))

            tag = f"A+gB{'' if d is None else Direction(d).value}^TQ^-1B"
            self._cache[key] = LinearOperator(A.rows, mv, tag=tag)
        return self._cache[key]

    def assembled_block(self, d=None) -> CsrMatrix:
        """Explicit ``A + gamma B_d^T Q^-1 B_d``; used for IC-of-augmented and oracles."""
        A = self._leading().scipy
        B = self._constraint(d).scipy
        K = B.T @ sp.diags(1.0 / self.q_diag) @ B
        return CsrMatrix.from_scipy((A + self.gamma * K).tocsr())

    def augment_rhs(self, b):
        return _augment_rhs(self.base, self.q_diag, self.gamma, b)

    def to_dense(self):
        base = self.base.to_dense()
        n_u = self.base.n_u
        out = base.copy()
        qinv = np.diag(1.0 / self.q_diag)
        if self.is_3x3:
            n = self.base.n
            Bx, By = self.base.Bx.to_dense(), self.base.By.to_dense()
            out[:n, :n] += self.gamma * Bx.T @ qinv @ Bx
            out[n:n_u, n:n_u] += self.gamma * By.T @ qinv @ By
            if self.augmentation is Augmentation.COUPLED:
                out[:n, n:n_u] += self.gamma * Bx.T @ qinv @ By
                out[n:n_u, :n] += self.gamma * By.T @ qinv @ Bx
        else:
            B = self.base.B.to_dense()
            out[:n_u, :n_u] += self.gamma * B.T @ qinv @ B
        return out


def _augment_rhs(base, q, gamma, b):
    b = np.asarray(b, dtype=np.float64)
    if b.shape != (base.N,):
        raise DimensionMismatchError("right-hand side length", base.N, b.shape)
    out = b.copy()
    c = b[base.n_u :]
    qc = diag_solve(q, c)
    if isinstance(base, Stokes3x3System):
        n = base.n
        out[:n] += gamma * spmv_transpose(base.Bx, qc)
        out[n : 2 * n] += gamma * spmv_transpose(base.By, qc)
    else:
        out[: base.n_u] += gamma * spmv_transpose(base.B, qc)
    return out


def build_augmented(sys, params: AugParams, rhs=None, *, gamma=None) -> AugmentedSystem:
    """Augmented operator and right-hand side for a 3x3 or 2x2 system.

    ``gamma`` overrides ``params.gamma``; it accepts 0, which reproduces the
    original operator and is only meant for checks.
    """
    gamma = params.gamma if gamma is None else float(gamma)
    q = build_Q(sys, params.q_choice)
    b = sys.rhs if rhs is None else rhs
    rhs_bar = _augment_rhs(sys, q, gamma, b)

    if isinstance(sys, Stokes3x3System):
        A, Bx, By = sys.A, sys.Bx, sys.By
        n = sys.n

        coupled = params.augmentation is Augmentation.COUPLED

        def mv(x):
            ux, uy, p = x[:n], x[n : 2 * n], x[2 * n :]
            bx, by = spmv(Bx, ux), spmv(By, uy)
            if coupled:
                wx = wy = diag_solve(q, bx + by)
            else:
                wx, wy = diag_solve(q, bx), diag_solve(q, by)
            return np.concatenate([
                spmv(A, ux) + gamma * spmv_transpose(Bx, wx) + spmv_transpose(Bx, p),
                spmv(A, uy) + gamma * spmv_transpose(By, wy) + spmv_transpose(By, p),
                bx + by,
            ])

        tag = "Abar_3x3"
    elif isinstance(sys, Stokes2x2System):
        A2, B = sys.A2, sys.B
        n_u = sys.n_u

        def mv(x):
            u, p = x[:n_u], x[n_u:]
            return np.concatenate([
                spmv(A2, u) + gamma * spmv_transpose(B, diag_solve(q, spmv(B, u))) + spmv_transpose(B, p),
                spmv(B, u),
            ])

        tag = "Abar_2x2"
    else:
        raise TypeError(f"unsupported system type {type(sys).__name__}")
    return AugmentedSystem(sys, q, gamma, LinearOperator(sys.N, mv, tag=tag), rhs_bar,
                           params.augmentation)


def _ic_for(aug: AugmentedSystem, params: AugParams, d=None) -> IcFactor:
    if params.ic_target is IcTarget.A:
        key = ("ic", "A", params.droptol)
        if key not in aug._cache:
            aug._cache[key] = ict_factor(aug._leading(), params.droptol)
    else:
        key = ("ic", "aug", None if d is None else Direction(d), params.droptol)
        if key not in aug._cache:
            aug._cache[key] = ict_factor(aug.assembled_block(d), params.droptol)
    return aug._cache[key]


class Preconditioner3x3:
    """Inverse of the direction-``d`` augmented Lagrangian preconditioner.

    The object holds no per-application state; :meth:`apply` returns the
    inner solve reports so callers can aggregate them.
    """

    def __init__(self, aug: AugmentedSystem, params: AugParams):
        if not aug.is_3x3:
            raise TypeError("Preconditioner3x3 needs an augmented 3x3 system")
        self.aug = aug
        self.params = params
        self.block = aug.augmented_block(params.direction)
        self.ic = _ic_for(aug, params, params.direction)

    def apply(self, r):
        base, p = self.aug.base, self.params
        n = base.n
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (base.N,):
            raise DimensionMismatchError("preconditioner operand", base.N, r.shape)
        r1, r2, r3 = r[:n], r[n : 2 * n], r[2 * n :]
        z = p.alpha * diag_solve(self.aug.q_diag, r3)
        h1 = r1 - spmv_transpose(base.Bx, z)
        h2 = r2 - p.coupling * spmv_transpose(base.By, z)
        ic = self.ic
        if p.approach is Approach.INDEPENDENT:
            x, rep1 = pcg(self.block, ic.solve, h1, p.inner_tol, p.inner_maxit)
            y, rep2 = pcg(self.block, ic.solve, h2, p.inner_tol, p.inner_maxit)
            reports = [rep1, rep2]
        else:
            H = np.empty((n, 2), order="F")
            H[:, 0], H[:, 1] = h1, h2
            X, rep = global_pcg(self.block, lambda R: ic_apply(ic, R), H, p.inner_tol, p.inner_maxit)
            x, y = X[:, 0], X[:, 1]
            reports = [rep]
        return np.concatenate([x, y, z]), reports

    def __call__(self, r):
        return self.apply(r)[0]


class Preconditioner2x2:
    def __init__(self, aug: AugmentedSystem, params: AugParams):
        if aug.is_3x3:
            raise TypeError("Preconditioner2x2 needs an augmented 2x2 system")
        self.aug = aug
        self.params = params
        self.block = aug.augmented_block()
        self.ic = _ic_for(aug, params)

    def apply(self, r):
        base, p = self.aug.base, self.params
        n_u = base.n_u
        r = np.asarray(r, dtype=np.float64)
        if r.shape != (base.N,):
            raise DimensionMismatchError("preconditioner operand", base.N, r.shape)
        r1, r2 = r[:n_u], r[n_u:]
        y = p.alpha * diag_solve(self.aug.q_diag, r2)
        x, rep = pcg(self.block, self.ic.solve, r1 - p.coupling * spmv_transpose(base.B, y),
                     p.inner_tol, p.inner_maxit)
        return np.concatenate([x, y]), [rep]

    def __call__(self, r):
        return self.apply(r)[0]


def make_preconditioner(aug: AugmentedSystem, params: AugParams):
    key = ("prec", params)
    if key not in aug._cache:
        cls = Preconditioner3x3 if aug.is_3x3 else Preconditioner2x2
        aug._cache[key] = cls(aug, params)
    return aug._cache[key]


def apply_prec_3x3(aug: AugmentedSystem, params: AugParams, r):
    return make_preconditioner(aug, params).apply(r)


def apply_prec_2x2(aug: AugmentedSystem, params: AugParams, r):
    return make_preconditioner(aug, params).apply(r)


def to_3x3(sys2: Stokes2x2System) -> Stokes3x3System:
    """Split a 2x2 system whose leading block is ``blockdiag(A, A)``."""
    n_u = sys2.n_u
    if n_u % 2:
        raise DimensionMismatchError("2x2 velocity size must be even", "even", n_u)
    n = n_u // 2
    A2 = sys2.A2.scipy
    A, A_yy = A2[:n, :n], A2[n:, n:]
    off = abs(A2[:n, n:]).sum() + abs(A2[n:, :n]).sum()
    if off != 0 or abs(A - A_yy).sum() != 0:
        raise ValueError("leading block is not blockdiag(A, A); no 3x3 form exists")
    B = sys2.B.scipy
    return Stokes3x3System(
        CsrMatrix.from_scipy(A),
        CsrMatrix.from_scipy(B[:, :n]),
        CsrMatrix.from_scipy(B[:, n:]),
        sys2.f[:n].copy(),
        sys2.f[n:].copy(),
        sys2.g.copy(),
        sys2.mass.copy(),
        sys2.pressure_pinned,
        dict(sys2.meta),
    )


def _summarise_inner(report: SolveReport, inner: list, napply: int):
    counts = [r.outer_iters for r in inner]
    report.inner_solves = len(counts)
    report.inner_iters_total = int(sum(counts))
    report.inner_iters_max = int(max(counts)) if counts else 0
    report.inner_iters_mean = report.inner_iters_total / napply if napply else 0.0
    report.inner_nonconverged = sum(1 for r in inner if not r.converged)


def solve_stokes(sys, params: AugParams, strategy=Strategy.THREE_BY_THREE, tol=1e-7, maxit=500,
                 *, rhs=None, x_star=None, stop="true"):
    """Solve a Stokes system through its augmented form with GMRES.

    ``sys`` may be either system type; it is converted to match
    ``strategy``. GMRES stops on the residual of the *original* system,
    ``||b - A x|| <= tol ||b||`` (``stop="preconditioned"`` stops on the
    preconditioned residual instead; see :func:`gmres`). The returned solution is ordered
    ``(u_x; u_y; p)`` for both strategies.

    Report fields: ``outer_iters`` is the GMRES count, ``inner_iters_total``
    sums every inner (global) PCG iteration, ``inner_iters_mean`` divides it
    by the number of preconditioner applications and ``inner_iters_max`` is
    the largest single inner solve. ``wall_seconds`` covers preconditioner
    setup and the GMRES solve.
    """
    strategy = Strategy(strategy)
    if strategy is Strategy.TWO_BY_TWO and isinstance(sys, Stokes3x3System):
        sys = to_2x2(sys)
    elif strategy is Strategy.THREE_BY_THREE and isinstance(sys, Stokes2x2System):
        sys = to_3x3(sys)
    b = sys.rhs if rhs is None else np.asarray(rhs, dtype=np.float64)

    t0 = time.perf_counter()
    aug = build_augmented(sys, params, b)
    prec = make_preconditioner(aug, params)
    inner = []

    def M(v):
        out, reps = prec.apply(v)
        inner.extend(reps)
        return out

    x, report = gmres(aug.operator, M, aug.rhs_bar, tol, maxit, check=(sys.matvec, b), stop=stop)
    report.wall_seconds = time.perf_counter() - t0
    _summarise_inner(report, inner, report.precond_applications)
    report.res = float(sys.relative_residual(x, b))
    if x_star is not None:
        report.err = float(np.linalg.norm(x - x_star) / np.linalg.norm(x_star))
    return x, report


def with_inner_tol(params: AugParams, tol, maxit=None) -> AugParams:
    return replace(params, inner_tol=tol, inner_maxit=params.inner_maxit if maxit is None else maxit)
