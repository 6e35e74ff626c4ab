"""Stokes saddle-point systems, augmented Lagrangian preconditioners and
the Krylov solvers that apply them."""
from .alprec import (
    Approach,
    AugParams,
    Augmentation,
    Direction,
    IcTarget,
    Strategy,
    build_augmented,
    make_preconditioner,
    solve_stokes,
)
from .errors import AlStokesError
from .ichol import ic_apply, ict_factor
from .krylov import LinearOperator, SolveReport, global_pcg, gmres, pcg
from .sparse import CsrMatrix, spmv, spmv_transpose
from .stokes import (
    Domain,
    Grid,
    QChoice,
    Stokes2x2System,
    Stokes3x3System,
    assemble,
    build_Q,
    manufacture_rhs,
    to_2x2,
)

__version__ = "0.1.0"
