"""Q2-Q1 (Taylor-Hood) Stokes systems on structured rectangular grids.

Two domains are supported:

``step``
    The backward-facing step ``(-1, 5) x (-1, 1)`` minus ``(-1, 0) x (-1, 0)``.
    Parabolic inflow ``u_x = y (1 - y)`` on ``x = -1, 0 <= y <= 1``, no-slip on
    the walls and the step, natural (do-nothing) outflow on ``x = 5``.
``cavity``
    The square ``(-1, 1)^2`` with a regularised lid ``u_x = 1 - x^4`` on
    ``y = 1`` and no-slip elsewhere. The pressure is then only determined up
    to a constant, so the pressure unknown at ``(-1, -1)`` is pinned to zero
    (removed from the system).

Cells at level ``l`` have width ``h = 2**(1 - l)``. Dirichlet velocities are
eliminated (rows and columns removed, their contribution moved to the right
hand side), so ``A`` stays SPD.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np
import scipy.sparse as sp

from .errors import AssemblyError, GridTooCoarseError
from .rng import XorShift64Star
from .sparse import CsrMatrix, spmv, spmv_transpose

__all__ = [
    "Domain",
    "QChoice",
    "Grid",
    "Stokes3x3System",
    "Stokes2x2System",
    "FullBlocks",
    "assemble",
    "assemble_full",
    "element_matrices",
    "to_2x2",
    "manufacture_rhs",
    "build_Q",
]


class Domain(str, Enum):
    STEP = "step"
    CAVITY = "cavity"


class QChoice(str, Enum):
    IDENTITY = "identity"
    MASS = "mass"


_GAUSS_PTS = np.array([-np.sqrt(3.0 / 5.0), 0.0, np.sqrt(3.0 / 5.0)])
_GAUSS_WTS = np.array([5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0])


def _quad1d(xi):
    return np.array([xi * (xi - 1) / 2, 1 - xi * xi, xi * (xi + 1) / 2])


def _dquad1d(xi):
    return np.array([xi - 0.5, -2 * xi, xi + 0.5])


def _lin1d(xi):
    return np.array([(1 - xi) / 2, (1 + xi) / 2])


def element_matrices(h):
    """Element stiffness (9x9), weak derivatives Bx, By (4x9), pressure mass (4x4).

    Local velocity node ``(a, b)`` with ``a, b in {0, 1, 2}`` has local index
    ``3*b + a``; local pressure node ``(a, b)`` with ``a, b in {0, 1}`` has
    index ``2*b + a``. ``a`` runs along x. 3x3 Gauss quadrature on an
    ``h x h`` square, exact for every integrand here.
    """
    K = np.zeros((9, 9))
    Bx = np.zeros((4, 9))
    By = np.zeros((4, 9))
    M = np.zeros((4, 4))
    jac = (h / 2) ** 2
    for xi, wx in zip(_GAUSS_PTS, _GAUSS_WTS):
        for eta, wy in zip(_GAUSS_PTS, _GAUSS_WTS):
            w = wx * wy
            nx, ny = _quad1d(xi), _quad1d(eta)
            dnx, dny = _dquad1d(xi) * (2 / h), _dquad1d(eta) * (2 / h)
            phi_x = np.outer(ny, dnx).ravel()  # d/dx, index 3*b + a
            phi_y = np.outer(dny, nx).ravel()
            psi = np.outer(_lin1d(eta), _lin1d(xi)).ravel()
            K += w * jac * (np.outer(phi_x, phi_x) + np.outer(phi_y, phi_y))
            Bx -= w * jac * np.outer(psi, phi_x)
            By -= w * jac * np.outer(psi, phi_y)
            M += w * jac * np.outer(psi, psi)
    return K, Bx, By, M


@dataclass(frozen=True)
class Grid:
    """Uniform cell grid with an activity mask.

    ``active[i, j]`` refers to the cell whose lower-left corner is
    ``(x0 + i h, y0 + j h)``.
    """

    domain: Domain
    level: int
    h: float
    x0: float
    y0: float
    active: np.ndarray = field(repr=False)

    @classmethod
    def build(cls, domain, level):
        domain = Domain(domain)
        level = int(level)
        if level < 2:
            raise GridTooCoarseError(f"grid too coarse: level {level} < 2 leaves a degenerate pressure space")
        h = 2.0 ** (1 - level)
        if domain is Domain.CAVITY:
            x0, y0, x1, y1 = -1.0, -1.0, 1.0, 1.0
        else:
            x0, y0, x1, y1 = -1.0, -1.0, 5.0, 1.0
        ncx = int(round((x1 - x0) / h))
        ncy = int(round((y1 - y0) / h))
        active = np.ones((ncx, ncy), dtype=bool)
        if domain is Domain.STEP:
            xc = x0 + (np.arange(ncx) + 0.5) * h
            yc = y0 + (np.arange(ncy) + 0.5) * h
            active &= ~((xc[:, None] < 0) & (yc[None, :] < 0))
        active.setflags(write=False)
        return cls(domain, level, h, x0, y0, active)

    @property
    def ncx(self):
        return self.active.shape[0]

    @property
    def ncy(self):
        return self.active.shape[1]

    @property
    def area(self):
        return float(self.active.sum()) * self.h**2

    def velocity_lattice(self):
        """Shape ``(2 ncx + 1, 2 ncy + 1)`` of the biquadratic node lattice."""
        return 2 * self.ncx + 1, 2 * self.ncy + 1

    def pressure_lattice(self):
        return self.ncx + 1, self.ncy + 1

    def velocity_coords(self, a, b):
        return self.x0 + a * self.h / 2, self.y0 + b * self.h / 2

    def pressure_coords(self, a, b):
        return self.x0 + a * self.h, self.y0 + b * self.h

    def cell_velocity_dofs(self):
        """(ncells, 9) lattice ids of each active cell's velocity nodes."""
        ci, cj = np.nonzero(self.active)
        nvx, _ = self.velocity_lattice()
        a = np.arange(3)
        ga = 2 * ci[:, None, None] + a[None, None, :]
        gb = 2 * cj[:, None, None] + a[None, :, None]
        return (gb * nvx + ga).reshape(len(ci), 9)

    def cell_pressure_dofs(self):
        ci, cj = np.nonzero(self.active)
        npx, _ = self.pressure_lattice()
        a = np.arange(2)
        ga = ci[:, None, None] + a[None, None, :]
        gb = cj[:, None, None] + a[None, :, None]
        return (gb * npx + ga).reshape(len(ci), 4)

    def boundary_edges(self):
        """Boundary edges of the active region as ``(cell_i, cell_j, side)``.

        ``side`` is one of ``"left", "right", "bottom", "top"``.
        """
        out = []
        ncx, ncy = self.active.shape
        act = self.active

        def inactive(i, j):
            return not (0 <= i < ncx and 0 <= j < ncy and act[i, j])

        for i, j in zip(*np.nonzero(act)):
            for side, (di, dj) in (("left", (-1, 0)), ("right", (1, 0)), ("bottom", (0, -1)), ("top", (0, 1))):
                if inactive(i + di, j + dj):
                    out.append((int(i), int(j), side))
        return out


def _edge_nodes(i, j, side):
    """Velocity lattice (a, b) pairs on one edge of cell (i, j)."""
    a0, b0 = 2 * i, 2 * j
    if side == "left":
        return [(a0, b0 + k) for k in range(3)]
    if side == "right":
        return [(a0 + 2, b0 + k) for k in range(3)]
    if side == "bottom":
        return [(a0 + k, b0) for k in range(3)]
    return [(a0 + k, b0 + 2) for k in range(3)]


def _dirichlet_data(grid: Grid):
    """Map lattice id -> (w_x, w_y) for every Dirichlet velocity node."""
    nvx, _ = grid.velocity_lattice()
    data = {}
    x_out = grid.x0 + grid.ncx * grid.h
    for i, j, side in grid.boundary_edges():
        if grid.domain is Domain.STEP and side == "right":
            x_edge = grid.x0 + (i + 1) * grid.h
            if np.isclose(x_edge, x_out):
                continue  # natural outflow
        for a, b in _edge_nodes(i, j, side):
            x, y = grid.velocity_coords(a, b)
            if grid.domain is Domain.STEP:
                wx = y * (1 - y) if np.isclose(x, grid.x0) else 0.0
            else:
                wx = 1.0 - x**4 if np.isclose(y, 1.0) else 0.0
            data[b * nvx + a] = (wx, 0.0)
    return data


@dataclass(frozen=True)
class FullBlocks:
    """Matrices over all active nodes, before Dirichlet elimination."""

    A: CsrMatrix
    Bx: CsrMatrix
    By: CsrMatrix
    M: CsrMatrix
    velocity_ids: np.ndarray  # lattice id of each active velocity node
    pressure_ids: np.ndarray
    dirichlet: np.ndarray  # bool mask over active velocity nodes
    w_x: np.ndarray
    w_y: np.ndarray


def assemble_full(grid: Grid) -> FullBlocks:
    K, Bxe, Bye, Me = element_matrices(grid.h)
    vd = grid.cell_velocity_dofs()
    pd = grid.cell_pressure_dofs()
    vel_ids = np.unique(vd)
    pre_ids = np.unique(pd)
    vloc = np.searchsorted(vel_ids, vd)
    ploc = np.searchsorted(pre_ids, pd)
    nv, npr = len(vel_ids), len(pre_ids)
    nc = vd.shape[0]

    def coo(rows, cols, elem, shape):
        i = np.repeat(rows, cols.shape[1], axis=1).ravel()
        j = np.tile(cols, (1, rows.shape[1])).ravel()
        v = np.tile(elem.ravel(), nc)
        m = sp.coo_matrix((v, (i, j)), shape=shape).tocsr()
        m.sum_duplicates()
        m.eliminate_zeros()
        return CsrMatrix.from_scipy(m)

    A = coo(vloc, vloc, K, (nv, nv))
    Bx = coo(ploc, vloc, Bxe, (npr, nv))
    By = coo(ploc, vloc, Bye, (npr, nv))
    M = coo(ploc, ploc, Me, (npr, npr))

    data = _dirichlet_data(grid)
    dmask = np.isin(vel_ids, np.fromiter(data.keys(), dtype=np.int64, count=len(data)))
    w_x = np.zeros(nv)
    w_y = np.zeros(nv)
    for k in np.flatnonzero(dmask):
        w_x[k], w_y[k] = data[int(vel_ids[k])]
    return FullBlocks(A, Bx, By, M, vel_ids, pre_ids, dmask, w_x, w_y)


class _SystemBase:
    """Shared helpers; subclasses define ``blocks``, ``matvec`` and ``rhs``."""

    @property
    def N(self):
        return self.n_u + self.n_p

    def residual(self, x, b=None):
        b = self.rhs if b is None else b
        return b - self.matvec(x)

    def relative_residual(self, x, b=None):
        b = self.rhs if b is None else b
        nb = np.linalg.norm(b)
        r = np.linalg.norm(self.residual(x, b))
        return r / nb if nb > 0 else r


@dataclass(frozen=True, eq=False)
class Stokes3x3System(_SystemBase):
    """``[[A, 0, Bx^T], [0, A, By^T], [Bx, By, 0]] (u_x; u_y; p) = (f_x; f_y; g)``.

    ``mass`` is the lumped (row-sum) pressure mass matrix, kept so that a
    diagonal ``Q`` can be rebuilt for imported systems.
    """

    A: CsrMatrix
    Bx: CsrMatrix
    By: CsrMatrix
    f_x: np.ndarray
    f_y: np.ndarray
    g: np.ndarray
    mass: np.ndarray
    pressure_pinned: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n(self):
        return self.A.rows

    @property
    def n_u(self):
        return 2 * self.A.rows

    @property
    def n_p(self):
        return self.Bx.rows

    @property
    def rhs(self):
        return np.concatenate([self.f_x, self.f_y, self.g])

    def split(self, x):
        n = self.n
        return x[:n], x[n : 2 * n], x[2 * n :]

    def matvec(self, x):
        ux, uy, p = self.split(np.asarray(x, dtype=np.float64))
        return np.concatenate(
            [
                spmv(self.A, ux) + spmv_transpose(self.Bx, p),
                spmv(self.A, uy) + spmv_transpose(self.By, p),
                spmv(self.Bx, ux) + spmv(self.By, uy),
            ]
        )

    def to_dense(self):
        A, Bx, By = self.A.to_dense(), self.Bx.to_dense(), self.By.to_dense()
        Z = np.zeros_like(A)
        Zp = np.zeros((self.n_p, self.n_p))
        return np.block([[A, Z, Bx.T], [Z, A, By.T], [Bx, By, Zp]])


@dataclass(frozen=True, eq=False)
class Stokes2x2System(_SystemBase):
    """``[[A2, B^T], [B, 0]] (u; p) = (f; g)`` with ``u = (u_x; u_y)``."""

    A2: CsrMatrix
    B: CsrMatrix
    f: np.ndarray
    g: np.ndarray
    mass: np.ndarray
    pressure_pinned: bool = False
    meta: dict = field(default_factory=dict)

    @property
    def n_u(self):
        return self.A2.rows

    @property
    def n_p(self):
        return self.B.rows

    @property
    def rhs(self):
        return np.concatenate([self.f, self.g])

    def split(self, x):
        return x[: self.n_u], x[self.n_u :]

    def matvec(self, x):
        u, p = self.split(np.asarray(x, dtype=np.float64))
        return np.concatenate([spmv(self.A2, u) + spmv_transpose(self.B, p), spmv(self.B, u)])

    def to_dense(self):
        A, B = self.A2.to_dense(), self.B.to_dense()
        return np.block([[A, B.T], [B, np.zeros((self.n_p, self.n_p))]])


def assemble(grid: Grid) -> Stokes3x3System:
    """Assemble and eliminate Dirichlet velocities; see the module docstring."""
    full = assemble_full(grid)
    free = np.flatnonzero(~full.dirichlet)
    fixed = np.flatnonzero(full.dirichlet)
    A_full = full.A.scipy
    A = A_full[free][:, free]
    A_fb = A_full[free][:, fixed]
    wx, wy = full.w_x[fixed], full.w_y[fixed]
    f_x = -(A_fb @ wx)
    f_y = -(A_fb @ wy)
    Bx_full, By_full = full.Bx.scipy, full.By.scipy
    g = -(Bx_full[:, fixed] @ wx + By_full[:, fixed] @ wy)
    Bx = Bx_full[:, free]
    By = By_full[:, free]
    mass = np.asarray(full.M.scipy.sum(axis=1)).ravel()

    pinned = grid.domain is Domain.CAVITY
    if pinned:
        keep = np.arange(1, Bx.shape[0])  # lattice id 0 is the (-1, -1) corner
        Bx, By, g, mass = Bx[keep], By[keep], g[keep], mass[keep]

    def csr(m):
        m = sp.csr_matrix(m)
        m.eliminate_zeros()
        return CsrMatrix.from_scipy(m)

    if np.any(mass <= 0):
        raise AssemblyError("nonpositive lumped pressure mass entry")
    meta = {
        "domain": grid.domain.value,
        "level": grid.level,
        "h": grid.h,
        "inflow": "u_x = y(1-y)" if grid.domain is Domain.STEP else "lid u_x = 1-x^4",
        "outflow": "natural" if grid.domain is Domain.STEP else "none",
    }
    return Stokes3x3System(csr(A), csr(Bx), csr(By), f_x, f_y, g, mass, pinned, meta)


def to_2x2(sys3: Stokes3x3System) -> Stokes2x2System:
    A = sys3.A.scipy
    A2 = sp.block_diag([A, A], format="csr")
    B = sp.hstack([sys3.Bx.scipy, sys3.By.scipy], format="csr")
    return Stokes2x2System(
        CsrMatrix.from_scipy(A2),
        CsrMatrix.from_scipy(B),
        np.concatenate([sys3.f_x, sys3.f_y]),
        sys3.g.copy(),
        sys3.mass.copy(),
        sys3.pressure_pinned,
        dict(sys3.meta),
    )


def manufacture_rhs(sys, seed):
    """Random solution uniform in [-1, 1]^N and its right-hand side.

    Both system types order unknowns as ``(u_x; u_y; p)``, so the same seed
    gives the same ``x_star`` for a system and its 2x2 counterpart.
    """
    x_star = XorShift64Star(seed).uniform(-1.0, 1.0, sys.N)
    return sys.matvec(x_star), x_star


def build_Q(sys, choice) -> np.ndarray:
    """Diagonal of Q: all ones, or the lumped pressure mass matrix."""
    choice = QChoice(choice)
    if choice is QChoice.IDENTITY:
        return np.ones(sys.n_p)
    if sys.mass is None:
        raise AssemblyError("system carries no pressure mass; only the identity Q is available")
    q = np.asarray(sys.mass, dtype=np.float64).copy()
    if q.shape != (sys.n_p,):
        raise AssemblyError(f"pressure mass has length {q.shape}, expected {sys.n_p}")
    if np.any(q <= 0):
        raise AssemblyError("pressure mass diagonal has a nonpositive entry")
    return q
