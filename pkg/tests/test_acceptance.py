"""Acceptance suite: one test per criterion, each recording a PASS/FAIL line.

Step-mesh solves are shared between criteria through a session cache. Two
GMRES protocols are used wherever outer iteration counts are compared:

* ``preconditioned``: inner tolerance 1e-6, GMRES stops on the
  preconditioned residual estimate;
* ``true``: inner tolerance 1e-10, GMRES stops on the residual of the
  original system.

A count-based criterion passes only if it holds under both.
"""
import time

import numpy as np
import pytest

from alstokes.alprec import AugParams, build_augmented, solve_stokes
from alstokes.ichol import ict_factor
from alstokes.krylov import LinearOperator, global_pcg, gmres, pcg
from alstokes.manifest import export_system, import_system
from alstokes.sparse import CsrMatrix
from alstokes.spectra import verify_theorem
from alstokes.stokes import manufacture_rhs, to_2x2

from conftest import ACCEPTANCE, laplacian_2d, system

STEP_LEVELS = (3, 4, 5)
GAMMAS = (1e-4, 1e-2)
ALPHA = 10.0
PROTOCOLS = {"preconditioned": 1e-6, "true": 1e-10}


def record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    assert ok, f"criterion {k}: {detail}"


class StepRuns:
    def __init__(self):
        self.cache = {}

    def get(self, level, gamma=1e-4, direction="x", approach="global", protocol="preconditioned",
            inner_tol=None):
        inner = PROTOCOLS[protocol] if inner_tol is None else inner_tol
        key = (level, gamma, direction, approach, protocol, inner)
        if key not in self.cache:
            t0 = time.perf_counter()
            sys = system("step", level)
            b, x_star = manufacture_rhs(sys, 1)
            p = AugParams(gamma=gamma, alpha=ALPHA, direction=direction, approach=approach,
                          inner_tol=inner, inner_maxit=1000 if inner < 1e-6 else 100)
            x, rep = solve_stokes(sys, p, "3x3", 1e-7, 500, rhs=b, x_star=x_star, stop=protocol)
            self.cache[key] = (x, rep, sys.N, time.perf_counter() - t0)
        return self.cache[key]

    def iters(self, *args, **kw):
        _, rep, _, _ = self.get(*args, **kw)
        return rep.outer_iters if rep.converged else None


@pytest.fixture(scope="session")
def runs():
    return StepRuns()


def _fmt(counts):
    return "/".join("nc" if c is None else str(c) for c in counts)


# 1 --------------------------------------------------------------------------

def test_criterion_01_augmentation_equivalence():
    t0 = time.perf_counter()
    worst = 0.0
    for key in (("cavity", 2), ("cavity", 3), ("step", 2)):
        sys = system(*key)
        b, _ = manufacture_rhs(sys, 1)
        x = np.linalg.solve(sys.to_dense(), b)
        for s in (sys, to_2x2(sys)):
            for g in GAMMAS:
                aug = build_augmented(s, AugParams(gamma=g, alpha=ALPHA), b)
                xbar = np.linalg.solve(aug.to_dense(), aug.rhs_bar)
                worst = max(worst, np.linalg.norm(xbar - x) / np.linalg.norm(x))
    dt = time.perf_counter() - t0
    record(1, worst <= 1e-9 and dt <= 10, f"max relative difference {worst:.1e} (<= 1e-9), {dt:.1f} s")


# 2, 3 -----------------------------------------------------------------------

@pytest.fixture(scope="module")
def spectra():
    t0 = time.perf_counter()
    sys2 = to_2x2(system("cavity", 2))
    reps = {g: verify_theorem(sys2, AugParams(gamma=g, alpha=ALPHA)) for g in GAMMAS}
    return reps, time.perf_counter() - t0


def test_criterion_02_spectral_claims(spectra):
    reps, dt = spectra
    ok = dt <= 60
    parts = []
    for g, r in reps.items():
        checks = {
            "real": r.max_imag <= 1e-8 * r.max_abs,
            "positive": r.min_real > 0,
            "distinct": r.distinct_count <= r.n_p + 1,
            "unit cluster": r.multiplicity_one >= r.n_u - r.n_p,
            "bounds": r.bounds_hold,
        }
        ok &= all(checks.values())
        failed = [k for k, v in checks.items() if not v]
        parts.append(f"gamma={g:.0e}: distinct {r.distinct_count} vs cap {r.n_p + 1}, "
                     f"unit {r.multiplicity_one} >= {r.n_u - r.n_p}, failed {failed or 'none'}")
    record(2, ok, "; ".join(parts) + f"; {dt:.1f} s")


def test_criterion_03_quadratic_residual(spectra):
    reps, _ = spectra
    worst = max(r.max_quadratic_residual for r in reps.values())
    n = sum(len(r.a_q_samples) for r in reps.values())
    record(3, worst <= 1e-6, f"max residual {worst:.1e} over {n} non-unit eigenpairs (<= 1e-6)")


# 4 -------------------------------------------------------------------------

def test_criterion_04_iteration_band(runs):
    # step level 3 (N = 1521) is the only step mesh within a factor 2 of 1926
    level = 3
    N = runs.get(level)[2]
    assert 1926 / 2 <= N <= 2 * 1926
    counts = {p: runs.iters(level, protocol=p) for p in PROTOCOLS}
    ok = all(c is not None and 15 <= c <= 40 for c in counts.values())
    _, default, _, _ = runs.get(level, protocol="true", inner_tol=1e-6)
    diag = (f"true stop at inner 1e-6: {'converged' if default.converged else 'no convergence'} "
            f"after {default.outer_iters}, res {default.res:.1e}")
    record(4, ok, f"N={N}: iterations {counts} (band 15-40); {diag}")


# 5 -------------------------------------------------------------------------

def test_criterion_05_mesh_robustness(runs):
    ok = True
    parts = []
    elapsed = 0.0
    for p in PROTOCOLS:
        counts = []
        for lvl in STEP_LEVELS:
            _, rep, N, dt = runs.get(lvl, protocol=p)
            counts.append(rep.outer_iters if rep.converged else None)
            elapsed += dt
        sizes = [runs.get(lvl)[2] for lvl in STEP_LEVELS]
        good = None not in counts
        spread = (max(counts) - min(counts)) / min(counts) if good else float("inf")
        ok &= good and spread <= 0.25 and sizes[-1] >= 10 * sizes[0]
        parts.append(f"{p}: {_fmt(counts)} at N={sizes} (variation {spread:.0%})")
    ok &= elapsed <= 300
    record(5, ok, "; ".join(parts) + f"; {elapsed:.0f} s")


# 6 -------------------------------------------------------------------------

def test_criterion_06_gamma_direction(runs):
    ok = True
    parts = []
    for p in PROTOCOLS:
        lo = [runs.iters(lvl, 1e-4, protocol=p) for lvl in STEP_LEVELS]
        hi = [runs.iters(lvl, 1e-2, protocol=p) for lvl in STEP_LEVELS]
        good = None not in lo + hi and all(h >= l for l, h in zip(lo, hi))
        ok &= good
        parts.append(f"{p}: gamma 1e-4 {_fmt(lo)}, gamma 1e-2 {_fmt(hi)}")
    record(6, ok, "; ".join(parts))


# 7 -------------------------------------------------------------------------

def test_criterion_07_approach_equivalence(runs):
    ok = True
    parts = []
    for lvl in STEP_LEVELS:
        for g in GAMMAS:
            xi, ri, N, _ = runs.get(lvl, g, approach="independent", protocol="true")
            xg, rg, _, _ = runs.get(lvl, g, approach="global", protocol="true")
            diff = np.linalg.norm(xi - xg) / np.linalg.norm(xg)
            same = ri.converged and rg.converged and ri.outer_iters == rg.outer_iters
            ok &= same and diff <= 1e-6
            parts.append(f"N={N} g={g:.0e}: {ri.outer_iters}/{rg.outer_iters}, {diff:.0e}")
    record(7, ok, "; ".join(parts))


# 8 -------------------------------------------------------------------------

def test_criterion_08_direction_symmetry(runs):
    ok = True
    worst = 0
    for p in PROTOCOLS:
        for lvl in STEP_LEVELS:
            for g in GAMMAS:
                cx = runs.iters(lvl, g, "x", protocol=p)
                cy = runs.iters(lvl, g, "y", protocol=p)
                good = cx is not None and cy is not None and abs(cx - cy) <= 3
                ok &= good
                if good:
                    worst = max(worst, abs(cx - cy))
    record(8, ok, f"largest x/y gap {worst} over {2 * len(STEP_LEVELS) * len(GAMMAS)} cases (<= 3)")


# 9 -------------------------------------------------------------------------

def _nonincreasing(h):
    h = np.asarray(h)
    return bool(np.all(h[1:] <= h[:-1] * (1 + 1e-12)))


def test_criterion_09_solver_oracles(runs):
    tol = 1e-8
    bad = {"gmres": 0, "pcg": 0, "global_pcg": 0}
    monotone = True
    for seed in range(25):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(10, 101))

        A = rng.standard_normal((n, n)) / np.sqrt(n) + 3.0 * np.eye(n)
        b = rng.standard_normal(n)
        x, rep = gmres(LinearOperator.from_dense(A), None, b, tol, 500)
        xd = np.linalg.solve(A, b)
        err = np.linalg.norm(x - xd) / np.linalg.norm(xd)
        bad["gmres"] += not (rep.converged and rep.res <= tol and err <= np.linalg.cond(A) * tol)
        monotone &= _nonincreasing(rep.history)

        G = rng.standard_normal((n, n))
        S = G @ G.T / n + 0.1 * np.eye(n)
        kappa = np.linalg.cond(S)
        op = LinearOperator.from_dense(S)
        x, rep = pcg(op, None, b, tol, 1000)
        xd = np.linalg.solve(S, b)
        err = np.linalg.norm(x - xd) / np.linalg.norm(xd)
        bad["pcg"] += not (rep.converged and rep.res <= tol and err <= kappa * tol)

        H = rng.standard_normal((n, 2))
        X, rep = global_pcg(op, None, H, tol, 1000)
        Xd = np.linalg.solve(S, H)
        err = np.linalg.norm(X - Xd) / np.linalg.norm(Xd)
        bad["global_pcg"] += not (rep.converged and rep.res <= tol and err <= kappa * tol)

    stokes_runs = list(runs.cache.values())
    monotone &= all(_nonincreasing(rep.history) for _, rep, _, _ in stokes_runs)
    ok = not any(bad.values()) and monotone
    record(9, ok, f"failures per solver {bad} over 25 instances; GMRES histories nonincreasing in "
                  f"{25 + len(stokes_runs)} runs: {monotone}")


# 10 ------------------------------------------------------------------------

def test_criterion_10_incomplete_cholesky():
    worst = 0.0
    for seed in range(25):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 51))
        S = rng.standard_normal((n, n)) * (rng.random((n, n)) < 0.3)
        S = np.triu(S, 1) + np.triu(S, 1).T
        A = S + np.diag(np.abs(S).sum(axis=1) + rng.uniform(0.1, 2.0, n))
        L = ict_factor(CsrMatrix.from_dense(A), 0.0).L.to_dense()
        worst = max(worst, np.abs(L - np.linalg.cholesky(A)).max() / np.abs(A).max())
    A = CsrMatrix.from_scipy(laplacian_2d(20, shift=0.05))
    b = np.random.default_rng(0).standard_normal(400)
    op = LinearOperator.from_matrix(A)
    _, ic = pcg(op, ict_factor(A, 1e-2).solve, b, 1e-6, 1000)
    _, cg = pcg(op, None, b, 1e-6, 1000)
    ok = worst <= 1e-12 and ic.converged and cg.converged and ic.outer_iters < cg.outer_iters
    record(10, ok, f"max |L - chol| {worst:.1e} (<= 1e-12); n=400 iterations IC {ic.outer_iters} "
                   f"vs CG {cg.outer_iters}")


# 11 ------------------------------------------------------------------------

def test_criterion_11_round_trip(tmp_path_factory):
    worst = 0.0
    count = 0
    for key in [("cavity", 2), ("cavity", 3)] + [("step", lvl) for lvl in (2,) + STEP_LEVELS]:
        for s in (system(*key), to_2x2(system(*key))):
            d = tmp_path_factory.mktemp(f"{key[0]}{key[1]}")
            back = import_system(export_system(s, d))
            rng = np.random.default_rng(count)
            for _ in range(10):
                v = rng.standard_normal(s.N)
                ref = s.matvec(v)
                worst = max(worst, np.linalg.norm(back.matvec(v) - ref) / np.linalg.norm(ref))
            count += 1
    record(11, worst <= 1e-14, f"max probe difference {worst:.1e} over {count} systems (<= 1e-14)")
