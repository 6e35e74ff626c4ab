"""Parameter sweeps over Stokes solves and their Markdown / CSV reports."""
from __future__ import annotations

import csv
import io
import itertools
import logging
import math
import time
from dataclasses import dataclass, field, fields
from typing import Optional

from .alprec import Approach, AugParams, Augmentation, Direction, Strategy, solve_stokes
from .errors import AlStokesError
from .manifest import import_system
from .stokes import Domain, Grid, QChoice, assemble, manufacture_rhs

log = logging.getLogger(__name__)

__all__ = ["ExperimentSpec", "ResultRow", "ResultTable", "run", "emit", "parse_csv", "load_problem"]

BUILTIN = tuple(d.value for d in Domain)


@dataclass(frozen=True)
class ExperimentSpec:
    """A sweep: every level crossed with every solver configuration.

    ``problem`` is ``"step"``, ``"cavity"`` or the path of an exported
    system manifest (``levels`` is then ignored). Directions and approaches
    only apply to the 3x3 strategy.
    """

    problem: str = "step"
    levels: tuple = (3,)
    gammas: tuple = (1e-4, 1e-2)
    alphas: tuple = (10.0,)
    strategies: tuple = (Strategy.THREE_BY_THREE,)
    directions: tuple = (Direction.X,)
    approaches: tuple = (Approach.INDEPENDENT, Approach.GLOBAL)
    tol: float = 1e-7
    maxit: int = 500
    seed: int = 1
    q_choice: QChoice = QChoice.MASS
    inner_tol: float = 1e-6
    inner_maxit: int = 100
    stop: str = "true"
    augmentation: Augmentation = Augmentation.COUPLED

    def __post_init__(self):
        conv = {
            "levels": int,
            "gammas": float,
            "alphas": float,
            "strategies": Strategy,
            "directions": Direction,
            "approaches": Approach,
        }
        for name, f in conv.items():
            vals = getattr(self, name)
            if isinstance(vals, (str, int, float, bytes)):
                vals = (vals,)
            vals = tuple(f(v) for v in vals)
            if not vals:
                raise ValueError(f"{name} must not be empty")
            object.__setattr__(self, name, vals)
        object.__setattr__(self, "q_choice", QChoice(self.q_choice))
        object.__setattr__(self, "augmentation", Augmentation(self.augmentation))
        if not 0 < self.tol < 1:
            raise ValueError(f"tol must lie in (0, 1), got {self.tol}")
        if self.maxit < 1:
            raise ValueError("maxit must be positive")
        if self.stop not in ("true", "preconditioned"):
            raise ValueError(f"stop must be 'true' or 'preconditioned', got {self.stop!r}")

    @property
    def is_builtin(self):
        return self.problem in BUILTIN

    def instances(self):
        return [(self.problem, lvl) for lvl in self.levels] if self.is_builtin else [(self.problem, None)]

    def configurations(self):
        """``(strategy, gamma, alpha, direction, approach)`` in report order."""
        out = []
        for g, a in itertools.product(self.gammas, self.alphas):
            for s in self.strategies:
                if s is Strategy.TWO_BY_TWO:
                    out.append((s, g, a, None, None))
                else:
                    out.extend((s, g, a, d, ap) for d, ap in itertools.product(self.directions, self.approaches))
        return out

    def params(self, gamma, alpha, direction, approach):
        return AugParams(
            gamma=gamma,
            alpha=alpha,
            direction=direction or Direction.X,
            approach=approach or Approach.GLOBAL,
            q_choice=self.q_choice,
            inner_tol=self.inner_tol,
            inner_maxit=self.inner_maxit,
            augmentation=self.augmentation,
        )


@dataclass
class ResultRow:
    problem: str
    level: Optional[int]
    N: Optional[int]
    strategy: str
    tag: str
    direction: str
    approach: str
    gamma: float
    alpha: float
    iters: Optional[int]
    cpu: Optional[float]
    err: Optional[float]
    res: Optional[float]
    iter_pcg_mean: Optional[float]
    iter_pcg_max: Optional[int]
    iter_pcg_total: Optional[int]
    inner_solves: Optional[int]
    converged: bool
    seed: int
    error: str = ""


_INT = {"level", "N", "iters", "iter_pcg_max", "iter_pcg_total", "inner_solves", "seed"}
_FLOAT = {"gamma", "alpha", "cpu", "err", "res", "iter_pcg_mean"}
COLUMNS = [f.name for f in fields(ResultRow)]


@dataclass
class ResultTable:
    rows: list = field(default_factory=list)
    spec: Optional[ExperimentSpec] = None

    def __len__(self):
        return len(self.rows)

    def __iter__(self):
        return iter(self.rows)

    @property
    def all_converged(self):
        return all(r.converged for r in self.rows)


def load_problem(problem, level):
    if problem in BUILTIN:
        return assemble(Grid.build(problem, level))
    return import_system(problem)


def _tag(strategy, direction, approach):
    if strategy is Strategy.TWO_BY_TWO:
        return "P_2x2"
    return AugParams(direction=direction, approach=approach).tag(strategy)


def _error_row(spec, problem, level, cfg, msg, N=None):
    s, g, a, d, ap = cfg
    return ResultRow(
        problem, level, N, s.value, _tag(s, d, ap), d.value if d else "", ap.value if ap else "",
        g, a, None, None, None, None, None, None, None, None, False, spec.seed, msg,
    )


def run(spec: ExperimentSpec) -> ResultTable:
    """Run every configuration of ``spec``; failures become rows.

    The CPU column times the solve call only (augmentation, factorization
    and GMRES), not assembly or loading.
    """
    table = ResultTable(spec=spec)
    cfgs = spec.configurations()
    for problem, level in spec.instances():
        try:
            sys = load_problem(problem, level)
        except (AlStokesError, OSError, ValueError) as exc:
            log.warning("cannot load %s level %s: %s", problem, level, exc)
            table.rows.extend(_error_row(spec, problem, level, c, f"load: {exc}") for c in cfgs)
            continue
        rhs, x_star = manufacture_rhs(sys, spec.seed)
        for cfg in cfgs:
            s, g, a, d, ap = cfg
            try:
                params = spec.params(g, a, d, ap)
                t0 = time.perf_counter()
                _, rep = solve_stokes(sys, params, s, spec.tol, spec.maxit, rhs=rhs, x_star=x_star,
                                      stop=spec.stop)
                cpu = time.perf_counter() - t0
            except (AlStokesError, ValueError, ArithmeticError) as exc:
                log.warning("solve failed for %s: %s", cfg, exc)
                table.rows.append(_error_row(spec, problem, level, cfg, str(exc), sys.N))
                continue
            table.rows.append(ResultRow(
                problem, level, sys.N, s.value, _tag(s, d, ap), d.value if d else "",
                ap.value if ap else "", g, a, rep.outer_iters, cpu, rep.err, rep.res,
                rep.inner_iters_mean, rep.inner_iters_max, rep.inner_iters_total,
                rep.inner_solves, bool(rep.converged), spec.seed,
            ))
    return table


# -- emission ---------------------------------------------------------------

def _csv_cell(v):
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _emit_csv(table):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for r in table.rows:
        w.writerow([_csv_cell(getattr(r, c)) for c in COLUMNS])
    return buf.getvalue()


def parse_csv(text) -> ResultTable:
    """Inverse of CSV emission; numeric fields come back bit-identical."""
    rows = []
    for rec in csv.DictReader(io.StringIO(text)):
        kw = {}
        for c in COLUMNS:
            v = rec[c]
            if c == "converged":
                kw[c] = v == "true"
            elif c in _INT:
                kw[c] = int(v) if v != "" else None
            elif c in _FLOAT:
                kw[c] = float(v) if v != "" else None
            else:
                kw[c] = v
        rows.append(ResultRow(**kw))
    return ResultTable(rows)


def _sci(v, digits=2):
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "-"
    return f"{v:.{digits}e}"


def _panel_cells(r):
    if r is None:
        return ["", "", "", ""]
    if r.error and r.iters is None:
        return ["failed", "-", "-", "-"]
    mark = "" if r.converged else "*"
    it = f"{r.iters}{mark}({r.cpu:.2f})"
    per_solve = r.iter_pcg_total / r.inner_solves if r.inner_solves else 0.0
    pcg = f"{per_solve:.1f}/{r.iter_pcg_max}"
    return [it, _sci(r.err), _sci(r.res), pcg]


# Iter_pcg is shown per inner solve (mean/max); the CSV also has the
# per-application mean and the total
_PANEL_HEAD = ["Iter (CPU)", "Err", "Res", "Iter_pcg mean/max"]


def _md_table(panels, sizes, lookup):
    head = ["Size"]
    for tag in panels:
        head += [f"{tag} {h}" for h in _PANEL_HEAD]
    lines = ["| " + " | ".join(head) + " |", "|" + "---|" * len(head)]
    for N in sizes:
        cells = [str(N) if N is not None else "-"]
        for tag in panels:
            cells += _panel_cells(lookup.get((N, tag)))
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def _emit_md(table):
    if not table.rows:
        return "\n".join(_md_table(["Independent", "Global"], [], {})) + "\n"
    out = []
    groups = {}
    for r in table.rows:
        groups.setdefault((r.problem, r.gamma, r.alpha), []).append(r)
    for (problem, g, a), rows in groups.items():
        out.append(f"### {problem}: gamma = {g:.0e}, alpha = {a:.0e}")
        out.append("")
        tags = list(dict.fromkeys(r.tag for r in rows))
        sizes = list(dict.fromkeys(r.N for r in rows))
        lookup = {(r.N, r.tag): r for r in rows}
        # two panels per table, as in side-by-side approach comparisons
        for i in range(0, len(tags), 2):
            out.extend(_md_table(tags[i : i + 2], sizes, lookup))
            out.append("")
        notes = [f"- {r.tag} at N={r.N}: {r.error}" for r in rows if r.error]
        if any(not r.converged and r.iters is not None for r in rows):
            notes.append("- `*` marks runs that did not converge within maxit")
        if notes:
            out.extend(notes + [""])
    return "\n".join(out)


def emit(table: ResultTable, fmt="md") -> str:
    """Render as ``"md"`` (side-by-side panels per parameter pair) or ``"csv"``."""
    if fmt in ("md", "markdown"):
        return _emit_md(table)
    if fmt == "csv":
        return _emit_csv(table)
    raise ValueError(f"unknown format {fmt!r}")
