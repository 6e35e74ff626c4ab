"""``bench`` command line: sweeps, system export and spectrum checks."""
from __future__ import annotations

import argparse
import logging
import sys

from .alprec import AugParams
from .bench import ExperimentSpec, emit, load_problem, run
from .errors import AlStokesError
from .manifest import export_system
from .spectra import eigenvalues_csv, verify_theorem
from .stokes import to_2x2


def _add_problem(p, *, many_levels):
    p.add_argument("--problem", default="step",
                   help="step, cavity, or the path of an exported system manifest (default: step)")
    if many_levels:
        p.add_argument("--level", type=int, nargs="+", default=[3], help="refinement levels (default: 3)")
    else:
        p.add_argument("--level", type=int, default=2, help="refinement level (default: 2)")
    p.add_argument("--q", choices=["identity", "mass"], default="mass", help="diagonal Q (default: mass)")
    p.add_argument("--out", help="output file or directory (default: standard output)")


def build_parser():
    parser = argparse.ArgumentParser(
        prog="bench",
        description="Augmented Lagrangian preconditioned GMRES for Stokes saddle-point systems.",
    )
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a parameter sweep and print a result table")
    _add_problem(r, many_levels=True)
    r.add_argument("--gamma", type=float, nargs="+", default=[1e-4, 1e-2])
    r.add_argument("--alpha", type=float, nargs="+", default=[10.0])
    r.add_argument("--strategy", choices=["2x2", "3x3"], nargs="+", default=["3x3"])
    r.add_argument("--direction", choices=["x", "y"], nargs="+", default=["x"])
    r.add_argument("--approach", choices=["independent", "global"], nargs="+",
                   default=["independent", "global"])
    r.add_argument("--tol", type=float, default=1e-7, help="outer GMRES tolerance (default: 1e-7)")
    r.add_argument("--maxit", type=int, default=500, help="outer GMRES iteration cap (default: 500)")
    r.add_argument("--seed", type=int, default=1, help="seed of the manufactured solution (default: 1)")
    r.add_argument("--inner-tol", type=float, default=1e-6, help="inner PCG tolerance (default: 1e-6)")
    r.add_argument("--inner-maxit", type=int, default=100)
    r.add_argument("--stop", choices=["true", "preconditioned"], default="true",
                   help="residual the GMRES stopping test uses (default: true)")
    r.add_argument("--augmentation", choices=["coupled", "block-diagonal"], default="coupled")
    r.add_argument("--format", choices=["md", "csv"], default="md")

    e = sub.add_parser("export-system", help="write an assembled system as Matrix Market files")
    _add_problem(e, many_levels=False)
    e.add_argument("--strategy", choices=["2x2", "3x3"], default="3x3")
    e.add_argument("--general", action="store_true", help="store the leading block unsymmetrically")

    v = sub.add_parser("verify-spectrum", help="dense eigenvalue checks of the 2x2 preconditioned operator")
    _add_problem(v, many_levels=False)
    v.set_defaults(problem="cavity")
    v.add_argument("--gamma", type=float, default=1e-4)
    v.add_argument("--alpha", type=float, default=10.0)
    v.add_argument("--format", choices=["md", "csv"], default="md",
                   help="md prints the checks, csv prints the eigenvalues")
    return parser


def _write(text, out):
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _cmd_run(args):
    spec = ExperimentSpec(
        problem=args.problem,
        levels=tuple(args.level),
        gammas=tuple(args.gamma),
        alphas=tuple(args.alpha),
        strategies=tuple(args.strategy),
        directions=tuple(args.direction),
        approaches=tuple(args.approach),
        tol=args.tol,
        maxit=args.maxit,
        seed=args.seed,
        q_choice=args.q,
        inner_tol=args.inner_tol,
        inner_maxit=args.inner_maxit,
        stop=args.stop,
        augmentation=args.augmentation,
    )
    table = run(spec)
    _write(emit(table, args.format), args.out)
    return 0 if table.all_converged else 1


def _cmd_export(args):
    if not args.out:
        raise SystemExit("export-system needs --out DIRECTORY")
    system = load_problem(args.problem, args.level)
    if args.strategy == "2x2":
        system = to_2x2(system)
    path = export_system(system, args.out, symmetric=not args.general)
    print(path)
    return 0


def _cmd_spectrum(args):
    system = load_problem(args.problem, args.level)
    params = AugParams(gamma=args.gamma, alpha=args.alpha, q_choice=args.q)
    rep = verify_theorem(system, params)
    checks = {
        "real": rep.real,
        "positive": rep.positive,
        "distinct_count <= n_p + 1": rep.distinct_ok,
        "unit cluster >= n_u - n_p": rep.unit_cluster_ok,
        "bounds hold": rep.bounds_hold,
        "quadratic residual <= 1e-6": rep.max_quadratic_residual <= 1e-6,
    }
    if args.format == "csv":
        _write(eigenvalues_csv(rep.eigenvalues), args.out)
    else:
        lines = ["| check | value |", "|---|---|"]
        lines += [f"| {k} | {v} |" for k, v in rep.summary().items()]
        lines += ["", "| claim | holds |", "|---|---|"]
        lines += [f"| {k} | {'yes' if ok else 'no'} |" for k, ok in checks.items()]
        _write("\n".join(lines) + "\n", args.out)
    return 0 if all(checks.values()) else 1


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    handlers = {"run": _cmd_run, "export-system": _cmd_export, "verify-spectrum": _cmd_spectrum}
    try:
        return handlers[args.command](args)
    except AlStokesError as exc:
        print(f"bench: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
