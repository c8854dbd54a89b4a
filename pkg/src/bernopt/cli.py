"""Command-line interface: ``bernopt {example,converge,audit,distance,basis}``.

Exit codes: 0 success, 2 solver failure, 3 audit failure, 64 usage error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from . import geometry, problems
from .bench import audit_files, converge, run_example, write_convergence_csv
from .bernstein import BernsteinPoly, basis_matrix
from .transcription import TranscriptionOptions

EXIT_OK, EXIT_SOLVER, EXIT_AUDIT, EXIT_USAGE = 0, 2, 3, 64


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def parse_orders(spec: str) -> list[int]:
    """``a:b:step`` (inclusive) or a comma list."""
    try:
        if ":" in spec:
            parts = [int(v) for v in spec.split(":")]
            if len(parts) == 2:
                parts.append(1)
            a, b, step = parts
            if step <= 0 or a < 1 or b < a:
                raise ValueError
            return list(range(a, b + 1, step))
        out = [int(v) for v in spec.split(",") if v]
        if not out or min(out) < 1:
            raise ValueError
        return out
    except ValueError:
        raise argparse.ArgumentTypeError(f"invalid order list {spec!r}; use a:b:step or a,b,c") from None


def _positive_int(v: str) -> int:
    try:
        k = int(v)
    except ValueError:
        raise argparse.ArgumentTypeError(f"not an integer: {v!r}") from None
    if k < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return k


def _common(p: argparse.ArgumentParser):
    p.add_argument("--certify", action="store_true", help="add certified whole-interval constraint rows")
    p.add_argument("--delta-mode", choices=["exact", "corollary", "custom"], default="exact")
    p.add_argument("--cp", type=float, default=1.0, help="C_P of the primal relaxation schedule")
    p.add_argument("--cd", type=float, default=1.0, help="C_D of the dual residual schedule")
    p.add_argument("--out", type=Path, default=None, help="output directory")
    p.add_argument("--grid", type=_positive_int, default=10000, help="dense audit grid size")
    p.add_argument("--fleet", type=_positive_int, default=3, help="vehicles in example 4 (2..11)")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="bernopt", description="Bernstein direct transcription for optimal control")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    ex = sub.add_parser("example", help="solve a built-in example, write tables and an audit report")
    ex.add_argument("id", type=int, choices=[1, 2, 3, 4])
    ex.add_argument("-N", "--order", type=_positive_int, default=None)
    _common(ex)

    cv = sub.add_parser("converge", help="sweep orders and write the convergence CSV")
    cv.add_argument("--example", default="1", choices=["1", "2", "3", "4", "smooth", "lq"])
    cv.add_argument("--orders", type=parse_orders, default=None)
    _common(cv)

    au = sub.add_parser("audit", help="dense-grid audit of a written solution")
    au.add_argument("solution", type=Path, help="*_solution.json written by 'example'")
    au.add_argument("--grid", type=_positive_int, default=10000)
    au.add_argument("--tol", type=float, default=1e-3)
    au.add_argument("--out", type=Path, default=None)

    di = sub.add_parser("distance", help="certified minimum distance between coefficient files")
    di.add_argument("curve", type=Path, help="CSV of control points, one per row, one-line header")
    di.add_argument("other", type=Path, nargs="?", default=None, help="second curve (omit with --point)")
    di.add_argument("--point", type=str, default=None, help="comma-separated point")
    di.add_argument("--columns", type=str, default=None, help="comma-separated column names to use")
    di.add_argument("--tol", type=float, default=1e-6)

    ba = sub.add_parser("basis", help="print Bernstein basis values as CSV")
    ba.add_argument("-N", "--order", type=_positive_int, required=True)
    ba.add_argument("--grid", type=_positive_int, default=11)
    return ap


DEFAULT_ORDER = {1: 40, 2: 30, 3: 5, 4: 8}
DEFAULT_SWEEP = {"1": "5:60:5", "2": "10,15,30,55", "3": "3:8:1", "4": "4:8:2", "smooth": "10,20,40", "lq": "5,10,20"}


def _cmd_example(args) -> int:
    N = args.order or DEFAULT_ORDER[args.id]
    try:
        res = run_example(args.id, N, out=args.out, certify=args.certify, delta_mode=args.delta_mode,
                          c_p=args.cp, c_d=args.cd, grid=args.grid, fleet=args.fleet)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    sol, rep = res["solution"], res["audit"]
    summary = {k: v for k, v in res["summary"].items() if k != "variant"}
    summary.update(status=sol.status, objective=float(sol.objective), N=N,
                   files={k: str(v) for k, v in res["paths"].items()})
    print(json.dumps(summary, indent=2, default=float))
    if not sol.converged:
        print(f"solver failure: {sol.status}", file=sys.stderr)
        return EXIT_SOLVER
    if not rep.passed:
        bad = [e.name for e in rep.entries if not e.passed]
        print(f"audit failure: {', '.join(bad)}", file=sys.stderr)
        return EXIT_AUDIT
    return EXIT_OK


def _sweep_problem(key: str, fleet: int):
    if key == "smooth":
        return problems.smooth_toy()
    if key == "lq":
        return problems.lq_toy()
    ex = int(key)
    p = problems.builtin_example(ex, **({"fleet": fleet} if ex == 4 else {}))
    ref = {1: problems.example1_reference, 2: problems.example2_reference}.get(ex)
    return p, (ref() if ref else None)


def _cmd_converge(args) -> int:
    problem, ref = _sweep_problem(args.example, args.fleet)
    orders = args.orders or parse_orders(DEFAULT_SWEEP[args.example])
    opts = TranscriptionOptions(delta_mode=args.delta_mode, c_p=args.cp, certify=args.certify)
    rows = converge(problem, orders, ref, opts)
    path = None
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        path = args.out / f"converge_{args.example}.csv"
    sys.stdout.write(write_convergence_csv(rows, path))
    return EXIT_OK


def _cmd_audit(args) -> int:
    try:
        rep = audit_files(args.solution, args.grid, args.tol)
    except (ValueError, OSError) as exc:
        raise UsageError(str(exc)) from exc
    text = rep.to_json()
    if args.out is not None:
        args.out.mkdir(parents=True, exist_ok=True)
        (args.out / (args.solution.stem.replace("_solution", "") + "_audit.json")).write_text(text + "\n")
    print(text)
    return EXIT_OK if rep.passed else EXIT_AUDIT


def read_control_points(path: Path, columns: str | None = None) -> np.ndarray:
    """Control points from a CSV with a one-line header; returns ``(dim, N+1)``."""
    try:
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            header = [h.strip() for h in next(reader)]
            rows = [[float(v) for v in r] for r in reader if r]
    except (OSError, StopIteration, ValueError) as exc:
        raise UsageError(f"cannot read control points from {path}: {exc}") from exc
    if columns:
        names = [c.strip() for c in columns.split(",")]
        missing = [c for c in names if c not in header]
        if missing:
            raise UsageError(f"{path}: no columns {missing}")
        keep = [header.index(c) for c in names]
    else:
        keep = [i for i, h in enumerate(header) if h != "j"]
    if not rows:
        raise UsageError(f"{path}: no control points")
    return np.asarray(rows, float)[:, keep].T


def _cmd_distance(args) -> int:
    p = BernsteinPoly(read_control_points(args.curve, args.columns), (0.0, 1.0))
    if (args.other is None) == (args.point is None):
        raise UsageError("give either a second curve or --point")
    if args.point is not None:
        try:
            pt = np.array([float(v) for v in args.point.split(",")])
        except ValueError as exc:
            raise UsageError(f"bad point {args.point!r}") from exc
        if pt.size != p.dim:
            raise UsageError(f"point has dimension {pt.size}, curve has {p.dim}")
        res = geometry.curve_point_distance(p, pt, args.tol)
    else:
        q = BernsteinPoly(read_control_points(args.other, args.columns), (0.0, 1.0))
        if q.dim != p.dim:
            raise UsageError("curves have different dimensions")
        res = geometry.curve_min_distance(p, q, args.tol)
    out = {"lower": res.lower, "upper": res.upper, "params": list(map(float, res.params)),
           "iterations": res.iterations,
           "points": [None if v is None else np.asarray(v, float).tolist() for v in res.points]}
    print(json.dumps(out, indent=2))
    return EXIT_OK


def _cmd_basis(args) -> int:
    s = np.linspace(0.0, 1.0, args.grid)
    B = basis_matrix(args.order, s)
    w = csv.writer(sys.stdout, lineterminator="\n")
    w.writerow(["s"] + [f"b{j}" for j in range(args.order + 1)])
    for si, row in zip(s, B):
        w.writerow([repr(float(si))] + [repr(float(v)) for v in row])
    return EXIT_OK


COMMANDS = {"example": _cmd_example, "converge": _cmd_converge, "audit": _cmd_audit,
            "distance": _cmd_distance, "basis": _cmd_basis}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"bernopt: error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
