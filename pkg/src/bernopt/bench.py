"""Solve drivers, error metrics, convergence sweeps and dense constraint audits."""

from __future__ import annotations

import csv
import io
import json
import math
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import geometry, problems
from .bernstein import BernsteinPoly, basis_matrix, evaluate
from .costate import CostateError, dual_residuals, estimate_to_dict, extract_covectors
from .ocp import MinSeparationFromPoint, MinSeparationPairwise, NormBand, OcpProblem
from .solver import NlpSolution, SolverOptions, solve
from .transcription import TranscribedNlp, TranscriptionOptions, squared_norm_coeffs

__all__ = [
    "AuditEntry",
    "AuditReport",
    "CONVERGENCE_HEADER",
    "ConvergenceRow",
    "audit",
    "audit_files",
    "converge",
    "node_errors",
    "parse_convergence_csv",
    "problem_from_meta",
    "read_convergence_csv",
    "read_solution",
    "run_example",
    "solve_ocp",
    "switch_time",
    "write_convergence_csv",
    "write_solution",
]

CONVERGENCE_HEADER = ["N", "e_y", "e_u", "e_lambda", "objective", "status", "seconds"]
AUDIT_TOL = 1e-3


# -- solving ------------------------------------------------------------------

def solve_ocp(problem: OcpProblem, N: int, options: TranscriptionOptions | None = None,
              solver_options: SolverOptions | None = None) -> tuple[TranscribedNlp, NlpSolution]:
    """Transcribe and solve.

    In certify mode the first phase uses the smooth hull rows only (bound rows
    held as inactive placeholders); the second phase adds the certified bound
    rows and warm-starts from the first.  The row layout is identical, so
    multipliers carry over unchanged.
    """
    options = options or TranscriptionOptions()
    solver_options = solver_options or SolverOptions()
    nlp = TranscribedNlp(problem, N, options)
    if not (options.certify and problem.structured):
        return nlp, solve(nlp, solver_options)
    first = TranscribedNlp(problem, N, replace(options, bound_rows=False))
    s1 = solve(first, solver_options)
    if s1.status == "numerical_failure":
        return nlp, solve(nlp, solver_options)
    s2 = solve(nlp, solver_options, z0=s1.z, mult_eq=s1.mult_eq, mult_ineq=s1.mult_ineq)
    s2.iterations += s1.iterations
    s2.outer_iterations += s1.outer_iterations
    s2.log[:0] = s1.log
    return nlp, s2


# -- metrics ------------------------------------------------------------------

def _log10(v: float) -> float:
    return float(np.log10(max(v, 1e-300)))


def node_errors(nlp: TranscribedNlp, z, reference, lam_nodes=None) -> tuple[float, float, float]:
    """log10 of max node errors of x_N(t_j), u_N(t_j) and the costate (NaN when absent)."""
    t = nlp.node_times(z)
    xb, ub, _ = nlp.unpack(z)
    Bn = basis_matrix(nlp.N, nlp.s_nodes)
    X, U = xb @ Bn.T, ub @ Bn.T
    e_y = _log10(np.max(np.abs(X - np.atleast_2d(reference.y(t)))))
    e_u = _log10(np.max(np.abs(U - np.atleast_2d(reference.u(t)))))
    if reference.lam is None or lam_nodes is None:
        e_l = math.nan
    else:
        e_l = _log10(np.max(np.abs(lam_nodes - np.atleast_2d(reference.lam(t)))))
    return e_y, e_u, e_l


def switch_time(u: BernsteinPoly, level: float = 1.0, component: int = 0, grid: int = 2001,
                tol: float = 1e-12) -> float:
    """First time the control component crosses ``level``, by bisection; NaN if never."""
    a, b = u.domain
    t = np.linspace(a, b, grid)
    v = evaluate(u, t)[component] - level
    idx = np.nonzero(np.sign(v[:-1]) * np.sign(v[1:]) <= 0)[0]
    if idx.size == 0:
        return math.nan
    lo, hi = t[idx[0]], t[idx[0] + 1]
    flo = v[idx[0]]
    if flo == 0.0:
        return float(lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        fm = float(evaluate(u, mid)[component]) - level
        if np.sign(fm) == np.sign(flo):
            lo, flo = mid, fm
        else:
            hi = mid
    return 0.5 * (lo + hi)


# -- convergence sweeps -------------------------------------------------------

@dataclass
class ConvergenceRow:
    N: int
    e_y: float
    e_u: float
    e_lambda: float
    objective: float
    status: str
    seconds: float

    def cells(self) -> list[str]:
        def num(v):
            return "NA" if v is None or not np.isfinite(v) else repr(float(v))
        return [str(self.N), num(self.e_y), num(self.e_u), num(self.e_lambda), num(self.objective),
                self.status, f"{self.seconds:.6f}"]


def converge(problem: OcpProblem, orders: Sequence[int], reference=None,
             options: TranscriptionOptions | None = None,
             solver_options: SolverOptions | None = None) -> list[ConvergenceRow]:
    """One solve per order; errors are NA without a reference."""
    rows = []
    for N in orders:
        t0 = time.perf_counter()
        nlp, sol = solve_ocp(problem, int(N), options, solver_options)
        secs = time.perf_counter() - t0
        e = (math.nan, math.nan, math.nan)
        if reference is not None:
            lam = None
            if sol.converged:
                try:
                    lam = extract_covectors(problem, nlp, sol).lambda_nodes
                except CostateError:
                    lam = None
            e = node_errors(nlp, sol.z, reference, lam)
        rows.append(ConvergenceRow(int(N), *e, float(sol.objective), sol.status, secs))
    return rows


def write_convergence_csv(rows: Sequence[ConvergenceRow], path=None) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CONVERGENCE_HEADER)
    for r in rows:
        w.writerow(r.cells())
    text = buf.getvalue()
    if path is not None:
        Path(path).write_text(text)
    return text


def read_convergence_csv(path) -> list[ConvergenceRow]:
    return parse_convergence_csv(Path(path).read_text())


def parse_convergence_csv(text: str) -> list[ConvergenceRow]:
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != CONVERGENCE_HEADER:
        raise ValueError(f"unexpected header {header}")

    def num(v):
        return math.nan if v == "NA" else float(v)

    return [ConvergenceRow(int(r[0]), num(r[1]), num(r[2]), num(r[3]), num(r[4]), r[5], float(r[6]))
            for r in reader if r]


# -- audit --------------------------------------------------------------------

@dataclass
class AuditEntry:
    name: str
    min_margin: float  # sampled; negative means violated
    certified_margin: Optional[float] = None  # from the certified geometric bound
    passed: bool = True


@dataclass
class AuditReport:
    grid: int
    tolerance: float
    geometry_tol: float
    entries: list[AuditEntry] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(e.passed for e in self.entries)

    def entry(self, name: str) -> AuditEntry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    def to_dict(self) -> dict:
        return {"grid": self.grid, "tolerance": self.tolerance, "geometry_tol": self.geometry_tol,
                "passed": self.passed, "entries": [asdict(e) for e in self.entries]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def audit(problem: OcpProblem, x: BernsteinPoly, u: BernsteinPoly, grid: int = 10000,
          tol: float = AUDIT_TOL, certify: bool = False, geometry_tol: float = 1e-6) -> AuditReport:
    """Margins of every path and structured constraint on a dense uniform grid."""
    t = np.linspace(x.domain[0], x.domain[1], grid)
    X, U = evaluate(x, t), evaluate(u, t)
    rep = AuditReport(grid, tol, geometry_tol)
    xu = BernsteinPoly(x.coeffs, (0.0, 1.0))
    uu = BernsteinPoly(u.coeffs, (0.0, 1.0))
    if problem.n_h:
        H = np.asarray(problem.h(X, U), float)
        for i in range(problem.n_h):
            m = float(-H[i].max())
            rep.entries.append(AuditEntry(f"path{i}", m, None, m >= -tol))
    for ci, c in enumerate(problem.structured):
        if isinstance(c, MinSeparationFromPoint):
            idx = list(c.indices)
            d = np.linalg.norm(X[idx] - np.asarray(c.point)[:, None], axis=0).min()
            cert = None
            if certify:
                res = geometry.curve_point_distance(BernsteinPoly(xu.coeffs[idx], (0, 1)), np.asarray(c.point), geometry_tol)
                cert = float(res.lower - c.clearance)
            m = float(d - c.clearance)
            rep.entries.append(AuditEntry(f"sep{ci}", m, cert, m >= -tol))
        elif isinstance(c, MinSeparationPairwise):
            ia, ib = list(c.indices_a), list(c.indices_b)
            pa = BernsteinPoly(xu.coeffs[ia], (0, 1))
            pb = BernsteinPoly(xu.coeffs[ib], (0, 1))
            if c.mode == "temporal":
                d = np.linalg.norm(X[ia] - X[ib], axis=0).min()
                res = geometry.curve_point_distance(
                    BernsteinPoly(pa.coeffs - pb.coeffs, (0, 1)), np.zeros(len(ia)), geometry_tol) if certify else None
            else:
                # all pairs on a coarser grid keeps memory bounded
                k = min(grid, 2000)
                s = np.linspace(x.domain[0], x.domain[1], k)
                A, Bv = evaluate(x, s)[ia], evaluate(x, s)[ib]
                d = np.sqrt(((A[:, :, None] - Bv[:, None, :]) ** 2).sum(axis=0)).min()
                res = geometry.curve_min_distance(pa, pb, geometry_tol) if certify else None
            m = float(d - c.clearance)
            cert = None if res is None else float(res.lower - c.clearance)
            rep.entries.append(AuditEntry(f"sep{ci}", m, cert, m >= -tol))
        elif isinstance(c, NormBand):
            idx = list(c.indices)
            nrm = np.linalg.norm(U[idx], axis=0)
            lo, hi = float(nrm.min() - c.lower), float(c.upper - nrm.max())
            clo = chi = None
            if certify:
                R = uu.coeffs[idx]
                ext = geometry.scalar_extrema(BernsteinPoly(squared_norm_coeffs(R), (0, 1)), geometry_tol)
                clo = float(math.sqrt(max(ext.min_lower, 0.0)) - c.lower)
                chi = float(c.upper - math.sqrt(max(ext.max_upper, 0.0)))
            rep.entries.append(AuditEntry(f"band{ci}_lo", lo, clo, lo >= -tol))
            rep.entries.append(AuditEntry(f"band{ci}_hi", hi, chi, hi >= -tol))
    return rep


# -- solution files -----------------------------------------------------------

def _csv_table(header: list[str], rows: np.ndarray) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(float(v)) for v in r])
    return buf.getvalue()


def _read_table(path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        data = [[float(v) for v in r] for r in reader if r]
    return header, np.array(data, dtype=float).reshape(-1, len(header))


def write_solution(out: Path, stem: str, problem: OcpProblem, nlp: TranscribedNlp, sol: NlpSolution,
                   meta: dict, estimate=None) -> dict:
    """Write node table, coefficient table and a JSON summary; returns the paths."""
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    xb, ub, _ = nlp.unpack(sol.z)
    t = nlp.node_times(sol.z)
    Bn = basis_matrix(nlp.N, nlp.s_nodes)
    X, U = xb @ Bn.T, ub @ Bn.T
    xs = [f"x{i}" for i in range(problem.n_x)]
    us = [f"u{i}" for i in range(problem.n_u)]
    ls = [f"lambda{i}" for i in range(problem.n_x)]
    cols = [t[:, None], X.T, U.T]
    header = ["t"] + xs + us
    if estimate is not None:
        cols.append(estimate.lambda_nodes.T)
        header += ls
    paths = {
        "nodes": out / f"{stem}_nodes.csv",
        "coefficients": out / f"{stem}_coefficients.csv",
        "summary": out / f"{stem}_solution.json",
    }
    paths["nodes"].write_text(_csv_table(header, np.hstack(cols)))
    coef = np.hstack([np.arange(nlp.N + 1)[:, None], xb.T, ub.T])
    paths["coefficients"].write_text(_csv_table(["j"] + xs + us, coef))
    summary = dict(meta)
    summary.update({
        "N": nlp.N,
        "t0": float(t[0]),
        "tf": float(t[-1]),
        "status": sol.status,
        "objective": float(sol.objective),
        "iterations": sol.iterations,
        "outer_iterations": sol.outer_iterations,
        "stationarity": float(sol.stationarity_inf_norm),
        "feasibility": float(sol.feasibility_inf_norm),
        "complementarity": float(sol.complementarity_inf_norm),
        "files": {k: v.name for k, v in paths.items()},
    })
    if estimate is not None:
        summary["costate"] = estimate_to_dict(estimate)
    paths["summary"].write_text(json.dumps(summary, indent=2, allow_nan=True) + "\n")
    return paths


def read_solution(summary_path) -> tuple[dict, BernsteinPoly, BernsteinPoly]:
    """Load a JSON summary and its coefficient table as state and control polynomials."""
    summary_path = Path(summary_path)
    try:
        meta = json.loads(summary_path.read_text())
        header, data = _read_table(summary_path.parent / meta["files"]["coefficients"])
    except (OSError, KeyError, ValueError, StopIteration) as exc:
        raise ValueError(f"malformed solution files at {summary_path}: {exc}") from exc
    xs = [i for i, h in enumerate(header) if h.startswith("x")]
    us = [i for i, h in enumerate(header) if h.startswith("u")]
    dom = (float(meta["t0"]), float(meta["tf"]))
    if data.shape[0] != meta["N"] + 1 or not xs:
        raise ValueError(f"malformed coefficient table for N={meta['N']}")
    return meta, BernsteinPoly(data[:, xs].T, dom), BernsteinPoly(data[:, us].T, dom)


def problem_from_meta(meta: dict) -> OcpProblem:
    if "config" in meta:
        return problems.from_config(meta["config"])
    variant = dict(meta.get("variant", {}))
    return problems.builtin_example(int(meta["example"]), **variant)


def audit_files(summary_path, grid: int = 10000, tol: float = AUDIT_TOL) -> AuditReport:
    meta, x, u = read_solution(summary_path)
    problem = problem_from_meta(meta)
    return audit(problem, x, u, grid, tol, certify=bool(meta.get("certify", False)),
                 geometry_tol=float(meta.get("geometry_tol", 1e-6)))


# -- examples -----------------------------------------------------------------

def _reference_for(example: int):
    if example == 1:
        return problems.example1_reference()
    if example == 2:
        return problems.example2_reference()
    return None


def run_example(example: int, N: int, out=None, certify: bool = False, delta_mode: str = "exact",
                c_p: float = 1.0, c_d: float = 1.0, grid: int = 10000, fleet: int = 3,
                solver_options: SolverOptions | None = None) -> dict:
    """Solve one built-in example, audit it and optionally write the solution files.

    Returns a dict with ``nlp``, ``solution``, ``audit``, ``summary`` and ``paths``.
    """
    if example not in (1, 2, 3, 4):
        raise ValueError(f"unknown example {example}")
    variant = {"fleet": fleet} if example == 4 else {}
    problem = problems.builtin_example(example, **variant)
    opts = TranscriptionOptions(delta_mode=delta_mode, c_p=c_p, certify=certify)
    t0 = time.perf_counter()
    nlp, sol = solve_ocp(problem, N, opts, solver_options)
    seconds = time.perf_counter() - t0
    est = dual = None
    if sol.converged:
        try:
            est = extract_covectors(problem, nlp, sol)
            dual = dual_residuals(problem, nlp, sol, est, c_d)
        except CostateError:
            est = None
    x, u = nlp.state_poly(sol.z), nlp.control_poly(sol.z)
    rep = audit(problem, x, u, grid, certify=certify, geometry_tol=opts.geometry_tol)
    meta = {"example": example, "variant": variant, "certify": certify, "delta_mode": delta_mode,
            "c_p": c_p, "c_d": c_d, "geometry_tol": opts.geometry_tol, "seconds": seconds}
    ref = _reference_for(example)
    if ref is not None:
        e = node_errors(nlp, sol.z, ref, None if est is None else est.lambda_nodes)
        meta["errors"] = {"e_y": e[0], "e_u": e[1], "e_lambda": e[2]}
    if example == 2:
        meta["switch_time"] = switch_time(u, 1.0)
    if dual is not None:
        meta["dual"] = {"stationarity_max": dual.stationarity_max,
                        "continuous_stationarity_max": dual.continuous_stationarity_max,
                        "closure": list(dual.closure), "ratios": dual.ratios}
    meta["audit_passed"] = rep.passed
    paths = {}
    if out is not None:
        stem = f"example{example}_N{N}" + ("_certified" if certify else "")
        paths = write_solution(Path(out), stem, problem, nlp, sol, meta, est)
        paths["audit"] = Path(out) / f"{stem}_audit.json"
        paths["audit"].write_text(rep.to_json() + "\n")
        if dual is not None:
            paths["dual"] = Path(out) / f"{stem}_dual.json"
            paths["dual"].write_text(dual.to_json() + "\n")
        paths["log"] = Path(out) / f"{stem}_solver.log"
        paths["log"].write_text("\n".join(sol.log) + "\n")
    return {"problem": problem, "nlp": nlp, "solution": sol, "audit": rep, "summary": meta,
            "paths": paths, "estimate": est, "dual": dual}
