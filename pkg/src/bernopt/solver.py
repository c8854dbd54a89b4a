"""Augmented Lagrangian (PHR) solver for dense, smooth NLPs.

Problem form::

    min f(z)   s.t.   c_eq(z) = 0,   c_ineq(z) <= 0

Multiplier convention: ``L = f + lam^T c_eq + mu^T c_ineq`` with ``mu >= 0``.

Any object exposing ``n``, ``initial_point()``, ``objective``,
``objective_grad``, ``eq``, ``eq_jac``, ``ineq`` and ``ineq_jac`` can be
solved; :class:`FunctionNlp` wraps plain callables.
"""

from __future__ import annotations

import dataclasses
import logging
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional

import numpy as np

from .geometry import GeometryError

__all__ = [
    "FunctionNlp",
    "NlpSolution",
    "SolverOptions",
    "gradient",
    "jacobian_fd",
    "kkt_residual_norms",
    "solve",
]

log = logging.getLogger(__name__)

FD_STEP = np.cbrt(np.finfo(float).eps)
# trial points that raise one of these are rejected by the line search
EVAL_ERRORS = (ArithmeticError, ValueError, GeometryError, np.linalg.LinAlgError)


@dataclass(frozen=True)
class SolverOptions:
    stationarity_tol: float = 1e-6
    feasibility_tol: float = 1e-8
    complementarity_tol: float = 1e-6
    rho_init: float = 10.0
    rho_growth: float = 10.0
    feasibility_improvement: float = 0.25
    rho_max: float = 1e12
    max_outer: int = 50
    max_inner: int = 500
    inner_tol_init: float = 1e-2
    armijo: float = 1e-4
    backtrack: float = 0.5
    verbose: bool = False

    @classmethod
    def from_mapping(cls, mapping: Mapping) -> "SolverOptions":
        """Build from a flat key-value mapping; unknown keys are an error."""
        known = {f.name: f for f in dataclasses.fields(cls)}
        unknown = sorted(set(mapping) - set(known))
        if unknown:
            raise KeyError(f"unknown solver option(s): {', '.join(unknown)}")
        kw = {}
        for k, v in mapping.items():
            typ = type(known[k].default)
            if typ is bool and isinstance(v, str):
                kw[k] = v.strip().lower() in ("1", "true", "yes", "on")
            else:
                kw[k] = typ(v)
        return cls(**kw)


@dataclass
class NlpSolution:
    z: np.ndarray
    mult_eq: np.ndarray
    mult_ineq: np.ndarray
    objective: float
    status: str
    stationarity_inf_norm: float
    feasibility_inf_norm: float
    complementarity_inf_norm: float
    iterations: int
    outer_iterations: int = 0
    rho: float = 0.0
    log: list[str] = field(default_factory=list, repr=False)

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def gradient(fn: Callable, z, scheme: str = "central", analytic: Optional[Callable] = None) -> np.ndarray:
    """Gradient of a scalar function; central differences unless ``analytic`` is given."""
    z = np.asarray(z, dtype=float)
    if analytic is not None:
        return np.asarray(analytic(z), dtype=float)
    if scheme not in ("central", "forward"):
        raise ValueError(f"unknown difference scheme {scheme!r}")
    g = np.empty_like(z)
    f0 = float(fn(z)) if scheme == "forward" else None
    for i in range(z.size):
        h = FD_STEP * max(1.0, abs(z[i]))
        zp = z.copy()
        zp[i] += h
        fp = float(fn(zp))
        if scheme == "central":
            zm = z.copy()
            zm[i] -= h
            fm = float(fn(zm))
            gi = (fp - fm) / (2.0 * h)
        else:
            gi = (fp - f0) / h
        if not np.isfinite(gi):
            raise ValueError(f"non-finite value probing coordinate {i}")
        g[i] = gi
    return g


def jacobian_fd(fn: Callable, z) -> np.ndarray:
    """Central-difference Jacobian of a vector function, shape (m, n)."""
    z = np.asarray(z, dtype=float)
    m = np.atleast_1d(fn(z)).size
    J = np.empty((m, z.size))
    for i in range(z.size):
        h = FD_STEP * max(1.0, abs(z[i]))
        zp, zm = z.copy(), z.copy()
        zp[i] += h
        zm[i] -= h
        col = (np.atleast_1d(fn(zp)) - np.atleast_1d(fn(zm))) / (2.0 * h)
        if not np.all(np.isfinite(col)):
            raise ValueError(f"non-finite value probing coordinate {i}")
        J[:, i] = col
    return J


@dataclass
class FunctionNlp:
    """An NLP from plain callables; missing derivatives use finite differences."""

    z0: np.ndarray
    f: Callable
    c_eq: Optional[Callable] = None
    c_ineq: Optional[Callable] = None
    grad: Optional[Callable] = None
    jac_eq: Optional[Callable] = None
    jac_ineq: Optional[Callable] = None

    def __post_init__(self):
        self.z0 = np.atleast_1d(np.asarray(self.z0, dtype=float))

    @property
    def n(self) -> int:
        return self.z0.size

    def initial_point(self):
        return self.z0.copy()

    def objective(self, z):
        return float(self.f(z))

    def objective_grad(self, z):
        return gradient(self.f, z, analytic=self.grad)

    def eq(self, z):
        return np.zeros(0) if self.c_eq is None else np.atleast_1d(np.asarray(self.c_eq(z), float))

    def ineq(self, z):
        return np.zeros(0) if self.c_ineq is None else np.atleast_1d(np.asarray(self.c_ineq(z), float))

    def eq_jac(self, z):
        if self.c_eq is None:
            return np.zeros((0, self.n))
        if self.jac_eq is not None:
            return np.atleast_2d(np.asarray(self.jac_eq(z), float))
        return jacobian_fd(self.c_eq, z)

    def ineq_jac(self, z):
        if self.c_ineq is None:
            return np.zeros((0, self.n))
        if self.jac_ineq is not None:
            return np.atleast_2d(np.asarray(self.jac_ineq(z), float))
        return jacobian_fd(self.c_ineq, z)


def _inf(v) -> float:
    v = np.asarray(v)
    return float(np.max(np.abs(v))) if v.size else 0.0


def kkt_residual_norms(nlp, z, mult_eq, mult_ineq):
    """(stationarity, feasibility, complementarity) infinity norms.

    Complementarity also counts dual infeasibility ``max(0, -mu)``.
    """
    z = np.asarray(z, dtype=float)
    lam = np.asarray(mult_eq, dtype=float)
    mu = np.asarray(mult_ineq, dtype=float)
    g = nlp.objective_grad(z) + nlp.eq_jac(z).T @ lam + nlp.ineq_jac(z).T @ mu
    ce, ci = nlp.eq(z), nlp.ineq(z)
    feas = max(_inf(ce), _inf(np.maximum(ci, 0.0)))
    comp = max(_inf(mu * ci), _inf(np.maximum(-mu, 0.0)))
    return _inf(g), feas, comp


class _Merit:
    """PHR augmented Lagrangian for fixed multipliers and penalty."""

    def __init__(self, nlp, lam, mu, rho):
        self.nlp, self.lam, self.mu, self.rho = nlp, lam, mu, rho

    def value(self, z) -> float:
        nlp, rho = self.nlp, self.rho
        ce, ci = nlp.eq(z), nlp.ineq(z)
        shifted = np.maximum(0.0, self.mu + rho * ci)
        v = nlp.objective(z) + self.lam @ ce + 0.5 * rho * ce @ ce
        v += (shifted @ shifted - self.mu @ self.mu) / (2.0 * rho)
        return float(v)

    def multipliers(self, z):
        ce, ci = self.nlp.eq(z), self.nlp.ineq(z)
        return self.lam + self.rho * ce, np.maximum(0.0, self.mu + self.rho * ci)

    def lagrangian_grad(self, z, lam_t, mu_t):
        nlp = self.nlp
        return nlp.objective_grad(z) + nlp.eq_jac(z).T @ lam_t + nlp.ineq_jac(z).T @ mu_t


def _safe(fn, *args):
    try:
        v = fn(*args)
    except EVAL_ERRORS:
        return np.inf
    return v if np.isfinite(v) else np.inf


def _solve_spd(H, g):
    n = H.shape[0]
    scale = max(1.0, float(np.max(np.abs(np.diag(H)))))
    tau = 0.0
    for _ in range(12):
        try:
            L = np.linalg.cholesky(H + tau * np.eye(n))
            return -np.linalg.solve(L.T, np.linalg.solve(L, g))
        except np.linalg.LinAlgError:
            tau = 1e-10 * scale if tau == 0.0 else tau * 100.0
    return -g


def _feasibility(nlp, z) -> float:
    return max(_inf(nlp.eq(z)), _inf(np.maximum(nlp.ineq(z), 0.0)))


def solve(nlp, options: SolverOptions | None = None, z0=None, mult_eq=None, mult_ineq=None) -> NlpSolution:
    """Solve ``nlp`` from ``z0`` (default ``nlp.initial_point()``)."""
    opt = options or SolverOptions()
    z = np.array(nlp.initial_point() if z0 is None else z0, dtype=float)
    n = z.size
    lines: list[str] = []

    def emit(line):
        lines.append(line)
        if opt.verbose:
            print(line)
        log.debug(line)

    try:
        f0 = nlp.objective(z)
        ce, ci = nlp.eq(z), nlp.ineq(z)
        nlp.objective_grad(z), nlp.eq_jac(z), nlp.ineq_jac(z)
        ok = np.isfinite(f0) and np.all(np.isfinite(ce)) and np.all(np.isfinite(ci))
    except EVAL_ERRORS as exc:
        ok = False
        emit(f"evaluation failed at the initial point: {exc}")
    if not ok:
        m_e = len(nlp.eq_names) if hasattr(nlp, "eq_names") else 0
        m_i = len(nlp.ineq_names) if hasattr(nlp, "ineq_names") else 0
        return NlpSolution(z, np.zeros(m_e), np.zeros(m_i), np.nan, "numerical_failure",
                           np.inf, np.inf, np.inf, 0, 0, opt.rho_init, lines)

    lam = np.zeros(ce.size) if mult_eq is None else np.array(mult_eq, dtype=float)
    mu = np.zeros(ci.size) if mult_ineq is None else np.array(mult_ineq, dtype=float)
    rho = opt.rho_init
    Bk = np.eye(n)
    scaled = False
    omega = opt.inner_tol_init
    prev_feas = _feasibility(nlp, z)
    total = 0
    status = "max_iter"
    stalled_outer = 0
    stat = feas = comp = np.inf
    emit("iter objective feasibility stationarity rho")

    for outer in range(1, opt.max_outer + 1):
        merit = _Merit(nlp, lam, mu, rho)
        lam_t, mu_t = merit.multipliers(z)
        g = merit.lagrangian_grad(z, lam_t, mu_t)
        stalled = False
        for _ in range(opt.max_inner):
            if _inf(g) <= max(omega, opt.stationarity_tol):
                break
            Je, Ji = nlp.eq_jac(z), nlp.ineq_jac(z)
            active = (mu + rho * nlp.ineq(z)) > 0.0
            Ja = Ji[active]
            H = Bk + rho * (Je.T @ Je + Ja.T @ Ja)
            d = _solve_spd(H, g)
            slope = float(g @ d)
            if not (np.isfinite(slope) and slope < 0.0):
                Bk, scaled = np.eye(n), False
                d = -g
                slope = float(g @ d)
            phi0 = merit.value(z)
            noise = 1e2 * np.finfo(float).eps * max(1.0, abs(phi0))
            alpha, accepted = 1.0, False
            while alpha > 1e-14:
                zt = z + alpha * d
                phit = _safe(merit.value, zt)
                if phit <= phi0 + opt.armijo * alpha * slope:
                    accepted = True
                    break
                if phit <= phi0 + noise and _decreases_gradient(merit, zt, g):
                    # merit change below round-off: judge the step by the gradient instead
                    accepted = True
                    break
                alpha *= opt.backtrack
            if not accepted:
                stalled = True
                break
            try:
                lam_n, mu_n = merit.multipliers(zt)
                g_new = merit.lagrangian_grad(zt, lam_n, mu_n)
                # curvature of the Lagrangian only; the penalty part is modelled exactly
                y = g_new - merit.lagrangian_grad(z, lam_n, mu_n)
            except EVAL_ERRORS:
                stalled = True
                break
            s = zt - z
            Bk, scaled = _damped_bfgs(Bk, s, y, scaled)
            z, g = zt, g_new
            total += 1

        lam, mu = merit.multipliers(z)
        stat, feas, comp = kkt_residual_norms(nlp, z, lam, mu)
        obj = nlp.objective(z)
        emit(f"{outer} {obj:.12e} {feas:.3e} {stat:.3e} {rho:.1e}")
        if stat <= opt.stationarity_tol and feas <= opt.feasibility_tol and comp <= opt.complementarity_tol:
            status = "converged"
            break
        if feas > opt.feasibility_improvement * prev_feas and feas > opt.feasibility_tol:
            if rho >= opt.rho_max:
                stalled_outer += 1
                if stalled_outer >= 3:
                    status = "infeasible"
                    break
            rho = min(rho * opt.rho_growth, opt.rho_max)
        prev_feas = feas
        omega = max(opt.stationarity_tol, 0.1 * omega)
        if stalled and stat > opt.stationarity_tol and feas <= opt.feasibility_tol and omega <= opt.stationarity_tol:
            # line search cannot make progress at the final accuracy
            status = "numerical_failure"
            break
    return NlpSolution(z, lam, mu, nlp.objective(z), status, stat, feas, comp, total, outer, rho, lines)


def _decreases_gradient(merit, zt, g) -> bool:
    try:
        lam_t, mu_t = merit.multipliers(zt)
        return _inf(merit.lagrangian_grad(zt, lam_t, mu_t)) < _inf(g)
    except EVAL_ERRORS:
        return False


def _damped_bfgs(B, s, y, scaled):
    """Powell-damped BFGS update, keeps B positive definite."""
    ss = float(s @ s)
    if ss <= 1e-300:
        return B, scaled
    sy = float(s @ y)
    if not scaled and sy > 0:
        B = (float(y @ y) / sy) * np.eye(B.shape[0])
        scaled = True
    Bs = B @ s
    sBs = float(s @ Bs)
    if sBs <= 0:
        return np.eye(B.shape[0]), False
    if sy < 0.2 * sBs:
        theta = 0.8 * sBs / (sBs - sy)
        y = theta * y + (1.0 - theta) * Bs
        sy = float(s @ y)
    return B - np.outer(Bs, Bs) / sBs + np.outer(y, y) / sy, scaled
