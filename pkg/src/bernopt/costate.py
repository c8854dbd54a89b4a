"""Costate estimates from NLP multipliers and the discrete dual residuals.

The transcribed Lagrangian is ``f + mult_eq . c_eq + mult_ineq . c_ineq`` with
dynamics rows ``xdot - f``.  The continuous costate convention multiplies
``-xdot + f`` instead, so node costates are ``lambda(t_j) = -mult_j / w``;
path multipliers map as ``mu(t_j) = mult_j / w`` and boundary multipliers
``nu`` are used unscaled.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field

import numpy as np

from .bernstein import BernsteinPoly, approximate, basis_matrix, derivative, evaluate
from .transcription import TranscribedNlp, _fd_vector, callback_jacobians

__all__ = [
    "CostateError",
    "CostateEstimate",
    "DualReport",
    "closure_residuals",
    "dual_residuals",
    "estimate_to_dict",
    "extract_covectors",
    "lagrangian_gradient",
]


class CostateError(RuntimeError):
    pass


@dataclass
class CostateEstimate:
    lambda_nodes: np.ndarray  # (n_x, N+1)
    mu_nodes: np.ndarray  # (n_h, N+1)
    nu: np.ndarray  # (n_e,)
    lambda_poly: BernsteinPoly
    w: float
    times: np.ndarray
    closure_residuals: tuple[float, float] = (np.nan, np.nan)
    # unscaled multipliers of the remaining inequality rows (time bounds, structured)
    other_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0))
    certified: bool = True
    notes: tuple[str, ...] = ()


def _ineq_groups(nlp: TranscribedNlp):
    """Slices of the inequality vector: path rows, upper defects, lower defects, the rest."""
    p, K = nlp.problem, nlp.N + 1
    i = p.n_h * K
    path = slice(0, i)
    if nlp.delta_P > 0:
        up = slice(i, i + p.n_x * K)
        lo = slice(up.stop, up.stop + p.n_x * K)
        i = lo.stop
    else:
        up = lo = None
    return path, up, lo, slice(i, len(nlp.ineq_names))


def _pure_state(problem, nlp, z) -> bool:
    if problem.structured and any(not hasattr(c, "lower") for c in problem.structured):
        return True
    if not problem.n_h:
        return False
    X, U = nlp.samples(z)
    hu = callback_jacobians(problem, X, U)[5]
    # a row with no control dependence anywhere is a pure state constraint
    return bool(np.any(np.all(np.abs(hu) < 1e-14, axis=(1, 2))))


def extract_covectors(problem, nlp: TranscribedNlp, solution, tol: float = 1e-6) -> CostateEstimate:
    """Map the multipliers of a converged solution to node costates."""
    if not solution.converged:
        raise CostateError(
            f"refusing to map multipliers of a {solution.status} solution "
            f"(stationarity {solution.stationarity_inf_norm:.2e}, feasibility {solution.feasibility_inf_norm:.2e})"
        )
    z = solution.z
    K, n_x, n_e = nlp.N + 1, problem.n_x, problem.n_e
    w = nlp.weight(z)
    path, up, lo, rest = _ineq_groups(nlp)
    mi = np.asarray(solution.mult_ineq, float)
    if up is None:
        dyn = np.asarray(solution.mult_eq, float)[n_e:n_e + n_x * K]
    else:
        dyn = mi[up] - mi[lo]
    lam = -dyn.reshape(n_x, K) / w
    mu = mi[path].reshape(problem.n_h, K) / w
    nu = np.asarray(solution.mult_eq, float)[:n_e].copy()
    t = nlp.node_times(z)
    lam_poly = approximate(lam, (float(t[0]), float(t[-1])))
    notes = []
    certified = True
    if _pure_state(problem, nlp, z):
        certified = False
        notes.append("uncertified: pure state constraints present, costate jumps are not modelled")
    if mu.size and mu.min() < -tol / w:
        notes.append(f"negative path multiplier {mu.min():.3e}")
    est = CostateEstimate(lam, mu, nu, lam_poly, w, t, other_ineq=mi[rest].copy(),
                          certified=certified, notes=tuple(notes))
    est.closure_residuals = closure_residuals(problem, est, nlp, z)
    return est


def _boundary_grads(problem, x0, xf):
    if problem.e_jac is not None:
        e0, e1 = problem.e_jac(x0, xf)
    else:
        e0, e1 = _fd_vector(problem.e, x0, xf)
    if problem.E_grad is not None:
        E0, E1 = problem.E_grad(x0, xf)
    else:
        E0, E1 = _fd_vector(problem.E, x0, xf)
    shape = (problem.n_e, problem.n_x)
    return (np.reshape(np.asarray(e0, float), shape), np.reshape(np.asarray(e1, float), shape),
            np.ravel(np.asarray(E0, float)), np.ravel(np.asarray(E1, float)))


def closure_residuals(problem, estimate: CostateEstimate, nlp: TranscribedNlp, z) -> tuple[float, float]:
    """Norms of the discrete transversality conditions at both ends."""
    xb, _, _ = nlp.unpack(z)
    x0, xf = xb[:, 0], xb[:, -1]
    e0, e1, E0, E1 = _boundary_grads(problem, x0, xf)
    nu = estimate.nu
    r0 = estimate.lambda_nodes[:, 0] + nu @ e0 + E0
    r1 = estimate.lambda_nodes[:, -1] - nu @ e1 - E1
    return float(np.linalg.norm(r0)), float(np.linalg.norm(r1))


def lagrangian_gradient(nlp: TranscribedNlp, z, estimate: CostateEstimate) -> np.ndarray:
    """Gradient of the discrete Lagrangian rebuilt from the scaled estimate."""
    p, K = nlp.problem, nlp.N + 1
    w = estimate.w
    dyn = -estimate.lambda_nodes.ravel() * w
    m_eq = np.concatenate([estimate.nu, dyn]) if nlp.delta_P == 0 else estimate.nu
    g = nlp.objective_grad(z) + nlp.eq_jac(z).T @ m_eq if m_eq.size else nlp.objective_grad(z).copy()
    Ji = nlp.ineq_jac(z)
    path, up, lo, rest = _ineq_groups(nlp)
    g = g + Ji[path].T @ (estimate.mu_nodes.ravel() * w)
    if up is not None:
        # the split (upper, lower) is not recoverable from the difference; put
        # the signed value on whichever side it belongs to
        g = g + Ji[up].T @ np.maximum(dyn, 0.0) + Ji[lo].T @ np.maximum(-dyn, 0.0)
    g = g + Ji[rest].T @ estimate.other_ineq
    return g


@dataclass
class DualReport:
    N: int
    delta_D: float
    complementarity: list  # per node max |mu_k . h_k|
    dual_feasibility: list  # per node min mu_k
    stationarity_x: list  # per node |dL/dxbar_k|
    stationarity_u: list
    costate_residual: list  # continuous costate equation at nodes
    control_residual: list  # continuous stationarity in u at nodes
    closure: tuple
    ratios: dict
    certified: bool
    notes: list

    @property
    def stationarity_max(self) -> float:
        return float(max(max(self.stationarity_x, default=0.0), max(self.stationarity_u, default=0.0)))

    @property
    def continuous_stationarity_max(self) -> float:
        """Largest node residual of the costate equation or of the control stationarity."""
        return float(max(max(self.costate_residual, default=0.0), max(self.control_residual, default=0.0)))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["stationarity_max"] = self.stationarity_max
        d["continuous_stationarity_max"] = self.continuous_stationarity_max
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def dual_residuals(problem, nlp: TranscribedNlp, solution, estimate: CostateEstimate,
                   c_d: float = 1.0) -> DualReport:
    """Discrete KKT residuals against ``delta_D = c_d / N`` plus continuous residuals at nodes."""
    z = solution.z
    N, K = nlp.N, nlp.N + 1
    delta_D = c_d / N
    lay = nlp.layout
    g = lagrangian_gradient(nlp, z, estimate)
    gx = g[lay.x_slice].reshape(problem.n_x, K)
    gu = g[lay.u_slice].reshape(problem.n_u, K)
    st_x = np.linalg.norm(gx, axis=0)
    st_u = np.linalg.norm(gu, axis=0) if problem.n_u else np.zeros(K)

    X, U = nlp.samples(z)
    w = estimate.w
    mu_raw = estimate.mu_nodes * w
    if problem.n_h:
        H = np.asarray(problem.h(X, U), float)
        comp = np.abs(np.sum(mu_raw * H, axis=0))
        dual = mu_raw.min(axis=0)
    else:
        comp = np.zeros(K)
        dual = np.zeros(K)

    # continuous residuals with polynomial node values of x, u
    xb, ub, _ = nlp.unpack(z)
    Bn = basis_matrix(N, nlp.s_nodes)
    Xn, Un = xb @ Bn.T, ub @ Bn.T
    fx, fu, Fx, Fu, hx, hu = callback_jacobians(problem, Xn, Un)
    lam, mu = estimate.lambda_nodes, estimate.mu_nodes
    lam_dot = evaluate(derivative(estimate.lambda_poly), estimate.times)
    res_x = lam_dot + Fx + np.einsum("ik,ijk->jk", lam, fx)
    res_u = Fu + np.einsum("ik,ijk->jk", lam, fu)
    if problem.n_h:
        res_x = res_x + np.einsum("ik,ijk->jk", mu, hx)
        res_u = res_u + np.einsum("ik,ijk->jk", mu, hu)

    closure = estimate.closure_residuals
    ratios = {
        "stationarity": float(max(st_x.max(), st_u.max()) / delta_D),
        "complementarity": float(comp.max() / (delta_D / N)),
        "dual_feasibility": float(max(0.0, -dual.min()) / (delta_D / N)),
        "closure": float(max(closure) / delta_D),
    }
    return DualReport(
        N=N, delta_D=delta_D,
        complementarity=comp.tolist(), dual_feasibility=dual.tolist(),
        stationarity_x=st_x.tolist(), stationarity_u=st_u.tolist(),
        costate_residual=np.linalg.norm(res_x, axis=0).tolist(),
        control_residual=np.linalg.norm(res_u, axis=0).tolist(),
        closure=tuple(closure), ratios=ratios,
        certified=estimate.certified, notes=list(estimate.notes),
    )


def estimate_to_dict(est: CostateEstimate) -> dict:
    return {
        "w": est.w,
        "times": est.times.tolist(),
        "lambda": est.lambda_nodes.tolist(),
        "mu": est.mu_nodes.tolist(),
        "nu": est.nu.tolist(),
        "closure_residuals": list(est.closure_residuals),
        "certified": est.certified,
        "notes": list(est.notes),
    }
