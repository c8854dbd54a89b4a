import json

import numpy as np
import pytest

from bernopt import problems
from bernopt.bench import solve_ocp
from bernopt.costate import (
    CostateError,
    dual_residuals,
    estimate_to_dict,
    extract_covectors,
    lagrangian_gradient,
)
from bernopt.solver import NlpSolution, SolverOptions
from bernopt.transcription import TranscriptionOptions, transcribe

TIGHT = SolverOptions(stationarity_tol=1e-10, feasibility_tol=1e-12, complementarity_tol=1e-10)


def _hand_lq(N):
    """Exact KKT point of the LQ toy: x = t, u = 1, lambda = -1, nu = (1, -1)."""
    p, _ = problems.lq_toy()
    nlp = transcribe(p, N)
    z = nlp.pack(np.linspace(0.0, 1.0, N + 1)[None], np.ones((1, N + 1)))
    w = nlp.weight(z)
    mult_eq = np.concatenate([[1.0, -1.0], np.full(N + 1, w)])
    sol = NlpSolution(z, mult_eq, np.zeros(len(nlp.ineq_names)), nlp.objective(z), "converged", 0.0, 0.0, 0.0, 0)
    return p, nlp, sol


@pytest.fixture(scope="module")
def lq20():
    p, ref = problems.lq_toy()
    nlp, sol = solve_ocp(p, 20, solver_options=TIGHT)
    assert sol.converged
    return p, ref, nlp, sol


def test_lq_costate_is_minus_one(lq20):
    p, _, nlp, sol = lq20
    est = extract_covectors(p, nlp, sol)
    assert np.max(np.abs(est.lambda_nodes + 1.0)) <= 5e-2
    assert est.certified
    assert max(est.closure_residuals) <= 1e-6


def test_scaling_identity_reproduces_solver_stationarity(lq20):
    p, _, nlp, sol = lq20
    est = extract_covectors(p, nlp, sol)
    direct = nlp.objective_grad(sol.z) + nlp.eq_jac(sol.z).T @ sol.mult_eq + nlp.ineq_jac(sol.z).T @ sol.mult_ineq
    assert np.max(np.abs(lagrangian_gradient(nlp, sol.z, est) - direct)) <= 1e-12


@pytest.mark.parametrize("N", [1, 6, 15])
def test_hand_kkt_point_has_vanishing_residuals(N):
    p, nlp, sol = _hand_lq(N)
    est = extract_covectors(p, nlp, sol)
    assert np.allclose(est.lambda_nodes, -1.0, atol=1e-12)
    rep = dual_residuals(p, nlp, sol, est)
    assert rep.stationarity_max <= 1e-8
    assert rep.continuous_stationarity_max <= 1e-8
    assert max(rep.closure) <= 1e-8
    assert rep.delta_D == pytest.approx(1.0 / N)


def test_refuses_unconverged_solution():
    p, nlp, sol = _hand_lq(4)
    sol.status = "max_iterations"
    with pytest.raises(CostateError, match="max_iterations"):
        extract_covectors(p, nlp, sol)


def test_zero_multipliers_give_zero_costate():
    p, nlp, sol = _hand_lq(4)
    sol.mult_eq = np.zeros_like(sol.mult_eq)
    est = extract_covectors(p, nlp, sol)
    assert not est.lambda_nodes.any() and not est.nu.any()


def test_relaxed_defects_map_split_multipliers():
    p, ref = problems.lq_toy()
    nlp, sol = solve_ocp(p, 10, TranscriptionOptions(delta_mode="corollary", c_p=1e-3), TIGHT)
    est = extract_covectors(p, nlp, sol)
    assert np.max(np.abs(est.lambda_nodes + 1.0)) <= 5e-2


def test_example1_costate_converges():
    p, ref = problems.example1(), problems.example1_reference()
    errs, closure = [], []
    for N in (10, 20, 40):
        nlp, sol = solve_ocp(p, N)
        assert sol.converged
        est = extract_covectors(p, nlp, sol)
        errs.append(np.max(np.abs(est.lambda_nodes - ref.lam(est.times))))
        closure.append(max(est.closure_residuals))
    assert all(b <= 1.2 * a for a, b in zip(errs, errs[1:]))
    assert closure[-1] <= closure[0] / 4


def test_obstacle_toy_flagged_uncertified():
    p = problems.obstacle_toy()
    nlp, sol = solve_ocp(p, 8)
    est = extract_covectors(p, nlp, sol)
    assert not est.certified
    assert any("pure state" in n for n in est.notes)
    # interior node multipliers approximate mu = 2
    assert np.allclose(est.mu_nodes[0, 1:-1], 2.0, atol=1e-4)
    rep = dual_residuals(p, nlp, sol, est)
    assert not rep.certified


def test_reports_serialise(lq20):
    p, _, nlp, sol = lq20
    est = extract_covectors(p, nlp, sol)
    d = json.loads(json.dumps(estimate_to_dict(est)))
    assert len(d["lambda"][0]) == 21 and d["certified"]
    rep = json.loads(dual_residuals(p, nlp, sol, est, c_d=2.0).to_json())
    assert rep["delta_D"] == pytest.approx(0.1)
    assert set(rep["ratios"]) == {"stationarity", "complementarity", "dual_feasibility", "closure"}
