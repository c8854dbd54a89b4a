import numpy as np
import pytest

from bernopt.solver import (
    FunctionNlp,
    SolverOptions,
    gradient,
    jacobian_fd,
    kkt_residual_norms,
    solve,
)

from . import oracles


TIGHT = SolverOptions(stationarity_tol=1e-10, feasibility_tol=1e-12, complementarity_tol=1e-10)


def _qp_nlp(H, g, A_eq=None, b_eq=None, A_in=None, b_in=None, z0=None):
    n = H.shape[0]
    return FunctionNlp(
        np.zeros(n) if z0 is None else z0,
        lambda z: 0.5 * z @ H @ z + g @ z,
        None if A_eq is None else (lambda z: A_eq @ z - b_eq),
        None if A_in is None else (lambda z: A_in @ z - b_in),
        grad=lambda z: H @ z + g,
        jac_eq=None if A_eq is None else (lambda z: A_eq),
        jac_ineq=None if A_in is None else (lambda z: A_in),
    )


def test_square_with_lower_bound():
    nlp = FunctionNlp(np.array([3.0]), lambda z: z[0] ** 2, c_ineq=lambda z: 1.0 - z)
    s = solve(nlp)
    assert s.converged
    assert s.z[0] == pytest.approx(1.0, abs=1e-6)
    assert s.mult_ineq[0] == pytest.approx(2.0, abs=1e-6)


def test_linear_objective_with_equality():
    nlp = FunctionNlp(np.array([0.3, -2.0]), lambda z: z[0] + z[1], c_eq=lambda z: z[0] ** 2 + z[1] ** 2 - 2.0)
    s = solve(nlp)
    assert s.converged
    assert np.allclose(s.z, [-1.0, -1.0], atol=1e-6)
    # L = z0 + z1 + lam (|z|^2 - 2): 1 + 2 lam z = 0
    assert s.mult_eq[0] == pytest.approx(0.5, abs=1e-6)


def test_linear_equality_sign_convention():
    nlp = FunctionNlp(np.array([0.0, 0.0]), lambda z: z[0] + z[1] + 0.5 * (z[0] - z[1]) ** 2,
                      c_eq=lambda z: np.array([z[0] + z[1] - 1.0]))
    s = solve(nlp)
    assert s.converged and s.mult_eq[0] == pytest.approx(-1.0, abs=1e-6)


@pytest.mark.parametrize("seed", range(15))
def test_convex_qp_matches_active_set_enumeration(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 11))
    M = rng.normal(size=(n, n))
    H = M @ M.T + 0.5 * np.eye(n)
    g = rng.normal(size=n)
    m_eq = int(rng.integers(0, min(3, n)))
    m_in = int(rng.integers(1, 7))
    A_eq = rng.normal(size=(m_eq, n)) if m_eq else None
    b_eq = rng.normal(size=m_eq) if m_eq else None
    A_in = rng.normal(size=(m_in, n))
    # feasible by construction: a random point satisfies every row with slack
    zf = rng.normal(size=n)
    if m_eq:
        zf = zf - np.linalg.lstsq(A_eq, A_eq @ zf - b_eq, rcond=None)[0]
    b_in = A_in @ zf + rng.uniform(0.0, 1.0, size=m_in)
    z_ref, lam_ref, mu_ref = oracles.active_set_qp(H, g, A_eq, b_eq, A_in, b_in)
    s = solve(_qp_nlp(H, g, A_eq, b_eq, A_in, b_in), TIGHT)
    assert s.converged, s.log[-3:]
    assert np.max(np.abs(s.z - z_ref)) <= 1e-6
    assert np.max(np.abs(s.mult_ineq - mu_ref)) <= 1e-6
    if m_eq:
        assert np.max(np.abs(s.mult_eq - lam_ref)) <= 1e-6


def test_solution_is_deterministic():
    rng = np.random.default_rng(5)
    H = np.diag(rng.uniform(1, 3, 4))
    nlp = _qp_nlp(H, rng.normal(size=4), A_in=rng.normal(size=(3, 4)), b_in=np.ones(3))
    a, b = solve(nlp), solve(nlp)
    assert np.array_equal(a.z, b.z) and a.log == b.log


def test_infeasible_problem_is_reported():
    nlp = FunctionNlp(np.array([0.0]), lambda z: z[0] ** 2,
                      c_ineq=lambda z: np.array([1.0 - z[0], z[0] - 0.0]))
    s = solve(nlp, SolverOptions(max_outer=30))
    assert not s.converged and s.status in ("infeasible", "max_iter", "numerical_failure")


def test_nonfinite_initial_point_is_numerical_failure():
    nlp = FunctionNlp(np.array([-1.0]), lambda z: float(np.sqrt(z[0])) if z[0] >= 0 else float("nan"))
    s = solve(nlp)
    assert s.status == "numerical_failure"


def test_evaluation_errors_are_backtracked():
    # log barrier-like objective raises outside the domain; line search must recover
    def f(z):
        if z[0] <= 0:
            raise ValueError("outside domain")
        return z[0] - np.log(z[0])

    s = solve(FunctionNlp(np.array([0.2]), f, grad=lambda z: np.array([1.0 - 1.0 / z[0]])))
    assert s.converged and s.z[0] == pytest.approx(1.0, abs=1e-5)


def test_log_header_and_lines():
    s = solve(FunctionNlp(np.array([2.0]), lambda z: (z[0] - 1.0) ** 2))
    assert s.log[0] == "iter objective feasibility stationarity rho"
    assert len(s.log[1].split()) == 5


def test_options_from_mapping():
    opt = SolverOptions.from_mapping({"max_outer": "7", "rho_init": "100", "verbose": "false"})
    assert opt.max_outer == 7 and opt.rho_init == 100.0 and opt.verbose is False
    with pytest.raises(KeyError):
        SolverOptions.from_mapping({"bogus": 1})


def test_kkt_residuals_at_hand_solution():
    nlp = FunctionNlp(np.array([1.0]), lambda z: z[0] ** 2, c_ineq=lambda z: 1.0 - z)
    st, fe, co = kkt_residual_norms(nlp, np.array([1.0]), np.zeros(0), np.array([2.0]))
    assert max(st, fe, co) <= 1e-8
    st, fe, co = kkt_residual_norms(nlp, np.array([1.0]), np.zeros(0), np.array([-1.0]))
    assert co >= 1.0


def test_gradient_schemes():
    f = lambda z: np.sin(z[0]) * z[1] ** 2
    z = np.array([0.4, 1.3])
    exact = np.array([np.cos(0.4) * 1.69, 2 * np.sin(0.4) * 1.3])
    assert np.allclose(gradient(f, z), exact, atol=1e-8)
    assert np.allclose(gradient(f, z, "forward"), exact, atol=1e-5)
    assert np.array_equal(gradient(f, z, analytic=lambda v: exact), exact)
    with pytest.raises(ValueError):
        gradient(lambda v: float("inf"), z)


def test_jacobian_fd():
    fn = lambda z: np.array([z[0] * z[1], z[1] ** 3])
    J = jacobian_fd(fn, np.array([2.0, 3.0]))
    assert np.allclose(J, [[3.0, 2.0], [0.0, 27.0]], atol=1e-6)
