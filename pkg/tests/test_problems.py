import json

import jsonschema
import numpy as np
import pytest
from scipy.integrate import quad, solve_bvp

from bernopt import problems
from bernopt.ocp import validate


def _example1_bvp():
    # y' = y (2 - 4 lam), lam' = 2 lam^2 - 2 lam - 1/2, y(0) = 2, y(5) = 1
    def rhs(t, z):
        y, lam = z
        return np.vstack([y * (2 - 4 * lam), 2 * lam**2 - 2 * lam - 0.5])

    t = np.linspace(0, 5, 400)
    guess = np.vstack([2 - t / 5, np.full_like(t, 1.2)])
    sol = solve_bvp(rhs, lambda a, b: np.array([a[0] - 2, b[0] - 1]), t, guess, tol=1e-9, max_nodes=200000)
    assert sol.success
    return sol


def test_example1_reference_agrees_with_collocation_oracle():
    ref = problems.example1_reference()
    sol = _example1_bvp()
    t = np.linspace(0, 5, 301)
    y, lam = sol.sol(t)
    assert np.max(np.abs(ref.y(t) - y)) <= 1e-6
    assert np.max(np.abs(ref.lam(t) - lam)) <= 1e-6
    assert np.max(np.abs(ref.u(t) + 2 * lam * np.sqrt(y))) <= 1e-6


def test_example1_reference_objective_and_boundary():
    ref = problems.example1_reference()
    assert float(ref.y(0.0)) == pytest.approx(2.0, abs=1e-12)
    assert float(ref.y(5.0)) == pytest.approx(1.0, abs=1e-10)
    J, _ = quad(lambda t: 0.5 * (ref.y(t) + ref.u(t) ** 2), 0, 5, limit=200)
    assert J == pytest.approx(ref.objective, abs=1e-7)


def test_example2_reference_is_consistent():
    ref = problems.example2_reference()
    ts = 2.0 - np.log((6.0 * np.e**2 - 39.392) / 2.0)
    assert ts == pytest.approx(1.096, abs=1e-3)
    assert float(ref.y(2.0)) == pytest.approx(39.392, abs=1e-10)
    assert float(ref.y(0.0)) == pytest.approx(4.0)
    # switching function 3 + lam changes sign at ts
    assert 3 + float(ref.lam(ts)) == pytest.approx(0.0, abs=1e-12)
    J, _ = quad(lambda t: 3 * ref.u(t) - 2 * ref.y(t), 0, 2, points=[ts])
    assert J == pytest.approx(ref.objective, abs=1e-8)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_builtin_examples_validate(k):
    assert validate(problems.builtin_example(k)) == []


def test_builtin_example_errors():
    with pytest.raises(ValueError):
        problems.builtin_example(5)
    with pytest.raises(ValueError):
        problems.example4(fleet=12)


def test_example4_fleet_sizes():
    for k in (2, 3, 11):
        p = problems.example4(k)
        assert p.n_x == 3 * k and p.n_u == 2 * k
        assert len(p.structured) == k * (k - 1) // 2


def test_formation_mirrors_goals():
    starts, goals = problems.formation(5)
    assert len(starts) == len(goals) == 5
    ys = [g[1] for g in goals]
    assert ys[0] == pytest.approx(-ys[-1])


@pytest.mark.parametrize("toy", [problems.lq_toy, problems.smooth_toy])
def test_toy_references_satisfy_dynamics(toy):
    p, ref = toy()
    t = np.linspace(0, 1, 11)
    h = 1e-6
    ydot = (ref.y(t + h) - ref.y(t - h)) / (2 * h)
    assert np.allclose(ydot, ref.u(t), atol=1e-6)


def test_config_round_trip(tmp_path):
    cfg = {"family": "integrator", "start": [0, 0], "goal": [800, 100], "obstacles": [[400, 50]], "clearance": 40}
    path = tmp_path / "p.json"
    path.write_text(json.dumps(cfg))
    p = problems.from_config(path)
    assert p.n_x == 2 and len(p.structured) == 2
    d = problems.from_config({"family": "dubins", "starts": [[0, 0, 0], [0, 300, 0]], "goals": [[2000, 0], [2000, 300]]})
    assert d.n_x == 6


@pytest.mark.parametrize("cfg", [
    {"family": "integrator", "start": [0, 0], "goal": [1, 1], "typo": 1},
    {"family": "rocket"},
    {"family": "integrator", "start": [0, 0]},
    {"family": "dubins", "starts": [[0, 0, 0]], "goals": [[1, 1]], "obstacles": [[1, 1]]},
    {"family": "integrator", "start": [0, 0], "goal": [1, 1], "clearance": -1},
])
def test_config_rejects_bad_input(cfg):
    with pytest.raises(jsonschema.ValidationError):
        problems.load_config(cfg)
