import numpy as np
import pytest

from bernopt.ocp import (
    Fixed,
    FreeFinalTime,
    MinSeparationFromPoint,
    MinSeparationPairwise,
    NormBand,
    OcpProblem,
    default_guess,
    validate,
)


def _problem(**kw):
    base = dict(n_x=1, n_u=1, n_e=2, f=lambda X, U: U.copy(), e=lambda a, b: np.array([a[0], b[0] - 1.0]),
                horizon=Fixed(0.0, 1.0), x_start=(0.0,), x_end=(1.0,))
    base.update(kw)
    return OcpProblem(**base)


def test_horizon_validation():
    with pytest.raises(ValueError):
        Fixed(1.0, 1.0)
    with pytest.raises(ValueError):
        FreeFinalTime(0.0, 0.0, 5.0)
    with pytest.raises(ValueError):
        FreeFinalTime(0.0, 5.0, 4.0)
    assert _problem(horizon=FreeFinalTime(0.0, 2.0, 4.0)).nominal_tf() == 3.0
    assert _problem(horizon=FreeFinalTime(0.0, 2.0, 4.0, tf_guess=2.5)).nominal_tf() == 2.5


def test_structured_constraint_validation():
    with pytest.raises(ValueError):
        MinSeparationFromPoint((0, 1), (0.0,), 1.0)
    with pytest.raises(ValueError):
        MinSeparationFromPoint((0,), (0.0,), 0.0)
    with pytest.raises(ValueError):
        MinSeparationPairwise((0,), (1,), 1.0, mode="sideways")
    with pytest.raises(ValueError):
        NormBand((0,), 2.0, 1.0)


def test_problem_dimension_checks():
    with pytest.raises(ValueError):
        _problem(n_x=0)
    with pytest.raises(ValueError):
        _problem(n_h=1)


def test_default_guess_is_straight_line():
    X, U, tf = default_guess(_problem(), np.linspace(0, 1, 5))
    assert np.allclose(X[0], np.linspace(0, 1, 5)) and np.all(U == 0.0) and tf == 1.0


def test_validate_reports_problems():
    assert validate(_problem()) == []
    bad = _problem(f=lambda X, U: np.full_like(X, np.nan))
    assert "non-finite dynamics" in validate(bad)
    wrong = _problem(n_h=2, h=lambda X, U: U)
    assert any(v.startswith("path constraint dimension") for v in validate(wrong))
    raising = _problem(e=lambda a, b: 1 / 0)
    assert any("ZeroDivisionError" in v for v in validate(raising))
    out = _problem(structured=(MinSeparationFromPoint((3,), (0.0,), 1.0),))
    assert any("out of range" in v for v in validate(out))
