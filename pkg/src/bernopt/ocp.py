"""Continuous optimal control problems and structured path constraints.

Callbacks are vectorised over samples: a state block ``X`` has shape
``(n_x, K)`` and a control block ``U`` has shape ``(n_u, K)``.

* ``f(X, U) -> (n_x, K)``   dynamics
* ``F(X, U) -> (K,)``       running cost
* ``h(X, U) -> (n_h, K)``   path inequalities, ``h <= 0``
* ``E(x0, xf) -> float``    terminal cost
* ``e(x0, xf) -> (n_e,)``   boundary equalities

Optional analytic derivatives follow the same layout with the derivative
axis inserted before the sample axis, e.g. ``f_jac(X, U) -> (fx, fu)`` with
``fx`` of shape ``(n_x, n_x, K)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Optional, Union

import numpy as np

__all__ = [
    "Fixed",
    "FreeFinalTime",
    "MinSeparationFromPoint",
    "MinSeparationPairwise",
    "NormBand",
    "OcpProblem",
    "StructuredConstraint",
    "default_guess",
    "validate",
]


@dataclass(frozen=True)
class Fixed:
    t0: float
    t1: float

    def __post_init__(self):
        if not (np.isfinite(self.t0) and np.isfinite(self.t1) and self.t1 > self.t0):
            raise ValueError(f"invalid horizon [{self.t0}, {self.t1}]")


@dataclass(frozen=True)
class FreeFinalTime:
    """Final time is a decision variable in ``[tf_lower, tf_upper]``.

    ``time_weight * t_f`` is added to the cost; ``tf_guess`` defaults to the
    midpoint of the bounds.
    """

    t0: float
    tf_lower: float
    tf_upper: float
    time_weight: float = 1.0
    tf_guess: Optional[float] = None

    def __post_init__(self):
        if not self.tf_lower > self.t0:
            raise ValueError("tf_lower must exceed t0")
        if not self.tf_upper >= self.tf_lower:
            raise ValueError("tf_upper must be at least tf_lower")


Horizon = Union[Fixed, FreeFinalTime]


@dataclass(frozen=True)
class MinSeparationFromPoint:
    """``|x[indices](t) - point| >= clearance`` for all t."""

    indices: tuple[int, ...]
    point: tuple[float, ...]
    clearance: float

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        if not self.clearance > 0:
            raise ValueError("clearance must be positive")
        if len(self.indices) != len(self.point):
            raise ValueError("point and projection have different dimensions")


@dataclass(frozen=True)
class MinSeparationPairwise:
    """Clearance between two state projections.

    ``temporal``: ``|a(t) - b(t)| >= clearance`` at equal times.
    ``spatial``: ``|a(t) - b(s)| >= clearance`` for all pairs ``(t, s)``.
    """

    indices_a: tuple[int, ...]
    indices_b: tuple[int, ...]
    clearance: float
    mode: Literal["temporal", "spatial"] = "temporal"

    def __post_init__(self):
        object.__setattr__(self, "indices_a", tuple(int(i) for i in self.indices_a))
        object.__setattr__(self, "indices_b", tuple(int(i) for i in self.indices_b))
        if not self.clearance > 0:
            raise ValueError("clearance must be positive")
        if len(self.indices_a) != len(self.indices_b):
            raise ValueError("projections have different dimensions")
        if self.mode not in ("temporal", "spatial"):
            raise ValueError(f"unknown separation mode {self.mode!r}")


@dataclass(frozen=True)
class NormBand:
    """``lower <= |u[indices](t)| <= upper`` for all t."""

    indices: tuple[int, ...]
    lower: float
    upper: float

    def __post_init__(self):
        object.__setattr__(self, "indices", tuple(int(i) for i in self.indices))
        if not 0 <= self.lower <= self.upper:
            raise ValueError("need 0 <= lower <= upper")


StructuredConstraint = Union[MinSeparationFromPoint, MinSeparationPairwise, NormBand]


def _zero_cost(X, U):
    return np.zeros(X.shape[1])


def _zero_terminal(x0, xf):
    return 0.0


@dataclass(frozen=True)
class OcpProblem:
    n_x: int
    n_u: int
    f: Callable
    e: Callable
    horizon: Horizon
    n_e: int
    n_h: int = 0
    F: Callable = _zero_cost
    E: Callable = _zero_terminal
    h: Optional[Callable] = None
    f_jac: Optional[Callable] = None
    F_grad: Optional[Callable] = None
    h_jac: Optional[Callable] = None
    E_grad: Optional[Callable] = None
    e_jac: Optional[Callable] = None
    structured: tuple = ()
    # boundary data for the default straight-line guess
    x_start: Optional[tuple] = None
    x_end: Optional[tuple] = None
    u_nominal: Optional[tuple] = None
    initial_guess: Optional[Callable] = None
    name: str = "ocp"

    def __post_init__(self):
        for k in ("n_x", "n_u", "n_e", "n_h"):
            v = getattr(self, k)
            if int(v) != v or v < 0:
                raise ValueError(f"{k} must be a non-negative integer")
        if self.n_x < 1:
            raise ValueError("n_x must be positive")
        if self.n_h > 0 and self.h is None:
            raise ValueError("n_h > 0 but no path constraint callback")
        object.__setattr__(self, "structured", tuple(self.structured))

    @property
    def free_time(self) -> bool:
        return isinstance(self.horizon, FreeFinalTime)

    @property
    def t0(self) -> float:
        return float(self.horizon.t0)

    def nominal_tf(self) -> float:
        hz = self.horizon
        if isinstance(hz, Fixed):
            return float(hz.t1)
        if hz.tf_guess is not None:
            return float(hz.tf_guess)
        return 0.5 * (hz.tf_lower + hz.tf_upper)


def default_guess(problem: OcpProblem, s: np.ndarray):
    """Straight-line states, nominal (or zero) controls, midpoint final time.

    ``s`` are unit-interval parameters; returns ``(X, U, tf)``.
    """
    s = np.asarray(s, dtype=float)
    tf = problem.nominal_tf()
    if problem.initial_guess is not None:
        X, U = problem.initial_guess(problem.t0 + s * (tf - problem.t0))
        return np.asarray(X, float), np.asarray(U, float), tf
    a = np.zeros(problem.n_x) if problem.x_start is None else np.asarray(problem.x_start, float)
    b = a if problem.x_end is None else np.asarray(problem.x_end, float)
    X = a[:, None] * (1.0 - s) + b[:, None] * s
    u = np.zeros(problem.n_u) if problem.u_nominal is None else np.asarray(problem.u_nominal, float)
    U = np.repeat(u[:, None], s.size, axis=1)
    return X, U, tf


def _finite(a) -> bool:
    return bool(np.all(np.isfinite(np.asarray(a, dtype=float))))


def validate(problem: OcpProblem, samples: int = 5) -> list[str]:
    """Probe every callback at the default guess; returns a list of violations."""
    out: list[str] = []
    X, U, _ = default_guess(problem, np.linspace(0.0, 1.0, samples))
    if X.shape != (problem.n_x, samples):
        return [f"initial guess state shape {X.shape}"]
    if U.shape != (problem.n_u, samples):
        return [f"initial guess control shape {U.shape}"]
    checks = [
        ("dynamics", lambda: problem.f(X, U), (problem.n_x, samples)),
        ("running cost", lambda: problem.F(X, U), (samples,)),
        ("boundary condition", lambda: problem.e(X[:, 0], X[:, -1]), (problem.n_e,)),
        ("terminal cost", lambda: problem.E(X[:, 0], X[:, -1]), ()),
    ]
    if problem.h is not None:
        checks.append(("path constraint", lambda: problem.h(X, U), (problem.n_h, samples)))
    for label, fn, shape in checks:
        try:
            val = np.asarray(fn(), dtype=float)
        except Exception as exc:  # report, never raise
            out.append(f"{label} raised {type(exc).__name__}: {exc}")
            continue
        if val.shape != shape:
            out.append(f"{label} dimension: expected {shape}, got {val.shape}")
        elif not _finite(val):
            out.append(f"non-finite {label}")
    for c in problem.structured:
        if isinstance(c, MinSeparationFromPoint):
            bad = [i for i in c.indices if not 0 <= i < problem.n_x]
        elif isinstance(c, MinSeparationPairwise):
            bad = [i for i in c.indices_a + c.indices_b if not 0 <= i < problem.n_x]
        else:
            bad = [i for i in c.indices if not 0 <= i < problem.n_u]
        if bad:
            out.append(f"structured constraint projection out of range: {bad}")
    return out
