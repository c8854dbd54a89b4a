"""Built-in problems: the four benchmark examples, small toys with closed-form
solutions, and JSON-configured integrator / Dubins families."""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Optional

import jsonschema
import numpy as np

from .ocp import (
    Fixed,
    FreeFinalTime,
    MinSeparationFromPoint,
    MinSeparationPairwise,
    NormBand,
    OcpProblem,
)

__all__ = [
    "EX1_SQRT_EPS",
    "EX2_SWITCH_TIME",
    "EX2_TERMINAL",
    "Reference",
    "builtin_example",
    "example1",
    "example1_reference",
    "example2",
    "example2_reference",
    "example3",
    "example4",
    "formation",
    "from_config",
    "load_config",
    "lq_toy",
    "obstacle_toy",
    "smooth_toy",
]

EX1_SQRT_EPS = 1e-12
EX2_TERMINAL = 39.392
EX2_SWITCH_TIME = 1.096


@dataclass(frozen=True)
class Reference:
    """Reference solution ``y(t)``, ``u(t)`` and costate ``lam(t)`` (arrays in, arrays out).

    The costate follows the sign convention of the Hamiltonian
    ``H = F + lam^T f``.
    """

    y: Callable
    u: Callable
    lam: Optional[Callable] = None
    objective: Optional[float] = None


def _boundary(x_start, x_end):
    a = np.asarray(x_start, float)
    b = np.asarray(x_end, float)

    def e(x0, xf):
        return np.concatenate([x0 - a, xf - b])

    def e_jac(x0, xf):
        n = a.size
        z = np.zeros((n, n))
        return np.vstack([np.eye(n), z]), np.vstack([z, np.eye(n)])

    return e, e_jac


# -- Example 1 ---------------------------------------------------------------

def _sqrt_guarded(y):
    return np.sqrt(np.maximum(y, EX1_SQRT_EPS))


def example1() -> OcpProblem:
    def f(X, U):
        return 2.0 * X + 2.0 * U * _sqrt_guarded(X)

    def f_jac(X, U):
        r = _sqrt_guarded(X)
        dr = np.where(X > EX1_SQRT_EPS, 0.5 / r, 0.0)
        return (2.0 + 2.0 * U * dr)[None], (2.0 * r)[None]

    def F(X, U):
        return 0.5 * (X[0] + U[0] ** 2)

    def F_grad(X, U):
        return np.full_like(X, 0.5), U.copy()

    e, e_jac = _boundary([2.0], [1.0])
    return OcpProblem(
        n_x=1, n_u=1, n_e=2, f=f, F=F, e=e, horizon=Fixed(0.0, 5.0),
        f_jac=f_jac, F_grad=F_grad, e_jac=e_jac,
        x_start=(2.0,), x_end=(1.0,), u_nominal=(0.0,), name="example1",
    )


_EX1_REF = None


def example1_reference() -> Reference:
    """Shipped fine-mesh shooting solution, interpolated by cubic Hermite splines."""
    global _EX1_REF
    if _EX1_REF is None:
        from scipy.interpolate import CubicHermiteSpline

        path = resources.files("bernopt") / "data" / "example1_reference.csv"
        data = np.loadtxt(str(path), delimiter=",", skiprows=1)
        t, y, u, lam, yd, lamd = data.T
        ys = CubicHermiteSpline(t, y, yd)
        ls = CubicHermiteSpline(t, lam, lamd)

        def u_of(tt):
            # u = -2 lam sqrt(y) on the optimal arc
            return -2.0 * ls(tt) * np.sqrt(np.maximum(ys(tt), 0.0))

        meta = json.loads((resources.files("bernopt") / "data" / "example1_reference.json").read_text())
        _EX1_REF = Reference(ys, u_of, ls, meta.get("objective"))
    return _EX1_REF


# -- Example 2 ---------------------------------------------------------------

def example2() -> OcpProblem:
    def f(X, U):
        return X + U

    def f_jac(X, U):
        K = X.shape[1]
        return np.ones((1, 1, K)), np.ones((1, 1, K))

    def F(X, U):
        return 3.0 * U[0] - 2.0 * X[0]

    def F_grad(X, U):
        return np.full_like(X, -2.0), np.full_like(U, 3.0)

    def h(X, U):
        return np.vstack([U[0] - 2.0, -U[0]])

    def h_jac(X, U):
        K = X.shape[1]
        hu = np.zeros((2, 1, K))
        hu[0, 0] = 1.0
        hu[1, 0] = -1.0
        return np.zeros((2, 1, K)), hu

    e, e_jac = _boundary([4.0], [EX2_TERMINAL])
    return OcpProblem(
        n_x=1, n_u=1, n_e=2, n_h=2, f=f, F=F, h=h, e=e, horizon=Fixed(0.0, 2.0),
        f_jac=f_jac, F_grad=F_grad, h_jac=h_jac, e_jac=e_jac,
        x_start=(4.0,), x_end=(EX2_TERMINAL,), u_nominal=(1.0,), name="example2",
    )


def example2_reference(switch: float | None = None) -> Reference:
    """Bang-bang solution: u = 2 then 0, switch solved from the terminal condition."""
    if switch is None:
        # y(ts) = 6 e^ts - 2, then y(2) = y(ts) e^(2 - ts) = 6 e^2 - 2 e^(2 - ts)
        switch = float(2.0 - np.log((6.0 * np.e**2 - EX2_TERMINAL) / 2.0))
    ts = switch

    def y(t):
        t = np.asarray(t, float)
        y1 = 6.0 * np.exp(t) - 2.0
        y2 = (6.0 * np.exp(ts) - 2.0) * np.exp(t - ts)
        return np.where(t <= ts, y1, y2)

    def u(t):
        return np.where(np.asarray(t, float) <= ts, 2.0, 0.0)

    def lam(t):
        # H = 3u - 2y + lam (y + u); lam' = 2 - lam, switching function 3 + lam
        return 2.0 - 5.0 * np.exp(ts - np.asarray(t, float))

    obj = float(
        3.0 * 2.0 * ts
        - 2.0 * ((6.0 * np.exp(ts) - 6.0) - 2.0 * ts)
        - 2.0 * (6.0 * np.exp(ts) - 2.0) * (np.exp(2.0 - ts) - 1.0)
    )
    return Reference(y, u, lam, obj)


# -- Example 3 ---------------------------------------------------------------

EX3_START = (-500.0, -900.0)
EX3_GOAL = (1500.0, -600.0)
EX3_OBSTACLES = ((0.0, -800.0), (450.0, -750.0), (850.0, -730.0))
EX3_CLEARANCE = 50.0
EX3_SPEED = (15.0, 32.0)


def _integrator(start, goal, obstacles, clearance, speed, tf_bounds=(10.0, 600.0), name="integrator"):
    start, goal = np.asarray(start, float), np.asarray(goal, float)
    d = start.size

    def f(X, U):
        return U.copy()

    def f_jac(X, U):
        K = X.shape[1]
        eye = np.repeat(np.eye(d)[:, :, None], K, axis=2)
        return np.zeros((d, d, K)), eye

    e, e_jac = _boundary(start, goal)
    structured = [MinSeparationFromPoint(tuple(range(d)), tuple(o), clearance) for o in obstacles]
    structured.append(NormBand(tuple(range(d)), speed[0], speed[1]))
    dist = float(np.linalg.norm(goal - start))
    v_guess = 0.75 * speed[1]
    tf_guess = float(np.clip(dist / v_guess, tf_bounds[0], tf_bounds[1]))
    u_nom = tuple((goal - start) / tf_guess)
    return OcpProblem(
        n_x=d, n_u=d, n_e=2 * d, f=f, e=e, f_jac=f_jac, e_jac=e_jac,
        horizon=FreeFinalTime(0.0, tf_bounds[0], tf_bounds[1], tf_guess=tf_guess),
        structured=tuple(structured), x_start=tuple(start), x_end=tuple(goal),
        u_nominal=u_nom, name=name,
    )


def example3() -> OcpProblem:
    return _integrator(EX3_START, EX3_GOAL, EX3_OBSTACLES, EX3_CLEARANCE, EX3_SPEED, name="example3")


# -- Example 4 ---------------------------------------------------------------

EX4_SPEED = (15.0, 32.0)
EX4_OMEGA = 0.3
EX4_CLEARANCE = 50.0


def formation(k: int, spacing: float = 150.0, depth: float = 2000.0):
    """Default start line and '>' shaped goal formation for ``k`` vehicles.

    Not taken from any published scenario: vehicles start on a vertical line
    heading east; goals form a '>' whose tip points east.  Goals are mirrored
    across the centre line, so off-centre vehicles must cross.
    """
    c = (k - 1) / 2.0
    starts, goals = [], []
    for i in range(k):
        off = i - c
        starts.append((0.0, spacing * off, 0.0))
        r = abs(off)
        side = -np.sign(off)
        # small asymmetry keeps the crossing problem away from exact ties
        goals.append((depth - 0.6 * spacing * r + 10.0 * off, side * 0.55 * spacing * r))
    return starts, goals


def _dubins_fleet(starts, goals, speed, omega_max, clearance, mode="temporal", tf_bounds=(10.0, 600.0), name="dubins"):
    k = len(starts)
    starts = np.asarray(starts, float)
    goals = np.asarray(goals, float)
    n_x, n_u = 3 * k, 2 * k

    def f(X, U):
        out = np.empty_like(X)
        V, w, psi = U[0::2], U[1::2], X[2::3]
        out[0::3] = V * np.cos(psi)
        out[1::3] = V * np.sin(psi)
        out[2::3] = w
        return out

    def f_jac(X, U):
        K = X.shape[1]
        fx = np.zeros((n_x, n_x, K))
        fu = np.zeros((n_x, n_u, K))
        for i in range(k):
            V, psi = U[2 * i], X[3 * i + 2]
            fx[3 * i, 3 * i + 2] = -V * np.sin(psi)
            fx[3 * i + 1, 3 * i + 2] = V * np.cos(psi)
            fu[3 * i, 2 * i] = np.cos(psi)
            fu[3 * i + 1, 2 * i] = np.sin(psi)
            fu[3 * i + 2, 2 * i + 1] = 1.0
        return fx, fu

    lo, hi = speed

    def h(X, U):
        V, w = U[0::2], U[1::2]
        return np.vstack([V - hi, lo - V, w - omega_max, -omega_max - w])

    def h_jac(X, U):
        K = X.shape[1]
        hu = np.zeros((4 * k, n_u, K))
        for i in range(k):
            hu[i, 2 * i] = 1.0
            hu[k + i, 2 * i] = -1.0
            hu[2 * k + i, 2 * i + 1] = 1.0
            hu[3 * k + i, 2 * i + 1] = -1.0
        return np.zeros((4 * k, n_x, K)), hu

    pos = [i for v in range(k) for i in (3 * v, 3 * v + 1)]

    def e(x0, xf):
        return np.concatenate([x0 - starts.ravel(), xf[pos] - goals.ravel()])

    def e_jac(x0, xf):
        m = 3 * k + 2 * k
        J0, Jf = np.zeros((m, n_x)), np.zeros((m, n_x))
        J0[: 3 * k] = np.eye(n_x)
        for r, i in enumerate(pos):
            Jf[3 * k + r, i] = 1.0
        return J0, Jf

    structured = tuple(
        MinSeparationPairwise((3 * a, 3 * a + 1), (3 * b, 3 * b + 1), clearance, mode)
        for a, b in itertools.combinations(range(k), 2)
    )
    dist = np.linalg.norm(goals - starts[:, :2], axis=1)
    tf_guess = float(np.clip(dist.max() / (0.75 * hi), tf_bounds[0], tf_bounds[1]))
    heading = np.arctan2(goals[:, 1] - starts[:, 1], goals[:, 0] - starts[:, 0])

    def guess(t):
        s = (t - t[0]) / (t[-1] - t[0])
        X = np.empty((n_x, t.size))
        U = np.empty((n_u, t.size))
        for i in range(k):
            X[3 * i] = starts[i, 0] + s * (goals[i, 0] - starts[i, 0])
            X[3 * i + 1] = starts[i, 1] + s * (goals[i, 1] - starts[i, 1])
            X[3 * i + 2] = starts[i, 2] + s * (heading[i] - starts[i, 2])
            U[2 * i] = np.clip(dist[i] / tf_guess, lo, hi)
            U[2 * i + 1] = 0.0
        return X, U

    return OcpProblem(
        n_x=n_x, n_u=n_u, n_e=5 * k, n_h=4 * k, f=f, f_jac=f_jac, h=h, h_jac=h_jac,
        e=e, e_jac=e_jac,
        horizon=FreeFinalTime(0.0, tf_bounds[0], tf_bounds[1], tf_guess=tf_guess),
        structured=structured, initial_guess=guess, name=name,
    )


def example4(fleet: int = 3, mode: str = "temporal") -> OcpProblem:
    if not 2 <= fleet <= 11:
        raise ValueError("fleet size must be between 2 and 11")
    starts, goals = formation(fleet)
    return _dubins_fleet(starts, goals, EX4_SPEED, EX4_OMEGA, EX4_CLEARANCE, mode, name=f"example4_{fleet}")


def builtin_example(id: int, **variant) -> OcpProblem:
    """Example problem 1..4; ``variant`` is passed to the example builder."""
    makers = {1: example1, 2: example2, 3: example3, 4: example4}
    if id not in makers:
        raise ValueError(f"unknown example id {id!r}; expected 1, 2, 3 or 4")
    return makers[id](**variant)


# -- toys ----------------------------------------------------------------------

def lq_toy() -> tuple[OcpProblem, Reference]:
    """min 1/2 int u^2, x' = u, x(0)=0, x(1)=1: u = 1, lam = -1."""
    def F(X, U):
        return 0.5 * U[0] ** 2

    e, e_jac = _boundary([0.0], [1.0])
    p = OcpProblem(
        n_x=1, n_u=1, n_e=2, f=lambda X, U: U.copy(), F=F, e=e, e_jac=e_jac,
        horizon=Fixed(0.0, 1.0), x_start=(0.0,), x_end=(1.0,), name="lq_toy",
    )
    one = lambda t: np.ones_like(np.asarray(t, float))
    ref = Reference(lambda t: np.asarray(t, float), one, lambda t: -one(t), 0.5)
    return p, ref


def smooth_toy() -> tuple[OcpProblem, Reference]:
    """min 1/2 int (x^2 + u^2), x' = u, x(0)=1, x(1)=0."""
    def F(X, U):
        return 0.5 * (X[0] ** 2 + U[0] ** 2)

    e, e_jac = _boundary([1.0], [0.0])
    p = OcpProblem(
        n_x=1, n_u=1, n_e=2, f=lambda X, U: U.copy(), F=F, e=e, e_jac=e_jac,
        horizon=Fixed(0.0, 1.0), x_start=(1.0,), x_end=(0.0,), name="smooth_toy",
    )
    s1 = np.sinh(1.0)
    y = lambda t: np.sinh(1.0 - np.asarray(t, float)) / s1
    u = lambda t: -np.cosh(1.0 - np.asarray(t, float)) / s1
    # H_u = u + lam = 0
    lam = lambda t: np.cosh(1.0 - np.asarray(t, float)) / s1
    return p, Reference(y, u, lam, 0.5 * np.cosh(1.0) / s1)


def obstacle_toy() -> OcpProblem:
    """min int (x^2 + u^2), x' = u, x >= 1, free ends: x = 1, u = 0, mu = 2, lam = 0."""
    def F(X, U):
        return X[0] ** 2 + U[0] ** 2

    return OcpProblem(
        n_x=1, n_u=1, n_e=0, n_h=1, f=lambda X, U: U.copy(), F=F,
        h=lambda X, U: 1.0 - X, e=lambda x0, xf: np.zeros(0),
        horizon=Fixed(0.0, 1.0), x_start=(1.5,), x_end=(1.5,), u_nominal=(0.0,),
        name="obstacle_toy",
    )


# -- JSON configuration -------------------------------------------------------

def _schema() -> dict:
    return json.loads((resources.files("bernopt") / "data" / "problem_schema.json").read_text())


def load_config(path_or_dict) -> dict:
    """Read and validate a problem configuration (unknown keys rejected)."""
    if isinstance(path_or_dict, (str, Path)):
        cfg = json.loads(Path(path_or_dict).read_text())
    else:
        cfg = dict(path_or_dict)
    jsonschema.validate(cfg, _schema())
    return cfg


def from_config(path_or_dict) -> OcpProblem:
    cfg = load_config(path_or_dict)
    tf = tuple(cfg.get("tf_bounds", (10.0, 600.0)))
    if cfg["family"] == "integrator":
        return _integrator(
            cfg["start"], cfg["goal"], cfg.get("obstacles", []), cfg.get("clearance", 50.0),
            tuple(cfg.get("speed", (15.0, 32.0))), tf, cfg.get("name", "integrator"),
        )
    starts = [tuple(s) for s in cfg["starts"]]
    goals = [tuple(g) for g in cfg["goals"]]
    if len(starts) != len(goals):
        raise ValueError("starts and goals must have the same length")
    return _dubins_fleet(
        starts, goals, tuple(cfg.get("speed", (15.0, 32.0))), cfg.get("omega_max", 0.3),
        cfg.get("clearance", 50.0), cfg.get("separation", "temporal"), tf, cfg.get("name", "dubins"),
    )
