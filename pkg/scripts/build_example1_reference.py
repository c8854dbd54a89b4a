"""Build the Example 1 reference solution by single shooting on the optimality system.

With H = (y + u^2)/2 + lam (2y + 2u sqrt(y)):

    u    = -2 lam sqrt(y)
    y'   = y (2 - 4 lam)
    lam' = 2 lam^2 - 2 lam - 1/2

with y(0) = 2, y(5) = 1.  lam(0) is found by Brent's method on y(5) - 1.
Writes src/bernopt/data/example1_reference.{csv,json}.
"""

from __future__ import annotations

import argparse
import json
from pathlib import Path

import numpy as np
from scipy.integrate import solve_ivp
from scipy.optimize import brentq

RTOL, ATOL = 1e-13, 1e-14
T1 = 5.0


def rhs(t, z):
    y, lam, _ = z
    u = -2.0 * lam * np.sqrt(max(y, 0.0))
    return [y * (2.0 - 4.0 * lam), 2.0 * lam**2 - 2.0 * lam - 0.5, 0.5 * (y + u**2)]


def shoot(lam0, t_eval=None):
    return solve_ivp(rhs, (0.0, T1), [2.0, lam0, 0.0], method="DOP853", rtol=RTOL, atol=ATOL,
                     t_eval=t_eval, dense_output=False)


def terminal_miss(lam0):
    sol = shoot(lam0)
    return sol.y[0, -1] - 1.0


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--points", type=int, default=2001)
    ap.add_argument("--out", type=Path, default=Path(__file__).resolve().parents[1] / "src" / "bernopt" / "data")
    args = ap.parse_args(argv)

    # the costate equation blows up for lam0 above its upper equilibrium (1 + sqrt 2)/2
    hi = (1.0 + np.sqrt(2.0)) / 2.0 - 1e-7
    lam0 = brentq(terminal_miss, 1.2, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200)
    t = np.linspace(0.0, T1, args.points)
    sol = shoot(lam0, t)
    y, lam, cost = sol.y
    u = -2.0 * lam * np.sqrt(y)
    yd = y * (2.0 - 4.0 * lam)
    lamd = 2.0 * lam**2 - 2.0 * lam - 0.5

    args.out.mkdir(parents=True, exist_ok=True)
    table = np.column_stack([t, y, u, lam, yd, lamd])
    np.savetxt(args.out / "example1_reference.csv", table, delimiter=",", fmt="%.17g",
               header="t,y,u,lambda,y_dot,lambda_dot", comments="")
    meta = {
        "method": "single shooting, DOP853, Brent root on lambda(0)",
        "rtol": RTOL,
        "atol": ATOL,
        "lambda0": lam0,
        "terminal_miss": float(y[-1] - 1.0),
        "objective": float(cost[-1]),
        "points": args.points,
    }
    (args.out / "example1_reference.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(json.dumps(meta, indent=2))


if __name__ == "__main__":
    main()
