"""Transcription of an :class:`OcpProblem` into a finite nonlinear program.

Decision vector layout: ``z = [xbar (n_x, N+1) row-major, ubar (n_u, N+1)
row-major, t_f (free final time only)]``.

Two evaluation modes decide where the callbacks are sampled:

* ``coefficient`` (default): at the Bernstein coefficients themselves.  The
  derivative samples are the degree-elevated derivative coefficients, so the
  dynamics rows read ``(D xbar)_j / T - f(xbar_j, ubar_j)``.  Path rows on
  coefficients bound the whole polynomial through the convex hull property.
* ``node``: at polynomial values ``x_N(t_j) = xbar B[j]``.

Structured constraints always add rows at the polynomial node values; with
``certify`` they also add one whole-interval row per constraint backed by the
geometry module.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, replace
from typing import Literal

import numpy as np

from . import geometry
from .bernstein import (
    BernsteinPoly,
    basis_matrix,
    derivative_matrix,
    elevation_matrix,
    poly_product,
    poly_sum,
    product_weights,
    subdivision_matrix,
)
from .ocp import (
    MinSeparationFromPoint,
    MinSeparationPairwise,
    NormBand,
    OcpProblem,
    default_guess,
)

__all__ = [
    "Layout",
    "TranscribedNlp",
    "TranscriptionOptions",
    "attach_structured",
    "callback_jacobians",
    "delta_schedule",
    "transcribe",
]

FD_STEP = np.cbrt(np.finfo(float).eps)


def delta_schedule(N: int, mode: str = "exact", c_p: float = 1.0, custom: float | None = None) -> float:
    """Relaxation bound for order ``N``: 0, ``c_p / N`` or a user value."""
    if N < 1:
        raise ValueError("N must be at least 1")
    if c_p < 0:
        raise ValueError("C_P must be non-negative")
    if mode == "exact":
        return 0.0
    if mode == "corollary":
        return c_p / N
    if mode == "custom":
        if custom is None or custom < 0:
            raise ValueError("custom mode needs a non-negative delta")
        return float(custom)
    raise ValueError(f"unknown delta mode {mode!r}")


@dataclass(frozen=True)
class TranscriptionOptions:
    evaluation: Literal["coefficient", "node"] = "coefficient"
    delta_mode: Literal["exact", "corollary", "custom"] = "exact"
    c_p: float = 1.0
    delta_custom: float | None = None
    certify: bool = False
    geometry_tol: float = 1e-6
    hull_pieces: int = 4
    # False keeps the certified bound rows as inactive placeholders (-1 with a
    # zero gradient), used for a cheap first phase; the row layout is unchanged
    bound_rows: bool = True

    def __post_init__(self):
        if self.evaluation not in ("coefficient", "node"):
            raise ValueError(f"unknown evaluation mode {self.evaluation!r}")


@dataclass(frozen=True)
class Layout:
    n_x: int
    n_u: int
    N: int
    free_time: bool

    @property
    def K(self) -> int:
        return self.N + 1

    @property
    def x_slice(self) -> slice:
        return slice(0, self.n_x * self.K)

    @property
    def u_slice(self) -> slice:
        return slice(self.n_x * self.K, (self.n_x + self.n_u) * self.K)

    @property
    def tf_index(self) -> int | None:
        return (self.n_x + self.n_u) * self.K if self.free_time else None

    @property
    def size(self) -> int:
        return (self.n_x + self.n_u) * self.K + int(self.free_time)

    def pack(self, xbar, ubar, tf=None) -> np.ndarray:
        xbar = np.asarray(xbar, float).reshape(self.n_x, self.K)
        ubar = np.asarray(ubar, float).reshape(self.n_u, self.K)
        parts = [xbar.ravel(), ubar.ravel()]
        if self.free_time:
            if tf is None:
                raise ValueError("free final time layout needs t_f")
            parts.append([float(tf)])
        return np.concatenate(parts)

    def unpack(self, z):
        z = np.asarray(z, float)
        if z.shape != (self.size,):
            raise ValueError(f"decision vector has shape {z.shape}, expected ({self.size},)")
        xbar = z[self.x_slice].reshape(self.n_x, self.K)
        ubar = z[self.u_slice].reshape(self.n_u, self.K)
        tf = float(z[self.tf_index]) if self.free_time else None
        return xbar, ubar, tf


def _fd_block(fn, X, U):
    """Central differences of a sample-wise callback w.r.t. each row of X and U.

    ``fn`` returns ``lead + (K,)``; the result has shapes ``lead + (n_x, K)``
    and ``lead + (n_u, K)``.
    """
    res = []
    for A, which in ((X, 0), (U, 1)):
        n, K = A.shape
        cols = []
        for l in range(n):
            h = FD_STEP * np.maximum(1.0, np.abs(A[l]))
            Ap, Am = A.copy(), A.copy()
            Ap[l] += h
            Am[l] -= h
            if which == 0:
                fp, fm = fn(Ap, U), fn(Am, U)
            else:
                fp, fm = fn(X, Ap), fn(X, Am)
            cols.append((np.asarray(fp, float) - np.asarray(fm, float)) / (2.0 * h))
        res.append(np.stack(cols, axis=-2) if cols else np.zeros(np.shape(fn(X, U))[:-1] + (0, K)))
    return res


def _fd_vector(fn, x0, xf):
    """Central differences of ``fn(x0, xf)`` (scalar or vector) in both arguments."""
    base = np.atleast_1d(np.asarray(fn(x0, xf), float))
    out = []
    for arg in (0, 1):
        v = (x0, xf)[arg]
        J = np.empty(base.shape + (v.size,))
        for i in range(v.size):
            h = FD_STEP * max(1.0, abs(v[i]))
            vp, vm = v.copy(), v.copy()
            vp[i] += h
            vm[i] -= h
            args_p = (vp, xf) if arg == 0 else (x0, vp)
            args_m = (vm, xf) if arg == 0 else (x0, vm)
            J[..., i] = (np.atleast_1d(fn(*args_p)) - np.atleast_1d(fn(*args_m))) / (2.0 * h)
        out.append(J)
    return out


def callback_jacobians(problem: OcpProblem, X, U):
    """Sample-wise derivatives of f, F and h; analytic when supplied."""
    if problem.f_jac is not None:
        fx, fu = problem.f_jac(X, U)
    else:
        fx, fu = _fd_block(problem.f, X, U)
    if problem.F_grad is not None:
        Fx, Fu = problem.F_grad(X, U)
    else:
        Fx, Fu = _fd_block(problem.F, X, U)
    hx = hu = None
    if problem.n_h:
        if problem.h_jac is not None:
            hx, hu = problem.h_jac(X, U)
        else:
            hx, hu = _fd_block(problem.h, X, U)
    return np.asarray(fx), np.asarray(fu), np.asarray(Fx), np.asarray(Fu), hx, hu


class TranscribedNlp:
    """The transcribed problem as a dense NLP: ``min f(z)`` s.t. ``c_eq(z) = 0``, ``c_ineq(z) <= 0``."""

    def __init__(self, problem: OcpProblem, N: int, options: TranscriptionOptions | None = None):
        if int(N) != N or N < 1:
            raise ValueError("order N must be an integer >= 1")
        N = int(N)
        self.problem = problem
        self.N = N
        self.options = options or TranscriptionOptions()
        self.layout = Layout(problem.n_x, problem.n_u, N, problem.free_time)
        K = N + 1
        s = np.arange(K) / N
        self.s_nodes = s
        self.B = basis_matrix(N, s)
        self.B[0] = 0.0
        self.B[0, 0] = 1.0
        self.B[-1] = 0.0
        self.B[-1, -1] = 1.0
        self.Bd = basis_matrix(N - 1, s)
        if self.options.evaluation == "coefficient":
            self.S = np.eye(K)
            self.G = elevation_matrix(N - 1, N) @ derivative_matrix(N)
        else:
            self.S = self.B
            self.G = self.Bd @ derivative_matrix(N)
        o = self.options
        self.delta_P = delta_schedule(N, o.delta_mode, o.c_p, o.delta_custom)
        self._build_rows()
        self._cache_vals: OrderedDict = OrderedDict()
        self._cache_jac: OrderedDict = OrderedDict()

    # layout helpers -------------------------------------------------------
    @property
    def n(self) -> int:
        return self.layout.size

    def pack(self, xbar, ubar, tf=None):
        return self.layout.pack(xbar, ubar, tf)

    def unpack(self, z):
        return self.layout.unpack(z)

    def horizon_width(self, z) -> float:
        p = self.problem
        if p.free_time:
            return float(z[self.layout.tf_index]) - p.t0
        return p.horizon.t1 - p.horizon.t0

    def weight(self, z) -> float:
        return self.horizon_width(z) / (self.N + 1)

    def state_poly(self, z) -> BernsteinPoly:
        xb, _, _ = self.unpack(z)
        T = self.horizon_width(z)
        return BernsteinPoly(xb, (self.problem.t0, self.problem.t0 + T))

    def control_poly(self, z) -> BernsteinPoly:
        _, ub, _ = self.unpack(z)
        T = self.horizon_width(z)
        return BernsteinPoly(ub, (self.problem.t0, self.problem.t0 + T))

    def samples(self, z):
        """Callback inputs ``(X, U)`` for the current evaluation mode."""
        xb, ub, _ = self.unpack(z)
        return xb @ self.S.T, ub @ self.S.T

    def node_times(self, z) -> np.ndarray:
        return self.problem.t0 + self.s_nodes * self.horizon_width(z)

    def initial_point(self) -> np.ndarray:
        X, U, tf = default_guess(self.problem, self.s_nodes)
        return self.pack(X, U, tf if self.problem.free_time else None)

    # row bookkeeping ------------------------------------------------------
    def _build_rows(self):
        p, K = self.problem, self.N + 1
        eq = [f"e[{i}]" for i in range(p.n_e)]
        self.eq_blocks = {"boundary": slice(0, p.n_e)}
        ineq = [f"h[{i}]@{k}" for i in range(p.n_h) for k in range(K)]
        self.ineq_blocks = {"path": slice(0, len(ineq))}
        defect = [f"defect[{i}]@{k}" for i in range(p.n_x) for k in range(K)]
        if self.delta_P == 0.0:
            self.eq_blocks["dynamics"] = slice(len(eq), len(eq) + len(defect))
            eq += defect
        else:
            a = len(ineq)
            self.ineq_blocks["dynamics_upper"] = slice(a, a + len(defect))
            self.ineq_blocks["dynamics_lower"] = slice(a + len(defect), a + 2 * len(defect))
            ineq += [d + "+" for d in defect] + [d + "-" for d in defect]
        if p.free_time:
            a = len(ineq)
            self.ineq_blocks["tf_bounds"] = slice(a, a + 2)
            ineq += ["tf_lower", "tf_upper"]
        self.structured_blocks = []
        for ci, c in enumerate(p.structured):
            a = len(ineq)
            names = self._structured_names(ci, c)
            ineq += names
            self.structured_blocks.append(slice(a, len(ineq)))
        self.eq_names, self.ineq_names = eq, ineq
        self.n_eq, self.n_ineq = len(eq), len(ineq)

    def _hull_rows(self) -> int:
        return self.options.hull_pieces * (2 * self.N + 1)

    @property
    def hull_matrix(self) -> np.ndarray:
        """Subdivision map applied to degree-2N squared-margin coefficients."""
        if getattr(self, "_hull", None) is None:
            self._hull = subdivision_matrix(2 * self.N, self.options.hull_pieces)
        return self._hull

    def _structured_names(self, ci, c):
        K = self.N + 1
        if isinstance(c, MinSeparationFromPoint):
            names = [f"sep{ci}@{k}" for k in range(K)]
        elif isinstance(c, MinSeparationPairwise):
            if c.mode == "temporal":
                names = [f"pair{ci}@{k}" for k in range(K)]
            else:
                names = [f"pair{ci}@{j},{k}" for j in range(K) for k in range(K)]
        elif isinstance(c, NormBand):
            names = [f"band{ci}_lo@{k}" for k in range(K)] + [f"band{ci}_hi@{k}" for k in range(K)]
        else:
            raise TypeError(f"unsupported structured constraint {type(c).__name__}")
        if self.options.certify:
            M = self._hull_rows()
            if isinstance(c, NormBand):
                names += [f"band{ci}_lo@certified", f"band{ci}_hi@certified"]
                names += [f"band{ci}_lo@hull{k}" for k in range(M)]
                names += [f"band{ci}_hi@hull{k}" for k in range(M)]
            else:
                stem = names[0].split("@")[0]
                names.append(stem + "@certified")
                if not (isinstance(c, MinSeparationPairwise) and c.mode == "spatial"):
                    names += [f"{stem}@hull{k}" for k in range(M)]
        return names

    # evaluation -----------------------------------------------------------
    def _values(self, z):
        key = z.tobytes()
        if key in self._cache_vals:
            return self._cache_vals[key]
        p = self.problem
        xb, ub, _ = self.unpack(z)
        T = self.horizon_width(z)
        if not T > 0:
            raise ValueError("non-positive horizon width")
        w = T / (self.N + 1)
        X, U = xb @ self.S.T, ub @ self.S.T
        Xd = xb @ self.G.T / T
        fval = np.asarray(p.f(X, U), float)
        Fval = np.asarray(p.F(X, U), float)
        obj = float(p.E(xb[:, 0], xb[:, -1])) + w * float(Fval.sum())
        if p.free_time:
            obj += p.horizon.time_weight * float(z[self.layout.tf_index])
        d = Xd - fval
        eq = [np.atleast_1d(np.asarray(p.e(xb[:, 0], xb[:, -1]), float))]
        ineq = []
        if p.n_h:
            ineq.append((np.asarray(p.h(X, U), float) - self.delta_P).ravel())
        if self.delta_P == 0.0:
            eq.append(d.ravel())
        else:
            r = self.delta_P / np.sqrt(p.n_x)
            ineq += [(d - r).ravel(), (-d - r).ravel()]
        if p.free_time:
            tf = float(z[self.layout.tf_index])
            ineq.append(np.array([p.horizon.tf_lower - tf, tf - p.horizon.tf_upper]))
        geo = []
        for c in p.structured:
            rows, info = self._structured_values(c, xb, ub)
            ineq.append(rows)
            geo.append(info)
        vals = dict(
            obj=obj,
            eq=np.concatenate(eq) if eq else np.zeros(0),
            ineq=np.concatenate(ineq) if ineq else np.zeros(0),
            X=X, U=U, Xd=Xd, T=T, w=w, F=Fval, geo=geo,
        )
        for k in ("eq", "ineq"):
            if not np.all(np.isfinite(vals[k])):
                raise FloatingPointError(f"non-finite {k} constraint values")
        if not np.isfinite(obj):
            raise FloatingPointError("non-finite objective")
        _remember(self._cache_vals, key, vals)
        return vals

    def objective(self, z) -> float:
        return self._values(np.asarray(z, float))["obj"]

    def eq(self, z) -> np.ndarray:
        return self._values(np.asarray(z, float))["eq"]

    def ineq(self, z) -> np.ndarray:
        return self._values(np.asarray(z, float))["ineq"]

    def _jacobians(self, z):
        key = z.tobytes()
        if key in self._cache_jac:
            return self._cache_jac[key]
        v = self._values(z)
        p, lay, K = self.problem, self.layout, self.N + 1
        nx, nu, n = p.n_x, p.n_u, self.n
        xb, ub, _ = self.unpack(z)
        X, U, T, w = v["X"], v["U"], v["T"], v["w"]
        S = self.S
        fx, fu, Fx, Fu, hx, hu = callback_jacobians(p, X, U)

        grad = np.zeros(n)
        if p.E_grad is not None:
            Ex0, Exf = p.E_grad(xb[:, 0], xb[:, -1])
        else:
            Ex0, Exf = _fd_vector(p.E, xb[:, 0], xb[:, -1])
            Ex0, Exf = Ex0.reshape(nx), Exf.reshape(nx)
        gx = w * (Fx @ S)
        gx[:, 0] += Ex0
        gx[:, -1] += Exf
        grad[lay.x_slice] = gx.ravel()
        grad[lay.u_slice] = (w * (Fu @ S)).ravel()
        if p.free_time:
            grad[lay.tf_index] = v["F"].sum() / K + p.horizon.time_weight

        if p.e_jac is not None:
            ex0, exf = p.e_jac(xb[:, 0], xb[:, -1])
        else:
            ex0, exf = _fd_vector(p.e, xb[:, 0], xb[:, -1])
        ex0 = np.asarray(ex0, float).reshape(p.n_e, nx)
        exf = np.asarray(exf, float).reshape(p.n_e, nx)
        Je = np.zeros((p.n_e, n))
        Jx = np.zeros((p.n_e, nx, K))
        Jx[:, :, 0] += ex0
        Jx[:, :, -1] += exf
        Je[:, lay.x_slice] = Jx.reshape(p.n_e, nx * K)

        # dynamics defect d[i, k] = (xb G^T)[i, k] / T - f(X, U)[i, k]
        Jd = np.zeros((nx * K, n))
        Jdx = np.einsum("il,km->iklm", np.eye(nx), self.G / T) - np.einsum("ilk,km->iklm", fx, S)
        Jd[:, lay.x_slice] = Jdx.reshape(nx * K, nx * K)
        Jd[:, lay.u_slice] = -np.einsum("ilk,km->iklm", fu, S).reshape(nx * K, nu * K)
        if p.free_time:
            Jd[:, lay.tf_index] = -(v["Xd"] / T).ravel()

        eq = [Je]
        ineq = []
        if p.n_h:
            Jh = np.zeros((p.n_h * K, n))
            Jh[:, lay.x_slice] = np.einsum("ilk,km->iklm", hx, S).reshape(p.n_h * K, nx * K)
            Jh[:, lay.u_slice] = np.einsum("ilk,km->iklm", hu, S).reshape(p.n_h * K, nu * K)
            ineq.append(Jh)
        if self.delta_P == 0.0:
            eq.append(Jd)
        else:
            ineq += [Jd, -Jd]
        if p.free_time:
            Jt = np.zeros((2, n))
            Jt[0, lay.tf_index] = -1.0
            Jt[1, lay.tf_index] = 1.0
            ineq.append(Jt)
        for c, info in zip(p.structured, v["geo"]):
            ineq.append(self._structured_jacobian(c, xb, ub, info))
        jac = dict(
            grad=grad,
            eq=np.vstack(eq) if eq else np.zeros((0, n)),
            ineq=np.vstack(ineq) if ineq else np.zeros((0, n)),
        )
        _remember(self._cache_jac, key, jac)
        return jac

    def objective_grad(self, z) -> np.ndarray:
        return self._jacobians(np.asarray(z, float))["grad"]

    def eq_jac(self, z) -> np.ndarray:
        return self._jacobians(np.asarray(z, float))["eq"]

    def ineq_jac(self, z) -> np.ndarray:
        return self._jacobians(np.asarray(z, float))["ineq"]

    # structured constraints -----------------------------------------------
    def _bound(self, fn, *args):
        return fn(*args) if self.options.bound_rows else None

    def _structured_values(self, c, xb, ub):
        """Rows ``<= 0`` and the data needed for their gradients.

        In certify mode each constraint gets the row from the certified
        geometric bound plus "hull rows": every Bernstein coefficient of the
        squared margin polynomial, subdivided into ``hull_pieces`` uniform
        pieces, must respect the bound.  Hull rows are smooth in z and imply
        the constraint for all t; the bound row is then inactive unless the
        hull rows are loose.
        """
        B, tol, unit = self.B, self.options.geometry_tol, (0.0, 1.0)
        # hull rows imply each bound row up to the bracket width; the slack
        # keeps bound rows strictly inactive next to them
        slack = 2.0 * tol
        info = {}
        if isinstance(c, MinSeparationFromPoint):
            idx = list(c.indices)
            r = xb[idx] @ B.T - np.asarray(c.point)[:, None]
            dist = np.maximum(np.linalg.norm(r, axis=0), 1e-12)
            rows = [c.clearance - dist]
            info["node"] = (r, dist)
            if self.options.certify:
                rel = xb[idx] - np.asarray(c.point)[:, None]
                res = self._bound(geometry.curve_point_distance, BernsteinPoly(rel, unit), np.zeros(len(idx)), tol)
                rows.append([c.clearance - res.lower - slack] if res else [-1.0])
                rows.append(1.0 - self.hull_matrix @ squared_norm_coeffs(rel) / c.clearance**2)
                info["cert"] = res
        elif isinstance(c, MinSeparationPairwise):
            ia, ib = list(c.indices_a), list(c.indices_b)
            Pa, Pb = xb[ia] @ B.T, xb[ib] @ B.T
            if c.mode == "temporal":
                r = Pa - Pb
                dist = np.maximum(np.linalg.norm(r, axis=0), 1e-12)
            else:
                r = Pa[:, :, None] - Pb[:, None, :]
                dist = np.maximum(np.linalg.norm(r, axis=0), 1e-12).ravel()
            rows = [c.clearance - dist]
            info["node"] = (r, dist)
            if self.options.certify:
                if c.mode == "temporal":
                    rel = xb[ia] - xb[ib]
                    res = self._bound(geometry.curve_point_distance, BernsteinPoly(rel, unit), np.zeros(len(ia)), tol)
                    rows.append([c.clearance - res.lower - slack] if res else [-1.0])
                    rows.append(1.0 - self.hull_matrix @ squared_norm_coeffs(rel) / c.clearance**2)
                else:
                    res = self._bound(geometry.curve_min_distance, BernsteinPoly(xb[ia], unit), BernsteinPoly(xb[ib], unit), tol)
                    rows.append([c.clearance - res.lower - slack] if res else [-1.0])
                info["cert"] = res
        elif isinstance(c, NormBand):
            idx = list(c.indices)
            Un = ub[idx] @ B.T
            nrm = np.maximum(np.linalg.norm(Un, axis=0), 1e-12)
            rows = [c.lower - nrm, nrm - c.upper]
            info["node"] = (Un, nrm)
            if self.options.certify:
                qbar = squared_norm_coeffs(ub[idx])
                ext = self._bound(geometry.scalar_extrema, BernsteinPoly(qbar, unit), tol)
                hull = self.hull_matrix @ qbar
                if ext:
                    rows.append([c.lower**2 - ext.min_lower - slack, ext.max_upper - c.upper**2 - slack])
                else:
                    rows.append([-1.0, -1.0])
                lo2 = max(c.lower**2, 1.0)
                rows.append((c.lower**2 - hull) / lo2)
                rows.append(hull / c.upper**2 - 1.0)
                info["cert"] = ext
        else:
            raise TypeError(f"unsupported structured constraint {type(c).__name__}")
        return np.concatenate([np.ravel(r) for r in rows]), info

    def _structured_jacobian(self, c, xb, ub, info):
        lay, K, n, B, N = self.layout, self.N + 1, self.n, self.B, self.N
        xoff, uoff = lay.x_slice.start, lay.u_slice.start

        def xcol(i):
            return slice(xoff + i * K, xoff + (i + 1) * K)

        def ucol(i):
            return slice(uoff + i * K, uoff + (i + 1) * K)

        def bound_row(s, rel, cols_plus, cols_minus):
            # d/d coeff of (clearance - |rel(s)|) at the argmin s (envelope theorem)
            b = basis_matrix(N, [s])[0]
            v = rel @ b
            g = v / max(float(np.linalg.norm(v)), 1e-12)
            J = np.zeros((1, n))
            for a in range(len(cols_plus)):
                J[0, cols_plus[a]] -= g[a] * b
                if cols_minus is not None:
                    J[0, cols_minus[a]] += g[a] * b
            return J

        def hull_block(rel, scale, cols_plus, cols_minus):
            # rows scale * (hull @ qbar(rel)); qbar is quadratic in rel
            H = self.hull_matrix
            J = np.zeros((H.shape[0], n))
            for a in range(rel.shape[0]):
                d = scale * (H @ squared_norm_coeffs_jac(rel[a]))
                J[:, cols_plus[a]] += d
                if cols_minus is not None:
                    J[:, cols_minus[a]] -= d
            return J

        blocks = []
        if isinstance(c, MinSeparationFromPoint):
            r, dist = info["node"]
            J = np.zeros((K, n))
            for a, i in enumerate(c.indices):
                J[:, xcol(i)] -= (r[a] / dist)[:, None] * B
            blocks.append(J)
            if "cert" in info:
                rel = xb[list(c.indices)] - np.asarray(c.point)[:, None]
                cols = [xcol(i) for i in c.indices]
                res = info["cert"]
                blocks.append(bound_row(res.params[0], rel, cols, None) if res else np.zeros((1, n)))
                blocks.append(hull_block(rel, -1.0 / c.clearance**2, cols, None))
        elif isinstance(c, MinSeparationPairwise):
            r, dist = info["node"]
            if c.mode == "temporal":
                J = np.zeros((K, n))
                for a, (i, j) in enumerate(zip(c.indices_a, c.indices_b)):
                    gk = (r[a] / dist)[:, None] * B
                    J[:, xcol(i)] -= gk
                    J[:, xcol(j)] += gk
            else:
                J = np.zeros((K * K, n))
                dist2 = dist.reshape(K, K)
                for a, (i, j) in enumerate(zip(c.indices_a, c.indices_b)):
                    g = r[a] / dist2  # (K_a, K_b)
                    # row (ja, kb): d/d xbar_a[m] = g * B[ja, m]
                    J[:, xcol(i)] -= (g[:, :, None] * B[:, None, :]).reshape(K * K, K)
                    J[:, xcol(j)] += (g[:, :, None] * B[None, :, :]).reshape(K * K, K)
            blocks.append(J)
            if "cert" in info:
                res = info["cert"]
                if c.mode == "temporal":
                    rel = xb[list(c.indices_a)] - xb[list(c.indices_b)]
                    ca = [xcol(i) for i in c.indices_a]
                    cb = [xcol(j) for j in c.indices_b]
                    blocks.append(bound_row(res.params[0], rel, ca, cb) if res else np.zeros((1, n)))
                    blocks.append(hull_block(rel, -1.0 / c.clearance**2, ca, cb))
                elif res is None:
                    blocks.append(np.zeros((1, n)))
                else:
                    pa, pb = res.points
                    g = (pa - pb) / max(float(np.linalg.norm(pa - pb)), 1e-12)
                    Jc = np.zeros((1, n))
                    ba = basis_matrix(N, [res.params[0]])[0]
                    bb = basis_matrix(N, [res.params[1]])[0]
                    for a, (i, j) in enumerate(zip(c.indices_a, c.indices_b)):
                        Jc[0, xcol(i)] -= g[a] * ba
                        Jc[0, xcol(j)] += g[a] * bb
                    blocks.append(Jc)
        elif isinstance(c, NormBand):
            Un, nrm = info["node"]
            J = np.zeros((2 * K, n))
            for a, i in enumerate(c.indices):
                gk = (Un[a] / nrm)[:, None] * B
                J[:K, ucol(i)] -= gk
                J[K:, ucol(i)] += gk
            blocks.append(J)
            if "cert" in info:
                ext = info["cert"]
                idx = list(c.indices)
                Jc = np.zeros((2, n))
                extremes = ((ext.argmin, -1.0), (ext.argmax, 1.0)) if ext else ()
                for row, (s, sign) in enumerate(extremes):
                    b = basis_matrix(N, [s])[0]
                    uval = ub[idx] @ b
                    for a, i in enumerate(idx):
                        Jc[row, ucol(i)] += sign * 2.0 * uval[a] * b
                blocks.append(Jc)
                cols = [ucol(i) for i in idx]
                blocks.append(hull_block(ub[idx], -1.0 / max(c.lower**2, 1.0), cols, None))
                blocks.append(hull_block(ub[idx], 1.0 / c.upper**2, cols, None))
        return np.vstack(blocks)


def _remember(cache: OrderedDict, key, value, size: int = 4) -> None:
    cache[key] = value
    if len(cache) > size:
        cache.popitem(last=False)


def squared_norm_coeffs(R: np.ndarray) -> np.ndarray:
    """Degree-2N coefficients of ``sum_i r_i(s)^2`` from the rows of ``R``."""
    R = np.atleast_2d(R)
    N = R.shape[1] - 1
    W = product_weights(N, N)
    out = np.zeros(2 * N + 1)
    for r in R:
        out += np.bincount(_SUM_INDEX(N), weights=(W * np.outer(r, r)).ravel(), minlength=2 * N + 1)
    return out


def squared_norm_coeffs_jac(r: np.ndarray) -> np.ndarray:
    """Jacobian of the degree-2N coefficients of ``r(s)^2`` w.r.t. ``r``, shape (2N+1, N+1)."""
    N = r.size - 1
    W = product_weights(N, N)
    J = np.zeros((2 * N + 1, N + 1))
    j = np.arange(N + 1)
    for k in range(N + 1):
        # d/dr_j of W[j,k] r_j r_k lands in m = j + k, with the symmetric partner
        J[j + k, j] += 2.0 * W[j, k] * r[k]
    return J


def _SUM_INDEX(N: int) -> np.ndarray:
    i = np.arange(N + 1)
    return (i[:, None] + i[None, :]).ravel()


def _squared_norm_poly(u: BernsteinPoly) -> BernsteinPoly:
    comps = [BernsteinPoly(u.coeffs[i], u.domain) for i in range(u.dim)]
    q = poly_product(comps[0], comps[0])
    for ci in comps[1:]:
        q = poly_sum(q, poly_product(ci, ci))
    return q


def transcribe(problem: OcpProblem, N: int, options: TranscriptionOptions | None = None, **kwargs) -> TranscribedNlp:
    """Build the transcribed NLP; keyword arguments override fields of ``options``."""
    options = options or TranscriptionOptions()
    if kwargs:
        options = replace(options, **kwargs)
    return TranscribedNlp(problem, N, options)


def attach_structured(nlp: TranscribedNlp, constraints, certify: bool) -> TranscribedNlp:
    """A new transcription with extra structured constraints."""
    problem = replace(nlp.problem, structured=tuple(nlp.problem.structured) + tuple(constraints))
    return TranscribedNlp(problem, nlp.N, replace(nlp.options, certify=certify))
