"""Whole-interval geometric queries on Bernstein polynomials.

Lower bounds come from the convex hull of control points (GJK distance
between hulls, or the coefficient range for scalars); upper bounds come from
points actually on the curves. Pieces are refined by de Casteljau subdivision,
best first, until the bracket closes to the requested tolerance.
"""

from __future__ import annotations

import heapq
import itertools
from dataclasses import dataclass, field

import numpy as np

from .bernstein import BernsteinPoly, evaluate, subdivide

__all__ = [
    "DistanceResult",
    "ExtremaResult",
    "GeometryError",
    "curve_min_distance",
    "curve_point_distance",
    "gjk_distance",
    "scalar_extrema",
]

DEFAULT_NODE_BUDGET = 100_000


class GeometryError(RuntimeError):
    """Numerical failure; ``bracket`` holds the best ``(lower, upper)`` found."""

    def __init__(self, message, bracket=(0.0, np.inf)):
        super().__init__(message)
        self.bracket = bracket


def _closest_on_simplex(W: np.ndarray):
    """Closest point to the origin of conv(W), ``W`` of shape (k, d), k <= d+1.

    Every face is tried; the affine minimiser of a face counts only when its
    barycentric coordinates are non-negative.  Returns (point, weights, subset).
    """
    k = W.shape[0]
    best = None
    for r in range(1, k + 1):
        for subset in itertools.combinations(range(k), r):
            S = W[list(subset)]
            if r == 1:
                lam = np.ones(1)
            else:
                A = S[1:] - S[0]
                G = A @ A.T
                rhs = -A @ S[0]
                try:
                    mu = np.linalg.solve(G, rhs)
                except np.linalg.LinAlgError:
                    continue
                if not np.all(np.isfinite(mu)):
                    continue
                lam = np.concatenate(([1.0 - mu.sum()], mu))
                if np.any(lam < -1e-12):
                    continue
                lam = np.clip(lam, 0.0, None)
                lam /= lam.sum()
            v = lam @ S
            d2 = float(v @ v)
            if best is None or d2 < best[0] - 1e-300:
                best = (d2, v, lam, subset)
    _, v, lam, subset = best
    return v, lam, subset


def gjk_distance(A, B, max_iter: int | None = None, eps: float = 1e-13):
    """Euclidean distance between conv(A) and conv(B).

    ``A`` and ``B`` are (n_points, d) arrays (a 1-D array is one point).
    Returns ``(distance, witness_a, witness_b)`` with the witnesses in the
    respective hulls.
    """
    A = np.atleast_2d(np.asarray(A, dtype=float))
    B = np.atleast_2d(np.asarray(B, dtype=float))
    if A.size == 0 or B.size == 0:
        raise ValueError("point clouds must be non-empty")
    if A.shape[1] != B.shape[1]:
        raise ValueError(f"dimension mismatch: {A.shape[1]} vs {B.shape[1]}")
    d = A.shape[1]
    if max_iter is None:
        max_iter = 64 + 4 * (len(A) + len(B))
    scale = max(1.0, float(np.abs(A).max()), float(np.abs(B).max()))

    ia, ib = 0, 0
    verts = [(ia, ib)]
    W = (A[ia] - B[ib])[None, :]
    v, lam, subset = W[0], np.ones(1), (0,)
    vv = float(v @ v)
    for _ in range(max_iter):
        if vv <= (eps * scale) ** 2:
            vv = 0.0
            break
        ia = int(np.argmin(A @ v))
        ib = int(np.argmax(B @ v))
        w = A[ia] - B[ib]
        # v.w is a lower bound on |v| * dist; stop when the gap closes
        if vv - float(v @ w) <= eps * scale * np.sqrt(vv) or (ia, ib) in verts:
            break
        verts.append((ia, ib))
        W = np.vstack([W, w])
        v_new, lam, subset = _closest_on_simplex(W)
        verts = [verts[i] for i in subset]
        W = W[list(subset)]
        vv_new = float(v_new @ v_new)
        if len(verts) == d + 1 and vv_new <= (eps * scale) ** 2:
            v, vv = v_new, 0.0
            break
        if vv_new >= vv - 1e-14 * scale**2:
            # stalled: keep the better of the two iterates
            if vv_new < vv:
                v, vv = v_new, vv_new
            break
        v, vv = v_new, vv_new
    else:
        raise GeometryError("GJK iteration cap exceeded", (0.0, float(np.sqrt(vv))))
    wa = sum(l * A[i] for l, (i, _) in zip(lam, verts))
    wb = sum(l * B[j] for l, (_, j) in zip(lam, verts))
    return float(np.sqrt(vv)), np.asarray(wa), np.asarray(wb)


@dataclass
class DistanceResult:
    """Certified bracket ``lower <= min distance <= upper``.

    ``params`` are the curve parameters ``(t_a, t_b)`` that realise ``upper``.
    """

    lower: float
    upper: float
    params: tuple[float, float]
    iterations: int
    points: tuple[np.ndarray, np.ndarray] | None = None
    history: list[float] = field(default_factory=list, repr=False)

    @property
    def value(self) -> float:
        return self.upper


def _cloud(p: BernsteinPoly) -> np.ndarray:
    return p.coeffs.T


def _candidates(p: BernsteinPoly):
    t0, t1 = p.domain
    tm = 0.5 * (t0 + t1)
    pts = [p.coeffs[:, 0], evaluate(p, tm), p.coeffs[:, -1]]
    return [t0, tm, t1], pts


def curve_min_distance(
    p: BernsteinPoly,
    q: BernsteinPoly,
    tol: float = 1e-6,
    max_nodes: int = DEFAULT_NODE_BUDGET,
    record_history: bool = False,
) -> DistanceResult:
    """min over (t_a, t_b) of ``|p(t_a) - q(t_b)|`` by best-first branch and bound.

    Degree-0 curves are treated as points and never subdivided.
    """
    if p.dim != q.dim:
        raise ValueError(f"dimension mismatch: {p.dim} vs {q.dim}")
    if not tol > 0:
        raise ValueError("tolerance must be positive")

    best = [np.inf, (p.domain[0], q.domain[0]), None]

    def offer(a: BernsteinPoly, b: BernsteinPoly):
        ta, pa = _candidates(a) if a.degree > 0 else ([a.domain[0]], [a.coeffs[:, 0]])
        tb, pb = _candidates(b) if b.degree > 0 else ([b.domain[0]], [b.coeffs[:, 0]])
        for sa, xa in zip(ta, pa):
            for sb, xb in zip(tb, pb):
                dist = float(np.linalg.norm(xa - xb))
                if dist < best[0]:
                    best[0], best[1], best[2] = dist, (float(sa), float(sb)), (np.array(xa), np.array(xb))

    counter = itertools.count()
    lower0 = gjk_distance(_cloud(p), _cloud(q))[0]
    offer(p, q)
    heap = [(lower0, next(counter), p, q)]
    pruned_min = np.inf
    history = []
    nodes = 1
    while heap:
        lower, _, a, b = heapq.heappop(heap)
        glob_lower = min(lower, pruned_min)
        if record_history:
            history.append(glob_lower)
        if best[0] - glob_lower <= tol:
            return DistanceResult(glob_lower, best[0], best[1], nodes, best[2], history)
        pieces_a = subdivide(a, 0.5 * (a.domain[0] + a.domain[1])) if a.degree > 0 else (a,)
        pieces_b = subdivide(b, 0.5 * (b.domain[0] + b.domain[1])) if b.degree > 0 else (b,)
        if len(pieces_a) == 1 and len(pieces_b) == 1:
            # two points: the hull distance is exact
            pruned_min = min(pruned_min, max(lower, best[0]))
            continue
        for ca in pieces_a:
            for cb in pieces_b:
                nodes += 1
                offer(ca, cb)
                lo = max(lower, gjk_distance(_cloud(ca), _cloud(cb))[0])
                if lo >= best[0] - tol:
                    pruned_min = min(pruned_min, lo)
                else:
                    heapq.heappush(heap, (lo, next(counter), ca, cb))
        if nodes > max_nodes:
            lo = min([h[0] for h in heap] + [pruned_min])
            raise GeometryError(f"distance search exceeded {max_nodes} nodes", (lo, best[0]))
    glob_lower = min(pruned_min, best[0])
    return DistanceResult(glob_lower, best[0], best[1], nodes, best[2], history)


def curve_point_distance(p: BernsteinPoly, point, tol: float = 1e-6, max_nodes: int = DEFAULT_NODE_BUDGET, record_history: bool = False) -> DistanceResult:
    """Minimum distance from ``p`` to a fixed point; ``params[1]`` is unused."""
    point = np.asarray(point, dtype=float).reshape(-1, 1)
    q = BernsteinPoly(point, p.domain)
    return curve_min_distance(p, q, tol, max_nodes, record_history)


@dataclass
class ExtremaResult:
    min: float
    max: float
    argmin: float
    argmax: float
    min_lower: float
    max_upper: float
    iterations: int


def _scalar_min(p: BernsteinPoly, tol: float, max_nodes: int):
    counter = itertools.count()
    c = p.coeffs[0]
    best_val, best_t = np.inf, p.domain[0]

    def offer(a: BernsteinPoly):
        nonlocal best_val, best_t
        ts, vals = _candidates(a)
        for t, v in zip(ts, vals):
            if v[0] < best_val:
                best_val, best_t = float(v[0]), float(t)

    offer(p)
    heap = [(float(c.min()), next(counter), p)]
    pruned_min = np.inf
    nodes = 1
    while heap:
        lower, _, a = heapq.heappop(heap)
        glob_lower = min(lower, pruned_min)
        if best_val - glob_lower <= tol:
            return best_val, best_t, glob_lower, nodes
        for child in subdivide(a, 0.5 * (a.domain[0] + a.domain[1])):
            nodes += 1
            offer(child)
            lo = max(lower, float(child.coeffs[0].min()))
            if lo >= best_val - tol:
                pruned_min = min(pruned_min, lo)
            else:
                heapq.heappush(heap, (lo, next(counter), child))
        if nodes > max_nodes:
            lo = min([h[0] for h in heap] + [pruned_min])
            raise GeometryError(f"extrema search exceeded {max_nodes} nodes", (lo, best_val))
    return best_val, best_t, min(pruned_min, best_val), nodes


def scalar_extrema(p: BernsteinPoly, tol: float = 1e-6, max_nodes: int = DEFAULT_NODE_BUDGET) -> ExtremaResult:
    """Minimum and maximum of a scalar polynomial over its domain, each within ``tol``."""
    if p.dim != 1:
        raise ValueError("scalar_extrema needs a scalar polynomial")
    if not tol > 0:
        raise ValueError("tolerance must be positive")
    if p.degree == 0:
        v = float(p.coeffs[0, 0])
        return ExtremaResult(v, v, p.domain[0], p.domain[0], v, v, 1)
    vmin, tmin, min_lower, n1 = _scalar_min(p, tol, max_nodes)
    neg = BernsteinPoly(-p.coeffs, p.domain)
    nmax, tmax, nmax_lower, n2 = _scalar_min(neg, tol, max_nodes)
    return ExtremaResult(vmin, -nmax, tmin, tmax, min_lower, -nmax_lower, n1 + n2)

