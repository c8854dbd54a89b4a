"""Bernstein basis, vector-valued Bernstein polynomials and their algebra.

A :class:`BernsteinPoly` lives on an arbitrary interval ``[t0, t1]``; every
formula is applied after the affine map ``s = (t - t0) / (t1 - t0)`` onto
``[0, 1]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "BernsteinPoly",
    "NodeGrid",
    "approximate",
    "basis_eval",
    "basis_matrix",
    "binomial",
    "binomial_row",
    "derivative",
    "derivative_matrix",
    "elevate",
    "elevation_matrix",
    "evaluate",
    "evaluate_basis_sum",
    "integrate",
    "node_grid",
    "poly_product",
    "poly_sum",
    "quadrature",
    "subdivide",
    "subdivision_matrix",
]


def binomial(n: int, k: int) -> float:
    """C(n, k) by multiplicative recurrence in floating point."""
    if k < 0 or k > n:
        return 0.0
    k = min(k, n - k)
    c = 1.0
    for i in range(1, k + 1):
        c *= (n - k + i) / i
    return c


def binomial_row(n: int) -> np.ndarray:
    """All binomial coefficients C(n, 0..n)."""
    row = np.empty(n + 1)
    row[0] = 1.0
    for j in range(1, n + 1):
        row[j] = row[j - 1] * (n - j + 1) / j
    return row


def basis_eval(j: int, N: int, s):
    """Bernstein basis polynomial ``b_{j,N}(s) = C(N,j) s^j (1-s)^(N-j)``."""
    if N < 0 or j < 0 or j > N:
        raise ValueError(f"basis index j={j} out of range for degree N={N}")
    s = np.asarray(s, dtype=float)
    return binomial(N, j) * s**j * (1.0 - s) ** (N - j)


def basis_matrix(N: int, s) -> np.ndarray:
    """Matrix ``M[i, j] = b_{j,N}(s_i)`` for a 1-D array of parameters ``s``."""
    s = np.atleast_1d(np.asarray(s, dtype=float))
    j = np.arange(N + 1)
    return binomial_row(N) * s[:, None] ** j * (1.0 - s[:, None]) ** (N - j)


def derivative_matrix(N: int) -> np.ndarray:
    """``N x (N+1)`` map from degree-N coefficients to the (unit-interval)
    derivative coefficients ``N (c_{j+1} - c_j)``."""
    D = np.zeros((max(N, 1), N + 1))
    if N == 0:
        return D
    idx = np.arange(N)
    D[idx, idx] = -N
    D[idx, idx + 1] = N
    return D


def elevation_matrix(N: int, M: int) -> np.ndarray:
    """``(M+1) x (N+1)`` degree-elevation operator from degree N to degree M."""
    if M < N:
        raise ValueError(f"cannot elevate degree {N} down to {M}")
    r = M - N
    cn, cr, cm = binomial_row(N), binomial_row(r), binomial_row(M)
    E = np.zeros((M + 1, N + 1))
    for k in range(M + 1):
        lo, hi = max(0, k - r), min(N, k)
        for j in range(lo, hi + 1):
            E[k, j] = cn[j] * cr[k - j] / cm[k]
    return E


@dataclass(frozen=True)
class BernsteinPoly:
    """Vector-valued polynomial ``sum_j coeffs[:, j] b_{j,N}(s)`` on ``domain``.

    ``coeffs`` has shape ``(dim, degree + 1)``; a 1-D array is read as a scalar
    polynomial. The stored array is a read-only copy.
    """

    coeffs: np.ndarray
    domain: tuple[float, float] = (0.0, 1.0)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float)
        if c.ndim == 1:
            c = c[None, :]
        if c.ndim != 2 or c.shape[1] == 0 or c.shape[0] == 0:
            raise ValueError(f"coefficients must be a non-empty (dim, N+1) matrix, got shape {c.shape}")
        if not np.all(np.isfinite(c)):
            raise ValueError("coefficients must be finite")
        t0, t1 = (float(v) for v in self.domain)
        if not (np.isfinite(t0) and np.isfinite(t1) and t1 > t0):
            raise ValueError(f"invalid domain [{t0}, {t1}]")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        object.__setattr__(self, "domain", (t0, t1))

    @property
    def dim(self) -> int:
        return self.coeffs.shape[0]

    @property
    def degree(self) -> int:
        return self.coeffs.shape[1] - 1

    @property
    def width(self) -> float:
        return self.domain[1] - self.domain[0]

    def to_unit(self, t):
        return (np.asarray(t, dtype=float) - self.domain[0]) / self.width

    def from_unit(self, s):
        return self.domain[0] + np.asarray(s, dtype=float) * self.width

    def __call__(self, t):
        return evaluate(self, t)


def _de_casteljau(coeffs: np.ndarray, s: np.ndarray) -> np.ndarray:
    # coeffs (dim, N+1), s (K,) -> (dim, K)
    b = np.repeat(coeffs[:, :, None], s.size, axis=2)
    one_minus = 1.0 - s
    for r in range(coeffs.shape[1] - 1):
        b = b[:, :-1, :] * one_minus + b[:, 1:, :] * s
    return b[:, 0, :]


def evaluate(p: BernsteinPoly, t, flag: bool = False):
    """Evaluate ``p`` at ``t`` with the de Casteljau recursion.

    A scalar ``t`` gives a ``(dim,)`` vector, an array gives ``(dim, K)``.
    With ``flag=True`` also return a boolean (or boolean array) marking
    parameters outside the domain. Extrapolation is allowed; the geometric
    bounds of :mod:`bernopt.geometry` only hold on-domain.
    """
    t_arr = np.asarray(t, dtype=float)
    s = np.atleast_1d(p.to_unit(t_arr))
    vals = _de_casteljau(p.coeffs, s)
    # endpoint property: return the end coefficients exactly
    vals[:, s == 0.0] = p.coeffs[:, :1]
    vals[:, s == 1.0] = p.coeffs[:, -1:]
    outside = (s < 0.0) | (s > 1.0)
    if t_arr.ndim == 0:
        vals, outside = vals[:, 0], bool(outside[0])
    return (vals, outside) if flag else vals


def evaluate_basis_sum(p: BernsteinPoly, t) -> np.ndarray:
    """Direct evaluation ``sum_j c_j b_{j,N}(s)``; used as an independent check."""
    t_arr = np.asarray(t, dtype=float)
    s = np.atleast_1d(p.to_unit(t_arr))
    vals = p.coeffs @ basis_matrix(p.degree, s).T
    return vals[:, 0] if t_arr.ndim == 0 else vals


def derivative(p: BernsteinPoly) -> BernsteinPoly:
    """Derivative in the ``t`` variable; a constant gives the degree-0 zero polynomial."""
    if p.degree == 0:
        return BernsteinPoly(np.zeros_like(p.coeffs), p.domain)
    return BernsteinPoly(p.degree * np.diff(p.coeffs, axis=1) / p.width, p.domain)


def integrate(p: BernsteinPoly) -> np.ndarray:
    """Exact integral over the domain: ``(t1 - t0) / (N + 1) * sum_j c_j``."""
    return p.width / (p.degree + 1) * p.coeffs.sum(axis=1)


def approximate(samples, domain=(0.0, 1.0)) -> BernsteinPoly:
    """Bernstein approximation from samples at the equidistant nodes.

    The coefficients are the samples themselves, so the result interpolates
    only at the two endpoints.
    """
    return BernsteinPoly(samples, domain)


def subdivide(p: BernsteinPoly, t_div: float) -> tuple[BernsteinPoly, BernsteinPoly]:
    """Split ``p`` at ``t_div`` into two degree-N pieces via the de Casteljau triangle."""
    t0, t1 = p.domain
    if not (t0 < t_div < t1):
        raise ValueError(f"subdivision point {t_div} must lie strictly inside [{t0}, {t1}]")
    s = (t_div - t0) / p.width
    N = p.degree
    left = np.empty_like(p.coeffs)
    right = np.empty_like(p.coeffs)
    b = np.array(p.coeffs)
    left[:, 0] = b[:, 0]
    right[:, N] = b[:, N]
    for j in range(1, N + 1):
        b = b[:, :-1] * (1.0 - s) + b[:, 1:] * s
        left[:, j] = b[:, 0]
        right[:, N - j] = b[:, -1]
    return BernsteinPoly(left, (t0, t_div)), BernsteinPoly(right, (t_div, t1))


def subdivision_matrix(N: int, pieces: int) -> np.ndarray:
    """Linear map from degree-N coefficients to the stacked coefficients of
    ``pieces`` uniform sub-intervals, shape ``(pieces * (N+1), N+1)``."""
    if pieces < 1:
        raise ValueError("need at least one piece")
    rows = []
    rest = BernsteinPoly(np.eye(N + 1), (0.0, 1.0))
    for k in range(pieces - 1):
        # split off [k/pieces, (k+1)/pieces] from the remaining [k/pieces, 1]
        left, rest = subdivide(rest, (k + 1) / pieces)
        rows.append(left.coeffs.T)
    rows.append(rest.coeffs.T)
    return np.vstack(rows)


def elevate(p: BernsteinPoly, M: int) -> BernsteinPoly:
    """Represent ``p`` exactly with degree ``M >= N``."""
    if M < p.degree:
        raise ValueError(f"target degree {M} is below current degree {p.degree}")
    if M == p.degree:
        return p
    return BernsteinPoly(p.coeffs @ elevation_matrix(p.degree, M).T, p.domain)


def _check_domains(a: BernsteinPoly, b: BernsteinPoly):
    if not np.allclose(a.domain, b.domain, rtol=0.0, atol=1e-14 * max(1.0, abs(a.domain[1]))):
        raise ValueError(f"domain mismatch: {a.domain} vs {b.domain}")


def poly_sum(a: BernsteinPoly, b: BernsteinPoly) -> BernsteinPoly:
    _check_domains(a, b)
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    M = max(a.degree, b.degree)
    return BernsteinPoly(elevate(a, M).coeffs + elevate(b, M).coeffs, a.domain)


def product_weights(Na: int, Nb: int) -> np.ndarray:
    """``W[i, j] = C(Na,i) C(Nb,j) / C(Na+Nb, i+j)``."""
    ca, cb, cm = binomial_row(Na), binomial_row(Nb), binomial_row(Na + Nb)
    i = np.arange(Na + 1)[:, None]
    j = np.arange(Nb + 1)[None, :]
    return ca[:, None] * cb[None, :] / cm[i + j]


def poly_product(a: BernsteinPoly, b: BernsteinPoly) -> BernsteinPoly:
    """Product of degree ``Na + Nb`` by binomial-weighted convolution.

    Scalar operands are broadcast; otherwise the product is componentwise.
    """
    _check_domains(a, b)
    if a.dim != b.dim and 1 not in (a.dim, b.dim):
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    Na, Nb = a.degree, b.degree
    W = product_weights(Na, Nb)
    dim = max(a.dim, b.dim)
    A = np.broadcast_to(a.coeffs, (dim, Na + 1))
    B = np.broadcast_to(b.coeffs, (dim, Nb + 1))
    out = np.zeros((dim, Na + Nb + 1))
    for i in range(Na + 1):
        out[:, i : i + Nb + 1] += A[:, i : i + 1] * B * W[i]
    return BernsteinPoly(out, a.domain)


def quadrature(samples, domain=(0.0, 1.0)) -> np.ndarray:
    """Node quadrature ``w * sum_j samples_j`` with ``w = (t1 - t0) / (N + 1)``.

    ``samples`` holds values at the N+1 equidistant nodes along its last axis.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[-1]
    return (domain[1] - domain[0]) / n * samples.sum(axis=-1)


@dataclass(frozen=True)
class NodeGrid:
    degree: int
    domain: tuple[float, float] = (0.0, 1.0)
    nodes: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("node grid needs degree >= 1")
        t0, t1 = self.domain
        nodes = t0 + (t1 - t0) * np.arange(self.degree + 1) / self.degree
        nodes[-1] = t1
        nodes.setflags(write=False)
        object.__setattr__(self, "nodes", nodes)

    @property
    def weight(self) -> float:
        return (self.domain[1] - self.domain[0]) / (self.degree + 1)


def node_grid(N: int, domain=(0.0, 1.0)) -> NodeGrid:
    return NodeGrid(N, tuple(float(v) for v in domain))
