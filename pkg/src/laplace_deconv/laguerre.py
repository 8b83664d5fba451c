"""Laguerre polynomials, Laguerre functions and coefficient-space utilities.

The Laguerre functions with scale ``a`` are

    phi_l(t) = sqrt(2a) * exp(-a t) * L_l(2 a t),

an orthonormal basis of L^2([0, inf)).  Everything downstream works on the
coefficient vectors ``<f, phi_l>``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

__all__ = [
    "ConvergenceError",
    "LaguerreBasis",
    "LaguerreSeries",
    "QuadratureSpec",
    "eval_polynomial",
    "eval_function",
    "laguerre_functions",
    "eval_series",
    "project",
    "trapezoid_coeffs",
    "sobolev_norm",
    "l2_distance_sq",
]


class ConvergenceError(RuntimeError):
    """Raised when a quadrature fails to stabilise under node doubling."""


@dataclass(frozen=True)
class LaguerreBasis:
    a: float = 0.5
    max_degree: int = 0

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError(f"scale parameter a must be positive, got {self.a}")
        if self.max_degree < 0:
            raise ValueError(f"max_degree must be >= 0, got {self.max_degree}")

    def with_degree(self, max_degree: int) -> "LaguerreBasis":
        return LaguerreBasis(self.a, max_degree)


@dataclass(frozen=True)
class LaguerreSeries:
    """Finite Laguerre expansion ``sum_l coeffs[l] * phi_l``."""

    coeffs: np.ndarray
    basis: LaguerreBasis = field(default_factory=LaguerreBasis)

    def __post_init__(self):
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.size == 0:
            raise ValueError("a series needs at least one coefficient")
        if not np.all(np.isfinite(c)):
            raise ValueError("series coefficients must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "coeffs", c)
        if self.basis.max_degree != c.size - 1:
            object.__setattr__(self, "basis", self.basis.with_degree(c.size - 1))

    @classmethod
    def from_coeffs(cls, coeffs, a: float = 0.5) -> "LaguerreSeries":
        c = np.asarray(coeffs, dtype=float)
        return cls(c, LaguerreBasis(a, c.size - 1))

    @property
    def degree(self) -> int:
        return self.coeffs.size - 1

    def __call__(self, t):
        return eval_series(self, t)


def eval_polynomial(l: int, t):
    """Laguerre polynomial ``L_l(t)`` by the three-term recurrence.

    ``t`` may be a scalar or an array; the result has the same shape.
    """
    if l < 0:
        raise ValueError("degree must be nonnegative")
    t = np.asarray(t, dtype=float)
    prev = np.ones_like(t)
    if l == 0:
        return prev if prev.ndim else float(prev)
    cur = 1.0 - t
    for k in range(1, l):
        prev, cur = cur, ((2 * k + 1 - t) * cur - k * prev) / (k + 1)
    return cur if cur.ndim else float(cur)


def laguerre_functions(L: int, t, a: float = 0.5) -> np.ndarray:
    """Matrix of ``phi_k(t_i)`` for ``k = 0..L``, shape ``(L + 1, len(t))``."""
    t = np.atleast_1d(np.asarray(t, dtype=float))
    x = 2.0 * a * t
    out = np.empty((L + 1, t.size))
    out[0] = 1.0
    if L >= 1:
        out[1] = 1.0 - x
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, L):
            out[k + 1] = ((2 * k + 1 - x) * out[k] - k * out[k - 1]) / (k + 1)
        weight = np.sqrt(2.0 * a) * np.exp(-a * t)
        out *= weight
    # far tail: the weight underflows before the polynomial overflows
    out[:, weight == 0.0] = 0.0
    return out


def eval_function(l: int, t, basis: Optional[LaguerreBasis] = None):
    """Laguerre function ``phi_l(t)`` for the basis scale ``basis.a``."""
    a = 0.5 if basis is None else basis.a
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("Laguerre functions are defined for t >= 0")
    val = np.sqrt(2.0 * a) * np.exp(-a * t_arr) * eval_polynomial(l, 2.0 * a * t_arr)
    return val if np.ndim(val) else float(val)


def eval_series(s: LaguerreSeries, grid) -> np.ndarray:
    grid = np.atleast_1d(np.asarray(grid, dtype=float))
    if np.any(grid < 0):
        raise ValueError("grid points must be >= 0")
    return s.coeffs @ laguerre_functions(s.degree, grid, s.basis.a)


@dataclass(frozen=True)
class QuadratureSpec:
    """Composite Gauss-Legendre rule on ``[0, upper]``.

    ``upper=None`` means ``40 / a``.  The first panel is split geometrically
    toward 0 so integrands with ``sqrt(t)``-type behaviour at the origin
    still converge.  ``panels`` is doubled until all projected coefficients
    move by less than ``tol``.
    """

    upper: Optional[float] = None
    panels: int = 64
    order: int = 24
    tol: float = 1e-10
    max_doublings: int = 6
    graded_levels: int = 30

    def nodes(self, a: float, panels: Optional[int] = None):
        upper = 40.0 / a if self.upper is None else float(self.upper)
        panels = self.panels if panels is None else panels
        edges = np.linspace(0.0, upper, panels + 1)
        h = edges[1]
        graded = h * 2.0 ** -np.arange(1, self.graded_levels + 1)
        edges = np.concatenate(([0.0], graded[::-1], edges[1:]))
        x, w = np.polynomial.legendre.leggauss(self.order)
        lo, hi = edges[:-1, None], edges[1:, None]
        half = 0.5 * (hi - lo)
        t = (half * x + 0.5 * (hi + lo)).ravel()
        wt = (half * w).ravel()
        return t, wt


def project(
    f: Callable,
    L: int,
    basis: Optional[LaguerreBasis] = None,
    quadrature: Optional[QuadratureSpec] = None,
) -> LaguerreSeries:
    """Coefficients ``<f, phi_l>``, ``l = 0..L``, by composite quadrature.

    ``f`` must accept a numpy array.  Raises :class:`ConvergenceError` if
    doubling the panel count keeps moving some coefficient by more than
    ``quadrature.tol``.
    """
    basis = LaguerreBasis(0.5, L) if basis is None else basis.with_degree(L)
    quad = QuadratureSpec() if quadrature is None else quadrature

    def once(panels):
        t, w = quad.nodes(basis.a, panels)
        vals = np.asarray(f(t), dtype=float) * w
        return laguerre_functions(L, t, basis.a) @ vals

    panels = quad.panels
    prev = once(panels)
    for _ in range(quad.max_doublings):
        panels *= 2
        cur = once(panels)
        if np.max(np.abs(cur - prev)) <= quad.tol:
            return LaguerreSeries(cur, basis)
        prev = cur
    raise ConvergenceError(
        f"projection did not stabilise to {quad.tol:g} after {quad.max_doublings} doublings "
        f"(last change {np.max(np.abs(cur - prev)):.3g})"
    )


def trapezoid_coeffs(design, samples, L: int, basis: Optional[LaguerreBasis] = None) -> LaguerreSeries:
    """Trapezoid-rule Laguerre coefficients from irregular samples.

    ``coeffs[l] = sum_i (y_i phi_l(t_i) + y_{i+1} phi_l(t_{i+1})) / 2 * (t_{i+1} - t_i)``
    """
    basis = LaguerreBasis(0.5, L) if basis is None else basis.with_degree(L)
    t = np.asarray(getattr(design, "times", design), dtype=float)
    y = np.asarray(samples, dtype=float)
    if t.ndim != 1 or t.size < 2:
        raise ValueError("need at least two design points")
    if y.shape != t.shape:
        raise ValueError("samples must align with design times")
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise ValueError("design times must be strictly increasing")
    vals = laguerre_functions(L, t, basis.a) * y
    coeffs = 0.5 * (vals[:, :-1] + vals[:, 1:]) @ dt
    return LaguerreSeries(coeffs, basis)


def sobolev_norm(s_exponent: float, series: LaguerreSeries) -> float:
    """``sum_l (l + 1/2)^(2s) * coeffs[l]^2`` (no square root taken)."""
    if s_exponent < 0:
        raise ValueError("Sobolev exponent must be >= 0")
    c = series.coeffs
    weights = (np.arange(c.size) + 0.5) ** (2.0 * s_exponent)
    return float(np.sum(weights * c**2))


def l2_distance_sq(u: LaguerreSeries, v: LaguerreSeries) -> float:
    """Squared L^2 distance via Parseval; shorter series are zero-padded."""
    if u.basis.a != v.basis.a:
        raise ValueError(f"basis scales differ: {u.basis.a} vs {v.basis.a}")
    n = max(u.coeffs.size, v.coeffs.size)
    d = np.zeros(n)
    d[: u.coeffs.size] += u.coeffs
    d[: v.coeffs.size] -= v.coeffs
    return float(d @ d)
