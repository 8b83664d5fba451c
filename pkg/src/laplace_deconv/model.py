"""Galerkin discretisation, observation designs and data synthesis.

The Laplace convolution ``q(t) = int_0^t g(t - s) f(s) ds`` maps Laguerre
coefficients of ``f`` to those of ``q`` through the lower-triangular Toeplitz
matrix built on the differenced kernel coefficients ``dot_g(g)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.integrate
import scipy.linalg

from .laguerre import LaguerreBasis, laguerre_functions
from .toeplitz import LowerToeplitz, apply, hs_norm, invert_series, op_norm

__all__ = [
    "SingularDesignError",
    "DesignGrid",
    "NoiseLevels",
    "Observations",
    "ExplicitKernel",
    "DecomposedKernel",
    "KernelSpec",
    "OmegaResult",
    "DipEstimate",
    "dot_g",
    "build_galerkin",
    "forward",
    "design_matrix",
    "omega",
    "design_noise",
    "synthesize_sequence",
    "synthesize_regression",
    "binomial_series",
    "kernel_from_decomposition",
    "kernel_g_dot",
    "estimate_dip",
]


class SingularDesignError(np.linalg.LinAlgError):
    """Gram matrix of the design is singular at some level."""

    def __init__(self, level: int, message: str = ""):
        self.level = level
        super().__init__(message or f"design Gram matrix is singular at level {level}")


@dataclass(frozen=True)
class DesignGrid:
    times: np.ndarray
    horizon: float

    def __post_init__(self):
        t = np.array(self.times, dtype=float).reshape(-1)
        if t.size < 1:
            raise ValueError("design needs at least one point")
        if np.any(np.diff(t) < 0):
            raise ValueError("design times must be nondecreasing")
        if t[0] < 0 or t[-1] > self.horizon:
            raise ValueError("design times must lie in [0, horizon]")
        if not self.horizon > 0:
            raise ValueError("horizon must be positive")
        t.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "horizon", float(self.horizon))

    @property
    def n(self) -> int:
        return self.times.size

    @classmethod
    def equispaced(cls, n: int, horizon: float, include_zero: bool = True) -> "DesignGrid":
        """``t_i = horizon * i / n`` for ``i = 0..n-1`` (``1..n`` if not ``include_zero``).

        Starting at 0 matters: every ``phi_l(0) = 1``, so dropping the origin
        takes a rank-one bite out of the Gram matrix and inflates ``Omega``.
        """
        i = np.arange(n) if include_zero else np.arange(1, n + 1)
        return cls(horizon * i / n, horizon)

    @classmethod
    def cumulative_step(cls, step: float, jitter_sd: float, n: int, rng) -> "DesignGrid":
        """``t_i = sum_{j<=i} (step + |X_j|)`` with ``X_j ~ N(0, jitter_sd^2)``."""
        rng = np.random.default_rng(rng)
        t = np.cumsum(step + np.abs(jitter_sd * rng.standard_normal(n)))
        return cls(t, float(t[-1]))


@dataclass(frozen=True)
class NoiseLevels:
    """Signal noise ``epsilon`` (sequence model) and operator noise ``delta``.

    In regression mode ``epsilon = sigma * sqrt(T_n / n)``; use
    :meth:`from_regression`.
    """

    epsilon: float = 0.0
    delta: float = 0.0
    sigma: Optional[float] = None

    def __post_init__(self):
        for name in ("epsilon", "delta"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")
        if self.sigma is not None and self.sigma < 0:
            raise ValueError("sigma must be >= 0")

    @classmethod
    def from_regression(cls, sigma: float, delta: float, design: DesignGrid) -> "NoiseLevels":
        return cls(sigma * np.sqrt(design.horizon / design.n), delta, sigma)


@dataclass(frozen=True)
class Observations:
    y_coeffs: np.ndarray
    g_dot_noisy: np.ndarray
    noise: NoiseLevels
    omega_op_norms: Optional[np.ndarray] = None

    def __post_init__(self):
        y = np.array(self.y_coeffs, dtype=float).reshape(-1)
        g = np.array(self.g_dot_noisy, dtype=float).reshape(-1)
        if y.size != g.size:
            raise ValueError(f"y has {y.size} levels but g_dot has {g.size}")
        object.__setattr__(self, "y_coeffs", y)
        object.__setattr__(self, "g_dot_noisy", g)
        if self.omega_op_norms is not None:
            object.__setattr__(self, "omega_op_norms", np.asarray(self.omega_op_norms, dtype=float))

    @property
    def max_level(self) -> int:
        return self.y_coeffs.size - 1


@dataclass(frozen=True)
class ExplicitKernel:
    """Kernel given by its Laguerre coefficients ``g`` (not differenced)."""

    g_coeffs: np.ndarray


@dataclass(frozen=True)
class DecomposedKernel:
    """``g_dot(z) = C * w(z) * (mu - z)^nu`` with ``w(z) = prod (z - mu_i)``."""

    C: float = 1.0
    w_roots: Sequence[complex] = ()
    mu: float = 1.0
    nu: float = 1.0

    def __post_init__(self):
        if self.C == 0:
            raise ValueError("C must be nonzero")
        if any(abs(r) <= 1 for r in self.w_roots):
            raise ValueError("roots of w must lie outside the closed unit disc")


KernelSpec = Union[ExplicitKernel, DecomposedKernel]


def dot_g(g_coeffs) -> np.ndarray:
    """Differenced sequence ``(g_0, g_1 - g_0, g_2 - g_1, ...)``."""
    g = np.asarray(g_coeffs, dtype=float).reshape(-1)
    if g.size == 0:
        raise ValueError("empty coefficient vector")
    return np.diff(g, prepend=0.0)


def build_galerkin(g_dot, L: int) -> LowerToeplitz:
    g_dot = np.asarray(g_dot, dtype=float)
    if g_dot.size < L + 1:
        raise ValueError(f"need {L + 1} coefficients, got {g_dot.size}")
    return LowerToeplitz(g_dot[: L + 1])


def forward(f_coeffs, g_dot) -> np.ndarray:
    f = np.asarray(f_coeffs, dtype=float)
    g_dot = np.asarray(g_dot, dtype=float)
    if f.shape != g_dot.shape:
        raise ValueError(f"length mismatch: f {f.shape}, g_dot {g_dot.shape}")
    return apply(LowerToeplitz(g_dot), f)


def design_matrix(design: DesignGrid, L: int, basis: Optional[LaguerreBasis] = None) -> np.ndarray:
    a = 0.5 if basis is None else basis.a
    return laguerre_functions(L, design.times, a)


@dataclass(frozen=True)
class OmegaResult:
    matrices: list
    op_norms: np.ndarray

    @property
    def max_level(self) -> int:
        return len(self.matrices) - 1


def omega(design: DesignGrid, L: int, basis: Optional[LaguerreBasis] = None) -> OmegaResult:
    """``Omega_l = n / T_n * (Phi_l^T Phi_l)^{-1}`` for every ``l <= L``.

    Here ``Phi_l`` is the ``(l+1) x n`` matrix of ``phi_k(t_i)``, so the Gram
    matrix is ``Phi_l Phi_l^T`` in row-major terms.  Raises
    :class:`SingularDesignError` carrying the first bad level.
    """
    Phi = design_matrix(design, L, basis)
    gram = Phi @ Phi.T
    scale = design.n / design.horizon
    mats, norms = [], []
    for l in range(L + 1):
        G = gram[: l + 1, : l + 1]
        if design.n < l + 1:
            raise SingularDesignError(l, f"{design.n} design points cannot resolve level {l}")
        try:
            chol = scipy.linalg.cho_factor(G, lower=True)
        except np.linalg.LinAlgError:
            raise SingularDesignError(l) from None
        if np.linalg.cond(G) > 1e13:
            raise SingularDesignError(l, f"design Gram matrix is numerically singular at level {l}")
        inv = scipy.linalg.cho_solve(chol, np.eye(l + 1))
        W = scale * 0.5 * (inv + inv.T)
        mats.append(W)
        norms.append(float(np.linalg.eigvalsh(W)[-1]))
    return OmegaResult(mats, np.asarray(norms))


def design_noise(design: DesignGrid, L: int, eta, basis: Optional[LaguerreBasis] = None) -> np.ndarray:
    """Coefficient-space noise ``sqrt(n/T) (Phi Phi^T)^{-1} Phi eta`` at level ``L``.

    For ``eta ~ N(0, I_n)`` the result is ``N(0, Omega_L)``; reusing one
    ``eta`` across levels gives the least-squares noise each level would see.
    """
    Phi = design_matrix(design, L, basis)
    eta = np.asarray(eta, dtype=float)
    if eta.shape != (design.n,):
        raise ValueError(f"eta must have length {design.n}")
    sol = scipy.linalg.solve(Phi @ Phi.T, Phi @ eta, assume_a="pos")
    return np.sqrt(design.n / design.horizon) * sol


def _sym_sqrt(M: np.ndarray) -> np.ndarray:
    w, V = np.linalg.eigh(M)
    return (V * np.sqrt(np.clip(w, 0.0, None))) @ V.T


def synthesize_sequence(
    f,
    g_dot,
    noise: NoiseLevels,
    omega_mats: Optional[Union[np.ndarray, Sequence[np.ndarray]]] = None,
    seed=None,
    omega_op_norms=None,
) -> Observations:
    """Sequence-model data ``y = K f + eps * xi``, ``g_dot_delta = g_dot + delta * b``.

    ``xi ~ N(0, Omega)`` uses a symmetric square root of the covariance at
    the full length, so lower levels are nested truncations of one draw.
    When ``omega_mats`` is a list, the last entry of matching size is used.
    """
    f = np.asarray(f, dtype=float)
    g_dot = np.asarray(g_dot, dtype=float)
    n = f.size
    rng = np.random.default_rng(seed)
    xi = rng.standard_normal(n)
    b = rng.standard_normal(n)
    if omega_mats is not None:
        W = omega_mats if isinstance(omega_mats, np.ndarray) else omega_mats[n - 1]
        if W.shape != (n, n):
            raise ValueError(f"Omega has shape {W.shape}, expected {(n, n)}")
        xi = _sym_sqrt(W) @ xi
    y = forward(f, g_dot)
    if noise.epsilon:
        y = y + noise.epsilon * xi
    g_noisy = g_dot + noise.delta * b if noise.delta else g_dot.copy()
    return Observations(y, g_noisy, noise, omega_op_norms)


def synthesize_regression(
    f: Callable[[float], float],
    g: Callable[[float], float],
    design: DesignGrid,
    sigma: float,
    seed=None,
    rtol: float = 1e-8,
) -> np.ndarray:
    """Noisy samples ``y(t_i) = int_0^{t_i} g(t_i - s) f(s) ds + sigma * eta_i``.

    Each convolution integral is done by adaptive quadrature (``quad``).
    """
    rng = np.random.default_rng(seed)
    out = np.empty(design.n)
    for i, ti in enumerate(design.times):
        if ti == 0.0:
            out[i] = 0.0
            continue
        val, err = scipy.integrate.quad(
            lambda s: g(ti - s) * f(s), 0.0, ti, epsabs=1e-13, epsrel=rtol, limit=400
        )
        if not np.isfinite(val) or err > max(1e-12, 10 * rtol * abs(val)):
            raise ArithmeticError(f"convolution quadrature failed at t[{i}]={ti} (err {err:.2e})")
        out[i] = val
    return out + sigma * rng.standard_normal(design.n)


def binomial_series(nu: float, L: int) -> np.ndarray:
    """Coefficients of ``(1 - z)^(-nu)`` up to ``z^L``."""
    if L < 0:
        raise ValueError("L must be >= 0")
    k = np.arange(L)
    return np.concatenate(([1.0], np.cumprod((k + nu) / (k + 1))))


def kernel_from_decomposition(spec: DecomposedKernel, L: int) -> np.ndarray:
    """Truncated power series of ``C * w(z) * (mu - z)^nu``."""
    if spec.C == 0:
        raise ValueError("C must be nonzero")
    if abs(spec.mu) < 1:
        raise ValueError("mu must satisfy |mu| >= 1")
    k = np.arange(L + 1)
    # (mu - z)^nu = mu^nu (1 - z/mu)^nu
    series = spec.mu**spec.nu * binomial_series(-spec.nu, L) * float(spec.mu) ** (-k)
    w = np.array([1.0 + 0j])
    for r in spec.w_roots:
        # multiply by (z - r); coefficients in increasing powers
        w = np.convolve(w, [-r, 1.0])
    if np.max(np.abs(w.imag)) > 1e-12 * np.max(np.abs(w)):
        raise ValueError("w has non-real coefficients; complex roots must come in conjugate pairs")
    return spec.C * np.convolve(series, w.real)[: L + 1]


def kernel_g_dot(kernel: KernelSpec, L: int) -> np.ndarray:
    """First column of the Galerkin matrix, length ``L + 1``, for any kernel spec."""
    if isinstance(kernel, DecomposedKernel):
        return kernel_from_decomposition(kernel, L)
    # coefficients beyond those given are zero
    g = np.zeros(L + 1)
    src = np.asarray(kernel.g_coeffs, dtype=float)[: L + 1]
    g[: src.size] = src
    return dot_g(g)


@dataclass(frozen=True)
class DipEstimate:
    nu: float
    Q: float
    nu_hs: float
    Q_hs: float
    levels: np.ndarray = field(repr=False)


def estimate_dip(g_dot, levels=None) -> DipEstimate:
    """Log-log fit of the growth of ``(K^l)^{-1}`` in ``l``.

    ``nu``/``Q`` come from ``||(K^l)^{-1}||_op ~ Q (l+1)^nu``.  ``nu_hs``/``Q_hs``
    fit ``||(K^l)^{-1}||_HS^2 ~ Q (l+1)^(2 nu)``; that version cannot go below
    1/2 because the Hilbert-Schmidt norm of a unit diagonal already grows.
    The regressor is the matrix size ``l+1`` rather than ``l``, which removes
    most of the small-``l`` curvature.  Diagnostic only.
    """
    g_dot = np.asarray(g_dot, dtype=float)
    L = g_dot.size - 1
    levels = np.arange(4, L + 1) if levels is None else np.asarray(list(levels))
    if levels.size < 3:
        raise ValueError("need at least three levels to fit")
    if np.any(levels < 1) or levels.max() > L:
        raise ValueError("levels must lie in 1..len(g_dot)-1")
    gamma = invert_series(g_dot)
    if not np.all(np.isfinite(gamma[: levels.max() + 1])):
        raise ArithmeticError("inverse series overflowed")
    op = np.array([op_norm(gamma[: l + 1]) for l in levels])
    hs2 = np.array([hs_norm(gamma[: l + 1]) ** 2 for l in levels])
    x = np.log(levels + 1.0)
    nu, logq = np.polyfit(x, np.log(op), 1)
    slope, logq_hs = np.polyfit(x, np.log(hs2), 1)
    return DipEstimate(float(nu), float(np.exp(logq)), float(slope / 2), float(np.exp(logq_hs)), levels)
