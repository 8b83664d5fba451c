"""Truncated lower-triangular Toeplitz matrices stored by their first column.

Products and inverses of such matrices are truncated power-series products
and reciprocals, so nothing here needs the dense matrix except the spectral
norm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg
import scipy.sparse.linalg

__all__ = [
    "SingularToeplitzError",
    "LowerToeplitz",
    "multiply",
    "apply",
    "invert_series",
    "op_norm",
    "hs_norm",
    "circ_norm_bound",
]

_SVD_LIMIT = 512


class SingularToeplitzError(ZeroDivisionError):
    """Leading coefficient is zero, so the triangular matrix is singular."""


@dataclass(frozen=True)
class LowerToeplitz:
    first_col: np.ndarray

    def __post_init__(self):
        c = np.array(self.first_col, dtype=float).reshape(-1)
        if c.size == 0:
            raise ValueError("LowerToeplitz needs at least one entry")
        if not np.all(np.isfinite(c)):
            raise ValueError("LowerToeplitz entries must be finite")
        c.setflags(write=False)
        object.__setattr__(self, "first_col", c)

    @classmethod
    def identity(cls, size: int) -> "LowerToeplitz":
        c = np.zeros(size)
        c[0] = 1.0
        return cls(c)

    @property
    def size(self) -> int:
        return self.first_col.size

    def truncate(self, size: int) -> "LowerToeplitz":
        if not 1 <= size <= self.size:
            raise ValueError(f"cannot truncate size {self.size} to {size}")
        return LowerToeplitz(self.first_col[:size])

    def dense(self) -> np.ndarray:
        return _dense(self.first_col)

    def inverse(self) -> "LowerToeplitz":
        return LowerToeplitz(invert_series(self.first_col))

    def __matmul__(self, other):
        if isinstance(other, LowerToeplitz):
            return multiply(self, other)
        return apply(self, other)


def _dense(c: np.ndarray) -> np.ndarray:
    n = c.size
    return scipy.linalg.toeplitz(c, np.r_[c[0], np.zeros(n - 1)])


def multiply(A: LowerToeplitz, B: LowerToeplitz) -> LowerToeplitz:
    if A.size != B.size:
        raise ValueError(f"size mismatch: {A.size} vs {B.size}")
    return LowerToeplitz(np.convolve(A.first_col, B.first_col)[: A.size])


def apply(A: LowerToeplitz, v) -> np.ndarray:
    v = np.asarray(v, dtype=float)
    if v.shape != (A.size,):
        raise ValueError(f"length mismatch: matrix size {A.size}, vector shape {v.shape}")
    return np.convolve(A.first_col, v)[: A.size]


def invert_series(c) -> np.ndarray:
    """Reciprocal power series: ``gamma`` with ``c * gamma = 1 + O(z^n)``.

    Forward recursion ``gamma_k = -(1/c_0) sum_{j=1}^k c_j gamma_{k-j}``.
    """
    c = np.asarray(c, dtype=float).reshape(-1)
    if c.size == 0:
        raise ValueError("empty series")
    if c[0] == 0.0:
        raise SingularToeplitzError("leading coefficient is zero; matrix is singular")
    gamma = np.zeros(c.size)
    gamma[0] = 1.0 / c[0]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, c.size):
            gamma[k] = -np.dot(c[1 : k + 1], gamma[k - 1 :: -1]) / c[0]
    return gamma


def op_norm(A) -> float:
    """Spectral norm of the materialised matrix.

    Dense SVD up to size 512, matrix-free Lanczos above that.
    """
    c = A.first_col if isinstance(A, LowerToeplitz) else np.asarray(A, dtype=float)
    if not np.all(np.isfinite(c)):
        return float("inf")
    if c.size <= _SVD_LIMIT:
        return float(scipy.linalg.svdvals(_dense(c), check_finite=False)[0])
    return _lanczos_norm(c)


def _lanczos_norm(c: np.ndarray) -> float:
    """Largest singular value through matrix-free Lanczos (``svds``)."""
    n = c.size
    op = scipy.sparse.linalg.LinearOperator(
        (n, n),
        matvec=lambda x: np.convolve(c, np.ravel(x))[:n],
        # transpose of a lower Toeplitz matrix: correlate instead of convolve
        rmatvec=lambda y: np.correlate(np.ravel(y), c, mode="full")[n - 1 : 2 * n - 1],
        dtype=float,
    )
    v0 = np.random.default_rng(0).standard_normal(n)
    s = scipy.sparse.linalg.svds(op, k=1, tol=1e-12, v0=v0, return_singular_vectors=False)
    return float(s[0])


def hs_norm(A) -> float:
    """Hilbert-Schmidt (Frobenius) norm, ``sqrt(sum_k (n - k) c_k^2)``."""
    c = A.first_col if isinstance(A, LowerToeplitz) else np.asarray(A, dtype=float)
    n = c.size
    with np.errstate(over="ignore"):
        return float(np.sqrt(np.sum((n - np.arange(n)) * c**2)))


def circ_norm_bound(c) -> float:
    """``sum |c_k|``, an upper bound on the spectral norm of any truncation."""
    return float(np.sum(np.abs(np.asarray(c, dtype=float))))
