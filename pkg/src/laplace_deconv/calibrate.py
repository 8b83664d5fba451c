"""Pure-noise benchmarks for choosing kappa, tau_sig and tau_op.

Each constant is the smallest grid value for which, averaged over a few
replications, nothing survives at levels ``l <= 10`` when the truth is zero:

* ``kappa``: kernel identically 0, so the noisy operator is pure noise and
  every gate should close;
* ``tau_sig`` / ``tau_op``: target identically 0 with a dominant signal
  (resp. operator) noise, so every estimated coefficient should be killed.

Every candidate sees the same random draws, which makes the traces
monotone in the candidate value.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .estimator import EstimatorConfig, _gate, estimate
from .model import NoiseLevels, Observations
from .toeplitz import SingularToeplitzError, invert_series

__all__ = [
    "CalibrationError",
    "CalibrationResult",
    "TAU_NOISE",
    "calibrate_kappa",
    "calibrate_tau",
    "gate_open_count",
]

# (epsilon, delta) for each benchmark: the calibrated constant's noise dominates
TAU_NOISE = {"sig": (1e-1, 1e-2), "op": (1e-2, 1e-1)}


@dataclass(frozen=True)
class CalibrationResult:
    constant_name: str
    value: Optional[float]
    trace: tuple  # ((candidate, mean surviving count), ...)

    def rounded_trace(self):
        return tuple((c, int(np.rint(n))) for c, n in self.trace)


class CalibrationError(RuntimeError):
    def __init__(self, result: CalibrationResult):
        self.result = result
        trace = ", ".join(f"{c:g}:{n:g}" for c, n in result.trace)
        super().__init__(f"no {result.constant_name} on the grid kills all levels (trace {trace})")


def _check(reps: int, grid: Sequence[float]) -> np.ndarray:
    if reps < 1:
        raise ValueError("reps must be >= 1")
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be nonempty and strictly increasing")
    return grid


def _rep_rngs(seed, reps: int):
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(reps)]


def gate_open_count(g_dot_noisy, delta: float, kappa: float, max_level: int = 10) -> int:
    try:
        gamma = invert_series(np.asarray(g_dot_noisy)[: max_level + 1])
    except SingularToeplitzError:
        return 0
    return sum(_gate(gamma, l, delta, kappa) for l in range(max_level + 1))


def _select(name, grid, counts) -> CalibrationResult:
    trace = tuple((float(c), float(n)) for c, n in zip(grid, counts))
    value = next((c for c, n in trace if n == 0.0), None)
    result = CalibrationResult(name, value, trace)
    if value is None:
        raise CalibrationError(result)
    return result


def calibrate_kappa(
    delta: float,
    reps: int = 10,
    grid: Sequence[float] = (0.1, 0.2, 0.3),
    seed=None,
    max_level: int = 10,
) -> CalibrationResult:
    """Smallest ``kappa`` closing the operator gate at every ``l <= max_level``
    when the observed kernel column is ``delta * b`` (true kernel zero)."""
    if not delta > 0:
        raise ValueError("delta must be positive")
    grid = _check(reps, grid)
    draws = [delta * rng.standard_normal(max_level + 1) for rng in _rep_rngs(seed, reps)]
    counts = [np.mean([gate_open_count(d, delta, k, max_level) for d in draws]) for k in grid]
    return _select("kappa", grid, counts)


def calibrate_tau(
    variant: str,
    which: str,
    reps: int = 10,
    grid: Sequence[float] = (0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0),
    seed=None,
    kappa: float = 0.3,
    g_dot=(1.0, -1.0),
    noise: Optional[tuple] = None,
    max_level: int = 10,
    L_max: int = 50,
) -> CalibrationResult:
    """Smallest ``tau_sig`` (``which="sig"``) or ``tau_op`` (``which="op"``)
    killing every coefficient at ``l <= max_level`` when the target is zero.

    ``g_dot`` is the true kernel column (default: ``g = phi_0``); ``noise``
    overrides the ``(epsilon, delta)`` benchmark pair.  The constant not
    being calibrated keeps its default for the variant.
    """
    if which not in TAU_NOISE:
        raise ValueError("which must be 'sig' or 'op'")
    grid = _check(reps, grid)
    eps, delta = TAU_NOISE[which] if noise is None else noise
    levels = NoiseLevels(eps, delta)
    g = np.zeros(L_max + 1)
    src = np.asarray(g_dot, dtype=float)[: L_max + 1]
    g[: src.size] = src
    data = []
    for rng in _rep_rngs(seed, reps):
        y = eps * rng.standard_normal(L_max + 1)
        g_noisy = g + delta * rng.standard_normal(L_max + 1)
        data.append(Observations(y, g_noisy, levels))
    base = EstimatorConfig(variant=variant, kappa=kappa, L_max=L_max)
    counts = []
    for tau in grid:
        cfg = base.with_(tau_sig=tau) if which == "sig" else base.with_(tau_op=tau)
        kept = [sum(1 for l in estimate(obs, cfg).kept_levels if l <= max_level) for obs in data]
        counts.append(np.mean(kept))
    return _select(f"tau_{which}", grid, counts)
