"""Thresholding estimators for Laplace deconvolution with a noisy operator.

Both variants share the same skeleton:

1. pick a maximal level from the noise magnitudes,
2. invert the noisy Galerkin matrix once (series reciprocal) and read off
   ``zeta_l``, the last entry of the level-``l`` solve,
3. drop levels whose noisy inverse is too large in spectral norm,
4. hard-threshold ``zeta_l`` against a level-dependent bound.

Variant ``"I"`` needs the degree of ill-posedness ``nu``; variant ``"II"``
replaces ``l^nu`` by the Hilbert-Schmidt norm of the noisy inverse.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .laguerre import LaguerreBasis, LaguerreSeries
from .model import NoiseLevels, Observations
from .toeplitz import SingularToeplitzError, hs_norm, invert_series, op_norm

__all__ = [
    "EstimatorConfig",
    "EstimateReport",
    "signal_noise_term",
    "operator_noise_term",
    "max_level_I",
    "max_level_II",
    "operator_threshold",
    "signal_threshold_I",
    "signal_threshold_II",
    "zeta_coefficients",
    "design_level",
    "estimate",
]

DEFAULT_TAU_SIG = {"I": 0.5, "II": 1.0}


@dataclass(frozen=True)
class EstimatorConfig:
    """Tuning constants.

    ``tau_sig=None`` picks the calibrated default for the variant (0.5 for
    ``"I"``, 1.0 for ``"II"``).  ``nu`` is ignored by variant ``"II"``.
    """

    variant: str = "II"
    lam: float = 1.0
    kappa: float = 0.3
    tau_sig: Optional[float] = None
    tau_op: float = 0.1
    nu: float = 1.0
    L_max: int = 50
    alpha: float = 1.5

    def __post_init__(self):
        if self.variant not in ("I", "II"):
            raise ValueError(f"variant must be 'I' or 'II', got {self.variant!r}")
        if self.tau_sig is None:
            object.__setattr__(self, "tau_sig", DEFAULT_TAU_SIG[self.variant])
        for name in ("lam", "kappa", "tau_sig", "tau_op", "alpha"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if self.nu < 0:
            raise ValueError("nu must be >= 0")
        if self.L_max < 0:
            raise ValueError("L_max must be >= 0")

    def with_(self, **changes) -> "EstimatorConfig":
        return replace(self, **changes)


@dataclass(frozen=True)
class EstimateReport:
    estimate: LaguerreSeries
    kept_levels: tuple
    gate_failures: tuple
    levels: tuple  # (L from the noise formula, level actually used)
    zeta: np.ndarray = field(repr=False)
    thresholds: np.ndarray = field(repr=False)


def signal_noise_term(eps: float) -> float:
    """``eps * sqrt(|log eps|)``, 0 at ``eps = 0``."""
    return 0.0 if eps == 0 else eps * math.sqrt(abs(math.log(eps)))


def operator_noise_term(delta: float) -> float:
    """``delta * |log delta|``, 0 at ``delta = 0``."""
    return 0.0 if delta == 0 else delta * abs(math.log(delta))


def _level(scale: float, exponent: float, lam: float, L_max: int) -> int:
    if scale == 0.0:
        return L_max
    value = lam * scale ** (-exponent)
    if not math.isfinite(value) or value >= L_max:
        return L_max
    return max(0, math.floor(value))


def max_level_I(eps: float, delta: float, lam: float = 1.0, nu: float = 1.0, L_max: int = 50) -> int:
    """``floor(lam * max(eps sqrt|log eps|, delta |log delta|)^(-1/(nu+1)))`` capped at ``L_max``."""
    scale = max(signal_noise_term(eps), operator_noise_term(delta))
    return _level(scale, 1.0 / (nu + 1.0), lam, L_max)


def max_level_II(eps: float, delta: float, lam: float = 1.0, L_max: int = 50) -> int:
    scale = max(signal_noise_term(eps), operator_noise_term(delta))
    return _level(scale, 1.0, lam, L_max)


def operator_threshold(l: int, delta: float, kappa: float) -> float:
    """Gate level ``kappa * sqrt((l v 1) log(l v 2)) * delta * sqrt|log delta|``."""
    return kappa * math.sqrt(max(l, 1) * math.log(max(l, 2))) * signal_noise_term(delta)


def _noise_floor(noise: NoiseLevels, cfg: EstimatorConfig) -> float:
    return max(cfg.tau_sig * signal_noise_term(noise.epsilon), cfg.tau_op * operator_noise_term(noise.delta))


def signal_threshold_I(l: int, noise: NoiseLevels, cfg: EstimatorConfig) -> float:
    return max(l, 1) ** cfg.nu * _noise_floor(noise, cfg)


def signal_threshold_II(
    l: int, K_delta_inv, gate_open: bool, noise: NoiseLevels, cfg: EstimatorConfig
) -> float:
    if not gate_open:
        return math.inf
    return hs_norm(K_delta_inv) * max(l, 1) ** -0.5 * _noise_floor(noise, cfg)


def _gate(gamma: np.ndarray, l: int, delta: float, kappa: float) -> bool:
    """Whether ``||(K_delta^l)^{-1}||_op < 1 / O_l``."""
    O = operator_threshold(l, delta, kappa)
    if O == 0.0:
        return bool(np.all(np.isfinite(gamma[: l + 1])))
    return op_norm(gamma[: l + 1]) < 1.0 / O


def _inverse_and_gates(obs: Observations, L: int, cfg: EstimatorConfig):
    g = obs.g_dot_noisy[: L + 1]
    try:
        gamma = invert_series(g)
    except SingularToeplitzError:
        return None, np.zeros(L + 1, dtype=bool)
    gate = np.array([_gate(gamma, l, obs.noise.delta, cfg.kappa) for l in range(L + 1)])
    return gamma, gate


def zeta_coefficients(obs: Observations, L: int, cfg: EstimatorConfig):
    """``zeta_l`` (last entry of the level-``l`` noisy solve) and gate states.

    ``zeta_l = sum_k gamma_{l-k} y_k`` where ``gamma`` is the series
    reciprocal of the noisy kernel column; it is set to 0 where the gate is
    closed.
    """
    if L > obs.max_level:
        raise ValueError(f"observations cover levels 0..{obs.max_level}, asked for {L}")
    gamma, gate = _inverse_and_gates(obs, L, cfg)
    zeta = np.zeros(L + 1)
    if gamma is None:
        return zeta, gate
    with np.errstate(over="ignore", invalid="ignore"):
        full = np.convolve(gamma, obs.y_coeffs[: L + 1])[: L + 1]
    zeta[gate] = full[gate]
    return zeta, gate


def design_level(design_norms, alpha: float) -> int:
    """Largest ``l`` with ``||Omega_l||_op <= alpha``; 0 when none qualifies."""
    ok = np.flatnonzero(np.asarray(design_norms) <= alpha)
    return int(ok[-1]) if ok.size else 0


def estimate(
    obs: Observations,
    cfg: EstimatorConfig,
    design_norms=None,
    basis: Optional[LaguerreBasis] = None,
) -> EstimateReport:
    """Run one of the thresholding procedures on ``obs``.

    With ``design_norms`` (spectral norms of ``Omega_l``) the level is
    lowered to the largest ``l`` whose design matrix stays below
    ``cfg.alpha``.
    """
    eps, delta = obs.noise.epsilon, obs.noise.delta
    L_cap = min(cfg.L_max, obs.max_level)
    if cfg.variant == "I":
        L = max_level_I(eps, delta, cfg.lam, cfg.nu, L_cap)
    else:
        L = max_level_II(eps, delta, cfg.lam, L_cap)
    used = L
    if design_norms is not None:
        used = min(L, design_level(design_norms[: L + 1], cfg.alpha))

    gamma, gate = _inverse_and_gates(obs, used, cfg)
    zeta = np.zeros(used + 1)
    thresholds = np.full(used + 1, math.inf)
    if gamma is not None:
        with np.errstate(over="ignore", invalid="ignore"):
            full = np.convolve(gamma, obs.y_coeffs[: used + 1])[: used + 1]
        zeta[gate] = full[gate]
        floor = _noise_floor(obs.noise, cfg)
        levels = np.arange(used + 1)
        if cfg.variant == "I":
            thr = np.maximum(levels, 1) ** cfg.nu * floor
        else:
            # HS^2 of each prefix truncation is a double cumulative sum of gamma^2
            with np.errstate(over="ignore", invalid="ignore"):
                hs = np.sqrt(np.cumsum(np.cumsum(gamma**2)))
                thr = hs * np.maximum(levels, 1) ** -0.5 * floor
        # rounding floor: a forward-error bound on the convolution, so that
        # exact-zero coefficients are not kept on rounding noise when S = 0
        with np.errstate(over="ignore", invalid="ignore"):
            bound = np.convolve(np.abs(gamma), np.abs(obs.y_coeffs[: used + 1]))[: used + 1]
            thr = np.maximum(thr, 4.0 * (levels + 1) * np.finfo(float).eps * bound)
        thresholds = np.where(gate, thr, math.inf)

    keep = gate & (np.abs(zeta) > thresholds)
    coeffs = np.where(keep, zeta, 0.0)
    a = 0.5 if basis is None else basis.a
    return EstimateReport(
        estimate=LaguerreSeries(coeffs, LaguerreBasis(a, used)),
        kept_levels=tuple(int(i) for i in np.flatnonzero(keep)),
        gate_failures=tuple(int(i) for i in np.flatnonzero(~gate)),
        levels=(L, used),
        zeta=zeta,
        thresholds=thresholds,
    )
