"""Laplace deconvolution with a noisy kernel in a Laguerre basis."""

from .calibrate import CalibrationError, CalibrationResult, calibrate_kappa, calibrate_tau
from .estimator import EstimateReport, EstimatorConfig, estimate, max_level_I, max_level_II
from .harness import ExperimentSpec, load_spec, normalized_mse, run_design_experiment, run_mse_grid, run_regression_experiment
from .laguerre import LaguerreBasis, LaguerreSeries, eval_function, eval_series, project, trapezoid_coeffs
from .model import DecomposedKernel, DesignGrid, ExplicitKernel, NoiseLevels, Observations, omega, synthesize_sequence
from .toeplitz import LowerToeplitz, hs_norm, invert_series, op_norm

__version__ = "0.1.0"

__all__ = [
    "CalibrationError",
    "CalibrationResult",
    "DecomposedKernel",
    "DesignGrid",
    "EstimateReport",
    "EstimatorConfig",
    "ExperimentSpec",
    "ExplicitKernel",
    "LaguerreBasis",
    "LaguerreSeries",
    "LowerToeplitz",
    "NoiseLevels",
    "Observations",
    "calibrate_kappa",
    "calibrate_tau",
    "estimate",
    "eval_function",
    "eval_series",
    "hs_norm",
    "invert_series",
    "load_spec",
    "max_level_I",
    "max_level_II",
    "normalized_mse",
    "omega",
    "op_norm",
    "project",
    "run_design_experiment",
    "run_mse_grid",
    "run_regression_experiment",
    "synthesize_sequence",
    "trapezoid_coeffs",
]
