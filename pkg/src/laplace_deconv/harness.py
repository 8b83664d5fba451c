"""Monte-Carlo experiments: MSE grids, design-adjusted levels, regression mode.

Every replication draws from its own generator seeded by
``SeedSequence([seed, cell, rep])``, so results do not depend on the order
in which cells are evaluated or on how many worker processes are used.
"""

from __future__ import annotations

import csv
import functools
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .estimator import EstimatorConfig, design_level, estimate, max_level_I, max_level_II
from .laguerre import LaguerreBasis, LaguerreSeries, QuadratureSpec, eval_series, l2_distance_sq, project, trapezoid_coeffs
from .model import (
    DecomposedKernel,
    DesignGrid,
    ExplicitKernel,
    KernelSpec,
    NoiseLevels,
    Observations,
    SingularDesignError,
    binomial_series,
    design_noise,
    forward,
    kernel_g_dot,
    omega,
    synthesize_regression,
    synthesize_sequence,
)

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "MseRow",
    "MseTable",
    "DesignRow",
    "RegressionResult",
    "TARGET_FUNCTIONS",
    "truth_coefficients",
    "normalized_mse",
    "relative_error",
    "run_mse_grid",
    "run_design_experiment",
    "run_regression_experiment",
    "load_spec",
    "spec_from_dict",
    "write_csv",
    "write_plot_data",
    "format_float",
]


class ConfigError(ValueError):
    """Malformed experiment configuration."""


def _f1(t):
    t = np.asarray(t, dtype=float)
    return (t * t - t) * np.exp(-t)


def _f2(t):
    t = np.asarray(t, dtype=float)
    return (np.sqrt(t) - t) * np.exp(-t)


TARGET_FUNCTIONS: dict[str, Callable] = {"f1": _f1, "f2": _f2}
SERIES_TARGETS = {"f3": lambda L: binomial_series(-0.5, L)}


@functools.lru_cache(maxsize=32)
def _projected(name: str, degree: int, a: float) -> np.ndarray:
    return project(TARGET_FUNCTIONS[name], degree, LaguerreBasis(a, degree), QuadratureSpec(tol=1e-12)).coeffs


def truth_coefficients(target, degree: int, a: float = 0.5) -> LaguerreSeries:
    """Laguerre coefficients of a named target (``f1``, ``f2``, ``f3``) or of
    an explicit coefficient list, padded or truncated to ``degree``."""
    if isinstance(target, str):
        if target in TARGET_FUNCTIONS:
            c = _projected(target, degree, a)
        elif target in SERIES_TARGETS:
            c = SERIES_TARGETS[target](degree)
        else:
            raise ConfigError(f"unknown target {target!r}")
    else:
        src = np.asarray(target, dtype=float)
        c = np.zeros(degree + 1)
        c[: min(src.size, degree + 1)] = src[: degree + 1]
    return LaguerreSeries(np.array(c), LaguerreBasis(a, degree))


def normalized_mse(estimate_: LaguerreSeries, truth: LaguerreSeries) -> float:
    """``||f_hat - f||^2 / ||f||^2`` in coefficient space."""
    denom = float(truth.coeffs @ truth.coeffs)
    if denom == 0.0:
        raise ValueError("truth is identically zero; normalisation undefined")
    return l2_distance_sq(estimate_, truth) / denom


def relative_error(estimate_: LaguerreSeries, truth: LaguerreSeries) -> float:
    """``||f_hat - f|| / ||f||``, the square root of :func:`normalized_mse`."""
    return math.sqrt(normalized_mse(estimate_, truth))


@dataclass
class ExperimentSpec:
    name: str = "experiment"
    target: object = "f1"
    kernel: KernelSpec = field(default_factory=lambda: ExplicitKernel(np.array([1.0])))
    noise: tuple = ((0.0, 0.0),)  # (epsilon or sigma, delta) pairs
    design: dict = field(default_factory=lambda: {"kind": "ideal-sequence"})
    reps: int = 100
    estimators: tuple = ("I", "II")
    seed: int = 0
    L_max: int = 50
    constants: dict = field(default_factory=dict)
    basis_a: float = 0.5

    def __post_init__(self):
        if self.reps < 1:
            raise ConfigError("reps must be >= 1")
        if not self.noise:
            raise ConfigError("noise grid is empty")
        if not self.estimators or any(e not in ("I", "II") for e in self.estimators):
            raise ConfigError("estimators must be a nonempty subset of {'I', 'II'}")

    def config(self, variant: str) -> EstimatorConfig:
        c = dict(self.constants)
        tau_sig = c.pop(f"tau_sig_{variant}", c.pop("tau_sig", None))
        c.pop("tau_sig_I", None)
        c.pop("tau_sig_II", None)
        return EstimatorConfig(variant=variant, L_max=self.L_max, tau_sig=tau_sig, **c)


@dataclass(frozen=True)
class MseRow:
    epsilon: float
    delta: float
    estimator: str
    mse: float
    stderr: float
    reps: int
    rel_err: float
    rel_err_stderr: float


@dataclass
class MseTable:
    rows: list

    def lookup(self, epsilon: float, delta: float, estimator: str) -> MseRow:
        for r in self.rows:
            if r.epsilon == epsilon and r.delta == delta and r.estimator == estimator:
                return r
        raise KeyError((epsilon, delta, estimator))

    COLUMNS = ("epsilon", "delta", "estimator", "mse", "stderr", "reps", "rel_err", "rel_err_stderr")

    def records(self):
        return [tuple(getattr(r, c) for c in self.COLUMNS) for r in self.rows]


def _rng(seed: int, *keys: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(seed), *map(int, keys)]))


def _mean_se(values) -> tuple:
    v = np.asarray(values, dtype=float)
    se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else 0.0
    return float(v.mean()), se


def _run_workers(fn, jobs, threads: Optional[int]):
    if threads is None or threads <= 1 or len(jobs) <= 1:
        return [fn(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, jobs))


def _grid_cell(job):
    spec, cell, (eps, delta) = job
    L = spec.L_max
    truth = truth_coefficients(spec.target, 2 * L, spec.basis_a)
    g_dot = kernel_g_dot(spec.kernel, L)
    noise = NoiseLevels(eps, delta)
    cfgs = {v: spec.config(v) for v in spec.estimators}
    sq = {v: [] for v in spec.estimators}
    rel = {v: [] for v in spec.estimators}
    for rep in range(spec.reps):
        try:
            obs = synthesize_sequence(truth.coeffs[: L + 1], g_dot, noise, seed=_rng(spec.seed, cell, rep))
            for v in spec.estimators:
                e = normalized_mse(estimate(obs, cfgs[v]).estimate, truth)
                sq[v].append(e)
                rel[v].append(math.sqrt(e))
        except Exception as exc:
            raise RuntimeError(f"cell {cell} (epsilon={eps}, delta={delta}) rep {rep}: {exc}") from exc
    rows = []
    for v in spec.estimators:
        m, se = _mean_se(sq[v])
        rm, rse = _mean_se(rel[v])
        rows.append(MseRow(float(eps), float(delta), v, m, se, spec.reps, rm, rse))
    return rows


def run_mse_grid(spec: ExperimentSpec, threads: Optional[int] = None) -> MseTable:
    """Sequence-model MSE over the ``(epsilon, delta)`` grid with ``Omega = I``."""
    jobs = [(spec, i, cell) for i, cell in enumerate(spec.noise)]
    rows = []
    for cell_rows in _run_workers(_grid_cell, jobs, threads):
        rows.extend(cell_rows)
    return MseTable(rows)


@dataclass(frozen=True)
class DesignRow:
    n: int
    estimator: str
    sigma: float
    delta: float
    L: int
    N: int
    omega_max_level: int
    mse_L: float
    stderr_L: float
    mse_N: float
    stderr_N: float
    rel_err_L: float
    rel_err_stderr_L: float
    rel_err_N: float
    rel_err_stderr_N: float


def _usable_omega(design: DesignGrid, L: int, a: float):
    """Omega matrices up to the largest level the design can resolve."""
    try:
        return omega(design, L, LaguerreBasis(a, L))
    except SingularDesignError as exc:
        if exc.level == 0:
            raise
        return omega(design, exc.level - 1, LaguerreBasis(a, exc.level - 1))


def _design_cell(job):
    spec, cell, n, (sigma, delta), keep = job
    d = spec.design
    design = DesignGrid.equispaced(int(n), float(d.get("horizon", 100.0)), bool(d.get("include_zero", True)))
    basis = LaguerreBasis(spec.basis_a, spec.L_max)
    om = _usable_omega(design, spec.L_max, spec.basis_a)
    top = om.max_level
    truth = truth_coefficients(spec.target, 2 * spec.L_max, spec.basis_a)
    g_dot = kernel_g_dot(spec.kernel, top)
    noise = NoiseLevels.from_regression(sigma, delta, design)
    clean = forward(truth.coeffs[: top + 1], g_dot)
    cfgs = {v: spec.config(v) for v in spec.estimators}
    levels = {}
    for v, cfg in cfgs.items():
        if v == "I":
            L = max_level_I(noise.epsilon, delta, cfg.lam, cfg.nu, min(cfg.L_max, top))
        else:
            L = max_level_II(noise.epsilon, delta, cfg.lam, min(cfg.L_max, top))
        levels[v] = (L, min(L, design_level(om.op_norms, cfg.alpha)))
    acc = {v: {"L": [], "N": []} for v in spec.estimators}
    examples = {}
    for rep in range(spec.reps):
        rng = _rng(spec.seed, cell, rep)
        eta = rng.standard_normal(design.n)
        b = rng.standard_normal(top + 1)
        for v, cfg in cfgs.items():
            for which, lev in zip("LN", levels[v]):
                # noise of a level-`lev` least-squares fit, shared eta across fits
                xi = design_noise(design, lev, eta, basis)
                obs = Observations(
                    clean[: lev + 1] + noise.epsilon * xi,
                    g_dot[: lev + 1] + delta * b[: lev + 1],
                    noise,
                    om.op_norms[: lev + 1],
                )
                res = estimate(obs, cfg)
                acc[v][which].append(normalized_mse(res.estimate, truth))
                if rep == 0 and keep:
                    examples[f"{v}_{which}"] = res.estimate
    rows = []
    for v in spec.estimators:
        mL, sL = _mean_se(acc[v]["L"])
        mN, sN = _mean_se(acc[v]["N"])
        rl, rsl = _mean_se(np.sqrt(acc[v]["L"]))
        rn, rsn = _mean_se(np.sqrt(acc[v]["N"]))
        rows.append(DesignRow(int(n), v, sigma, delta, levels[v][0], levels[v][1], top,
                              mL, sL, mN, sN, rl, rsl, rn, rsn))
    return rows, examples


def run_design_experiment(spec: ExperimentSpec, threads: Optional[int] = None, return_examples: bool = False):
    """Compare the noise-driven level ``L`` with the design-adjusted level ``N``
    on equispaced designs ``t_i = T i / n``.

    ``spec.design`` holds ``kind="equispaced"``, ``n`` (int or list) and
    ``horizon``; ``spec.noise`` holds ``(sigma, delta)`` pairs.
    """
    d = spec.design
    if d.get("kind") != "equispaced":
        raise ConfigError("design experiment needs design.kind = 'equispaced'")
    ns = d.get("n")
    ns = [ns] if isinstance(ns, (int, float)) else list(ns)
    jobs = []
    for i, (n, pair) in enumerate((n, p) for n in ns for p in spec.noise):
        jobs.append((spec, i, n, pair, i == 0))
    out = _run_workers(_design_cell, jobs, threads)
    rows = [r for rs, _ in out for r in rs]
    if return_examples:
        return rows, out[0][1]
    return rows


@dataclass
class RegressionResult:
    rows: list  # MseRow-like, epsilon column holds sigma
    curves: dict  # curve name -> (t, values)


def _kernel_function(kernel: KernelSpec, a: float, degree: int):
    if isinstance(kernel, DecomposedKernel):
        g_dot = kernel_g_dot(kernel, degree)
        g = np.cumsum(g_dot)
    else:
        g = np.asarray(kernel.g_coeffs, dtype=float)
    series = LaguerreSeries(g, LaguerreBasis(a, g.size - 1))
    return lambda t: float(eval_series(series, [t])[0])


def _regression_samples(spec: ExperimentSpec, design: DesignGrid, truth: LaguerreSeries, rng):
    sigma_noise = rng.standard_normal(design.n)
    if isinstance(spec.target, str) and spec.target in TARGET_FUNCTIONS:
        f = TARGET_FUNCTIONS[spec.target]
        g = _kernel_function(spec.kernel, spec.basis_a, 2 * spec.L_max)
        q = synthesize_regression(lambda s: float(f(s)), g, design, 0.0)
    else:
        M = truth.degree
        q_coeffs = forward(truth.coeffs, kernel_g_dot(spec.kernel, M))
        q = eval_series(LaguerreSeries(q_coeffs, LaguerreBasis(spec.basis_a, M)), design.times)
    return q, sigma_noise


def _regression_cell(job):
    spec, cell, (sigma, delta), keep = job
    d = spec.design
    L = spec.L_max
    truth = truth_coefficients(spec.target, 2 * L, spec.basis_a)
    g_dot = kernel_g_dot(spec.kernel, L)
    sq = {v: [] for v in spec.estimators}
    curves = {}
    for rep in range(spec.reps):
        rng = _rng(spec.seed, cell, rep)
        design = DesignGrid.cumulative_step(float(d["step"]), float(d.get("jitter_sd", 0.1)), int(d["n"]), rng)
        q, eta = _regression_samples(spec, design, truth, rng)
        y = q + sigma * eta
        y_coeffs = trapezoid_coeffs(design, y, L, LaguerreBasis(spec.basis_a, L)).coeffs
        g_noisy = g_dot + delta * rng.standard_normal(L + 1)
        obs = Observations(y_coeffs, g_noisy, NoiseLevels.from_regression(sigma, delta, design))
        for v in spec.estimators:
            rep_est = estimate(obs, spec.config(v)).estimate
            sq[v].append(normalized_mse(rep_est, truth))
            if rep == 0 and keep:
                grid = np.linspace(0.0, design.horizon, 400)
                curves[f"estimate_{v}"] = (grid, eval_series(rep_est, grid))
        if rep == 0 and keep:
            grid = np.linspace(0.0, design.horizon, 400)
            curves["truth"] = (grid, eval_series(truth, grid))
            curves["samples"] = (design.times.copy(), y)
    rows = []
    for v in spec.estimators:
        m, se = _mean_se(sq[v])
        rm, rse = _mean_se(np.sqrt(sq[v]))
        rows.append(MseRow(float(sigma), float(delta), v, m, se, spec.reps, rm, rse))
    return rows, curves


def run_regression_experiment(spec: ExperimentSpec, threads: Optional[int] = None) -> RegressionResult:
    """Regression-model experiment on a jittered cumulative-step design.

    Samples of ``q = K f`` are taken at ``t_i``, Laguerre coefficients are
    recovered by the trapezoid rule and both estimators run on them.
    ``spec.design`` holds ``kind="cumulative-step"``, ``step``, ``n`` and
    ``jitter_sd``; ``spec.noise`` holds ``(sigma, delta)`` pairs.
    """
    if spec.design.get("kind") != "cumulative-step":
        raise ConfigError("regression experiment needs design.kind = 'cumulative-step'")
    for key in ("step", "n"):
        if key not in spec.design:
            raise ConfigError(f"design.{key} is required")
    jobs = [(spec, i, pair, i == 0) for i, pair in enumerate(spec.noise)]
    out = _run_workers(_regression_cell, jobs, threads)
    return RegressionResult([r for rs, _ in out for r in rs], out[0][1])


# --- configuration -----------------------------------------------------------

def _kernel_from_dict(d: dict) -> KernelSpec:
    if "decomposition" in d:
        p = d["decomposition"]
        roots = [complex(r[0], r[1]) if isinstance(r, list) else complex(r) for r in p.get("w_roots", [])]
        return DecomposedKernel(float(p.get("C", 1.0)), tuple(roots), float(p.get("mu", 1.0)), float(p.get("nu", 1.0)))
    if "g_coeffs" in d:
        return ExplicitKernel(np.asarray(d["g_coeffs"], dtype=float))
    if "g_dot" in d:
        return ExplicitKernel(np.cumsum(np.asarray(d["g_dot"], dtype=float)))
    raise ConfigError("kernel needs one of g_coeffs, g_dot or decomposition")


def spec_from_dict(raw: dict) -> ExperimentSpec:
    raw = dict(raw)
    known = {"name", "target", "kernel", "noise", "design", "reps", "estimators", "seed", "L_max", "constants", "basis_a"}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")
    kw = {}
    for k in ("name", "reps", "seed", "L_max", "basis_a"):
        if k in raw:
            kw[k] = raw[k]
    if "target" in raw:
        t = raw["target"]
        kw["target"] = t if isinstance(t, str) else tuple(float(x) for x in t)
    if "kernel" in raw:
        kw["kernel"] = _kernel_from_dict(raw["kernel"])
    if "estimators" in raw:
        kw["estimators"] = tuple(raw["estimators"])
    if "design" in raw:
        kw["design"] = dict(raw["design"])
    if "constants" in raw:
        kw["constants"] = dict(raw["constants"])
    if "noise" in raw:
        nz = raw["noise"]
        if "pairs" in nz:
            pairs = [tuple(map(float, p)) for p in nz["pairs"]]
        else:
            first = nz.get("epsilon", nz.get("sigma"))
            if first is None or "delta" not in nz:
                raise ConfigError("noise needs pairs, or epsilon/sigma and delta lists")
            first = first if isinstance(first, list) else [first]
            deltas = nz["delta"] if isinstance(nz["delta"], list) else [nz["delta"]]
            pairs = [(float(e), float(dl)) for dl in deltas for e in first]
        kw["noise"] = tuple(pairs)
    try:
        return ExperimentSpec(**kw)
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def load_spec(path) -> ExperimentSpec:
    try:
        import tomllib
    except ModuleNotFoundError:  # python < 3.11
        import tomli as tomllib
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    try:
        with path.open("rb") as fh:
            raw = tomllib.load(fh)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return spec_from_dict(raw)


# --- output ------------------------------------------------------------------

def format_float(x) -> str:
    """Shortest round-trip decimal for floats; ints and strings unchanged."""
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    if isinstance(x, np.integer):
        return str(int(x))
    return str(x)


def write_csv(path, header: Sequence[str], records) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for rec in records:
            w.writerow([format_float(x) for x in rec])
    return path


def write_plot_data(out_dir, stem: str, curves: dict) -> Path:
    """One two-column ``(t, value)`` CSV per curve plus ``<stem>_manifest.json``."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    manifest = {"name": stem, "curves": []}
    for name in sorted(curves):
        t, v = curves[name]
        fname = f"{stem}_{name}.csv"
        write_csv(out_dir / fname, ("t", "value"), zip(np.asarray(t, float), np.asarray(v, float)))
        manifest["curves"].append({"name": name, "file": fname, "points": int(len(t))})
    mpath = out_dir / f"{stem}_manifest.json"
    mpath.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return mpath


def design_rows_records(rows):
    header = tuple(DesignRow.__dataclass_fields__)
    return header, [tuple(getattr(r, h) for h in header) for r in rows]
