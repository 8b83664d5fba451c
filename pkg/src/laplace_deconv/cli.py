"""Command-line entry point: ``laplace-deconv <subcommand> ...``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

import numpy as np

from . import harness
from .calibrate import CalibrationError, calibrate_kappa, calibrate_tau
from .estimator import EstimatorConfig, estimate
from .laguerre import LaguerreBasis, trapezoid_coeffs
from .model import DesignGrid, NoiseLevels, Observations

__all__ = ["main", "build_parser"]


class CliError(Exception):
    pass


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _seed(text: str) -> int:
    v = int(text)
    if not 0 <= v < 2**64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _floats(text: str):
    try:
        return tuple(float(x) for x in text.split(",") if x.strip())
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=_seed, default=None, help="master seed (overrides the config)")
    common.add_argument("--out", type=Path, default=Path("results"), help="output directory")
    common.add_argument("--reps", type=_positive_int, default=None, help="replications (overrides the config)")
    common.add_argument("--threads", type=_positive_int, default=None, help="worker processes")

    p = argparse.ArgumentParser(prog="laplace-deconv", description="Laplace deconvolution with a noisy kernel")
    sub = p.add_subparsers(dest="command", required=True)

    c = sub.add_parser("calibrate", parents=[common], help="choose kappa, tau_sig or tau_op on pure noise")
    c.add_argument("--constant", choices=("kappa", "tau_sig", "tau_op"), required=True)
    c.add_argument("--variant", choices=("I", "II"), default="I")
    c.add_argument("--delta", type=float, default=1e-2, help="operator noise for the kappa benchmark")
    c.add_argument("--grid", type=_floats, default=None, help="comma-separated candidates")
    c.add_argument("--kappa", type=float, default=0.3, help="kappa used by the tau benchmarks")

    for name, helptext in (
        ("mse-grid", "sequence-model MSE over an (epsilon, delta) grid"),
        ("design", "level L against design-adjusted level N on equispaced designs"),
        ("regression", "regression model on a jittered design"),
    ):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--config", type=Path, required=True, help="TOML experiment file")
        s.add_argument("--no-plots", action="store_true", help="skip PNG rendering")

    e = sub.add_parser("estimate", parents=[common], help="run one estimator on data files")
    e.add_argument("--data", type=Path, required=True,
                   help="one column of y coefficients, or two columns (t, y) of samples")
    e.add_argument("--gdot", type=Path, required=True, help="one column: noisy kernel column g_dot")
    noise = e.add_mutually_exclusive_group(required=True)
    noise.add_argument("--epsilon", type=float)
    noise.add_argument("--sigma", type=float, help="regression noise; epsilon = sigma sqrt(T/n)")
    e.add_argument("--delta", type=float, required=True)
    e.add_argument("--variant", choices=("I", "II"), default="II")
    e.add_argument("--nu", type=float, default=1.0)
    e.add_argument("--level", type=int, default=None, help="coefficients to extract from samples (default L_max)")
    return p


def _ensure_out(path: Path) -> Path:
    try:
        path.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise CliError(f"cannot create output directory {path}: {exc.strerror or exc}")
    if not os.access(path, os.W_OK):
        raise CliError(f"output directory {path} is not writable")
    return path


def _load(args) -> "harness.ExperimentSpec":
    spec = harness.load_spec(args.config)
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.reps is not None:
        changes["reps"] = args.reps
    if changes:
        spec = harness.ExperimentSpec(**{**spec.__dict__, **changes})
    return spec


def _cmd_calibrate(args) -> int:
    seed = 0 if args.seed is None else args.seed
    reps = 10 if args.reps is None else args.reps
    kw = {} if args.grid is None else {"grid": args.grid}
    try:
        if args.constant == "kappa":
            res = calibrate_kappa(args.delta, reps=reps, seed=seed, **kw)
        else:
            which = args.constant.split("_")[1]
            res = calibrate_tau(args.variant, which, reps=reps, seed=seed, kappa=args.kappa, **kw)
        status = 0
    except CalibrationError as exc:
        res = exc.result
        status = 3
    label = res.constant_name if args.constant == "kappa" else f"{res.constant_name} ({args.variant})"
    print(f"{label}: selected {res.value if res.value is not None else 'none'}")
    print("candidate,mean_surviving,rounded")
    for (cand, mean), (_, r) in zip(res.trace, res.rounded_trace()):
        print(f"{cand:g},{mean:g},{r}")
    out = _ensure_out(args.out)
    harness.write_csv(
        out / f"calibrate_{args.constant}{'' if args.constant == 'kappa' else '_' + args.variant}.csv",
        ("candidate", "mean_surviving"),
        res.trace,
    )
    if status:
        print(f"error: no candidate on the grid kills every level", file=sys.stderr)
    return status


def _cmd_mse_grid(args) -> int:
    spec = _load(args)
    out = _ensure_out(args.out)
    table = harness.run_mse_grid(spec, threads=args.threads)
    path = harness.write_csv(out / f"{spec.name}.csv", harness.MseTable.COLUMNS, table.records())
    if not args.no_plots:
        from .plotting import plot_mse_grid

        plot_mse_grid(table, out / f"{spec.name}.png")
    for r in table.rows:
        print(f"eps={r.epsilon:g} delta={r.delta:g} {r.estimator}: mse={r.mse:.4g} rel_err={r.rel_err:.4g}")
    print(f"wrote {path}")
    return 0


def _cmd_design(args) -> int:
    spec = _load(args)
    out = _ensure_out(args.out)
    rows, examples = harness.run_design_experiment(spec, threads=args.threads, return_examples=True)
    header, records = harness.design_rows_records(rows)
    path = harness.write_csv(out / f"{spec.name}.csv", header, records)
    grid = np.linspace(0.0, 20.0, 400)
    truth = harness.truth_coefficients(spec.target, 2 * spec.L_max, spec.basis_a)
    curves = {"truth": (grid, truth(grid))}
    curves.update({f"estimate_{k}": (grid, s(grid)) for k, s in examples.items()})
    harness.write_plot_data(out, spec.name, curves)
    if not args.no_plots:
        from .plotting import plot_curves, plot_design

        plot_design(rows, out / f"{spec.name}.png")
        plot_curves(curves, out / f"{spec.name}_curves.png")
    for r in rows:
        print(f"n={r.n} {r.estimator}: (L,N)=({r.L},{r.N}) mse_L={r.mse_L:.4g} mse_N={r.mse_N:.4g}")
    print(f"wrote {path}")
    return 0


def _cmd_regression(args) -> int:
    spec = _load(args)
    out = _ensure_out(args.out)
    res = harness.run_regression_experiment(spec, threads=args.threads)
    path = harness.write_csv(out / f"{spec.name}.csv", harness.MseTable.COLUMNS, harness.MseTable(res.rows).records())
    harness.write_plot_data(out, spec.name, res.curves)
    if not args.no_plots:
        from .plotting import plot_curves

        plot_curves(res.curves, out / f"{spec.name}_curves.png")
    for r in res.rows:
        print(f"sigma={r.epsilon:g} delta={r.delta:g} {r.estimator}: mse={r.mse:.4g} rel_err={r.rel_err:.4g}")
    print(f"wrote {path}")
    return 0


def _read_table(path: Path) -> np.ndarray:
    if not path.is_file():
        raise CliError(f"data file not found: {path}")
    try:
        arr = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
    except ValueError as exc:
        raise CliError(f"{path}: {exc}")
    if arr.size == 0:
        raise CliError(f"{path}: no data")
    return arr


def _cmd_estimate(args) -> int:
    data = _read_table(args.data)
    g_dot = _read_table(args.gdot)[:, 0]
    cfg = EstimatorConfig(variant=args.variant, nu=args.nu)
    if data.shape[1] >= 2:
        t, y = data[:, 0], data[:, 1]
        design = DesignGrid(t, float(t[-1]))
        L = min(cfg.L_max, g_dot.size - 1) if args.level is None else args.level
        y_coeffs = trapezoid_coeffs(design, y, L, LaguerreBasis(0.5, L)).coeffs
        if args.sigma is not None:
            noise = NoiseLevels.from_regression(args.sigma, args.delta, design)
        else:
            noise = NoiseLevels(args.epsilon, args.delta)
    else:
        y_coeffs = data[:, 0]
        if args.sigma is not None:
            raise CliError("--sigma needs (t, y) samples; pass --epsilon for coefficient data")
        noise = NoiseLevels(args.epsilon, args.delta)
    m = min(y_coeffs.size, g_dot.size)
    rep = estimate(Observations(y_coeffs[:m], g_dot[:m], noise), cfg)
    out = _ensure_out(args.out)
    path = harness.write_csv(
        out / "estimate.csv",
        ("level", "coefficient", "zeta", "threshold"),
        zip(range(rep.estimate.coeffs.size), rep.estimate.coeffs, rep.zeta, rep.thresholds),
    )
    print(f"levels (L, used) = {rep.levels}; kept {list(rep.kept_levels)}; gate closed at {list(rep.gate_failures)}")
    print(f"wrote {path}")
    return 0


_COMMANDS = {
    "calibrate": _cmd_calibrate,
    "mse-grid": _cmd_mse_grid,
    "design": _cmd_design,
    "regression": _cmd_regression,
    "estimate": _cmd_estimate,
}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return _COMMANDS[args.command](args)
    except (FileNotFoundError, harness.ConfigError, CliError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
