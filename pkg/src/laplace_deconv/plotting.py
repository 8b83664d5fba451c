"""Static PNG renderings of experiment outputs, written next to the CSVs.

Only the non-interactive Agg backend is used, so this works headless.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

__all__ = ["plot_mse_grid", "plot_design", "plot_curves"]

_MARKERS = {"I": "o", "II": "s"}


def _save(fig, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(path, dpi=120, bbox_inches="tight")
    plt.close(fig)
    return path


def plot_mse_grid(table, path, metric: str = "rel_err") -> Path:
    """Error against ``epsilon``, one line per ``(delta, estimator)``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    deltas = sorted({r.delta for r in table.rows})
    estimators = sorted({r.estimator for r in table.rows})
    colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
    for i, d in enumerate(deltas):
        for est in estimators:
            rows = sorted((r for r in table.rows if r.delta == d and r.estimator == est), key=lambda r: r.epsilon)
            eps = [r.epsilon for r in rows]
            val = [getattr(r, metric) for r in rows]
            err = [getattr(r, "stderr" if metric == "mse" else "rel_err_stderr") for r in rows]
            ax.errorbar(
                eps, val, yerr=err,
                color=colors[i % len(colors)],
                marker=_MARKERS.get(est, "x"),
                linestyle="-" if est == "I" else "--",
                label=f"delta={d:g}, {est}",
                capsize=2,
            )
    ax.set_xlabel("epsilon")
    ax.set_ylabel(metric)
    if any(r.epsilon > 0 for r in table.rows):
        ax.set_xscale("symlog", linthresh=min(r.epsilon for r in table.rows if r.epsilon > 0))
    ax.legend(fontsize=7, ncol=2)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_design(rows, path) -> Path:
    """Relative error with level ``L`` and level ``N`` against ``n``."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for est in sorted({r.estimator for r in rows}):
        sub = sorted((r for r in rows if r.estimator == est), key=lambda r: r.n)
        n = [r.n for r in sub]
        ax.errorbar(n, [r.rel_err_L for r in sub], yerr=[r.rel_err_stderr_L for r in sub],
                    marker=_MARKERS.get(est, "x"), label=f"{est}, level L", capsize=2)
        ax.errorbar(n, [r.rel_err_N for r in sub], yerr=[r.rel_err_stderr_N for r in sub],
                    marker=_MARKERS.get(est, "x"), linestyle="--", label=f"{est}, level N", capsize=2)
    ax.set_xlabel("n")
    ax.set_ylabel("rel_err")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)


def plot_curves(curves: dict, path, xmax=None) -> Path:
    """Overlay named ``(t, value)`` curves; a ``samples`` curve is drawn as dots."""
    fig, ax = plt.subplots(figsize=(6, 4))
    for name in sorted(curves):
        t, v = (np.asarray(x, dtype=float) for x in curves[name])
        if name == "samples":
            ax.plot(t, v, ".", ms=3, alpha=0.5, label=name)
        else:
            ax.plot(t, v, lw=1.2, label=name)
    if xmax is not None:
        ax.set_xlim(0, xmax)
    ax.set_xlabel("t")
    ax.legend(fontsize=8)
    ax.grid(alpha=0.3)
    return _save(fig, path)
