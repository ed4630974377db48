"""Render qrwave CSV outputs into convergence and error-history figures.

Two inputs are understood, by their exact header schemas:

* sweep files:  eps,gamma,t,err_l2,bound1,ratio1,err_grad,bound2,ratio2,
  err_dt_plus_int,bound3,ratio3
* error files:  t,err_l2,err_grad,err_dt,err_dtgrad_int

This module only reads values and evaluates the documented bound shapes;
all numerics live upstream.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

# zero errors are clamped here before log scaling
AXIS_FLOOR = 1e-16

SWEEP_METRICS = {
    "l2": ("err_l2", "bound1", False),
    "grad": ("err_grad", "bound2", False),
    "dt_plus_int": ("err_dt_plus_int", "bound3", True),  # stored squared
}
ERROR_COLUMNS = ("err_l2", "err_grad", "err_dt", "err_dtgrad_int")


class MissingColumnError(KeyError):
    def __init__(self, column: str, path: str):
        self.column = column
        super().__init__(f"column {column!r} missing from {path}")


@dataclass
class PlotSpec:
    """What to draw: input CSV, metric, output path, bound overlays."""

    input_path: str
    output_path: str
    metric: str = "l2"
    overlay_bounds: bool = True
    # shape parameters for reference slopes and error-history bounds
    C1: float = 1.0
    T: float = 0.5
    eps: float | None = None
    gamma: float | None = None


def read_csv_columns(path: str) -> dict[str, np.ndarray]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
        names = reader.fieldnames or []
    out = {}
    for name in names:
        out[name] = np.array([float(r[name]) for r in rows])
    return out


def _require(data: dict[str, np.ndarray], column: str, path: str) -> np.ndarray:
    if column not in data:
        raise MissingColumnError(column, path)
    return data[column]


def _floor(y: np.ndarray) -> np.ndarray:
    return np.maximum(y, AXIS_FLOOR)


def predicted_exponent(t: float, T: float, C1: float) -> float:
    return 0.5 * min(1.0, 1.0 - 1.5 * C1 * (T - t))


def plot_convergence(spec: PlotSpec) -> str:
    """Log-log error against noise level, one curve per reconstruction time.

    Bound overlays are the square roots of the tabulated shape columns; the
    dotted reference lines carry the Hoelder exponents of the shapes.
    """
    if spec.metric not in SWEEP_METRICS:
        raise ValueError(f"metric must be one of {sorted(SWEEP_METRICS)}")
    err_col, bound_col, squared = SWEEP_METRICS[spec.metric]
    data = read_csv_columns(spec.input_path)
    eps = _require(data, "eps", spec.input_path)
    times = _require(data, "t", spec.input_path)
    err = _require(data, err_col, spec.input_path)
    if squared:
        err = np.sqrt(np.maximum(err, 0.0))

    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for t in np.unique(times):
        sel = times == t
        e = eps[sel]
        y = _floor(err[sel])
        order = np.argsort(e)
        ax.loglog(e[order], y[order], "o-", label=f"t = {t:g}")
        if spec.overlay_bounds:
            bound = _require(data, bound_col, spec.input_path)[sel]
            yb = _floor(np.sqrt(np.maximum(bound[order], 0.0)))
            ax.loglog(e[order], yb, "--", color=ax.lines[-1].get_color(),
                      alpha=0.6)
        if e.size >= 2:
            # dotted reference with the shape-predicted exponent, anchored
            # at the smallest noise level
            theta = predicted_exponent(float(t), spec.T, spec.C1)
            e_s = np.sort(e)
            anchor = _floor(err[sel])[np.argsort(e)][0]
            ref = anchor * (e_s / e_s[0]) ** theta
            ax.loglog(e_s, _floor(ref), ":", color="gray", alpha=0.8)

    ax.set_xlabel("noise level")
    ax.set_ylabel(f"reconstruction error ({spec.metric})")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=140)
    plt.close(fig)
    return spec.output_path


def plot_errors_in_time(spec: PlotSpec) -> str:
    """Error metrics against reconstruction time, with optional bound shapes.

    The shapes need the run's noise level and auxiliary value; when they are
    not supplied the overlay is skipped.
    """
    data = read_csv_columns(spec.input_path)
    t = _require(data, "t", spec.input_path)
    fig, ax = plt.subplots(figsize=(6.4, 4.8))
    for col in ERROR_COLUMNS:
        y = _floor(_require(data, col, spec.input_path))
        ax.semilogy(t, y, label=col)

    if spec.overlay_bounds and spec.eps is not None and spec.gamma is not None:
        T = float(np.max(t)) if t.size else 0.0
        lg = math.log(spec.gamma)
        power = spec.gamma ** (3.0 * spec.C1 * (T - t) - 2.0)
        shapes = {
            "bound for err_l2^2": spec.eps + power / lg,
            "bound for err_grad^2": lg * spec.eps + power,
            "bound for err_dt^2 + tail": lg**2 * spec.eps + lg * power,
        }
        for label, shape in shapes.items():
            ax.semilogy(t, _floor(np.sqrt(shape)), "--", alpha=0.6, label=label)

    ax.set_xlabel("t")
    ax.set_ylabel("error")
    ax.grid(True, alpha=0.3)
    ax.legend(loc="best", fontsize=8)
    fig.tight_layout()
    fig.savefig(spec.output_path, dpi=140)
    plt.close(fig)
    return spec.output_path
