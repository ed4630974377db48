"""Figure rendering for qrwave sweep and error CSV files."""

from .plots import (
    AXIS_FLOOR,
    MissingColumnError,
    PlotSpec,
    plot_convergence,
    plot_errors_in_time,
    read_csv_columns,
)

__version__ = "0.1.0"
