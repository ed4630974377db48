import subprocess
import sys
from pathlib import Path

import pytest

from plotviz import MissingColumnError, PlotSpec, plot_convergence, plot_errors_in_time
from plotviz.cli import main

SWEEP_HEADER = ("eps,gamma,t,err_l2,bound1,ratio1,err_grad,bound2,ratio2,"
                "err_dt_plus_int,bound3,ratio3")
ERROR_HEADER = "t,err_l2,err_grad,err_dt,err_dtgrad_int"

SWEEP_CONFIG = """
domain.L = 100.53096491487338
domain.n_modes = 320
time.T = 0.5
time.points = 201
truth.kind = decay
truth.decay = 1.025
truth.band = 14.0
truth.amplitude = 0.2
noise.eps = 1e-3
noise.mode = h1l2
noise.seed = 20260810
sweep.eps = 1e-2,1e-3,1e-4,1e-5,1e-6
sweep.times = 0.0,0.25,0.45
"""


def synthetic_sweep_csv(path: Path, rows):
    lines = [SWEEP_HEADER]
    for r in rows:
        lines.append(",".join(str(v) for v in r))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


@pytest.fixture(scope="module")
def real_sweep_csv(tmp_path_factory):
    """Sweep CSV produced by the solver CLI, consumed file-to-file."""
    out = tmp_path_factory.mktemp("sweepdata")
    cfg = out / "sweep.cfg"
    cfg.write_text(SWEEP_CONFIG)
    proc = subprocess.run(
        [sys.executable, "-m", "qrwave.cli", "sweep", "--config", str(cfg),
         "--out", str(out), "--quiet"],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    return str(out / "sweep.csv")


class TestConvergencePlot:
    def test_renders_real_sweep_with_bounds(self, real_sweep_csv, tmp_path):
        for metric in ("l2", "grad", "dt_plus_int"):
            out = tmp_path / f"conv_{metric}.png"
            plot_convergence(PlotSpec(real_sweep_csv, str(out), metric=metric,
                                      overlay_bounds=True))
            assert out.exists() and out.stat().st_size > 0

    def test_single_row_csv_degenerate(self, tmp_path):
        csv_path = synthetic_sweep_csv(
            tmp_path / "one.csv",
            [[1e-3, 31.6, 0.0, 1e-2, 1e-3, 0.1, 2e-2, 2e-3, 0.2, 3e-4, 3e-3, 0.1]])
        out = tmp_path / "one.png"
        plot_convergence(PlotSpec(csv_path, str(out)))
        assert out.exists() and out.stat().st_size > 0

    def test_zero_error_csv_clamped(self, tmp_path):
        rows = [[1e-2, 10.0, 0.0, 0.0, 1e-3, 0.0, 0.0, 1e-3, 0.0, 0.0, 1e-3, 0.0],
                [1e-4, 100.0, 0.0, 0.0, 1e-4, 0.0, 0.0, 1e-4, 0.0, 0.0, 1e-4, 0.0]]
        csv_path = synthetic_sweep_csv(tmp_path / "zero.csv", rows)
        out = tmp_path / "zero.png"
        plot_convergence(PlotSpec(csv_path, str(out), overlay_bounds=True))
        assert out.exists() and out.stat().st_size > 0

    def test_missing_column_named(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("eps,t,err_l2\n1e-3,0.0,1e-2\n")
        with pytest.raises(MissingColumnError) as err:
            plot_convergence(PlotSpec(str(bad), str(tmp_path / "x.png")))
        assert "bound1" in str(err.value)


class TestErrorHistoryPlot:
    def test_renders_with_bound_shapes(self, tmp_path):
        lines = [ERROR_HEADER]
        for i in range(11):
            t = 0.05 * i
            lines.append(f"{t},{1e-3 * (1 + t)},{2e-3},{3e-3},{4e-4 * (0.5 - t)}")
        csv_path = tmp_path / "errors.csv"
        csv_path.write_text("\n".join(lines) + "\n")
        out = tmp_path / "hist.png"
        plot_errors_in_time(PlotSpec(str(csv_path), str(out), overlay_bounds=True,
                                     eps=1e-3, gamma=31.6))
        assert out.exists() and out.stat().st_size > 0

    def test_zero_error_flatline(self, tmp_path):
        lines = [ERROR_HEADER] + [f"{0.1 * i},0,0,0,0" for i in range(6)]
        csv_path = tmp_path / "zero.csv"
        csv_path.write_text("\n".join(lines) + "\n")
        out = tmp_path / "flat.png"
        plot_errors_in_time(PlotSpec(str(csv_path), str(out)))
        assert out.exists() and out.stat().st_size > 0


class TestCli:
    def test_auto_detect_and_render(self, real_sweep_csv, tmp_path):
        out = tmp_path / "cli.png"
        code = main(["--input", real_sweep_csv, "--output", str(out),
                     "--metric", "grad", "--overlay-bounds"])
        assert code == 0
        assert out.exists() and out.stat().st_size > 0

    def test_missing_column_exit_code(self, tmp_path, capsys):
        bad = tmp_path / "bad.csv"
        bad.write_text("eps,t,err_l2\n1e-3,0.0,1e-2\n")
        code = main(["--input", str(bad), "--output", str(tmp_path / "x.png"),
                     "--overlay-bounds"])
        assert code == 2
        assert "bound1" in capsys.readouterr().err

    def test_reference_exponent_value(self):
        # T - t = 0.5 at C1 = 1: the shape-predicted exponent is 0.125
        from plotviz.plots import predicted_exponent

        assert predicted_exponent(0.0, 0.5, 1.0) == pytest.approx(0.125)
