import json
import math

import numpy as np
import pytest

from qrwave.cli import (
    EXIT_ASSUMPTION,
    EXIT_CONFIG,
    EXIT_OK,
    EXIT_VERIFY,
    ConfigError,
    load_run_config,
    main,
    parse_config_text,
)

BASE = """
domain.L = 3.141592653589793
domain.n_modes = 8
time.T = 0.5
time.points = 101

truth.kind = explicit
truth.modes = 1,2
truth.coeffs = 1.0,0.25

noise.eps = 2.5e-4
noise.mode = h1l2
noise.seed = 77

reg.schedule = explicit
reg.gamma = 54.598150033144236
"""

SWEEP = """
domain.L = 50.26548245743669
domain.n_modes = 96
time.T = 0.5
time.points = 101

truth.kind = decay
truth.decay = 1.0
truth.band = 10.0

noise.eps = 1e-3
noise.mode = h1l2
noise.seed = 123

sweep.eps = 2e-2,1e-2,1e-3,1e-4
sweep.times = 0.0,0.25,0.45
sweep.workers = 1
"""

VERIFY = """
domain.L = 3.141592653589793
domain.n_modes = 8
time.T = 0.5
time.points = 101

truth.kind = explicit
truth.modes = 1
truth.coeffs = 1.0

noise.eps = 1e-3
noise.seed = 5

verify.samples = 100
verify.gammas = 54.598150033144236
verify.n_modes = 32
verify.dt = 1e-3
verify.iterations = 150
verify.energy_trials = 5
"""


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


class TestConfigParsing:
    def test_comments_and_blank_lines(self):
        d = parse_config_text("# hi\n\na.b = 1  # trailing\n")
        assert d == {"a.b": "1"}

    def test_duplicate_keys_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("a = 1\na = 2\n")

    def test_missing_equals_rejected(self):
        with pytest.raises(ConfigError):
            parse_config_text("just words\n")

    def test_errors_are_aggregated(self, tmp_path):
        bad = BASE.replace("domain.L = 3.141592653589793", "domain.L = -1") \
                  .replace("noise.eps = 2.5e-4", "noise.eps = 7")
        path = write(tmp_path, "bad.cfg", bad)
        with pytest.raises(ConfigError) as err:
            load_run_config(path)
        msg = str(err.value)
        assert "domain.L" in msg and "noise.eps" in msg

    def test_truth_length_mismatch(self, tmp_path):
        bad = BASE.replace("truth.coeffs = 1.0,0.25", "truth.coeffs = 1.0")
        with pytest.raises(ConfigError):
            load_run_config(write(tmp_path, "bad.cfg", bad))

    def test_seed_override(self, tmp_path):
        path = write(tmp_path, "c.cfg", BASE)
        assert load_run_config(path).seed == 77
        assert load_run_config(path, seed_override=5).seed == 5


class TestForwardCommand:
    def test_zero_initial_data_writes_zero_csv(self, tmp_path):
        cfg = BASE.replace("truth.coeffs = 1.0,0.25", "truth.coeffs = 0.0,0.0")
        path = write(tmp_path, "c.cfg", cfg)
        out = tmp_path / "out"
        assert main(["forward", "--config", path, "--out", str(out), "--quiet"]) == EXIT_OK
        lines = (out / "trajectory.csv").read_text().splitlines()
        header = lines[0].split(",")
        assert header == (["t"] + [f"mode_{p}" for p in range(1, 9)]
                          + [f"dmode_{p}" for p in range(1, 9)])
        for line in lines[1:]:
            assert all(float(v) == 0.0 for v in line.split(",")[1:])

    def test_rerun_is_byte_identical(self, tmp_path):
        path = write(tmp_path, "c.cfg", BASE)
        outs = []
        for name in ("a", "b"):
            out = tmp_path / name
            assert main(["forward", "--config", path, "--out", str(out),
                         "--quiet"]) == EXIT_OK
            outs.append((out / "trajectory.csv").read_bytes())
        assert outs[0] == outs[1]

    def test_values_round_trip_seventeen_digits(self, tmp_path):
        path = write(tmp_path, "c.cfg", BASE)
        out = tmp_path / "out"
        main(["forward", "--config", path, "--out", str(out), "--quiet"])
        from qrwave import SpectralField, build_basis, forward_solve

        basis = build_basis(math.pi, 8)
        u0 = np.zeros(8)
        u0[:2] = [1.0, 0.25]
        truth = forward_solve(SpectralField(basis, u0),
                              SpectralField(basis, np.zeros(8)), 0.5,
                              np.linspace(0, 0.5, 101))
        rows = (out / "trajectory.csv").read_text().splitlines()[1:]
        parsed = np.array([[float(v) for v in r.split(",")] for r in rows])
        assert np.array_equal(parsed[:, 1:9], truth.values)
        assert np.array_equal(parsed[:, 9:], truth.dvalues)


class TestInvertCommand:
    def test_noiseless_low_mode_errors_vanish(self, tmp_path):
        cfg = (BASE.replace("noise.mode = h1l2", "noise.mode = off")
                   .replace("truth.modes = 1,2", "truth.modes = 1")
                   .replace("truth.coeffs = 1.0,0.25", "truth.coeffs = 1.0"))
        path = write(tmp_path, "c.cfg", cfg)
        out = tmp_path / "out"
        assert main(["invert", "--config", path, "--out", str(out), "--quiet"]) == EXIT_OK
        rows = (out / "errors.csv").read_text().splitlines()
        assert rows[0] == "t,err_l2,err_grad,err_dt,err_dtgrad_int"
        err_l2 = [float(r.split(",")[1]) for r in rows[1:]]
        assert max(err_l2) <= 1e-9

    def test_summary_contents(self, tmp_path):
        path = write(tmp_path, "c.cfg", BASE)
        out = tmp_path / "out"
        main(["invert", "--config", path, "--out", str(out), "--quiet"])
        summary = json.loads((out / "summary.json").read_text())
        assert summary["assumptions_ok"] is True
        assert summary["gamma"] == pytest.approx(math.exp(4))
        assert summary["cutoff"] == pytest.approx(2.0)
        assert summary["rho"] == pytest.approx(4.0)
        assert set(summary["c_hat"]) == {"l2", "grad", "dt_plus_int"}


class TestSweepCommand:
    def test_schema_and_skip_diagnostics(self, tmp_path):
        path = write(tmp_path, "c.cfg", SWEEP)
        out = tmp_path / "out"
        assert main(["sweep", "--config", path, "--out", str(out), "--quiet"]) == EXIT_OK
        rows = (out / "sweep.csv").read_text().splitlines()
        assert rows[0] == ("eps,gamma,t,err_l2,bound1,ratio1,err_grad,bound2,"
                           "ratio2,err_dt_plus_int,bound3,ratio3")
        # 3 surviving eps x 3 times (2e-2 violates gamma >= e^2)
        assert len(rows) == 1 + 9
        payload = json.loads((out / "sweep.json").read_text())
        assert len(payload["skipped"]) == 1
        assert payload["skipped"][0]["eps"] == 2e-2

    def test_rerun_and_parallelism_byte_identical(self, tmp_path):
        path_serial = write(tmp_path, "serial.cfg", SWEEP)
        path_par = write(tmp_path, "par.cfg",
                         SWEEP.replace("sweep.workers = 1", "sweep.workers = 4"))
        blobs = []
        for name, path in (("a", path_serial), ("b", path_serial), ("c", path_par)):
            out = tmp_path / name
            assert main(["sweep", "--config", path, "--out", str(out),
                         "--quiet"]) == EXIT_OK
            blobs.append(((out / "sweep.csv").read_bytes(),
                          (out / "sweep.json").read_bytes()))
        assert blobs[0] == blobs[1] == blobs[2]

    def test_weak_noise_mode(self, tmp_path):
        cfg = SWEEP.replace("noise.mode = h1l2", "noise.mode = l2only")
        path = write(tmp_path, "c.cfg", cfg)
        out = tmp_path / "out"
        assert main(["sweep", "--config", path, "--out", str(out), "--quiet"]) == EXIT_OK
        payload = json.loads((out / "sweep.json").read_text())
        assert payload["mode"] == "weak_noise"
        assert payload["spread"] <= 50.0


class TestVerifyCommand:
    def test_default_config_passes(self, tmp_path):
        path = write(tmp_path, "c.cfg", VERIFY)
        out = tmp_path / "out"
        assert main(["verify", "--config", path, "--out", str(out), "--quiet"]) == EXIT_OK
        payload = json.loads((out / "verify.json").read_text())
        assert payload["failures"] == []

    def test_sabotaged_constant_names_q_bound(self, tmp_path, capsys):
        # at gamma = e^8 the ensemble ratio is near 1, so shrinking C0 to a
        # twentieth forces the bound check over the line
        cfg = (VERIFY.replace("verify.gammas = 54.598150033144236",
                              "verify.gammas = 2980.9579870417283")
               + "reg.C0 = 0.1\n")
        path = write(tmp_path, "c.cfg", cfg)
        out = tmp_path / "out"
        assert main(["verify", "--config", path, "--out", str(out),
                     "--quiet"]) == EXIT_VERIFY
        assert "Q-bound failed" in capsys.readouterr().err

    def test_gamma_one_is_assumption_violation(self, tmp_path):
        cfg = VERIFY.replace("verify.gammas = 54.598150033144236",
                             "verify.gammas = 1.0")
        path = write(tmp_path, "c.cfg", cfg)
        out = tmp_path / "out"
        assert main(["verify", "--config", path, "--out", str(out),
                     "--quiet"]) == EXIT_ASSUMPTION


class TestExitCodes:
    def test_config_error_exit(self, tmp_path, capsys):
        path = write(tmp_path, "c.cfg", "domain.L = not_a_number\n")
        assert main(["forward", "--config", path, "--out",
                     str(tmp_path / "o")]) == EXIT_CONFIG
        assert "config error" in capsys.readouterr().err

    def test_missing_config_file(self, tmp_path):
        assert main(["forward", "--config", str(tmp_path / "nope.cfg"),
                     "--out", str(tmp_path)]) == EXIT_CONFIG


class TestDemoCommand:
    def test_demo_writes_report(self, tmp_path):
        path = write(tmp_path, "c.cfg", BASE)
        out = tmp_path / "out"
        assert main(["demo-illposed", "--config", path, "--out", str(out),
                     "--quiet"]) == EXIT_OK
        payload = json.loads((out / "illposed.json").read_text())
        assert len(payload["demos"]) == 3
        assert payload["demos"][2]["predicted"] == pytest.approx(
            math.exp(4.5), rel=1e-12)
