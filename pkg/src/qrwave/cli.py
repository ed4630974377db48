"""Command-line front end: flat key=value configs, CSV/JSON outputs.

Subcommands: forward, invert, sweep, verify, demo-illposed.  All file
outputs are deterministic functions of (config, seed): floats are written
with 17 significant digits (round-trip exact for doubles) and JSON keys are
sorted, so reruns are byte-identical regardless of parallelism.

Exit codes: 0 success, 2 config or validation error, 3 admissibility
violation, 4 verification failure, 5 I/O error.
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .experiments import (
    NoiseSpec,
    TruthSpec,
    add_noise,
    check_assumptions,
    convergence_sweep,
    error_report,
    illposedness_demo,
    bound_envelope,
    weak_noise_experiment,
)
from .operators import RegConfig, verify_p_bound, verify_q_bound
from .solvers import (
    GalerkinInstabilityError,
    PicardDivergenceError,
    TerminalData,
    energy_series,
    galerkin_step_solve,
    picard_solve,
    regularized_backward_solve,
    v_transform,
)
from .spectral import SpectralField, Trajectory, build_basis

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_ASSUMPTION = 3
EXIT_VERIFY = 4
EXIT_IO = 5


class ConfigError(Exception):
    """Aggregated configuration problems, reported once."""


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def parse_config_text(text: str) -> dict[str, str]:
    """Flat ``section.key = value`` lines; '#' starts a comment."""
    out: dict[str, str] = {}
    errors = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            errors.append(f"line {lineno}: expected 'key = value', got {raw.strip()!r}")
            continue
        key, value = line.split("=", 1)
        key = key.strip()
        if not key:
            errors.append(f"line {lineno}: empty key")
            continue
        if key in out:
            errors.append(f"line {lineno}: duplicate key {key!r}")
            continue
        out[key] = value.strip()
    if errors:
        raise ConfigError("; ".join(errors))
    return out


class _Config:
    """Typed accessors over the flat key map, collecting all errors."""

    def __init__(self, raw: dict[str, str]):
        self.raw = raw
        self.errors: list[str] = []

    def _get(self, key, default, conv, what):
        if key not in self.raw:
            if default is None:
                self.errors.append(f"missing required key {key!r}")
                return None
            return default
        try:
            return conv(self.raw[key])
        except ValueError:
            self.errors.append(f"{key}: expected {what}, got {self.raw[key]!r}")
            return default

    def num(self, key, default=None):
        return self._get(key, default, float, "a number")

    def integer(self, key, default=None):
        return self._get(key, default, lambda s: int(s, 10), "an integer")

    def text(self, key, default=None):
        return self._get(key, default, str, "a string")

    def numlist(self, key, default=None):
        def conv(s):
            return [float(tok) for tok in s.split(",") if tok.strip()]

        return self._get(key, default, conv, "a comma-separated number list")

    def done(self):
        if self.errors:
            raise ConfigError("; ".join(self.errors))


@dataclass
class RunConfig:
    """Validated run parameters shared by the subcommands."""

    L: float
    n_modes: int
    T: float
    n_times: int
    truth: TruthSpec
    noise_eps: float
    noise_mode: str | None
    seed: int
    C0: float
    C1: float
    K: float
    gamma: float | None      # explicit gamma; None means the eps^(-1/2) schedule
    eps_grid: list[float]
    sweep_times: list[float]
    workers: int
    verify_samples: int
    verify_gammas: list[float]
    verify_n_modes: int
    verify_dt: float
    verify_iterations: int
    verify_energy_trials: int

    def reg_config(self, eps: float) -> RegConfig:
        if self.gamma is not None:
            return RegConfig(eps=eps, gamma=self.gamma, C0=self.C0, C1=self.C1, K=self.K)
        return RegConfig(eps=eps, gamma=eps**-0.5, C0=self.C0, C1=self.C1, K=self.K)


def load_run_config(path: str, seed_override: int | None = None) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    cfg = _Config(parse_config_text(text))

    L = cfg.num("domain.L", math.pi)
    n_modes = cfg.integer("domain.n_modes", 16)
    T = cfg.num("time.T", 0.5)
    n_times = cfg.integer("time.points", 201)
    truth_kind = cfg.text("truth.kind", "explicit")
    noise_eps = cfg.num("noise.eps", 1e-3)
    noise_mode = cfg.text("noise.mode", "h1l2")
    seed = cfg.integer("noise.seed", 20260810)
    C0 = cfg.num("reg.C0", 2.0)
    C1 = cfg.num("reg.C1", 1.0)
    K = cfg.num("reg.K", 1.0)
    gamma_raw = cfg.text("reg.gamma", "")
    schedule = cfg.text("reg.schedule", "inv_sqrt")
    eps_grid = cfg.numlist("sweep.eps", [1e-2, 1e-3, 1e-4, 1e-5, 1e-6])
    sweep_times = cfg.numlist("sweep.times", [0.0, 0.25, 0.45])
    workers = cfg.integer("sweep.workers", 1)
    verify_samples = cfg.integer("verify.samples", 1000)
    verify_gammas = cfg.numlist("verify.gammas", [math.exp(4), math.exp(8), 1000.0])
    verify_n_modes = cfg.integer("verify.n_modes", 64)
    verify_dt = cfg.num("verify.dt", 1e-4)
    verify_iterations = cfg.integer("verify.iterations", 200)
    verify_energy_trials = cfg.integer("verify.energy_trials", 20)
    cfg.done()

    errors = []
    if not (L > 0):
        errors.append("domain.L must be positive")
    if n_modes < 1:
        errors.append("domain.n_modes must be >= 1")
    if not (T > 0):
        errors.append("time.T must be positive")
    if n_times < 2:
        errors.append("time.points must be >= 2")
    if noise_mode not in ("h1l2", "l2only", "off"):
        errors.append("noise.mode must be h1l2, l2only or off")
    if not (0.0 < noise_eps < 1.0):
        errors.append("noise.eps must lie in (0, 1)")
    if schedule not in ("inv_sqrt", "explicit"):
        errors.append("reg.schedule must be inv_sqrt or explicit")
    gamma = None
    if gamma_raw:
        try:
            gamma = float(gamma_raw)
            if gamma < 1.0:
                errors.append("reg.gamma must be >= 1")
        except ValueError:
            errors.append(f"reg.gamma: expected a number, got {gamma_raw!r}")
    elif schedule == "explicit":
        errors.append("reg.schedule = explicit requires reg.gamma")
    if errors:
        raise ConfigError("; ".join(errors))

    basis = build_basis(L, n_modes)
    if truth_kind == "explicit":
        c2 = _Config(cfg.raw)
        modes = c2.numlist("truth.modes", [1.0])
        coeffs = c2.numlist("truth.coeffs", [1.0])
        dcoeffs = c2.numlist("truth.dcoeffs", [])
        c2.done()
        if len(modes) != len(coeffs):
            raise ConfigError("truth.modes and truth.coeffs must have equal length")
        u0 = {int(p): c for p, c in zip(modes, coeffs)}
        u1 = {int(p): c for p, c in zip(modes, dcoeffs)} if dcoeffs else None
        try:
            truth = TruthSpec.band_limited(basis, u0, T, n_times, dcoeffs=u1)
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    elif truth_kind == "decay":
        c2 = _Config(cfg.raw)
        decay = c2.num("truth.decay", 1.0)
        band = c2.num("truth.band", 12.0)
        amp = c2.num("truth.amplitude", 1.0)
        c2.done()
        mu = basis.eigenvalues
        with np.errstate(under="ignore"):
            coeffs = amp * np.where(mu <= band, np.exp(-decay * mu), 0.0)
        truth = TruthSpec(basis, coeffs, np.zeros(n_modes), T, n_times)
    else:
        raise ConfigError(f"truth.kind must be explicit or decay, got {truth_kind!r}")

    return RunConfig(
        L=L, n_modes=n_modes, T=T, n_times=n_times, truth=truth,
        noise_eps=noise_eps, noise_mode=None if noise_mode == "off" else noise_mode,
        seed=seed if seed_override is None else seed_override,
        C0=C0, C1=C1, K=K, gamma=gamma,
        eps_grid=eps_grid, sweep_times=sweep_times, workers=max(1, workers),
        verify_samples=verify_samples, verify_gammas=verify_gammas,
        verify_n_modes=verify_n_modes, verify_dt=verify_dt,
        verify_iterations=verify_iterations, verify_energy_trials=verify_energy_trials,
    )


def write_trajectory_csv(path: Path, traj: Trajectory) -> None:
    n = traj.basis.n_modes
    header = (["t"] + [f"mode_{p}" for p in range(1, n + 1)]
              + [f"dmode_{p}" for p in range(1, n + 1)])
    lines = [",".join(header)]
    for i in range(traj.n_times):
        row = [_fmt(traj.times[i])]
        row += [_fmt(v) for v in traj.values[i]]
        row += [_fmt(v) for v in traj.dvalues[i]]
        lines.append(",".join(row))
    path.write_text("\n".join(lines) + "\n")


def write_error_csv(path: Path, rep) -> None:
    lines = ["t,err_l2,err_grad,err_dt,err_dtgrad_int"]
    for i in range(rep.times.shape[0]):
        lines.append(",".join(_fmt(v) for v in (
            rep.times[i], rep.err_l2[i], rep.err_grad[i], rep.err_dt[i],
            rep.err_dtgrad_int[i])))
    path.write_text("\n".join(lines) + "\n")


def write_sweep_csv(path: Path, sweep) -> None:
    lines = ["eps,gamma,t,err_l2,bound1,ratio1,err_grad,bound2,ratio2,"
             "err_dt_plus_int,bound3,ratio3"]
    for i in range(sweep.eps.shape[0]):
        for j in range(sweep.times.shape[0]):
            lines.append(",".join(_fmt(v) for v in (
                sweep.eps[i], sweep.gamma[i], sweep.times[j],
                sweep.err_l2[i, j], sweep.bound1[i, j], sweep.ratio1[i, j],
                sweep.err_grad[i, j], sweep.bound2[i, j], sweep.ratio2[i, j],
                sweep.err_dt_plus_int[i, j], sweep.bound3[i, j], sweep.ratio3[i, j])))
    path.write_text("\n".join(lines) + "\n")


def _write_json(path: Path, payload: dict) -> None:
    path.write_text(json.dumps(payload, sort_keys=True, indent=2) + "\n")


def cmd_forward(run: RunConfig, out_dir: Path, quiet: bool) -> int:
    truth, _ = run.truth.manufacture()
    write_trajectory_csv(out_dir / "trajectory.csv", truth)
    if not quiet:
        print(f"wrote {out_dir / 'trajectory.csv'}")
    return EXIT_OK


def cmd_invert(run: RunConfig, out_dir: Path, quiet: bool) -> int:
    truth, td = run.truth.manufacture()
    cfg = run.reg_config(run.noise_eps)
    assn = check_assumptions(cfg, run.T)
    td_used = td if run.noise_mode is None else add_noise(
        td, NoiseSpec(eps=run.noise_eps, seed=run.seed, mode=run.noise_mode))
    rec = regularized_backward_solve(td_used, cfg, truth.times)
    rep = error_report(rec, truth)
    write_trajectory_csv(out_dir / "trajectory.csv", rec)
    write_error_csv(out_dir / "errors.csv", rep)

    summary = {
        "gamma": cfg.gamma,
        "cutoff": cfg.cutoff,
        "rho": cfg.rho,
        "eps": run.noise_eps,
        "noise_mode": run.noise_mode or "off",
        "assumptions_ok": assn.ok,
        "assumption_violations": list(assn.violations),
    }
    if assn.ok:
        M = run.truth.gevrey_magnitude(truth)
        env = bound_envelope(rep, cfg, run.T, M)
        with np.errstate(invalid="ignore"):
            ratios = {
                "l2": float(np.nanmax(rep.err_l2**2 / env.shape1)),
                "grad": float(np.nanmax(rep.err_grad**2 / env.shape2)),
                "dt_plus_int": float(np.nanmax(
                    (rep.err_dt**2 + rep.err_dtgrad_int) / env.shape3)),
            }
        summary["c_hat"] = ratios
        summary["M"] = M
    _write_json(out_dir / "summary.json", summary)
    if not quiet:
        print(f"wrote {out_dir}/trajectory.csv errors.csv summary.json")
    return EXIT_OK


def cmd_sweep(run: RunConfig, out_dir: Path, quiet: bool, weak: bool = False) -> int:
    if weak or run.noise_mode == "l2only":
        weak_rep = weak_noise_experiment(
            run.truth, run.eps_grid, times_of_interest=run.sweep_times,
            base_seed=run.seed, C0=run.C0, C1=run.C1, K=run.K)
        payload = {
            "mode": "weak_noise",
            "eps": [float(e) for e in weak_rep.eps],
            "gamma": [float(g) for g in weak_rep.gamma],
            "weighted_err_sq": [float(v) for v in weak_rep.weighted],
            "spread": weak_rep.spread,
            "skipped": [{"eps": e, "reason": r} for e, r in weak_rep.skipped],
        }
        _write_json(out_dir / "sweep.json", payload)
        lines = ["eps,gamma,t,err_l2,weighted"]
        lg = np.log(weak_rep.gamma)
        for i in range(weak_rep.eps.shape[0]):
            for j in range(weak_rep.times.shape[0]):
                lines.append(",".join(_fmt(v) for v in (
                    weak_rep.eps[i], weak_rep.gamma[i], weak_rep.times[j],
                    weak_rep.err_l2[i, j], weak_rep.err_l2[i, j]**2 * lg[i]**2)))
        (out_dir / "sweep.csv").write_text("\n".join(lines) + "\n")
        if not quiet:
            print(f"wrote {out_dir}/sweep.csv sweep.json")
        return EXIT_OK

    sweep = convergence_sweep(
        run.truth, run.eps_grid, times_of_interest=run.sweep_times,
        noise_mode=run.noise_mode, base_seed=run.seed,
        C0=run.C0, C1=run.C1, K=run.K, workers=run.workers)
    if sweep.eps.size == 0:
        print("all noise levels failed the admissibility check", file=sys.stderr)
        for e, reason in sweep.skipped:
            print(f"  eps={e:g}: {reason}", file=sys.stderr)
        return EXIT_ASSUMPTION
    write_sweep_csv(out_dir / "sweep.csv", sweep)
    payload = {
        "eps": [float(e) for e in sweep.eps],
        "gamma": [float(g) for g in sweep.gamma],
        "times": [float(t) for t in sweep.times],
        "slopes": {m: [float(s) for s in v] for m, v in sweep.slopes.items()},
        "predicted_slopes": [float(s) for s in sweep.predicted_slopes],
        "c_hat": sweep.c_hat,
        "spread": sweep.spread,
        "M": sweep.M,
        "skipped": [{"eps": e, "reason": r} for e, r in sweep.skipped],
    }
    _write_json(out_dir / "sweep.json", payload)
    if not quiet:
        print(f"wrote {out_dir}/sweep.csv sweep.json")
    return EXIT_OK


def cmd_verify(run: RunConfig, out_dir: Path, quiet: bool) -> int:
    failures: list[str] = []
    results: dict = {}

    for g in run.verify_gammas:
        cfg = RegConfig(eps=run.noise_eps, gamma=g, C0=run.C0, C1=run.C1, K=run.K)
        if cfg.gamma < math.exp(2.0 / cfg.C1) * (1.0 - 1e-12):
            print(f"gamma = {g:g} violates gamma >= e^(2/C1)", file=sys.stderr)
            return EXIT_ASSUMPTION
        basis = build_basis(run.L, run.verify_n_modes)
        q = verify_q_bound(run.verify_samples, cfg, run.seed, basis=basis)
        p = verify_p_bound(run.verify_samples, cfg, run.seed + 1, basis=basis)
        results[f"gamma={g:.6g}"] = {
            "Q_max_ratio": q.max_ratio, "Q_pass": q.passed,
            "P_max_ratio": p.max_ratio, "P_pass": p.passed,
        }
        if not q.passed:
            failures.append(f"Q-bound failed at gamma={g:.6g} (max ratio {q.max_ratio:.6g})")
        if not p.passed:
            failures.append(f"P-bound failed at gamma={g:.6g} (max ratio {p.max_ratio:.6g})")

    # oracle triangle on band-limited data
    basis = build_basis(run.L, 16)
    coeffs = np.zeros(16)
    coeffs[:6] = 1.0 / np.arange(1, 7) ** 2
    spec = TruthSpec(basis, coeffs, np.zeros(16), run.T, 201)
    truth, td = spec.manufacture()
    cfg = RegConfig(eps=run.noise_eps, gamma=math.exp(4), C0=run.C0, C1=run.C1, K=run.K)
    closed = regularized_backward_solve(td, cfg, truth.times)
    scale = max(np.abs(closed.values).max(), np.abs(closed.dvalues).max())
    try:
        gal = galerkin_step_solve(td, cfg, dt=run.verify_dt)
        closed_g = regularized_backward_solve(td, cfg, gal.times)
        d_gal = max(np.abs(closed_g.values - gal.values).max(),
                    np.abs(closed_g.dvalues - gal.dvalues).max()) / scale
        pic = picard_solve(td, cfg, iterations=run.verify_iterations,
                           times=np.linspace(0.0, run.T, 4001))
        closed_p = regularized_backward_solve(td, cfg, pic.times)
        d_pic = max(np.abs(closed_p.values - pic.values).max(),
                    np.abs(closed_p.dvalues - pic.dvalues).max()) / scale
    except (GalerkinInstabilityError, PicardDivergenceError) as exc:
        failures.append(f"oracle solve failed: {exc}")
        d_gal = d_pic = math.inf
    results["oracle_triangle"] = {"closed_vs_galerkin": d_gal, "closed_vs_picard": d_pic}
    if not (d_gal <= 1e-6 and d_pic <= 1e-6):
        failures.append(
            f"oracle triangle disagreement (galerkin {d_gal:.3g}, picard {d_pic:.3g})")

    # backward energy envelope on random terminal data
    rng = np.random.default_rng(run.seed)
    worst = 0.0
    for _ in range(run.verify_energy_trials):
        td_r = TerminalData(
            SpectralField(basis, rng.standard_normal(16)),
            SpectralField(basis, rng.standard_normal(16)), run.T)
        traj = regularized_backward_solve(td_r, cfg)
        v = v_transform(traj, cfg.rho, "to_v")
        es = energy_series(v, cfg.rho)
        E = np.array([s.E for s in es])
        ts = np.array([s.t for s in es])
        env = E[-1] * cfg.gamma ** (2.0 * cfg.C1 * cfg.rho * (run.T - ts))
        worst = max(worst, float(np.max(E / env)))
    results["energy_envelope_max_ratio"] = worst
    if not (worst <= 1.0 + 1e-6):
        failures.append(f"energy envelope violated (max ratio {worst:.9g})")

    results["failures"] = failures
    _write_json(out_dir / "verify.json", results)
    if failures:
        for f in failures:
            print(f, file=sys.stderr)
        return EXIT_VERIFY
    if not quiet:
        print("all verifications passed")
    return EXIT_OK


def cmd_demo_illposed(run: RunConfig, out_dir: Path, quiet: bool) -> int:
    reports = []
    for p in (1, 2, 3):
        d = illposedness_demo(p, run.T, run.noise_eps, length=run.L)
        reports.append({
            "mode": p, "mu": d.mu, "amplification": d.amplification,
            "predicted": d.predicted, "overflow": d.overflow, "message": d.message,
        })
        if not quiet:
            print(f"mode {p}: {d.message}")
    _write_json(out_dir / "illposed.json", {"demos": reports})
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    parser = argparse.ArgumentParser(
        prog="qrwave",
        description="Backward reconstruction for the strongly damped wave equation",
    )
    parser.add_argument("command",
                        choices=["forward", "invert", "sweep", "verify", "demo-illposed"])
    parser.add_argument("--config", required=True, help="flat key=value config file")
    parser.add_argument("--out", default=".", help="output directory")
    parser.add_argument("--seed", type=int, default=None, help="override noise.seed")
    parser.add_argument("--quiet", action="store_true")
    args = parser.parse_args(argv)

    try:
        run = load_run_config(args.config, seed_override=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG

    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        print(f"cannot create output directory: {exc}", file=sys.stderr)
        return EXIT_IO

    dispatch = {
        "forward": cmd_forward,
        "invert": cmd_invert,
        "sweep": cmd_sweep,
        "verify": cmd_verify,
        "demo-illposed": cmd_demo_illposed,
    }
    try:
        return dispatch[args.command](run, out_dir, args.quiet)
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
