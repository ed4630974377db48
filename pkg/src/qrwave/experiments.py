"""Noise injection, assumption checks, error metrics and the convergence
harness for the backward reconstruction.

The harness manufactures a smooth truth by solving forward, perturbs the
terminal pair at a calibrated noise level, reconstructs backward with the
stabilized solver, and compares the measured errors against the three
theoretical bound shapes

    ||u_eps - u||^2             <= C (eps + gamma^{3 C1 (T-t) - 2} / log gamma)
    ||grad u_eps - grad u||^2   <= C (eps log gamma + gamma^{3 C1 (T-t) - 2})
    ||du_eps - du||^2 + tail    <= C (eps log^2 gamma + gamma^{3 C1 (T-t) - 2} log gamma)

under the admissibility conditions 3 C1 T < 2, gamma >= e^{2/C1} and
gamma^2 eps <= K.  With the schedule gamma = eps^{-1/2} the shapes reduce to
Hoelder rates in eps; the sweep reports per-metric envelope ratios
(error^2 / shape) and fitted log-log slopes against the shape-predicted
exponent min(1, 1 - 3 C1 (T-t) / 2) / 2.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .operators import GEVREY_ALPHA, GEVREY_SIGMA, RegConfig
from .solvers import (
    BackwardOverflowError,
    TerminalData,
    forward_solve,
    naive_backward_solve,
    regularized_backward_solve,
)
from .spectral import (
    EigenBasis,
    SpectralField,
    Trajectory,
    norm_gevrey,
    norm_h1,
    norm_l2,
)

__all__ = [
    "NoiseSpec",
    "AssumptionReport",
    "AssumptionViolationError",
    "ErrorReport",
    "BoundEnvelope",
    "TruthSpec",
    "SweepReport",
    "WeakNoiseReport",
    "IllposedDemo",
    "add_noise",
    "check_assumptions",
    "error_report",
    "bound_envelope",
    "predicted_exponent",
    "fit_loglog_slope",
    "convergence_sweep",
    "weak_noise_experiment",
    "illposedness_demo",
]

# Roundoff slack for the admissibility checks: gamma = eps^(-1/2) should not
# fail gamma^2 eps <= K by a few ulps.
_ASSUMPTION_SLACK = 1e-12

_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


@dataclass(frozen=True)
class NoiseSpec:
    """Calibrated perturbation of the terminal pair.

    ``h1l2`` rescales a standard-normal draw so that
    ||df0||_H1 + ||df1||_L2 = eps exactly; ``l2only`` perturbs f0 alone with
    ||df0||_L2 = eps (the weak measurement model).
    """

    eps: float
    seed: int
    mode: str = "h1l2"

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ValueError(f"noise level must lie in (0, 1), got {self.eps}")
        if self.mode not in ("h1l2", "l2only"):
            raise ValueError(f"unknown noise mode {self.mode!r}")


def add_noise(td: TerminalData, spec: NoiseSpec) -> TerminalData:
    """Seeded, exactly calibrated noise on the terminal data."""
    rng = np.random.default_rng(spec.seed)
    g0 = rng.standard_normal(td.basis.n_modes)
    g1 = rng.standard_normal(td.basis.n_modes)
    if spec.mode == "h1l2":
        gf0 = SpectralField(td.basis, g0)
        gf1 = SpectralField(td.basis, g1)
        scale = spec.eps / (norm_h1(gf0) + norm_l2(gf1))
        return TerminalData(
            SpectralField(td.basis, td.f0.coeffs + scale * g0),
            SpectralField(td.basis, td.f1.coeffs + scale * g1),
            td.T,
        )
    scale = spec.eps / float(np.linalg.norm(g0))
    return TerminalData(
        SpectralField(td.basis, td.f0.coeffs + scale * g0), td.f1, td.T
    )


@dataclass(frozen=True)
class AssumptionReport:
    ok: bool
    violations: tuple[str, ...]


class AssumptionViolationError(ValueError):
    def __init__(self, report: AssumptionReport):
        self.report = report
        super().__init__("admissibility violated: " + "; ".join(report.violations))


def check_assumptions(cfg: RegConfig, T: float) -> AssumptionReport:
    """Admissibility of (cfg, T): 3 C1 T < 2, gamma >= e^{2/C1}, gamma^2 eps <= K."""
    violations = []
    if not (3.0 * cfg.C1 * T < 2.0):
        violations.append(f"3*C1*T = {3.0 * cfg.C1 * T:.6g} must be < 2")
    gamma_min = math.exp(2.0 / cfg.C1)
    if not (cfg.gamma >= gamma_min * (1.0 - _ASSUMPTION_SLACK)):
        violations.append(f"gamma = {cfg.gamma:.6g} must be >= e^(2/C1) = {gamma_min:.6g}")
    if not (cfg.gamma**2 * cfg.eps <= cfg.K * (1.0 + _ASSUMPTION_SLACK)):
        violations.append(
            f"gamma^2*eps = {cfg.gamma**2 * cfg.eps:.6g} must be <= K = {cfg.K:.6g}"
        )
    return AssumptionReport(ok=not violations, violations=tuple(violations))


@dataclass(frozen=True)
class ErrorReport:
    """Reconstruction error metrics on the common time grid.

    ``err_dtgrad_int[i]`` is the tail integral int_{t_i}^{T} of the squared
    gradient error of u_t, so it vanishes at t = T and never increases in t.
    """

    times: np.ndarray
    err_l2: np.ndarray
    err_grad: np.ndarray
    err_dt: np.ndarray
    err_dtgrad_int: np.ndarray


def error_report(reconstructed: Trajectory, truth: Trajectory) -> ErrorReport:
    """Per-time error norms of a reconstruction against the truth."""
    if reconstructed.basis is not truth.basis:
        from .spectral import require_same_basis

        require_same_basis(reconstructed.basis, truth.basis)
    if not np.array_equal(reconstructed.times, truth.times):
        raise ValueError("trajectories must share the same time grid")
    t = truth.times
    if t.shape[0] > 1 and not np.all(np.diff(t) > 0):
        raise ValueError("error_report expects an increasing time grid")
    mu = truth.basis.eigenvalues
    dv = reconstructed.values - truth.values
    dd = reconstructed.dvalues - truth.dvalues
    err_l2 = np.sqrt(np.sum(dv**2, axis=1))
    err_grad = np.sqrt(np.sum(mu * dv**2, axis=1))
    err_dt = np.sqrt(np.sum(dd**2, axis=1))
    g2 = np.sum(mu * dd**2, axis=1)
    tail = np.zeros_like(g2)
    if t.shape[0] > 1:
        seg = 0.5 * (g2[:-1] + g2[1:]) * np.diff(t)
        tail[:-1] = np.cumsum(seg[::-1])[::-1]
    return ErrorReport(t, err_l2, err_grad, err_dt, tail)


@dataclass(frozen=True)
class BoundEnvelope:
    """The three bound shapes (without the unknown constant) per grid time."""

    times: np.ndarray
    shape1: np.ndarray
    shape2: np.ndarray
    shape3: np.ndarray
    M: float


def bound_envelope(report: ErrorReport, cfg: RegConfig, T: float,
                      M: float) -> BoundEnvelope:
    """Evaluate the bound shapes for an admissible configuration.

    M is the squared Gevrey magnitude of the truth; it is carried for
    reporting (the unknown constant absorbs it) and must be finite.
    """
    assn = check_assumptions(cfg, T)
    if not assn.ok:
        raise AssumptionViolationError(assn)
    if not math.isfinite(M):
        raise ValueError("truth Gevrey magnitude M must be finite")
    lg = math.log(cfg.gamma)
    power = cfg.gamma ** (3.0 * cfg.C1 * (T - report.times) - 2.0)
    return BoundEnvelope(
        times=report.times,
        shape1=cfg.eps + power / lg,
        shape2=lg * cfg.eps + power,
        shape3=lg**2 * cfg.eps + lg * power,
        M=M,
    )


def predicted_exponent(t: float, T: float, C1: float) -> float:
    """Hoelder exponent of the error (not squared) under gamma = eps^{-1/2}."""
    return 0.5 * min(1.0, 1.0 - 1.5 * C1 * (T - t))


def fit_loglog_slope(x: np.ndarray, y: np.ndarray) -> float:
    """Least-squares slope of log y against log x."""
    x = np.asarray(x, float)
    y = np.asarray(y, float)
    if x.size < 2:
        raise ValueError("need at least two points to fit a slope")
    if np.any(y <= 0.0) or np.any(x <= 0.0):
        return math.nan
    return float(np.polyfit(np.log(x), np.log(y), 1)[0])


@dataclass(frozen=True)
class TruthSpec:
    """Recipe for a manufactured smooth solution.

    The truth is the forward solution from the given initial pair; its
    terminal slice is what the backward solvers try to invert.
    """

    basis: EigenBasis
    u0_coeffs: np.ndarray
    u1_coeffs: np.ndarray
    T: float
    n_times: int = 201

    @classmethod
    def band_limited(cls, basis: EigenBasis, coeffs: dict[int, float] | np.ndarray,
                     T: float, n_times: int = 201,
                     dcoeffs: dict[int, float] | np.ndarray | None = None) -> "TruthSpec":
        """Truth from explicit per-mode initial coefficients (1-based indices)."""
        def expand(spec):
            if spec is None:
                return np.zeros(basis.n_modes)
            if isinstance(spec, dict):
                out = np.zeros(basis.n_modes)
                for p, c in spec.items():
                    if not (1 <= p <= basis.n_modes):
                        raise ValueError(f"mode index {p} outside 1..{basis.n_modes}")
                    out[p - 1] = c
                return out
            out = np.zeros(basis.n_modes)
            a = np.asarray(spec, float)
            out[: a.size] = a
            return out

        return cls(basis, expand(coeffs), expand(dcoeffs), T, n_times)

    @classmethod
    def gevrey(cls, basis: EigenBasis, decay: float, band: float, T: float,
               n_times: int = 201) -> "TruthSpec":
        """Truth with coefficients exp(-decay mu_p), band-limited to mu_p <= band."""
        mu = basis.eigenvalues
        with np.errstate(under="ignore"):
            c = np.where(mu <= band, np.exp(-decay * mu), 0.0)
        return cls(basis, c, np.zeros(basis.n_modes), T, n_times)

    def manufacture(self) -> tuple[Trajectory, TerminalData]:
        times = np.linspace(0.0, self.T, self.n_times)
        truth = forward_solve(
            SpectralField(self.basis, self.u0_coeffs),
            SpectralField(self.basis, self.u1_coeffs),
            self.T,
            times,
        )
        return truth, TerminalData.from_trajectory(truth)

    def gevrey_magnitude(self, truth: Trajectory) -> float:
        """max_t ||u(t)||_W^2 + int_0^T ||u_t(t)||_W^2 dt in the smoothness class."""
        t = truth.times
        wu = np.array([norm_gevrey(truth.field_at(i), GEVREY_SIGMA, GEVREY_ALPHA) ** 2
                       for i in range(truth.n_times)])
        wdu = np.array([norm_gevrey(truth.dfield_at(i), GEVREY_SIGMA, GEVREY_ALPHA) ** 2
                        for i in range(truth.n_times)])
        return float(np.max(wu) + np.sum(0.5 * (wdu[:-1] + wdu[1:]) * np.diff(t)))


_METRICS = ("l2", "grad", "dt_plus_int")


@dataclass(frozen=True)
class SweepReport:
    """Per-noise-level errors, bound shapes, envelope ratios and fitted rates."""

    eps: np.ndarray
    gamma: np.ndarray
    times: np.ndarray
    err_l2: np.ndarray
    err_grad: np.ndarray
    err_dt_plus_int: np.ndarray
    bound1: np.ndarray
    bound2: np.ndarray
    bound3: np.ndarray
    ratio1: np.ndarray
    ratio2: np.ndarray
    ratio3: np.ndarray
    slopes: dict[str, np.ndarray]
    predicted_slopes: np.ndarray
    c_hat: dict[str, float]
    spread: dict[str, float]
    M: float
    skipped: list[tuple[float, str]] = field(default_factory=list)


def _interest_indices(grid: np.ndarray, times_of_interest) -> np.ndarray:
    idx = []
    for t in times_of_interest:
        hits = np.nonzero(np.isclose(grid, t, rtol=0.0, atol=1e-12))[0]
        if hits.size == 0:
            raise ValueError(f"time of interest {t} is not on the trajectory grid")
        idx.append(int(hits[0]))
    return np.array(idx, dtype=int)


def _sweep_point(td_clean: TerminalData, truth: Trajectory, eps: float, seed: int,
                 noise_mode: str | None, C0: float, C1: float, K: float):
    cfg = RegConfig(eps=eps, gamma=eps**-0.5, C0=C0, C1=C1, K=K)
    assn = check_assumptions(cfg, td_clean.T)
    if not assn.ok:
        return cfg, None
    td = td_clean if noise_mode is None else add_noise(
        td_clean, NoiseSpec(eps=eps, seed=seed, mode=noise_mode))
    rec = regularized_backward_solve(td, cfg, times=truth.times)
    return cfg, error_report(rec, truth)


def convergence_sweep(truth_spec: TruthSpec, eps_grid, schedule: str = "inv_sqrt",
                      times_of_interest=(0.0, 0.25, 0.45), *,
                      noise_mode: str | None = "h1l2", base_seed: int = 0,
                      C0: float = 2.0, C1: float = 1.0, K: float = 1.0,
                      workers: int = 1) -> SweepReport:
    """Reconstruction errors against the bound shapes across a noise sweep.

    Noise levels failing the admissibility check are skipped with a recorded
    diagnostic.  Points are independent; ``workers`` only parallelizes them,
    the report is assembled in descending eps order either way.
    """
    if schedule != "inv_sqrt":
        raise ValueError(f"unknown schedule {schedule!r}; only gamma = eps^(-1/2)")
    eps_grid = np.sort(np.asarray(list(eps_grid), dtype=float))[::-1]
    if eps_grid.size == 0 or np.any(np.diff(eps_grid) >= 0):
        raise ValueError("eps grid must be non-empty with distinct values")

    truth, td_clean = truth_spec.manufacture()
    M = truth_spec.gevrey_magnitude(truth)
    idx = _interest_indices(truth.times, times_of_interest)
    t_sel = truth.times[idx]
    T = td_clean.T

    seeds = [int(s) for s in np.random.SeedSequence(base_seed).generate_state(eps_grid.size)]

    def job(i: int):
        return _sweep_point(td_clean, truth, float(eps_grid[i]), seeds[i],
                            noise_mode, C0, C1, K)

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(job, range(eps_grid.size)))
    else:
        results = [job(i) for i in range(eps_grid.size)]

    kept, skipped = [], []
    for e, (cfg, rep) in zip(eps_grid, results):
        if rep is None:
            skipped.append((float(e), "; ".join(check_assumptions(cfg, T).violations)))
        else:
            kept.append((float(e), cfg, rep))

    n = len(kept)
    nt = idx.size
    eps = np.array([e for e, _, _ in kept])
    gamma = np.array([c.gamma for _, c, _ in kept])
    err = {m: np.zeros((n, nt)) for m in _METRICS}
    bounds = {m: np.zeros((n, nt)) for m in _METRICS}
    for i, (_, cfg, rep) in enumerate(kept):
        env = bound_envelope(rep, cfg, T, M)
        err["l2"][i] = rep.err_l2[idx]
        err["grad"][i] = rep.err_grad[idx]
        err["dt_plus_int"][i] = rep.err_dt[idx] ** 2 + rep.err_dtgrad_int[idx]
        bounds["l2"][i] = env.shape1[idx]
        bounds["grad"][i] = env.shape2[idx]
        bounds["dt_plus_int"][i] = env.shape3[idx]

    # envelope ratios compare squared errors to the shapes
    sq = {"l2": err["l2"] ** 2, "grad": err["grad"] ** 2,
          "dt_plus_int": err["dt_plus_int"]}
    ratios = {m: sq[m] / bounds[m] for m in _METRICS}
    slopes = {}
    for m in _METRICS:
        e_lin = err[m] if m != "dt_plus_int" else np.sqrt(err[m])
        slopes[m] = (np.array([fit_loglog_slope(eps, e_lin[:, j]) for j in range(nt)])
                     if n >= 2 else np.full(nt, math.nan))
    c_hat = {m: float(np.max(ratios[m])) if n else math.nan for m in _METRICS}
    spread = {}
    for m in _METRICS:
        per_eps = np.max(ratios[m], axis=1) if n else np.array([])
        spread[m] = (float(np.max(per_eps) / np.min(per_eps))
                     if n and np.min(per_eps) > 0 else math.nan)
    predicted = np.array([predicted_exponent(float(t), T, C1) for t in t_sel])

    return SweepReport(
        eps=eps, gamma=gamma, times=t_sel,
        err_l2=err["l2"], err_grad=err["grad"], err_dt_plus_int=err["dt_plus_int"],
        bound1=bounds["l2"], bound2=bounds["grad"], bound3=bounds["dt_plus_int"],
        ratio1=ratios["l2"], ratio2=ratios["grad"], ratio3=ratios["dt_plus_int"],
        slopes=slopes, predicted_slopes=predicted, c_hat=c_hat, spread=spread,
        M=M, skipped=skipped,
    )


@dataclass(frozen=True)
class WeakNoiseReport:
    """Logarithmic-rate check under L2-only measurement."""

    eps: np.ndarray
    gamma: np.ndarray
    times: np.ndarray
    err_l2: np.ndarray
    weighted: np.ndarray  # per eps: max_t err_l2^2 * log(gamma)^2
    spread: float
    skipped: list[tuple[float, str]]


def weak_noise_experiment(truth_spec: TruthSpec, eps_grid, *,
                          times_of_interest=(0.0, 0.25, 0.45), base_seed: int = 0,
                          C0: float = 2.0, C1: float = 1.0,
                          K: float = 1.0) -> WeakNoiseReport:
    """Check that err_l2^2 * log(gamma)^2 stays bounded across the sweep."""
    sweep = convergence_sweep(truth_spec, eps_grid,
                              times_of_interest=times_of_interest,
                              noise_mode="l2only", base_seed=base_seed,
                              C0=C0, C1=C1, K=K)
    lg = np.log(sweep.gamma)
    weighted = np.max(sweep.err_l2**2, axis=1) * lg**2
    spread = (float(np.max(weighted) / np.min(weighted))
              if weighted.size and np.min(weighted) > 0 else math.nan)
    return WeakNoiseReport(eps=sweep.eps, gamma=sweep.gamma, times=sweep.times,
                           err_l2=sweep.err_l2, weighted=weighted, spread=spread,
                           skipped=sweep.skipped)


@dataclass(frozen=True)
class IllposedDemo:
    mu: float
    T: float
    amplification: float
    predicted: float
    rel_deviation: float
    overflow: bool
    message: str


def illposedness_demo(p: int, T: float, eps: float,
                      length: float = math.pi) -> IllposedDemo:
    """Backward amplification of a single noisy terminal mode.

    The terminal pair is aligned with the fast branch, a'(T) = -mu a(T), so
    the naive continuation grows by exactly e^{mu T}.  An overflow is itself
    a valid outcome and is reported instead of raised.
    """
    from .spectral import build_basis

    basis = build_basis(length, p)
    mu = float(basis.eigenvalues[-1])
    coeffs = np.zeros(basis.n_modes)
    coeffs[-1] = eps
    dcoeffs = np.zeros(basis.n_modes)
    dcoeffs[-1] = -mu * eps
    td = TerminalData(SpectralField(basis, coeffs), SpectralField(basis, dcoeffs), T)
    predicted = math.exp(mu * T) if mu * T < _LOG_FLOAT_MAX else math.inf
    try:
        traj = naive_backward_solve(td, np.array([0.0, T]))
    except BackwardOverflowError as exc:
        return IllposedDemo(mu, T, math.inf, predicted, math.nan, True,
                            f"exceeds floating range at mu*T = {exc.max_exponent:.6g}")
    amplification = float(abs(traj.values[0, -1]) / abs(traj.values[-1, -1]))
    rel = abs(amplification - predicted) / predicted
    return IllposedDemo(mu, T, amplification, predicted, rel, False,
                        f"amplification {amplification:.6g} vs predicted {predicted:.6g}")
