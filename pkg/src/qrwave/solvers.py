"""Time propagation for the strongly damped wave equation.

In the sine eigenbasis the equation u_tt + u_t - Lap u - Lap u_t = 0
decouples: each coefficient a_p solves a'' + (1 + mu) a' + mu a = 0 with
characteristic roots {-1, -mu}.  Integrated forward that is harmlessly
dissipative; continued backward from terminal data the e^{-mu t} branch
grows like e^{mu (T - t)}, which is the ill-posedness.

The regularized equation replaces -Lap u - Lap u_t by +Lap u + Lap u_t minus
the stabilized operator P acting on u and u_t.  Below the spectral cutoff
P cancels the sign flip and the original ODE survives; at or above the
cutoff the per-mode equation becomes a'' + (1 - mu) a' - mu a = 0 with roots
{-1, +mu}, and the terminal-value solve is backward stable: both branches,
e^{(T - t)} and e^{mu (t - T)}, stay bounded by e^{T} for t <= T.

Closed-form per-mode exponentials are the reference solver.  Two
independent oracles cross-check it through the exponentially weighted
substitution v = e^{rho (t - T)} u: a classical 4th-order one-step method on
the first-order v-system, and a Picard iteration on its backward Volterra
integral form.  ``energy_series`` evaluates the weighted energy whose
backward growth is capped by the Groenwall envelope gamma^{2 C1 rho (T-t)}.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .operators import RegConfig
from .spectral import (
    EigenBasis,
    SpectralField,
    Trajectory,
    require_same_basis,
)

__all__ = [
    "REPEATED_ROOT_TOL",
    "ModeODE",
    "TerminalData",
    "EnergySample",
    "BackwardOverflowError",
    "GalerkinInstabilityError",
    "PicardDivergenceError",
    "mode_ode",
    "classify_modes",
    "default_time_grid",
    "forward_solve",
    "naive_backward_solve",
    "regularized_backward_solve",
    "v_transform",
    "galerkin_step_solve",
    "picard_solve",
    "energy_series",
]

# Below this distance from mu = 1 the distinct-root formulas lose precision
# and the (c1 + c2 t) e^{-t} branch takes over.
REPEATED_ROOT_TOL = 1e-9

_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


class BackwardOverflowError(OverflowError):
    """A backward continuation exceeded the floating range."""

    def __init__(self, modes: np.ndarray, max_exponent: float):
        self.modes = np.asarray(modes)
        self.max_exponent = float(max_exponent)
        super().__init__(
            f"backward solve overflows on mode(s) {self.modes.tolist()} "
            f"(mu * (T - t) up to {self.max_exponent:.6g})"
        )


class GalerkinInstabilityError(RuntimeError):
    """Stepper energy left the Groenwall envelope; the step size is too large."""


class PicardDivergenceError(RuntimeError):
    """Successive Picard iterates kept growing past the contraction regime."""


@dataclass(frozen=True)
class ModeODE:
    """Characteristic data of one per-mode second-order ODE."""

    mu: float
    kind: str
    roots: tuple[float, float]


def mode_ode(mu: float, kind: str) -> ModeODE:
    """Roots of the per-mode equation for a given propagation kind."""
    if mu <= 0:
        raise ValueError(f"mode eigenvalue must be positive, got {mu}")
    if kind in ("forward-original", "naive-backward", "regularized-low"):
        return ModeODE(mu, kind, (-1.0, -mu))
    if kind == "regularized-high":
        return ModeODE(mu, kind, (-1.0, mu))
    raise ValueError(f"unknown mode kind {kind!r}")


def classify_modes(basis: EigenBasis, cfg: RegConfig) -> list[ModeODE]:
    """Per-mode ODE kinds of the regularized backward solve."""
    return [
        mode_ode(mu, "regularized-high" if mu >= cfg.cutoff else "regularized-low")
        for mu in basis.eigenvalues
    ]


@dataclass(frozen=True)
class TerminalData:
    """Measured pair (u(T), u_t(T)) with the terminal time."""

    f0: SpectralField
    f1: SpectralField
    T: float

    def __post_init__(self):
        require_same_basis(self.f0.basis, self.f1.basis)
        if not (self.T > 0):
            raise ValueError(f"terminal time must be positive, got {self.T}")

    @property
    def basis(self) -> EigenBasis:
        return self.f0.basis

    @classmethod
    def from_trajectory(cls, traj: Trajectory) -> "TerminalData":
        i = int(np.argmax(traj.times))
        return cls(traj.field_at(i), traj.dfield_at(i), float(traj.times[i]))

    def truncated(self, n_modes: int) -> "TerminalData":
        return TerminalData(self.f0.truncated(n_modes), self.f1.truncated(n_modes), self.T)


@dataclass(frozen=True)
class EnergySample:
    """Weighted energy ||v_t||^2 / (rho - 1) + rho ||v||^2 + ||grad v||^2 at one time."""

    t: float
    E: float


def default_time_grid(T: float, n_points: int = 201) -> np.ndarray:
    """Uniform increasing grid on [0, T]."""
    if not (T > 0 and n_points >= 2):
        raise ValueError("need T > 0 and at least two grid points")
    return np.linspace(0.0, T, n_points)


def _original_ode_propagate(f0: np.ndarray, f1: np.ndarray, mu: np.ndarray,
                            s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Propagate a'' + (1 + mu) a' + mu a = 0 from data at s = 0.

    ``s = t - t_data`` may have either sign; s < 0 is backward continuation
    and grows like e^{mu |s|}.  Returns (a, a') with shape (len(s), len(mu)).
    """
    s = s[:, None]
    repeated = np.abs(mu - 1.0) < REPEATED_ROOT_TOL
    distinct = ~repeated

    vals = np.empty((s.shape[0], mu.shape[0]))
    dvals = np.empty_like(vals)
    es = np.exp(-s)

    if np.any(distinct):
        mud = mu[distinct]
        d2 = (f0[distinct] + f1[distinct]) / (1.0 - mud)
        d1 = f0[distinct] - d2
        with np.errstate(over="ignore"):
            emus = np.exp(-mud * s)
            vals[:, distinct] = d1 * es + d2 * emus
            dvals[:, distinct] = -d1 * es - mud * d2 * emus

    if np.any(repeated):
        d1 = f0[repeated]
        d2 = f0[repeated] + f1[repeated]
        vals[:, repeated] = (d1 + d2 * s) * es
        dvals[:, repeated] = (d2 - d1 - d2 * s) * es

    return vals, dvals


def _regularized_high_propagate(f0: np.ndarray, f1: np.ndarray, mu: np.ndarray,
                                s: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Propagate a'' + (1 - mu) a' - mu a = 0 from terminal data at s = 0.

    For s <= 0 the branch e^{mu s} is evaluated as written (never as a
    reciprocal of e^{mu |s|}), so nothing overflows.
    """
    s = s[:, None]
    d2 = (f0 + f1) / (1.0 + mu)
    d1 = f0 - d2
    es = np.exp(-s)
    emus = np.exp(mu * s)
    vals = d1 * es + d2 * emus
    dvals = -d1 * es + mu * d2 * emus
    return vals, dvals


def _check_grid(T: float, times: np.ndarray | None) -> np.ndarray:
    if times is None:
        return default_time_grid(T)
    t = np.asarray(times, dtype=float)
    if t.ndim != 1 or t.size < 1:
        raise ValueError("time grid must be a non-empty 1-D array")
    if np.any(t < 0.0) or np.any(t > T):
        raise ValueError(f"time grid must lie in [0, {T}]")
    return t


def forward_solve(u0: SpectralField, u1: SpectralField, T: float,
                  times: np.ndarray | None = None) -> Trajectory:
    """Integrate the original equation forward from (u(0), u_t(0)) = (u0, u1)."""
    require_same_basis(u0.basis, u1.basis)
    if not (T > 0):
        raise ValueError(f"final time must be positive, got {T}")
    t = _check_grid(T, times)
    mu = u0.basis.eigenvalues
    vals, dvals = _original_ode_propagate(u0.coeffs, u1.coeffs, mu, t)
    return Trajectory(u0.basis, t, vals, dvals)


def naive_backward_solve(td: TerminalData, times: np.ndarray | None = None) -> Trajectory:
    """Exact backward continuation of the original equation (ill-posed).

    Per-mode growth reaches e^{mu (T - t)}; modes whose continuation leaves
    the floating range raise :class:`BackwardOverflowError` naming them.
    """
    t = _check_grid(td.T, times)
    mu = td.basis.eigenvalues
    vals, dvals = _original_ode_propagate(td.f0.coeffs, td.f1.coeffs, mu, t - td.T)
    bad = ~(np.all(np.isfinite(vals), axis=0) & np.all(np.isfinite(dvals), axis=0))
    if np.any(bad):
        tau_max = td.T - float(np.min(t))
        raise BackwardOverflowError(np.nonzero(bad)[0] + 1, float(np.max(mu[bad])) * tau_max)
    return Trajectory(td.basis, t, vals, dvals)


def regularized_backward_solve(td: TerminalData, cfg: RegConfig,
                               times: np.ndarray | None = None) -> Trajectory:
    """Backward solve of the stabilized equation from noisy terminal data.

    Modes below the cutoff keep the original dynamics (the stabilization is
    transparent there); modes at or above it follow the sign-flipped
    equation whose backward continuation is stable.
    """
    t = _check_grid(td.T, times)
    mu = td.basis.eigenvalues
    s = t - td.T
    high = mu >= cfg.cutoff

    vals = np.empty((t.shape[0], mu.shape[0]))
    dvals = np.empty_like(vals)
    if np.any(~high):
        v, dv = _original_ode_propagate(td.f0.coeffs[~high], td.f1.coeffs[~high],
                                        mu[~high], s)
        vals[:, ~high], dvals[:, ~high] = v, dv
    if np.any(high):
        v, dv = _regularized_high_propagate(td.f0.coeffs[high], td.f1.coeffs[high],
                                            mu[high], s)
        vals[:, high], dvals[:, high] = v, dv

    bad = ~(np.all(np.isfinite(vals), axis=0) & np.all(np.isfinite(dvals), axis=0))
    if np.any(bad):
        tau_max = td.T - float(np.min(t))
        raise BackwardOverflowError(np.nonzero(bad)[0] + 1, float(np.max(mu[bad])) * tau_max)
    return Trajectory(td.basis, t, vals, dvals)


def v_transform(traj: Trajectory, rho: float, direction: str) -> Trajectory:
    """Exponentially weighted substitution v = e^{rho (t - T)} u.

    ``to_v`` maps (u, u_t) to (v, v_t) with v_t = e^{rho (t - T)} u_t + rho v;
    ``from_v`` is its exact inverse.  T is the trajectory's terminal time.
    """
    T = traj.terminal_time()
    s = traj.times - T
    if direction == "to_v":
        w = np.exp(rho * s)[:, None]
        vals = w * traj.values
        dvals = w * traj.dvalues + rho * vals
    elif direction == "from_v":
        winv = np.exp(-rho * s)[:, None]
        vals = winv * traj.values
        dvals = winv * (traj.dvalues - rho * traj.values)
    else:
        raise ValueError(f"direction must be 'to_v' or 'from_v', got {direction!r}")
    return Trajectory(traj.basis, traj.times, vals, dvals)


def _v_system_coefficients(mu: np.ndarray, cfg: RegConfig,
                           rho: float) -> tuple[np.ndarray, np.ndarray]:
    """Damping and stiffness of the per-mode v-equation y'' + B y' + C y = 0."""
    p_sym = np.where(mu < cfg.cutoff, -2.0 * mu, 0.0)
    B = 1.0 - 2.0 * rho - mu - p_sym
    C = rho**2 + (mu - 1.0) * rho - mu - (1.0 - rho) * p_sym
    return B, C


def _energy(y: np.ndarray, z: np.ndarray, mu: np.ndarray, rho: float) -> float:
    return float(np.sum(z**2) / (rho - 1.0) + rho * np.sum(y**2) + np.sum(mu * y**2))


def _resolve_rho(cfg: RegConfig, rho: float | None) -> float:
    r = cfg.rho if rho is None else float(rho)
    if not (r > 1.0):
        raise ValueError(f"the weighted system needs rho > 1, got {r}")
    return r


def galerkin_step_solve(td: TerminalData, cfg: RegConfig, rho: float | None = None,
                        dt: float = 1e-4) -> Trajectory:
    """Backward 4th-order Runge-Kutta integration of the v-system oracle.

    Terminal state (v, v_t)(T) = (f0, rho f0 + f1); the result is mapped back
    to u-variables.  The step must satisfy dt <= 0.5 / (1 + max mu); an
    energy monitor aborts if the weighted energy exceeds ten times its
    backward Groenwall envelope, which indicates an unstable step size.
    """
    rho = _resolve_rho(cfg, rho)
    mu = td.basis.eigenvalues
    mu_max = float(mu[-1])
    if not (0.0 < dt <= 0.5 / (1.0 + mu_max)):
        raise ValueError(
            f"dt = {dt:.3g} too large for the stiffest retained mode; "
            f"need dt <= {0.5 / (1.0 + mu_max):.3g}"
        )
    B, C = _v_system_coefficients(mu, cfg, rho)

    n_steps = int(math.ceil(td.T / dt - 1e-12))
    h = -td.T / n_steps
    y = td.f0.coeffs.copy()
    z = rho * td.f0.coeffs + td.f1.coeffs

    E_T = _energy(y, z, mu, rho)
    log_gamma = math.log(cfg.gamma)
    envelope_rate = 2.0 * cfg.C1 * rho * log_gamma
    log_E_cap = (math.log(E_T) if E_T > 0 else -math.inf) + math.log(10.0)

    ys = np.empty((n_steps + 1, mu.shape[0]))
    zs = np.empty_like(ys)
    ys[0], zs[0] = y, z

    def rhs(y, z):
        return z, -B * z - C * y

    for k in range(n_steps):
        k1y, k1z = rhs(y, z)
        k2y, k2z = rhs(y + 0.5 * h * k1y, z + 0.5 * h * k1z)
        k3y, k3z = rhs(y + 0.5 * h * k2y, z + 0.5 * h * k2z)
        k4y, k4z = rhs(y + h * k3y, z + h * k3z)
        y = y + (h / 6.0) * (k1y + 2.0 * k2y + 2.0 * k3y + k4y)
        z = z + (h / 6.0) * (k1z + 2.0 * k2z + 2.0 * k3z + k4z)
        ys[k + 1], zs[k + 1] = y, z
        if E_T > 0:
            E = _energy(y, z, mu, rho)
            tau = (k + 1) * (-h)
            if not math.isfinite(E) or math.log(max(E, 1e-300)) > log_E_cap + envelope_rate * tau:
                raise GalerkinInstabilityError(
                    f"energy left the backward envelope at t = {td.T - tau:.6g} "
                    f"(step {dt:.3g} too large for rho = {rho:.3g})"
                )

    times = td.T + h * np.arange(n_steps + 1)
    times[-1] = 0.0
    v_traj = Trajectory(td.basis, times[::-1], ys[::-1], zs[::-1])
    return v_transform(v_traj, rho, "from_v")


def picard_solve(td: TerminalData, cfg: RegConfig, rho: float | None = None,
                 n_modes: int | None = None, iterations: int = 200,
                 times: np.ndarray | None = None) -> Trajectory:
    """Fixed-point iteration on the backward integral form of the v-system.

    The state w = (v, v_t) per mode satisfies w(t) = w(T) - int_t^T M w ds;
    the map is iterated ``iterations`` times from the constant guess
    w == w(T), with composite-trapezoid quadrature on the grid.  Iterate
    differences transiently grow like (lam tau)^m / m! before the factorial
    wins, so divergence (a too-coarse grid makes the discrete map expansive)
    is only flagged after that burn-in: three consecutive growths abort.
    """
    rho = _resolve_rho(cfg, rho)
    if iterations < 1:
        raise ValueError("need at least one iteration")
    if n_modes is not None:
        td = td.truncated(n_modes)
    mu = td.basis.eigenvalues
    t = _check_grid(td.T, times) if times is not None else default_time_grid(td.T, 2001)
    if t.shape[0] < 2 or np.any(np.diff(t) <= 0):
        raise ValueError("the integral equation needs an increasing grid of >= 2 points")
    if t[-1] != td.T:
        raise ValueError(
            f"the integral equation is anchored at the terminal time: the grid "
            f"must end at T = {td.T}, got {t[-1]}")

    B, C = _v_system_coefficients(mu, cfg, rho)
    wT_y = td.f0.coeffs
    wT_z = rho * td.f0.coeffs + td.f1.coeffs

    nt = t.shape[0]
    y = np.tile(wT_y, (nt, 1))
    z = np.tile(wT_z, (nt, 1))

    seg_w = 0.5 * np.diff(t)[:, None]
    burn_in = int(math.ceil((rho + float(mu[-1])) * td.T)) + 5
    prev_diff = math.inf
    growth_streak = 0

    for m in range(iterations):
        gy = z
        gz = -C * y - B * z
        # right cumulative trapezoid: int_{t_i}^{T} g ds
        iy = np.zeros_like(y)
        iz = np.zeros_like(z)
        iy[:-1] = np.cumsum(((gy[:-1] + gy[1:]) * seg_w)[::-1], axis=0)[::-1]
        iz[:-1] = np.cumsum(((gz[:-1] + gz[1:]) * seg_w)[::-1], axis=0)[::-1]
        y_new = wT_y - iy
        z_new = wT_z - iz
        diff = max(float(np.max(np.abs(y_new - y))), float(np.max(np.abs(z_new - z))))
        if not math.isfinite(diff):
            raise PicardDivergenceError(
                f"iterates became non-finite at iteration {m + 1}; "
                "the grid is too coarse or T too large for the contraction"
            )
        if m >= burn_in:
            growth_streak = growth_streak + 1 if diff > prev_diff else 0
            if growth_streak >= 3:
                raise PicardDivergenceError(
                    f"iterate differences grew 3 times in a row after burn-in "
                    f"(iteration {m + 1}); refine the grid or shorten T"
                )
        prev_diff = diff
        y, z = y_new, z_new

    v_traj = Trajectory(td.basis, t, y, z)
    return v_transform(v_traj, rho, "from_v")


def energy_series(traj_v: Trajectory, rho: float) -> list[EnergySample]:
    """Weighted energy of a v-variable trajectory at every grid time."""
    if not (rho > 1.0):
        raise ValueError(f"the energy functional needs rho > 1, got {rho}")
    mu = traj_v.basis.eigenvalues
    E = (np.sum(traj_v.dvalues**2, axis=1) / (rho - 1.0)
         + rho * np.sum(traj_v.values**2, axis=1)
         + np.sum(mu * traj_v.values**2, axis=1))
    return [EnergySample(float(t), float(e)) for t, e in zip(traj_v.times, E)]
