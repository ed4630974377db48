"""Sine eigenbasis of the Dirichlet Laplacian on an interval, spectral
fields, and the norms used throughout the solver.

Everything lives in coefficient space: a function h on (0, L) is carried as
the vector of inner products with the orthonormal modes
phi_p(x) = sqrt(2/L) sin(p pi x / L), whose Laplacian eigenvalues are
mu_p = (p pi / L)^2.  All norms reduce to weighted Euclidean sums of the
coefficients (Parseval).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "EigenBasis",
    "SpectralField",
    "Trajectory",
    "build_basis",
    "inner_l2",
    "norm_l2",
    "norm_h1",
    "norm_grad",
    "norm_gevrey",
    "synthesize",
]

_LOG_FLOAT_MAX = math.log(np.finfo(float).max)


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class EigenBasis:
    """Dirichlet Laplacian eigenpairs on the interval (0, L).

    ``eigenvalues[p-1] = (p pi / L)^2`` is strictly increasing.  Only the
    eigenvalues are stored; the mode shapes enter through :func:`synthesize`.
    """

    length: float
    n_modes: int
    eigenvalues: np.ndarray = field(repr=False)

    def __post_init__(self):
        if not (self.length > 0):
            raise ValueError(f"domain length must be positive, got {self.length}")
        if self.n_modes < 1:
            raise ValueError(f"need at least one mode, got {self.n_modes}")
        ev = _readonly(self.eigenvalues)
        object.__setattr__(self, "eigenvalues", ev)
        if ev.shape != (self.n_modes,):
            raise ValueError("eigenvalue count does not match n_modes")
        if not (np.all(np.diff(ev) > 0) and ev[0] > 0):
            raise ValueError("eigenvalues must be positive and strictly increasing")

    def truncated(self, n_modes: int) -> "EigenBasis":
        """First ``n_modes`` modes of this basis."""
        if not (1 <= n_modes <= self.n_modes):
            raise ValueError(f"cannot truncate {self.n_modes}-mode basis to {n_modes}")
        return EigenBasis(self.length, n_modes, self.eigenvalues[:n_modes])


def build_basis(length: float, n_modes: int) -> EigenBasis:
    """Construct the sine eigenbasis on (0, length) with ``n_modes`` modes."""
    if not (length > 0):
        raise ValueError(f"domain length must be positive, got {length}")
    if n_modes < 1:
        raise ValueError(f"need at least one mode, got {n_modes}")
    p = np.arange(1, n_modes + 1, dtype=float)
    return EigenBasis(float(length), int(n_modes), (p * math.pi / length) ** 2)


@dataclass(frozen=True)
class SpectralField:
    """A function represented by its coefficients in an :class:`EigenBasis`."""

    basis: EigenBasis
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        c = _readonly(self.coeffs)
        object.__setattr__(self, "coeffs", c)
        if c.shape != (self.basis.n_modes,):
            raise ValueError(
                f"expected {self.basis.n_modes} coefficients, got shape {c.shape}"
            )
        if not np.all(np.isfinite(c)):
            raise ValueError("spectral coefficients must be finite")

    @classmethod
    def zero(cls, basis: EigenBasis) -> "SpectralField":
        return cls(basis, np.zeros(basis.n_modes))

    def __add__(self, other: "SpectralField") -> "SpectralField":
        require_same_basis(self.basis, other.basis)
        return SpectralField(self.basis, self.coeffs + other.coeffs)

    def __sub__(self, other: "SpectralField") -> "SpectralField":
        require_same_basis(self.basis, other.basis)
        return SpectralField(self.basis, self.coeffs - other.coeffs)

    def __mul__(self, scalar: float) -> "SpectralField":
        return SpectralField(self.basis, self.coeffs * float(scalar))

    __rmul__ = __mul__

    def truncated(self, n_modes: int) -> "SpectralField":
        return SpectralField(self.basis.truncated(n_modes), self.coeffs[:n_modes])


def require_same_basis(a: EigenBasis, b: EigenBasis) -> None:
    """Raise unless the two bases describe the same spectral coordinates."""
    if a is b:
        return
    if a.n_modes != b.n_modes or a.length != b.length:
        raise ValueError(
            f"basis mismatch: (L={a.length}, n={a.n_modes}) vs (L={b.length}, n={b.n_modes})"
        )
    if not np.array_equal(a.eigenvalues, b.eigenvalues):
        raise ValueError("basis mismatch: eigenvalues differ")


@dataclass(frozen=True)
class Trajectory:
    """Time-gridded pairs (u(t), u_t(t)) in a shared eigenbasis.

    ``values[i]`` and ``dvalues[i]`` hold the coefficients of u and u_t at
    ``times[i]``.  Entries must be finite; a backward solve that overflows
    raises instead of producing a trajectory.
    """

    basis: EigenBasis
    times: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)
    dvalues: np.ndarray = field(repr=False)

    def __post_init__(self):
        t = _readonly(self.times)
        v = _readonly(self.values)
        dv = _readonly(self.dvalues)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "dvalues", dv)
        n = t.shape[0]
        if t.ndim != 1 or n < 1:
            raise ValueError("times must be a non-empty 1-D grid")
        d = np.diff(t)
        if n > 1 and not (np.all(d > 0) or np.all(d < 0)):
            raise ValueError("times must be strictly monotone")
        if v.shape != (n, self.basis.n_modes) or dv.shape != v.shape:
            raise ValueError("values/dvalues shapes must be (n_times, n_modes)")
        if not (np.all(np.isfinite(v)) and np.all(np.isfinite(dv))):
            raise ValueError("trajectory entries must be finite (overflow upstream?)")

    @property
    def n_times(self) -> int:
        return self.times.shape[0]

    def field_at(self, i: int) -> SpectralField:
        return SpectralField(self.basis, self.values[i])

    def dfield_at(self, i: int) -> SpectralField:
        return SpectralField(self.basis, self.dvalues[i])

    def terminal_time(self) -> float:
        return float(np.max(self.times))


def inner_l2(f: SpectralField, g: SpectralField) -> float:
    """L2 inner product from coefficients (Parseval)."""
    require_same_basis(f.basis, g.basis)
    return float(np.dot(f.coeffs, g.coeffs))


def norm_l2(f: SpectralField) -> float:
    """L2 norm: sqrt(sum c_p^2)."""
    return float(np.linalg.norm(f.coeffs))


def norm_h1(f: SpectralField) -> float:
    """Full H1 norm: sqrt(sum (1 + mu_p) c_p^2)."""
    return float(math.sqrt(np.sum((1.0 + f.basis.eigenvalues) * f.coeffs**2)))


def norm_grad(f: SpectralField) -> float:
    """H1 seminorm (gradient norm): sqrt(sum mu_p c_p^2)."""
    return float(math.sqrt(np.sum(f.basis.eigenvalues * f.coeffs**2)))


def norm_gevrey(f: SpectralField, sigma: float, alpha: float) -> float:
    """Gevrey norm sqrt(sum mu_p^alpha exp(2 sigma mu_p) c_p^2).

    Each term is accumulated in log space: exp(2 sigma mu_p) overflows a
    double for mu_p around 350, while the product with a fast-decaying
    coefficient is often tame.  Raises OverflowError only when the summed
    result itself exceeds the floating range; the caller must band-limit.
    """
    if not (sigma > 0):
        raise ValueError(f"sigma must be positive, got {sigma}")
    if alpha < 0:
        raise ValueError(f"alpha must be nonnegative, got {alpha}")
    mu = f.basis.eigenvalues
    c = f.coeffs
    mask = c != 0.0
    if not np.any(mask):
        return 0.0
    mu = mu[mask]
    log_terms = alpha * np.log(mu) + 2.0 * sigma * mu + 2.0 * np.log(np.abs(c[mask]))
    peak = float(np.max(log_terms))
    log_sq = peak + math.log(np.sum(np.exp(log_terms - peak)))
    if log_sq > _LOG_FLOAT_MAX:
        raise OverflowError(
            f"Gevrey norm exceeds the floating range (log sum {log_sq:.3g}); "
            "band-limit the field"
        )
    return math.exp(0.5 * log_sq)


def synthesize(f: SpectralField, x_grid: np.ndarray) -> np.ndarray:
    """Evaluate the field at physical points: sum_p c_p sqrt(2/L) sin(p pi x / L).

    The Dirichlet endpoints x = 0 and x = L return exactly zero.
    """
    x = np.asarray(x_grid, dtype=float)
    L = f.basis.length
    if np.any(x < 0.0) or np.any(x > L):
        raise ValueError(f"grid points must lie in [0, {L}]")
    p = np.arange(1, f.basis.n_modes + 1, dtype=float)
    out = math.sqrt(2.0 / L) * np.sin(np.outer(x, p) * (math.pi / L)) @ f.coeffs
    out[(x == 0.0) | (x == L)] = 0.0
    return out
