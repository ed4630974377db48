"""Spectral cutoff operators for the quasi-reversibility scheme.

The perturbing operator Q acts as multiplication by 2 mu_p on modes at or
above the cutoff (1/2) log(gamma) and vanishes below it; the stabilized
operator P = 2*Laplacian + Q therefore acts as -2 mu_p strictly below the
cutoff and vanishes above.  P is what replaces the unstable Laplacian terms
in the backward solve: it is bounded on L2 by C1 log(gamma), while Q is
small on smooth (Gevrey-class) functions, of order C0 / gamma.

``verify_q_bound`` / ``verify_p_bound`` check those two conditional
estimates on seeded random ensembles.  For Q the sharp weight class is the
Gevrey norm with sigma = 2, alpha = 2: mode-wise,

    (2 mu)^2 <= (C0 / gamma)^2 * mu^2 exp(4 mu)   for mu >= (1/2) log(gamma)

holds with C0 = 2 and equality exactly at the cutoff, so the verifier's
ratio can touch 1 but never exceed it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .spectral import EigenBasis, SpectralField, norm_gevrey, norm_l2

__all__ = [
    "RegConfig",
    "apply_Q",
    "apply_P",
    "BoundReport",
    "verify_q_bound",
    "verify_p_bound",
    "GEVREY_SIGMA",
    "GEVREY_ALPHA",
    "SAMPLE_DECAY_MARGIN",
]

# Weight class for the perturbing-operator estimate and the matching
# coefficient decay margin of the random test ensemble.
GEVREY_SIGMA = 2.0
GEVREY_ALPHA = 2.0
SAMPLE_DECAY_MARGIN = 0.1


@dataclass(frozen=True)
class RegConfig:
    """Regularization state: noise level, auxiliary function and constants.

    ``cutoff`` and ``rho`` are derived, never passed: cutoff = (1/2) log(gamma)
    splits the spectrum between P and Q, and rho = C1 log(gamma) is the
    exponential weight used by the well-posedness oracles.
    """

    eps: float
    gamma: float
    C0: float = 2.0
    C1: float = 1.0
    K: float = 1.0

    def __post_init__(self):
        if not (0.0 < self.eps < 1.0):
            raise ValueError(f"eps must lie in (0, 1), got {self.eps}")
        if not (self.gamma >= 1.0):
            raise ValueError(f"gamma must be >= 1, got {self.gamma}")
        if not (self.C0 > 0 and self.C1 > 0 and self.K > 0):
            raise ValueError("C0, C1, K must be positive")

    @property
    def cutoff(self) -> float:
        return 0.5 * math.log(self.gamma)

    @property
    def rho(self) -> float:
        return self.C1 * math.log(self.gamma)

    @classmethod
    def from_schedule(cls, eps: float, C0: float = 2.0, C1: float = 1.0,
                      K: float = 1.0) -> "RegConfig":
        """gamma(eps) = eps^(-1/2), the Hoelder-rate schedule."""
        return cls(eps=eps, gamma=eps ** -0.5, C0=C0, C1=C1, K=K)


def _high_mask(basis: EigenBasis, cfg: RegConfig) -> np.ndarray:
    # Tie goes to Q: the mode at mu == cutoff is truncated, P uses strict <.
    return basis.eigenvalues >= cfg.cutoff


def apply_Q(h: SpectralField, cfg: RegConfig) -> SpectralField:
    """Perturbing operator: coefficient 2 mu_p c_p on modes with mu_p >= cutoff."""
    high = _high_mask(h.basis, cfg)
    return SpectralField(h.basis, np.where(high, 2.0 * h.basis.eigenvalues * h.coeffs, 0.0))


def apply_P(h: SpectralField, cfg: RegConfig) -> SpectralField:
    """Stabilized operator: coefficient -2 mu_p c_p on modes with mu_p < cutoff."""
    high = _high_mask(h.basis, cfg)
    return SpectralField(h.basis, np.where(high, 0.0, -2.0 * h.basis.eigenvalues * h.coeffs))


@dataclass(frozen=True)
class BoundReport:
    """Outcome of a conditional-estimate verification run."""

    max_ratio: float
    passed: bool
    samples: int
    rejected: int = 0


def _default_basis(n_modes: int) -> EigenBasis:
    from .spectral import build_basis

    return build_basis(math.pi, n_modes)


def _gevrey_sample(rng: np.random.Generator, basis: EigenBasis,
                   decay: float) -> tuple[SpectralField, int]:
    """Random field with coefficients exp(-decay * mu_p) * N(0,1).

    If the Gevrey norm of a draw is not finite the sample is rejected and
    redrawn with doubled decay; the rejection count is reported.
    """
    rejected = 0
    while True:
        g = rng.standard_normal(basis.n_modes)
        with np.errstate(under="ignore"):
            coeffs = np.exp(-decay * basis.eigenvalues) * g
        f = SpectralField(basis, coeffs)
        try:
            w = norm_gevrey(f, GEVREY_SIGMA, GEVREY_ALPHA)
        except OverflowError:
            w = math.inf
        if math.isfinite(w):
            return f, rejected
        rejected += 1
        decay *= 2.0


def verify_q_bound(samples: int, cfg: RegConfig, seed: int,
                   basis: EigenBasis | None = None,
                   sample_decay: float | None = None) -> BoundReport:
    """Check ||Q u|| <= C0 ||u||_W / gamma on seeded random smooth fields.

    W is the Gevrey class with weight mu^2 exp(4 mu); the default ensemble
    decays just inside it, coefficients exp(-(2 + 0.1) mu_p) * N(0,1).
    Sampling is keyed per-index so parallel evaluation cannot reorder draws.
    """
    if not (cfg.gamma > 1.0):
        raise ValueError("Q-bound verification needs gamma > 1")
    if basis is None:
        basis = _default_basis(64)
    if sample_decay is None:
        sample_decay = GEVREY_SIGMA + SAMPLE_DECAY_MARGIN
    seeds = np.random.SeedSequence(seed).spawn(samples)
    max_ratio = 0.0
    rejected = 0
    for s in seeds:
        f, rej = _gevrey_sample(np.random.default_rng(s), basis, sample_decay)
        rejected += rej
        w = norm_gevrey(f, GEVREY_SIGMA, GEVREY_ALPHA)
        if w == 0.0:
            continue
        ratio = norm_l2(apply_Q(f, cfg)) * cfg.gamma / (cfg.C0 * w)
        max_ratio = max(max_ratio, ratio)
    return BoundReport(max_ratio=max_ratio, passed=max_ratio <= 1.0 + 1e-12,
                       samples=samples, rejected=rejected)


def verify_p_bound(samples: int, cfg: RegConfig, seed: int,
                   basis: EigenBasis | None = None) -> BoundReport:
    """Check ||P u|| <= C1 log(gamma) ||u|| on seeded random L2 fields."""
    if not (cfg.gamma > math.e):
        raise ValueError("P-bound verification needs gamma > e so log(gamma) > 1")
    if basis is None:
        basis = _default_basis(64)
    log_gamma = math.log(cfg.gamma)
    seeds = np.random.SeedSequence(seed).spawn(samples)
    max_ratio = 0.0
    for s in seeds:
        f = SpectralField(basis, np.random.default_rng(s).standard_normal(basis.n_modes))
        n = norm_l2(f)
        if n == 0.0:
            continue
        ratio = norm_l2(apply_P(f, cfg)) / (cfg.C1 * log_gamma * n)
        max_ratio = max(max_ratio, ratio)
    return BoundReport(max_ratio=max_ratio, passed=max_ratio <= 1.0 + 1e-12,
                       samples=samples)
