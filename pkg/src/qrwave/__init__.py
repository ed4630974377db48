"""Spectral quasi-reversibility solver for the backward-in-time strongly
damped wave equation, with its verification harness."""

from .spectral import (
    EigenBasis,
    SpectralField,
    Trajectory,
    build_basis,
    inner_l2,
    norm_l2,
    norm_h1,
    norm_grad,
    norm_gevrey,
    synthesize,
)
from .operators import (
    RegConfig,
    BoundReport,
    apply_P,
    apply_Q,
    verify_p_bound,
    verify_q_bound,
)
from .solvers import (
    BackwardOverflowError,
    EnergySample,
    GalerkinInstabilityError,
    ModeODE,
    PicardDivergenceError,
    TerminalData,
    classify_modes,
    default_time_grid,
    energy_series,
    forward_solve,
    galerkin_step_solve,
    mode_ode,
    naive_backward_solve,
    picard_solve,
    regularized_backward_solve,
    v_transform,
)
from .experiments import (
    AssumptionReport,
    AssumptionViolationError,
    BoundEnvelope,
    ErrorReport,
    IllposedDemo,
    NoiseSpec,
    SweepReport,
    TruthSpec,
    WeakNoiseReport,
    add_noise,
    check_assumptions,
    convergence_sweep,
    error_report,
    fit_loglog_slope,
    illposedness_demo,
    predicted_exponent,
    bound_envelope,
    weak_noise_experiment,
)

__version__ = "0.1.0"
