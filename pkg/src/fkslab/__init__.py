"""Pseudo-spectral laboratory for fractionally forced KS-type flows.

The flow integrated here is

    u_t + (u^2/2)_x = Lambda^gamma u - eps * Lambda^(1+delta) u

on the 2*pi torus (plus the classic second/fourth-order variant), with
spectral operators, a singular-kernel cross-check of the fractional
Laplacian, adaptive and exponential steppers, diagnostics, and sweep
tooling to locate the steady/chaotic transition.
"""

from ._version import __version__
from .diagnostics import (
    AnalyticityEstimate,
    DiagnosticsSample,
    FitResult,
    OscillationEstimate,
    Regime,
    RunRecord,
    TailCheckReport,
    TheoryConstants,
    classify_regime,
    count_critical_points,
    dirichlet_tools,
    fit_analyticity_radius,
    gronwall_l2_envelope,
    gronwall_l2_log_envelope,
    gronwall_rate,
    sample,
    theory_analyticity,
    theory_constants,
    theory_lambda,
    theory_oscillation,
)
from .dynamics import (
    ModelParams,
    k_star,
    linear_symbol,
    nonlinear_term,
    rhs,
)
from .experiments import (
    InitialCondition,
    RunConfig,
    SweepPoint,
    SweepRecord,
    detect_transition,
    load_snapshot,
    make_initial,
    run_experiment,
    save_snapshot,
    sweep,
)
from .kernel import KernelQuadratureConfig, lambda_kernel
from .spectral import (
    Grid,
    PhysicalField,
    SpectralField,
    dealias,
    derivative,
    evaluate,
    frac_deriv,
    hilbert,
    lp_norm,
    sobolev_norm,
    to_physical,
    to_spectral,
)
from .stepping import (
    IntegrationAbort,
    IntegrationState,
    ObserverSet,
    StepperConfig,
    etdrk4_coefficients,
    integrate,
    step_adaptive,
    step_etdrk4,
)

__all__ = [name for name in dir() if not name.startswith("_")]
