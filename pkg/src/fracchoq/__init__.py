"""Normalized solutions of a fractional Choquard equation with mixed
nonlinearities: spectral discretization, dilation-fiber analysis,
interpolation-constant estimation, and mass-constrained solvers.

The package is organized around the energy functional

    E(u) = 1/2 [u]_s^2 - alpha/(2q) D_q(u) - 1/(2p) D_p(u)

on the mass sphere ||u||_2 = c, where [.]_s is the fractional Sobolev
seminorm and D_r(u) is the Riesz-kernel self-interaction of |u|^r.  The
modules split as follows:

``params``
    Parameter validation, scaling exponents, regime classification, and
    the closed-form admissibility thresholds.
``spectral``
    Periodic-box discretization: Fourier multipliers for the fractional
    Laplacian and the convolution kernel, quadrature, field storage.
``functionals``
    Energy, constraint, and dilation-fiber diagnostics for discrete
    fields and abstract moment triples.
``gn_constants``
    Interpolation-inequality best constants by constrained ascent on the
    associated quotient.
``solvers``
    Constrained descent for local minimizers and global minimizers, a
    constrained mountain-pass search, coupling sweeps, and the strict
    mass-subadditivity check.
``cli``
    Config-driven command line front end with reproducible artifacts.
"""

from __future__ import annotations

from .functionals import (
    FiberReport,
    GFunctionReport,
    MomentTriple,
    RadialDiagnostic,
    dilate_field,
    energy,
    fiber_analyze,
    fiber_d1,
    fiber_d2,
    fiber_max_root,
    fiber_value,
    g_analyze,
    gradient,
    moments,
    multiplier_estimate,
    pohozaev,
    radial_monotonicity_check,
)
from .gn_constants import (
    GNEstimate,
    balanced_gaussian_width,
    estimate_best_constant,
    weinstein_quotient,
)
from .params import (
    CbarResult,
    DerivedExponents,
    ProblemParams,
    RegimeTag,
    alpha1,
    alpha2,
    cbar,
    classify_regime,
    derived_exponents,
    gamma,
    l2_critical_mass_condition,
    l2_critical_mass_value,
    riesz_normalization,
)
from .solvers import (
    SolveConfig,
    SolveKind,
    SolveResult,
    SubadditivityReport,
    SweepRow,
    alpha_sweep,
    default_solve_grid,
    global_minimize,
    local_minimize,
    mountain_pass,
    subadditivity_check,
    write_sweep_csv,
)
from .spectral import (
    Grid,
    SpectralMultipliers,
    choquard_integral,
    dilation_generator,
    fractional_laplacian,
    hs_seminorm_sq,
    inner,
    l2_norm,
    normalize_mass,
    read_field,
    riesz_convolve,
    spectral_multipliers,
    write_field,
)

__version__ = "0.1.0"

__all__ = [
    "__version__",
    # params
    "ProblemParams", "DerivedExponents", "RegimeTag", "CbarResult",
    "gamma", "riesz_normalization", "derived_exponents", "classify_regime",
    "alpha1", "alpha2", "l2_critical_mass_value",
    "l2_critical_mass_condition", "cbar",
    # spectral
    "Grid", "SpectralMultipliers", "spectral_multipliers",
    "fractional_laplacian", "riesz_convolve", "choquard_integral",
    "l2_norm", "inner", "hs_seminorm_sq", "normalize_mass",
    "dilation_generator", "write_field", "read_field",
    # functionals
    "MomentTriple", "FiberReport", "GFunctionReport", "RadialDiagnostic",
    "moments", "energy", "pohozaev", "gradient", "multiplier_estimate",
    "fiber_value", "fiber_d1", "fiber_d2", "fiber_analyze",
    "fiber_max_root", "g_analyze", "radial_monotonicity_check",
    "dilate_field",
    # gn_constants
    "GNEstimate", "weinstein_quotient", "balanced_gaussian_width",
    "estimate_best_constant",
    # solvers
    "SolveKind", "SolveConfig", "SolveResult", "SweepRow",
    "SubadditivityReport", "default_solve_grid", "local_minimize",
    "mountain_pass", "global_minimize", "alpha_sweep",
    "subadditivity_check", "write_sweep_csv",
]
