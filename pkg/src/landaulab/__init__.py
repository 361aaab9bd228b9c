"""Numerical laboratory for the spatially homogeneous Landau equation with
hard potentials: collision-kernel quadrature, velocity-grid discretization,
the linearised operator with its spectral gap and semigroups, the full
nonlinear dynamics, and the diagnostic suites that verify conservation,
the H-theorem, hypo-dissipativity, regularization and exponential relaxation.
"""

from .kernel import (
    CollisionKernel,
    PhiParams,
    Weight,
    UNBOUNDED_BELOW,
    abscissa,
    bar_fields,
    canonical_theta,
    j_alpha,
    maxwellian,
    moment_malpha,
    phi,
    phi_far_field_envelope,
    phi_radial,
)
from .vgrid import (
    GridField,
    VelocityGrid,
    boundary_mass,
    convolve_kernel,
    discretized_maxwellian,
    export_csv,
    first_derivative,
    integrate,
    load_field,
    save_field,
    second_derivative,
)
from .linop import (
    CertifyResult,
    LinearisedOperator,
    SemigroupTrace,
    SpectralReport,
    SplitParams,
    certify_split,
    chi_profile,
)
from .nonlinear import (
    EvolutionTrace,
    EvolveConfig,
    apply_Q,
    bilinear_estimate_check,
    ckp_check,
    dissipation,
    duhamel_residual,
    entropy,
    evolve,
    relative_entropy,
)
from .diagnostics import (
    DecayReport,
    NormSpec,
    bootstrap_demo,
    fit_decay,
    fit_decay_trace,
    make_report,
    norm,
    polynomial_phase_check,
)

__version__ = "0.1.0"
