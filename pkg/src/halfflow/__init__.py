"""Pseudospectral half-harmonic gradient flow on the circle.

A numpy library for evolving maps from the unit circle into closed target
manifolds under the half-order harmonic gradient flow, with the supporting
fractional calculus (spectral and singular-integral half-Laplacians,
fractional gradients and divergences, commutators), closest-point projection
geometry, equivalent flow formulations, and the diagnostics that verify the
qualitative behaviour of the flow (energy decay, constraint preservation,
stationarity, convergence to a point).
"""

__version__ = "0.1.0"

from .grid import CircleGrid, build_grid, chord_distance
from .spectral import (
    GridFunction,
    SpectralField,
    to_spectral,
    from_spectral,
    frac_laplacian_spectral,
    spectral_derivative,
    riesz_transform,
    riesz_commutator,
    half_dirichlet_energy,
    random_band_limited,
)
from .offdiag import (
    OffDiagKernel,
    frac_gradient,
    od_pairing,
    od_contract,
    od_integrate,
    od_norm,
    od_inner_product,
    frac_divergence,
    frac_laplacian_singular,
    calibrate_constant,
    duality_constant,
    calibration_entry,
    leibniz_residual,
    product_rule_residual,
    commutator_identity_residual,
    gagliardo_seminorm,
)
from .manifolds import (
    Manifold,
    Sphere,
    LevelSetHypersurface,
    EmbeddedCircle,
    ellipsoid,
    torus,
    project,
    projection_jet,
    normal_field,
    ProjectionJet,
    OutsideTube,
    NotAHypersurface,
)
from .curvature import (
    hessian_chord_form,
    chord_taylor_residual,
    hessian_chord_mean,
    antisymmetric_potential,
    remainder_terms,
    remainder_divergence_functional,
    curvature_divergence_kernel,
    RemainderTerms,
    quadratic_form_tensor,
    quadratic_form_kernel,
    hypersurface_objects,
    HypersurfaceObjects,
)
from .flow import (
    FlowFormulation,
    FlowState,
    SolverOptions,
    NotOnSphere,
    ConstraintBlowup,
    NonFiniteState,
    rhs_projection_form,
    rhs_divergence_form,
    rhs_quadratic_form,
    rhs_hypersurface_form,
    rhs_sphere_form,
    flow_rhs,
    flow_velocity,
    step,
    evolve,
    initial_projected_perturbation,
    initial_great_circle,
    initial_torus_loop,
    initial_concentrated_bump,
)
from .diagnostics import (
    DiagnosticsRecord,
    quarter_energy_density,
    local_energy,
    energy_concentration,
    constraint_violation,
    harmonic_residual,
    compute_diagnostics,
    energy_decay_check,
    DecayReport,
    convergence_detector,
    ConvergenceVerdict,
)
