"""Time integration of the half-harmonic gradient flow.

The evolution solved is ``u_t + (-Lap)^(1/2) u = r(u)`` with ``r`` one of the
equivalent right-hand sides of the constrained flow into the target manifold:

* ``projection``:   ``(-Lap)^(1/2) pi(u) - dpi(u) (-Lap)^(1/2) u``
* ``divergence``:   gradient pairing with the normal-projector gradient plus
  the fractional divergence of the curvature kernel
* ``quadratic``:    principal-value pairing of the quadratic-form kernel
* ``hypersurface``: normal speed factor times the unit normal (codim 1 only)
* ``sphere``:       ``u |d_(1/2) u|^2`` with the duality calibration (unit
  sphere targets only)

The linear half-Laplacian is integrated implicitly (it is diagonal in
Fourier; its spectral radius grows like M/2, so explicit schemes would force
``dt = O(1/M)``), the nonlinearity explicitly.  Reprojection after each step
is optional and off by default so that constraint drift is observable.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .curvature import (
    DEFAULT_CHORD_ORDER,
    curvature_divergence_kernel,
    hypersurface_objects,
    quadratic_form_kernel,
)
from .grid import CircleGrid
from .manifolds import Manifold, NotAHypersurface, Sphere
from .offdiag import (
    duality_constant,
    frac_divergence,
    frac_gradient,
    od_contract,
    od_integrate,
    od_pairing,
)
from .spectral import GridFunction, frac_laplacian_spectral

__all__ = [
    "FlowFormulation",
    "FlowState",
    "SolverOptions",
    "NotOnSphere",
    "ConstraintBlowup",
    "NonFiniteState",
    "rhs_projection_form",
    "rhs_divergence_form",
    "rhs_quadratic_form",
    "rhs_hypersurface_form",
    "rhs_sphere_form",
    "flow_rhs",
    "flow_velocity",
    "step",
    "evolve",
    "initial_projected_perturbation",
    "initial_great_circle",
    "initial_torus_loop",
    "initial_concentrated_bump",
]


class NotOnSphere(Exception):
    """Sphere-form nonlinearity evaluated on data off the unit sphere."""


class ConstraintBlowup(Exception):
    """Constraint violation exceeded the abort threshold during a run."""


class NonFiniteState(Exception):
    """NaN or Inf detected in the evolved state."""


class FlowFormulation(enum.Enum):
    PROJECTION = "projection"
    DIVERGENCE = "divergence"
    QUADRATIC = "quadratic"
    HYPERSURFACE = "hypersurface"
    SPHERE = "sphere"


@dataclass
class FlowState:
    """Snapshot of the evolution at one time."""

    t: float
    u: GridFunction
    step_count: int = 0
    last_rhs: GridFunction | None = None


@dataclass
class SolverOptions:
    """Time-stepping parameters.

    ``scheme`` is ``imex_euler`` (backward Euler on the linear part) or
    ``imex_midpoint`` (trapezoidal on the linear part); the nonlinearity is
    explicit in both.  ``reproject`` replaces ``u`` by its nodewise projection
    after every step.
    """

    dt: float
    scheme: str = "imex_euler"
    reproject: bool = False
    t_end: float = 1.0
    constraint_abort_threshold: float = 1e-2
    chord_order: int = DEFAULT_CHORD_ORDER

    def __post_init__(self):
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        if self.t_end < 0:
            raise ValueError(f"t_end must be nonnegative, got {self.t_end}")
        if self.scheme not in ("imex_euler", "imex_midpoint"):
            raise ValueError(f"unknown scheme {self.scheme!r}")


# ---------------------------------------------------------------------------
# Right-hand sides
# ---------------------------------------------------------------------------


def rhs_projection_form(manifold: Manifold, u: GridFunction) -> GridFunction:
    """Spectral form ``(-Lap)^(1/2) pi(u) - dpi(u) (-Lap)^(1/2) u``.

    For data on the target this equals the normal part
    ``(Id - dpi(u)) (-Lap)^(1/2) u`` of the half-Laplacian.
    """
    projected = GridFunction(u.grid, manifold.project(u.values))
    lap_u = frac_laplacian_spectral(u, 0.5)
    dpi = manifold.tangent_projector(u.values)
    tangential = np.einsum("xij,xj->xi", dpi, lap_u.values)
    return GridFunction(
        u.grid, frac_laplacian_spectral(projected, 0.5).values - tangential
    )


def rhs_divergence_form(
    manifold: Manifold, u: GridFunction, order: int = DEFAULT_CHORD_ORDER
) -> GridFunction:
    """Divergence form: projector-gradient pairing plus curvature divergence.

    ``[ d_(1/2)u . d_(1/2)(dpi_perp(u)) + div_(1/2)( A(du, du) dpi_perp(u(y))
    / |x-y|^(1/2) ) ] / C_dual``; the duality constant makes the assembly
    consistent with the spectral half-Laplacian.
    """
    div_term = frac_divergence(curvature_divergence_kernel(manifold, u, order=order), 0.5)
    dpi = manifold.tangent_projector(u.values)
    perp = np.eye(u.n) - dpi
    D = frac_gradient(GridFunction(u.grid, perp), 0.5)
    du = frac_gradient(u, 0.5)
    pairing = od_contract(du, D, 1)
    C = duality_constant(0.5, u.grid.M)
    return GridFunction(u.grid, (pairing.values + div_term.values) / C)


def rhs_quadratic_form(
    manifold: Manifold, u: GridFunction, order: int = DEFAULT_CHORD_ORDER
) -> GridFunction:
    """Quadratic form: principal-value pairing of the pairwise coefficients.

    ``C_disc * P.V. int sum_kl P^{kl}(u(x), u(y)) d_(1/2)u_k d_(1/2)u_l
    dy / |x-y|``, pointwise bounded by a tube constant times
    ``|d_(1/2)u|^2(x)``.
    """
    from .offdiag import calibrate_constant

    K = quadratic_form_kernel(manifold, u, order)
    C = calibrate_constant(0.5, u.grid.M)
    return GridFunction(u.grid, C * od_integrate(K).values)


def rhs_hypersurface_form(
    manifold: Manifold, u: GridFunction, order: int = DEFAULT_CHORD_ORDER
) -> GridFunction:
    """Codimension-one form: normal speed factor times the unit normal."""
    objs = hypersurface_objects(manifold, u, order)
    nu = manifold.normal(u.values)
    return GridFunction(u.grid, objs.normal_speed.values[:, None] * nu)


def rhs_sphere_form(u: GridFunction, tol: float = 1e-6) -> GridFunction:
    """Unit-sphere nonlinearity ``u |d_(1/2) u|^2 / C_dual``.

    Requires ``|u(x_j)| = 1`` within ``tol``; the duality constant scales the
    pairing so the term is consistent with the spectral half-Laplacian.
    """
    norms = np.linalg.norm(u.values, axis=-1)
    if np.max(np.abs(norms - 1.0)) > tol:
        raise NotOnSphere(
            f"data leaves the unit sphere by {np.max(np.abs(norms - 1.0)):.3e}"
        )
    du = frac_gradient(u, 0.5)
    density = od_pairing(du, du).values
    C = duality_constant(0.5, u.grid.M)
    return GridFunction(u.grid, u.values * (density / C)[:, None])


def flow_rhs(
    manifold: Manifold,
    u: GridFunction,
    formulation: FlowFormulation,
    order: int = DEFAULT_CHORD_ORDER,
) -> GridFunction:
    """Dispatch to the requested right-hand side."""
    if formulation is FlowFormulation.PROJECTION:
        return rhs_projection_form(manifold, u)
    if formulation is FlowFormulation.DIVERGENCE:
        return rhs_divergence_form(manifold, u, order)
    if formulation is FlowFormulation.QUADRATIC:
        return rhs_quadratic_form(manifold, u, order)
    if formulation is FlowFormulation.HYPERSURFACE:
        if not manifold.is_hypersurface:
            raise NotAHypersurface(f"{manifold.name} is not a hypersurface")
        return rhs_hypersurface_form(manifold, u, order)
    if formulation is FlowFormulation.SPHERE:
        if not isinstance(manifold, Sphere):
            raise NotOnSphere("sphere formulation requires a unit-sphere target")
        return rhs_sphere_form(u)
    raise ValueError(f"unknown formulation {formulation!r}")


def flow_velocity(
    manifold: Manifold,
    u: GridFunction,
    formulation: FlowFormulation,
    order: int = DEFAULT_CHORD_ORDER,
) -> GridFunction:
    """Instantaneous velocity ``u_t = r(u) - (-Lap)^(1/2) u``.

    Vanishes on stationary data (constants, and the identity map of the
    circle into itself).
    """
    r = flow_rhs(manifold, u, formulation, order)
    return GridFunction(u.grid, r.values - frac_laplacian_spectral(u, 0.5).values)


# ---------------------------------------------------------------------------
# IMEX stepping
# ---------------------------------------------------------------------------


def step(
    state: FlowState,
    manifold: Manifold,
    formulation: FlowFormulation,
    opts: SolverOptions,
) -> FlowState:
    """One IMEX step; the Fourier-diagonal linear solve is exact.

    ``imex_euler``:     ``c <- (c + dt r_hat) / (1 + dt |k|)``
    ``imex_midpoint``:  ``c <- ((1 - dt |k| / 2) c + dt r_hat) / (1 + dt |k| / 2)``

    Raises :class:`halfflow.manifolds.OutsideTube` (with node index) if the
    state leaves the safe tube and :class:`NonFiniteState` on NaN or Inf.
    """
    grid = state.u.grid
    dt = opts.dt
    r = flow_rhs(manifold, state.u, formulation, opts.chord_order)
    k = np.abs(grid.wavenumbers)[:, None]
    u_hat = np.fft.fft(state.u.values, axis=0)
    r_hat = np.fft.fft(r.values, axis=0)
    if opts.scheme == "imex_euler":
        u_hat = (u_hat + dt * r_hat) / (1.0 + dt * k)
    else:
        u_hat = ((1.0 - 0.5 * dt * k) * u_hat + dt * r_hat) / (1.0 + 0.5 * dt * k)
    new_values = np.real(np.fft.ifft(u_hat, axis=0))
    if not np.all(np.isfinite(new_values)):
        bad = np.argwhere(~np.isfinite(new_values))[0]
        raise NonFiniteState(
            f"non-finite value at node {int(bad[0])} after step to "
            f"t={state.t + dt:.6g}"
        )
    if opts.reproject:
        new_values = manifold.project(new_values)
    new_u = GridFunction(grid, new_values)
    return FlowState(
        t=state.t + dt, u=new_u, step_count=state.step_count + 1, last_rhs=r
    )


def evolve(
    u0: GridFunction,
    manifold: Manifold,
    formulation: FlowFormulation,
    opts: SolverOptions,
    diagnostics_stride: int = 1,
    radii: tuple = (),
    gap_formulations: tuple = (),
):
    """Run the flow to ``t_end``, recording diagnostics every ``stride`` steps.

    Returns a list of ``(FlowState, DiagnosticsRecord)`` including the
    initial state.  Aborts with :class:`ConstraintBlowup` when the constraint
    violation passes the configured threshold.  ``gap_formulations`` lists
    additional right-hand sides whose relative L^2 distance to the active one
    is recorded at diagnostic times.
    """
    from .diagnostics import compute_diagnostics

    def record(state: FlowState):
        gaps = None
        if gap_formulations:
            active = flow_rhs(manifold, state.u, formulation, opts.chord_order)
            scale = max(active.l2_norm(), 1e-300)
            gaps = {}
            for other in gap_formulations:
                alt = flow_rhs(manifold, state.u, other, opts.chord_order)
                gaps[other.value] = (alt - active).l2_norm() / scale
        rec = compute_diagnostics(
            manifold, state.u, state.t, radii, formulation_gaps=gaps
        )
        if rec.constraint_violation > opts.constraint_abort_threshold:
            raise ConstraintBlowup(
                f"constraint violation {rec.constraint_violation:.3e} exceeded "
                f"{opts.constraint_abort_threshold:.3e} at t={state.t:.6g}"
            )
        return rec

    state = FlowState(t=0.0, u=u0)
    trajectory = [(state, record(state))]
    n_steps = int(round(opts.t_end / opts.dt))
    for i in range(n_steps):
        state = step(state, manifold, formulation, opts)
        if (i + 1) % diagnostics_stride == 0 or i + 1 == n_steps:
            trajectory.append((state, record(state)))
    return trajectory


# ---------------------------------------------------------------------------
# Initial data generators
# ---------------------------------------------------------------------------


def _default_base_point(manifold: Manifold) -> np.ndarray:
    if hasattr(manifold, "seed_point") and manifold.seed_point is not None:
        return manifold.seed_point
    base = np.zeros(manifold.ambient_dim)
    if isinstance(manifold, Sphere):
        base[-1] = 1.0
    else:
        base[0] = 1.0
    return manifold.project_unchecked(base)


def initial_projected_perturbation(
    grid: CircleGrid,
    manifold: Manifold,
    epsilon: float,
    seed: int,
    base_point=None,
) -> GridFunction:
    """Small-energy datum: projected first-harmonic perturbation of a point.

    ``u = pi( p0 + eps (a cos x + b sin x) )`` with seeded random unit
    directions ``a, b``.
    """
    rng = np.random.default_rng(seed)
    p0 = (
        _default_base_point(manifold)
        if base_point is None
        else manifold.project_unchecked(np.asarray(base_point, dtype=float))
    )
    a = rng.normal(size=manifold.ambient_dim)
    b = rng.normal(size=manifold.ambient_dim)
    a /= np.linalg.norm(a)
    b /= np.linalg.norm(b)
    raw = (
        p0[None, :]
        + epsilon * np.cos(grid.nodes)[:, None] * a[None, :]
        + epsilon * np.sin(grid.nodes)[:, None] * b[None, :]
    )
    return GridFunction(grid, manifold.project(raw))


def initial_great_circle(
    grid: CircleGrid, manifold: Manifold, wavenumber: int = 1
) -> GridFunction:
    """Degree-``k`` equatorial map ``x -> (cos kx, sin kx, 0, ...)``.

    Stationary for ``k = 1`` (the identity map of the circle); carries the
    topological degree that obstructs convergence to a point.
    """
    k = int(wavenumber)
    vals = np.zeros((grid.M, manifold.ambient_dim))
    vals[:, 0] = np.cos(k * grid.nodes)
    vals[:, 1] = np.sin(k * grid.nodes)
    return GridFunction(grid, vals)


def initial_torus_loop(
    grid: CircleGrid,
    manifold: Manifold,
    major_radius: float | None = None,
    minor_radius: float | None = None,
    theta_winding: int = 0,
    phi_winding: int = 0,
    theta_amplitude: float = 0.3,
    phi_amplitude: float = 0.4,
    phi_offset: float = 0.2,
) -> GridFunction:
    """Parametric loop on the torus of revolution.

    With zero windings and small amplitudes the loop is contractible and stays
    inside one chart, which keeps all chord evaluations inside the safe tube.
    """
    major_radius = getattr(manifold, "major_radius", 2.0) if major_radius is None else major_radius
    minor_radius = getattr(manifold, "minor_radius", 0.5) if minor_radius is None else minor_radius
    x = grid.nodes
    theta = theta_winding * x + theta_amplitude * np.sin(x)
    phi = phi_winding * x + phi_amplitude * np.cos(x) + phi_offset
    ring = major_radius + minor_radius * np.cos(phi)
    vals = np.stack(
        [ring * np.cos(theta), ring * np.sin(theta), minor_radius * np.sin(phi)],
        axis=1,
    )
    return GridFunction(grid, vals)


def initial_concentrated_bump(
    grid: CircleGrid,
    manifold: Manifold,
    concentration: float = 300.0,
    amplitude: float = 0.8,
    center: float = np.pi,
    seed: int = 0,
    base_point=None,
) -> GridFunction:
    """Datum whose gradient energy concentrates near one node.

    A periodic bump ``exp(kappa (cos(x - x0) - 1))`` of width ``1/sqrt(kappa)``
    displaces the base point along a seeded direction; used to probe the local
    energy functionals.
    """
    rng = np.random.default_rng(seed)
    p0 = (
        _default_base_point(manifold)
        if base_point is None
        else manifold.project_unchecked(np.asarray(base_point, dtype=float))
    )
    a = rng.normal(size=manifold.ambient_dim)
    a /= np.linalg.norm(a)
    bump = np.exp(concentration * (np.cos(grid.nodes - center) - 1.0))
    raw = p0[None, :] + amplitude * bump[:, None] * a[None, :]
    return GridFunction(grid, manifold.project(raw))
