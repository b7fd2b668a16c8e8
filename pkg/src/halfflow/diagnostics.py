"""Quantitative observables of the flow: energies, constraint, residuals.

Local energies window the node-wise spectral density ``|(-Lap)^(1/4) u|^2``
over chord-metric balls, so the windowing is the only quadrature
approximation; summing the full circle recovers the global energy exactly by
Parseval.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .grid import chord_distance
from .manifolds import Manifold
from .spectral import GridFunction, frac_laplacian_spectral, half_dirichlet_energy

__all__ = [
    "DiagnosticsRecord",
    "quarter_energy_density",
    "local_energy",
    "energy_concentration",
    "constraint_violation",
    "harmonic_residual",
    "compute_diagnostics",
    "DecayReport",
    "energy_decay_check",
    "ConvergenceVerdict",
    "convergence_detector",
]


@dataclass
class DiagnosticsRecord:
    """One time-stamped row of flow observables."""

    t: float
    energy: float
    constraint_violation: float
    harmonic_residual: float
    local_energy_sup: dict = field(default_factory=dict)
    mean_point: np.ndarray | None = None
    formulation_gaps: dict | None = None

    def __post_init__(self):
        if self.energy < -1e-12:
            raise ValueError("energy must be nonnegative")
        if self.constraint_violation < 0:
            raise ValueError("constraint violation must be nonnegative")


def quarter_energy_density(u: GridFunction) -> np.ndarray:
    """Node-wise density ``1/2 |(-Lap)^(1/4) u|^2 (x_j)``."""
    q = frac_laplacian_spectral(u, 0.25).values
    if q.ndim == 1:
        return 0.5 * q**2
    return 0.5 * np.sum(q**2, axis=-1)


def local_energy(u: GridFunction, center: float, radius: float) -> float:
    """Energy in the chord-metric ball: ``1/2 int_{B_R(x0)} |(-Lap)^(1/4)u|^2``.

    ``radius`` is a chord length in ``(0, 2]``; the full radius 2 recovers the
    global energy up to rounding.
    """
    if not 0.0 < radius <= 2.0:
        raise ValueError(f"radius must lie in (0, 2], got {radius}")
    mask = chord_distance(u.grid.nodes, center) < radius
    return float(u.grid.h * np.sum(quarter_energy_density(u)[mask]))


def energy_concentration(u: GridFunction, radius: float) -> float:
    """Spatial supremum of the local energy over all node centers.

    Monotone non-decreasing in the radius and bounded by the global energy;
    the time supremum is taken by the runner.
    """
    if not 0.0 < radius <= 2.0:
        raise ValueError(f"radius must lie in (0, 2], got {radius}")
    dens = quarter_energy_density(u)
    grid = u.grid
    # ball membership depends only on the index offset on a uniform grid
    offsets = chord_distance(grid.nodes, 0.0) < radius
    window = np.fft.ifft(np.fft.fft(dens) * np.fft.fft(offsets.astype(float)))
    return float(grid.h * np.max(np.real(window)))


def constraint_violation(manifold: Manifold, u: GridFunction) -> float:
    """Max over nodes of the squared distance to the projected point."""
    diff = u.values - manifold.project(u.values)
    return float(np.max(np.sum(diff**2, axis=-1)))


def harmonic_residual(manifold: Manifold, u: GridFunction) -> float:
    """L^2 norm of the tangential part of the spectral half-Laplacian.

    Zero exactly at half-harmonic maps; the identity map of the circle and
    constants are the reference cases.
    """
    lap = frac_laplacian_spectral(u, 0.5).values
    dpi = manifold.tangent_projector(u.values)
    tang = np.einsum("xij,xj->xi", dpi, lap)
    return float(np.sqrt(u.grid.h * np.sum(tang**2)))


def compute_diagnostics(
    manifold: Manifold,
    u: GridFunction,
    t: float,
    radii: tuple = (),
    formulation_gaps: dict | None = None,
) -> DiagnosticsRecord:
    """Assemble the full record at one snapshot."""
    return DiagnosticsRecord(
        t=float(t),
        energy=half_dirichlet_energy(u),
        constraint_violation=constraint_violation(manifold, u),
        harmonic_residual=harmonic_residual(manifold, u),
        local_energy_sup={float(R): energy_concentration(u, R) for R in radii},
        mean_point=u.values.mean(axis=0),
        formulation_gaps=formulation_gaps,
    )


@dataclass
class DecayReport:
    """Outcome of the monotone-energy check over a trajectory."""

    passed: bool
    max_step_increase: float
    first_violation_index: int | None
    bounded_by_initial: bool


def energy_decay_check(records, tol_per_step: float = 1e-6) -> DecayReport:
    """Verify ``E(t_(n+1)) <= E(t_n) + tol`` and ``E(t) <= E(0)`` rowwise.

    Accepts a list of :class:`DiagnosticsRecord` (or of ``(state, record)``
    pairs); reports the first violating step if any.
    """
    energies = np.array([_as_record(r).energy for r in records])
    if len(energies) == 0:
        raise ValueError("trajectory is empty")
    steps = np.diff(energies)
    max_inc = float(steps.max(initial=-np.inf)) if len(steps) else 0.0
    bad = np.where(steps > tol_per_step)[0]
    first = int(bad[0] + 1) if len(bad) else None
    bounded = bool(np.all(energies <= energies[0] + tol_per_step))
    return DecayReport(
        passed=(first is None) and bounded,
        max_step_increase=max_inc if len(steps) else 0.0,
        first_violation_index=first,
        bounded_by_initial=bounded,
    )


@dataclass
class ConvergenceVerdict:
    """Point-convergence verdict with trend slopes over the tail window."""

    converged_to_point: bool
    sup_variation: float
    final_energy: float
    energy_slope: float
    variation_slope: float


def _as_record(item) -> DiagnosticsRecord:
    if isinstance(item, DiagnosticsRecord):
        return item
    return item[1]


def convergence_detector(
    trajectory,
    window: int = 10,
    point_tol: float = 0.05,
    energy_tol: float | None = None,
) -> ConvergenceVerdict:
    """Declare convergence to a point from the tail of an evolve trajectory.

    ``trajectory`` is the list of ``(FlowState, DiagnosticsRecord)`` pairs
    produced by :func:`halfflow.flow.evolve`.  Converged means the final
    sup-distance to the mean value is below ``point_tol`` and the final
    energy is below ``energy_tol`` (default one tenth of the initial energy).
    Trend slopes of energy and variation over the last ``window`` records are
    reported alongside.
    """
    if len(trajectory) < window:
        raise ValueError(f"trajectory shorter than window={window}")

    def sup_variation(state):
        v = state.u.values
        return float(np.max(np.linalg.norm(v - v.mean(axis=0), axis=-1)))

    records = [rec for _, rec in trajectory]
    sup_var = sup_variation(trajectory[-1][0])
    e0, eT = records[0].energy, records[-1].energy
    tol = 0.1 * e0 if energy_tol is None else energy_tol
    ts = np.array([rec.t for rec in records[-window:]])
    es = np.array([rec.energy for rec in records[-window:]])
    vs = np.array([sup_variation(state) for state, _ in trajectory[-window:]])
    distinct = len(set(ts.tolist())) > 1
    return ConvergenceVerdict(
        converged_to_point=bool(sup_var <= point_tol and eT <= tol),
        sup_variation=sup_var,
        final_energy=eT,
        energy_slope=float(np.polyfit(ts, es, 1)[0]) if distinct else 0.0,
        variation_slope=float(np.polyfit(ts, vs, 1)[0]) if distinct else 0.0,
    )
