"""Named identity, geometry and cross-formulation check suites.

Each suite returns a list of :class:`CheckResult` with the measured residual
and its bound; the command-line runner renders them as machine-readable JSON
and exits nonzero on any failure.  The bounds are the acceptance tolerances,
not loose smoke limits.
"""

from __future__ import annotations

from dataclasses import dataclass, asdict

import numpy as np

from .curvature import chord_taylor_residual
from .grid import build_grid
from .manifolds import EmbeddedCircle, Sphere, ellipsoid, torus
from .offdiag import (
    frac_divergence,
    frac_gradient,
    leibniz_residual,
    od_inner_product,
)
from .spectral import (
    GridFunction,
    frac_laplacian_spectral,
    random_band_limited,
    riesz_transform,
    spectral_derivative,
)
from .flow import (
    FlowFormulation,
    flow_rhs,
    initial_projected_perturbation,
    initial_torus_loop,
)

__all__ = [
    "CheckResult",
    "identity_suite",
    "geometry_suite",
    "crossform_suite",
    "run_suite",
    "torus_closest_point_bruteforce",
]


@dataclass
class CheckResult:
    name: str
    value: float
    bound: float

    @property
    def passed(self) -> bool:
        return bool(self.value <= self.bound)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["passed"] = self.passed
        return d


def identity_suite(M: int = 64, seed: int = 0) -> list[CheckResult]:
    """Algebraic identities of the fractional calculus on random data."""
    grid = build_grid(M)
    rng = np.random.default_rng(seed)
    f = random_band_limited(grid, rng)
    g = random_band_limited(grid, rng)
    phi = random_band_limited(grid, rng)
    out = []

    d = frac_gradient(f, 0.5)
    out.append(
        CheckResult("gradient_antisymmetry", float(np.abs(d.samples + d.samples.T).max()), 1e-12)
    )
    out.append(
        CheckResult(
            "leibniz_residual", float(np.abs(leibniz_residual(f, g, 0.5).samples).max()), 1e-12
        )
    )
    for s in (0.3, 0.5, 0.7):
        F = frac_gradient(f, s)
        lhs = grid.h * float(np.sum(frac_divergence(F, s).values * phi.values))
        rhs = od_inner_product(F, frac_gradient(phi, s))
        out.append(
            CheckResult(
                f"divergence_adjointness_s{s}", abs(lhs - rhs) / max(abs(rhs), 1e-300), 1e-12
            )
        )
    rg = riesz_transform(spectral_derivative(f))
    hl = frac_laplacian_spectral(f, 0.5)
    out.append(CheckResult("riesz_of_gradient", (rg - hl).l2_norm(), 1e-12))
    ss = frac_laplacian_spectral(frac_laplacian_spectral(f, 0.3), 0.2)
    out.append(
        CheckResult("laplacian_semigroup", (ss - frac_laplacian_spectral(f, 0.5)).l2_norm(), 1e-12)
    )
    lf, lg = frac_laplacian_spectral(f, 0.5), frac_laplacian_spectral(g, 0.5)
    sym = grid.h * abs(float(np.sum(lf.values * g.values) - np.sum(f.values * lg.values)))
    out.append(CheckResult("laplacian_self_adjoint", sym, 1e-12))
    return out


def torus_closest_point_bruteforce(
    major_radius: float,
    minor_radius: float,
    p: np.ndarray,
    samples: int = 400,
    polish_iters: int = 40,
) -> np.ndarray:
    """Independent torus projection oracle: dense parametric scan + Newton.

    Minimizes ``|p - q(theta, phi)|^2`` over a dense parameter grid and then
    polishes the best cell with a damped Newton iteration on the two angles.
    Entirely independent of the ambient Lagrange-condition solver.
    """
    R, r = major_radius, minor_radius
    th = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    ph = np.linspace(0.0, 2.0 * np.pi, samples, endpoint=False)
    TH, PH = np.meshgrid(th, ph, indexing="ij")

    def point(theta, phi):
        ring = R + r * np.cos(phi)
        return np.stack(
            [ring * np.cos(theta), ring * np.sin(theta), r * np.sin(phi)], axis=-1
        )

    d2 = np.sum((point(TH, PH) - p) ** 2, axis=-1)
    i, j = np.unravel_index(np.argmin(d2), d2.shape)
    theta, phi = float(th[i]), float(ph[j])

    def objective_grad_hess(theta, phi):
        q = point(theta, phi)
        ring = R + r * np.cos(phi)
        dq_t = np.array([-ring * np.sin(theta), ring * np.cos(theta), 0.0])
        dq_p = np.array(
            [-r * np.sin(phi) * np.cos(theta), -r * np.sin(phi) * np.sin(theta), r * np.cos(phi)]
        )
        dq_tt = np.array([-ring * np.cos(theta), -ring * np.sin(theta), 0.0])
        dq_pp = np.array(
            [-r * np.cos(phi) * np.cos(theta), -r * np.cos(phi) * np.sin(theta), -r * np.sin(phi)]
        )
        dq_tp = np.array(
            [r * np.sin(phi) * np.sin(theta), -r * np.sin(phi) * np.cos(theta), 0.0]
        )
        diff = q - p
        grad = np.array([diff @ dq_t, diff @ dq_p])
        hess = np.array(
            [
                [dq_t @ dq_t + diff @ dq_tt, dq_t @ dq_p + diff @ dq_tp],
                [dq_t @ dq_p + diff @ dq_tp, dq_p @ dq_p + diff @ dq_pp],
            ]
        )
        return grad, hess

    for _ in range(polish_iters):
        grad, hess = objective_grad_hess(theta, phi)
        if np.linalg.norm(grad) < 1e-14:
            break
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            step = grad
        theta, phi = theta - step[0], phi - step[1]
    return point(theta, phi)


def geometry_suite(seed: int = 0, n_points: int = 100) -> list[CheckResult]:
    """Projection and projector identities on all four shipped targets."""
    rng = np.random.default_rng(seed)
    out = []
    targets = [
        ("sphere", Sphere(3)),
        ("ellipsoid", ellipsoid([1.0, 1.2, 1.5])),
        ("torus", torus(2.0, 0.5)),
        ("circle", EmbeddedCircle()),
    ]
    for name, N in targets:
        # random on-manifold points: project seeded ambient perturbations
        base = N.project_unchecked(rng.normal(size=(n_points, N.ambient_dim)) * 0.1 + _anchor(N))
        shifted = base + 0.05 * N.tube_radius * rng.normal(size=base.shape)
        proj = N.project(shifted)
        idem = np.linalg.norm(N.project(proj) - proj, axis=-1).max()
        out.append(CheckResult(f"{name}_idempotence", float(idem), 1e-9))
        dpi = N.tangent_projector(base)
        out.append(
            CheckResult(
                f"{name}_projector_squared",
                float(np.abs(np.einsum("pij,pjk->pik", dpi, dpi) - dpi).max()),
                1e-6,
            )
        )
        out.append(
            CheckResult(
                f"{name}_projector_symmetric",
                float(np.abs(dpi - np.swapaxes(dpi, -1, -2)).max()),
                1e-6,
            )
        )
    # sphere: closed-form Jacobian against generic finite differences
    S = Sphere(3)
    pts = S.project_unchecked(rng.normal(size=(20, 3)))
    from .manifolds import _fd_jacobian

    fd = _fd_jacobian(S.project_unchecked, pts * 1.05)
    out.append(
        CheckResult(
            "sphere_jacobian_closed_vs_fd",
            float(np.abs(S.tangent_projector(pts * 1.05) - fd).max()),
            1e-6,
        )
    )
    # torus projection against the parametric brute-force oracle
    T = torus(2.0, 0.5)
    worst = 0.0
    for _ in range(10):
        q = T.project_unchecked(_random_torus_point(rng, 2.0, 0.5) + 0.1 * rng.normal(size=3))
        p = q + 0.1 * rng.normal(size=3)
        if not np.all(T.in_safe_tube(p)):
            continue
        oracle = torus_closest_point_bruteforce(2.0, 0.5, p)
        worst = max(worst, float(np.linalg.norm(T.project(p) - oracle)))
    out.append(CheckResult("torus_vs_bruteforce", worst, 1e-6))
    # chord expansion residual on the identity map
    g64 = build_grid(64)
    u = GridFunction(g64, np.stack([np.cos(g64.nodes), np.sin(g64.nodes)], axis=1))
    res = chord_taylor_residual(Sphere(2), u, order=16)
    out.append(
        CheckResult(
            "chord_taylor_identity_map",
            float(np.linalg.norm(res.samples, axis=-1).max()),
            1e-6,
        )
    )
    return out


def _anchor(N) -> np.ndarray:
    if hasattr(N, "seed_point") and N.seed_point is not None:
        return N.seed_point
    p = np.zeros(N.ambient_dim)
    p[0] = 1.0
    return N.project_unchecked(p)


def _random_torus_point(rng, R, r):
    th, ph = rng.uniform(0, 2 * np.pi, size=2)
    ring = R + r * np.cos(ph)
    return np.array([ring * np.cos(th), ring * np.sin(th), r * np.sin(ph)])


def crossform_suite(M: int = 256, seed: int = 42) -> list[CheckResult]:
    """Pairwise right-hand-side agreement across formulations."""
    out = []
    grid = build_grid(M)
    S3 = Sphere(3)
    u = initial_projected_perturbation(grid, S3, epsilon=0.4, seed=seed)
    forms = {
        tag: flow_rhs(S3, u, tag)
        for tag in (
            FlowFormulation.PROJECTION,
            FlowFormulation.DIVERGENCE,
            FlowFormulation.QUADRATIC,
            FlowFormulation.SPHERE,
        )
    }
    scale = forms[FlowFormulation.PROJECTION].l2_norm()
    pairs = [
        (FlowFormulation.PROJECTION, FlowFormulation.DIVERGENCE, 5e-2),
        (FlowFormulation.PROJECTION, FlowFormulation.QUADRATIC, 5e-2),
        (FlowFormulation.DIVERGENCE, FlowFormulation.QUADRATIC, 5e-2),
        (FlowFormulation.PROJECTION, FlowFormulation.SPHERE, 3e-2),
    ]
    for a, b, bound in pairs:
        gap = (forms[a] - forms[b]).l2_norm() / scale
        out.append(CheckResult(f"sphere_{a.value}_vs_{b.value}", gap, bound))

    T = torus(2.0, 0.5)
    ut = initial_torus_loop(grid, T)
    rp = flow_rhs(T, ut, FlowFormulation.PROJECTION)
    rh = flow_rhs(T, ut, FlowFormulation.HYPERSURFACE)
    out.append(
        CheckResult(
            "torus_hypersurface_vs_projection", (rh - rp).l2_norm() / rp.l2_norm(), 5e-2
        )
    )
    nu = T.normal(ut.values)
    tangential = rh.values - np.einsum("xi,xi->x", rh.values, nu)[:, None] * nu
    out.append(
        CheckResult(
            "torus_hypersurface_tangential_fraction",
            float(np.sqrt(np.sum(tangential**2) / np.sum(rh.values**2))),
            5e-2,
        )
    )
    return out


def run_suite(suite: str, M: int, seed: int) -> list[CheckResult]:
    """Dispatch a named suite."""
    if suite == "identity":
        return identity_suite(M=M, seed=seed)
    if suite == "geometry":
        return geometry_suite(seed=seed)
    if suite == "crossform":
        return crossform_suite(M=M, seed=seed)
    raise ValueError(f"unknown suite {suite!r} (expected identity|geometry|crossform)")
