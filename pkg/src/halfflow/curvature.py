"""Projection-derived geometric kernels along chords between map values.

Every object here integrates derivatives of the closest-point projection (or
of the unit normal field) along the straight segment between two map values
``u(y)`` and ``u(x)``.  Segments may leave the safe tube of the target for
far-apart values; such pairs are *flagged* and excluded from quadratures
rather than evaluated through the singular part of the projection.  Flagged
fractions are exposed on the returned kernels and stay at zero for the
small-oscillation data used in the experiments.

Chord quadrature
----------------
The double parameter integrals reduce exactly to single weighted integrals
over the chord parameter (substituting the product of the two parameters),
so all kernels are assembled with one Gauss-Legendre rule of order
``order`` (default 16) on the chord.  Doubling the order is the refinement
axis used by the tests.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CircleGrid
from .manifolds import Manifold, NotAHypersurface
from .offdiag import (
    OffDiagKernel,
    frac_divergence,
    frac_gradient,
    od_contract,
    od_integrate,
    od_pairing,
)
from .spectral import GridFunction, spectral_derivative

__all__ = [
    "hessian_chord_form",
    "chord_taylor_residual",
    "hessian_chord_mean",
    "antisymmetric_potential",
    "RemainderTerms",
    "remainder_terms",
    "remainder_divergence_functional",
    "curvature_divergence_kernel",
    "quadratic_form_tensor",
    "quadratic_form_kernel",
    "HypersurfaceObjects",
    "hypersurface_objects",
    "DEFAULT_CHORD_ORDER",
]

DEFAULT_CHORD_ORDER = 16


def _chord_rule(order: int):
    """Gauss-Legendre nodes and weights on [0, 1]."""
    x, w = np.polynomial.legendre.leggauss(order)
    return 0.5 * (x + 1.0), 0.5 * w


def _chord_hessian_integral(
    manifold: Manifold, u: np.ndarray, tau: np.ndarray, weights: np.ndarray
) -> tuple[np.ndarray, np.ndarray]:
    """Accumulate ``sum_g w_g * d(dpi)((1 - tau_g) u(y) + tau_g u(x))``.

    Returns the (M, M, n, n, n) tensor and the flag matrix.  Hessians are
    evaluated only where the chord stays inside the safe tube; flagged pairs
    contribute zero.
    """
    M, n = u.shape
    out = np.zeros((M, M, n, n, n))
    ok = np.ones((M, M), dtype=bool)
    anchor = manifold.project_unchecked(u[:1])  # a definitely-regular point
    for t, w in zip(tau, weights):
        p = (1.0 - t) * u[None, :, :] + t * u[:, None, :]
        good = manifold.in_safe_tube(p)
        ok &= good
        safe = np.where(good[..., None], p, anchor[0])
        out += w * np.where(
            good[..., None, None, None], manifold.projection_hessian(safe), 0.0
        )
    np.fill_diagonal(ok, True)
    flagged = ~ok
    out[flagged] = 0.0
    return out, flagged


def hessian_chord_form(
    manifold: Manifold,
    u: GridFunction,
    v: GridFunction,
    w: GridFunction,
    order: int = DEFAULT_CHORD_ORDER,
) -> OffDiagKernel:
    """Chord integral of the projection Hessian contracted with increments.

    ``K_i(x, y) = int_0^1 (1 - tau) ddpi_i((1-tau) u(y) + tau u(x))
    (v(x) - v(y)) (w(x) - w(y)) dtau`` -- the quadratic, curvature-like
    two-point form of the nonlinearity.  Bilinear in ``(v, w)`` and bounded by
    ``max |ddpi| * |v(x)-v(y)| * |w(x)-w(y)| / 2``.
    """
    tau, gw = _chord_rule(order)
    tensor, flagged = _chord_hessian_integral(
        manifold, u.values, tau, gw * (1.0 - tau)
    )
    dv = v.values[:, None, :] - v.values[None, :, :]
    dw = w.values[:, None, :] - w.values[None, :, :]
    samples = np.einsum("xyijk,xyj,xyk->xyi", tensor, dv, dw)
    samples[flagged] = 0.0
    return OffDiagKernel(u.grid, samples, None, flagged)


def chord_taylor_residual(
    manifold: Manifold, u: GridFunction, order: int = DEFAULT_CHORD_ORDER
) -> OffDiagKernel:
    """Residual of the chord expansion of the projection on on-manifold data.

    For ``u`` with values on the target,

    ``u(x) - u(y) - dpi(u(y)) (u(x) - u(y)) - K(x, y)``

    with ``K`` from :func:`hessian_chord_form` vanishes up to chord-quadrature
    and jet error.  Pairs whose chord leaves the safe tube are flagged (the
    identity genuinely fails through the singular set of the projection) and
    excluded from the returned samples.
    """
    A = hessian_chord_form(manifold, u, u, u, order)
    du = u.values[:, None, :] - u.values[None, :, :]
    dpi_y = manifold.tangent_projector(u.values)  # (M, n, n) at y
    tangential = np.einsum("yij,xyj->xyi", dpi_y, du)
    res = du - tangential - A.samples
    res[A.flagged] = 0.0
    idx = np.arange(u.grid.M)
    res[idx, idx] = 0.0
    return OffDiagKernel(u.grid, res, None, A.flagged)


def hessian_chord_mean(
    manifold: Manifold, u: GridFunction, order: int = DEFAULT_CHORD_ORDER
) -> OffDiagKernel:
    """Unweighted chord mean of the projection Hessian (tensor-valued kernel).

    ``B(x, y) = int_0^1 ddpi((1-s) u(y) + s u(x)) ds``; bounded by the tube
    supremum of ``|ddpi|``, symmetric under exchanging x and y, and satisfying
    ``d(dpi o u)(x, y) = B(x, y) . (u(x) - u(y))``.
    """
    tau, gw = _chord_rule(order)
    tensor, flagged = _chord_hessian_integral(manifold, u.values, tau, gw)
    return OffDiagKernel(u.grid, tensor, None, flagged)


def antisymmetric_potential(manifold: Manifold, u: GridFunction) -> OffDiagKernel:
    """Antisymmetric matrix kernel driving the compensation structure.

    ``Omega_jk(x, y) = dpi(u(y))_ik D_ij(x, y) - dpi(u(y))_ij D_ik(x, y)``
    where ``D`` is the half-order gradient kernel of the normal projector
    field ``x -> Id - dpi(u(x))``.  Exactly antisymmetric in ``(j, k)`` by
    construction; vanishes identically for constant ``u``.
    """
    dpi_nodes = manifold.tangent_projector(u.values)
    perp = np.eye(u.n) - dpi_nodes
    D = frac_gradient(GridFunction(u.grid, perp), 0.5)
    samples = np.einsum("yik,xyij->xyjk", dpi_nodes, D.samples) - np.einsum(
        "yij,xyik->xyjk", dpi_nodes, D.samples
    )
    diag = np.einsum("xik,xij->xjk", dpi_nodes, D.diag) - np.einsum(
        "xij,xik->xjk", dpi_nodes, D.diag
    )
    return OffDiagKernel(u.grid, samples, diag)


@dataclass
class RemainderTerms:
    """Lower-order terms of the rewritten nonlinearity.

    ``divergence_part`` is the fractional divergence of the curvature kernel
    projected onto the normal bundle at ``y`` (also available weakly through
    :func:`remainder_divergence_functional`); ``hessian_part`` pairs the
    normal-projector gradient with the curvature kernel; ``projector_part``
    pairs it with the tangential gradient at the base point.  All three vanish
    for constant maps.
    """

    divergence_part: GridFunction
    hessian_part: GridFunction
    projector_part: GridFunction
    flagged_fraction: float = 0.0


def _perp_gradient_kernel(manifold: Manifold, u: GridFunction):
    dpi_nodes = manifold.tangent_projector(u.values)
    perp = np.eye(u.n) - dpi_nodes
    return dpi_nodes, perp, frac_gradient(GridFunction(u.grid, perp), 0.5)


def curvature_divergence_kernel(
    manifold: Manifold,
    u: GridFunction,
    v: GridFunction | None = None,
    w: GridFunction | None = None,
    order: int = DEFAULT_CHORD_ORDER,
    _A: OffDiagKernel | None = None,
) -> OffDiagKernel:
    """Kernel ``A_i(x,y) dpi_perp(u(y))_ij / |x-y|^(1/2)``.

    Its fractional divergence is the lower-order divergence term of the flow;
    the kernel vanishes to second order at the diagonal, so no diagonal slope
    is attached.
    """
    v = u if v is None else v
    w = u if w is None else w
    A = hessian_chord_form(manifold, u, v, w, order) if _A is None else _A
    _, perp, _ = _perp_gradient_kernel(manifold, u)
    sqrt_rho = np.sqrt(u.grid.chord_matrix_safe)
    samples = np.einsum("xyi,yij->xyj", A.samples, perp) / sqrt_rho[..., None]
    idx = np.arange(u.grid.M)
    samples[idx, idx] = 0.0
    return OffDiagKernel(u.grid, samples, None, A.flagged)


def remainder_divergence_functional(
    manifold: Manifold,
    u: GridFunction,
    v: GridFunction,
    w: GridFunction,
    phi: GridFunction,
    order: int = DEFAULT_CHORD_ORDER,
) -> float:
    """Weak form of the divergence remainder tested against ``phi``.

    Evaluates ``int int (A(dv, dw)(x,y) / |x-y|^(1/2)) dpi_perp(u(y))
    d_(1/2) phi(x,y) dmu_od`` with the punctured off-diagonal measure.  By the
    transpose construction of :func:`halfflow.offdiag.frac_divergence` this
    agrees with testing the pointwise form against ``phi`` to rounding.
    """
    from .offdiag import od_inner_product

    F = curvature_divergence_kernel(manifold, u, v, w, order)
    return od_inner_product(F, frac_gradient(phi, 0.5))


def remainder_terms(
    manifold: Manifold,
    u: GridFunction,
    v: GridFunction | None = None,
    w: GridFunction | None = None,
    order: int = DEFAULT_CHORD_ORDER,
) -> RemainderTerms:
    """Assemble the three remainder fields of the rewritten equation.

    With ``D`` the half-order gradient of the normal projector field,
    ``A`` the curvature kernel and ``dpi/dpi_perp`` the nodal projectors:

    * divergence part: ``div_(1/2) ( A(dv, dw) dpi_perp(u(y)) / |x-y|^(1/2) )``
      evaluated in the pointwise symmetrized form;
    * hessian part: ``int D_ij A_i dy / |x-y|^(3/2)``;
    * projector part: ``- int d_(1/2)(dpi o u)_ij dpi_perp(u(x))_ik d_(1/2)u_k
      dy / |x-y|``.
    """
    v = u if v is None else v
    w = u if w is None else w
    grid = u.grid
    dpi_nodes, perp, D = _perp_gradient_kernel(manifold, u)

    A = hessian_chord_form(manifold, u, v, w, order)
    F = curvature_divergence_kernel(manifold, u, v, w, order, _A=A)
    divergence_part = frac_divergence(F, 0.5)

    sqrt_rho = np.sqrt(grid.chord_matrix_safe)
    A_scaled = OffDiagKernel(
        grid, A.samples / sqrt_rho[..., None], None, A.flagged
    )
    hessian_part = od_contract(A_scaled, D, 1)

    # projector part: kernel -d_(1/2)(dpi o u) contracted against
    # dpi_perp(u(x)) and d_(1/2)u; diagonal slope from the nodal fields.
    d_dpi = frac_gradient(GridFunction(grid, dpi_nodes), 0.5)
    du = frac_gradient(u, 0.5)
    K = -np.einsum("xyij,xik,xyk->xyj", d_dpi.samples, perp, du.samples)
    diag = -np.einsum("xij,xik,xk->xj", d_dpi.diag, perp, du.diag)
    projector_part = od_integrate(OffDiagKernel(grid, K, diag))

    return RemainderTerms(
        divergence_part=divergence_part,
        hessian_part=hessian_part,
        projector_part=projector_part,
        flagged_fraction=A.flagged_fraction,
    )


def quadratic_form_tensor(
    manifold: Manifold, p: np.ndarray, q: np.ndarray, order: int = DEFAULT_CHORD_ORDER
) -> np.ndarray:
    """Coefficients of the quadratic nonlinearity for one point pair.

    ``P_j^{kl}(p, q) = - int_0^1 (1 - sigma) ddpi_j(sigma q + (1 - sigma) p)
    dsigma``, symmetrized over ``(k, l)`` since it is contracted against the
    symmetric product of gradient components.  For ``p = q`` on the target the
    value is ``-ddpi(p) / 2``.
    """
    tau, gw = _chord_rule(order)
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    out = np.zeros(p.shape + (p.shape[-1],) * 2)
    for t, w in zip(tau, gw):
        point = t * q + (1.0 - t) * p
        out -= w * (1.0 - t) * manifold.projection_hessian(point)
    return 0.5 * (out + np.swapaxes(out, -1, -2))


def quadratic_form_kernel(
    manifold: Manifold, u: GridFunction, order: int = DEFAULT_CHORD_ORDER
) -> OffDiagKernel:
    """Two-point kernel ``sum_kl P^{kl}(u(x), u(y)) d_(1/2)u_k d_(1/2)u_l``.

    The diagonal limit ``-ddpi(u(x)) (u'(x), u'(x)) / 2`` is attached so the
    principal-value pairing integrates its smooth extension.
    """
    tau, gw = _chord_rule(order)
    # accumulates -(1 - sigma) ddpi at sigma u(y) + (1 - sigma) u(x)
    tensor, flagged = _chord_hessian_integral(
        manifold, u.values, 1.0 - tau, -gw * (1.0 - tau)
    )
    du = u.values[:, None, :] - u.values[None, :, :]
    samples = (
        np.einsum("xyjkl,xyk,xyl->xyj", tensor, du, du)
        / u.grid.chord_matrix_safe[..., None]
    )
    samples[flagged] = 0.0
    up = spectral_derivative(u).values
    ddpi_nodes = manifold.projection_hessian(u.values)
    diag = -0.5 * np.einsum("xjkl,xk,xl->xj", ddpi_nodes, up, up)
    return OffDiagKernel(u.grid, samples, diag, flagged)


@dataclass
class HypersurfaceObjects:
    """Chord objects of the codimension-one formulation.

    ``normal_jacobian_mean`` is the chord mean of the extended normal field's
    Jacobian; ``normal_average`` the two-point average of the normal;
    ``normal_speed`` the scalar factor multiplying the normal in the flow.
    """

    normal_jacobian_mean: OffDiagKernel
    normal_average: OffDiagKernel
    normal_speed: GridFunction


def hypersurface_objects(
    manifold: Manifold, u: GridFunction, order: int = DEFAULT_CHORD_ORDER
) -> HypersurfaceObjects:
    """Assemble the normal-field chord objects and the normal speed factor.

    The speed factor combines the pairing of the map gradient with the
    gradient of the composed normal field and the fractional divergence of the
    gradient paired with the averaged normal, scaled by the duality constant
    so that ``normal_speed * normal`` matches the projection-form right-hand
    side on the target.
    """
    if not manifold.is_hypersurface:
        raise NotAHypersurface(f"{manifold.name} is not a hypersurface")
    from .offdiag import duality_constant

    grid = u.grid
    tau, gw = _chord_rule(order)

    M, n = u.values.shape
    mean = np.zeros((M, M, n, n))
    ok = np.ones((M, M), dtype=bool)
    anchor = manifold.project_unchecked(u.values[:1])
    for t, w in zip(tau, gw):
        p = (1.0 - t) * u.values[None, :, :] + t * u.values[:, None, :]
        good = manifold.in_safe_tube(p)
        ok &= good
        safe = np.where(good[..., None], p, anchor[0])
        mean += w * np.where(good[..., None, None], manifold.normal_jacobian(safe), 0.0)
    np.fill_diagonal(ok, True)
    flagged = ~ok
    mean[flagged] = 0.0
    jac_mean = OffDiagKernel(grid, mean, None, flagged)

    nu_nodes = manifold.normal(u.values)
    avg = 0.5 * (nu_nodes[:, None, :] + nu_nodes[None, :, :])
    idx = np.arange(M)
    normal_average = OffDiagKernel(grid, avg, nu_nodes)

    du = frac_gradient(u, 0.5)
    d_nu = frac_gradient(GridFunction(grid, nu_nodes), 0.5)
    pairing = od_pairing(du, d_nu)

    scalar = np.einsum("xyi,xyi->xy", du.samples, avg)
    scalar[idx, idx] = 0.0
    div_term = frac_divergence(OffDiagKernel(grid, scalar), 0.5)

    C_dual = duality_constant(0.5, grid.M)
    speed = GridFunction(grid, (pairing.values + div_term.values) / C_dual)
    return HypersurfaceObjects(jac_mean, normal_average, speed)
