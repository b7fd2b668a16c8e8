"""Two-point kernels on the circle and the fractional gradient calculus.

An :class:`OffDiagKernel` stores samples ``K[i, j] ~ F(x_i, x_j)`` of a
two-variable function that is integrated against the off-diagonal measure
``dy / |x - y|`` (chord distance).  The measure weight is applied only at
pairing and divergence time, never baked into the samples.

Diagonal handling
-----------------
For kernels of two-point-difference type at order ``s = 1/2`` the pairing
integrand ``F(x, y) G(x, y) / |x - y|`` extends smoothly across the diagonal
with limit ``f'(x) g'(x)``.  Each kernel therefore optionally carries a
``diag`` slope field (the spectral derivative of its generating node field);
the pairing adds the single diagonal node contribution ``h * diag_F * diag_G``.
This turns the punctured sum into a full periodic trapezoid rule on smooth
integrands, which lifts the quadrature order substantially at trivial cost.

Unspecified constants
---------------------
The continuum identities relating the singular integral, the duality pairing
and the spectral operator hold only up to constants.  This artifact pins one
convention by eigenfunction calibration on ``cos(x)``: see
:func:`calibrate_constant` (singular-integral constant ``C_disc``) and
:func:`duality_constant` (``C_dual``).  Both are cached per ``(s, M)`` and
recorded in run manifests.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .grid import CircleGrid, build_grid
from .spectral import (
    GridFunction,
    frac_laplacian_spectral,
    riesz_transform,
    riesz_commutator,
    spectral_derivative,
)

__all__ = [
    "OffDiagKernel",
    "frac_gradient",
    "od_pairing",
    "od_contract",
    "od_integrate",
    "od_norm",
    "frac_divergence",
    "od_inner_product",
    "frac_laplacian_singular",
    "calibrate_constant",
    "duality_constant",
    "calibration_entry",
    "leibniz_residual",
    "product_rule_residual",
    "commutator_identity_residual",
    "gagliardo_seminorm",
]


@dataclass(eq=False)
class OffDiagKernel:
    """Sampled two-point kernel ``K[i, j] ~ F(x_i, x_j)``.

    Parameters
    ----------
    grid : CircleGrid
    samples : ndarray, shape (M, M, *value_shape)
        Diagonal entries are zero by convention.
    diag : ndarray or None, shape (M, *value_shape)
        Slope field giving the diagonal limit of pairing integrands (see
        module docstring); ``None`` means the limit vanishes.
    flagged : ndarray or None, shape (M, M) bool
        Pairs excluded from quadratures because a chord evaluation left the
        evaluable neighbourhood of the target manifold.  Flagged samples are
        zeroed.
    """

    grid: CircleGrid
    samples: np.ndarray
    diag: np.ndarray | None = None
    flagged: np.ndarray | None = None

    def __post_init__(self):
        s = np.asarray(self.samples, dtype=float)
        M = self.grid.M
        if s.shape[:2] != (M, M):
            raise ValueError(f"samples must have shape (M, M, ...), got {s.shape}")
        self.samples = s

    @property
    def value_shape(self) -> tuple:
        return self.samples.shape[2:]

    @property
    def flagged_fraction(self) -> float:
        if self.flagged is None:
            return 0.0
        return float(np.mean(self.flagged))

    def transpose_pair(self) -> "OffDiagKernel":
        """Kernel with the roles of x and y exchanged."""
        order = (1, 0) + tuple(range(2, self.samples.ndim))
        return OffDiagKernel(
            self.grid,
            np.transpose(self.samples, order),
            None,
            None if self.flagged is None else self.flagged.T,
        )

    def scale_at_x(self, field: np.ndarray) -> "OffDiagKernel":
        """Multiply samples (and diagonal slope) by a node field at x."""
        return OffDiagKernel(
            self.grid,
            self.samples * field[:, None, ...],
            None if self.diag is None else self.diag * field,
            self.flagged,
        )

    def scale_at_y(self, field: np.ndarray) -> "OffDiagKernel":
        """Multiply samples by a node field at y (diagonal uses y = x)."""
        return OffDiagKernel(
            self.grid,
            self.samples * field[None, :, ...],
            None if self.diag is None else self.diag * field,
            self.flagged,
        )

    def __add__(self, other: "OffDiagKernel") -> "OffDiagKernel":
        if other.grid != self.grid:
            raise ValueError("kernels live on different grids")
        diag = None
        if self.diag is not None or other.diag is not None:
            a = self.diag if self.diag is not None else 0.0
            b = other.diag if other.diag is not None else 0.0
            diag = a + b
        flagged = _merge_flags(self.flagged, other.flagged)
        return OffDiagKernel(self.grid, self.samples + other.samples, diag, flagged)

    def __neg__(self):
        return OffDiagKernel(
            self.grid,
            -self.samples,
            None if self.diag is None else -self.diag,
            self.flagged,
        )


def _merge_flags(a, b):
    if a is None:
        return b
    if b is None:
        return a
    return a | b


def frac_gradient(f: GridFunction, s: float) -> OffDiagKernel:
    """Fractional gradient kernel ``(f(x) - f(y)) / |x - y|^s``.

    Antisymmetric by construction with zero diagonal.  For ``s = 1/2`` the
    diagonal slope field (spectral derivative of ``f``) is attached so that
    pairings integrate their smooth limit exactly; for other orders the
    pairing integrand vanishes or is not finite on the diagonal and no slope
    is stored.
    """
    if not 0.0 <= s < 1.0:
        raise ValueError(f"gradient order s must lie in [0, 1), got {s}")
    grid = f.grid
    rho = grid.chord_matrix_safe ** s
    diff = f.values[:, None, ...] - f.values[None, :, ...]
    shape = rho.shape + (1,) * (f.values.ndim - 1)
    samples = diff / rho.reshape(shape)
    idx = np.arange(grid.M)
    samples[idx, idx] = 0.0
    diag = spectral_derivative(f).values if s == 0.5 else None
    return OffDiagKernel(grid, samples, diag)


def _value_axes(kernel: OffDiagKernel) -> int:
    return kernel.samples.ndim - 2


def od_contract(F: OffDiagKernel, G: OffDiagKernel, axes: int) -> GridFunction:
    """Integrate ``sum F_(a..) G_(a.. rest)`` against ``h / |x - y|``.

    Contracts the first ``axes`` value axes of both kernels (the trailing
    axes of ``G`` survive) and adds the diagonal-limit node term
    ``h * diag_F . diag_G`` when both slope fields are present.
    """
    if F.grid != G.grid:
        raise ValueError("kernels live on different grids")
    grid = F.grid
    if _value_axes(F) != axes or _value_axes(G) < axes:
        raise ValueError(
            f"cannot contract {axes} axes of shapes {F.value_shape} and {G.value_shape}"
        )
    letters = "abcde"[:axes]
    rest = "mnop"[: _value_axes(G) - axes]
    expr = f"xy{letters},xy{letters}{rest}->xy{rest}"
    prod = np.einsum(expr, F.samples, G.samples)
    w = grid.h / grid.chord_matrix_safe
    np.fill_diagonal(w, 0.0)
    out = np.einsum(f"xy{rest},xy->x{rest}", prod, w) if rest else (prod * w).sum(axis=1)
    if F.diag is not None and G.diag is not None:
        out = out + grid.h * np.einsum(
            f"x{letters},x{letters}{rest}->x{rest}", F.diag, G.diag
        )
    return GridFunction(grid, out)


def od_pairing(F: OffDiagKernel, G: OffDiagKernel) -> GridFunction:
    """Full pairing ``F . G(x) = int F(x,y) G(x,y) dy / |x - y|`` per node."""
    if F.value_shape != G.value_shape:
        raise ValueError(f"value shapes differ: {F.value_shape} vs {G.value_shape}")
    return od_contract(F, G, _value_axes(F))


def od_integrate(K: OffDiagKernel) -> GridFunction:
    """Integrate a kernel against ``h / |x - y|`` in y, plus its diagonal term."""
    grid = K.grid
    w = grid.h / grid.chord_matrix_safe
    np.fill_diagonal(w, 0.0)
    shape = w.shape + (1,) * _value_axes(K)
    out = (K.samples * w.reshape(shape)).sum(axis=1)
    if K.diag is not None:
        out = out + grid.h * K.diag
    return GridFunction(grid, out)


def od_norm(F: OffDiagKernel) -> GridFunction:
    """Pointwise off-diagonal norm ``|F|(x) = sqrt(F . F (x))``."""
    p = od_pairing(F, F).values
    return GridFunction(F.grid, np.sqrt(np.maximum(p, 0.0)))


def frac_divergence(F: OffDiagKernel, s: float) -> GridFunction:
    """Fractional divergence, the discrete transpose of the gradient pairing.

    ``div_s F(x_i) = h * sum_{j != i} (F[i,j] - F[j,i]) / |x_i - x_j|^(1+s)``.
    By construction the adjointness identity

    ``sum_i div_s F(x_i) phi(x_i) h  =  sum_{i != j} F[i,j] d_s phi[i,j] h^2 / |x_i - x_j|``

    holds exactly (to rounding) for every grid function ``phi``.
    """
    if not 0.0 <= s < 1.0:
        raise ValueError(f"divergence order s must lie in [0, 1), got {s}")
    grid = F.grid
    w = 1.0 / grid.chord_matrix_safe ** (1.0 + s)
    np.fill_diagonal(w, 0.0)
    order = (1, 0) + tuple(range(2, F.samples.ndim))
    anti = F.samples - np.transpose(F.samples, order)
    shape = w.shape + (1,) * _value_axes(F)
    return GridFunction(grid, grid.h * (anti * w.reshape(shape)).sum(axis=1))


def od_inner_product(F: OffDiagKernel, G: OffDiagKernel) -> float:
    """Punctured off-diagonal inner product ``sum F G h^2 / |x - y|``.

    This is the bilinear form entering the divergence duality; it deliberately
    omits the diagonal-limit correction so the transpose identity of
    :func:`frac_divergence` is exact.
    """
    if F.grid != G.grid or F.value_shape != G.value_shape:
        raise ValueError("kernels are not compatible")
    grid = F.grid
    w = 1.0 / grid.chord_matrix_safe
    np.fill_diagonal(w, 0.0)
    axes = tuple(range(2, F.samples.ndim))
    prod = (F.samples * G.samples).sum(axis=axes) if axes else F.samples * G.samples
    return float(grid.h**2 * np.sum(prod * w))


# ---------------------------------------------------------------------------
# Punctured principal-value quadrature and calibration
# ---------------------------------------------------------------------------


def _punctured_pv(values: np.ndarray, grid: CircleGrid, s: float) -> np.ndarray:
    """``h * sum_{j != i} (f_i - f_j) / rho_ij^(1+2s)`` via circulant FFT.

    The sum runs over all offsets m = 1..M-1; offsets m and M-m pair
    symmetrically so odd singular parts cancel.
    """
    M = grid.M
    w = np.zeros(M)
    w[1:] = 1.0 / grid.chord_offsets[1:] ** (1.0 + 2.0 * s)
    total = np.sum(w)
    wh = np.fft.fft(w)
    fh = np.fft.fft(values, axis=0)
    shape = (M,) + (1,) * (values.ndim - 1)
    conv = np.real(np.fft.ifft(wh.reshape(shape) * fh, axis=0))
    return grid.h * (total * values - conv)


@lru_cache(maxsize=None)
def _pv_eigenvalue_k1(s: float, M: int) -> float:
    """Eigenvalue of the punctured PV sum on the k = 1 Fourier mode."""
    grid = build_grid(M)
    m = np.arange(1, M)
    rho = grid.chord_offsets[1:]
    return float(grid.h * np.sum((1.0 - np.cos(m * grid.h)) / rho ** (1.0 + 2.0 * s)))


def calibrate_constant(s: float, M: int) -> float:
    """Discrete singular-integral constant ``C_disc(s, M)``.

    Chosen so that the calibrated punctured quadrature applied to ``cos(x)``
    reproduces the spectral eigenvalue ``|1|^(2s)`` exactly on the k = 1 mode.
    Deterministic and cached per ``(s, M)``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"singular-integral order s must lie in (0, 1), got {s}")
    if M % 2 != 0 or M < 8:
        raise ValueError(f"node count must be even and >= 8, got {M}")
    return 1.0 / _pv_eigenvalue_k1(float(s), int(M))


@lru_cache(maxsize=None)
def _duality_constant_cached(s: float, M: int) -> float:
    grid = build_grid(M)
    f = GridFunction(grid, np.cos(grid.nodes))
    d = frac_gradient(f, s)
    lhs = grid.h * np.sum(od_pairing(d, d).values)
    half = frac_laplacian_spectral(f, s / 2.0).values
    rhs = grid.h * np.sum(half * half)
    return float(lhs / rhs)


def duality_constant(s: float, M: int) -> float:
    """Duality constant ``C_dual(s, M)`` tying the pairing to the spectrum.

    Fixed by the ``f = g = cos(x)`` case of
    ``int d_s f . d_s g dx ~= C_dual * <(-Lap)^(s/2) f, (-Lap)^(s/2) g>``.
    For ``s = 1/2`` the diagonal-corrected pairing gives ``2*pi`` to rounding.
    ``div_s(d_s f)`` equals ``C_dual * (-Lap)^s f`` up to the same quadrature
    accuracy (the punctured relation is ``2 C_disc^-1``, which agrees with
    ``C_dual`` to O(1/M)).
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"order s must lie in (0, 1), got {s}")
    return _duality_constant_cached(float(s), int(M))


def calibration_entry(s: float, M: int) -> dict:
    """Calibration record for one ``(s, M)`` pair, as stored in manifests."""
    return {
        "s": float(s),
        "M": int(M),
        "C_disc": calibrate_constant(s, M),
        "C_dual": duality_constant(s, M),
    }


def frac_laplacian_singular(f: GridFunction, s: float) -> GridFunction:
    """Fractional Laplacian by calibrated principal-value quadrature.

    Symmetric punctured-trapezoid sum over ``j != i`` with the chord
    distance, multiplied by ``C_disc(s, M)``.  Approximates
    :func:`frac_laplacian_spectral`; for smooth data at ``s = 1/2`` the
    relative error decays like ``1/M``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"singular-integral order s must lie in (0, 1), got {s}")
    C = calibrate_constant(s, f.grid.M)
    return GridFunction(f.grid, C * _punctured_pv(f.values, f.grid, s))


# ---------------------------------------------------------------------------
# Algebraic identities and their residuals
# ---------------------------------------------------------------------------


def leibniz_residual(f: GridFunction, g: GridFunction, s: float) -> OffDiagKernel:
    """Residual kernel of ``d_s(fg) = d_s f * g(x) + f(y) * d_s g``.

    The identity is algebraic, so the residual vanishes to rounding; exposed
    as a self-check of the kernel plumbing.
    """
    if f.values.ndim != 1 or g.values.ndim != 1:
        raise ValueError("pointwise Leibniz rule is stated for scalar fields")
    prod = GridFunction(f.grid, f.values * g.values)
    d_prod = frac_gradient(prod, s)
    d_f = frac_gradient(f, s)
    d_g = frac_gradient(g, s)
    res = (
        d_prod.samples
        - d_f.samples * g.values[:, None]
        - f.values[None, :] * d_g.samples
    )
    return OffDiagKernel(f.grid, res)


def product_rule_residual(f: GridFunction, g: GridFunction) -> GridFunction:
    """Residual of the half-Laplacian product rule, all terms by quadrature.

    ``(-Lap)^(1/2)(fg) - (-Lap)^(1/2)f * g - f * (-Lap)^(1/2)g
    + C_disc * (d_(1/2)f . d_(1/2)g)`` with every Laplacian evaluated through
    the calibrated singular quadrature.  The mismatch between the punctured
    Laplacian and the diagonal-corrected pairing leaves an O(h) residual
    ``C_disc * h * f'(x) g'(x)`` that refines to zero and vanishes exactly for
    constant arguments.
    """
    if f.values.ndim != 1 or g.values.ndim != 1:
        raise ValueError("product rule is stated for scalar fields")
    grid = f.grid
    C = calibrate_constant(0.5, grid.M)
    prod = GridFunction(grid, f.values * g.values)
    lap_fg = frac_laplacian_singular(prod, 0.5).values
    lap_f = frac_laplacian_singular(f, 0.5).values
    lap_g = frac_laplacian_singular(g, 0.5).values
    pair = od_pairing(frac_gradient(f, 0.5), frac_gradient(g, 0.5)).values
    return GridFunction(grid, lap_fg - lap_f * g.values - f.values * lap_g + C * pair)


def commutator_identity_residual(a: GridFunction, b: GridFunction) -> GridFunction:
    """Difference between the Riesz commutator and its rearranged form.

    The rearrangement ``C(a,b) = -C_disc * d_(1/2)a . d_(1/2)b
    - riesz(grad a * b) + (-Lap)^(1/2)a * b`` trades the convolution structure
    for the fractional-gradient pairing; the residual is pure quadrature error
    and refines to zero.  Matrix-valued ``a`` acts on vector ``b`` exactly as
    in :func:`halfflow.spectral.riesz_commutator`.
    """
    grid = a.grid
    C = calibrate_constant(0.5, grid.M)
    direct = riesz_commutator(a, b)

    d_a = frac_gradient(a, 0.5)
    d_b = frac_gradient(b, 0.5)
    if a.values.ndim == b.values.ndim + 1:
        # contract the column index of the matrix kernel with the vector one
        if b.values.ndim != 2:
            raise ValueError("matrix-valued a must act on a vector-valued b")
        swapped = OffDiagKernel(
            grid,
            np.swapaxes(d_a.samples, -1, -2),
            np.swapaxes(d_a.diag, -1, -2),
        )
        pair = od_contract(d_b, swapped, 1).values
        grad_a_b = np.einsum("xij,xj->xi", spectral_derivative(a).values, b.values)
        lap_a_b = np.einsum(
            "xij,xj->xi", frac_laplacian_spectral(a, 0.5).values, b.values
        )
    else:
        pair = od_pairing(d_a, d_b).values
        grad_a_b = spectral_derivative(a).values * b.values
        lap_a_b = frac_laplacian_spectral(a, 0.5).values * b.values
    riesz_term = riesz_transform(GridFunction(grid, grad_a_b)).values
    alt = -C * pair - riesz_term + lap_a_b
    return GridFunction(grid, direct.values - alt)


def gagliardo_seminorm(f: GridFunction, s: float, p: float, q: float) -> float:
    """Homogeneous Gagliardo-type seminorm ``|| D_(s,q) f ||_{L^p}``.

    ``D_(s,q) f(x) = (int |f(x)-f(y)|^q / |x-y|^(sq) dy/|x-y|)^(1/q)`` by the
    punctured sum; when ``q (1 - s) = 1`` (e.g. ``s = 1/2, q = 2``) the smooth
    diagonal limit ``|f'(x)|^q`` is added as one node contribution.  For
    ``s = 1/2, q = 2`` this coincides with ``|| |d_(1/2) f| ||_{L^p}``.
    Positively homogeneous of degree one in ``f``.
    """
    if not 0.0 < s < 1.0:
        raise ValueError(f"order s must lie in (0, 1), got {s}")
    if p < 1.0 or q < 1.0:
        raise ValueError(f"exponents must satisfy p, q >= 1, got p={p}, q={q}")
    grid = f.grid
    if f.values.ndim == 1:
        diff = np.abs(f.values[:, None] - f.values[None, :])
        slope = np.abs(spectral_derivative(f).values)
    else:
        diff = np.linalg.norm(f.values[:, None, :] - f.values[None, :, :], axis=-1)
        slope = np.linalg.norm(spectral_derivative(f).values, axis=-1)
    w = 1.0 / grid.chord_matrix_safe ** (1.0 + s * q)
    np.fill_diagonal(w, 0.0)
    inner = grid.h * (diff**q * w).sum(axis=1)
    if abs(q * (1.0 - s) - 1.0) < 1e-12:
        inner = inner + grid.h * slope**q
    d = inner ** (1.0 / q)
    if np.isinf(p):
        return float(d.max())
    return float((grid.h * np.sum(d**p)) ** (1.0 / p))
