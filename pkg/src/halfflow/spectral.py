"""Grid functions and Fourier-side operators on the circle.

Conventions
-----------
The Fourier coefficient of a sampled function is ``c(k) = fft(f)/M``, i.e.
``f(x_j) = sum_k c(k) exp(i k x_j)`` with integer wavenumbers ``k`` in
``{-M/2, ..., M/2 - 1}``.  The fractional Laplacian acts as the multiplier
``|k|^(2s)`` and annihilates the mean.  The Riesz-Hilbert transform uses the
multiplier ``-i sign(k)``; together with the spectral derivative (multiplier
``i k``, Nyquist zeroed) this makes ``riesz(d/dx f)`` equal to the
half-Laplacian exactly in the discretization.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .grid import CircleGrid

__all__ = [
    "GridFunction",
    "SpectralField",
    "to_spectral",
    "from_spectral",
    "frac_laplacian_spectral",
    "spectral_derivative",
    "riesz_transform",
    "riesz_commutator",
    "half_dirichlet_energy",
    "random_band_limited",
]


@dataclass(eq=False)
class GridFunction:
    """Real samples of a function on a :class:`CircleGrid`.

    ``values`` has shape ``(M, *value_shape)``: scalar fields are ``(M,)``,
    maps into R^n are ``(M, n)``, matrix fields ``(M, n, n)``.  Arithmetic is
    pointwise over nodes.  Instances are treated as immutable.
    """

    grid: CircleGrid
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim == 0 or v.shape[0] != self.grid.M:
            raise ValueError(
                f"values must have leading dimension M={self.grid.M}, got shape {v.shape}"
            )
        if not np.all(np.isfinite(v)):
            raise ValueError("grid function values must be finite")
        self.values = v

    @property
    def value_shape(self) -> tuple:
        return self.values.shape[1:]

    @property
    def n(self) -> int:
        """Ambient dimension of a vector-valued field (1 for scalars)."""
        return int(self.values.shape[1]) if self.values.ndim > 1 else 1

    def component(self, i: int) -> "GridFunction":
        return GridFunction(self.grid, self.values[:, i])

    def __add__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values + other.values)

    def __sub__(self, other):
        self._check(other)
        return GridFunction(self.grid, self.values - other.values)

    def __mul__(self, c):
        return GridFunction(self.grid, self.values * float(c))

    __rmul__ = __mul__

    def __neg__(self):
        return GridFunction(self.grid, -self.values)

    def _check(self, other):
        if not isinstance(other, GridFunction) or other.grid != self.grid:
            raise ValueError("grid functions live on different grids")
        if other.values.shape != self.values.shape:
            raise ValueError(
                f"shape mismatch: {self.values.shape} vs {other.values.shape}"
            )

    def l2_norm(self) -> float:
        """Discrete L^2 norm, ``sqrt(h * sum |f(x_j)|^2)``."""
        return float(np.sqrt(self.grid.h * np.sum(self.values**2)))


@dataclass(eq=False)
class SpectralField:
    """Complex Fourier coefficients of a grid function, in FFT order.

    For real-valued fields the coefficients satisfy conjugate symmetry
    ``c(-k) = conj(c(k))``; the pair ``to_spectral`` / ``from_spectral`` is an
    exact inverse pair up to rounding.
    """

    grid: CircleGrid
    coefficients: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coefficients, dtype=complex)
        if c.ndim == 0 or c.shape[0] != self.grid.M:
            raise ValueError(
                f"coefficients must have leading dimension M={self.grid.M}, got {c.shape}"
            )
        self.coefficients = c


def to_spectral(f: GridFunction) -> SpectralField:
    """Forward discrete Fourier transform, one coefficient set per component."""
    return SpectralField(f.grid, np.fft.fft(f.values, axis=0) / f.grid.M)


def from_spectral(c: SpectralField) -> GridFunction:
    """Inverse transform back to node samples (real part)."""
    return GridFunction(c.grid, np.real(np.fft.ifft(c.coefficients * c.grid.M, axis=0)))


def _apply_multiplier(values: np.ndarray, grid: CircleGrid, mult: np.ndarray) -> np.ndarray:
    shape = (grid.M,) + (1,) * (values.ndim - 1)
    out = np.fft.ifft(mult.reshape(shape) * np.fft.fft(values, axis=0), axis=0)
    return np.real(out)


def frac_laplacian_spectral(f: GridFunction, s: float) -> GridFunction:
    """Fractional Laplacian as the Fourier multiplier ``|k|^(2s)``.

    The mean (k = 0) is annihilated; the operator is linear, positive
    semidefinite and self-adjoint for the discrete L^2 pairing.
    """
    if not 0.0 < s <= 1.0:
        raise ValueError(f"order s must lie in (0, 1], got {s}")
    mult = np.abs(f.grid.wavenumbers) ** (2.0 * s)
    return GridFunction(f.grid, _apply_multiplier(f.values, f.grid, mult))


def spectral_derivative(f: GridFunction) -> GridFunction:
    """Spectral d/dx; the Nyquist mode is zeroed to preserve realness."""
    grid = f.grid
    mult = 1j * grid.wavenumbers
    mult = mult.copy()
    mult[grid.M // 2] = 0.0
    return GridFunction(grid, _apply_multiplier(f.values, grid, mult))


def riesz_transform(f: GridFunction) -> GridFunction:
    """Riesz-Hilbert transform, multiplier ``-i sign(k)``, mean annihilated.

    The sign convention is fixed so that ``riesz(spectral_derivative(f))``
    equals ``frac_laplacian_spectral(f, 1/2)`` on mean-free data; the Nyquist
    mode is zeroed as in the derivative.
    """
    grid = f.grid
    mult = -1j * np.sign(grid.wavenumbers)
    mult = mult.copy()
    mult[grid.M // 2] = 0.0
    return GridFunction(grid, _apply_multiplier(f.values, grid, mult))


def _pointwise_product(a: GridFunction, b: GridFunction) -> np.ndarray:
    """Node-wise ``a @ b`` for matrix-times-vector fields, or plain product."""
    va, vb = a.values, b.values
    if va.ndim == vb.ndim + 1:
        if va.shape[-1] != vb.shape[-1]:
            raise ValueError(f"shape mismatch: {va.shape} against {vb.shape}")
        return np.einsum("x...ij,x...j->x...i", va, vb)
    if va.shape != vb.shape:
        raise ValueError(f"shape mismatch: {va.shape} against {vb.shape}")
    return va * vb


def riesz_commutator(a: GridFunction, b: GridFunction) -> GridFunction:
    """Commutator ``riesz(a * grad b) - a * halfLaplacian(b)``.

    ``a`` may be scalar (paired with scalar ``b``) or matrix-valued
    ``(M, n, n)`` acting on a vector field ``b`` of shape ``(M, n)``.  The
    expression is bilinear and vanishes identically when either argument is
    constant.
    """
    grad_b = spectral_derivative(b)
    lap_b = frac_laplacian_spectral(b, 0.5)
    inner = GridFunction(a.grid, _pointwise_product(a, grad_b))
    return GridFunction(
        a.grid, riesz_transform(inner).values - _pointwise_product(a, lap_b)
    )


def half_dirichlet_energy(u: GridFunction) -> float:
    """Fractional Dirichlet energy ``1/2 * int |(-Lap)^(1/4) u|^2 dx``.

    Evaluated spectrally as ``pi * sum_k |k| |c(k)|^2`` summed over
    components; exact for band-limited data.
    """
    c = np.fft.fft(u.values, axis=0) / u.grid.M
    k = np.abs(u.grid.wavenumbers)
    shape = (u.grid.M,) + (1,) * (u.values.ndim - 1)
    return float(np.pi * np.sum(k.reshape(shape) * np.abs(c) ** 2))


def random_band_limited(
    grid: CircleGrid,
    rng: np.random.Generator,
    kmax: int = 5,
    decay: float = 1.5,
    value_shape: tuple = (),
) -> GridFunction:
    """Seeded smooth random field from Fourier modes ``1..kmax``.

    Mode amplitudes are drawn i.i.d. normal and damped by ``k**-decay``; the
    result is mean-free, real, and free of Nyquist content, which keeps every
    algebraic multiplier identity exact on it.
    """
    if kmax >= grid.M // 2:
        raise ValueError("kmax must stay below the Nyquist wavenumber")
    x = grid.nodes
    vals = np.zeros((grid.M,) + value_shape)
    for k in range(1, kmax + 1):
        a = rng.normal(size=value_shape) / k**decay
        b = rng.normal(size=value_shape) / k**decay
        vals += np.cos(k * x).reshape((-1,) + (1,) * len(value_shape)) * a
        vals += np.sin(k * x).reshape((-1,) + (1,) * len(value_shape)) * b
    return GridFunction(grid, vals)
