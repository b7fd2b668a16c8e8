"""Uniform periodic grid on the unit circle with the chord metric.

All quadratures, kernels and spectral transforms in this package share one
discretization: ``M`` equispaced angles on ``[0, 2*pi)`` together with the
chord distance ``2|sin((x - y)/2)|``.  A :class:`CircleGrid` is immutable
after construction and safe to share between threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

TWO_PI = 2.0 * np.pi

__all__ = ["CircleGrid", "build_grid", "chord_distance", "canonical_angle"]


def canonical_angle(theta):
    """Reduce angles to the canonical representative in ``[0, 2*pi)``."""
    return np.mod(theta, TWO_PI)


def chord_distance(x, y):
    """Chord distance between two angles on the unit circle.

    Parameters
    ----------
    x, y : float or ndarray
        Angles in radians; reduced mod ``2*pi`` internally.

    Returns
    -------
    float or ndarray
        ``2 |sin((x - y)/2)|``, symmetric, in ``[0, 2]``.
    """
    d = canonical_angle(x) - canonical_angle(y)
    return 2.0 * np.abs(np.sin(0.5 * d))


@dataclass(eq=False)
class CircleGrid:
    """Equispaced periodic grid ``x_j = 2*pi*j/M`` with spacing ``h = 2*pi/M``.

    ``M`` must be even and at least 8 so that antipodal node pairs exist and
    FFT sizes stay clean.  Instances are treated as immutable; cached chord
    tables are shared by every operator built on the grid.
    """

    M: int
    nodes: np.ndarray = field(init=False, repr=False)
    h: float = field(init=False)

    def __post_init__(self):
        if not isinstance(self.M, (int, np.integer)):
            raise ValueError(f"node count must be an integer, got {self.M!r}")
        self.M = int(self.M)
        if self.M % 2 != 0:
            raise ValueError(f"node count must be even, got M={self.M}")
        if self.M < 8:
            raise ValueError(f"node count must be at least 8, got M={self.M}")
        self.nodes = TWO_PI * np.arange(self.M) / self.M
        self.nodes.setflags(write=False)
        self.h = TWO_PI / self.M

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer Fourier wavenumbers in FFT order, k in {-M/2, .., M/2-1}."""
        k = np.fft.fftfreq(self.M, d=1.0 / self.M)
        k.setflags(write=False)
        return k

    @cached_property
    def chord_matrix(self) -> np.ndarray:
        """Pairwise chord distances, shape (M, M), zero on the diagonal."""
        d = chord_distance(self.nodes[:, None], self.nodes[None, :])
        np.fill_diagonal(d, 0.0)
        d.setflags(write=False)
        return d

    @cached_property
    def chord_matrix_safe(self) -> np.ndarray:
        """Chord distances with the diagonal set to 1 (safe denominator)."""
        d = self.chord_matrix.copy()
        np.fill_diagonal(d, 1.0)
        d.setflags(write=False)
        return d

    @cached_property
    def chord_offsets(self) -> np.ndarray:
        """Chord distance for index offsets m = 0..M-1 (offset 0 maps to 0)."""
        d = chord_distance(TWO_PI * np.arange(self.M) / self.M, 0.0)
        d[0] = 0.0
        d.setflags(write=False)
        return d

    def chord_ball_mask(self, center: float, radius: float) -> np.ndarray:
        """Boolean node mask of the chord-metric ball around ``center``."""
        return chord_distance(self.nodes, center) < radius

    def __eq__(self, other):
        return isinstance(other, CircleGrid) and other.M == self.M

    def __hash__(self):
        return hash(("CircleGrid", self.M))


def build_grid(M: int) -> CircleGrid:
    """Build the uniform periodic grid with ``M`` nodes (even, >= 8)."""
    return CircleGrid(M)
