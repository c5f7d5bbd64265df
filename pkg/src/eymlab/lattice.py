"""Periodic grids on flat tori and Fourier-spectral calculus on scalar data.

All fields in this package live on a uniform lattice of T^n = R^n / (L_1 Z x
... x L_n Z).  Differentiation is Fourier-spectral (FFT, multiply by i*k,
inverse FFT) with the Nyquist mode zeroed, so d^2 = 0 and the discrete
divergence theorem hold to machine precision and any residual defect in the
higher-level identities isolates a formula error rather than a discretization
artifact.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from typing import TYPE_CHECKING

import numpy as np

if TYPE_CHECKING:
    from .fields import MetricField


class GridMismatchError(ValueError):
    """Fields living on different grids were combined."""


@dataclass(frozen=True)
class Grid:
    """Uniform periodic lattice: per-axis site counts and periods.

    Site counts must be even and >= 4 so that real spectral derivatives are
    well defined (the Nyquist mode carries no usable derivative information
    and is dropped).
    """

    sizes: tuple[int, ...]
    lengths: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "sizes", tuple(int(s) for s in self.sizes))
        object.__setattr__(self, "lengths", tuple(float(x) for x in self.lengths))
        if len(self.sizes) not in (2, 3, 4):
            raise ValueError(f"grid dimension must be 2, 3 or 4, got {len(self.sizes)}")
        if len(self.lengths) != len(self.sizes):
            raise ValueError("sizes and lengths must have equal length")
        for s in self.sizes:
            if s < 4 or s % 2 != 0:
                raise ValueError(f"site counts must be even and >= 4, got {s}")
        for x in self.lengths:
            if not x > 0:
                raise ValueError(f"periods must be positive, got {x}")

    @property
    def n(self) -> int:
        return len(self.sizes)

    @property
    def nsites(self) -> int:
        return int(np.prod(self.sizes))

    @property
    def spacings(self) -> tuple[float, ...]:
        return tuple(L / N for N, L in zip(self.sizes, self.lengths))

    @property
    def site_volume(self) -> float:
        return float(np.prod(self.spacings))

    def axis_coordinates(self, axis: int) -> np.ndarray:
        N, L = self.sizes[axis], self.lengths[axis]
        return np.arange(N) * (L / N)

    def coordinate_mesh(self) -> list[np.ndarray]:
        """Per-axis coordinate arrays, each broadcast to the full site shape."""
        axes = [self.axis_coordinates(i) for i in range(self.n)]
        return list(np.meshgrid(*axes, indexing="ij"))

    def wavenumbers(self, axis: int) -> np.ndarray:
        """Angular wavenumbers 2*pi*m/L along an axis, FFT ordering."""
        N, L = self.sizes[axis], self.lengths[axis]
        return 2.0 * np.pi * np.fft.fftfreq(N, d=L / N)


@dataclass(frozen=True)
class ScalarField:
    """Real scalar samples, one value per site (row-major site order)."""

    grid: Grid
    values: np.ndarray

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        if vals.shape != self.grid.sizes:
            raise ValueError(f"scalar shape {vals.shape} != grid {self.grid.sizes}")
        object.__setattr__(self, "values", vals)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values + other.values)

    def __sub__(self, other: "ScalarField") -> "ScalarField":
        _check_same_grid(self.grid, other.grid)
        return ScalarField(self.grid, self.values - other.values)

    def __mul__(self, c: float) -> "ScalarField":
        return ScalarField(self.grid, self.values * c)

    __rmul__ = __mul__


def _check_same_grid(a: Grid, b: Grid):
    if a != b:
        raise GridMismatchError(f"grid mismatch: {a} vs {b}")


@lru_cache(maxsize=64)
def _derivative_multiplier(sizes: tuple, lengths: tuple, axis: int) -> np.ndarray:
    g = Grid(sizes, lengths)
    mult = 1j * g.wavenumbers(axis)
    mult[g.sizes[axis] // 2] = 0.0  # Nyquist mode has no odd derivative
    return mult.reshape([1] * axis + [g.sizes[axis]] + [1] * (g.n - axis - 1))


def partial_array(values: np.ndarray, grid: Grid, axis: int) -> np.ndarray:
    """Spectral partial derivative along a site axis of an arbitrary array.

    The array may carry trailing component axes; the site axes are assumed to
    come first and match the grid shape.
    """
    if not 0 <= axis < grid.n:
        raise ValueError(f"axis {axis} out of range for dimension {grid.n}")
    mult = _derivative_multiplier(grid.sizes, grid.lengths, axis)
    extra = values.ndim - grid.n
    mult = mult.reshape(mult.shape + (1,) * extra)
    spec = np.fft.fft(values, axis=axis)
    return np.fft.ifft(mult * spec, axis=axis).real


def grad_array(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Stack of all spectral partials; the new derivative axis sits right
    after the site axes."""
    return np.stack([partial_array(values, grid, ax) for ax in range(grid.n)],
                    axis=grid.n)


def spectral_partial(f: ScalarField, axis: int) -> ScalarField:
    """Fourier-spectral derivative of a scalar field along one axis."""
    return ScalarField(f.grid, partial_array(f.values, f.grid, axis))


def integrate(f: ScalarField, g: "MetricField | None" = None) -> float:
    """Integral of f against the Riemannian volume density.

    The quadrature is the plain product rectangle rule, which is exact for
    trigonometric polynomials below the Nyquist frequency on a periodic grid.
    With g omitted the flat unit metric is used.
    """
    if g is None:
        return float(np.sum(f.values) * f.grid.site_volume)
    _check_same_grid(f.grid, g.grid)
    return float(np.sum(f.values * g.sqrt_det) * f.grid.site_volume)


def integrate_values(values: np.ndarray, grid: Grid,
                     weight: np.ndarray | None = None) -> float:
    """Array-level quadrature used by the inner-product helpers."""
    if weight is None:
        return float(np.sum(values) * grid.site_volume)
    return float(np.sum(values * weight) * grid.site_volume)
