"""Deterministic band-limited random fields for checks and experiments.

Everything is generated by masking white noise in Fourier space to modes of
magnitude at most kmax per axis, so products of a few factors stay below the
Nyquist frequency and the spectral identities hold at machine precision on
the test data.
"""

from __future__ import annotations

import numpy as np

from .algebra import LieAlgebraData
from .fields import DeformationPair, FormField, MetricField, SymTensorField
from .gauge import ConnectionField
from .lattice import Grid


def band_limited_array(grid: Grid, rng: np.random.Generator,
                       shape: tuple[int, ...] = (), kmax: int = 1,
                       amp: float = 1.0) -> np.ndarray:
    """Random real array on the grid with trailing component axes, containing
    only Fourier modes with |m| <= kmax along every axis, scaled to sup norm
    amp."""
    vals = rng.standard_normal(grid.sizes + shape)
    F = np.fft.fftn(vals, axes=tuple(range(grid.n)))
    for ax in range(grid.n):
        N = grid.sizes[ax]
        modes = np.rint(np.fft.fftfreq(N) * N).astype(int)
        mask = (np.abs(modes) <= kmax).reshape(
            [N if i == ax else 1 for i in range(grid.n)] + [1] * len(shape))
        F = F * mask
    out = np.fft.ifftn(F, axes=tuple(range(grid.n))).real
    peak = float(np.max(np.abs(out)))
    return amp * out / peak if peak > 0 else out


def band_limited_scalar(grid: Grid, rng: np.random.Generator,
                        kmax: int = 1, amp: float = 1.0) -> np.ndarray:
    return band_limited_array(grid, rng, (), kmax, amp)


def random_sym_tensor(grid: Grid, rng: np.random.Generator,
                      kmax: int = 1, amp: float = 1.0) -> SymTensorField:
    m = band_limited_array(grid, rng, (grid.n, grid.n), kmax, amp)
    return SymTensorField(grid, 0.5 * (m + np.swapaxes(m, -1, -2)))


def random_spd_metric(grid: Grid, rng: np.random.Generator,
                      kmax: int = 1, amp: float = 0.05) -> MetricField:
    """Flat metric plus a small band-limited symmetric perturbation; amp
    well below 1/n keeps it pointwise SPD."""
    pert = random_sym_tensor(grid, rng, kmax, amp)
    return MetricField(grid, np.eye(grid.n) + pert.mat)


def random_form(grid: Grid, rng: np.random.Generator, degree: int,
                alg: LieAlgebraData | None = None, kmax: int = 1,
                amp: float = 1.0) -> FormField:
    import math
    ncomp = math.comb(grid.n, degree)
    shape = (ncomp,) + ((alg.dim,) if alg is not None else ())
    return FormField(grid, degree, band_limited_array(grid, rng, shape, kmax, amp),
                     alg)


def random_connection(grid: Grid, alg: LieAlgebraData,
                      rng: np.random.Generator, kmax: int = 1,
                      amp: float = 0.1,
                      f_background: np.ndarray | None = None) -> ConnectionField:
    return ConnectionField(random_form(grid, rng, 1, alg, kmax, amp),
                           f_background)


def random_deformation(grid: Grid, alg: LieAlgebraData,
                       rng: np.random.Generator, kmax: int = 1,
                       amp: float = 1.0) -> DeformationPair:
    return DeformationPair(random_sym_tensor(grid, rng, kmax, amp),
                           random_form(grid, rng, 1, alg, kmax, amp))
