"""Connections, gauge curvature, covariant exterior calculus, and the
Yang-Mills residual.

The bundle is trivial, so a connection is a periodic adjoint-valued potential
1-form plus an optional constant central background flux F0.  On a torus no
globally periodic potential produces a constant nonzero abelian flux, so F0
is carried explicitly and added to the curvature; restricting it to the
center keeps the Bianchi identity and gauge covariance exact.  This gives
exact lattice representatives of the constant-curvature abelian instantons.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import LieAlgebraData, is_central
from .fields import FormField, MetricField, zero_form
from .lattice import Grid, _check_same_grid
from .riemann import christoffel, d, d_star


@dataclass(frozen=True)
class ConnectionField:
    """Periodic potential 1-form plus constant central background flux.

    f_background holds the increasing-multi-index components of F0, shape
    (C(n,2), d); None means no background.
    """

    a_periodic: FormField
    f_background: np.ndarray | None = None

    def __post_init__(self):
        a = self.a_periodic
        if a.degree != 1 or not a.is_ad:
            raise ValueError("potential must be an adjoint-valued 1-form")
        if self.f_background is not None:
            f0 = np.asarray(self.f_background, dtype=float)
            n, dim = a.grid.n, a.algebra.dim
            want = (math.comb(n, 2), dim)
            if f0.shape != want:
                raise ValueError(f"background flux shape {f0.shape} != {want}")
            object.__setattr__(self, "f_background", f0)

    @property
    def grid(self) -> Grid:
        return self.a_periodic.grid

    @property
    def algebra(self) -> LieAlgebraData:
        return self.a_periodic.algebra

    def conn_values(self) -> np.ndarray:
        """Potential components as a dense (*sizes, n, d) array."""
        return self.a_periodic.dense()

    def check_background_central(self, tol: float = 1e-13):
        if self.f_background is None:
            return
        for comp in self.f_background:
            if not is_central(self.algebra, comp, tol):
                raise ValueError(
                    "background flux must take values in the center of the algebra")

    def __add__(self, a: FormField) -> "ConnectionField":
        return ConnectionField(self.a_periodic + a, self.f_background)


def flat_connection(grid: Grid, alg: LieAlgebraData) -> ConnectionField:
    return ConnectionField(zero_form(grid, 1, alg), None)


def u1_flux_connection(grid: Grid, alg: LieAlgebraData,
                       f0: np.ndarray) -> ConnectionField:
    """Constant-background connection with zero periodic potential."""
    conn = ConnectionField(zero_form(grid, 1, alg), np.asarray(f0, dtype=float))
    conn.check_background_central()
    return conn


@dataclass(frozen=True)
class GaugeCurvature:
    """Curvature 2-form F = dA + (1/2)[A ^ A] + F0."""

    F: FormField


def background_form(A: ConnectionField) -> FormField:
    """The constant background flux as a 2-form field (zero if absent)."""
    grid, alg = A.grid, A.algebra
    if A.f_background is None:
        return zero_form(grid, 2, alg)
    comps = np.broadcast_to(A.f_background,
                            grid.sizes + A.f_background.shape).copy()
    return FormField(grid, 2, comps, alg)


def curvature_F(A: ConnectionField) -> GaugeCurvature:
    """Assemble the gauge curvature of a connection."""
    A.check_background_central()
    a = A.a_periodic
    alg = A.algebra
    F = d(a)
    if not alg.is_abelian:
        from .fields import wedge
        F = F + 0.5 * wedge(a, a, mode="bracket")
    F = F + background_form(A)
    return GaugeCurvature(F)


def d_A(w: FormField, A: ConnectionField) -> FormField:
    """Exterior covariant derivative d w + [A ^ w]."""
    _check_same_grid(w.grid, A.grid)
    if A.algebra.is_abelian or not w.is_ad:
        return d(w)
    return d(w, conn=A.conn_values(), alg=A.algebra)


def d_A_star(w: FormField, A: ConnectionField, g: MetricField,
             gamma: np.ndarray | None = None) -> FormField:
    """Formal adjoint of the exterior covariant derivative."""
    _check_same_grid(w.grid, A.grid)
    if gamma is None:
        gamma = christoffel(g)
    conn = None if A.algebra.is_abelian else A.conn_values()
    return d_star(w, g, gamma, conn=conn)


def ym_residual(g: MetricField, A: ConnectionField,
                F: GaugeCurvature | None = None,
                gamma: np.ndarray | None = None) -> FormField:
    """Yang-Mills residual d_A^{g*} F_A; zero exactly at Yang-Mills
    connections for the metric g."""
    if F is None:
        F = curvature_F(A)
    return d_A_star(F.F, A, g, gamma)
