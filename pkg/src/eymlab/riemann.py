"""Metric differential operators: curvature, divergences, Laplacians, and
the metric-variation formulas of all of them.

Christoffel symbols are computed spectrally from the metric and curvature is
assembled from Gamma and its spectral derivatives, keeping every operator
maximally smooth so the adjointness and linearization tests probe formulas
rather than discretization noise.

Sign conventions: R(v1,v2)v3 = nabla_1 nabla_2 v3 - nabla_2 nabla_1 v3
- nabla_[v1,v2] v3, Ric(v1,v2) = Tr(v3 -> R(v3,v1)v2), and the positive
(Hodge) Laplacian; the flat and conformal oracles in the test suite pin these
signs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .algebra import LieAlgebraData
from .lattice import Grid, ScalarField, grad_array, partial_array, _check_same_grid
from .fields import (FormField, MetricField, SymTensorField, _LETTERS,
                     hodge_star, op_gh, sym_circ, sym_inner_values, trace_g)


# ---------------------------------------------------------------------------
# covariant differentiation on (r,0)-tensors with optional adjoint values


def christoffel(g: MetricField) -> np.ndarray:
    """Levi-Civita symbols Gamma^k_ij, array (*sizes, k, i, j)."""
    dg = grad_array(g.mat, g.grid)  # (*s, a, i, j) = partial_a g_ij
    t1 = np.einsum("...kl,...ilj->...kij", g.inv, dg)
    t2 = np.einsum("...kl,...jli->...kij", g.inv, dg)
    t3 = np.einsum("...kl,...lij->...kij", g.inv, dg)
    return 0.5 * (t1 + t2 - t3)


def covd(T: np.ndarray, grid: Grid, gamma: np.ndarray | None, nlow: int,
         alg: LieAlgebraData | None = None,
         conn: np.ndarray | None = None) -> np.ndarray:
    """Covariant derivative of a lower-index tensor, derivative axis first.

    T has shape (*sizes, n^nlow [, d]); gamma is the Christoffel array (None
    means flat), conn an adjoint-valued connection 1-form (*sizes, n, d) that
    acts by bracket on the fiber.
    """
    out = grad_array(T, grid)
    ad = "y" if alg is not None else ""
    ix = _LETTERS[:nlow]
    if gamma is not None:
        for t in range(nlow):
            sub = ix[:t] + "v" + ix[t + 1:]
            out = out - np.einsum(f"...vu{ix[t]},...{sub}{ad}->...u{ix}{ad}",
                                  gamma, T)
    if conn is not None:
        out = out + np.einsum(f"pqy,...up,...{ix}q->...u{ix}y",
                              alg.structure, conn, T)
    return out


def divergence_array(T: np.ndarray, g: MetricField, nlow: int,
                     gamma: np.ndarray | None = None,
                     alg: LieAlgebraData | None = None,
                     conn: np.ndarray | None = None) -> np.ndarray:
    """Divergence -g^{ab} (nabla_a T)(b, ...) of a rank-nlow lower tensor."""
    if gamma is None:
        gamma = christoffel(g)
    D = covd(T, g.grid, gamma, nlow, alg, conn)
    ad = "y" if alg is not None else ""
    rest = _LETTERS[: nlow - 1]
    return -np.einsum(f"...uv,...uv{rest}{ad}->...{rest}{ad}", g.inv, D)


def divergence(T, g: MetricField, gamma: np.ndarray | None = None):
    """Divergence operator on symmetric-tensor or form fields.

    SymTensorField -> scalar-valued 1-form; FormField(r) -> FormField(r-1)
    (there it coincides with the formal adjoint of the exterior derivative).
    """
    if isinstance(T, SymTensorField):
        vals = divergence_array(T.mat, g, 2, gamma)
        return FormField.from_dense(g.grid, 1, vals, None)
    if isinstance(T, FormField):
        return d_star(T, g, gamma=gamma)
    raise TypeError(f"unsupported field type {type(T)!r}")


def sym_derivative_array(T: np.ndarray, g: MetricField, nlow: int,
                         gamma: np.ndarray | None = None) -> np.ndarray:
    """Symmetrized covariant derivative of a symmetric rank-nlow tensor."""
    if gamma is None:
        gamma = christoffel(g)
    D = covd(T, g.grid, gamma, nlow)
    s = len(g.grid.sizes)
    acc = np.zeros_like(D)
    for t in range(nlow + 1):
        acc += np.moveaxis(D, s, s + t)
    return acc / (nlow + 1)


def sym_derivative(tau, g: MetricField, gamma: np.ndarray | None = None):
    """Symmetrization of the covariant derivative; 1-forms map to symmetric
    2-tensors (half the Killing operator), symmetric 2-tensors to rank 3."""
    if isinstance(tau, FormField) and tau.degree == 1 and not tau.is_ad:
        vals = sym_derivative_array(tau.dense(), g, 1, gamma)
        return SymTensorField(g.grid, vals)
    if isinstance(tau, SymTensorField):
        return sym_derivative_array(tau.mat, g, 2, gamma)
    raise TypeError("sym_derivative expects a scalar 1-form or symmetric 2-tensor")


def lie_derivative_sym(v: np.ndarray, tau: np.ndarray, grid: Grid) -> np.ndarray:
    """Lie derivative of a (2,0) lower tensor along the vector field v."""
    dv = grad_array(v, grid)  # (*s, a, k) = partial_a v^k
    dtau = grad_array(tau, grid)
    out = np.einsum("...a,...aij->...ij", v, dtau)
    out += np.einsum("...ia,...aj->...ij", dv, tau)
    out += np.einsum("...ja,...ia->...ij", dv, tau)
    return out


def interior_product(v: np.ndarray, w: FormField) -> FormField:
    """Contraction of a vector field (*sizes, n) into the first form slot."""
    if w.degree == 0:
        raise ValueError("cannot contract into a 0-form")
    dense = w.dense()
    ad = "y" if w.is_ad else ""
    rest = _LETTERS[: w.degree - 1]
    vals = np.einsum(f"...u,...u{rest}{ad}->...{rest}{ad}", v, dense)
    return FormField.from_dense(w.grid, w.degree - 1, vals, w.algebra)


# ---------------------------------------------------------------------------
# exterior calculus


def d(w: FormField, conn: np.ndarray | None = None,
      alg: LieAlgebraData | None = None) -> FormField:
    """Exterior derivative (metric-free); with conn/alg supplied it is the
    exterior covariant derivative, adding the bracket term slotwise."""
    r = w.degree
    grid = w.grid
    if r >= grid.n:
        raise ValueError("exterior derivative of a top-degree form")
    dense = w.dense()
    D = grad_array(dense, grid)
    if conn is not None:
        D = D + np.einsum(f"pqy,...up,...{_LETTERS[:r]}q->...u{_LETTERS[:r]}y",
                          alg.structure, conn, dense)
    s = len(grid.sizes)
    out = np.zeros_like(D)
    for t in range(r + 1):
        out += (-1) ** t * np.moveaxis(D, s, s + t)
    return FormField.from_dense(grid, r + 1, out, w.algebra)


def d_star(w: FormField, g: MetricField, gamma: np.ndarray | None = None,
           conn: np.ndarray | None = None) -> FormField:
    """Formal adjoint of the exterior (covariant) derivative, computed as
    minus the g-trace of the covariant derivative."""
    r = w.degree
    if r == 0:
        return FormField(w.grid, 0, np.zeros_like(w.comps), w.algebra)
    if gamma is None:
        gamma = christoffel(g)
    vals = divergence_array(w.dense(), g, r, gamma, w.algebra, conn)
    return FormField.from_dense(g.grid, r - 1, vals, w.algebra)


def hodge_laplacian(w: FormField, g: MetricField,
                    gamma: np.ndarray | None = None) -> FormField:
    """Positive Hodge-de Rham Laplacian d d* + d* d on scalar forms."""
    if gamma is None:
        gamma = christoffel(g)
    out = None
    if w.degree < g.grid.n:
        out = d_star(d(w), g, gamma)
    if w.degree > 0:
        term = d(d_star(w, g, gamma))
        out = term if out is None else out + term
    return out


def laplacian_scalar(f_vals: np.ndarray, g: MetricField,
                     gamma: np.ndarray | None = None) -> np.ndarray:
    """Positive Laplacian on scalar values: -g^{ab}(d^2f - Gamma df)."""
    if gamma is None:
        gamma = christoffel(g)
    df = grad_array(f_vals, g.grid)
    hess = covd(df, g.grid, gamma, 1)
    return -np.einsum("...ab,...ab->...", g.inv, hess)


# ---------------------------------------------------------------------------
# curvature


@dataclass(frozen=True)
class CurvaturePackage:
    """Christoffel symbols and all curvature tensors of one metric."""

    christoffel: np.ndarray   # (*s, k, i, j)
    riemann: np.ndarray       # (*s, i, j, k, l) fully lowered
    ricci: SymTensorField
    scalar: ScalarField
    einstein: SymTensorField


def curvature(g: MetricField) -> CurvaturePackage:
    """Assemble Gamma, Riemann, Ricci, scalar and Einstein tensor of g."""
    g.cholesky  # enforce the SPD precondition, reporting the first bad site
    grid = g.grid
    gamma = christoffel(g)
    dgamma = grad_array(gamma, grid)  # (*s, a, k, i, j)
    # R^l_{ijk}: array order (*s, l, i, j, k)
    r_up = (np.einsum("...iljk->...lijk", dgamma)
            - np.einsum("...jlik->...lijk", dgamma)
            + np.einsum("...lim,...mjk->...lijk", gamma, gamma)
            - np.einsum("...ljm,...mik->...lijk", gamma, gamma))
    r_low = np.einsum("...lm,...mijk->...ijkl", g.mat, r_up)
    ric = np.einsum("...mmab->...ab", r_up)
    ric = 0.5 * (ric + np.swapaxes(ric, -1, -2))
    scal = np.einsum("...ab,...ab->...", g.inv, ric)
    eins = ric - 0.5 * scal[..., None, None] * g.mat
    return CurvaturePackage(
        christoffel=gamma,
        riemann=r_low,
        ricci=SymTensorField(grid, ric),
        scalar=ScalarField(grid, scal),
        einstein=SymTensorField(grid, eins),
    )


def r_circ(h: SymTensorField, g: MetricField, pkg: CurvaturePackage) -> SymTensorField:
    """Curvature action R_o(h)_ij = R_kijm h^km on symmetric 2-tensors."""
    h_up = np.einsum("...ka,...mb,...ab->...km", g.inv, g.inv, h.mat)
    vals = np.einsum("...kijm,...km->...ij", pkg.riemann, h_up)
    return SymTensorField(g.grid, 0.5 * (vals + np.swapaxes(vals, -1, -2)))


def rough_laplacian_sym(h: SymTensorField, g: MetricField,
                        gamma: np.ndarray) -> SymTensorField:
    """Connection Laplacian nabla* nabla on symmetric 2-tensors."""
    D = covd(h.mat, g.grid, gamma, 2)
    DD = covd(D, g.grid, gamma, 3)
    vals = -np.einsum("...ab,...abij->...ij", g.inv, DD)
    return SymTensorField(g.grid, vals)


def lichnerowicz(h: SymTensorField, g: MetricField,
                 pkg: CurvaturePackage | None = None) -> SymTensorField:
    """Lichnerowicz Laplacian nabla*nabla h + 2 h o Ric - 2 R_o(h); on a flat
    metric it reduces to the componentwise connection Laplacian."""
    if pkg is None:
        pkg = curvature(g)
    rough = rough_laplacian_sym(h, g, pkg.christoffel)
    vals = (rough.mat + 2.0 * sym_circ(h, pkg.ricci, g).mat
            - 2.0 * r_circ(h, g, pkg).mat)
    return SymTensorField(g.grid, vals)


# ---------------------------------------------------------------------------
# metric-variation formulas


def lin_ricci(h: SymTensorField, g: MetricField,
              pkg: CurvaturePackage | None = None) -> SymTensorField:
    """Derivative of g -> Ric^g along h:
    (1/2) Lichnerowicz(h) - delta^g(div h) - (1/2) Hess Tr_g(h)."""
    if pkg is None:
        pkg = curvature(g)
    gamma = pkg.christoffel
    div_h = divergence_array(h.mat, g, 2, gamma)          # 1-form values
    d_div = sym_derivative_array(div_h, g, 1, gamma)      # delta^g of it
    tr = np.einsum("...ij,...ij->...", g.inv, h.mat)
    hess_tr = covd(grad_array(tr, g.grid), g.grid, gamma, 1)
    vals = (0.5 * lichnerowicz(h, g, pkg).mat - d_div - 0.5 * hess_tr)
    return SymTensorField(g.grid, 0.5 * (vals + np.swapaxes(vals, -1, -2)))


def lin_scalar(h: SymTensorField, g: MetricField,
               pkg: CurvaturePackage | None = None) -> ScalarField:
    """Derivative of g -> s^g along h:
    Lap_g Tr_g(h) + div div h - g(h, Ric)."""
    if pkg is None:
        pkg = curvature(g)
    gamma = pkg.christoffel
    tr = np.einsum("...ij,...ij->...", g.inv, h.mat)
    lap_tr = laplacian_scalar(tr, g, gamma)
    div2 = divergence_array(divergence_array(h.mat, g, 2, gamma), g, 1, gamma)
    dot = sym_inner_values(h.mat, pkg.ricci.mat, g.inv)
    return ScalarField(g.grid, lap_tr + div2 - dot)


def lin_einstein(h: SymTensorField, g: MetricField,
                 pkg: CurvaturePackage | None = None) -> SymTensorField:
    """Derivative of the Einstein tensor: lin_ricci - (1/2) s h
    - (1/2) lin_scalar * g."""
    if pkg is None:
        pkg = curvature(g)
    vals = (lin_ricci(h, g, pkg).mat
            - 0.5 * pkg.scalar.values[..., None, None] * h.mat
            - 0.5 * lin_scalar(h, g, pkg).values[..., None, None] * g.mat)
    return SymTensorField(g.grid, vals)


def lin_volume(h: SymTensorField, g: MetricField) -> ScalarField:
    """Derivative of the volume density sqrt(det g): (1/2) Tr_g(h) sqrt(det g)."""
    tr = trace_g(h, g).values
    return ScalarField(g.grid, 0.5 * tr * g.sqrt_det)


def lin_star(w: FormField, h: SymTensorField, g: MetricField) -> FormField:
    """Derivative of g -> *_g w along h:
    (1/2) Tr_g(h) * w + *(insertion of g^{-1}h into w)."""
    tr = trace_g(h, g).values
    star_w = hodge_star(g, w)
    extra = star_w.comps.ndim - len(g.grid.sizes)
    return FormField(g.grid, star_w.degree,
                     0.5 * tr.reshape(tr.shape + (1,) * extra) * star_w.comps,
                     star_w.algebra) + hodge_star(g, op_gh(w, h, g))
