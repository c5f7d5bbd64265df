"""Four-dimensional anti-self-dual specialization: self-dual splitting, the
Ricci-flat/ASD residual and its linearization, the essential-deformation
systems on traceless data, and the trace completion.

Orientation is fixed by dx1^dx2^dx3^dx4 > 0; anti-self-dual means
*F = -F.  A Ricci-flat metric with an anti-self-dual connection solves the
full coupled system, and every essential deformation of the ASD system is an
essential deformation of the full system; both facts are checked numerically
rather than assumed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .deform import DefectNorms, PairContext, _form_defect_norms, _sym_defect_norms, harmonic_projection
from .eym import EymConfig
from .fields import (DeformationPair, FormField, MetricField, SymTensorField,
                     circ_gc, circ_h, form_inner_values, form_l2, hodge_star,
                     lrcorner_c, op_gh, sym_inner_values, trace_g,
                     traceless_part)
from .gauge import ConnectionField, d_A, d_A_star
from .lattice import Grid, ScalarField, grad_array, partial_array
from .riemann import (covd, divergence_array, r_circ, rough_laplacian_sym,
                      sym_derivative_array)


def _require_dim4(grid: Grid):
    if grid.n != 4:
        raise ValueError(f"anti-self-dual calculus needs n = 4, got {grid.n}")


@dataclass(frozen=True)
class SdSplit:
    """Self-dual and anti-self-dual parts of a 2-form."""

    plus: FormField
    minus: FormField


def sd_split(w: FormField, g: MetricField) -> SdSplit:
    """Eigenspace split of a 2-form under the Hodge star (which squares to
    the identity on middle-degree forms in dimension 4)."""
    _require_dim4(w.grid)
    if w.degree != 2:
        raise ValueError("sd_split expects a 2-form")
    sw = hodge_star(g, w)
    return SdSplit(0.5 * (w + sw), 0.5 * (w - sw))


def asd_residual(g: MetricField, A: ConnectionField, cfg: EymConfig,
                 ctx: PairContext | None = None) -> tuple[SymTensorField, FormField]:
    """(Ric^g, *F + F): zero exactly when g is Ricci-flat and A is
    anti-self-dual; such pairs solve the full coupled system."""
    _require_dim4(g.grid)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    e2 = hodge_star(g, ctx.F.F) + ctx.F.F
    return ctx.pkg.ricci, e2


def lin_asd_residual(p: DeformationPair, g: MetricField, A: ConnectionField,
                     cfg: EymConfig | None = None,
                     ctx: PairContext | None = None) -> tuple[SymTensorField, FormField]:
    """Linearization of the ASD residual at a Ricci-flat/ASD pair:
    the metric part is the linearized Ricci tensor with curvature terms
    dropped to the Ricci-flat background, the gauge part
    *d_A a + d_A a + *(insertion of h^o into F)."""
    _require_dim4(g.grid)
    if cfg is None:
        cfg = EymConfig(algebra=A.algebra)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    gamma = ctx.gamma
    h, a = p.h, p.a
    tr = np.einsum("...ij,...ij->...", g.inv, h.mat)
    hess_tr = covd(grad_array(tr, g.grid), g.grid, gamma, 1)
    div_h = divergence_array(h.mat, g, 2, gamma)
    e1 = (0.5 * rough_laplacian_sym(h, g, gamma).mat
          - r_circ(h, g, ctx.pkg).mat
          - sym_derivative_array(div_h, g, 1, gamma)
          - 0.5 * hess_tr)
    e1 = SymTensorField(g.grid, 0.5 * (e1 + np.swapaxes(e1, -1, -2)))
    h_o = traceless_part(h, g)
    da = d_A(a, A)
    e2 = hodge_star(g, da) + da + hodge_star(g, op_gh(ctx.F.F, h_o, g))
    return e1, e2


def _check_traceless(h_o: SymTensorField, g: MetricField, tol: float = 1e-12):
    tr = trace_g(h_o, g).values
    worst = float(np.max(np.abs(tr)))
    if worst > tol:
        raise ValueError(f"input must be traceless: max |Tr_g h| = {worst:.3e}")


def essential_asd_system(h_o: SymTensorField, a: FormField, g: MetricField,
                         A: ConnectionField, cfg: EymConfig,
                         ctx: PairContext | None = None) -> dict:
    """Defect norms of the system characterizing traceless data that
    completes to an essential deformation of the ASD system, together with
    its two stated consequences (the inserted curvature form is self-dual
    and orthogonal to F)."""
    _require_dim4(g.grid)
    _check_traceless(h_o, g)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    gamma = ctx.gamma
    F = ctx.F.F

    div_h = divergence_array(h_o.mat, g, 2, gamma)
    avf = lrcorner_c(a, F, g)
    eq_h = (0.5 * rough_laplacian_sym(h_o, g, gamma).mat
            - r_circ(h_o, g, ctx.pkg).mat
            - 2.0 * sym_derivative_array(div_h, g, 1, gamma)
            - (1.0 / 6.0) * divergence_array(div_h, g, 1, gamma)[..., None, None] * g.mat
            + 0.5 * sym_derivative_array(avf.dense(), g, 1, gamma))
    eq_h = SymTensorField(g.grid, 0.5 * (eq_h + np.swapaxes(eq_h, -1, -2)))

    da = d_A(a, A)
    f_gh = op_gh(F, h_o, g)
    eq_a = hodge_star(g, da) + da + hodge_star(g, f_gh)
    eq_div = d_A_star(a, A, g, gamma)

    ortho = ScalarField(g.grid, form_inner_values(F, f_gh, g))
    sd_defect = hodge_star(g, f_gh) - f_gh

    return {
        "traceless_einstein": _sym_defect_norms(eq_h, g),
        "asd_yang_mills": _form_defect_norms(eq_a, g),
        "coclosed": _form_defect_norms(eq_div, g),
        "insertion_orthogonal_to_F": DefectNorms(
            math.sqrt(abs(float(np.sum(ortho.values**2)) * g.grid.site_volume)),
            float(np.max(np.abs(ortho.values)))),
        "insertion_self_dual": _form_defect_norms(sd_defect, g),
    }


def essential_eym_asd_system(h_o: SymTensorField, a: FormField, g: MetricField,
                             A: ConnectionField, cfg: EymConfig,
                             ctx: PairContext | None = None) -> dict:
    """Defect norms of the full-system essential-deformation equations on
    traceless data at an anti-self-dual critical pair (the kappa-coupled
    traceless equation and the gauge equation)."""
    _require_dim4(g.grid)
    _check_traceless(h_o, g)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    kappa = cfg.kappa
    gamma = ctx.gamma
    F = ctx.F.F

    div_h = divergence_array(h_o.mat, g, 2, gamma)
    avf = lrcorner_c(a, F, g)
    da = d_A(a, A)
    fsq = form_inner_values(F, F, g)
    f_da = form_inner_values(F, da, g)
    eq_h = (0.5 * rough_laplacian_sym(h_o, g, gamma).mat
            - r_circ(h_o, g, ctx.pkg).mat
            - 2.0 * sym_derivative_array(div_h, g, 1, gamma)
            - (1.0 / 6.0) * divergence_array(div_h, g, 1, gamma)[..., None, None] * g.mat
            + 0.5 * sym_derivative_array(avf.dense(), g, 1, gamma)
            - kappa * (circ_h(F, F, h_o, g).mat
                       + 0.5 * fsq[..., None, None] * h_o.mat
                       - 2.0 * circ_gc(F, da, g).mat
                       + f_da[..., None, None] * g.mat))
    eq_h = SymTensorField(g.grid, 0.5 * (eq_h + np.swapaxes(eq_h, -1, -2)))

    from .fields import lrcorner_alg
    eq_a = (d_A_star(da, A, g, gamma) - lrcorner_alg(a, F, g)
            + d_A_star(op_gh(F, h_o, g), A, g, gamma))
    eq_div = d_A_star(a, A, g, gamma)

    return {
        "coupled_traceless_einstein": _sym_defect_norms(eq_h, g),
        "coupled_yang_mills": _form_defect_norms(eq_a, g),
        "coclosed": _form_defect_norms(eq_div, g),
    }


def complete_trace(h_o: SymTensorField, a: FormField, g: MetricField,
                   A: ConnectionField, cfg: EymConfig,
                   ctx: PairContext | None = None,
                   class_tol: float = 1e-9) -> tuple[ScalarField, dict]:
    """Reconstruct the trace part of a completed essential deformation.

    Computes rho = 4 div h_o - 2 a .| F, reports its harmonic class (the
    completability obstruction), and when the class vanishes solves
    df = rho for the mean-zero potential f, so that h = (f/4) g + h_o
    satisfies the slice condition exactly.  Any co-exact remainder in rho is
    reported as a defect.
    """
    _require_dim4(g.grid)
    _check_traceless(h_o, g)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    gamma = ctx.gamma
    rho_vals = (4.0 * divergence_array(h_o.mat, g, 2, gamma)
                - 2.0 * lrcorner_c(a, ctx.F.F, g).dense())
    rho = FormField.from_dense(g.grid, 1, rho_vals)
    cls = harmonic_projection(rho, g, gamma)
    report = {"class_sup": cls.sup_norm,
              "class_l2": math.sqrt(max(form_l2(cls, cls, g), 0.0))}

    f_vals = np.zeros(g.grid.sizes)
    if cls.sup_norm <= class_tol:
        f_vals = _solve_gradient(rho_vals, g)
    f = ScalarField(g.grid, f_vals)
    df = grad_array(f.values, g.grid)
    defect = df - rho_vals
    report["exactness_defect"] = float(np.max(np.abs(defect)))
    return f, report


def _solve_gradient(rho: np.ndarray, g: MetricField) -> np.ndarray:
    """Mean-zero potential of an (approximately) exact 1-form, solved in
    Fourier space: f_hat = -i k . rho_hat / |k|^2."""
    grid = g.grid
    axes = tuple(range(grid.n))
    rho_hat = np.fft.fftn(rho, axes=axes)
    shape = grid.sizes
    ks = []
    for ax in range(grid.n):
        k = grid.wavenumbers(ax)
        k[grid.sizes[ax] // 2] = 0.0
        ks.append(k.reshape([shape[ax] if i == ax else 1 for i in range(grid.n)]))
    k2 = sum(k ** 2 for k in ks)
    num = sum((-1j) * ks[ax] * rho_hat[..., ax] for ax in range(grid.n))
    with np.errstate(divide="ignore", invalid="ignore"):
        f_hat = np.where(k2 > 0, num / np.where(k2 > 0, k2, 1.0), 0.0)
    return np.fft.ifftn(f_hat, axes=axes).real
