"""The deformation complex of the coupled system: infinitesimal action and
its adjoint, linearized residual, complex and self-adjointness defects,
Laplacian spectra and kernel dimensions, trace and slice identities,
obstruction classes, the conformal-direction operator, and pointwise symbol
exactness.

The complex is

    aut --(inf_action)--> deformations --(lin_residual)--> deformations
        --(inf_action_adjoint)--> aut

with the middle map formally self-adjoint at critical pairs.  Kernel spaces
are computed as kernels of the associated nonnegative Laplacians.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.linalg import LinearOperator, eigsh

from .algebra import LieAlgebraData
from .eym import EymConfig, Residual, residual, residual_norm
from .fields import (DeformationPair, FormField, MetricField, SymTensorField,
                     circ_gc, circ_h, endo_apply, flat, form_inner,
                     form_inner_values, form_l2, l2_inner, l2_norm,
                     lrcorner_alg, lrcorner_c, lrcorner_scalar, op_gh,
                     sharp, sym_circ, sym_inner_values, trace_g,
                     traceless_part, zero_form)
from .gauge import ConnectionField, GaugeCurvature, curvature_F, d_A, d_A_star
from .lattice import Grid, ScalarField, grad_array, integrate_values
from .riemann import (CurvaturePackage, covd, curvature, divergence_array,
                      interior_product, laplacian_scalar, lichnerowicz,
                      lie_derivative_sym, r_circ, rough_laplacian_sym,
                      sym_derivative_array)


# ---------------------------------------------------------------------------
# shared evaluation context


@dataclass(frozen=True)
class PairContext:
    """Precomputed curvature data of one configuration pair, shared by all
    linear-level operators so repeated applications stay cheap."""

    g: MetricField
    A: ConnectionField
    cfg: EymConfig
    pkg: CurvaturePackage
    F: GaugeCurvature

    @classmethod
    def build(cls, g: MetricField, A: ConnectionField, cfg: EymConfig,
              pkg: CurvaturePackage | None = None,
              F: GaugeCurvature | None = None) -> "PairContext":
        if pkg is None:
            pkg = curvature(g)
        if F is None:
            F = curvature_F(A)
        return cls(g, A, cfg, pkg, F)

    @property
    def gamma(self) -> np.ndarray:
        return self.pkg.christoffel

    @property
    def grid(self) -> Grid:
        return self.g.grid


@dataclass(frozen=True)
class InfAutomorphism:
    """Infinitesimal bundle automorphism: a vector field on the base plus an
    adjoint-valued 0-form, in the splitting defined by the connection."""

    v: np.ndarray    # (*sizes, n) contravariant
    tau: np.ndarray  # (*sizes, d)

    def __add__(self, o: "InfAutomorphism") -> "InfAutomorphism":
        return InfAutomorphism(self.v + o.v, self.tau + o.tau)

    def __sub__(self, o: "InfAutomorphism") -> "InfAutomorphism":
        return InfAutomorphism(self.v - o.v, self.tau - o.tau)

    def __mul__(self, c: float) -> "InfAutomorphism":
        return InfAutomorphism(c * self.v, c * self.tau)

    __rmul__ = __mul__


def aut_inner(x: InfAutomorphism, y: InfAutomorphism, g: MetricField,
              alg: LieAlgebraData) -> float:
    """L2 inner product on infinitesimal automorphisms."""
    vals = (np.einsum("...ij,...i,...j->...", g.mat, x.v, y.v)
            + np.einsum("pq,...p,...q->...", alg.pairing, x.tau, y.tau))
    return integrate_values(vals, g.grid, g.sqrt_det)


def aut_norm(x: InfAutomorphism, g: MetricField, alg: LieAlgebraData) -> float:
    return math.sqrt(max(aut_inner(x, x, g, alg), 0.0))


# ---------------------------------------------------------------------------
# the complex maps


def inf_action(x: InfAutomorphism, g: MetricField, A: ConnectionField,
               ctx: PairContext | None = None) -> DeformationPair:
    """Differential of the orbit map: (Lie_v g, d_A tau + iota_v F)."""
    F = ctx.F if ctx is not None else curvature_F(A)
    lie = lie_derivative_sym(x.v, g.mat, g.grid)
    tau_form = FormField(g.grid, 0, x.tau[..., None, :], A.algebra)
    a = d_A(tau_form, A) + interior_product(x.v, F.F)
    return DeformationPair(SymTensorField(g.grid, lie), a)


def inf_action_adjoint(p: DeformationPair, g: MetricField, A: ConnectionField,
                       ctx: PairContext | None = None) -> InfAutomorphism:
    """L2 adjoint of the orbit-map differential:
    ( 2 (div h)# - (a .| F)#, d_A* a )."""
    if ctx is None:
        ctx = PairContext.build(g, A, EymConfig(algebra=A.algebra))
    div_h = divergence_array(p.h.mat, g, 2, ctx.gamma)
    avF = lrcorner_c(p.a, ctx.F.F, g).dense()
    vvec = sharp(2.0 * div_h - avF, g)
    dstar_a = d_A_star(p.a, A, g, ctx.gamma)
    return InfAutomorphism(vvec, dstar_a.comps[..., 0, :])


def lin_residual(p: DeformationPair, g: MetricField, A: ConnectionField,
                 cfg: EymConfig, ctx: PairContext | None = None,
                 on_shell: bool = False) -> DeformationPair:
    """Linearization of the system residual at (g, A) along (h, a).

    The default branch is the general formula valid at every configuration;
    on_shell=True selects the simplified expression that is only valid at
    critical pairs (the two agree there).  The output is returned in the
    deformation-pair shape.
    """
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    kappa = cfg.kappa
    grid, n = g.grid, g.grid.n
    pkg, F = ctx.pkg, ctx.F
    gamma = pkg.christoffel
    h, a = p.h, p.a

    tr_h = np.einsum("...ij,...ij->...", g.inv, h.mat)
    d_tr = grad_array(tr_h, grid)
    d_tr_form = FormField.from_dense(grid, 1, d_tr)
    div_h = divergence_array(h.mat, g, 2, gamma)
    div_div = divergence_array(div_h, g, 1, gamma)
    delta_div = sym_derivative_array(div_h, g, 1, gamma)
    hess_tr = covd(d_tr, grid, gamma, 1)
    lap_tr = laplacian_scalar(tr_h, g, gamma)

    fsq = form_inner_values(F.F, F.F, g)
    ff = circ_gc(F.F, F.F, g)
    da = d_A(a, A)
    f_da = form_inner_values(F.F, da, g)
    ff_h = sym_inner_values(ff.mat, h.mat, g.inv)
    circ_da = circ_gc(F.F, da, g)
    circ_hh = circ_h(F.F, F.F, h, g)

    if not on_shell:
        ric_h = sym_inner_values(h.mat, pkg.ricci.mat, g.inv)
        e1 = (0.5 * lichnerowicz(h, g, pkg).mat
              - delta_div
              - 0.5 * hess_tr
              - 0.5 * pkg.scalar.values[..., None, None] * h.mat
              - 0.5 * (lap_tr - ric_h + div_div)[..., None, None] * g.mat
              - 0.5 * kappa * fsq[..., None, None] * h.mat
              - kappa * circ_hh.mat
              + 2.0 * kappa * circ_da.mat
              - kappa * (f_da - 0.5 * ff_h)[..., None, None] * g.mat)
    else:
        rough = rough_laplacian_sym(h, g, gamma)
        h_ff = sym_circ(h, ff, g)
        e1 = (0.5 * rough.mat
              - r_circ(h, g, pkg).mat
              - delta_div
              - 0.5 * hess_tr
              - 0.5 * lap_tr[..., None, None] * g.mat
              - 0.5 * div_div[..., None, None] * g.mat
              - kappa * h_ff.mat
              + (kappa * tr_h / (2.0 * (n - 2)) * fsq)[..., None, None] * g.mat
              - kappa * circ_hh.mat
              + 2.0 * kappa * circ_da.mat
              - kappa * f_da[..., None, None] * g.mat)
    e1 = -e1
    e1 = 0.5 * (e1 + np.swapaxes(e1, -1, -2))

    dstar_da = d_A_star(da, A, g, gamma)
    a_alg_F = lrcorner_alg(a, F.F, g)
    dtr_F = lrcorner_scalar(d_tr_form, F.F, g)
    f_gh = op_gh(F.F, h, g)
    dstar_fgh = d_A_star(f_gh, A, g, gamma)
    e2 = dstar_da - a_alg_F - 0.5 * dtr_F + dstar_fgh
    if not on_shell:
        ymr = d_A_star(F.F, A, g, gamma)
        e2 = e2 + endo_apply(h, ymr, g)
    e2 = 2.0 * kappa * e2

    return DeformationPair(SymTensorField(grid, e1), e2)


# ---------------------------------------------------------------------------
# complex and self-adjointness defects


def _random_aut(grid: Grid, alg: LieAlgebraData, rng: np.random.Generator,
                kmax: int = 1) -> InfAutomorphism:
    from .sampling import band_limited_array
    v = band_limited_array(grid, rng, (grid.n,), kmax=kmax, amp=1.0)
    tau = band_limited_array(grid, rng, (alg.dim,), kmax=kmax, amp=1.0)
    return InfAutomorphism(v, tau)


def _random_pair(grid: Grid, alg: LieAlgebraData, rng: np.random.Generator,
                 kmax: int = 1, amp: float = 1.0) -> DeformationPair:
    from .sampling import band_limited_array
    hm = band_limited_array(grid, rng, (grid.n, grid.n), kmax=kmax, amp=amp)
    hm = 0.5 * (hm + np.swapaxes(hm, -1, -2))
    am = band_limited_array(grid, rng, (grid.n, alg.dim), kmax=kmax, amp=amp)
    return DeformationPair(SymTensorField(grid, hm),
                           FormField.from_dense(grid, 1, am, alg))


@dataclass(frozen=True)
class ComplexReport:
    """Defects of the deformation-complex identities."""

    on_shell_defect: float        # max ||dE(dPhi x)|| / scale over trials
    off_shell_defect: float       # ||dPhi*(E(g,A))|| / scale at this pair
    pair_residual_norm: float     # how critical the pair actually is
    trials: int


def complex_defect(g: MetricField, A: ConnectionField, cfg: EymConfig,
                   trials: int = 20, rng: np.random.Generator | None = None,
                   ctx: PairContext | None = None) -> ComplexReport:
    """Check dE o dPhi = 0 (valid at critical pairs) and the off-shell
    identity dPhi*(E(g,A)) = 0 (valid everywhere).

    Both defects are normalized: the on-shell one against dE applied to a
    scrambled field of the same norm, the off-shell one against the sizes of
    the individually canceling terms.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    res = residual(g, A, cfg, ctx.pkg, ctx.F)
    res_norm = residual_norm(g, res)

    worst = 0.0
    for _ in range(trials):
        x = _random_aut(g.grid, A.algebra, rng)
        y = inf_action(x, g, A, ctx)
        dy = lin_residual(y, g, A, cfg, ctx)
        ref = _random_pair(g.grid, A.algebra, rng)
        ynorm = l2_norm(y, g)
        refnorm = l2_norm(ref, g)
        ref = ref * (ynorm / max(refnorm, 1e-300))
        scale = l2_norm(lin_residual(ref, g, A, cfg, ctx), g)
        worst = max(worst, l2_norm(dy, g) / max(scale, 1e-300))

    off = offshell_identity_defect(g, A, cfg, ctx)
    return ComplexReport(worst, off, res_norm, trials)


def offshell_identity_defect(g: MetricField, A: ConnectionField,
                             cfg: EymConfig,
                             ctx: PairContext | None = None) -> float:
    """Relative size of dPhi*(E(g,A)), which vanishes identically for every
    configuration by diffeomorphism and gauge invariance of the action."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    res = residual(g, A, cfg, ctx.pkg, ctx.F)
    out = inf_action_adjoint(DeformationPair(res.e1, res.e2), g, A, ctx)
    defect = aut_norm(out, g, A.algebra)
    # scale: the individually canceling contributions
    div_e1 = sharp(divergence_array(res.e1.mat, g, 2, ctx.gamma), g)
    avf = sharp(lrcorner_c(res.e2, ctx.F.F, g).dense(), g)
    d_star_e2 = d_A_star(res.e2, A, g, ctx.gamma)
    s1 = aut_norm(InfAutomorphism(2.0 * div_e1, np.zeros_like(out.tau)),
                  g, A.algebra)
    s2 = aut_norm(InfAutomorphism(avf, np.zeros_like(out.tau)), g, A.algebra)
    ymr = d_A_star(ctx.F.F, A, g, ctx.gamma)
    s3 = math.sqrt(form_l2(d_star_e2, d_star_e2, g)) if d_star_e2.comps.size else 0.0
    s4 = 2.0 * math.sqrt(form_l2(ymr, ymr, g))
    scale = s1 + s2 + s3 + s4
    return defect / max(scale, 1e-300)


def self_adjoint_defect(g: MetricField, A: ConnectionField, cfg: EymConfig,
                        trials: int = 20,
                        rng: np.random.Generator | None = None,
                        ctx: PairContext | None = None) -> float:
    """Max relative defect |<dE p, q> - <p, dE q>| over random pairs.

    Formal self-adjointness only holds at critical pairs; a warning is
    emitted when the pair is visibly non-critical.
    """
    if rng is None:
        rng = np.random.default_rng(0)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    res = residual(g, A, cfg, ctx.pkg, ctx.F)
    if residual_norm(g, res) > 1e3 * cfg.tol_residual:
        warnings.warn("self-adjointness is only guaranteed at critical pairs; "
                      f"this pair has residual norm {residual_norm(g, res):.3e}",
                      stacklevel=2)
    worst = 0.0
    for _ in range(trials):
        p = _random_pair(g.grid, A.algebra, rng)
        q = _random_pair(g.grid, A.algebra, rng)
        dp = lin_residual(p, g, A, cfg, ctx)
        dq = lin_residual(q, g, A, cfg, ctx)
        lhs = l2_inner(dp, q, g)
        rhs = l2_inner(p, dq, g)
        scale = l2_norm(dp, g) * l2_norm(q, g) + l2_norm(p, g) * l2_norm(dq, g)
        worst = max(worst, abs(lhs - rhs) / max(scale, 1e-300))
    return worst


def adjoint_defect(g: MetricField, A: ConnectionField, cfg: EymConfig,
                   trials: int = 10,
                   rng: np.random.Generator | None = None,
                   ctx: PairContext | None = None) -> float:
    """Max relative defect of <inf_action(x), p> = <x, inf_action_adjoint(p)>."""
    if rng is None:
        rng = np.random.default_rng(0)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    worst = 0.0
    for _ in range(trials):
        x = _random_aut(g.grid, A.algebra, rng)
        p = _random_pair(g.grid, A.algebra, rng)
        lhs = l2_inner(inf_action(x, g, A, ctx), p, g)
        rhs = aut_inner(x, inf_action_adjoint(p, g, A, ctx), g, A.algebra)
        scale = (l2_norm(inf_action(x, g, A, ctx), g) * l2_norm(p, g)
                 + aut_norm(x, g, A.algebra)
                 * aut_norm(inf_action_adjoint(p, g, A, ctx), g, A.algebra))
        worst = max(worst, abs(lhs - rhs) / max(scale, 1e-300))
    return worst


# ---------------------------------------------------------------------------
# slice projection (conjugate gradients on the automorphism Gram operator)


def slice_project(p: DeformationPair, g: MetricField, A: ConnectionField,
                  cfg: EymConfig, F: GaugeCurvature | None = None,
                  pkg: CurvaturePackage | None = None,
                  tol: float = 1e-12, maxiter: int = 400) -> DeformationPair:
    """L2-orthogonal projection of a deformation onto the slice
    Ker(inf_action_adjoint), by solving the Gram system
    (dPhi* dPhi) x = dPhi*(p) with conjugate gradients and subtracting
    dPhi(x)."""
    ctx = PairContext.build(g, A, cfg, pkg, F)
    alg = A.algebra

    def op(x: InfAutomorphism) -> InfAutomorphism:
        return inf_action_adjoint(inf_action(x, g, A, ctx), g, A, ctx)

    b = inf_action_adjoint(p, g, A, ctx)
    bnorm = aut_norm(b, g, alg)
    if bnorm == 0.0:
        return p
    x = InfAutomorphism(np.zeros_like(b.v), np.zeros_like(b.tau))
    r = b
    d = r
    rs = aut_inner(r, r, g, alg)
    for _ in range(maxiter):
        if math.sqrt(rs) <= tol * bnorm:
            break
        od = op(d)
        dod = aut_inner(d, od, g, alg)
        # the Gram operator is singular (symmetry directions); stop when the
        # Krylov space degenerates into its kernel
        if not math.isfinite(dod) or dod <= 1e-14 * rs:
            break
        alpha = rs / dod
        x = x + alpha * d
        r = r - alpha * od
        rs_new = aut_inner(r, r, g, alg)
        d = r + (rs_new / max(rs, 1e-300)) * d
        rs = rs_new
    return p - inf_action(x, g, A, ctx)


def slice_condition_residual(p: DeformationPair, g: MetricField,
                             A: ConnectionField,
                             ctx: PairContext | None = None) -> float:
    """Sup norm of the adjoint applied to p: zero exactly on the slice."""
    if ctx is None:
        ctx = PairContext.build(g, A, EymConfig(algebra=A.algebra))
    out = inf_action_adjoint(p, g, A, ctx)
    return max(float(np.max(np.abs(out.v))), float(np.max(np.abs(out.tau))))


# ---------------------------------------------------------------------------
# the complex Laplacians, spectra and kernel dimensions


def laplacian1_apply(p: DeformationPair, g: MetricField, A: ConnectionField,
                     cfg: EymConfig,
                     ctx: PairContext | None = None) -> DeformationPair:
    """Middle Laplacian dE* dE + dPhi dPhi* of the complex.

    Uses the formal self-adjointness of the linearized residual, so the
    result is only meaningful at (approximately) critical pairs.
    """
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    de = lin_residual(lin_residual(p, g, A, cfg, ctx), g, A, cfg, ctx)
    dphi = inf_action(inf_action_adjoint(p, g, A, ctx), g, A, ctx)
    return de + dphi


def laplacian0_apply(x: InfAutomorphism, g: MetricField, A: ConnectionField,
                     cfg: EymConfig,
                     ctx: PairContext | None = None) -> InfAutomorphism:
    """End Laplacian dPhi* dPhi on infinitesimal automorphisms; its kernel
    consists of the infinitesimal symmetries of the pair.  The operator at
    the other end of the complex has the same shape."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    return inf_action_adjoint(inf_action(x, g, A, ctx), g, A, ctx)


class _PairPacker:
    """Isometric packing of deformation pairs into flat vectors: Euclidean
    dot product of packed vectors equals the L2 inner product."""

    def __init__(self, g: MetricField, alg: LieAlgebraData):
        self.g = g
        self.alg = alg
        grid = g.grid
        n, d = grid.n, alg.dim
        self.grid = grid
        self.pairs = [(i, j) for i in range(n) for j in range(i, n)]
        m = len(self.pairs)
        # per-site quadratic form on packed h components
        B = np.zeros(grid.sizes + (m, m))
        ginv = g.inv
        for r, (i, j) in enumerate(self.pairs):
            for c, (k, l) in enumerate(self.pairs):
                val = ginv[..., i, k] * ginv[..., j, l] + ginv[..., i, l] * ginv[..., j, k]
                if i == j:
                    val = 0.5 * val
                if k == l:
                    val = 0.5 * val
                B[..., r, c] = 2.0 * val
        w = (g.sqrt_det * grid.site_volume)[..., None, None]
        self.Wh_half, self.Wh_ihalf = _sym_sqrt(B * w)
        Wa = np.einsum("...ij,pq->...ipjq", ginv, alg.pairing)
        Wa = Wa.reshape(grid.sizes + (n * d, n * d)) * w
        self.Wa_half, self.Wa_ihalf = _sym_sqrt(Wa)
        self.n, self.d, self.m = n, d, m
        self.size = grid.nsites * (m + n * d)

    def _h_to_vec(self, hmat: np.ndarray) -> np.ndarray:
        cols = [hmat[..., i, j] for (i, j) in self.pairs]
        return np.stack(cols, axis=-1)

    def _vec_to_h(self, v: np.ndarray) -> np.ndarray:
        n = self.n
        out = np.zeros(self.grid.sizes + (n, n))
        for c, (i, j) in enumerate(self.pairs):
            out[..., i, j] = v[..., c]
            if i != j:
                out[..., j, i] = v[..., c]
        return out

    def pack(self, p: DeformationPair) -> np.ndarray:
        hv = np.einsum("...rc,...c->...r", self.Wh_half, self._h_to_vec(p.h.mat))
        av = p.a.dense().reshape(self.grid.sizes + (self.n * self.d,))
        av = np.einsum("...rc,...c->...r", self.Wa_half, av)
        return np.concatenate([hv.reshape(-1), av.reshape(-1)])

    def unpack(self, vec: np.ndarray) -> DeformationPair:
        cut = self.grid.nsites * self.m
        hv = vec[:cut].reshape(self.grid.sizes + (self.m,))
        av = vec[cut:].reshape(self.grid.sizes + (self.n * self.d,))
        hmat = self._vec_to_h(np.einsum("...rc,...c->...r", self.Wh_ihalf, hv))
        adense = np.einsum("...rc,...c->...r", self.Wa_ihalf, av)
        adense = adense.reshape(self.grid.sizes + (self.n, self.d))
        return DeformationPair(SymTensorField(self.grid, hmat),
                               FormField.from_dense(self.grid, 1, adense, self.alg))


def _sym_sqrt(B: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise symmetric square root and inverse square root."""
    evals, evecs = np.linalg.eigh(B)
    evals = np.maximum(evals, 1e-300)
    half = np.einsum("...ik,...k,...jk->...ij", evecs, np.sqrt(evals), evecs)
    ihalf = np.einsum("...ik,...k,...jk->...ij", evecs, 1.0 / np.sqrt(evals), evecs)
    return half, ihalf


@dataclass(frozen=True)
class SpectrumReport:
    """Lowest eigenvalues of a complex Laplacian and the kernel count."""

    eigenvalues: list[float]
    kernel_dim: int
    gap_ratio: float
    ambiguous: bool
    method: str = "iterative"


def kernel_policy(eigenvalues: np.ndarray, rel_tol: float = 1e-8,
                  abs_tol: float = 1e-12,
                  gap_requirement: float = 1e3) -> tuple[int, float, bool]:
    """Count eigenvalues in the numerical kernel.

    Eigenvalues below rel_tol * max(largest computed, abs_tol) count as
    kernel; a spectral gap ratio of at least gap_requirement is demanded at
    the cut, otherwise the count is flagged ambiguous.
    """
    ev = np.maximum(np.sort(np.asarray(eigenvalues)), 0.0)
    if ev.size == 0:
        return 0, math.inf, True
    if float(ev[-1]) <= abs_tol:
        # everything computed sits at kernel level: the cut is invisible
        return int(ev.size), math.inf, True
    thr = rel_tol * max(float(ev[-1]), abs_tol)
    m = int(np.sum(ev <= thr))
    if m == ev.size:
        return m, math.inf, True
    if m == 0:
        return 0, math.inf, False
    gap = float(ev[m] / max(ev[m - 1], 1e-300))
    return m, gap, gap < gap_requirement


def laplacian1_operator(g: MetricField, A: ConnectionField, cfg: EymConfig,
                        ctx: PairContext | None = None):
    """Packed symmetric LinearOperator for the middle Laplacian plus the
    packer used to build it."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    packer = _PairPacker(g, A.algebra)

    def matvec(vec):
        p = packer.unpack(np.asarray(vec, dtype=float))
        return packer.pack(laplacian1_apply(p, g, A, cfg, ctx))

    op = LinearOperator((packer.size, packer.size), matvec=matvec, dtype=float)
    return op, packer


def essential_spectrum(g: MetricField, A: ConnectionField, cfg: EymConfig,
                       k: int = 8, ctx: PairContext | None = None,
                       method: str = "iterative") -> SpectrumReport:
    """Lowest part of the spectrum of the middle Laplacian; the kernel
    dimension is the number of essential deformations resolved on this grid.
    """
    if k < 1:
        raise ValueError("k must be >= 1")
    op, packer = laplacian1_operator(g, A, cfg, ctx)
    if method == "dense":
        dense = dense_operator(op, packer.size)
        evals = np.linalg.eigvalsh(0.5 * (dense + dense.T))[:k]
        method_used = "dense"
    else:
        try:
            evals = lanczos_smallest(op.matvec, packer.size, k)
        except Exception as exc:  # eigensolver non-convergence is reported
            return SpectrumReport([], 0, math.inf, True,
                                  method=f"iterative-failed: {exc}")
        method_used = "iterative"
    dim, gap, ambiguous = kernel_policy(np.asarray(evals), cfg.tol_eigen)
    return SpectrumReport([float(e) for e in np.sort(evals)], dim, gap,
                          ambiguous, method=method_used)


def symmetry_spectrum(g: MetricField, A: ConnectionField, cfg: EymConfig,
                      k: int = 8, ctx: PairContext | None = None) -> SpectrumReport:
    """Spectrum of the end Laplacian dPhi* dPhi on automorphisms; its kernel
    dimension counts infinitesimal symmetries.  The operator at the far end
    of the complex is the same, so this also reports that kernel."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    grid, alg = g.grid, A.algebra
    n, d = grid.n, alg.dim
    w = (g.sqrt_det * grid.site_volume)
    Wv_half, Wv_ihalf = _sym_sqrt(g.mat * w[..., None, None])
    ct_half = np.linalg.cholesky(alg.pairing)
    size = grid.nsites * (n + d)

    def pack(x: InfAutomorphism) -> np.ndarray:
        vv = np.einsum("...rc,...c->...r", Wv_half, x.v)
        tv = np.einsum("rc,...c->...r", ct_half.T, x.tau) * np.sqrt(w)[..., None]
        return np.concatenate([vv.reshape(-1), tv.reshape(-1)])

    def unpack(vec: np.ndarray) -> InfAutomorphism:
        cut = grid.nsites * n
        vv = vec[:cut].reshape(grid.sizes + (n,))
        tv = vec[cut:].reshape(grid.sizes + (d,))
        v = np.einsum("...rc,...c->...r", Wv_ihalf, vv)
        tau = np.einsum("rc,...c->...r", np.linalg.inv(ct_half.T),
                        tv / np.sqrt(w)[..., None])
        return InfAutomorphism(v, tau)

    def matvec(vec):
        return pack(laplacian0_apply(unpack(np.asarray(vec, dtype=float)),
                                     g, A, cfg, ctx))

    evals = lanczos_smallest(matvec, size, k)
    dim, gap, ambiguous = kernel_policy(np.asarray(evals), cfg.tol_eigen)
    return SpectrumReport([float(e) for e in np.sort(evals)], dim, gap, ambiguous)


def lanczos_smallest(matvec, size: int, k: int, steps: int | None = None,
                     seed: int = 7) -> np.ndarray:
    """Smallest k eigenvalues of a symmetric operator by Lanczos iteration
    with full reorthogonalization.

    On a lucky breakdown (an invariant subspace is exhausted, as happens
    with degenerate eigenvalues) the iteration restarts with a fresh random
    direction orthogonal to everything found so far, so multiplets are
    resolved; with steps equal to the space dimension the tridiagonalization
    is complete and the spectrum exact.
    """
    rng = np.random.default_rng(seed)
    if steps is None:
        steps = min(size, max(6 * k, 60))
    steps = min(steps, size)
    Q = np.zeros((size, steps))
    alphas = np.zeros(steps)
    betas = np.zeros(max(steps - 1, 0))

    def fresh_direction(j):
        for _ in range(20):
            q = rng.standard_normal(size)
            q -= Q[:, :j] @ (Q[:, :j].T @ q)
            nrm = np.linalg.norm(q)
            if nrm > 1e-8:
                return q / nrm
        raise RuntimeError("could not generate a new Lanczos direction")

    q = fresh_direction(0)
    beta_prev, q_prev = 0.0, np.zeros(size)
    for j in range(steps):
        Q[:, j] = q
        u = matvec(q)
        alpha = float(q @ u)
        alphas[j] = alpha
        u = u - alpha * q - beta_prev * q_prev
        # full reorthogonalization, twice for numerical safety
        u -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ u)
        u -= Q[:, : j + 1] @ (Q[:, : j + 1].T @ u)
        if j == steps - 1:
            break
        beta = float(np.linalg.norm(u))
        scale = max(abs(alpha), beta_prev, 1.0)
        if beta <= 1e-13 * scale:
            q_prev, beta_prev = np.zeros(size), 0.0
            q = fresh_direction(j + 1)
            betas[j] = 0.0
        else:
            q_prev, beta_prev = q, beta
            q = u / beta
            betas[j] = beta
    from scipy.linalg import eigh_tridiagonal
    evals = eigh_tridiagonal(alphas, betas, eigvals_only=True)
    return np.sort(evals)[: min(k, steps)]


def dense_operator(op: LinearOperator, size: int) -> np.ndarray:
    """Assemble a LinearOperator into a dense matrix column by column."""
    cols = []
    e = np.zeros(size)
    for i in range(size):
        e[i] = 1.0
        cols.append(np.asarray(op.matvec(e)).copy())
        e[i] = 0.0
    return np.stack(cols, axis=1)


def dense_laplacian1(g: MetricField, A: ConnectionField, cfg: EymConfig,
                     ctx: PairContext | None = None) -> np.ndarray:
    """Dense middle-Laplacian matrix in the isometric packing; brute-force
    oracle for the iterative spectrum on small grids."""
    op, packer = laplacian1_operator(g, A, cfg, ctx)
    return dense_operator(op, packer.size)


# ---------------------------------------------------------------------------
# essential-deformation system and the linear-level identities


@dataclass(frozen=True)
class DefectNorms:
    l2: float
    sup: float


def _form_defect_norms(w: FormField, g: MetricField) -> DefectNorms:
    return DefectNorms(math.sqrt(max(form_l2(w, w, g), 0.0)), w.sup_norm)


def _sym_defect_norms(h: SymTensorField, g: MetricField) -> DefectNorms:
    l2 = integrate_values(sym_inner_values(h.mat, h.mat, g.inv), g.grid, g.sqrt_det)
    return DefectNorms(math.sqrt(max(l2, 0.0)), h.sup_norm)


def essential_system_residual(p: DeformationPair, g: MetricField,
                              A: ConnectionField, cfg: EymConfig,
                              ctx: PairContext | None = None) -> dict:
    """Per-equation defect norms of the four-equation characterization of
    essential deformations at a critical pair: the two linearized equations
    plus the slice conditions 2 div h = a .| F and d_A* a = 0."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    kappa = cfg.kappa
    grid, n = g.grid, g.grid.n
    pkg, F = ctx.pkg, ctx.F
    gamma = pkg.christoffel
    h, a = p.h, p.a

    tr_h = np.einsum("...ij,...ij->...", g.inv, h.mat)
    d_tr = grad_array(tr_h, grid)
    div_h = divergence_array(h.mat, g, 2, gamma)
    delta_div = sym_derivative_array(div_h, g, 1, gamma)
    hess_tr = covd(d_tr, grid, gamma, 1)
    rough = rough_laplacian_sym(h, g, gamma)
    ff = circ_gc(F.F, F.F, g)
    da = d_A(a, A)
    f_da = form_inner_values(F.F, da, g)
    ff_h = sym_inner_values(ff.mat, h.mat, g.inv)
    eq1 = (0.5 * rough.mat - r_circ(h, g, pkg).mat - delta_div - 0.5 * hess_tr
           - kappa * (circ_h(F.F, F.F, h, g).mat + sym_circ(h, ff, g).mat
                      - 2.0 * circ_gc(F.F, da, g).mat)
           - kappa / (n - 2) * (2.0 * f_da - ff_h)[..., None, None] * g.mat)
    eq1 = SymTensorField(grid, 0.5 * (eq1 + np.swapaxes(eq1, -1, -2)))

    eq2 = (d_A_star(da, A, g, gamma) - lrcorner_alg(a, F.F, g)
           - 0.5 * lrcorner_scalar(FormField.from_dense(grid, 1, d_tr), F.F, g)
           + d_A_star(op_gh(F.F, h, g), A, g, gamma))

    eq3 = FormField.from_dense(grid, 1,
                               2.0 * div_h - lrcorner_c(p.a, F.F, g).dense())
    eq4 = d_A_star(a, A, g, gamma)

    return {
        "linearized_einstein": _sym_defect_norms(eq1, g),
        "linearized_yang_mills": _form_defect_norms(eq2, g),
        "slice_metric": _form_defect_norms(eq3, g),
        "slice_gauge": _form_defect_norms(eq4, g),
    }


def deformation_kernel_residual(p: DeformationPair, g: MetricField,
                                A: ConnectionField, cfg: EymConfig,
                                ctx: PairContext | None = None) -> float:
    """L2 norm of lin_residual(p): zero exactly for infinitesimal
    deformations."""
    return l2_norm(lin_residual(p, g, A, cfg, ctx), g)


def trace_lemma_defect(p: DeformationPair, g: MetricField, A: ConnectionField,
                       cfg: EymConfig, ctx: PairContext | None = None,
                       hypothesis_tol: float | None = None) -> ScalarField:
    """Defect field of the traced linearized equation for infinitesimal
    deformations, in its dimension-dependent form.

    The identity assumes p lies in the kernel of the linearized residual at
    a critical pair; a warning is emitted when that hypothesis visibly
    fails."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    kappa = cfg.kappa
    grid, n = g.grid, g.grid.n
    gamma = ctx.gamma
    h, a = p.h, p.a
    if hypothesis_tol is not None:
        ker = deformation_kernel_residual(p, g, A, cfg, ctx)
        if ker > hypothesis_tol:
            warnings.warn(f"trace identity hypothesis fails: |dE(p)| = {ker:.3e}",
                          stacklevel=2)
    tr_h = np.einsum("...ij,...ij->...", g.inv, h.mat)
    lap_tr = laplacian_scalar(tr_h, g, gamma)
    div_div = divergence_array(divergence_array(h.mat, g, 2, gamma), g, 1, gamma)
    ff = circ_gc(ctx.F.F, ctx.F.F, g)
    ff_o = traceless_part(ff, g)
    h_o = traceless_part(h, g)
    dot_o = sym_inner_values(ff_o.mat, h_o.mat, g.inv)
    if n == 4:
        vals = lap_tr + div_div + kappa * dot_o
    else:
        da = d_A(a, A)
        f_da = form_inner_values(ctx.F.F, da, g)
        s = ctx.pkg.scalar.values
        vals = (lap_tr + div_div + s / n * tr_h
                - 2.0 * kappa * (n - 4) / (2 - n) * f_da
                - 2.0 * kappa / (2 - n) * dot_o)
    return ScalarField(grid, vals)


def slice_second_order_defect(p: DeformationPair, g: MetricField,
                              A: ConnectionField,
                              ctx: PairContext | None = None,
                              hypothesis_tol: float | None = None) -> ScalarField:
    """Defect of div div h = (1/2) <d_A a, F>, a consequence of the slice
    condition 2 div h = a .| F."""
    if ctx is None:
        ctx = PairContext.build(g, A, EymConfig(algebra=A.algebra))
    gamma = ctx.gamma
    if hypothesis_tol is not None:
        sl = slice_condition_residual(p, g, A, ctx)
        if sl > hypothesis_tol:
            warnings.warn(f"slice hypothesis fails: |dPhi*(p)| = {sl:.3e}",
                          stacklevel=2)
    div_div = divergence_array(divergence_array(p.h.mat, g, 2, gamma), g, 1, gamma)
    da = d_A(p.a, A)
    f_da = form_inner_values(da, ctx.F.F, g)
    return ScalarField(g.grid, div_div - 0.5 * f_da)


# ---------------------------------------------------------------------------
# harmonic projection and the obstruction class


def harmonic_projection(rho: FormField, g: MetricField,
                        gamma: np.ndarray | None = None,
                        tol: float = 1e-12, maxiter: int = 2000) -> FormField:
    """Harmonic part of a scalar-valued 1-form.

    On a flat (constant-coefficient) metric the harmonic forms are the
    constant forms and the projection is the exact Fourier zero mode;
    otherwise the Hodge Laplacian is inverted on its range by conjugate
    gradients and the unattainable remainder of rho is its harmonic part.
    """
    from .riemann import christoffel, hodge_laplacian
    grid = g.grid
    flat = np.max(np.abs(g.mat - g.mat.reshape(-1, grid.n, grid.n)[0])) < 1e-13
    if flat:
        mean = np.mean(rho.comps.reshape(-1, rho.ncomp), axis=0)
        comps = np.broadcast_to(mean, rho.comps.shape).copy()
        return FormField(grid, 1, comps)
    if gamma is None:
        gamma = christoffel(g)

    def lap(w: FormField) -> FormField:
        return hodge_laplacian(w, g, gamma)

    # CG on Lap z = rho: the residual converges to the harmonic projection
    z = zero_form(grid, 1)
    r = rho
    d_ = r
    rs = form_l2(r, r, g)
    prev = None
    for _ in range(maxiter):
        od = lap(d_)
        denom = form_l2(d_, od, g)
        if abs(denom) < 1e-300:
            break
        alpha = rs / denom
        z = z + alpha * d_
        r = r - alpha * od
        rs_new = form_l2(r, r, g)
        if prev is not None and abs(rs_new - prev) <= tol * max(prev, 1e-300):
            break
        prev = rs_new
        d_ = r + (rs_new / max(rs, 1e-300)) * d_
        rs = rs_new
    return r


def obstruction_class(h_o: SymTensorField, a: FormField, g: MetricField,
                      A: ConnectionField, cfg: EymConfig | None = None,
                      ctx: PairContext | None = None,
                      h_full: SymTensorField | None = None) -> tuple[FormField, dict]:
    """Harmonic class of 2 div h_o - a .| F (the completability obstruction
    of a traceless deformation) plus the integral obstruction report.

    The returned 1-form is the harmonic projection; its vanishing is
    necessary for completing (h_o, a) by a trace part.  The report carries
    the integral of g((F o F)^o, h_o) (whose vanishing is the n = 4
    obstruction) and, when the full h is supplied, both sides of the traced
    integral identity.
    """
    if cfg is None:
        cfg = EymConfig(algebra=A.algebra)
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    n = g.grid.n
    if n < 3:
        raise ValueError("obstruction class needs n >= 3")
    gamma = ctx.gamma
    rho_vals = (2.0 * divergence_array(h_o.mat, g, 2, gamma)
                - lrcorner_c(a, ctx.F.F, g).dense())
    rho = FormField.from_dense(g.grid, 1, rho_vals)
    gamma_cls = harmonic_projection(rho, g, gamma)

    ff_o = traceless_part(circ_gc(ctx.F.F, ctx.F.F, g), g)
    dot = sym_inner_values(ff_o.mat, traceless_part(h_o, g).mat, g.inv)
    rhs_integral = integrate_values(dot, g.grid, g.sqrt_det)
    report = {
        "class_sup": gamma_cls.sup_norm,
        "class_l2": math.sqrt(max(form_l2(gamma_cls, gamma_cls, g), 0.0)),
        "traceless_coupling_integral": rhs_integral,
    }
    if n != 4:
        report["rhs_scaled"] = 2.0 * cfg.kappa / (2 - n) * rhs_integral
    if h_full is not None:
        tr = trace_g(h_full, g).values
        s = ctx.pkg.scalar.values
        report["lhs_trace_integral"] = integrate_values(s / n * tr, g.grid,
                                                        g.sqrt_det)
    return gamma_cls, report


# ---------------------------------------------------------------------------
# conformal-direction operator


def conformal_coefficient(n: int, kappa: int) -> float:
    """Coefficient of |F|^2 in the conformal-direction operator."""
    den = (n * (n - 2) + 2 * (n - 2) ** 2 - 16 * kappa * (n - 2) + 8 * kappa * n)
    return 2.0 * kappa * (n - 4) / den


def conformal_operator(f: ScalarField, g: MetricField, A: ConnectionField,
                       cfg: EymConfig, ctx: PairContext | None = None) -> ScalarField:
    """Scalar operator Lap_g f + coeff(n, kappa) |F|^2 f that governs
    conformal metric directions of essential deformations; the |F|^2
    coefficient vanishes identically in dimension 4."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    fsq = form_inner_values(ctx.F.F, ctx.F.F, g)
    coeff = conformal_coefficient(g.grid.n, cfg.kappa)
    vals = laplacian_scalar(f.values, g, ctx.gamma) + coeff * fsq * f.values
    return ScalarField(g.grid, vals)


def conformal_spectrum(g: MetricField, A: ConnectionField, cfg: EymConfig,
                       k: int = 6, ctx: PairContext | None = None) -> dict:
    """Smallest eigenvalues of the conformal-direction operator and its
    numerical kernel content."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    grid = g.grid
    w = np.sqrt(g.sqrt_det * grid.site_volume)

    def matvec(vec):
        f = ScalarField(grid, np.asarray(vec, dtype=float).reshape(grid.sizes) / w)
        out = conformal_operator(f, g, A, cfg, ctx)
        return (out.values * w).reshape(-1)

    size = grid.nsites
    op = LinearOperator((size, size), matvec=matvec, dtype=float)
    if size <= 1024:
        dense = dense_operator(op, size)
        evals, evecs = np.linalg.eigh(0.5 * (dense + dense.T))
        evals, evecs = evals[:k], evecs[:, :k]
    else:
        evals, evecs = eigsh(op, k=k, which="SA",
                             ncv=min(size - 1, max(4 * k + 20, 40)),
                             maxiter=20000)
        order = np.argsort(evals)
        evals, evecs = evals[order], evecs[:, order]
    # this operator need not be positive: the kernel question is |lambda| = 0
    scale = max(float(np.max(np.abs(evals))), 1e-12)
    kernel_idx = [i for i, e in enumerate(evals)
                  if abs(e) <= cfg.tol_eigen * scale]
    dim = len(kernel_idx)
    gap, ambiguous = math.inf, False
    nonconstant = False
    for i in kernel_idx:
        vec = evecs[:, i].reshape(grid.sizes) / w
        if np.std(vec) > 1e-8 * max(np.max(np.abs(vec)), 1e-300):
            nonconstant = True
    return {
        "eigenvalues": [float(e) for e in evals],
        "smallest_eigenvalue": float(evals[0]),
        "kernel_dim": dim,
        "has_kernel": dim > 0,
        "kernel_has_nonconstant": nonconstant,
        "gap_ratio": gap,
        "ambiguous": ambiguous,
    }


# ---------------------------------------------------------------------------
# pure-gauge deformation conditions


def pure_gauge_deformation_check(a: FormField, g: MetricField,
                                 A: ConnectionField, cfg: EymConfig,
                                 ctx: PairContext | None = None) -> dict:
    """Defect norms of the four conditions for (0, a) to be an essential
    deformation: the Yang-Mills Jacobi equation, co-closedness, the
    energy-momentum compatibility, and orthogonality to the curvature."""
    if ctx is None:
        ctx = PairContext.build(g, A, cfg)
    n = g.grid.n
    gamma = ctx.gamma
    F = ctx.F
    da = d_A(a, A)
    cond1 = d_A_star(da, A, g, gamma) - lrcorner_alg(a, F.F, g)
    cond2 = d_A_star(a, A, g, gamma)
    f_da = form_inner_values(F.F, da, g)
    cond3 = SymTensorField(g.grid, circ_gc(F.F, da, g).mat
                           - (f_da / (n - 2))[..., None, None] * g.mat)
    cond4 = lrcorner_c(a, F.F, g)
    return {
        "jacobi_equation": _form_defect_norms(cond1, g),
        "coclosed": _form_defect_norms(cond2, g),
        "energy_momentum": _sym_defect_norms(cond3, g),
        "curvature_orthogonality": _form_defect_norms(cond4, g),
    }


# ---------------------------------------------------------------------------
# pointwise symbol exactness


@dataclass(frozen=True)
class SymbolReport:
    ranks: tuple[int, int, int]
    dims: tuple[int, int, int, int]
    composition_defects: tuple[float, float]
    exact_first: bool
    exact_second: bool
    surjective_end: bool

    @property
    def exact(self) -> bool:
        return self.exact_first and self.exact_second and self.surjective_end


def _sym_basis(n: int) -> list[np.ndarray]:
    basis = []
    for i in range(n):
        for j in range(i, n):
            E = np.zeros((n, n))
            if i == j:
                E[i, i] = 1.0
            else:
                E[i, j] = E[j, i] = 1.0 / math.sqrt(2.0)
            basis.append(E)
    return basis


def symbol_check(g_point: np.ndarray, xi: np.ndarray, alg: LieAlgebraData,
                 kappa: int = -1, tol: float = 1e-9) -> SymbolReport:
    """Pointwise exactness of the symbol sequence of the deformation complex
    at a covector xi, established by SVD ranks.

    The three symbol maps act between (vectors + fiber), (symmetric matrices
    + covector-fiber tensors) twice, and back; the sequence is exact at both
    middle slots and surjective at the end for every nonzero xi exactly when
    the complex is elliptic.
    """
    g_point = np.asarray(g_point, dtype=float)
    xi = np.asarray(xi, dtype=float)
    n, d = g_point.shape[0], alg.dim
    if not np.any(xi):
        raise ValueError("xi must be nonzero")
    ginv = np.linalg.inv(g_point)
    xi_up = ginv @ xi
    xi_sq = float(xi @ xi_up)

    sym_basis = _sym_basis(n)
    m = len(sym_basis)
    dim0 = n + d
    dim1 = m + n * d

    def pack1(hmat: np.ndarray, amat: np.ndarray) -> np.ndarray:
        hvec = [np.sum(hmat * E) for E in sym_basis]
        return np.concatenate([np.asarray(hvec), amat.reshape(-1)])

    # sigma(dPhi): (v, tau) -> (v_flat x xi + xi x v_flat, xi x tau)
    M0 = np.zeros((dim1, dim0))
    for c in range(n):
        v = np.zeros(n)
        v[c] = 1.0
        vflat = g_point @ v
        hmat = np.outer(vflat, xi) + np.outer(xi, vflat)
        M0[:, c] = pack1(hmat, np.zeros((n, d)))
    for c in range(d):
        tau = np.zeros(d)
        tau[c] = 1.0
        M0[:, n + c] = pack1(np.zeros((n, n)), np.outer(xi, tau))

    # sigma(dE): as printed, with indices raised by g
    M1 = np.zeros((dim1, dim1))
    for c in range(dim1):
        if c < m:
            hmat, amat = sym_basis[c], np.zeros((n, d))
        else:
            hmat = np.zeros((n, n))
            amat = np.zeros(n * d)
            amat[c - m] = 1.0
            amat = amat.reshape(n, d)
        h_xi = hmat @ xi_up
        tr = float(np.sum(ginv * hmat))
        h_xixi = float(xi_up @ hmat @ xi_up)
        out_h = -(-xi_sq * hmat + np.outer(xi, h_xi) + np.outer(h_xi, xi)
                  - tr * np.outer(xi, xi) + (xi_sq * tr - h_xixi) * g_point)
        iota = xi_up @ amat
        out_a = 2.0 * kappa * (-2.0 * xi_sq * amat + 2.0 * np.outer(xi, iota))
        M1[:, c] = pack1(out_h, out_a)

    # sigma(dPhi*): (h, a) -> (-2 (h xi)#, -iota_xi a)
    M2 = np.zeros((dim0, dim1))
    for c in range(dim1):
        if c < m:
            hmat, amat = sym_basis[c], np.zeros((n, d))
        else:
            hmat = np.zeros((n, n))
            amat = np.zeros(n * d)
            amat[c - m] = 1.0
            amat = amat.reshape(n, d)
        vout = -2.0 * ginv @ (hmat @ xi_up)
        tout = -(xi_up @ amat)
        M2[:, c] = np.concatenate([vout, tout])

    def rank(Mat):
        sv = np.linalg.svd(Mat, compute_uv=False)
        if sv.size == 0 or sv[0] == 0.0:
            return 0
        return int(np.sum(sv > tol * sv[0]))

    r0, r1, r2 = rank(M0), rank(M1), rank(M2)
    norm0 = np.linalg.norm(M0, 2) * np.linalg.norm(M1, 2)
    norm1 = np.linalg.norm(M1, 2) * np.linalg.norm(M2, 2)
    c01 = np.linalg.norm(M1 @ M0, 2) / max(norm0, 1e-300)
    c12 = np.linalg.norm(M2 @ M1, 2) / max(norm1, 1e-300)
    exact_first = (c01 <= tol) and (r0 + r1 == dim1)
    exact_second = (c12 <= tol) and (r1 + r2 == dim1)
    return SymbolReport((r0, r1, r2), (dim0, dim1, dim1, dim0), (c01, c12),
                        exact_first, exact_second, r2 == dim0)
