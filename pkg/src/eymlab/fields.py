"""Tensor and form fields on the grid and the pointwise bilinear operations.

Differential forms are stored on strictly increasing multi-indices; whenever
an operation needs the skew-symmetric (r,0)-tensor picture it expands to a
dense component array on demand.  The inner product on forms is the
determinant inner product, normalized so that orthonormal-coframe monomials
are orthonormal; adjoint-valued forms additionally contract the fiber indices
with the algebra pairing.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import cached_property, lru_cache

import numpy as np

from .algebra import LieAlgebraData, bracket_arrays
from .lattice import Grid, GridMismatchError, ScalarField, _check_same_grid, integrate_values


class NonSpdMetricError(ValueError):
    """A metric failed the pointwise SPD check; carries the first bad site."""

    def __init__(self, site: tuple):
        self.site = site
        super().__init__(f"metric not positive definite at site {site}")


# ---------------------------------------------------------------------------
# multi-index bookkeeping


@lru_cache(maxsize=None)
def increasing_indices(n: int, r: int) -> tuple[tuple[int, ...], ...]:
    return tuple(itertools.combinations(range(n), r))


def _perm_sign(perm: tuple[int, ...]) -> int:
    sign = 1
    for i in range(len(perm)):
        for j in range(i + 1, len(perm)):
            if perm[i] > perm[j]:
                sign = -sign
    return sign


@lru_cache(maxsize=None)
def _expansion_table(n: int, r: int) -> tuple[tuple[int, tuple[int, ...], int], ...]:
    """(component index, dense index tuple, sign) triples for skew expansion."""
    out = []
    for ci, idx in enumerate(increasing_indices(n, r)):
        for perm in itertools.permutations(idx):
            out.append((ci, perm, _perm_sign(perm)))
    return tuple(out)


_LETTERS = "abcdefghijkl"


# ---------------------------------------------------------------------------
# field containers


@dataclass(frozen=True)
class MetricField:
    """Per-site symmetric positive-definite matrix g_ij."""

    grid: Grid
    mat: np.ndarray  # (*sizes, n, n)

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=float)
        n = self.grid.n
        if m.shape != self.grid.sizes + (n, n):
            raise ValueError(f"metric shape {m.shape} != {self.grid.sizes + (n, n)}")
        object.__setattr__(self, "mat", m)

    @cached_property
    def inv(self) -> np.ndarray:
        return np.linalg.inv(self.mat)

    @cached_property
    def cholesky(self) -> np.ndarray:
        """Pointwise Cholesky factor; raises NonSpdMetricError with the first
        offending site index if the metric is not SPD somewhere."""
        try:
            return np.linalg.cholesky(self.mat)
        except np.linalg.LinAlgError:
            flat = self.mat.reshape(-1, self.grid.n, self.grid.n)
            for i in range(flat.shape[0]):
                if np.min(np.linalg.eigvalsh(flat[i])) <= 0.0:
                    raise NonSpdMetricError(
                        tuple(np.unravel_index(i, self.grid.sizes))) from None
            raise

    @cached_property
    def sqrt_det(self) -> np.ndarray:
        d = self.cholesky.diagonal(axis1=-2, axis2=-1)
        return np.prod(d, axis=-1)

    def __add__(self, h: "SymTensorField") -> "MetricField":
        _check_same_grid(self.grid, h.grid)
        return MetricField(self.grid, self.mat + h.mat)


@dataclass(frozen=True)
class SymTensorField:
    """Per-site symmetric matrix h_ij (not necessarily definite)."""

    grid: Grid
    mat: np.ndarray

    def __post_init__(self):
        m = np.asarray(self.mat, dtype=float)
        n = self.grid.n
        if m.shape != self.grid.sizes + (n, n):
            raise ValueError(f"tensor shape {m.shape} != {self.grid.sizes + (n, n)}")
        object.__setattr__(self, "mat", m)

    def __add__(self, o: "SymTensorField") -> "SymTensorField":
        _check_same_grid(self.grid, o.grid)
        return SymTensorField(self.grid, self.mat + o.mat)

    def __sub__(self, o: "SymTensorField") -> "SymTensorField":
        _check_same_grid(self.grid, o.grid)
        return SymTensorField(self.grid, self.mat - o.mat)

    def __mul__(self, c: float) -> "SymTensorField":
        return SymTensorField(self.grid, self.mat * c)

    __rmul__ = __mul__

    def __neg__(self) -> "SymTensorField":
        return SymTensorField(self.grid, -self.mat)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.mat)))


@dataclass(frozen=True)
class FormField:
    """Differential r-form, scalar- or adjoint-valued.

    comps has shape (*sizes, C(n,r)) for scalar values and
    (*sizes, C(n,r), d) for adjoint values, components listed on strictly
    increasing multi-indices in lexicographic order.
    """

    grid: Grid
    degree: int
    comps: np.ndarray
    algebra: LieAlgebraData | None = None

    def __post_init__(self):
        c = np.asarray(self.comps, dtype=float)
        n = self.grid.n
        if not 0 <= self.degree <= n:
            raise ValueError(f"form degree {self.degree} out of range for n={n}")
        ncomp = math.comb(n, self.degree)
        want = self.grid.sizes + (ncomp,)
        if self.algebra is not None:
            want = want + (self.algebra.dim,)
        if c.shape != want:
            raise ValueError(f"form comps shape {c.shape} != {want}")
        object.__setattr__(self, "comps", c)

    @property
    def ncomp(self) -> int:
        return math.comb(self.grid.n, self.degree)

    @property
    def is_ad(self) -> bool:
        return self.algebra is not None

    def dense(self) -> np.ndarray:
        """Skew-symmetric (r,0)-tensor components, shape (*sizes, n^r[, d])."""
        n, r = self.grid.n, self.degree
        extra = (self.algebra.dim,) if self.is_ad else ()
        out = np.zeros(self.grid.sizes + (n,) * r + extra)
        if r == 0:
            out[...] = self.comps[..., 0] if not self.is_ad else self.comps[..., 0, :]
            return out
        trail = (slice(None),) if self.is_ad else ()
        for ci, perm, sign in _expansion_table(n, r):
            src = self.comps[(Ellipsis, ci) + trail]
            out[(Ellipsis,) + perm + trail] = sign * src
        return out

    @classmethod
    def from_dense(cls, grid: Grid, degree: int, dense: np.ndarray,
                   algebra: LieAlgebraData | None = None) -> "FormField":
        n, r = grid.n, degree
        trail = (slice(None),) if algebra is not None else ()
        if r == 0:
            comps = dense[(Ellipsis, np.newaxis) + trail] if algebra is not None \
                else dense[..., np.newaxis]
            return cls(grid, 0, comps, algebra)
        cols = [dense[(Ellipsis,) + idx + trail]
                for idx in increasing_indices(n, r)]
        comps = np.stack(cols, axis=len(grid.sizes))
        return cls(grid, r, comps, algebra)

    def __add__(self, o: "FormField") -> "FormField":
        _check_form_shapes(self, o)
        return FormField(self.grid, self.degree, self.comps + o.comps, self.algebra)

    def __sub__(self, o: "FormField") -> "FormField":
        _check_form_shapes(self, o)
        return FormField(self.grid, self.degree, self.comps - o.comps, self.algebra)

    def __mul__(self, c: float) -> "FormField":
        return FormField(self.grid, self.degree, self.comps * c, self.algebra)

    __rmul__ = __mul__

    def __neg__(self) -> "FormField":
        return FormField(self.grid, self.degree, -self.comps, self.algebra)

    @property
    def sup_norm(self) -> float:
        return float(np.max(np.abs(self.comps)))


def _check_form_shapes(a: FormField, b: FormField):
    _check_same_grid(a.grid, b.grid)
    if a.degree != b.degree:
        raise ValueError(f"form degree mismatch: {a.degree} vs {b.degree}")
    if a.comps.shape != b.comps.shape:
        raise ValueError(f"form shape mismatch: {a.comps.shape} vs {b.comps.shape}")


def zero_form(grid: Grid, degree: int,
              algebra: LieAlgebraData | None = None) -> FormField:
    ncomp = math.comb(grid.n, degree)
    shape = grid.sizes + (ncomp,) + ((algebra.dim,) if algebra else ())
    return FormField(grid, degree, np.zeros(shape), algebra)


def flat_metric(grid: Grid) -> MetricField:
    mat = np.broadcast_to(np.eye(grid.n), grid.sizes + (grid.n, grid.n)).copy()
    return MetricField(grid, mat)


@dataclass(frozen=True)
class DeformationPair:
    """Tangent vector of the configuration space: a symmetric 2-tensor plus
    an adjoint-valued 1-form."""

    h: SymTensorField
    a: FormField

    def __post_init__(self):
        _check_same_grid(self.h.grid, self.a.grid)
        if self.a.degree != 1 or not self.a.is_ad:
            raise ValueError("second slot must be an adjoint-valued 1-form")

    @property
    def grid(self) -> Grid:
        return self.h.grid

    def __add__(self, o: "DeformationPair") -> "DeformationPair":
        return DeformationPair(self.h + o.h, self.a + o.a)

    def __sub__(self, o: "DeformationPair") -> "DeformationPair":
        return DeformationPair(self.h - o.h, self.a - o.a)

    def __mul__(self, c: float) -> "DeformationPair":
        return DeformationPair(self.h * c, self.a * c)

    __rmul__ = __mul__

    @property
    def sup_norm(self) -> float:
        return max(self.h.sup_norm, self.a.sup_norm)


# ---------------------------------------------------------------------------
# pointwise scalar-producing contractions


def sym_inner_values(h: np.ndarray, k: np.ndarray, ginv: np.ndarray) -> np.ndarray:
    """g(h,k) = h_ij k_kl g^ik g^jl pointwise."""
    return np.einsum("...ij,...kl,...ik,...jl->...", h, k, ginv, ginv)


def form_inner_values(x: FormField, y: FormField, g: MetricField) -> np.ndarray:
    """Determinant inner product <x,y>_g pointwise, with the algebra pairing
    contracted in for adjoint-valued forms."""
    _check_form_shapes(x, y)
    r = x.degree
    xd, yd = x.dense(), y.dense()
    ginv = g.inv
    ix, iy = _LETTERS[:r], _LETTERS[r:2 * r]
    ops, subs = [xd, yd], None
    if x.is_ad:
        subs = ["..." + ix + "y", "..." + iy + "z"]
        ops.append(x.algebra.pairing)
        pair_sub = ["yz"]
    else:
        subs = ["..." + ix, "..." + iy]
        pair_sub = []
    gsubs = []
    for t in range(r):
        ops.append(ginv)
        gsubs.append("..." + ix[t] + iy[t])
    spec = ",".join(subs + pair_sub + gsubs) + "->..."
    # einsum argument order: xd, yd, [pairing], ginv...
    args = [xd, yd] + ([x.algebra.pairing] if x.is_ad else []) + [ginv] * r
    return np.einsum(spec, *args) / math.factorial(r)


def form_inner(x: FormField, y: FormField, g: MetricField) -> ScalarField:
    return ScalarField(g.grid, form_inner_values(x, y, g))


def form_l2(x: FormField, y: FormField, g: MetricField) -> float:
    return integrate_values(form_inner_values(x, y, g), g.grid, g.sqrt_det)


def sym_l2(h: SymTensorField, k: SymTensorField, g: MetricField) -> float:
    return integrate_values(sym_inner_values(h.mat, k.mat, g.inv), g.grid, g.sqrt_det)


def l2_inner(p: DeformationPair, q: DeformationPair, g: MetricField) -> float:
    """L2 metric on deformation pairs: int ( g(h,h') + <a,a'> ) vol."""
    _check_same_grid(p.grid, q.grid)
    _check_same_grid(p.grid, g.grid)
    if p.a.comps.shape != q.a.comps.shape:
        raise ValueError("deformation pair shape mismatch")
    vals = sym_inner_values(p.h.mat, q.h.mat, g.inv) + form_inner_values(p.a, q.a, g)
    return integrate_values(vals, g.grid, g.sqrt_det)


def l2_norm(p: DeformationPair, g: MetricField) -> float:
    return math.sqrt(max(l2_inner(p, p, g), 0.0))


# ---------------------------------------------------------------------------
# Hodge star and musical isomorphisms


@lru_cache(maxsize=8)
def _eps_tensor(n: int) -> np.ndarray:
    eps = np.zeros((n,) * n)
    for perm in itertools.permutations(range(n)):
        eps[perm] = _perm_sign(perm)
    return eps


def _raise_all(dense: np.ndarray, ginv: np.ndarray, r: int, ad: bool) -> np.ndarray:
    out = dense
    ix = _LETTERS[:r] + ("y" if ad else "")
    for t in range(r):
        out = np.einsum(f"...{ix},...{_LETTERS[t]}m->...{ix[:t]}m{ix[t + 1:]}",
                        out, ginv)
    return out


def hodge_star(g: MetricField, w: FormField) -> FormField:
    """Hodge dual determined by x ^ *y = <x,y>_g vol_g, acting componentwise
    on the fiber for adjoint-valued forms."""
    n, r = g.grid.n, w.degree
    _check_same_grid(g.grid, w.grid)
    dense = w.dense()
    raised = _raise_all(dense, g.inv, r, w.is_ad)
    eps = _eps_tensor(n)
    ix = _LETTERS[:r]
    jx = _LETTERS[r:n]
    ad = "y" if w.is_ad else ""
    out = np.einsum(f"...{ix}{ad},{ix}{jx}->...{jx}{ad}", raised, eps)
    out = out * g.sqrt_det.reshape(g.grid.sizes + (1,) * (n - r + (1 if w.is_ad else 0)))
    out /= math.factorial(r)
    return FormField.from_dense(g.grid, n - r, out, w.algebra)


def sharp(u: np.ndarray, g: MetricField) -> np.ndarray:
    """Raise the index of a covector field (*sizes, n[, d])."""
    if u.ndim == g.grid.n + 1:
        return np.einsum("...ij,...j->...i", g.inv, u)
    return np.einsum("...ij,...jy->...iy", g.inv, u)


def flat(v: np.ndarray, g: MetricField) -> np.ndarray:
    """Lower the index of a vector field."""
    if v.ndim == g.grid.n + 1:
        return np.einsum("...ij,...j->...i", g.mat, v)
    return np.einsum("...ij,...jy->...iy", g.mat, v)


# ---------------------------------------------------------------------------
# the bilinear operations on forms and symmetric tensors


def circ_gc(x: FormField, y: FormField, g: MetricField,
            alg: LieAlgebraData | None = None) -> SymTensorField:
    """Symmetric 2-tensor (x o y)(v,w) = (<x(v),y(w)> + <x(w),y(v)>)/2 built
    from two equal-degree forms, contracting the remaining k-1 slots with the
    determinant inner product (and the fiber pairing when adjoint-valued)."""
    _check_form_shapes(x, y)
    k = x.degree
    if k < 1:
        raise ValueError("circ_gc needs forms of degree >= 1")
    xd, yd = x.dense(), y.dense()
    ginv = g.inv
    rest_x = _LETTERS[: k - 1]
    rest_y = _LETTERS[k - 1: 2 * (k - 1)]
    gsubs = ["..." + rest_x[t] + rest_y[t] for t in range(k - 1)]
    args = [ginv] * (k - 1)
    if x.is_ad:
        terms = [f"...u{rest_x}y", f"...v{rest_y}z", "yz"] + gsubs
        raw = np.einsum(",".join(terms) + "->...uv",
                        xd, yd, x.algebra.pairing, *args)
    else:
        terms = [f"...u{rest_x}", f"...v{rest_y}"] + gsubs
        raw = np.einsum(",".join(terms) + "->...uv", xd, yd, *args)
    raw /= math.factorial(k - 1)
    return SymTensorField(g.grid, 0.5 * (raw + np.swapaxes(raw, -1, -2)))


def circ_h(x: FormField, y: FormField, h: SymTensorField, g: MetricField,
           alg: LieAlgebraData | None = None) -> SymTensorField:
    """(x o_h y)_ij = sum_a x^a_ik y^a_jl h^kl for degree-2 forms, h raised
    with g; reduces to circ_gc when h = g."""
    _check_form_shapes(x, y)
    if x.degree != 2:
        raise ValueError("circ_h is defined for degree-2 forms")
    ginv = g.inv
    h_up = np.einsum("...ka,...lb,...ab->...kl", ginv, ginv, h.mat)
    xd, yd = x.dense(), y.dense()
    if x.is_ad:
        raw = np.einsum("...iky,...jlz,yz,...kl->...ij",
                        xd, yd, x.algebra.pairing, h_up)
    else:
        raw = np.einsum("...ik,...jl,...kl->...ij", xd, yd, h_up)
    return SymTensorField(g.grid, 0.5 * (raw + np.swapaxes(raw, -1, -2)))


def lrcorner_c(a: FormField, F: FormField, g: MetricField) -> FormField:
    """Scalar-valued 1-form (a .| F)(v) = -<a, i_v F>_{g,c} from an
    adjoint-valued 1-form a and 2-form F."""
    if a.degree != 1 or F.degree != 2 or not (a.is_ad and F.is_ad):
        raise ValueError("lrcorner_c needs an ad-valued 1-form and 2-form")
    _check_same_grid(a.grid, F.grid)
    vals = -np.einsum("...my,...jkz,yz,...mk->...j",
                      a.dense(), F.dense(), a.algebra.pairing, g.inv)
    return FormField.from_dense(g.grid, 1, vals, None)


def lrcorner_alg(a: FormField, F: FormField, g: MetricField) -> FormField:
    """Adjoint-valued 1-form sum_i [a(e_i), i_{e_i} F] over a g-orthonormal
    frame; vanishes identically for abelian algebras."""
    if a.degree != 1 or F.degree != 2 or not (a.is_ad and F.is_ad):
        raise ValueError("lrcorner_alg needs an ad-valued 1-form and 2-form")
    _check_same_grid(a.grid, F.grid)
    vals = np.einsum("...ly,...mkz,...lm,yzw->...kw",
                     a.dense(), F.dense(), g.inv, a.algebra.structure)
    return FormField.from_dense(g.grid, 1, vals, a.algebra)


def lrcorner_scalar(u: FormField, F: FormField, g: MetricField) -> FormField:
    """Contraction (u .| F)_k = u^m F_mk of a scalar 1-form into an
    (optionally adjoint-valued) 2-form."""
    if u.degree != 1 or F.degree != 2:
        raise ValueError("lrcorner_scalar needs a 1-form and a 2-form")
    _check_same_grid(u.grid, F.grid)
    if F.is_ad:
        vals = np.einsum("...l,...lm,...mky->...ky", u.dense(), g.inv, F.dense())
    else:
        vals = np.einsum("...l,...lm,...mk->...k", u.dense(), g.inv, F.dense())
    return FormField.from_dense(g.grid, 1, vals, F.algebra)


def op_gh(w: FormField, h: SymTensorField, g: MetricField) -> FormField:
    """Insertion of the endomorphism g^{-1}h into every slot, with a minus
    sign: the derivative of the Hodge star along h acts through this map.
    Degree-0 forms map to zero; with h = g it returns -r * w."""
    r = w.degree
    if r == 0:
        return FormField(w.grid, 0, np.zeros_like(w.comps), w.algebra)
    B = np.einsum("...mk,...ki->...mi", g.inv, h.mat)  # B^m_i
    dense = w.dense()
    ad = "y" if w.is_ad else ""
    ix = _LETTERS[:r]
    out = np.zeros_like(dense)
    for t in range(r):
        sub = ix[:t] + "m" + ix[t + 1:]
        out -= np.einsum(f"...{sub}{ad},...m{ix[t]}->...{ix}{ad}", dense, B)
    return FormField.from_dense(w.grid, r, out, w.algebra)


def sym_circ(t1: SymTensorField, t2: SymTensorField, g: MetricField) -> SymTensorField:
    """Symmetrized composition (t1 o_g t2)(v,w) = (g(t1 v, t2 w)+g(t1 w, t2 v))/2."""
    _check_same_grid(t1.grid, t2.grid)
    raw = np.einsum("...ik,...kl,...lj->...ij", t1.mat, g.inv, t2.mat)
    return SymTensorField(g.grid, 0.5 * (raw + np.swapaxes(raw, -1, -2)))


def trace_g(h: SymTensorField, g: MetricField) -> ScalarField:
    _check_same_grid(h.grid, g.grid)
    return ScalarField(g.grid, np.einsum("...ij,...ij->...", g.inv, h.mat))


def traceless_part(h: SymTensorField, g: MetricField) -> SymTensorField:
    tr = trace_g(h, g).values
    n = g.grid.n
    return SymTensorField(g.grid, h.mat - (tr / n)[..., None, None] * g.mat)


def endo_apply(h: SymTensorField, u: FormField, g: MetricField) -> FormField:
    """Apply the endomorphism h (one index raised with g) to a 1-form."""
    if u.degree != 1:
        raise ValueError("endo_apply expects a 1-form")
    if u.is_ad:
        vals = np.einsum("...ij,...jk,...ky->...iy", h.mat, g.inv, u.dense())
    else:
        vals = np.einsum("...ij,...jk,...k->...i", h.mat, g.inv, u.dense())
    return FormField.from_dense(g.grid, 1, vals, u.algebra)


def wedge(x: FormField, y: FormField,
          mode: str = "scalar") -> FormField:
    """Wedge product of two forms.

    mode selects the fiber multiplication: 'scalar' for ordinary numeric
    product (at most one operand adjoint-valued), 'bracket' for the Lie
    bracket of two adjoint-valued forms, 'pairing' for the invariant pairing
    (scalar-valued result).
    """
    _check_same_grid(x.grid, y.grid)
    p, q = x.degree, y.degree
    n = x.grid.n
    if p + q > n:
        raise ValueError("wedge degree exceeds dimension")
    xd, yd = x.dense(), y.dense()
    ix, iy = _LETTERS[:p], _LETTERS[p:p + q]
    if mode == "bracket":
        alg = x.algebra
        outer = np.einsum(f"...{ix}y,...{iy}z,yzw->...{ix}{iy}w",
                          xd, yd, alg.structure)
        out_alg, ad = alg, True
    elif mode == "pairing":
        outer = np.einsum(f"...{ix}y,...{iy}z,yz->...{ix}{iy}",
                          xd, yd, x.algebra.pairing)
        out_alg, ad = None, False
    else:
        if x.is_ad and y.is_ad:
            raise ValueError("two ad-valued forms need mode bracket or pairing")
        ads = ("y" if x.is_ad else "", "y" if y.is_ad else "")
        out_alg = x.algebra or y.algebra
        ad = out_alg is not None
        outer = np.einsum(f"...{ix}{ads[0]},...{iy}{ads[1]}->...{ix}{iy}"
                          + ("y" if ad else ""), xd, yd)
    # alternate over the p+q form slots: coefficient 1/(p! q!)
    s = len(x.grid.sizes)
    slots = list(range(s, s + p + q))
    acc = np.zeros_like(outer)
    for perm in itertools.permutations(range(p + q)):
        order = list(range(s)) + [slots[i] for i in perm] + \
            ([outer.ndim - 1] if ad else [])
        acc += _perm_sign(perm) * np.transpose(outer, order)
    acc /= math.factorial(p) * math.factorial(q)
    return FormField.from_dense(x.grid, p + q, acc, out_alg)


def volume_form(g: MetricField) -> FormField:
    """Riemannian volume form as an n-form field."""
    comps = g.sqrt_det[..., None]
    return FormField(g.grid, g.grid.n, comps, None)
