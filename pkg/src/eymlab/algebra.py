"""Compact Lie algebra data for the adjoint-bundle fibers.

The principal bundle is taken trivial over the torus, so gauge fields are
plain arrays of fiber coordinates in a fixed basis; the algebra is described
by its structure constants f[a][b][c] (with [t_a, t_b] = sum_c f[a][b][c] t_c)
and an ad-invariant positive-definite pairing c[a][b].
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np


class AlgebraMismatchError(ValueError):
    """Values from different Lie algebras were combined."""


@dataclass(frozen=True)
class LieAlgebraData:
    """Structure constants and invariant pairing of a compact Lie algebra."""

    name: str
    dim: int
    structure: np.ndarray  # (d, d, d), [t_a, t_b] = structure[a, b, c] t_c
    pairing: np.ndarray    # (d, d), symmetric positive definite

    def __post_init__(self):
        f = np.asarray(self.structure, dtype=float)
        c = np.asarray(self.pairing, dtype=float)
        d = int(self.dim)
        if d < 1:
            raise ValueError(f"algebra dimension must be >= 1, got {d}")
        if f.shape != (d, d, d):
            raise ValueError(f"structure constants shape {f.shape} != {(d, d, d)}")
        if c.shape != (d, d):
            raise ValueError(f"pairing shape {c.shape} != {(d, d)}")
        object.__setattr__(self, "dim", d)
        object.__setattr__(self, "structure", f)
        object.__setattr__(self, "pairing", c)

    @property
    def is_abelian(self) -> bool:
        return not np.any(self.structure)


def u1() -> LieAlgebraData:
    return LieAlgebraData("u1", 1, np.zeros((1, 1, 1)), np.eye(1))


def su2() -> LieAlgebraData:
    eps = np.zeros((3, 3, 3))
    for a, b, c in ((0, 1, 2), (1, 2, 0), (2, 0, 1)):
        eps[a, b, c] = 1.0
        eps[b, a, c] = -1.0
    return LieAlgebraData("su2", 3, eps, np.eye(3))


_BUILTIN = {"u1": u1, "su2": su2}


def builtin_algebra(name: str) -> LieAlgebraData:
    if name not in _BUILTIN:
        raise ValueError(f"unknown algebra {name!r}; shipped: {sorted(_BUILTIN)}")
    return _BUILTIN[name]()


@dataclass(frozen=True)
class AdValue:
    """Adjoint-bundle fiber values: a d-vector per evaluation site."""

    algebra: LieAlgebraData
    components: np.ndarray  # (..., d)

    def __post_init__(self):
        comp = np.asarray(self.components, dtype=float)
        if comp.shape[-1:] != (self.algebra.dim,):
            raise ValueError(
                f"components last axis {comp.shape} != algebra dim {self.algebra.dim}")
        object.__setattr__(self, "components", comp)


def bracket_arrays(alg: LieAlgebraData, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pointwise Lie bracket on (..., d) component arrays."""
    return np.einsum("abc,...a,...b->...c", alg.structure, x, y)


def pairing_arrays(alg: LieAlgebraData, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Pointwise invariant pairing on (..., d) component arrays."""
    return np.einsum("ab,...a,...b->...", alg.pairing, x, y)


def _check_same_algebra(x: AdValue, y: AdValue):
    a, b = x.algebra, y.algebra
    if a.dim != b.dim or not np.array_equal(a.structure, b.structure) \
            or not np.array_equal(a.pairing, b.pairing):
        raise AlgebraMismatchError(f"algebra mismatch: {a.name} vs {b.name}")


def bracket(x: AdValue, y: AdValue) -> AdValue:
    _check_same_algebra(x, y)
    return AdValue(x.algebra, bracket_arrays(x.algebra, x.components, y.components))


def pairing(x: AdValue, y: AdValue) -> np.ndarray:
    _check_same_algebra(x, y)
    return pairing_arrays(x.algebra, x.components, y.components)


def is_central(alg: LieAlgebraData, x: np.ndarray, tol: float = 1e-13) -> bool:
    """Whether the fiber value x commutes with the whole algebra."""
    ad_x = np.einsum("abc,...a->...bc", alg.structure, np.asarray(x, dtype=float))
    return float(np.max(np.abs(ad_x))) <= tol if ad_x.size else True


@dataclass(frozen=True)
class AlgebraReport:
    """Max residuals of the structural identities of a LieAlgebraData."""

    antisymmetry: float
    jacobi: float
    pairing_symmetry: float
    pairing_min_eigenvalue: float
    ad_invariance: float
    defects: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.defects


def validate(alg: LieAlgebraData, tol: float = 1e-14) -> AlgebraReport:
    """Check antisymmetry, Jacobi, SPD pairing and ad-invariance."""
    f, c = alg.structure, alg.pairing
    antisym = float(np.max(np.abs(f + np.swapaxes(f, 0, 1)))) if f.size else 0.0
    # [[a,b],c] + [[b,c],a] + [[c,a],b] = 0 in structure constants
    jac = (np.einsum("abm,mcg->abcg", f, f)
           + np.einsum("bcm,mag->abcg", f, f)
           + np.einsum("cam,mbg->abcg", f, f))
    jacobi = float(np.max(np.abs(jac))) if jac.size else 0.0
    pair_sym = float(np.max(np.abs(c - c.T)))
    min_eig = float(np.min(np.linalg.eigvalsh(0.5 * (c + c.T))))
    # c([z,x],y) + c(x,[z,y]) = 0
    adinv = (np.einsum("zxm,my->zxy", f, c) + np.einsum("zym,xm->zxy", f, c))
    ad_invariance = float(np.max(np.abs(adinv))) if adinv.size else 0.0

    defects = []
    if antisym > tol:
        defects.append(f"structure constants not antisymmetric: {antisym:.3e}")
    if jacobi > tol:
        defects.append(f"Jacobi identity violated: {jacobi:.3e}")
    if pair_sym > tol:
        defects.append(f"pairing not symmetric: {pair_sym:.3e}")
    if min_eig <= 0.0:
        defects.append(f"pairing not positive definite: min eig {min_eig:.3e}")
    if ad_invariance > tol:
        defects.append(f"pairing not ad-invariant: {ad_invariance:.3e}")
    return AlgebraReport(antisym, jacobi, pair_sym, min_eig, ad_invariance, defects)


def load_algebra(path: str) -> LieAlgebraData:
    """Read algebra data from a JSON file with keys name, dim, structure,
    pairing (structure and pairing flattened row-major)."""
    with open(path, encoding="utf-8") as fh:
        raw = json.load(fh)
    d = int(raw["dim"])
    alg = LieAlgebraData(
        name=str(raw.get("name", "custom")),
        dim=d,
        structure=np.asarray(raw["structure"], dtype=float).reshape(d, d, d),
        pairing=np.asarray(raw["pairing"], dtype=float).reshape(d, d),
    )
    report = validate(alg)
    if not report.ok:
        raise ValueError("algebra file rejected: " + "; ".join(report.defects))
    return alg
