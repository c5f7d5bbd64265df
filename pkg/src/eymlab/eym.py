"""Coupled Einstein-Yang-Mills functional, residuals, energy-momentum
tensors, trace constraint, and the slice-projected gradient-flow solver.

The residual pair is E = (E1, E2) with E1 = -(Einstein tensor - T) and
E2 = 2 kappa d_A^{g*} F_A; a configuration is critical for the action exactly
when both vanish.  The flow integrates the parabolic descent direction
(T_hat - Ric, -d_A^{g*}F_A), which has the same zero set: the Ricci form of
the Einstein equation makes every non-gauge mode strictly damped near a flat
pair, while the plain Einstein-tensor gradient has an anti-damped conformal
direction.  Gauge drift is removed by periodically projecting the velocity
onto the slice (the kernel of the adjoint infinitesimal action).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .algebra import LieAlgebraData, u1
from .fields import (DeformationPair, FormField, MetricField, NonSpdMetricError,
                     SymTensorField, circ_gc, form_inner_values, l2_norm,
                     lrcorner_c, sym_inner_values, trace_g)
from .gauge import ConnectionField, GaugeCurvature, curvature_F, d_A_star, ym_residual
from .lattice import ScalarField, integrate, integrate_values
from .riemann import CurvaturePackage, christoffel, curvature, divergence_array


@dataclass(frozen=True)
class EymConfig:
    """Sign, algebra, tolerances and flow parameters for one system."""

    kappa: int = -1
    algebra: LieAlgebraData = field(default_factory=u1)
    tol_residual: float = 1e-9
    tol_eigen: float = 1e-8
    tol_flow: float = 1e-6
    flow_step: float = 4e-4
    flow_max_iter: int = 5000
    projection_period: int = 10
    max_halvings: int = 30

    def __post_init__(self):
        if self.kappa not in (-1, 1):
            raise ValueError(f"kappa must be -1 or +1, got {self.kappa}")
        for name in ("tol_residual", "tol_eigen", "tol_flow", "flow_step"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


@dataclass(frozen=True)
class Residual:
    """Einstein part (symmetric 2-tensor) and Yang-Mills part (ad 1-form)."""

    e1: SymTensorField
    e2: FormField


def action(g: MetricField, A: ConnectionField, cfg: EymConfig,
           pkg: CurvaturePackage | None = None,
           F: GaugeCurvature | None = None) -> float:
    """Total action: integral of (s^g + kappa |F_A|^2) over the volume."""
    if pkg is None:
        pkg = curvature(g)
    if F is None:
        F = curvature_F(A)
    dens = pkg.scalar.values + cfg.kappa * form_inner_values(F.F, F.F, g)
    return integrate_values(dens, g.grid, g.sqrt_det)


def energy_momentum(g: MetricField, A: ConnectionField, cfg: EymConfig,
                    F: GaugeCurvature | None = None) -> SymTensorField:
    """(kappa/2) |F|^2 g - kappa F o F: the metric variation of the
    Yang-Mills term."""
    if F is None:
        F = curvature_F(A)
    fsq = form_inner_values(F.F, F.F, g)
    ff = circ_gc(F.F, F.F, g)
    vals = 0.5 * cfg.kappa * fsq[..., None, None] * g.mat - cfg.kappa * ff.mat
    return SymTensorField(g.grid, vals)


def reversed_em(g: MetricField, A: ConnectionField, cfg: EymConfig,
                F: GaugeCurvature | None = None) -> SymTensorField:
    """kappa (|F|^2 g /(n-2) - F o F): the source of the Ricci form of the
    Einstein equation."""
    if F is None:
        F = curvature_F(A)
    n = g.grid.n
    fsq = form_inner_values(F.F, F.F, g)
    ff = circ_gc(F.F, F.F, g)
    vals = cfg.kappa * (fsq[..., None, None] * g.mat / (n - 2) - ff.mat)
    return SymTensorField(g.grid, vals)


def residual(g: MetricField, A: ConnectionField, cfg: EymConfig,
             pkg: CurvaturePackage | None = None,
             F: GaugeCurvature | None = None) -> Residual:
    """Full system residual (E1, E2); zero exactly at critical pairs."""
    if pkg is None:
        pkg = curvature(g)
    if F is None:
        F = curvature_F(A)
    T = energy_momentum(g, A, cfg, F)
    e1 = SymTensorField(g.grid, T.mat - pkg.einstein.mat)
    e2 = 2.0 * cfg.kappa * ym_residual(g, A, F, pkg.christoffel)
    return Residual(e1, e2)


def trace_constraint(g: MetricField, A: ConnectionField, cfg: EymConfig,
                     pkg: CurvaturePackage | None = None,
                     F: GaugeCurvature | None = None) -> ScalarField:
    """Scalar constraint s^g - kappa (n-4)/(2-n) |F|^2, which vanishes
    identically on solutions of the Einstein equation.

    In dimension 2 the scalar-curvature coefficient of the traced Einstein
    equation vanishes and the constraint degenerates to |F|^2 = 0, which is
    what is returned there.
    """
    if pkg is None:
        pkg = curvature(g)
    if F is None:
        F = curvature_F(A)
    n = g.grid.n
    fsq = form_inner_values(F.F, F.F, g)
    if n == 2:
        return ScalarField(g.grid, fsq)
    return ScalarField(g.grid, pkg.scalar.values - cfg.kappa * (n - 4) / (2 - n) * fsq)


def residual_norm(g: MetricField, res: Residual) -> float:
    """L2 norm of the residual pair in the metric it was computed at."""
    return l2_norm(DeformationPair(res.e1, res.e2), g)


def divergence_em_defect(g: MetricField, A: ConnectionField, cfg: EymConfig,
                         pkg: CurvaturePackage | None = None,
                         F: GaugeCurvature | None = None) -> ScalarField:
    """Pointwise g-norm of div T(g,A) + kappa <d_A* F, iota F>, an identity
    that holds for every configuration, critical or not."""
    if pkg is None:
        pkg = curvature(g)
    if F is None:
        F = curvature_F(A)
    T = energy_momentum(g, A, cfg, F)
    div_T = divergence_array(T.mat, g, 2, pkg.christoffel)
    ymr = ym_residual(g, A, F, pkg.christoffel)
    # <d_A* F, iota_v F> = -(d_A*F .| F)(v)
    coupling = -lrcorner_c(ymr, F.F, g).dense()
    defect = div_T + cfg.kappa * coupling
    norm = np.sqrt(np.einsum("...i,...j,...ij->...", defect, defect, g.inv))
    return ScalarField(g.grid, norm)


# ---------------------------------------------------------------------------
# slice-projected gradient flow


@dataclass(frozen=True)
class _Eval:
    """Everything the flow needs at one configuration point, computed once."""

    pkg: CurvaturePackage
    F: GaugeCurvature
    res: Residual
    norm: float
    act: float


def _evaluate(g: MetricField, A: ConnectionField, cfg: EymConfig) -> _Eval:
    pkg = curvature(g)
    F = curvature_F(A)
    res = residual(g, A, cfg, pkg, F)
    return _Eval(pkg, F, res, residual_norm(g, res), action(g, A, cfg, pkg, F))


@dataclass(frozen=True)
class FlowState:
    g: MetricField
    A: ConnectionField
    step: float              # proposal for the next iteration
    iteration: int = 0
    cache: _Eval | None = None
    last_step: float = math.nan  # step actually taken to reach this state

    @property
    def residual_norm(self) -> float:
        return self.cache.norm if self.cache is not None else math.nan

    @property
    def action(self) -> float:
        return self.cache.act if self.cache is not None else math.nan


@dataclass(frozen=True)
class FlowResult:
    g: MetricField
    A: ConnectionField
    history: list[dict]
    converged: bool
    message: str


def _velocity(g: MetricField, A: ConnectionField, cfg: EymConfig,
              pkg: CurvaturePackage, F: GaugeCurvature) -> DeformationPair:
    """Descent direction (T_hat - Ric, -d_A^{g*} F_A)."""
    vh = reversed_em(g, A, cfg, F).mat - pkg.ricci.mat
    va = -1.0 * ym_residual(g, A, F, pkg.christoffel)
    return DeformationPair(SymTensorField(g.grid, vh), va)


def flow_step(state: FlowState, cfg: EymConfig,
              project: bool = False) -> FlowState:
    """One explicit step with SPD safeguarding and step halving.

    The step is accepted when the trial metric is SPD and the residual norm
    does not increase; otherwise the step is halved, at most
    cfg.max_halvings times.
    """
    if not state.step > 0:
        raise ValueError("flow step must be positive")
    g, A = state.g, state.A
    cache = state.cache if state.cache is not None else _evaluate(g, A, cfg)
    vel = _velocity(g, A, cfg, cache.pkg, cache.F)
    if project:
        from .deform import slice_project
        vel = slice_project(vel, g, A, cfg, F=cache.F, pkg=cache.pkg)

    step = state.step
    for _ in range(cfg.max_halvings + 1):
        try:
            g_new = MetricField(g.grid, g.mat + step * vel.h.mat)
            g_new.cholesky
        except NonSpdMetricError:
            step *= 0.5
            continue
        A_new = A + step * vel.a
        trial = _evaluate(g_new, A_new, cfg)
        if trial.norm <= cache.norm or trial.norm <= cfg.tol_flow:
            # regrow cautiously toward the nominal step after acceptance
            next_step = min(1.2 * step, cfg.flow_step)
            return FlowState(g_new, A_new, next_step, state.iteration + 1,
                             trial, last_step=step)
        step *= 0.5
    return FlowState(g, A, step, state.iteration + 1, cache,
                     last_step=0.0)


def solve(g0: MetricField, A0: ConnectionField, cfg: EymConfig,
          callback=None) -> FlowResult:
    """Flow from (g0, A0) until the residual L2 norm falls below
    cfg.tol_flow or cfg.flow_max_iter steps are taken.

    Non-convergence is reported in the result, not raised.  The residual
    norm decreases monotonically along accepted steps.
    """
    if not cfg.flow_step > 0:
        raise ValueError("flow step must be positive")
    g0.cholesky
    state = FlowState(g0, A0, cfg.flow_step, 0, _evaluate(g0, A0, cfg))
    history = [_history_row(state)]
    if state.residual_norm <= cfg.tol_flow:
        return FlowResult(g0, A0, history, True, "already critical")

    while state.iteration < cfg.flow_max_iter:
        project = (cfg.projection_period > 0
                   and state.iteration % cfg.projection_period == 0)
        prev_norm = state.residual_norm
        state = flow_step(state, cfg, project=project)
        history.append(_history_row(state))
        if callback is not None:
            callback(state)
        if state.residual_norm <= cfg.tol_flow:
            return FlowResult(state.g, state.A, history, True,
                              f"converged in {state.iteration} iterations")
        if state.residual_norm >= prev_norm and state.step < 1e-15:
            return FlowResult(state.g, state.A, history, False,
                              "stalled: step underflow without progress")
    return FlowResult(state.g, state.A, history, False,
                      f"max_iter reached, residual {state.residual_norm:.3e}")


def _history_row(state: FlowState) -> dict:
    step = state.last_step if not math.isnan(state.last_step) else state.step
    return {"iter": state.iteration, "action": state.action,
            "residual_norm": state.residual_norm, "step": step}
