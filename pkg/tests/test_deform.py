import numpy as np
import pytest

from eymlab.algebra import su2, u1
from eymlab.deform import (InfAutomorphism, PairContext, adjoint_defect,
                           aut_inner, complex_defect, conformal_coefficient,
                           conformal_operator, conformal_spectrum,
                           deformation_kernel_residual, dense_laplacian1,
                           essential_spectrum, essential_system_residual,
                           inf_action, inf_action_adjoint, kernel_policy,
                           laplacian1_apply, lin_residual, obstruction_class,
                           offshell_identity_defect, pure_gauge_deformation_check,
                           self_adjoint_defect, slice_condition_residual,
                           slice_project, slice_second_order_defect,
                           symbol_check, symmetry_spectrum, trace_lemma_defect)
from eymlab.eym import EymConfig, residual
from eymlab.fields import (DeformationPair, FormField, MetricField,
                           SymTensorField, flat_metric, increasing_indices,
                           l2_inner, l2_norm, traceless_part, zero_form)
from eymlab.gauge import (ConnectionField, curvature_F, d_A, flat_connection,
                          u1_flux_connection)
from eymlab.lattice import Grid, ScalarField
from eymlab.riemann import interior_product, laplacian_scalar, sym_derivative
from eymlab.sampling import (band_limited_array, band_limited_scalar,
                             random_connection, random_deformation,
                             random_form, random_spd_metric, random_sym_tensor)
from tests.conftest import asd_flux_components


@pytest.fixture(scope="module")
def instanton():
    grid = Grid((6, 6, 6, 6), (1.0, 1.0, 1.0, 1.0))
    g = flat_metric(grid)
    A = u1_flux_connection(grid, u1(), asd_flux_components())
    cfg = EymConfig(kappa=-1, algebra=u1())
    return grid, g, A, cfg, PairContext.build(g, A, cfg)


@pytest.fixture(scope="module")
def curved_su2():
    grid = Grid((16, 16, 16), (1.0, 1.0, 1.0))
    rng = np.random.default_rng(55)
    g = random_spd_metric(grid, rng, kmax=1, amp=0.04)
    A = random_connection(grid, su2(), rng, kmax=1, amp=0.3)
    cfg = EymConfig(kappa=-1, algebra=su2())
    return grid, g, A, cfg, PairContext.build(g, A, cfg)


class TestInfAction:
    def test_zero(self, grid3):
        g = flat_metric(grid3)
        A = flat_connection(grid3, su2())
        x = InfAutomorphism(np.zeros(grid3.sizes + (3,)),
                            np.zeros(grid3.sizes + (3,)))
        p = inf_action(x, g, A)
        assert p.sup_norm == 0.0

    def test_constant_translation_is_symmetry(self, grid3):
        g = flat_metric(grid3)
        A = flat_connection(grid3, su2())
        v = np.broadcast_to(np.array([1.0, 0.5, -0.25]),
                            grid3.sizes + (3,)).copy()
        x = InfAutomorphism(v, np.zeros(grid3.sizes + (3,)))
        assert inf_action(x, g, A).sup_norm == 0.0

    def test_flux_contraction(self, instanton):
        grid, g, A, cfg, ctx = instanton
        v = np.zeros(grid.sizes + (4,))
        v[..., 0] = 1.0
        x = InfAutomorphism(v, np.zeros(grid.sizes + (1,)))
        p = inf_action(x, g, A, ctx)
        assert p.h.sup_norm == 0.0
        expected = np.zeros((4, 1))
        expected[1, 0] = 1.0  # iota_{e1}(dx1^dx2 - dx3^dx4) = dx2
        assert np.allclose(p.a.comps[0, 0, 0, 0], expected)

    def test_adjoint_flat_reduction(self, grid3, rng):
        # with F = 0 the adjoint reduces to (2 (div h)#, d* a) componentwise
        g = flat_metric(grid3)
        A = flat_connection(grid3, su2())
        ctx = PairContext.build(g, A, EymConfig(algebra=su2()))
        p = random_deformation(grid3, su2(), rng, kmax=1, amp=1.0)
        out = inf_action_adjoint(p, g, A, ctx)
        from eymlab.riemann import d_star, divergence_array
        div_h = divergence_array(p.h.mat, g, 2, ctx.gamma)
        assert np.max(np.abs(out.v - 2.0 * div_h)) <= 1e-12
        dsa = d_star(p.a, g, ctx.gamma)
        assert np.max(np.abs(out.tau - dsa.comps[..., 0, :])) <= 1e-12

    def test_constant_h_flat_gives_zero(self, grid3):
        g = flat_metric(grid3)
        A = flat_connection(grid3, su2())
        h = SymTensorField(grid3, np.broadcast_to(np.diag([1.0, 2.0, -1.0]),
                                                  grid3.sizes + (3, 3)).copy())
        p = DeformationPair(h, zero_form(grid3, 1, su2()))
        out = inf_action_adjoint(p, g, A)
        assert max(np.max(np.abs(out.v)), np.max(np.abs(out.tau))) == 0.0

    def test_adjointness(self, curved_su2):
        grid, g, A, cfg, ctx = curved_su2
        rng = np.random.default_rng(3)
        assert adjoint_defect(g, A, cfg, trials=5, rng=rng, ctx=ctx) <= 1e-10


class TestLinResidual:
    def test_zero_direction(self, instanton):
        grid, g, A, cfg, ctx = instanton
        p = DeformationPair(
            SymTensorField(grid, np.zeros(grid.sizes + (4, 4))),
            zero_form(grid, 1, u1()))
        assert lin_residual(p, g, A, cfg, ctx).sup_norm == 0.0

    def test_branches_agree_at_critical_pair(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        p = random_deformation(grid, u1(), rng, kmax=1, amp=1.0)
        general = lin_residual(p, g, A, cfg, ctx, on_shell=False)
        onshell = lin_residual(p, g, A, cfg, ctx, on_shell=True)
        assert np.max(np.abs(general.h.mat - onshell.h.mat)) <= 1e-9
        assert np.max(np.abs(general.a.comps - onshell.a.comps)) <= 1e-9

    def test_finite_difference_consistency(self, curved_su2):
        grid, g, A, cfg, ctx = curved_su2
        rng = np.random.default_rng(7)
        p = random_deformation(grid, su2(), rng, kmax=1, amp=0.3)
        lin = lin_residual(p, g, A, cfg, ctx)
        errs = []
        for eps in (1e-2, 1e-3):
            rp = residual(MetricField(grid, g.mat + eps * p.h.mat),
                          A + (eps * p.a), cfg)
            rm = residual(MetricField(grid, g.mat - eps * p.h.mat),
                          A + (-eps * p.a), cfg)
            errs.append(max(
                float(np.max(np.abs((rp.e1.mat - rm.e1.mat) / (2 * eps)
                                    - lin.h.mat))),
                float(np.max(np.abs((rp.e2.comps - rm.e2.comps) / (2 * eps)
                                    - lin.a.comps)))))
        assert errs[0] / max(errs[1], 1e-300) >= 3.5
        assert errs[1] <= 1e-4

    def test_flat_pair_closed_form_metric_block(self):
        grid = Grid((8, 8, 8), (1.0, 1.0, 1.0))
        g = flat_metric(grid)
        A = flat_connection(grid, u1())
        cfg = EymConfig(kappa=-1, algebra=u1())
        x = grid.coordinate_mesh()
        s = np.sin(2 * np.pi * x[0])
        hm = np.zeros(grid.sizes + (3, 3))
        hm[..., 1, 1] = s
        p = DeformationPair(SymTensorField(grid, hm), zero_form(grid, 1, u1()))
        out = lin_residual(p, g, A, cfg)
        # all terms evaluate in closed form: e1 = (2 pi)^2 sin(2 pi x1)/2 E33
        expected = np.zeros(grid.sizes + (3, 3))
        expected[..., 2, 2] = 0.5 * (2 * np.pi) ** 2 * s
        assert np.max(np.abs(out.h.mat - expected)) <= 1e-10
        assert out.a.sup_norm == 0.0

    def test_abelian_gauge_block(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        a = random_form(grid, rng, 1, u1(), kmax=1, amp=1.0)
        p = DeformationPair(SymTensorField(grid, np.zeros(grid.sizes + (4, 4))), a)
        out = lin_residual(p, g, A, cfg, ctx)
        from eymlab.gauge import d_A_star
        expected = 2.0 * cfg.kappa * d_A_star(d_A(a, A), A, g, ctx.gamma)
        assert np.max(np.abs(out.a.comps - expected.comps)) <= 1e-11


class TestComplexAndSelfAdjoint:
    def test_flat_pair(self, flat_pair3, rng):
        g, A, cfg = flat_pair3
        rep = complex_defect(g, A, cfg, trials=10, rng=rng)
        assert rep.on_shell_defect <= 1e-9
        assert rep.off_shell_defect <= 1e-8
        assert self_adjoint_defect(g, A, cfg, trials=10, rng=rng) <= 1e-9

    def test_instanton_pair(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        rep = complex_defect(g, A, cfg, trials=10, rng=rng, ctx=ctx)
        assert rep.on_shell_defect <= 1e-9
        assert self_adjoint_defect(g, A, cfg, trials=10, rng=rng, ctx=ctx) <= 1e-9

    def test_off_shell_identity_random_pairs(self, rng):
        grid = Grid((16, 16, 16), (1.0, 1.0, 1.0))
        cfg = EymConfig(kappa=-1, algebra=su2())
        for _ in range(3):
            g = random_spd_metric(grid, rng, kmax=1, amp=0.04)
            A = random_connection(grid, su2(), rng, kmax=1, amp=0.4)
            assert offshell_identity_defect(g, A, cfg) <= 1e-8

    def test_self_adjoint_warns_off_shell(self, rng):
        grid = Grid((8, 8, 8), (1.0, 1.0, 1.0))
        g = random_spd_metric(grid, rng, kmax=1, amp=0.05)
        A = random_connection(grid, su2(), rng, kmax=1, amp=0.5)
        cfg = EymConfig(kappa=-1, algebra=su2())
        with pytest.warns(UserWarning):
            self_adjoint_defect(g, A, cfg, trials=2, rng=rng)


class TestSliceProjection:
    def test_projection_lands_on_slice(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        p = random_deformation(grid, u1(), rng, kmax=1, amp=1.0)
        q = slice_project(p, g, A, cfg)
        assert slice_condition_residual(q, g, A, ctx) <= 1e-10

    def test_projection_is_orthogonal(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        p = random_deformation(grid, u1(), rng, kmax=1, amp=1.0)
        q = slice_project(p, g, A, cfg)
        x = InfAutomorphism(band_limited_array(grid, rng, (4,), 1, 1.0),
                            band_limited_array(grid, rng, (1,), 1, 1.0))
        val = l2_inner(q, inf_action(x, g, A, ctx), g)
        scale = l2_norm(q, g) * l2_norm(inf_action(x, g, A, ctx), g)
        assert abs(val) <= 1e-9 * max(scale, 1e-300)


class TestLaplacianSpectra:
    def test_psd_and_symmetric(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        for _ in range(3):
            p = random_deformation(grid, u1(), rng, kmax=1, amp=1.0)
            q = random_deformation(grid, u1(), rng, kmax=1, amp=1.0)
            lp = laplacian1_apply(p, g, A, cfg, ctx)
            lq = laplacian1_apply(q, g, A, cfg, ctx)
            quad = l2_inner(lp, p, g)
            assert quad >= -1e-10 * max(l2_norm(p, g) ** 2, 1.0)
            sym = abs(l2_inner(lp, q, g) - l2_inner(p, lq, g))
            scale = l2_norm(lp, g) * l2_norm(q, g) + 1e-300
            assert sym <= 1e-10 * scale

    def test_dense_oracle_matches_iterative(self):
        grid = Grid((4, 4), (1.0, 1.0))
        g = flat_metric(grid)
        A = flat_connection(grid, u1())
        cfg = EymConfig(kappa=-1, algebra=u1())
        ctx = PairContext.build(g, A, cfg)
        dense = dense_laplacian1(g, A, cfg, ctx)
        assert np.max(np.abs(dense - dense.T)) <= 1e-12
        evals = np.linalg.eigvalsh(0.5 * (dense + dense.T))
        dim_dense, _, amb_dense = kernel_policy(evals, cfg.tol_eigen)
        assert not amb_dense
        rep = essential_spectrum(g, A, cfg, k=dim_dense + 4, ctx=ctx)
        assert rep.method == "iterative"
        assert rep.kernel_dim == dim_dense
        for got, want in zip(rep.eigenvalues, evals[:dim_dense + 4]):
            if want > 1e-8:
                assert abs(got - want) <= 1e-8 * want

    def test_kernel_contains_constants(self):
        grid = Grid((4, 4), (1.0, 1.0))
        g = flat_metric(grid)
        A = flat_connection(grid, u1())
        cfg = EymConfig(kappa=-1, algebra=u1())
        ctx = PairContext.build(g, A, cfg)
        hm = np.broadcast_to(np.diag([1.0, -1.0]), grid.sizes + (2, 2)).copy()
        ac = np.ones(grid.sizes + (2, 1))
        p = DeformationPair(SymTensorField(grid, hm),
                            FormField(grid, 1, ac, u1()))
        out = laplacian1_apply(p, g, A, cfg, ctx)
        assert out.sup_norm <= 1e-12

    def test_symmetry_spectrum_flat(self):
        grid = Grid((4, 4), (1.0, 1.0))
        g = flat_metric(grid)
        A = flat_connection(grid, u1())
        cfg = EymConfig(kappa=-1, algebra=u1())
        rep = symmetry_spectrum(g, A, cfg, k=16)
        assert rep.kernel_dim == 12  # constants plus pure-Nyquist null modes
        assert not rep.ambiguous

    def test_spectrum_k_validation(self, instanton):
        grid, g, A, cfg, ctx = instanton
        with pytest.raises(ValueError):
            essential_spectrum(g, A, cfg, k=0, ctx=ctx)


class TestEssentialSystem:
    def test_zero(self, instanton):
        grid, g, A, cfg, ctx = instanton
        p = DeformationPair(SymTensorField(grid, np.zeros(grid.sizes + (4, 4))),
                            zero_form(grid, 1, u1()))
        rep = essential_system_residual(p, g, A, cfg, ctx)
        assert all(v.sup == 0.0 for v in rep.values())

    def test_constants_on_flat_pair(self, flat_pair3):
        g, A, cfg = flat_pair3
        grid = g.grid
        hm = np.broadcast_to(np.diag([1.0, -2.0, 0.5]),
                             grid.sizes + (3, 3)).copy()
        ac = np.ones(grid.sizes + (3, 3)) * 0.3
        p = DeformationPair(SymTensorField(grid, hm),
                            FormField(grid, 1, ac, su2()))
        rep = essential_system_residual(p, g, A, cfg)
        assert all(v.sup <= 1e-13 for v in rep.values())

    def test_symmetry_directions_in_kernel(self, flat_pair3, rng):
        g, A, cfg = flat_pair3
        grid = g.grid
        v = np.broadcast_to(np.array([0.2, -0.1, 0.7]), grid.sizes + (3,)).copy()
        x = InfAutomorphism(v, np.zeros(grid.sizes + (3,)))
        p = inf_action(x, g, A)
        rep = essential_system_residual(p, g, A, cfg)
        assert all(v_.sup <= 1e-12 for v_ in rep.values())


class TestTraceAndSliceLemmas:
    def test_constant_deformation(self, instanton):
        grid, g, A, cfg, ctx = instanton
        hm = np.broadcast_to(np.diag([1.0, -1.0, 0.0, 0.0]),
                             grid.sizes + (4, 4)).copy()
        p = DeformationPair(SymTensorField(grid, hm), zero_form(grid, 1, u1()))
        defect = trace_lemma_defect(p, g, A, cfg, ctx)
        assert np.max(np.abs(defect.values)) <= 1e-13
        s2 = slice_second_order_defect(p, g, A, ctx)
        assert np.max(np.abs(s2.values)) <= 1e-13

    def test_gauge_directions_n4(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        x = InfAutomorphism(band_limited_array(grid, rng, (4,), 1, 1.0),
                            band_limited_array(grid, rng, (1,), 1, 1.0))
        p = inf_action(x, g, A, ctx)
        assert deformation_kernel_residual(p, g, A, cfg, ctx) <= 1e-9
        defect = trace_lemma_defect(p, g, A, cfg, ctx, hypothesis_tol=1e-8)
        assert np.max(np.abs(defect.values)) <= 1e-9

    def test_gauge_directions_n3(self, flat_pair3, rng):
        g, A, cfg = flat_pair3
        grid = g.grid
        x = InfAutomorphism(band_limited_array(grid, rng, (3,), 1, 1.0),
                            band_limited_array(grid, rng, (3,), 1, 1.0))
        p = inf_action(x, g, A)
        defect = trace_lemma_defect(p, g, A, cfg, hypothesis_tol=1e-8)
        assert np.max(np.abs(defect.values)) <= 1e-9

    def test_slice_second_order_on_projected_input(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        p = slice_project(random_deformation(grid, u1(), rng, kmax=1, amp=1.0),
                          g, A, cfg)
        defect = slice_second_order_defect(p, g, A, ctx, hypothesis_tol=1e-8)
        assert np.max(np.abs(defect.values)) <= 1e-9

    def test_out_of_hypothesis_probe(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        p = random_deformation(grid, u1(), rng, kmax=1, amp=1.0)
        with pytest.warns(UserWarning):
            defect = slice_second_order_defect(p, g, A, ctx,
                                               hypothesis_tol=1e-8)
        assert np.max(np.abs(defect.values)) > 1e-3


class TestObstruction:
    def test_zero_input(self, instanton):
        grid, g, A, cfg, ctx = instanton
        zero_h = SymTensorField(grid, np.zeros(grid.sizes + (4, 4)))
        cls, rep = obstruction_class(zero_h, zero_form(grid, 1, u1()),
                                     g, A, cfg, ctx)
        assert rep["class_sup"] == 0.0
        assert rep["traceless_coupling_integral"] == 0.0

    def test_exact_input_has_trivial_class(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        u = random_form(grid, rng, 1, None, kmax=1, amp=1.0)
        u = FormField(grid, 1, u.comps - np.mean(u.comps.reshape(-1, 4), axis=0))
        h_o = traceless_part(sym_derivative(u, g), g)
        cls, rep = obstruction_class(h_o, zero_form(grid, 1, u1()),
                                     g, A, cfg, ctx)
        assert rep["class_sup"] <= 1e-10

    def test_constant_contraction_detected(self, instanton):
        grid, g, A, cfg, ctx = instanton
        ac = np.zeros(grid.sizes + (4, 1))
        ac[..., 0, 0] = 1.0
        a = FormField(grid, 1, ac, u1())
        zero_h = SymTensorField(grid, np.zeros(grid.sizes + (4, 4)))
        cls, rep = obstruction_class(zero_h, a, g, A, cfg, ctx)
        assert rep["class_sup"] >= 0.5

    def test_needs_n3(self, rng):
        grid = Grid((4, 4), (1.0, 1.0))
        g = flat_metric(grid)
        A = flat_connection(grid, u1())
        with pytest.raises(ValueError):
            obstruction_class(SymTensorField(grid, np.zeros(grid.sizes + (2, 2))),
                              zero_form(grid, 1, u1()), g, A)


class TestConformal:
    def test_reduces_to_laplacian_without_curvature(self, grid3, rng):
        g = flat_metric(grid3)
        A = flat_connection(grid3, u1())
        cfg = EymConfig(kappa=-1, algebra=u1())
        f = ScalarField(grid3, band_limited_scalar(grid3, rng, 2, 1.0))
        out = conformal_operator(f, g, A, cfg)
        assert np.max(np.abs(out.values - laplacian_scalar(f.values, g))) == 0.0
        const = ScalarField(grid3, np.ones(grid3.sizes))
        assert np.max(np.abs(conformal_operator(const, g, A, cfg).values)) == 0.0

    def test_dimension_four_coefficient_vanishes(self, instanton, rng):
        grid, g, A, cfg, ctx = instanton
        assert conformal_coefficient(4, -1) == 0.0
        assert conformal_coefficient(4, 1) == 0.0
        f = ScalarField(grid, band_limited_scalar(grid, rng, 1, 1.0))
        out = conformal_operator(f, g, A, cfg, ctx)
        assert np.max(np.abs(out.values - laplacian_scalar(f.values, g))) == 0.0

    def test_n3_constant_flux_shifted_spectrum(self):
        grid = Grid((8, 8, 8), (1.0, 1.0, 1.0))
        idx = increasing_indices(3, 2)
        f0 = np.zeros((3, 1))
        f0[idx.index((0, 1)), 0] = 1.3
        A = u1_flux_connection(grid, u1(), f0)
        g = flat_metric(grid)
        cfg = EymConfig(kappa=-1, algebra=u1())
        spec = conformal_spectrum(g, A, cfg, k=4)
        shift = conformal_coefficient(3, -1) * 1.3 ** 2
        assert spec["smallest_eigenvalue"] == pytest.approx(shift, abs=1e-9)
        assert not spec["has_kernel"]


class TestSymbols:
    def test_flat_n4_rank_counts(self):
        rep = symbol_check(np.eye(4), np.array([1.0, 0, 0, 0]), u1(), kappa=-1)
        assert rep.ranks == (5, 9, 5)
        assert rep.dims == (5, 14, 14, 5)
        assert rep.exact

    def test_zero_covector_rejected(self):
        with pytest.raises(ValueError):
            symbol_check(np.eye(3), np.zeros(3), u1())

    @pytest.mark.parametrize("n", [3, 4])
    @pytest.mark.parametrize("alg_name", ["u1", "su2"])
    def test_monte_carlo_exactness(self, n, alg_name, rng):
        alg = u1() if alg_name == "u1" else su2()
        for _ in range(100):
            X = rng.standard_normal((n, n)) * 0.5
            gp = X @ X.T + np.eye(n)
            xi = rng.standard_normal(n)
            kappa = -1 if rng.random() < 0.5 else 1
            assert symbol_check(gp, xi, alg, kappa).exact

    def test_two_dimensional_metric_sequence_degenerates(self, rng):
        # the linearized-Einstein symbol vanishes identically in dimension 2,
        # so the metric half of the sequence cannot be exact there
        X = rng.standard_normal((2, 2)) * 0.5
        gp = X @ X.T + np.eye(2)
        rep = symbol_check(gp, rng.standard_normal(2), u1())
        assert not rep.exact


class TestPureGauge:
    def test_flat_constants(self, flat_pair3):
        g, A, cfg = flat_pair3
        grid = g.grid
        ac = np.ones(grid.sizes + (3, 3)) * 0.5
        rep = pure_gauge_deformation_check(FormField(grid, 1, ac, su2()),
                                           g, A, cfg)
        assert all(v.sup == 0.0 for v in rep.values())

    def test_gauge_direction_of_parallel_section(self, flat_pair3):
        g, A, cfg = flat_pair3
        grid = g.grid
        tau = np.broadcast_to(np.array([1.0, 0.0, 0.0]),
                              grid.sizes + (3,)).copy()
        a = d_A(FormField(grid, 0, tau[..., None, :], su2()), A)
        rep = pure_gauge_deformation_check(a, g, A, cfg)
        assert all(v.sup <= 1e-13 for v in rep.values())

    def test_flux_pair_mixed_conditions(self, instanton):
        grid, g, A, cfg, ctx = instanton
        ac = np.zeros(grid.sizes + (4, 1))
        ac[..., 2, 0] = 1.0  # dx3 touches the flux through the (3,4)-plane
        rep = pure_gauge_deformation_check(FormField(grid, 1, ac, u1()),
                                           g, A, cfg, ctx)
        assert rep["jacobi_equation"].sup <= 1e-13
        assert rep["coclosed"].sup <= 1e-13
        assert rep["energy_momentum"].sup <= 1e-13
        assert rep["curvature_orthogonality"].sup == pytest.approx(1.0)
