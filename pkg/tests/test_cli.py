import json

import numpy as np
import pytest

from eymlab.algebra import u1
from eymlab.cli import (build_scenario, load_config, main, read_snapshot,
                        write_snapshot)
from eymlab.eym import EymConfig
from eymlab.fields import MetricField, flat_metric, zero_form
from eymlab.gauge import ConnectionField, u1_flux_connection
from eymlab.lattice import Grid
from eymlab.sampling import random_connection, random_spd_metric
from tests.conftest import asd_flux_components


def write_cfg(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


@pytest.fixture
def flat_cfg(tmp_path):
    return write_cfg(tmp_path, "flat.json", {
        "grid": {"sizes": [6, 6, 6]},
        "algebra": "u1",
        "kappa": -1,
        "checks": {"trials": 3},
    })


@pytest.fixture
def flux_cfg(tmp_path):
    return write_cfg(tmp_path, "flux.json", {
        "grid": {"sizes": [6, 6, 6, 6]},
        "algebra": "u1",
        "kappa": -1,
        "scenario": {"type": "u1_flux",
                     "f0": [1.0, 0.0, 0.0, 0.0, 0.0, -1.0]},
        "checks": {"trials": 3},
    })


class TestVerify:
    def test_flat_passes(self, flat_cfg, tmp_path, capsys):
        assert main(["verify", "--config", flat_cfg]) == 0
        report = json.loads(capsys.readouterr().out)
        assert all(c["pass"] for c in report["checks"])

    def test_flux_scenario_passes(self, flux_cfg, tmp_path):
        out = str(tmp_path / "rep.json")
        assert main(["verify", "--config", flux_cfg, "--out", out]) == 0
        report = json.loads(open(out).read())
        ids = {c["check_id"] for c in report["checks"]}
        assert "complex_onshell_rel" in ids and "self_adjoint_rel" in ids

    def test_perturbed_snapshot_fails(self, flat_cfg, tmp_path):
        grid = Grid((6, 6, 6), (1.0, 1.0, 1.0))
        rng = np.random.default_rng(0)
        g = random_spd_metric(grid, rng, kmax=1, amp=0.05)
        A = random_connection(grid, u1(), rng, kmax=1, amp=0.05)
        snap = str(tmp_path / "p.eymf")
        write_snapshot(snap, g, A, -1, "u1")
        out = str(tmp_path / "rep.json")
        assert main(["verify", "--config", flat_cfg, "--in", snap,
                     "--out", out]) == 1
        report = json.loads(open(out).read())
        failing = {c["check_id"] for c in report["checks"] if not c["pass"]}
        assert "residual_e1_sup" in failing

    def test_invalid_config_exit_2(self, tmp_path):
        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        assert main(["verify", "--config", str(bad)]) == 2
        bad5 = write_cfg(tmp_path, "bad5.json", {"grid": {"sizes": [8] * 5}})
        assert main(["verify", "--config", bad5]) == 2

    def test_determinism(self, flux_cfg, tmp_path):
        out1, out2 = str(tmp_path / "r1.json"), str(tmp_path / "r2.json")
        main(["verify", "--config", flux_cfg, "--seed", "42", "--out", out1])
        main(["verify", "--config", flux_cfg, "--seed", "42", "--out", out2])
        assert open(out1, "rb").read() == open(out2, "rb").read()


class TestSnapshots:
    def test_roundtrip(self, tmp_path, rng):
        grid = Grid((4, 4, 4, 4), (1.0, 1.0, 1.0, 2.0))
        g = random_spd_metric(grid, rng, kmax=1, amp=0.1)
        A = random_connection(grid, u1(), rng, kmax=1, amp=0.3,
                              f_background=asd_flux_components())
        path = str(tmp_path / "s.eymf")
        write_snapshot(path, g, A, -1, "u1")
        g2, A2, meta = read_snapshot(path)
        assert g2.grid == grid
        assert np.array_equal(g2.mat, g.mat)
        assert np.array_equal(A2.a_periodic.comps, A.a_periodic.comps)
        assert np.array_equal(A2.f_background, A.f_background)
        assert meta == {"kappa": -1, "algebra": "u1"}

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "bad.eymf"
        path.write_bytes(b"NOPE" + b"\x00" * 64)
        with pytest.raises(ValueError):
            read_snapshot(str(path))

    def test_verify_roundtrip_identical_reports(self, tmp_path, flux_cfg):
        cfg = load_config(flux_cfg, seed=9)
        g, A = build_scenario(cfg)
        snap = str(tmp_path / "s.eymf")
        write_snapshot(snap, g, A, cfg.eym.kappa, cfg.algebra.name)
        out1, out2 = str(tmp_path / "a.json"), str(tmp_path / "b.json")
        main(["verify", "--config", flux_cfg, "--seed", "9", "--out", out1])
        main(["verify", "--config", flux_cfg, "--seed", "9", "--in", snap,
              "--out", out2])
        assert open(out1).read() == open(out2).read()


class TestFlow:
    def test_critical_start_single_row(self, flux_cfg, tmp_path):
        out = str(tmp_path / "h.csv")
        assert main(["flow", "--config", flux_cfg, "--out", out]) == 0
        lines = open(out).read().strip().splitlines()
        assert lines[0] == "iter,action,residual_norm,step"
        assert len(lines) == 2

    def test_zero_step_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "z.json", {
            "grid": {"sizes": [6, 6, 6]},
            "flow": {"step": 0.0},
        })
        assert main(["flow", "--config", cfg]) == 2

    def test_perturbed_monotone_history(self, tmp_path):
        cfg = write_cfg(tmp_path, "f.json", {
            "grid": {"sizes": [6, 6, 6]},
            "algebra": "u1",
            "flow": {"step": 1e-3, "max_iter": 1500,
                     "projection_period": 10},
            "tol": {"flow": 1e-6},
        })
        out = str(tmp_path / "h.csv")
        code = main(["flow", "--config", cfg, "--seed", "5",
                     "--perturb", "1e-3", "--out", out,
                     "--snapshot-out", str(tmp_path / "end.eymf")])
        assert code == 0
        rows = [line.split(",") for line in
                open(out).read().strip().splitlines()[1:]]
        norms = [float(r[2]) for r in rows]
        steps = [float(r[3]) for r in rows]
        assert norms[-1] <= 1e-6
        for i in range(1, len(norms)):
            assert norms[i] <= norms[i - 1] * (1 + 1e-12) \
                or steps[i] < steps[i - 1]
        g, A, _ = read_snapshot(str(tmp_path / "end.eymf"))
        assert g.grid.sizes == (6, 6, 6)


class TestSpectrumCommand:
    def test_kernel_matches_dense_oracle(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "s.json", {
            "grid": {"sizes": [4, 4]},
            "algebra": "u1",
            "spectrum": {"k": 36},
        })
        assert main(["spectrum", "--config", cfg]) == 0
        payload = json.loads(capsys.readouterr().out)
        from eymlab.deform import dense_laplacian1, kernel_policy
        grid = Grid((4, 4), (1.0, 1.0))
        dense = dense_laplacian1(flat_metric(grid),
                                 ConnectionField(zero_form(grid, 1, u1())),
                                 EymConfig(kappa=-1, algebra=u1()))
        evals = np.linalg.eigvalsh(0.5 * (dense + dense.T))
        dim, _, _ = kernel_policy(evals, 1e-8)
        assert payload["h1"]["kernel_dim"] == dim
        assert not payload["h1"]["ambiguous"]

    def test_k_zero_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "s0.json", {
            "grid": {"sizes": [4, 4]},
            "spectrum": {"k": 0},
        })
        assert main(["spectrum", "--config", cfg]) == 2

    def test_ambiguous_flag_warns_exit_0(self, tmp_path, capsys):
        cfg = write_cfg(tmp_path, "samb.json", {
            "grid": {"sizes": [4, 4]},
            "algebra": "u1",
            "spectrum": {"k": 4},  # all computed eigenvalues sit in the kernel
        })
        assert main(["spectrum", "--config", cfg]) == 0
        captured = capsys.readouterr()
        payload = json.loads(captured.out)
        assert payload["h1"]["ambiguous"]
        assert "ambiguous" in captured.err


class TestSymbolCommand:
    def test_pass_on_elliptic_dimensions(self, tmp_path):
        cfg = write_cfg(tmp_path, "sym.json", {
            "symbol": {"trials": 25, "dims": [3, 4], "alg_dims": [1, 3]},
        })
        assert main(["symbol", "--config", cfg, "--seed", "7"]) == 0

    def test_invalid_dimension_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "sym5.json", {
            "symbol": {"trials": 5, "dims": [5], "alg_dims": [1]},
        })
        assert main(["symbol", "--config", cfg]) == 2


class TestFdcheckCommand:
    def test_small_run_passes(self, tmp_path):
        cfg = write_cfg(tmp_path, "fd.json", {
            "grid": {"sizes": [8, 8, 8]},
            "algebra": "su2",
        })
        out = str(tmp_path / "fd.json.out")
        assert main(["fdcheck", "--config", cfg, "--seed", "3",
                     "--out", out]) == 0
        report = json.loads(open(out).read())
        orders = [c for c in report["checks"]
                  if c["check_id"].endswith("order_ratio_inv")]
        assert orders and all(c["pass"] for c in orders)

    def test_bad_eps_exit_2(self, tmp_path):
        cfg = write_cfg(tmp_path, "fdbad.json", {
            "fdcheck": {"eps": [1e-3, 1e-2]},
        })
        assert main(["fdcheck", "--config", cfg]) == 2
