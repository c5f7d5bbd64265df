"""Command-line front end: configuration, snapshot I/O, check suites, flow
runs, spectrum computations, and machine-readable reports.

Commands: verify | flow | spectrum | symbol | fdcheck.  Exit codes: 0 all
checks pass, 1 a check failed, 2 invalid input.  Reports are byte-identical
across runs for identical configuration and seed; wall-clock timings go to
stderr (and into the report only on request) to keep that guarantee.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import struct
import sys
import time
from dataclasses import dataclass, field

import numpy as np

from . import __version__
from .algebra import LieAlgebraData, builtin_algebra, load_algebra, validate
from .asd4 import asd_residual
from .deform import (PairContext, complex_defect, essential_spectrum,
                     self_adjoint_defect, symbol_check, symmetry_spectrum)
from .eym import (EymConfig, divergence_em_defect, residual, residual_norm,
                  solve, trace_constraint)
from .fields import (FormField, MetricField, hodge_star, increasing_indices,
                     flat_metric, zero_form)
from .gauge import ConnectionField, curvature_F, u1_flux_connection
from .lattice import Grid
from .riemann import curvature, lin_einstein, lin_ricci, lin_scalar, lin_star, lin_volume
from .sampling import (band_limited_array, random_connection,
                       random_deformation, random_form, random_spd_metric,
                       random_sym_tensor)

SNAPSHOT_MAGIC = b"EYMF"
SNAPSHOT_VERSION = 1


# ---------------------------------------------------------------------------
# configuration


_DEFAULTS = {
    "grid": {"sizes": [8, 8, 8, 8], "lengths": None},
    "algebra": "u1",
    "kappa": -1,
    "scenario": {"type": "flat"},
    "tol": {"residual": 1e-9, "eigen": 1e-8, "flow": 1e-6,
            "flat_check": 1e-12, "divergence": 1e-8, "complex": 1e-9,
            "self_adjoint": 1e-9, "trace": 1e-9},
    "flow": {"step": 4e-4, "max_iter": 5000, "projection_period": 10},
    "spectrum": {"k": 8, "method": "iterative"},
    "symbol": {"trials": 1000, "dims": [2, 3, 4], "alg_dims": [1, 3],
               "tol": 1e-9},
    "fdcheck": {"eps": [1e-2, 1e-3], "min_order_ratio": 3.5,
                "max_abs_error": 1e-5, "metric_amp": 0.005,
                "direction_amp": 0.25},
    "checks": {"trials": 20},
}


@dataclass
class RunConfig:
    """Validated run configuration assembled from JSON plus defaults."""

    raw: dict
    grid: Grid
    algebra: LieAlgebraData
    eym: EymConfig
    scenario: dict
    seed: int = 0

    @classmethod
    def from_dict(cls, data: dict, seed: int = 0) -> "RunConfig":
        merged = _merge(_DEFAULTS, data)
        gspec = merged["grid"]
        sizes = tuple(int(s) for s in gspec["sizes"])
        lengths = gspec.get("lengths") or [1.0] * len(sizes)
        grid = Grid(sizes, tuple(float(x) for x in lengths))
        alg_spec = merged["algebra"]
        if isinstance(alg_spec, dict):
            algebra = load_algebra(alg_spec["file"])
        else:
            algebra = builtin_algebra(str(alg_spec))
        report = validate(algebra)
        if not report.ok:
            raise ValueError("algebra rejected: " + "; ".join(report.defects))
        tol = merged["tol"]
        flow = merged["flow"]
        eym = EymConfig(
            kappa=int(merged["kappa"]), algebra=algebra,
            tol_residual=float(tol["residual"]), tol_eigen=float(tol["eigen"]),
            tol_flow=float(tol["flow"]), flow_step=float(flow["step"]),
            flow_max_iter=int(flow["max_iter"]),
            projection_period=int(flow["projection_period"]))
        if not eym.flow_step > 0:
            raise ValueError("flow.step must be positive")
        return cls(merged, grid, algebra, eym, merged["scenario"], seed)


def _merge(defaults: dict, override: dict) -> dict:
    out = {}
    for key, val in defaults.items():
        if key in override and isinstance(val, dict) and isinstance(override[key], dict):
            out[key] = _merge(val, override[key])
        elif key in override:
            out[key] = override[key]
        else:
            out[key] = val
    for key, val in override.items():
        if key not in out:
            out[key] = val
    return out


def load_config(path: str | None, seed: int = 0) -> RunConfig:
    data = {}
    if path is not None:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    return RunConfig.from_dict(data, seed)


# ---------------------------------------------------------------------------
# scenarios and snapshots


def build_scenario(cfg: RunConfig) -> tuple[MetricField, ConnectionField]:
    kind = cfg.scenario.get("type", "flat")
    grid, alg = cfg.grid, cfg.algebra
    if kind == "flat":
        return flat_metric(grid), ConnectionField(zero_form(grid, 1, alg))
    if kind == "u1_flux":
        comps = np.asarray(cfg.scenario["f0"], dtype=float)
        ncomp2 = len(increasing_indices(grid.n, 2))
        f0 = comps.reshape(ncomp2, alg.dim)
        return flat_metric(grid), u1_flux_connection(grid, alg, f0)
    if kind == "file":
        g, A, _meta = read_snapshot(cfg.scenario["path"])
        return g, A
    raise ValueError(f"unknown scenario type {kind!r}")


def write_snapshot(path: str, g: MetricField, A: ConnectionField,
                   kappa: int, algebra_name: str):
    """Binary snapshot: header (magic, version, n, sizes, lengths, algebra
    name, fiber dim, kappa) then little-endian doubles, row-major sites,
    metric components (i <= j lexicographic), then potential components,
    then the constant background-flux components."""
    grid = g.grid
    n, d = grid.n, A.algebra.dim
    pairs = [(i, j) for i in range(n) for j in range(i, n)]
    with open(path, "wb") as fh:
        fh.write(SNAPSHOT_MAGIC)
        fh.write(struct.pack("<II", SNAPSHOT_VERSION, n))
        fh.write(struct.pack(f"<{n}I", *grid.sizes))
        fh.write(struct.pack(f"<{n}d", *grid.lengths))
        name = algebra_name.encode()
        fh.write(struct.pack("<I", len(name)))
        fh.write(name)
        fh.write(struct.pack("<Id", d, float(kappa)))
        gdata = np.stack([g.mat[..., i, j] for (i, j) in pairs], axis=-1)
        fh.write(gdata.astype("<f8").tobytes())
        fh.write(A.a_periodic.dense().astype("<f8").tobytes())
        ncomp2 = len(increasing_indices(n, 2))
        f0 = A.f_background if A.f_background is not None \
            else np.zeros((ncomp2, d))
        fh.write(f0.astype("<f8").tobytes())


def read_snapshot(path: str) -> tuple[MetricField, ConnectionField, dict]:
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != SNAPSHOT_MAGIC:
            raise ValueError(f"not a snapshot file: bad magic {magic!r}")
        version, n = struct.unpack("<II", fh.read(8))
        if version != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {version}")
        sizes = struct.unpack(f"<{n}I", fh.read(4 * n))
        lengths = struct.unpack(f"<{n}d", fh.read(8 * n))
        (name_len,) = struct.unpack("<I", fh.read(4))
        name = fh.read(name_len).decode()
        d, kappa = struct.unpack("<Id", fh.read(12))
        grid = Grid(tuple(sizes), tuple(lengths))
        alg = builtin_algebra(name)
        if alg.dim != d:
            raise ValueError(f"algebra {name} has dim {alg.dim}, snapshot says {d}")
        pairs = [(i, j) for i in range(n) for j in range(i, n)]
        m = len(pairs)
        nsites = grid.nsites
        gdata = np.frombuffer(fh.read(8 * nsites * m), dtype="<f8")
        gdata = gdata.reshape(grid.sizes + (m,))
        gmat = np.zeros(grid.sizes + (n, n))
        for c, (i, j) in enumerate(pairs):
            gmat[..., i, j] = gdata[..., c]
            gmat[..., j, i] = gdata[..., c]
        adata = np.frombuffer(fh.read(8 * nsites * n * d), dtype="<f8")
        adata = adata.reshape(grid.sizes + (n, d))
        ncomp2 = len(increasing_indices(n, 2))
        f0 = np.frombuffer(fh.read(8 * ncomp2 * d), dtype="<f8").reshape(ncomp2, d)
        f0 = f0 if np.any(f0) else None
        g = MetricField(grid, gmat)
        A = ConnectionField(FormField.from_dense(grid, 1, adata, alg), f0)
        return g, A, {"kappa": int(kappa), "algebra": name}


# ---------------------------------------------------------------------------
# reports


@dataclass
class CheckReport:
    """List of checks with values and tolerances plus run metadata."""

    checks: list[dict] = field(default_factory=list)
    metadata: dict = field(default_factory=dict)

    def add(self, check_id: str, value: float, tolerance: float):
        self.checks.append({
            "check_id": check_id,
            "value": float(value),
            "tolerance": float(tolerance),
            "pass": bool(value <= tolerance),
        })

    @property
    def all_pass(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_json(self) -> str:
        return json.dumps({"checks": self.checks, "metadata": self.metadata},
                          indent=2, sort_keys=True) + "\n"

    def to_csv(self) -> str:
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["check_id", "value", "tolerance", "pass"])
        for c in self.checks:
            writer.writerow([c["check_id"], repr(c["value"]),
                             repr(c["tolerance"]), c["pass"]])
        return buf.getvalue()


def _report_metadata(cfg: RunConfig, timing: float | None = None) -> dict:
    meta = {
        "grid": {"sizes": list(cfg.grid.sizes),
                 "lengths": list(cfg.grid.lengths)},
        "algebra": cfg.algebra.name,
        "kappa": cfg.eym.kappa,
        "seed": cfg.seed,
        "versions": {"eymlab": __version__, "numpy": np.__version__},
    }
    if timing is not None:
        meta["wall_time_s"] = timing
    return meta


def _emit(report: CheckReport, out: str | None, fmt: str):
    text = report.to_json() if fmt == "json" else report.to_csv()
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)


# ---------------------------------------------------------------------------
# commands


def cmd_verify(cfg: RunConfig, out: str | None = None, fmt: str = "json",
               with_timing: bool = False) -> int:
    """System residuals, trace constraint, divergence identity, and the
    on/off-shell complex identities on the configured scenario."""
    t0 = time.perf_counter()
    g, A = build_scenario(cfg)
    tol = cfg.raw["tol"]
    trials = int(cfg.raw["checks"]["trials"])
    rng = np.random.default_rng(cfg.seed)
    ctx = PairContext.build(g, A, cfg.eym)

    report = CheckReport()
    res = residual(g, A, cfg.eym, ctx.pkg, ctx.F)
    rnorm = residual_norm(g, res)
    report.add("residual_e1_sup", res.e1.sup_norm, tol["residual"])
    report.add("residual_e2_sup", res.e2.sup_norm, tol["residual"])
    S = trace_constraint(g, A, cfg.eym, ctx.pkg, ctx.F)
    report.add("trace_constraint_sup", float(np.max(np.abs(S.values))),
               tol["trace"])
    dd = divergence_em_defect(g, A, cfg.eym, ctx.pkg, ctx.F)
    scale = max(curvature_F(A).F.sup_norm ** 2, 1.0)
    report.add("divergence_em_defect_rel", float(np.max(dd.values)) / scale,
               tol["divergence"])
    crep = complex_defect(g, A, cfg.eym, trials=trials, rng=rng, ctx=ctx)
    report.add("offshell_identity_rel", crep.off_shell_defect, tol["divergence"])
    if rnorm <= 1e3 * cfg.eym.tol_residual:
        report.add("complex_onshell_rel", crep.on_shell_defect, tol["complex"])
        sa = self_adjoint_defect(g, A, cfg.eym, trials=trials, rng=rng, ctx=ctx)
        report.add("self_adjoint_rel", sa, tol["self_adjoint"])
    report.metadata = _report_metadata(
        cfg, time.perf_counter() - t0 if with_timing else None)
    _emit(report, out, fmt)
    return 0 if report.all_pass else 1


def cmd_flow(cfg: RunConfig, out: str | None = None,
             snapshot_out: str | None = None, fmt: str = "csv",
             perturb: float | None = None) -> int:
    """Run the gradient flow from the scenario (optionally perturbed) and
    stream the history as CSV (iter, action, residual_norm, step)."""
    g, A = build_scenario(cfg)
    if perturb:
        rng = np.random.default_rng(cfg.seed)
        h = random_sym_tensor(cfg.grid, rng, kmax=1, amp=perturb)
        a = random_form(cfg.grid, rng, 1, cfg.algebra, kmax=1, amp=perturb)
        g = MetricField(cfg.grid, g.mat + h.mat)
        A = A + a
    result = solve(g, A, cfg.eym)
    rows = result.history
    text_buf = io.StringIO()
    writer = csv.writer(text_buf, lineterminator="\n")
    writer.writerow(["iter", "action", "residual_norm", "step"])
    for row in rows:
        writer.writerow([row["iter"], repr(row["action"]),
                         repr(row["residual_norm"]), repr(row["step"])])
    text = text_buf.getvalue()
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if snapshot_out is not None:
        write_snapshot(snapshot_out, result.g, result.A, cfg.eym.kappa,
                       cfg.algebra.name)
    print(result.message, file=sys.stderr)
    return 0 if result.converged else 1


def cmd_spectrum(cfg: RunConfig, out: str | None = None) -> int:
    """Kernel spectra of the complex Laplacians on the scenario pair."""
    spec_cfg = cfg.raw["spectrum"]
    k = int(spec_cfg["k"])
    if k < 1:
        raise ValueError("spectrum.k must be >= 1")
    g, A = build_scenario(cfg)
    ctx = PairContext.build(g, A, cfg.eym)
    rep1 = essential_spectrum(g, A, cfg.eym, k=k, ctx=ctx,
                              method=str(spec_cfg.get("method", "iterative")))
    rep0 = symmetry_spectrum(g, A, cfg.eym, k=k, ctx=ctx)
    payload = {
        "h1": {"eigenvalues": rep1.eigenvalues, "kernel_dim": rep1.kernel_dim,
               "gap_ratio": rep1.gap_ratio, "ambiguous": rep1.ambiguous,
               "method": rep1.method},
        "h0": {"eigenvalues": rep0.eigenvalues, "kernel_dim": rep0.kernel_dim,
               "gap_ratio": rep0.gap_ratio, "ambiguous": rep0.ambiguous},
        # the end Laplacians of the complex coincide, and the middle kernels
        # are isomorphic, so these are reported rather than recomputed
        "h2_kernel_dim": rep1.kernel_dim,
        "h3_kernel_dim": rep0.kernel_dim,
        "metadata": _report_metadata(cfg),
    }
    text = json.dumps(payload, indent=2, sort_keys=True) + "\n"
    if out is None:
        sys.stdout.write(text)
    else:
        with open(out, "w", encoding="utf-8") as fh:
            fh.write(text)
    if rep1.ambiguous:
        print("warning: kernel count ambiguous (no clear spectral gap); "
              "increase spectrum.k", file=sys.stderr)
    return 0


def cmd_symbol(cfg: RunConfig, out: str | None = None, fmt: str = "json") -> int:
    """Monte-Carlo symbol-exactness verification over random metrics and
    covectors for each configured (dimension, fiber-dimension) pair."""
    sym_cfg = cfg.raw["symbol"]
    trials = int(sym_cfg["trials"])
    tol = float(sym_cfg["tol"])
    rng = np.random.default_rng(cfg.seed)
    report = CheckReport()
    for n in sym_cfg["dims"]:
        n = int(n)
        if n not in (2, 3, 4):
            raise ValueError(f"symbol dims must be 2, 3 or 4, got {n}")
        for d in sym_cfg["alg_dims"]:
            alg = builtin_algebra({1: "u1", 3: "su2"}[int(d)])
            failures = 0
            for _ in range(trials):
                X = rng.standard_normal((n, n)) * 0.5
                gp = X @ X.T + np.eye(n)
                xi = rng.standard_normal(n)
                kappa = -1 if rng.random() < 0.5 else 1
                if not symbol_check(gp, xi, alg, kappa, tol).exact:
                    failures += 1
            report.add(f"symbol_failures_n{n}_d{d}", float(failures), 0.0)
    report.metadata = _report_metadata(cfg)
    _emit(report, out, fmt)
    return 0 if report.all_pass else 1


def cmd_fdcheck(cfg: RunConfig, out: str | None = None, fmt: str = "json") -> int:
    """Central finite-difference consistency of every linearization formula
    on random band-limited data, reporting observed convergence order."""
    from .deform import lin_residual
    fd_cfg = cfg.raw["fdcheck"]
    eps_list = [float(e) for e in fd_cfg["eps"]]
    if len(eps_list) != 2 or not eps_list[0] > eps_list[1] > 0:
        raise ValueError("fdcheck.eps must be two decreasing positive steps")
    min_ratio = float(fd_cfg["min_order_ratio"])
    max_abs = float(fd_cfg["max_abs_error"])
    rng = np.random.default_rng(cfg.seed)
    grid = cfg.grid
    gm = random_spd_metric(grid, rng, kmax=1, amp=float(fd_cfg["metric_amp"]))
    A = random_connection(grid, cfg.algebra, rng, kmax=1,
                          amp=float(fd_cfg["metric_amp"]))
    amp = float(fd_cfg["direction_amp"])
    h = random_sym_tensor(grid, rng, kmax=1, amp=amp)
    p = random_deformation(grid, cfg.algebra, rng, kmax=1, amp=amp)
    w = random_form(grid, rng, 2, None, kmax=1, amp=1.0)
    pkg = curvature(gm)
    ctx = PairContext.build(gm, A, cfg.eym, pkg=pkg)

    def fd_metric(fun, eps):
        plus = fun(MetricField(grid, gm.mat + eps * h.mat))
        minus = fun(MetricField(grid, gm.mat - eps * h.mat))
        return (plus - minus) / (2.0 * eps)

    cases = {
        "lin_ricci": (lin_ricci(h, gm, pkg).mat,
                      lambda m: curvature(m).ricci.mat),
        "lin_scalar": (lin_scalar(h, gm, pkg).values,
                       lambda m: curvature(m).scalar.values),
        "lin_einstein": (lin_einstein(h, gm, pkg).mat,
                         lambda m: curvature(m).einstein.mat),
        "lin_volume": (lin_volume(h, gm).values, lambda m: m.sqrt_det),
        "lin_star": (lin_star(w, h, gm).comps,
                     lambda m: hodge_star(m, w).comps),
    }
    report = CheckReport()
    for name, (lin_vals, fun) in cases.items():
        errs = [float(np.max(np.abs(fd_metric(fun, eps) - lin_vals)))
                for eps in eps_list]
        ratio = errs[0] / max(errs[1], 1e-300)
        report.add(f"{name}_abs_err", errs[1], max_abs)
        report.add(f"{name}_order_ratio_inv", 1.0 / ratio, 1.0 / min_ratio)

    lin_p = lin_residual(p, gm, A, cfg.eym, ctx)
    errs = []
    for eps in eps_list:
        rp = residual(MetricField(grid, gm.mat + eps * p.h.mat),
                      A + (eps * p.a), cfg.eym)
        rm = residual(MetricField(grid, gm.mat - eps * p.h.mat),
                      A + (-eps * p.a), cfg.eym)
        err = max(float(np.max(np.abs((rp.e1.mat - rm.e1.mat) / (2 * eps)
                                      - lin_p.h.mat))),
                  float(np.max(np.abs((rp.e2.comps - rm.e2.comps) / (2 * eps)
                                      - lin_p.a.comps))))
        errs.append(err)
    ratio = errs[0] / max(errs[1], 1e-300)
    report.add("lin_residual_abs_err", errs[1], max_abs)
    report.add("lin_residual_order_ratio_inv", 1.0 / ratio, 1.0 / min_ratio)
    report.metadata = _report_metadata(cfg)
    _emit(report, out, fmt)
    return 0 if report.all_pass else 1


# ---------------------------------------------------------------------------
# entry point


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="eymlab",
        description="Numerical laboratory for the coupled Einstein-Yang-Mills "
                    "system on flat tori")
    parser.add_argument("command",
                        choices=["verify", "flow", "spectrum", "symbol",
                                 "fdcheck"])
    parser.add_argument("--config", help="JSON configuration file")
    parser.add_argument("--in", dest="input", help="snapshot file to load "
                        "(overrides the configured scenario)")
    parser.add_argument("--out", help="report output path (default stdout)")
    parser.add_argument("--snapshot-out", help="where flow writes its final "
                        "configuration")
    parser.add_argument("--format", choices=["json", "csv"], default="json")
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=1,
                        help="accepted for interface stability; execution "
                        "is single-process")
    parser.add_argument("--perturb", type=float, default=None,
                        help="flow only: amplitude of a random band-limited "
                        "perturbation of the start")
    parser.add_argument("--timing", action="store_true",
                        help="include wall time in the report metadata "
                        "(breaks byte-identical reproducibility)")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, seed=args.seed)
        if args.input is not None:
            cfg.scenario = {"type": "file", "path": args.input}
        if args.command == "verify":
            return cmd_verify(cfg, args.out, args.format, args.timing)
        if args.command == "flow":
            return cmd_flow(cfg, args.out, args.snapshot_out,
                            perturb=args.perturb)
        if args.command == "spectrum":
            return cmd_spectrum(cfg, args.out)
        if args.command == "symbol":
            return cmd_symbol(cfg, args.out, args.format)
        if args.command == "fdcheck":
            return cmd_fdcheck(cfg, args.out, args.format)
        raise ValueError(f"unknown command {args.command}")
    except (ValueError, OSError, KeyError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
