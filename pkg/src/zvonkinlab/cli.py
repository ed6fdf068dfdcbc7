"""Command-line front end: ``zvonkinlab {solve-pde, build-chain, simulate, verify}``.

Every command reads a TOML config (``--config``) or a preset (``--preset``),
writes its artifacts under ``--out`` together with ``index.json`` (artifact list,
hashes and the config digest) and exits with

    0 pass, 1 usage or config error, 2 numerical failure,
    3 structural refusal, 4 verdict fail, 5 inconclusive.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import MixedNormParams
from .coefficients import regularize_drift
from .config import ConfigError, ExperimentConfig, list_presets, load_config, presets_dir
from .expr import parse
from .grid import SpaceTimeField
from .lab import (BoundedFunction, DiagnosticsReport, bel_gradient, bel_std_scaling, direct_pipeline,
                  indicator_positive, khasminskii_moment, krylov_check, ks_distance, law_consistency,
                  noncrossing_check, random_bump_battery, smooth_step, strong_feller_scan, two_point_moments,
                  uniqueness_witness, zvonkin_pipeline)
from .pde import PdeProblem, PdeSolverError, solve_backward
from .sde import euler_direct, generate_brownian, glue_and_detect_explosion, zvonkin_simulate
from .serialize import (ensemble_summary, ensemble_to_csv, field_to_csv, write_chain, write_ensemble, write_field,
                        write_gnuplot_stub, write_json, write_scan_csv)
from .zvonkin import InverseMapError, MinimumWindowReached, bilipschitz_check, forward_map, inverse_map, partition

EXIT_PASS, EXIT_CONFIG, EXIT_NUMERIC, EXIT_REFUSAL, EXIT_FAIL, EXIT_INCONCLUSIVE = range(6)
VERDICT_EXIT = {"pass": EXIT_PASS, "fail": EXIT_FAIL, "inconclusive": EXIT_INCONCLUSIVE}
CHECKS = ("feller", "krylov", "noncrossing", "two-point", "bel", "khasminskii", "uniqueness", "consistency")


class Outputs:
    """Collects artifacts under the output directory and writes ``index.json``."""

    def __init__(self, out: Path, command: str, cfg: ExperimentConfig | None, argv: list[str]):
        self.out = out
        self.command = command
        self.cfg = cfg
        self.argv = argv
        self.items = []
        out.mkdir(parents=True, exist_ok=True)

    def path(self, name: str) -> Path:
        return self.out / name

    def add(self, name: str, kind: str) -> Path:
        self.items.append((name, kind))
        return self.out / name

    def json(self, name: str, data: dict, kind: str = "json") -> Path:
        data = dict(data)
        if self.cfg is not None:
            data.setdefault("config_digest", self.cfg.digest)
        p = self.add(name, kind)
        write_json(p, data)
        return p

    def finish(self, code: int, started: float) -> None:
        arts = []
        for name, kind in self.items:
            p = self.out / name
            h = hashlib.sha256(p.read_bytes()).hexdigest() if p.is_file() else None
            arts.append({"name": name, "kind": kind, "sha256": h})
        write_json(self.out / "index.json", {
            "tool": "zvonkinlab", "version": __version__, "command": self.command, "argv": self.argv,
            "exit_code": code, "elapsed_seconds": round(time.time() - started, 3),
            "config": None if self.cfg is None else self.cfg.summary(),
            "config_digest": None if self.cfg is None else self.cfg.digest, "artifacts": arts,
        })


def _error(outs: Outputs, code: int, kind: str, message: str, **extra) -> int:
    outs.json("error.json", {"error": kind, "message": message, "exit_code": code, **extra}, "error")
    print(f"error ({kind}): {message}", file=sys.stderr)
    return code


# ----------------------------------------------------------------------------- solve-pde


def cmd_solve_pde(cfg: ExperimentConfig, outs: Outputs, args) -> int:
    pde = cfg.section("pde")
    grid = cfg.grid
    src = pde.get("source", "0")
    rank = "scalar" if isinstance(src, (str, int, float)) else "vector"
    items = [src] if rank == "scalar" else list(src)
    exprs = [cfg.expression(s, f"pde.source[{i}]") for i, s in enumerate(items)]
    f = SpaceTimeField.from_function(
        grid, (lambda t, x: exprs[0](t, x)) if rank == "scalar" else
        (lambda t, x: np.stack([e(t, x) for e in exprs], axis=-1)), rank, "f")
    coeffs = cfg.working_coeffs()
    params = MixedNormParams(cfg.p, cfg.q, grid.t_start, grid.t_end)
    try:
        sol = solve_backward(PdeProblem(coeffs, f), pde.get("scheme", "implicit-euler"), params)
    except PdeSolverError as err:
        return _error(outs, EXIT_NUMERIC, "pde-solver", str(err), step=err.step, time=err.time)
    write_field(outs.add("u.zvf", "field"), sol.u)
    if pde.get("csv", grid.dim == 1):
        field_to_csv(outs.add("u.csv", "csv"), sol.u, max(1, grid.n_time // 10))
    mask = grid.interior_mask()
    u = sol.u.values
    report = {
        "scheme": sol.scheme, "residual_norm": sol.residual_norm, "norms": sol.norm_report,
        "sup_abs_u": float(np.max(np.abs(u))), "sup_abs_u_roi": float(np.max(np.abs(u[:, mask]))),
        "terminal_max_abs": float(np.max(np.abs(u[-1]))), "T": grid.t_end,
    }
    verdict = "pass"
    tol = pde.get("residual_tolerance")
    if tol is not None:
        report["residual_tolerance"] = tol
        if not sol.residual_norm <= tol:
            verdict = "fail"
    if "exact" in pde:
        ex = cfg.expression(pde["exact"], "pde.exact")
        ref = np.stack([ex(t, grid.points) for t in grid.times])
        if rank == "vector":
            raise ConfigError("pde.exact supports scalar sources only")
        err = float(np.max(np.abs(u[:, mask] - ref[:, mask])))
        report["max_roi_error"] = err
        etol = pde.get("exact_tolerance")
        if etol is not None:
            report["exact_tolerance"] = etol
            if not err <= etol:
                verdict = "fail"
    report["verdict"] = verdict
    outs.json("norms.json", report, "report")
    print(f"residual {sol.residual_norm:.3e}  sup|u| {report['sup_abs_u']:.10g}  verdict {verdict}")
    return VERDICT_EXIT[verdict]


# ----------------------------------------------------------------------------- build-chain


def _build_chain(cfg: ExperimentConfig, grid=None):
    grid = grid or cfg.grid
    coeffs = cfg.working_coeffs(grid)
    opts = cfg.section("chain")
    chain = partition(coeffs, (grid.t_start, grid.t_end), grid, min_steps=int(opts.get("min_steps", 4)),
                      exponents=(cfg.p, cfg.q))
    return coeffs, chain


def cmd_build_chain(cfg: ExperimentConfig, outs: Outputs, args) -> int:
    opts = cfg.section("chain")
    try:
        coeffs, chain = _build_chain(cfg)
    except MinimumWindowReached as err:
        return _error(outs, EXIT_REFUSAL, "minimum-window", str(err), window=err.window, sup_grad=err.sup_grad)
    except (PdeSolverError, InverseMapError) as err:
        return _error(outs, EXIT_NUMERIC, type(err).__name__, str(err))
    manifest = write_chain(outs.out / "chain", chain)
    for entry in manifest["segments"]:
        for key in ("u_file", "sigma_file"):
            if key in entry:
                outs.items.append((f"chain/{entry[key]}", "field"))
    outs.items.append(("chain/chain.json", "manifest"))
    checks = []
    for i, seg in enumerate(chain.segments):
        row = {"index": i, "window": seg.window, "sup_grad": seg.sup_grad,
               "bilipschitz": bilipschitz_check(seg, int(opts.get("pairs", 1000)), cfg.seed + i)}
        if "u_exact" in opts:
            exprs = opts["u_exact"]
            exprs = [exprs] if isinstance(exprs, str) else exprs
            consts = dict(cfg.constants, T=seg.window[1])
            es = [_const_expr(cfg, s, consts) for s in exprs]
            g = seg.grid
            mask = g.interior_mask()
            ref = np.stack([np.stack([e(t, g.points) for e in es], axis=-1) for t in g.times])
            row["u_max_roi_error"] = float(np.max(np.abs(seg.u.values[:, mask] - ref[:, mask])))
            rng = np.random.default_rng(cfg.seed)
            r = 0.8 * g.box_halfwidth
            ys = np.asarray(g.center) + rng.uniform(-0.5 * r, 0.5 * r, (200, g.dim))
            t_mid = g.times[g.n_time // 2]
            xs = inverse_map(seg, t_mid, ys)
            row["psi_roundtrip_error"] = float(np.max(np.abs(forward_map(seg, t_mid, xs) - ys)))
            exact_x = ys - np.stack([e(t_mid, xs) for e in es], axis=-1)
            row["psi_closed_form_error"] = float(np.max(np.abs(xs - exact_x)))
        checks.append(row)
    verdict = "pass" if all(c["bilipschitz"]["violations"] == 0 for c in checks) else "fail"
    outs.json("chain_report.json", {"segments": checks, "n_segments": len(chain.segments), "verdict": verdict},
              "report")
    print(f"{'segment':>7}  {'window':>22}  {'sup_grad':>9}")
    n = len(chain.segments)
    for i, seg in enumerate(chain.segments):
        if n > 16 and 8 <= i < n - 4:
            if i == 8:
                print(f"{'...':>7}  ({n - 12} more segments in chain_report.json)")
            continue
        print(f"{i:>7}  [{seg.window[0]:9.5f}, {seg.window[1]:9.5f}]  {seg.sup_grad:9.4f}")
    return VERDICT_EXIT[verdict]


def _const_expr(cfg, text, consts):
    return parse(text, cfg.grid.dim, consts)


# ----------------------------------------------------------------------------- simulate


def _write_ensemble(outs, ens, stem, csv_paths):
    write_ensemble(outs.add(f"{stem}.zve", "ensemble"), ens)
    ensemble_to_csv(outs.add(f"{stem}.csv", "csv"), ens, csv_paths)
    summ = ensemble_summary(ens)
    outs.json(f"{stem}_summary.json", summ, "summary")
    return summ


def cmd_simulate(cfg: ExperimentConfig, outs: Outputs, args) -> int:
    sim = cfg.section("simulation")
    mode = args.mode or sim.get("mode", "direct")
    m = int(sim.get("m", 1000))
    x0 = np.asarray(sim.get("x0", [0.0] * cfg.grid.dim), dtype=float)
    stride = int(sim.get("save_stride", 10))
    csv_paths = int(sim.get("csv_paths", 100))
    inc = generate_brownian(m, cfg.grid, cfg.seed)
    summary = {"mode": mode, "m": m, "x0": x0, "seed": cfg.seed, "brownian_moments": inc.moments}
    if mode == "explosion":
        levels = sim.get("levels")
        if not levels:
            raise ConfigError("[simulation] explosion mode needs levels")
        exp = glue_and_detect_explosion(cfg.coeffs, levels, x0, inc)
        z = exp.zeta_estimate[np.isfinite(exp.zeta_estimate)]
        edges = np.linspace(0.0, cfg.grid.t_end, int(sim.get("bins", 30)) + 1)
        counts, _ = np.histogram(z, edges)
        write_scan_csv(outs.add("zeta_histogram.csv", "csv"),
                       {"bin_lo": edges[:-1], "bin_hi": edges[1:], "count": counts})
        write_gnuplot_stub(outs.add("zeta_histogram.gp", "gnuplot"), "zeta_histogram.csv", "bin_lo", ["count"],
                           title="explosion time histogram")
        summary.update({
            "levels": exp.levels, "exploded_fraction": float(exp.exploded.mean()),
            "zeta_mean": float(z.mean()) if len(z) else None, "zeta_min": float(z.min()) if len(z) else None,
            "zeta_max": float(z.max()) if len(z) else None, "agreement": exp.agreement,
            "agreement_ok": exp.agreement_ok, "monotone_exit_times": exp.monotone,
        })
        if "ode_blowup" in sim:
            summary["ode_blowup"] = sim["ode_blowup"]
        verdict = "pass" if exp.agreement_ok and exp.monotone else "fail"
        summary["verdict"] = verdict
        outs.json("summary.json", summary, "summary")
        print(f"exploded {summary['exploded_fraction']:.3f}  zeta mean {summary['zeta_mean']}  agreement {verdict}")
        return VERDICT_EXIT[verdict]
    if mode not in ("direct", "zvonkin", "both"):
        raise ConfigError(f"unknown simulation mode {mode!r}")
    results = {}
    try:
        if mode in ("direct", "both"):
            ens = euler_direct(cfg.working_coeffs(), x0, inc, save_stride=stride)
            results["direct"] = (ens, _write_ensemble(outs, ens, "direct", csv_paths))
        if mode in ("zvonkin", "both"):
            coeffs, chain = _build_chain(cfg)
            ens = zvonkin_simulate(chain, coeffs, x0, inc, save_stride=stride)
            results["zvonkin"] = (ens, _write_ensemble(outs, ens, "zvonkin", csv_paths))
            summary["segments"] = chain.windows
    except MinimumWindowReached as err:
        return _error(outs, EXIT_REFUSAL, "minimum-window", str(err), window=err.window, sup_grad=err.sup_grad)
    except (PdeSolverError, InverseMapError) as err:
        return _error(outs, EXIT_NUMERIC, type(err).__name__, str(err))
    verdict = "pass"
    if "both" == mode:
        a, b = results["direct"][0].terminal(), results["zvonkin"][0].terminal()
        summary["ks_distance"] = ks_distance(a[:, 0], b[:, 0])
        summary["ks_sampling_scale"] = float(1.36 * np.sqrt(2.0 / m))
    exact = sim.get("exact")
    if exact:
        T = cfg.grid.t_end
        mean = np.array([float(cfg.expression(s, "exact.mean")(T, x0[None])[0]) for s in _listify(exact["mean"])])
        var = np.array([float(cfg.expression(s, "exact.variance")(T, x0[None])[0])
                        for s in _listify(exact["variance"])])
        table = []
        for name, (ens, summ) in results.items():
            xt = ens.terminal()
            n = len(xt)
            emp_m, emp_v = xt.mean(axis=0), xt.var(axis=0, ddof=1)
            mean_tol = 3 * np.sqrt(var / n)
            var_tol = 3 * var * np.sqrt(2.0 / (n - 1))
            ok = bool(np.all(np.abs(emp_m - mean) <= mean_tol) and np.all(np.abs(emp_v - var) <= var_tol))
            verdict = verdict if ok else "fail"
            table.append({"method": name, "mean": emp_m, "exact_mean": mean, "mean_tol": mean_tol,
                          "variance": emp_v, "exact_variance": var, "variance_tol": var_tol, "within_3_sigma": ok})
        summary["exact_law_table"] = table
    summary["verdict"] = verdict
    outs.json("summary.json", summary, "summary")
    for name, (ens, summ) in results.items():
        print(f"{name:>8}: terminal mean {np.round(summ['terminal_mean'], 6)}  "
              f"variance {np.round(summ['terminal_variance'], 6)}  exited {summ['exited_paths']}")
    if "ks_distance" in summary:
        print(f"KS distance {summary['ks_distance']:.4f} (sampling scale {summary['ks_sampling_scale']:.4f})")
    return VERDICT_EXIT[verdict]


def _listify(v):
    return [v] if isinstance(v, (str, int, float)) else list(v)


# ----------------------------------------------------------------------------- verify


PHIS = {
    "indicator": indicator_positive(),
    "tanh": smooth_step(),
    "linear": BoundedFunction("x", lambda x: np.asarray(x)[..., 0], 1.0),
    "sin": BoundedFunction("sin(x)", lambda x: np.sin(np.asarray(x)[..., 0]), 1.0),
}


def _pipeline(cfg, grid, kind):
    if kind == "direct":
        return direct_pipeline(cfg.working_coeffs(grid), grid)
    coeffs, chain = _build_chain(cfg, grid)
    return zvonkin_pipeline(chain, coeffs)


def _check_options(cfg, name):
    chk = cfg.section("check")
    opts = dict(chk.get(name, {}))
    opts.setdefault("m", chk.get("m", 1000))
    return opts


def run_check(cfg: ExperimentConfig, name: str, outs: Outputs | None = None) -> DiagnosticsReport:
    """Run one named property check with the options under ``[check.<name>]``."""
    o = _check_options(cfg, name)
    grid = cfg.grid
    m = int(o["m"])
    kind = o.get("pipeline", "zvonkin")
    seed = cfg.seed
    if name == "feller":
        tl = [float(t) for t in o.get("t_ladder", [0.02, 0.04, 0.08, 0.16, 0.32])]
        sub = grid.window(grid.t_start, max(tl)) if max(tl) < grid.t_end else grid
        pipe = _pipeline(cfg, sub, kind)
        phis = [PHIS[p] for p in o.get("phis", ["indicator", "tanh"])]
        rep = strong_feller_scan(pipe, phis, o.get("x", -0.05), o.get("y", 0.05), tl, m, seed)
        if outs is not None:
            cols = {"t": tl}
            for pname, row in rep.statistics["rows"].items():
                cols[f"D[{pname}]"] = row["D"]
            write_scan_csv(outs.add("feller_scan.csv", "csv"), cols)
            write_gnuplot_stub(outs.add("feller_scan.gp", "gnuplot"), "feller_scan.csv", "t",
                               [c for c in cols if c != "t"], logscale=True, title="strong Feller D(t)")
        return rep
    if name == "krylov":
        pipe = _pipeline(cfg, grid, kind)
        battery = [SpaceTimeField.constant(grid, 0.0, name="zero")]
        battery += random_bump_battery(grid, np.random.default_rng(seed), int(o.get("count", 9)))
        ens = pipe.run(o.get("x0", [0.0] * grid.dim), generate_brownian(m, grid, seed))
        thr = float(o.get("threshold", cfg.threshold))
        return krylov_check(ens, battery, MixedNormParams(cfg.p, cfg.q, grid.t_start, grid.t_end), thr)
    if name == "noncrossing":
        pipe = _pipeline(cfg, grid, kind)
        contrast = None
        if cfg.regularize != "none" and o.get("contrast", True):
            contrast = direct_pipeline(regularize_drift(cfg.coeffs, grid, "cap"), grid, "direct-capped")
        starts = o.get("starts", list(np.linspace(-1.4, 1.4, 8)))
        return noncrossing_check(pipe, starts, m, seed, contrast)
    if name == "two-point":
        pipe = _pipeline(cfg, grid, kind)
        seps = o.get("separations", [0.025, 0.05, 0.1, 0.2, 0.4])
        rep = two_point_moments(pipe, o.get("x", 0.0), seps, tuple(o.get("gammas", [1.0, -1.0])), m=m, seed=seed)
        if outs is not None:
            cols = {"separation": seps}
            for g in rep.inputs["gammas"]:
                cols[f"ratio[{g:g}]"] = [r[f"ratio_gamma_{g:g}"] for r in rep.statistics["rows"]]
            write_scan_csv(outs.add("two_point_scan.csv", "csv"), cols)
            write_gnuplot_stub(outs.add("two_point_scan.gp", "gnuplot"), "two_point_scan.csv", "separation",
                               [c for c in cols if c != "separation"], logscale=True, title="two-point ratios")
        return rep
    if name == "bel":
        if not cfg.coeffs.zero_drift:
            raise ConfigError("the bel check needs a driftless configuration")
        phi = PHIS[o.get("phi", "tanh")]
        x = o.get("x", 0.3)
        rep = bel_gradient(cfg.coeffs, grid, phi, x, float(o.get("t", 0.5)), m, seed)
        if "t_ladder" in o:
            sc = bel_std_scaling(cfg.coeffs, grid, phi, x, [float(t) for t in o["t_ladder"]],
                                 int(o.get("m_scaling", m)), seed)
            stats_ = dict(rep.statistics, std_scaling=sc.statistics["slope"], std=sc.statistics["std"])
            verdict = "pass" if rep.passed and sc.passed else "fail"
            rep = DiagnosticsReport("bel_gradient", dict(rep.inputs, t_ladder=o["t_ladder"]), stats_, verdict,
                                    dict(rep.thresholds, **sc.thresholds))
            if outs is not None:
                write_scan_csv(outs.add("bel_std.csv", "csv"), {"t": o["t_ladder"], "std": sc.statistics["std"]})
                write_gnuplot_stub(outs.add("bel_std.gp", "gnuplot"), "bel_std.csv", "t", ["std"], logscale=True,
                                   title="BEL estimator std")
        return rep
    if name == "khasminskii":
        pipe = _pipeline(cfg, grid, kind)
        beta_e = cfg.expression(o.get("beta", "abs(x)"), "check.khasminskii.beta")
        lams = [float(v) for v in o.get("lambdas", [0.1, 0.25, 0.5, 1.0])]
        rep = khasminskii_moment(pipe, lambda t, x: beta_e(t, x), lams, o.get("x0", [0.0] * grid.dim), m, seed)
        if outs is not None:
            write_scan_csv(outs.add("khasminskii.csv", "csv"),
                           {"lambda": lams, "estimate": [r["estimate"] for r in rep.statistics["rows"]]})
            write_gnuplot_stub(outs.add("khasminskii.gp", "gnuplot"), "khasminskii.csv", "lambda", ["estimate"],
                               title="exponential moments")
        return rep
    if name == "uniqueness":
        n_list = o.get("n_space", [grid.n_space // 2 + 1, grid.n_space, 2 * grid.n_space - 1])
        pipes = [_pipeline(cfg, grid.with_space(n_space=int(n)), kind) for n in n_list]
        return uniqueness_witness(pipes, o.get("x0", [0.0] * grid.dim), m, seed, float(o.get("tolerance", 0.05)),
                                  save_stride=int(o.get("save_stride", 10)))
    if name == "consistency":
        levels = o.get("levels", [[grid.n_time // 2, grid.n_space // 2 + 1], [grid.n_time, grid.n_space]])
        pairs = []
        for nt, ns in levels:
            g = type(grid)(grid.dim, grid.t_start, grid.t_end, int(nt), grid.box_halfwidth, int(ns), grid.center)
            pairs.append((_pipeline(cfg, g, "zvonkin"), _pipeline(cfg, g, "direct")))
        return law_consistency(pairs, o.get("x0", [0.0] * grid.dim), m, seed, float(o.get("ks_max", 0.05)))
    raise ConfigError(f"unknown check {name!r}; choose from {', '.join(CHECKS)}")


def cmd_verify(cfg: ExperimentConfig, outs: Outputs, args) -> int:
    name = args.check or cfg.section("check").get("name")
    if not name:
        raise ConfigError("no check selected (use --check or [check] name)")
    try:
        rep = run_check(cfg, name, outs)
    except MinimumWindowReached as err:
        return _error(outs, EXIT_REFUSAL, "minimum-window", str(err), window=err.window, sup_grad=err.sup_grad)
    except (PdeSolverError, InverseMapError) as err:
        return _error(outs, EXIT_NUMERIC, type(err).__name__, str(err))
    arts = [n for n, _ in outs.items]
    rep = DiagnosticsReport(rep.name, rep.inputs, rep.statistics, rep.verdict, rep.thresholds, arts, rep.notes)
    outs.json("report.json", rep.to_dict(), "report")
    print(f"{rep.name}: {rep.verdict}" + (f" ({rep.notes})" if rep.notes else ""))
    return VERDICT_EXIT[rep.verdict]


# ----------------------------------------------------------------------------- entry point


COMMANDS = {"solve-pde": cmd_solve_pde, "build-chain": cmd_build_chain, "simulate": cmd_simulate,
            "verify": cmd_verify}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    src = common.add_mutually_exclusive_group()
    src.add_argument("--config", type=Path, help="TOML experiment config")
    src.add_argument("--preset", help="preset name from the presets directory")
    common.add_argument("--seed", type=int, help="override the config seed")
    common.add_argument("--out", type=Path, default=Path("zvonkinlab-out"), help="output directory")
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads (results do not depend on it; recorded in the index)")
    parser = argparse.ArgumentParser(prog="zvonkinlab", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"zvonkinlab {__version__}")
    parser.add_argument("--list-presets", action="store_true", help="print available presets and exit")
    sub = parser.add_subparsers(dest="command")
    sub.add_parser("solve-pde", parents=[common], help="solve the backward Kolmogorov equation")
    sub.add_parser("build-chain", parents=[common], help="build and serialize a Zvonkin chain")
    sim = sub.add_parser("simulate", parents=[common], help="simulate path ensembles")
    sim.add_argument("--mode", choices=["direct", "zvonkin", "both", "explosion"])
    ver = sub.add_parser("verify", parents=[common], help="run a property check")
    ver.add_argument("--check", choices=CHECKS)
    return parser


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_CONFIG
    if args.list_presets:
        print(f"presets in {presets_dir()}:")
        for name in list_presets():
            print(f"  {name}")
        return EXIT_PASS
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_CONFIG
    started = time.time()
    outs = Outputs(args.out, args.command, None, argv)
    if args.threads < 1:
        code = _error(outs, EXIT_CONFIG, "usage", "--threads must be >= 1")
        outs.finish(code, started)
        return code
    try:
        cfg = load_config(args.config, args.preset, args.seed) if (args.config or args.preset) else None
        if cfg is None:
            raise ConfigError("give --config PATH or --preset NAME")
        outs.cfg = cfg
        outs.json("config.json", {"raw": cfg.raw, "summary": cfg.summary(), "threads": args.threads}, "config")
        code = COMMANDS[args.command](cfg, outs, args)
    except ConfigError as err:
        code = _error(outs, EXIT_CONFIG, "config", str(err))
    outs.finish(code, started)
    return code


if __name__ == "__main__":
    sys.exit(main())
