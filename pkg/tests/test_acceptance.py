"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py -v`` (the lines appear inline and
again as a summary at the end) or directly with ``python tests/test_acceptance.py``.
Criteria run at their stated sizes and tolerances; the runtime budget is part
of each verdict.
"""
import sys
import time

import numpy as np
import pytest

from zvonkinlab.analysis import lipschitz_maximal_check, maximal_function, random_trig_polynomial
from zvonkinlab.cli import _build_chain
from zvonkinlab.cli import main as cli_main
from zvonkinlab.coefficients import CoefficientSet
from zvonkinlab.config import list_presets, load_config
from zvonkinlab.grid import SpaceTimeField, UniformGrid
from zvonkinlab.pde import PdeProblem, solve_backward
from zvonkinlab.sde import generate_brownian, zvonkin_simulate
from zvonkinlab.zvonkin import bilipschitz_check, forward_map, inverse_map

RESULTS = {}


def record(capsys, number, title, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    line = f"C{number:<2} {'PASS' if ok else 'FAIL'}  {title}: {detail} [{elapsed:.1f}s / {budget:g}s]"
    RESULTS[number] = line
    if capsys is None:
        print(line)
    else:
        with capsys.disabled():
            print("\n" + line)
    return ok


@pytest.fixture(scope="module", autouse=True)
def summary(request):
    yield
    reporter = request.config.pluginmanager.get_plugin("terminalreporter")
    if reporter is not None and RESULTS:
        reporter.write_sep("=", "acceptance criteria")
        for n in sorted(RESULTS):
            reporter.write_line(RESULTS[n])


def _manufactured(n_time, n_space):
    sqrt2 = CoefficientSet(1, None, np.sqrt(2.0), 2.0, 2.0)
    g = UniformGrid(1, 0.0, 1.0, n_time, np.pi, n_space)
    f = SpaceTimeField.from_function(g, lambda t, x: (2.0 - t) * np.sin(x[..., 0]))
    u = solve_backward(PdeProblem(sqrt2, f)).u.values
    sx = np.sin(g.axis(0))[None, :]
    exact = (1.0 - g.times)[:, None] * sx
    # implicit Euler is exact in t for u* (linear in t), so the time order is
    # measured against the space-discrete, time-exact solution c(t) sin x
    mu = 4.0 * np.sin(g.h / 2) ** 2 / g.h**2
    alpha = (1.0 - 1.0 / mu) / mu
    semi = (alpha * (1.0 - np.exp(mu * (g.times - 1.0))) + (1.0 - g.times) / mu)[:, None] * sx
    mask = g.interior_mask()
    return float(np.max(np.abs(u[:, mask] - exact[:, mask]))), float(np.max(np.abs(u - semi)))


def _verify(tmp_path, preset, check):
    import json
    out = tmp_path / f"{preset}-{check}"
    code = cli_main(["verify", "--preset", preset, "--check", check, "--out", str(out)])
    return code, json.loads((out / "report.json").read_text())


def test_c01_pde_convergence(capsys):
    t0 = time.time()
    e_t = [_manufactured(n, 41)[1] for n in (20, 40, 80)]
    e_h = [_manufactured(20, n)[0] for n in (33, 65, 129)]
    order_t = float(np.min(np.log2(np.array(e_t[:-1]) / e_t[1:])))
    order_h = float(np.min(np.log2(np.array(e_h[:-1]) / e_h[1:])))
    err = _manufactured(1000, 629)[0]  # dt = 1e-3, h = 2 pi / 628 ~ 1.0005e-2
    ok = order_t >= 0.9 and order_h >= 1.9 and err < 1e-3
    assert record(capsys, 1, "PDE convergence",
                  ok, f"order dt {order_t:.3f}, order h {order_h:.3f}, error {err:.2e}", time.time() - t0, 10)


def test_c02_zvonkin_closed_form(capsys):
    t0 = time.time()
    cfg = load_config(preset="constant-drift")
    c, T = cfg.constants["c"], cfg.grid.t_end
    _, chain = _build_chain(cfg)
    seg = chain.segments[0]
    g = seg.grid
    mask = g.interior_mask()
    u_err = float(np.max(np.abs(seg.u.values[:, mask, 0] - c * (T - g.times)[:, None])))
    rng = np.random.default_rng(0)
    y = rng.uniform(-0.8 * g.box_halfwidth, 0.8 * g.box_halfwidth, (1000, 1))
    rt = max(float(np.max(np.abs(forward_map(seg, t, inverse_map(seg, t, y)) - y))) for t in rng.uniform(0, T, 5))
    ok = len(chain.segments) == 1 and u_err < 1e-6 and rt < 1e-9
    assert record(capsys, 2, "Zvonkin closed form", ok,
                  f"{len(chain.segments)} segment, u error {u_err:.2e}, round trip {rt:.2e}", time.time() - t0, 10)


def test_c03_bilipschitz_battery(capsys):
    t0 = time.time()
    # the explosion preset has a superlinear drift outside the bounded class and a placeholder grid
    names = [n for n in list_presets() if n != "explosion"]
    segments = violations = 0
    worst = [np.inf, 0.0]
    for name in names:
        _, chain = _build_chain(load_config(preset=name))
        for i, seg in enumerate(chain.segments):
            rep = bilipschitz_check(seg, 1000, seed=i)
            segments += 1
            violations += rep["violations"] + rep["gradient_violations"]
            worst = [min(worst[0], rep["ratio_min"]), max(worst[1], rep["ratio_max"])]
    ok = violations == 0
    assert record(capsys, 3, "bi-Lipschitz sandwich", ok,
                  f"{len(names)} presets, {segments} segments, ratios in [{worst[0]:.3f}, {worst[1]:.3f}], "
                  f"{violations} violations", time.time() - t0, 30)


def test_c04_pipeline_consistency(capsys):
    t0 = time.time()
    cfg = load_config(preset="constant-drift")
    c, T, m = cfg.constants["c"], cfg.grid.t_end, 10_000
    coeffs, chain = _build_chain(cfg)
    ens = zvonkin_simulate(chain, coeffs, [0.0], generate_brownian(m, cfg.grid, cfg.seed), save_stride=100)
    xt = ens.terminal()[:, 0]
    mean, var = float(xt.mean()), float(xt.var(ddof=1))
    mean_tol = 3 * np.sqrt(T / m)
    var_tol = 3 * T * np.sqrt(2 / (m - 1))
    ok = cfg.grid.dt == pytest.approx(1e-3) and len(xt) == m and abs(mean - c * T) <= mean_tol \
        and abs(var - T) <= var_tol
    assert record(capsys, 4, "pipeline consistency", ok,
                  f"mean {mean:.4f} vs {c * T} (+-{mean_tol:.4f}), variance {var:.4f} vs {T} (+-{var_tol:.4f})",
                  time.time() - t0, 60)


def test_c05_singular_law_consistency(tmp_path, capsys):
    t0 = time.time()
    code, rep = _verify(tmp_path, "singular-drift", "consistency")
    ks = [float(k) for k in rep["statistics"]["ks"]]
    gaps = [float(g) for g in rep["statistics"]["gap"]]
    # the refinement step is taken from the coarsest level, where the scheme gap
    # is above the KS resolution floor (~3e-3 at m = 1e4); the common-noise gap
    # must also shrink at every step of the ladder
    ok = (rep["inputs"]["m"] == 10_000 and max(ks) <= 0.05 and ks[1] < ks[0]
          and rep["statistics"]["gap_decreasing"] and code == 0)
    assert record(capsys, 5, "singular-drift self-consistency", ok,
                  f"KS ladder {', '.join(f'{k:.4f}' for k in ks)}, "
                  f"pathwise gap {', '.join(f'{g:.4f}' for g in gaps)}", time.time() - t0, 300)


def test_c06_homeomorphism_echo(tmp_path, capsys):
    t0 = time.time()
    code, rep = _verify(tmp_path, "singular-drift", "noncrossing")
    s = rep["statistics"]["pipeline"]
    ok = (len(rep["inputs"]["starts"]) == 8 and rep["inputs"]["m"] == 1000
          and rep["inputs"]["pipeline"]["name"] == "zvonkin"
          and s["violations"] == 0 and s["R_finite_all_paths"] and code == 0)
    assert record(capsys, 6, "homeomorphism echo", ok,
                  f"{s['violations']} violations over {s['pairs_times']} path-times, R max {s['R_max']:.1f}",
                  time.time() - t0, 120)


def test_c07_strong_feller(tmp_path, capsys):
    t0 = time.time()
    code, rep = _verify(tmp_path, "smooth-sigma", "feller")
    s = rep["statistics"]
    control = s["control"]
    ok = (rep["inputs"]["m"] == 100_000 and control["verdict"] == "pass"
          and abs(control["slope"] + 0.5) <= 0.15 and s.get("ci_contained", False) and code == 0)
    assert record(capsys, 7, "strong Feller decay", ok,
                  f"control slope {control['slope']:.3f}, pipeline slope {s.get('slope', float('nan')):.3f} "
                  f"CI [{s['ci'][0]:.3f}, {s['ci'][1]:.3f}]", time.time() - t0, 300)


def test_c08_bel_formula(tmp_path, capsys):
    t0 = time.time()
    parts, ok = [], True
    slope = None
    for preset in ("zero-drift", "smooth-sigma", "manufactured"):
        code, rep = _verify(tmp_path, preset, "bel")
        s = rep["statistics"]
        overlap = s["bel_ci"][0] <= s["fd_ci"][1] and s["fd_ci"][0] <= s["bel_ci"][1]
        ok &= overlap and code == 0
        parts.append(f"{preset} {s['bel']:.4f}/{s['fd']:.4f}")
        if "std_scaling" in s:
            slope = s["std_scaling"]
    ok &= slope is not None and abs(slope + 0.5) <= 0.2
    assert record(capsys, 8, "BEL formula", ok, f"{'; '.join(parts)}; std slope {slope:.3f}", time.time() - t0, 180)


def test_c09_krylov_stability(tmp_path, capsys):
    t0 = time.time()
    code, rep = _verify(tmp_path, "singular-drift", "krylov")
    s = rep["statistics"]
    ok = (len(s["rows"]) == 10 and s["stability_rel"] <= 0.25 and s["scale_invariance_rel"] <= 1e-12
          and code == 0)
    assert record(capsys, 9, "Krylov ratio stability", ok,
                  f"max ratio {s['max_ratio']:.4f}, m-doubling change {s['stability_rel']:.3f}, "
                  f"scale error {s['scale_invariance_rel']:.1e}", time.time() - t0, 120)


def test_c10_two_point_moments(tmp_path, capsys):
    t0 = time.time()
    code, rep = _verify(tmp_path, "smooth-sigma", "two-point")
    s = rep["statistics"]
    spread = s["ratio_spread"]["-1"]
    ok = s["ladder_range"] >= 16 and spread <= 3 and s["coincidences"] == 0 and code == 0
    assert record(capsys, 10, "two-point moments", ok,
                  f"gamma -1 spread {spread:.3f} over a {s['ladder_range']:g}x ladder, "
                  f"{s['coincidences']} coincidences", time.time() - t0, 180)


def test_c11_localization_gluing(tmp_path, capsys):
    import json
    t0 = time.time()
    out = tmp_path / "explosion"
    code = cli_main(["simulate", "--preset", "explosion", "--out", str(out)])
    s = json.loads((out / "summary.json").read_text())
    agree = max(s["agreement"])
    oracle = s["ode_blowup"]
    ok = (code == 0 and agree <= 1e-12 and s["exploded_fraction"] == 1.0
          and abs(s["zeta_min"] - oracle) <= 0.1 and abs(s["zeta_max"] - oracle) <= 0.1)
    assert record(capsys, 11, "localization and gluing", ok,
                  f"level agreement {agree:.1e}, zeta in [{s['zeta_min']:.4f}, {s['zeta_max']:.4f}] "
                  f"vs ODE blow-up {oracle}", time.time() - t0, 120)


def test_c12_maximal_function(capsys):
    t0 = time.time()
    g = UniformGrid(1, 0.0, 1.0, 1, 6.0, 601)
    x = g.axis(0)
    m = maximal_function(((x >= -1) & (x <= 1)).astype(float), g)
    val = float(m[np.argmin(np.abs(x - 2.0))])
    # brute force over radii: (r - 1) / (2 r) on 1 < r <= 3, 1 / r beyond, maximum 1/3 at r = 3
    r = np.linspace(1.0, 12.0, 220001)
    exact = float(np.max(np.where(r <= 3, (r - 1) / (2 * r), 1 / r)))
    resolution = exact - (3 / 1.25 - 1) / (2 * 3 / 1.25)
    near = exact - resolution - g.h <= val <= exact + g.h
    rng = np.random.default_rng(11)
    worst = max(lipschitz_maximal_check(random_trig_polynomial(g, rng), g, 500, seed=i) for i in range(20))
    ok = near and worst <= 1.0
    assert record(capsys, 12, "maximal-function suite", ok,
                  f"M1[-1,1](2) = {val:.4f} vs 1/3 (ladder resolution {resolution:.4f}), "
                  f"Lipschitz constant {worst:.3f}", time.time() - t0, 30)


if __name__ == "__main__":
    import tempfile
    from pathlib import Path

    failures = 0
    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_c")]
    with tempfile.TemporaryDirectory() as tmp:
        for i, fn in enumerate(tests, 1):
            try:
                if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                    d = Path(tmp) / f"c{i}"
                    d.mkdir()
                    fn(d, None)
                else:
                    fn(None)
            except AssertionError:
                failures += 1
    print(f"{len(tests) - failures}/{len(tests)} criteria passed")
    sys.exit(1 if failures else 0)
