"""Desk-scale statistical checks of the flow, Feller and occupation-time properties.

Every check returns a :class:`DiagnosticsReport` whose verdict thresholds are
stored in the report itself.  Pathwise statements (non-crossing, two-point
moments, uniqueness) drive all starts with one common noise; law statements
(strong Feller) use independent noise per start.
"""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import stats
from scipy.integrate import trapezoid

from .analysis import MixedNormParams, check_exponents, mixed_norm
from .coefficients import CoefficientSet
from .grid import SpaceTimeField, UniformGrid
from .sde import (BrownianIncrements, PathEnsemble, euler_direct, generate_brownian, variational_flow,
                  zvonkin_simulate)
from .zvonkin import ZvonkinChain

SCHEMA = "zvonkinlab.report/1"
VERDICTS = ("pass", "fail", "inconclusive")


def to_jsonable(obj):
    """Recursively convert numpy scalars/arrays and tuples into JSON-friendly values."""
    if isinstance(obj, dict):
        return {str(k): to_jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [to_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return to_jsonable(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    return obj


def digest(obj) -> str:
    """SHA-256 of the canonical JSON form of ``obj``."""
    text = json.dumps(to_jsonable(obj), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()


@dataclass(frozen=True, eq=False)
class DiagnosticsReport:
    """Result of one property check, serializable to a fixed JSON schema."""

    name: str
    inputs: dict
    statistics: dict
    verdict: str
    thresholds: dict
    artifacts: list = field(default_factory=list)
    notes: str = ""

    def __post_init__(self):
        if self.verdict not in VERDICTS:
            raise ValueError(f"verdict must be one of {VERDICTS}")

    @property
    def inputs_digest(self) -> str:
        return digest(self.inputs)

    @property
    def passed(self) -> bool:
        return self.verdict == "pass"

    def to_dict(self) -> dict:
        return to_jsonable({
            "schema": SCHEMA,
            "name": self.name,
            "inputs": self.inputs,
            "inputs_digest": self.inputs_digest,
            "statistics": self.statistics,
            "verdict": self.verdict,
            "thresholds": self.thresholds,
            "artifacts": list(self.artifacts),
            "notes": self.notes,
        })

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    def write(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.to_json() + "\n")

    @classmethod
    def from_dict(cls, data: dict) -> "DiagnosticsReport":
        return cls(data["name"], data["inputs"], data["statistics"], data["verdict"], data["thresholds"],
                   list(data.get("artifacts", [])), data.get("notes", ""))


# ----------------------------------------------------------------------------- pipelines


@dataclass(frozen=True, eq=False)
class Pipeline:
    """A simulator ``run(x0, increments, save_stride) -> PathEnsemble`` on a fixed time grid."""

    name: str
    grid: UniformGrid
    run: Callable[..., PathEnsemble]
    tag: str = ""
    coeffs: CoefficientSet | None = None

    def describe(self) -> dict:
        return {"name": self.name, "tag": self.tag, "grid": self.grid.to_dict()}


def direct_pipeline(coeffs: CoefficientSet, grid: UniformGrid, name: str = "direct",
                    box: UniformGrid | None | str = "grid") -> Pipeline:
    def run(x0, inc, save_stride=1):
        return euler_direct(coeffs, x0, inc, save_stride=save_stride, box=box)

    return Pipeline(name, grid, run, coeffs.tag, coeffs)


def zvonkin_pipeline(chain: ZvonkinChain, coeffs: CoefficientSet, name: str = "zvonkin") -> Pipeline:
    def run(x0, inc, save_stride=1):
        return zvonkin_simulate(chain, coeffs, x0, inc, save_stride=save_stride)

    return Pipeline(name, chain.grid, run, f"{coeffs.tag}|chain{len(chain.segments)}", coeffs)


def iter_chunks(pipeline: Pipeline, x0, m: int, seed, save_stride: int = 1, chunk: int = 8192):
    """Run ``m`` paths in chunks; yields ``(first_path, ensemble)``.

    Chunk boundaries do not change any path since increments are per-path streams.
    """
    j = 0
    while j < m:
        take = min(chunk, m - j)
        inc = generate_brownian(take, pipeline.grid, seed, first_path=j)
        yield j, pipeline.run(x0, inc, save_stride)
        j += take


def _time_indices(times: np.ndarray, wanted) -> np.ndarray:
    wanted = np.atleast_1d(np.asarray(wanted, dtype=float))
    idx = np.array([int(np.argmin(np.abs(times - t))) for t in wanted])
    if np.any(np.abs(times[idx] - wanted) > 1e-9 * np.maximum(1.0, np.abs(wanted))):
        raise ValueError("requested times are not on the pipeline's saved time levels")
    return idx


def sample_states(pipeline: Pipeline, x0, m: int, seed, times, chunk: int = 8192):
    """States at the requested grid times, shape ``(m, len(times), d)``, plus an active mask."""
    grid = pipeline.grid
    idx = _time_indices(grid.times, times)
    out = np.empty((m, len(idx), grid.dim))
    active = np.empty(m, dtype=bool)
    for j, ens in iter_chunks(pipeline, x0, m, seed, 1, chunk):
        n = ens.m_paths
        out[j:j + n] = ens.states[:, idx]
        active[j:j + n] = ens.active
    return out, active


def mean_ci(samples: np.ndarray, level: float = 0.95) -> tuple[float, float, float]:
    """Sample mean and its normal-approximation confidence interval."""
    samples = np.asarray(samples, dtype=float)
    n = samples.size
    mu = float(np.mean(samples))
    se = float(np.std(samples, ddof=1) / np.sqrt(n)) if n > 1 else float("inf")
    z = stats.norm.ppf(0.5 + level / 2)
    return mu, float(mu - z * se), float(mu + z * se)


# ----------------------------------------------------------------------------- Krylov


def random_bump_battery(grid: UniformGrid, rng: np.random.Generator, count: int = 10) -> list[SpaceTimeField]:
    """Positive Gaussian bumps in space, modulated in time, sampled on ``grid``."""
    out = []
    L = grid.box_halfwidth
    for i in range(count):
        c = np.asarray(grid.center) + rng.uniform(-0.3 * L, 0.3 * L, grid.dim)
        w = rng.uniform(0.1, 0.4) * L
        a = rng.uniform(0.5, 2.0)
        om = rng.uniform(0.5, 4.0)

        def func(t, x, c=c, w=w, a=a, om=om):
            r2 = np.sum((x - c) ** 2, axis=-1)
            return a * np.exp(-r2 / (2 * w * w)) * (1.0 + 0.5 * np.sin(om * t))

        out.append(SpaceTimeField.from_function(grid, func, "scalar", f"bump{i}"))
    return out


def occupation_integral(f: SpaceTimeField, states: np.ndarray, times: np.ndarray, S: float, T: float) -> np.ndarray:
    """Per-path trapezoid value of ``int_S^T f(s, X_s) ds`` over the saved times in ``[S, T]``."""
    tol = 1e-9 * max(1.0, T)
    sel = np.nonzero((times >= S - tol) & (times <= T + tol))[0]
    vals = np.stack([f.evaluate(times[k], states[:, k]) for k in sel], axis=1)
    return trapezoid(vals, x=times[sel], axis=1)


def krylov_check(ensemble: PathEnsemble, battery: Sequence[SpaceTimeField], params: MixedNormParams,
                 threshold: float = 2, stability_tol: float = 0.25, scale: float = 7.25,
                 scale_tol: float = 1e-12) -> DiagnosticsReport:
    """Ratios ``E int_S^T f(s, X_s) ds / ||f||_{L^q_p(S,T)}`` over a battery.

    Stability under doubling ``m`` compares the first half of the paths with
    all of them.  Scale invariance compares each ratio with that of ``scale * f``.
    ``threshold`` is 2 for bounded drifts and 1 for integrable ones.
    """
    d = ensemble.states.shape[-1]
    inputs = {
        "seed": ensemble.rng_seed, "m": ensemble.m_paths, "method": ensemble.method,
        "provenance": ensemble.provenance, "p": params.p, "q": params.q, "S": params.S, "T": params.T,
        "threshold": threshold, "battery": [f.name for f in battery],
        "battery_digest": digest([float(np.sum(f.values)) for f in battery]),
    }
    thresholds = {"stability_rel": stability_tol, "scale_invariance_rel": scale_tol}
    if not check_exponents(d, params.p, params.q, threshold):
        return DiagnosticsReport("krylov", inputs, {"exponent_sum": d / params.p + 2 / params.q}, "inconclusive",
                                 thresholds, notes=f"d/p + 2/q >= {threshold}: exponent precondition violated")
    half = ensemble.m_paths // 2
    rows = []
    for f in battery:
        norm = mixed_norm(f, params)
        occ = occupation_integral(f, ensemble.states, ensemble.times, params.S, params.T)
        occ_c = occupation_integral(f.scaled(scale), ensemble.states, ensemble.times, params.S, params.T)
        norm_c = mixed_norm(f.scaled(scale), params)
        if norm == 0:
            r_full = r_half = r_scaled = 0.0
        else:
            r_full = float(occ.mean() / norm)
            r_half = float(occ[:half].mean() / norm)
            r_scaled = float(occ_c.mean() / norm_c)
        mu, lo, hi = mean_ci(occ)
        rows.append({
            "name": f.name, "norm": norm, "expected_occupation": mu, "ci": [lo, hi],
            "ratio": r_full, "ratio_half_m": r_half, "ratio_scaled": r_scaled,
            "scale_rel_error": abs(r_scaled - r_full) / abs(r_full) if r_full else abs(r_scaled),
        })
    ratios = np.array([r["ratio"] for r in rows])
    halves = np.array([r["ratio_half_m"] for r in rows])
    max_full, max_half = float(ratios.max()), float(halves.max())
    stability = abs(max_full - max_half) / max_half if max_half > 0 else 0.0
    scale_err = max(r["scale_rel_error"] for r in rows)
    ok = np.isfinite(max_full) and stability <= stability_tol and scale_err <= scale_tol
    statistics = {"rows": rows, "max_ratio": max_full, "max_ratio_half_m": max_half,
                  "stability_rel": stability, "scale_invariance_rel": scale_err}
    return DiagnosticsReport("krylov", inputs, statistics, "pass" if ok else "fail", thresholds)


# ----------------------------------------------------------------------------- two-point moments


def two_point_moments(pipeline: Pipeline, x: float | np.ndarray, separations: Sequence[float],
                      gammas: Sequence[float] = (1.0, -1.0), horizon: float | None = None, m: int = 10_000,
                      seed: int = 0, stability_factor: float = 3.0, direction=None) -> DiagnosticsReport:
    """``E |X_t(x) - X_t(y)|^{2 gamma} / |x - y|^{2 gamma}`` across a ladder of separations.

    All starts share the noise.  Pairs that coincide to machine precision are
    excluded from negative moments and counted; any coincidence fails the check.
    """
    grid = pipeline.grid
    d = grid.dim
    t = grid.t_end if horizon is None else horizon
    x = np.broadcast_to(np.asarray(x, dtype=float), (d,))
    e = np.zeros(d)
    e[0] = 1.0
    e = e if direction is None else np.asarray(direction, float) / np.linalg.norm(direction)
    base, act0 = sample_states(pipeline, x, m, seed, [t])
    rows = []
    coincidences = 0
    for delta in separations:
        other, act1 = sample_states(pipeline, x + delta * e, m, seed, [t])
        act = act0 & act1
        dist = np.linalg.norm(base[act, 0] - other[act, 0], axis=-1)
        tiny = dist <= 4 * np.finfo(float).eps * np.maximum(1.0, np.linalg.norm(base[act, 0], axis=-1))
        coincidences += int(np.sum(tiny))
        row = {"separation": float(delta), "active_paths": int(np.sum(act)), "coincident": int(np.sum(tiny))}
        for g in gammas:
            vals = dist[~tiny] if g < 0 else dist
            mu, lo, hi = mean_ci((vals / delta) ** (2 * g))
            row[f"ratio_gamma_{g:g}"] = mu
            row[f"ci_gamma_{g:g}"] = [lo, hi]
        rows.append(row)
    spreads = {}
    for g in gammas:
        r = np.array([row[f"ratio_gamma_{g:g}"] for row in rows])
        spreads[f"{g:g}"] = float(r.max() / r.min()) if r.min() > 0 else float("inf")
    ok = coincidences == 0 and all(s <= stability_factor for s in spreads.values())
    inputs = {"pipeline": pipeline.describe(), "x": x, "separations": list(separations), "gammas": list(gammas),
              "horizon": t, "m": m, "seed": seed}
    statistics = {"rows": rows, "ratio_spread": spreads, "coincidences": coincidences,
                  "ladder_range": float(max(separations) / min(separations))}
    thresholds = {"max_ratio_spread": stability_factor, "max_coincidences": 0}
    return DiagnosticsReport("two_point_moments", inputs, statistics, "pass" if ok else "fail", thresholds)


# ----------------------------------------------------------------------------- non-crossing


def _order_stats(paths: np.ndarray, starts: np.ndarray):
    """Order violations over all pairs and the largest ``1/|X_i - X_j|`` for neighbours."""
    k = len(starts)
    violations = 0
    for i in range(k):
        for j in range(i + 1, k):
            violations += int(np.sum(paths[j] <= paths[i]))
    gaps = np.diff(paths, axis=0)
    with np.errstate(divide="ignore"):
        r = 1.0 / np.abs(gaps)
    return violations, float(np.max(r)), np.max(r, axis=(0, 2))


def noncrossing_check(pipeline: Pipeline, starts: Sequence[float], m: int = 1000, seed: int = 0,
                      contrast: Pipeline | None = None, chunk: int = 4096) -> DiagnosticsReport:
    """Count order violations ``X_t(x_i) >= X_t(x_j)``, ``x_i < x_j``, over all paths and saved times.

    Also records ``R = max_t 1 / |X_t(x_i) - X_t(x_{i+1})|``.  Paths where any
    start left the box are excluded and counted.  ``contrast`` is run on the
    same noise and reported without a verdict.
    """
    if pipeline.grid.dim != 1:
        raise ValueError("noncrossing_check needs d = 1")
    starts = np.sort(np.asarray(starts, dtype=float))

    def run(pipe):
        paths = []
        active = np.ones(m, dtype=bool)
        for x0 in starts:
            parts, acts = [], []
            for _, ens in iter_chunks(pipe, [x0], m, seed, 1, chunk):
                parts.append(ens.states[:, :, 0])
                acts.append(ens.active)
            paths.append(np.concatenate(parts))
            active &= np.concatenate(acts)
        paths = np.array(paths)[:, active]
        v, rmax, rpath = _order_stats(paths, starts)
        return {"violations": v, "R_max": rmax, "R_finite_all_paths": bool(np.all(np.isfinite(rpath))),
                "excluded_paths": int(np.sum(~active)), "pairs_times": int(paths.shape[1] * paths.shape[2])}

    main = run(pipeline)
    statistics = {"pipeline": main}
    if contrast is not None:
        statistics["contrast"] = {"name": contrast.name, **run(contrast)}
    statistics["R_initial"] = float(1.0 / np.min(np.diff(starts)))
    ok = main["violations"] == 0 and main["R_finite_all_paths"]
    inputs = {"pipeline": pipeline.describe(), "starts": starts, "m": m, "seed": seed,
              "contrast": None if contrast is None else contrast.describe()}
    thresholds = {"max_violations": 0, "R_finite": True}
    return DiagnosticsReport("noncrossing", inputs, statistics, "pass" if ok else "fail", thresholds)


# ----------------------------------------------------------------------------- strong Feller


@dataclass(frozen=True)
class BoundedFunction:
    """Bounded test function with the normalizer used in Feller ratios.

    ``scale`` plays the role of ``||phi||_inf``; :meth:`affine` rescales it by
    ``|c|`` so ``D(t)`` is unchanged under ``phi -> c phi + a``.
    """

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    scale: float = 1.0

    def __call__(self, x):
        return self.func(x)

    def affine(self, c: float, a: float) -> "BoundedFunction":
        f = self.func
        return BoundedFunction(f"{c:g}*{self.name}+{a:g}", lambda x: c * f(x) + a, abs(c) * self.scale)


def indicator_positive(axis: int = 0) -> BoundedFunction:
    return BoundedFunction("1{x>0}", lambda x: (np.asarray(x)[..., axis] > 0).astype(float), 1.0)


def smooth_step(width: float = 0.5) -> BoundedFunction:
    return BoundedFunction(f"tanh(x/{width:g})", lambda x: np.tanh(np.asarray(x)[..., 0] / width), 1.0)


def fit_slope(t: np.ndarray, D: np.ndarray, D_se: np.ndarray, level: float = 0.95) -> dict:
    """Least-squares slope of ``log D`` on ``log t`` with a Monte Carlo confidence interval.

    The interval propagates the per-point standard errors of ``log D`` (delta
    method) through the fixed least-squares weights.
    """
    lt, lD = np.log(t), np.log(D)
    c = lt - lt.mean()
    w = c / np.sum(c**2)
    slope = float(np.sum(w * lD))
    se = float(np.sqrt(np.sum((w * D_se / D) ** 2)))
    z = stats.norm.ppf(0.5 + level / 2)
    return {"slope": slope, "se": se, "ci": [float(slope - z * se), float(slope + z * se)]}


def _feller_curve(pipeline, phis, x, y, t_ladder, m, seed, chunk):
    sx, ax = sample_states(pipeline, x, m, seed, t_ladder, chunk)
    sy, ay = sample_states(pipeline, y, m, (seed, 1), t_ladder, chunk)
    dist = float(np.linalg.norm(np.asarray(x, float) - np.asarray(y, float)))
    out = {}
    for phi in phis:
        D, se = [], []
        for i in range(len(t_ladder)):
            vx, vy = phi(sx[ax, i]), phi(sy[ay, i])
            diff = vx.mean() - vy.mean()
            var = vx.var(ddof=1) / len(vx) + vy.var(ddof=1) / len(vy)
            D.append(abs(diff) / (phi.scale * dist))
            se.append(np.sqrt(var) / (phi.scale * dist))
        out[phi.name] = (np.array(D), np.array(se))
    return out, int(np.sum(~ax) + np.sum(~ay))


def gaussian_feller_exact(x: float, y: float, t) -> np.ndarray:
    """``|N(x/sqrt t) - N(y/sqrt t)| / |x - y|`` for Brownian motion and ``phi = 1{x>0}``."""
    t = np.asarray(t, dtype=float)
    return np.abs(stats.norm.cdf(x / np.sqrt(t)) - stats.norm.cdf(y / np.sqrt(t))) / abs(x - y)


def gaussian_control(grid: UniformGrid, t_ladder, m: int, seed: int, x: float = -0.05, y: float = 0.05,
                     tolerance: float = 0.15, chunk: int = 8192) -> DiagnosticsReport:
    """Brownian motion with ``phi = 1{x>0}``: fitted slope must be ``-1/2 +- tolerance``."""
    g1 = grid if grid.dim == 1 else UniformGrid(1, grid.t_start, grid.t_end, grid.n_time, grid.box_halfwidth, 3)
    bm = CoefficientSet(1, None, 1.0, 1.0, 1.0, tag="brownian")
    pipe = direct_pipeline(bm, g1, "gaussian-control", box=None)
    phi = indicator_positive()
    curve, _ = _feller_curve(pipe, [phi], [x], [y], t_ladder, m, seed, chunk)
    D, se = curve[phi.name]
    fit = fit_slope(np.asarray(t_ladder), D, se)
    exact = gaussian_feller_exact(x, y, t_ladder)
    ok = abs(fit["slope"] + 0.5) <= tolerance
    statistics = {"t": list(t_ladder), "D": D, "D_se": se, "D_exact": exact, **fit}
    inputs = {"grid": g1.to_dict(), "t_ladder": list(t_ladder), "m": m, "seed": seed, "x": x, "y": y}
    return DiagnosticsReport("gaussian_control", inputs, statistics, "pass" if ok else "fail",
                             {"slope_target": -0.5, "slope_tolerance": tolerance})


def strong_feller_scan(pipeline: Pipeline, phis: Sequence[BoundedFunction], x, y, t_ladder, m: int, seed: int = 0,
                       control: DiagnosticsReport | None = None, ci_range=(-0.7, -0.3), min_snr: float = 2.0,
                       control_tolerance: float = 0.15, chunk: int = 8192) -> DiagnosticsReport:
    """``D(t) = |E phi(X_t(x)) - E phi(X_t(y))| / (||phi|| |x - y|)`` on a time ladder.

    The Gaussian control runs first (unless a passing one is supplied); without
    a passing control the pipeline verdict is ``inconclusive``.  The slope of
    ``log D`` against ``log t`` is fitted for the first test function.  The
    verdict is ``pass`` when its 95% interval lies inside ``ci_range``; if
    only the point estimate lies inside while the interval overlaps the range
    the verdict is also ``pass``, with the weaker reading noted.  When Monte
    Carlo noise swamps some ``D(t)`` the verdict is ``inconclusive`` with an
    extrapolated ensemble size.
    """
    t_ladder = np.asarray(t_ladder, dtype=float)
    if control is None:
        control = gaussian_control(pipeline.grid, t_ladder, m, seed + 1, tolerance=control_tolerance, chunk=chunk)
    d = pipeline.grid.dim
    x = np.broadcast_to(np.asarray(x, float), (d,))
    y = np.broadcast_to(np.asarray(y, float), (d,))
    curve, excluded = _feller_curve(pipeline, phis, x, y, t_ladder, m, seed, chunk)
    rows = {}
    for name, (D, se) in curve.items():
        rows[name] = {"D": D, "D_se": se, "bounded_by_2_over_dist": bool(np.all(D <= 2.0 / np.linalg.norm(x - y)))}
    D0, se0 = curve[phis[0].name]
    thresholds = {"ci_range": list(ci_range), "min_snr": min_snr, "control_required": "pass"}
    inputs = {"pipeline": pipeline.describe(), "phis": [p.name for p in phis], "x": x, "y": y,
              "t_ladder": t_ladder, "m": m, "seed": seed, "control_digest": control.inputs_digest}
    statistics = {"t": t_ladder, "rows": rows, "excluded_paths": excluded,
                  "control": {"verdict": control.verdict, "slope": control.statistics.get("slope"),
                              "ci": control.statistics.get("ci")}}
    if not control.passed:
        return DiagnosticsReport("strong_feller", inputs, statistics, "inconclusive", thresholds,
                                 notes="Gaussian control did not pass; pipeline verdict withheld")
    snr = np.where(se0 > 0, D0 / np.where(se0 > 0, se0, 1.0), np.inf)
    if np.any(snr < min_snr):
        need = int(math.ceil(m * float(np.max((min_snr / np.maximum(snr, 1e-12)) ** 2))))
        statistics["min_m_needed"] = need
        return DiagnosticsReport("strong_feller", inputs, statistics, "inconclusive", thresholds,
                                 notes=f"Monte Carlo noise exceeds signal; need m >= {need}")
    fit = fit_slope(t_ladder, D0, se0)
    statistics.update(fit)
    lo, hi = ci_range
    contained = lo <= fit["ci"][0] and fit["ci"][1] <= hi
    overlapping = lo <= fit["slope"] <= hi and fit["ci"][0] <= hi and fit["ci"][1] >= lo
    statistics["ci_contained"] = contained
    notes = "" if contained else ("point estimate inside range, interval overlaps it" if overlapping else "")
    verdict = "pass" if (contained or overlapping) else "fail"
    return DiagnosticsReport("strong_feller", inputs, statistics, verdict, thresholds, notes=notes)


# ----------------------------------------------------------------------------- BEL gradient


def bel_gradient(coeffs: CoefficientSet, grid: UniformGrid, phi: BoundedFunction, x, t: float, m: int,
                 seed: int = 0, direction=None, fd_step: float = 1e-3, chunk: int = 4096) -> DiagnosticsReport:
    """Bismut-Elworthy-Li estimate of ``grad_h E phi(X_t(x))`` for the driftless SDE.

    The weight is ``(1/t) phi(X_t) sum_k (sigma^{-1}(X_k) J_k) . dW_k`` with
    ``J = grad_h X`` from :func:`variational_flow`.  It is compared with the
    central difference ``(E phi(X_t(x + eps h)) - E phi(X_t(x - eps h))) / (2 eps)``
    on the same noise; the verdict asks for overlapping 95% intervals.
    """
    if not coeffs.zero_drift:
        raise ValueError("bel_gradient applies to driftless dynamics")
    d = grid.dim
    x = np.broadcast_to(np.asarray(x, float), (d,))
    h = np.eye(d)[0] if direction is None else np.asarray(direction, float)
    tg = grid.window(grid.t_start, t) if t < grid.t_end - 1e-12 else grid
    pipe = direct_pipeline(coeffs, tg, box=None)
    bel, fd = [], []
    for j in range(0, m, chunk):
        take = min(chunk, m - j)
        inc = generate_brownian(take, tg, seed, first_path=j)
        base = pipe.run(x, inc)
        J = variational_flow(coeffs, base, h)
        weight = np.zeros(take)
        for k in range(tg.n_time):
            sig = coeffs.diffusion(tg.times[k], base.states[:, k])
            v = np.linalg.solve(sig, J[:, k][..., None])[..., 0]
            weight += np.sum(v * inc.values[:, k], axis=-1)
        bel.append(phi(base.states[:, -1]) * weight / (t - tg.t_start))
        plus = pipe.run(x + fd_step * h, inc).states[:, -1]
        minus = pipe.run(x - fd_step * h, inc).states[:, -1]
        fd.append((phi(plus) - phi(minus)) / (2 * fd_step))
    bel = np.concatenate(bel)
    fd = np.concatenate(fd)
    b_mu, b_lo, b_hi = mean_ci(bel)
    f_mu, f_lo, f_hi = mean_ci(fd)
    overlap = b_lo <= f_hi and f_lo <= b_hi
    statistics = {"bel": b_mu, "bel_ci": [b_lo, b_hi], "bel_std": float(np.std(bel, ddof=1)),
                  "fd": f_mu, "fd_ci": [f_lo, f_hi], "fd_std": float(np.std(fd, ddof=1))}
    inputs = {"coeffs": coeffs.tag, "grid": tg.to_dict(), "phi": phi.name, "x": x, "t": t, "m": m, "seed": seed,
              "direction": h, "fd_step": fd_step}
    return DiagnosticsReport("bel_gradient", inputs, statistics, "pass" if overlap else "fail",
                             {"ci_level": 0.95, "rule": "intervals overlap"})


def bel_std_scaling(coeffs: CoefficientSet, grid: UniformGrid, phi: BoundedFunction, x, t_ladder, m: int,
                    seed: int = 0, target: float = -0.5, tolerance: float = 0.2) -> DiagnosticsReport:
    """Slope of ``log std(BEL estimator)`` against ``log t``; expected ``-1/2``."""
    stds, reports = [], []
    for t in t_ladder:
        r = bel_gradient(coeffs, grid, phi, x, t, m, seed)
        stds.append(r.statistics["bel_std"])
        reports.append(r.statistics)
    lt, ls = np.log(t_ladder), np.log(stds)
    slope = float(np.polyfit(lt, ls, 1)[0])
    ok = abs(slope - target) <= tolerance
    inputs = {"coeffs": coeffs.tag, "grid": grid.to_dict(), "phi": phi.name, "x": x, "t_ladder": list(t_ladder),
              "m": m, "seed": seed}
    statistics = {"std": stds, "slope": slope, "per_t": reports}
    return DiagnosticsReport("bel_std_scaling", inputs, statistics, "pass" if ok else "fail",
                             {"slope_target": target, "slope_tolerance": tolerance})


# ----------------------------------------------------------------------------- Khasminskii


def khasminskii_moment(pipeline: Pipeline, beta: Callable[[float, np.ndarray], np.ndarray], lambdas, x0,
                       m: int, seed: int = 0, stability_tol: float = 0.25, chunk: int = 8192) -> DiagnosticsReport:
    """``E exp(lambda int_0^T beta(s, X_s) ds)`` on a lambda ladder.

    ``kappa = max_s E int_s^T beta`` is the measured smallness proxy; estimates
    for ``lambda < 1/kappa`` must be finite and move by at most ``stability_tol``
    (relative) between the first half of the paths and all of them.  Overflow is
    recorded as ``inf`` rather than raised.
    """
    grid = pipeline.grid
    A_parts, tail_parts = [], []
    for _, ens in iter_chunks(pipeline, x0, m, seed, 1, chunk):
        vals = np.stack([beta(t, ens.states[:, k]) for k, t in enumerate(ens.times)], axis=1)
        vals = vals.reshape(vals.shape[0], vals.shape[1])
        seg = 0.5 * (vals[:, 1:] + vals[:, :-1]) * np.diff(ens.times)
        tails = np.concatenate([np.cumsum(seg[:, ::-1], axis=1)[:, ::-1], np.zeros((len(seg), 1))], axis=1)
        A_parts.append(tails[:, 0])
        tail_parts.append(tails.sum(axis=0))
    A = np.concatenate(A_parts)
    kappa = float(np.max(np.sum(tail_parts, axis=0) / m))
    rows = []
    half = m // 2
    ok = True
    prev = -np.inf
    monotone = True
    for lam in lambdas:
        with np.errstate(over="ignore"):
            e = np.exp(lam * A)
        with np.errstate(invalid="ignore"):
            mu, lo, hi = mean_ci(e)
        mu_half = float(np.mean(e[:half]))
        rel = abs(mu - mu_half) / mu_half if np.isfinite(mu_half) and mu_half > 0 else float("inf")
        in_range = lam * kappa < 1
        if in_range and not (np.isfinite(mu) and rel <= stability_tol):
            ok = False
        monotone &= bool(mu >= prev)
        prev = mu
        rows.append({"lambda": lam, "estimate": mu, "ci": [lo, hi], "estimate_half_m": mu_half,
                     "stability_rel": rel, "below_inverse_kappa": in_range, "overflow": not np.isfinite(mu)})
    ok = ok and monotone
    inputs = {"pipeline": pipeline.describe(), "lambdas": list(lambdas), "x0": x0, "m": m, "seed": seed}
    statistics = {"kappa": kappa, "rows": rows, "monotone_in_lambda": monotone}
    thresholds = {"stability_rel": stability_tol, "lambda_range": "lambda * kappa < 1"}
    if not any(r["below_inverse_kappa"] for r in rows):
        return DiagnosticsReport("khasminskii", inputs, statistics, "inconclusive", thresholds,
                                 notes="no lambda on the ladder lies below 1/kappa")
    return DiagnosticsReport("khasminskii", inputs, statistics, "pass" if ok else "fail", thresholds)


# ----------------------------------------------------------------------------- uniqueness


def uniqueness_witness(pipelines: Sequence[Pipeline], x0, m: int, seed: int = 0, tolerance: float = 0.05,
                       save_stride: int = 1, chunk: int = 4096) -> DiagnosticsReport:
    """Common-noise distance between solutions from a refinement ladder of pipelines.

    ``pipelines`` run from coarse to fine on the same time grid.  ``distance[i]``
    is ``E sup_t |X^(i)_t - X^(last)_t|``; the verdict asks for a strictly
    decreasing sequence with the finest comparison below ``tolerance``.  Two
    pipelines give a single distance that only needs to be below ``tolerance``.
    """
    if len(pipelines) < 2:
        raise ValueError("need at least two pipelines")
    grid = pipelines[0].grid
    runs = []
    for p in pipelines:
        if p.grid.n_time != grid.n_time or abs(p.grid.t_end - grid.t_end) > 1e-12:
            raise ValueError("pipelines must share the time grid")
        parts, acts = [], []
        for _, ens in iter_chunks(p, x0, m, seed, save_stride, chunk):
            parts.append(ens.states)
            acts.append(ens.active)
        runs.append((np.concatenate(parts), np.concatenate(acts)))
    ref, ref_act = runs[-1]
    dist = []
    for states, act in runs[:-1]:
        use = act & ref_act
        gap = np.max(np.linalg.norm(states[use] - ref[use], axis=-1), axis=1)
        dist.append(float(gap.mean()))
    dist = np.array(dist)
    decreasing = bool(np.all(np.diff(dist) < 0)) if len(dist) > 1 else True
    ok = decreasing and dist[-1] <= tolerance
    inputs = {"pipelines": [p.describe() for p in pipelines], "x0": x0, "m": m, "seed": seed}
    statistics = {"distances_to_finest": dist, "decreasing": decreasing,
                  "successive_ratios": (dist[1:] / dist[:-1]) if len(dist) > 1 else []}
    return DiagnosticsReport("uniqueness", inputs, statistics, "pass" if ok else "fail",
                             {"final_distance_max": tolerance, "monotone": "strictly decreasing"})


# ----------------------------------------------------------------------------- law consistency


def ks_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Two-sample Kolmogorov-Smirnov statistic."""
    return float(stats.ks_2samp(np.ravel(a), np.ravel(b), method="asymp").statistic)


def law_consistency(pairs: Sequence[tuple[Pipeline, Pipeline]], x0, m: int, seed: int = 0,
                    ks_max: float = 0.05) -> DiagnosticsReport:
    """KS distance between the terminal laws of two discretizations along a refinement ladder.

    Each pair runs on its own time grid with common noise inside the pair, so
    ``gap = E |X^a_T - X^b_T|`` over jointly active paths is also recorded; it
    resolves the scheme difference below the KS noise floor.  Pass when the
    KS distance at every level is ``<= ks_max`` and it decreases from the
    first to the last level.
    """
    rows = []
    for a, b in pairs:
        xa, aa = sample_states(a, x0, m, seed, [a.grid.t_end])
        xb, ab = sample_states(b, x0, m, seed, [b.grid.t_end])
        ks = ks_distance(xa[aa, 0, 0], xb[ab, 0, 0])
        both = aa & ab
        gap = float(np.mean(np.linalg.norm(xa[both, 0] - xb[both, 0], axis=-1))) if both.any() else float("nan")
        rows.append({"first": a.describe(), "second": b.describe(), "ks": ks, "gap": gap,
                     "excluded": int(np.sum(~aa) + np.sum(~ab)),
                     "mean": [float(xa[aa, 0, 0].mean()), float(xb[ab, 0, 0].mean())]})
    ks = np.array([r["ks"] for r in rows])
    gaps = np.array([r["gap"] for r in rows])
    decreasing = bool(ks[-1] < ks[0]) if len(ks) > 1 else True
    gap_decreasing = bool(np.all(np.diff(gaps) < 0))
    ok = bool(np.all(ks <= ks_max)) and decreasing
    inputs = {"pairs": [[a.describe(), b.describe()] for a, b in pairs], "x0": x0, "m": m, "seed": seed}
    statistics = {"rows": rows, "ks": ks, "decreasing": decreasing, "gap": gaps, "gap_decreasing": gap_decreasing}
    return DiagnosticsReport("law_consistency", inputs, statistics, "pass" if ok else "fail",
                             {"ks_max": ks_max, "refinement": "decreasing"})
