"""Brownian increments, Euler-Maruyama path ensembles and localization by cutoff.

Increments come from per-block counter-based streams (Philox keyed by the seed
and the block index, 256 paths per block), so the noise of path ``j`` depends
only on ``(seed, j, grid)`` and never on the ensemble size or on scheduling.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np

from .coefficients import CoefficientSet
from .grid import SpaceTimeField, UniformGrid, interpolate
from .zvonkin import InverseMapError, ZvonkinChain

BLOCK = 256
SCHEME_TAG = "philox-block256"


@dataclass(frozen=True, eq=False)
class BrownianIncrements:
    """``values[j, k]`` is ``W(t_{k+1}) - W(t_k)`` for path ``j``; shape ``(m, n_time, d)``."""

    grid: UniformGrid
    values: np.ndarray
    seed: int | tuple
    scheme_tag: str = SCHEME_TAG
    first_path: int = 0
    moments: dict = field(default_factory=dict)

    @property
    def m(self) -> int:
        return self.values.shape[0]

    def paths(self, index) -> "BrownianIncrements":
        """Subset of paths (same seed provenance)."""
        return dataclasses.replace(self, values=self.values[index])

    def window(self, k0: int, k1: int) -> np.ndarray:
        return self.values[:, k0:k1]


def moment_check(values: np.ndarray, dt: float) -> dict:
    """Sample mean and variance of all increments against ``N(0, dt)``.

    The mean must satisfy ``|mean| <= 4 sqrt(dt / N)``; the variance is held to
    5% only once ``N >= 10^6`` samples are available.
    """
    n = values.size
    mean = float(values.mean())
    var = float(values.var())
    mean_ok = abs(mean) <= 4.0 * np.sqrt(dt / n)
    var_checked = n >= 10**6
    var_ok = abs(var / dt - 1.0) <= 0.05 if var_checked else True
    return {
        "samples": n,
        "mean": mean,
        "mean_bound": 4.0 * np.sqrt(dt / n),
        "variance_ratio": var / dt,
        "variance_checked": var_checked,
        "passed": bool(mean_ok and var_ok),
    }


def generate_brownian(m: int, grid: UniformGrid, seed, first_path: int = 0) -> BrownianIncrements:
    """Increments for paths ``first_path .. first_path + m - 1`` on ``grid``.

    ``seed`` is an integer or a tuple of integers (distinct tuples give
    independent noise).
    """
    if m < 1:
        raise ValueError("m must be >= 1")
    d = grid.dim
    nt = grid.n_time
    out = np.empty((m, nt, d))
    sd = np.sqrt(grid.dt)
    j = first_path
    end = first_path + m
    while j < end:
        block = j // BLOCK
        ss = np.random.SeedSequence(seed, spawn_key=(block,))
        draws = np.random.Generator(np.random.Philox(ss)).standard_normal((BLOCK, nt, d))
        lo = j - block * BLOCK
        take = min(BLOCK - lo, end - j)
        out[j - first_path:j - first_path + take] = sd * draws[lo:lo + take]
        j += take
    return BrownianIncrements(grid, out, seed, SCHEME_TAG, first_path, moment_check(out, grid.dt))


@dataclass(frozen=True, eq=False)
class PathEnsemble:
    """Simulated trajectories with the increments that drove them.

    ``states`` has shape ``(m, len(times), d)``.  Paths that left the box are
    frozen at their last position; ``exited`` flags them and ``exit_time``
    records the first grid time outside (``inf`` otherwise).  ``failed`` flags
    paths that produced non-finite values.
    """

    times: np.ndarray
    states: np.ndarray
    increments: BrownianIncrements
    exited: np.ndarray
    exit_time: np.ndarray
    failed: np.ndarray
    method: str
    provenance: dict = field(default_factory=dict)

    @property
    def m_paths(self) -> int:
        return self.states.shape[0]

    @property
    def rng_seed(self) -> int:
        return self.increments.seed

    @property
    def scheme_tag(self) -> str:
        return self.increments.scheme_tag

    @property
    def brownian_increments(self) -> np.ndarray:
        return self.increments.values

    @property
    def active(self) -> np.ndarray:
        """Paths that stayed inside the box and finite for the whole horizon."""
        return ~(self.exited | self.failed)

    def terminal(self, only_active: bool = True) -> np.ndarray:
        x = self.states[:, -1]
        return x[self.active] if only_active else x

    def at(self, t: float) -> np.ndarray:
        k = int(np.argmin(np.abs(self.times - t)))
        if abs(self.times[k] - t) > 1e-9 * max(1.0, abs(t)):
            raise ValueError(f"time {t} is not a saved time")
        return self.states[:, k]


def _save_indices(n_time: int, stride: int) -> np.ndarray:
    idx = np.arange(0, n_time + 1, stride)
    if idx[-1] != n_time:
        idx = np.append(idx, n_time)
    return idx


def _start(x0, m, d):
    x0 = np.asarray(x0, dtype=float)
    return np.array(np.broadcast_to(x0, (m, d)), dtype=float)


class _Recorder:
    """Freezing, flagging and saving shared by every stepper."""

    def __init__(self, x, grid, stride, box_fraction, box):
        self.grid = grid
        self.m = len(x)
        self.save = _save_indices(grid.n_time, stride)
        self.states = np.empty((self.m, len(self.save), x.shape[1]))
        self.exited = np.zeros(self.m, dtype=bool)
        self.failed = np.zeros(self.m, dtype=bool)
        self.exit_time = np.full(self.m, np.inf)
        self.box = box
        self.fraction = box_fraction
        self._slot = 0
        self.record(0, x)

    @property
    def frozen(self):
        return self.exited | self.failed

    def update(self, k, x_old, x_new):
        """Accept ``x_new`` at level ``k`` for live paths; returns the merged state."""
        live = ~self.frozen
        bad = live & ~np.all(np.isfinite(x_new), axis=-1)
        self.failed |= bad
        out = np.where((live & ~bad)[:, None], x_new, x_old)
        if self.box is not None:
            outside = live & ~bad & ~self.box.contains(out, self.fraction)
            self.exited |= outside
            self.exit_time[outside] = self.grid.times[k]
        return out

    def record(self, k, x):
        if self._slot < len(self.save) and self.save[self._slot] == k:
            self.states[:, self._slot] = x
            self._slot += 1

    def ensemble(self, increments, method, provenance):
        return PathEnsemble(self.grid.times[self.save], self.states, increments, self.exited.copy(),
                            self.exit_time, self.failed.copy(), method, provenance)


def euler_direct(coeffs: CoefficientSet, x0, increments: BrownianIncrements, save_stride: int = 1,
                 box: UniformGrid | None | str = "grid", box_fraction: float = 1.0) -> PathEnsemble:
    """``X_{k+1} = X_k + b(t_k, X_k) dt + sigma(t_k, X_k) dW_k``.

    ``box="grid"`` freezes paths that leave the spatial box of the increments'
    grid; pass another grid to use its box or ``None`` to never freeze.
    """
    grid = increments.grid
    box = grid if box == "grid" else box
    x = _start(x0, increments.m, grid.dim)
    rec = _Recorder(x, grid, save_stride, box_fraction, box)
    dt = grid.dt
    dW = increments.values
    with np.errstate(all="ignore"):
        for k in range(grid.n_time):
            t = grid.times[k]
            sig = coeffs.diffusion(t, x)
            x_new = x + coeffs.drift(t, x) * dt + np.einsum("mij,mj->mi", sig, dW[:, k])
            x = rec.update(k + 1, x, x_new)
            rec.record(k + 1, x)
    return rec.ensemble(increments, "direct", {"coeffs_tag": coeffs.tag, "x0": np.asarray(x0).tolist()})


def _driftless_steps(sigma: SpaceTimeField, y, dW, rec, k_offset, on_step=None):
    g = sigma.grid
    for kl in range(g.n_time):
        sig = interpolate(g, sigma.values[kl], y)
        y_new = y + np.einsum("mij,mj->mi", sig, dW[:, kl])
        y = rec.update(k_offset + kl + 1, y, y_new)
        if on_step is not None:
            on_step(kl + 1, k_offset + kl + 1, y)
        else:
            rec.record(k_offset + kl + 1, y)
    return y


def _offset(increments: BrownianIncrements, g: UniformGrid) -> int:
    ig = increments.grid
    k0 = int(round((g.t_start - ig.t_start) / ig.dt))
    if abs(g.dt - ig.dt) > 1e-12 * ig.dt or k0 < 0 or k0 + g.n_time > ig.n_time:
        raise ValueError("field grid is not a time window of the increment grid")
    return k0


def euler_driftless(sigma: SpaceTimeField, y0, increments: BrownianIncrements, save_stride: int = 1,
                    box_fraction: float = 1.0) -> PathEnsemble:
    """``Y_{k+1} = Y_k + Sigma(t_k, Y_k) dW_k`` with ``Sigma`` interpolated on its grid.

    ``sigma`` may live on a time window of the increment grid; the ensemble then
    covers that window only.
    """
    g = sigma.grid
    k0 = _offset(increments, g)
    sub = dataclasses.replace(increments, grid=g, values=increments.values[:, k0:k0 + g.n_time])
    y = _start(y0, increments.m, g.dim)
    rec = _Recorder(y, g, save_stride, box_fraction, g)
    with np.errstate(all="ignore"):
        _driftless_steps(sigma, y, sub.values, rec, 0)
    return rec.ensemble(sub, "driftless", {"sigma": sigma.name, "y0": np.asarray(y0).tolist()})


def zvonkin_simulate(chain: ZvonkinChain, coeffs: CoefficientSet, x0, increments: BrownianIncrements,
                     save_stride: int = 1, box_fraction: float = 1.0) -> PathEnsemble:
    """Simulate ``X`` through ``Y_t = Phi_t(X_t)`` and ``dY = Sigma_t(Y) dW`` segment by segment.

    On each segment ``[S, T]`` the state is mapped forward with ``Phi_S``, the
    driftless equation runs with the segment's ``Sigma`` and saved states are
    read back through ``Psi_t``.  Since ``u(T) = 0`` the state at ``T`` is
    already in original coordinates and is handed to the next segment as is.
    """
    grid = chain.grid
    k_base = _offset(increments, grid)
    dW_all = increments.values[:, k_base:k_base + grid.n_time]
    sub = dataclasses.replace(increments, grid=grid, values=dW_all)
    x = _start(x0, increments.m, grid.dim)
    rec = _Recorder(x, grid, save_stride, box_fraction, grid)
    save = set(rec.save.tolist())
    for si, ((k0, k1), seg) in enumerate(zip(chain.step_ranges(), chain.segments)):
        if seg.sigma_transformed is None:
            raise ValueError(f"segment {si} has no transformed diffusion")
        y = seg.forward_at(0, x)

        def on_step(kl, kg, yk, seg=seg, si=si):
            if kg in save and kl < seg.grid.n_time:
                rec.record(kg, x_of(seg, si, kl, yk))

        def x_of(seg, si, kl, yk):
            out = yk.copy()
            live = ~rec.frozen
            if np.any(live):
                try:
                    out[live] = seg.inverse_at(kl, yk[live])
                except InverseMapError as err:
                    raise InverseMapError(f"segment {si}: {err}", segment=si) from err
            return out

        with np.errstate(all="ignore"):
            y = _driftless_steps(seg.sigma_transformed, y, dW_all[:, k0:k1], rec, k0, on_step)
        x = x_of(seg, si, seg.grid.n_time, y)
        rec.record(k1, x)
    prov = {"coeffs_tag": coeffs.tag, "segments": [list(w) for w in chain.windows], "x0": np.asarray(x0).tolist()}
    return rec.ensemble(sub, "zvonkin", prov)


def variational_flow(coeffs: CoefficientSet | SpaceTimeField, base: PathEnsemble, direction) -> np.ndarray:
    """``J = grad_h X`` along each base path; shape ``(m, len(times), d)``.

    ``J_{k+1} = J_k + (grad b) J_k dt + sum_k' (grad sigma^{. k'} J_k) dW^{k'}``
    with the base path's own increments.  A field argument is treated as a
    driftless diffusion coefficient.  The base ensemble must keep every level.
    """
    grid = base.increments.grid
    if len(base.times) != grid.n_time + 1:
        raise ValueError("the base ensemble must save every time level")
    d = grid.dim
    m = base.m_paths
    h = np.asarray(direction, dtype=float).reshape(d)
    J = np.empty((m, grid.n_time + 1, d))
    J[:, 0] = h
    dW = base.increments.values
    for k in range(grid.n_time):
        t = grid.times[k]
        xk = base.states[:, k]
        if isinstance(coeffs, SpaceTimeField):
            g = coeffs.grid
            _, ds = interpolate(g, coeffs.values[g.time_index(t)], xk, with_gradient=True)
            db = 0.0
        else:
            ds = coeffs.diffusion_jacobian(t, xk)
            db = np.einsum("mil,ml->mi", coeffs.drift_jacobian_at(t, xk), J[:, k]) * grid.dt
        J[:, k + 1] = J[:, k] + db + np.einsum("mikl,ml,mk->mi", ds, J[:, k], dW[:, k])
    return J


def smooth_ramp(s: np.ndarray) -> np.ndarray:
    """C^2 quintic ramp: 1 for ``s <= 0``, 0 for ``s >= 1``."""
    s = np.clip(s, 0.0, 1.0)
    return 1.0 - s**3 * (10.0 - 15.0 * s + 6.0 * s**2)


def chi(n: float, t, x: np.ndarray) -> np.ndarray:
    """Cutoff equal to 1 on ``[0, n] x B_n`` and 0 off ``[0, n+1] x B_{n+1}``."""
    r = np.linalg.norm(np.asarray(x, dtype=float), axis=-1)
    return smooth_ramp(np.asarray(t, dtype=float) - n) * smooth_ramp(r - n)


def sup_sigma(coeffs: CoefficientSet, radius: float, horizon: float, n_samples: int = 41) -> float:
    """Sampled sup of the Frobenius norm of ``sigma`` over ``[0, horizon] x B_radius``."""
    d = coeffs.dim
    ax = np.linspace(-radius, radius, n_samples if d == 1 else 21)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    pts = pts[np.linalg.norm(pts, axis=-1) <= radius]
    best = 0.0
    for t in np.linspace(0.0, horizon, 5):
        best = max(best, float(np.max(np.linalg.norm(coeffs.diffusion(t, pts), axis=(-2, -1)))))
    return best


def cutoff_coefficients(coeffs: CoefficientSet, n: float) -> CoefficientSet:
    """``b^n = chi_n b`` and ``sigma^n = chi_{n+1} sigma + (1 - chi_n)(1 + sup|sigma|) I``.

    ``sup|sigma|`` is sampled over ``[0, n+2] x B_{n+2}``, the support of
    ``chi_{n+1}``, so ``sigma^n`` is exactly ``(1 + sup|sigma|) I`` off that set.
    """
    d = coeffs.dim
    s = sup_sigma(coeffs, n + 2, n + 2)
    eye = np.eye(d)

    def b_n(t, x):
        return chi(n, t, x)[..., None] * coeffs.drift(t, x)

    def sigma_n(t, x):
        x = np.asarray(x, dtype=float)
        inner = chi(n + 1, t, x)[..., None, None] * coeffs.diffusion(t, x)
        return inner + (1.0 - chi(n, t, x))[..., None, None] * (1.0 + s) * eye

    radius = n + 3
    ax = np.linspace(-radius, radius, 61 if d == 1 else 25)
    pts = np.stack(np.meshgrid(*([ax] * d), indexing="ij"), axis=-1).reshape(-1, d)
    lower = min(coeffs.ellipticity_lower, 1.0)
    upper = (np.sqrt(coeffs.ellipticity_upper) + 1.0 + s) ** 2
    return CoefficientSet(
        d, b_n, sigma_n, lower, upper, tag=f"{coeffs.tag}|cutoff(n={n:g})",
        sample_points=pts, sample_times=tuple(np.linspace(0.0, n + 2, 5)),
    )


@dataclass(frozen=True, eq=False)
class ExplosionExperiment:
    """Nested cutoff runs sharing one noise.

    ``zeta[i, j]`` is the first grid time path ``j`` at level ``levels[i]``
    reaches ``|x| >= exit_radii[i]`` (``inf`` if it never does before the
    horizon).  ``agreement[i]`` is the largest pathwise difference between
    levels ``i`` and ``i+1`` up to the exit time of level ``i``.
    """

    levels: tuple[float, ...]
    exit_radii: tuple[float, ...]
    zeta: np.ndarray
    exploded: np.ndarray
    zeta_estimate: np.ndarray
    agreement: np.ndarray
    agreement_tolerance: float
    horizon: float
    dt: float
    ensembles: tuple[PathEnsemble, ...] = ()

    @property
    def agreement_ok(self) -> bool:
        return bool(np.all(self.agreement <= self.agreement_tolerance))

    @property
    def monotone(self) -> bool:
        """Exit times are non-decreasing in the level on every path."""
        return bool(np.all(np.diff(self.zeta, axis=0) >= 0))


def _first_exit(states, times, radius):
    r = np.linalg.norm(states, axis=-1)
    hit = r >= radius
    any_hit = hit.any(axis=1)
    first = np.argmax(hit, axis=1)
    return np.where(any_hit, times[first], np.inf), np.where(any_hit, first, len(times) - 1)


def glue_and_detect_explosion(coeffs: CoefficientSet, levels, x0, increments: BrownianIncrements,
                              agreement_tolerance: float = 1e-12, keep_ensembles: bool = False
                              ) -> ExplosionExperiment:
    """Simulate every cutoff level with the same increments and glue by exit times.

    The exit radius of level ``n`` is ``n`` and its exit time is capped at time
    ``n`` as in the stopping times ``inf{t: |X^n_t| >= k} ^ n``.  A path is
    flagged exploded when the exit times of the two largest levels are within
    one time step of each other and below the horizon.
    """
    levels = tuple(sorted(float(n) for n in levels))
    if len(levels) < 2:
        raise ValueError("need at least two cutoff levels")
    grid = increments.grid
    runs = []
    zetas, firsts = [], []
    for n in levels:
        ens = euler_direct(cutoff_coefficients(coeffs, n), x0, increments, box=None)
        z, first = _first_exit(ens.states, ens.times, n)
        z = np.minimum(z, n) if n < grid.t_end else z
        runs.append(ens)
        zetas.append(z)
        firsts.append(first)
    zeta = np.array(zetas)
    agreement = np.zeros(len(levels) - 1)
    for i in range(len(levels) - 1):
        a, b = runs[i].states, runs[i + 1].states
        upto = np.arange(a.shape[1])[None, :] <= firsts[i][:, None]
        with np.errstate(invalid="ignore"):
            diff = np.where(upto[..., None], np.abs(a - b), 0.0)
        agreement[i] = float(np.nanmax(diff)) if diff.size else 0.0
    top, second = zeta[-1], zeta[-2]
    with np.errstate(invalid="ignore"):
        close = np.abs(top - second) <= grid.dt * (1 + 1e-9)
    exploded = np.isfinite(top) & close & (top < grid.t_end)
    return ExplosionExperiment(
        levels, levels, zeta, exploded, np.where(exploded, top, np.inf), agreement,
        agreement_tolerance, grid.t_end, grid.dt, tuple(runs) if keep_ensembles else (),
    )
