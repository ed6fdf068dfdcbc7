"""Zvonkin maps ``Phi_t(x) = x + u(t, x)`` built window by window.

On a window ``[S, T]`` each drift component ``b^l`` sources the backward
equation ``d_t u^l + L_t u^l + b^l = 0`` with ``u^l(T) = 0``.  A window is
accepted when the measured gradient bound ``sup |grad u| <= 1/2`` holds on the
region of interest; then ``Phi_t`` is bi-Lipschitz with constants ``1/2`` and
``3/2`` and ``Y_t = Phi_t(X_t)`` solves the driftless equation
``dY = Sigma_t(Y) dW`` with ``Sigma = (grad Phi . sigma) o Psi``.  Windows that
fail the bound are bisected until every piece passes.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .analysis import MixedNormParams
from .coefficients import CoefficientSet
from .grid import SpaceTimeField, UniformGrid, cell_slope_bound, interpolate
from .pde import PdeProblem, PdeSolution, solve_backward

GRADIENT_BOUND = 0.5
NEWTON_TOL = 1e-10
NEWTON_MAX_ITER = 50


class InverseMapError(AssertionError):
    """Newton inversion of ``Phi_t`` failed; cannot happen when ``sup |grad u| <= 1/2``."""

    def __init__(self, message: str, segment: int | None = None):
        super().__init__(message)
        self.segment = segment


class MinimumWindowReached(RuntimeError):
    """Bisection hit the smallest admissible window without meeting the gradient bound."""

    def __init__(self, window: tuple[float, float], sup_grad: float):
        super().__init__(
            f"window [{window[0]:.6g}, {window[1]:.6g}] still has sup|grad u| = {sup_grad:.4g} > "
            f"{GRADIENT_BOUND}; the drift is too singular for this grid"
        )
        self.window = window
        self.sup_grad = sup_grad


def holder_bounds(dim: int, p: float, q: float) -> tuple[float, float]:
    """Open interval ``(0, 1/2 - d/(2p) - 1/q)`` of admissible Hoelder exponents."""
    return 0.0, 0.5 - dim / (2.0 * p) - 1.0 / q


@dataclass(frozen=True, eq=False)
class SegmentRefusal:
    """A window whose measured gradient bound exceeds 1/2."""

    window: tuple[float, float]
    sup_grad: float
    accepted: bool = field(default=False, init=False)


@dataclass(frozen=True, eq=False)
class ZvonkinSegment:
    """Accepted window with its corrector ``u``, ``grad u`` and transformed diffusion.

    ``sigma_transformed`` lives on the window grid; ``sigma_singular_values``
    is the (min, max) over region-of-interest nodes and ``sigma_fallbacks``
    counts nodes where the inverse failed and ``sigma`` itself was used.
    """

    window: tuple[float, float]
    u: SpaceTimeField
    grad_u: SpaceTimeField
    sup_grad: float
    holder_exponent: float
    solution: PdeSolution | None = None
    sigma_transformed: SpaceTimeField | None = None
    sigma_singular_values: tuple[float, float] = (float("nan"), float("nan"))
    sigma_fallbacks: int = 0
    accepted: bool = field(default=True, init=False)

    @property
    def grid(self) -> UniformGrid:
        return self.u.grid

    def forward_at(self, k, x: np.ndarray) -> np.ndarray:
        """``Phi`` at window time level ``k`` (integer or per-point array)."""
        x = np.asarray(x, dtype=float)
        return x + interpolate(self.grid, self.u.values, x, time_index=k)

    def inverse_at(self, k, y: np.ndarray, strict: bool = True):
        """``Psi`` at window time level ``k``; returns ``(x, converged)`` when not strict."""
        x, ok = _invert(self, k, np.asarray(y, dtype=float))
        if strict:
            if not np.all(ok):
                raise InverseMapError(f"inverse map did not converge at {int(np.sum(~ok))} points")
            return x
        return x, ok


def forward_map(segment: ZvonkinSegment, t: float, x: np.ndarray) -> np.ndarray:
    """``Phi_t(x) = x + u(t, x)`` with ``u`` interpolated on the window grid."""
    _check_time(segment, t)
    return segment.forward_at(segment.grid.time_index(t), x)


def inverse_map(segment: ZvonkinSegment, t: float, y: np.ndarray) -> np.ndarray:
    """``Psi_t(y)``: Newton on ``x + u(t, x) = y`` with Jacobian ``I + grad u``.

    Starts from ``x = y`` and stops once ``|Phi_t(x) - y| <= 1e-10``, after at
    most 50 iterations.  Points where Newton stalls are finished by bisection
    in one dimension and by the contraction ``x <- y - u(t, x)`` in two.

    Raises
    ------
    InverseMapError
        If some point still fails to converge.
    """
    _check_time(segment, t)
    return segment.inverse_at(segment.grid.time_index(t), y)


def _check_time(segment, t):
    S, T = segment.window
    tol = 1e-9 * segment.grid.dt
    if not S - tol <= t <= T + tol:
        raise ValueError(f"time {t} outside the segment window [{S}, {T}]")


def _residual(segment, k, x, y):
    return x + interpolate(segment.grid, segment.u.values, x, time_index=k) - y


def _invert(segment, k, y):
    grid = segment.grid
    d = grid.dim
    batch = y.shape[:-1]
    y = y.reshape(-1, d)
    kk = np.broadcast_to(np.asarray(k, dtype=np.int64), batch).reshape(-1)
    x = y.copy()
    ok = np.zeros(len(y), dtype=bool)
    eye = np.eye(d)
    active = np.arange(len(y))
    for _ in range(NEWTON_MAX_ITER + 1):
        if active.size == 0:
            break
        val, jac = interpolate(grid, segment.u.values, x[active], time_index=kk[active], with_gradient=True)
        res = x[active] + val - y[active]
        done = np.linalg.norm(res, axis=-1) <= NEWTON_TOL
        ok[active[done]] = True
        active, res, jac = active[~done], res[~done], jac[~done]
        if active.size == 0:
            break
        step = np.linalg.solve(eye + jac, res[..., None])[..., 0]
        x[active] -= step
    if active.size:
        if d == 1:
            x[active], ok[active] = _bisect(segment, kk[active], y[active])
        else:
            x[active], ok[active] = _contract(segment, kk[active], y[active])
    return x.reshape(batch + (d,)), ok.reshape(batch)


def _bisect(segment, k, y):
    bound = float(np.max(np.abs(segment.u.values))) + 1e-12
    lo = y[:, 0] - bound
    hi = y[:, 0] + bound
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        r = _residual(segment, k, mid[:, None], y)[:, 0]
        lo = np.where(r < 0, mid, lo)
        hi = np.where(r < 0, hi, mid)
        if np.all(np.abs(r) <= NEWTON_TOL):
            break
    x = 0.5 * (lo + hi)[:, None]
    return x, np.linalg.norm(_residual(segment, k, x, y), axis=-1) <= NEWTON_TOL


def _contract(segment, k, y):
    x = y.copy()
    for _ in range(200):
        x = y - interpolate(segment.grid, segment.u.values, x, time_index=k)
    return x, np.linalg.norm(_residual(segment, k, x, y), axis=-1) <= NEWTON_TOL


def measure_sup_grad(u: SpaceTimeField, grad_u: SpaceTimeField, fraction: float = 0.8) -> float:
    """Largest gradient of ``u`` over all window levels and region-of-interest nodes.

    Takes the larger of the central-difference gradient and the slope bound of
    the interpolant, so the bi-Lipschitz sandwich holds for the interpolated map.
    """
    grid = u.grid
    mask = grid.interior_mask(fraction)
    central = np.sqrt(np.sum(grad_u.values**2, axis=(-2, -1)))
    best = float(np.max(central[:, mask]))
    for level in u.values:
        best = max(best, float(np.max(cell_slope_bound(level, grid)[mask])))
    return best


def transformed_sigma(segment: ZvonkinSegment, coeffs: CoefficientSet):
    """``Sigma_t(y) = ((I + grad u) sigma)(t, Psi_t(y))`` on every node of the window grid.

    Returns ``(field, (s_min, s_max), fallbacks)`` where the singular values are
    taken over region-of-interest nodes and ``fallbacks`` counts nodes outside
    it whose inversion failed and which therefore keep ``sigma(t, y)``.
    """
    grid = segment.grid
    d = grid.dim
    nt = grid.n_time + 1
    y = np.broadcast_to(grid.points, (nt,) + grid.points.shape)
    kk = np.arange(nt).reshape((nt,) + (1,) * d)
    x, ok = segment.inverse_at(kk, y, strict=False)
    mask = grid.interior_mask()
    if not np.all(ok[:, mask]):
        raise InverseMapError("inverse map failed inside the region of interest")
    gu = interpolate(grid, segment.grad_u.values, x, time_index=kk)
    out = np.empty((nt,) + grid.spatial_shape + (d, d))
    eye = np.eye(d)
    fallbacks = 0
    for k, t in enumerate(grid.times):
        xk = np.where(ok[k][..., None], x[k], grid.points)
        sig = coeffs.diffusion(t, xk)
        out[k] = np.where(ok[k][..., None, None], (eye + gu[k]) @ sig, sig)
        fallbacks += int(np.sum(~ok[k]))
    sv = np.linalg.svd(out[:, mask], compute_uv=False)
    field_ = SpaceTimeField(grid, out, "matrix", "Sigma")
    return field_, (float(sv.min()), float(sv.max())), fallbacks


def build_segment(coeffs: CoefficientSet, window: tuple[float, float], grid: UniformGrid,
                  exponents: tuple[float, float] = (4.0, 8.0), with_sigma: bool = True,
                  scheme: str = "implicit-euler"):
    """Solve for ``u`` on ``window`` and accept or refuse the segment.

    ``grid`` carries the spatial box and the time step; the window must align
    with its time levels.  ``coeffs`` must already have a bounded drift.
    ``exponents`` only feed the reported Hoelder exponent (midpoint of its
    admissible interval).  Returns a :class:`ZvonkinSegment` or a
    :class:`SegmentRefusal`.
    """
    wgrid = grid.window(*window)
    d = grid.dim
    if coeffs.zero_drift:
        u = SpaceTimeField.constant(wgrid, 0.0, "vector", "u")
        grad_u = SpaceTimeField.constant(wgrid, 0.0, "matrix", "grad_u")
        sol = None
    else:
        f = coeffs.drift_field(wgrid)
        params = MixedNormParams(2.0, 2.0, wgrid.t_start, wgrid.t_end)
        sol = solve_backward(PdeProblem(coeffs, f), scheme, params)
        u, grad_u = sol.u, sol.grad_u
    sup_grad = measure_sup_grad(u, grad_u)
    actual = (float(wgrid.t_start), float(wgrid.t_end))
    if sup_grad > GRADIENT_BOUND:
        return SegmentRefusal(actual, sup_grad)
    lo, hi = holder_bounds(d, *exponents)
    holder = 0.5 * (lo + hi) if hi > lo else float("nan")
    seg = ZvonkinSegment(actual, u, grad_u, sup_grad, holder, sol)
    if with_sigma:
        sig, sv, fb = transformed_sigma(seg, coeffs)
        object.__setattr__(seg, "sigma_transformed", sig)
        object.__setattr__(seg, "sigma_singular_values", sv)
        object.__setattr__(seg, "sigma_fallbacks", fb)
    return seg


@dataclass(frozen=True, eq=False)
class ZvonkinChain:
    """Accepted segments covering ``[t_start, t_end]`` of ``grid`` in time order.

    ``attempts`` logs every built window as ``(S, T, sup_grad, accepted)`` in the
    order the bisection visited them.
    """

    grid: UniformGrid
    segments: tuple[ZvonkinSegment, ...]
    attempts: tuple[tuple[float, float, float, bool], ...] = ()
    coeffs_tag: str = ""

    def __post_init__(self):
        if not self.segments:
            raise ValueError("a chain needs at least one segment")
        tol = 1e-9 * self.grid.dt
        if abs(self.segments[0].window[0] - self.grid.t_start) > tol:
            raise ValueError("chain does not start at the grid start time")
        if abs(self.segments[-1].window[1] - self.grid.t_end) > tol:
            raise ValueError("chain does not end at the grid end time")
        for a, b in zip(self.segments[:-1], self.segments[1:]):
            if abs(a.window[1] - b.window[0]) > tol:
                raise ValueError(f"segments {a.window} and {b.window} are not contiguous")
        for s in self.segments:
            if s.sup_grad > GRADIENT_BOUND:
                raise ValueError(f"segment {s.window} violates the gradient bound")

    @property
    def windows(self) -> list[tuple[float, float]]:
        return [s.window for s in self.segments]

    def step_ranges(self) -> list[tuple[int, int]]:
        """Global time-level index ranges ``(k0, k1)`` of each segment."""
        out = []
        for s in self.segments:
            k0 = int(round((s.window[0] - self.grid.t_start) / self.grid.dt))
            out.append((k0, k0 + s.grid.n_time))
        return out

    def manifest(self) -> dict:
        return {
            "kind": "zvonkin-chain",
            "coeffs_tag": self.coeffs_tag,
            "grid": self.grid.to_dict(),
            "gradient_bound": GRADIENT_BOUND,
            "segments": [
                {
                    "index": i,
                    "window": list(s.window),
                    "sup_grad": s.sup_grad,
                    "holder_exponent": s.holder_exponent,
                    "sigma_singular_values": list(s.sigma_singular_values),
                    "sigma_fallbacks": s.sigma_fallbacks,
                    "pde_residual": None if s.solution is None else s.solution.residual_norm,
                }
                for i, s in enumerate(self.segments)
            ],
            "attempts": [list(a) for a in self.attempts],
        }


def partition(coeffs: CoefficientSet, window: tuple[float, float], grid: UniformGrid,
              min_steps: int = 4, **segment_kwargs) -> ZvonkinChain:
    """Cover ``window`` by accepted segments, bisecting refused windows at grid steps.

    Raises
    ------
    MinimumWindowReached
        When a refused window is already ``min_steps`` time steps or shorter
        (or cannot be halved into two such windows).
    """
    cgrid = grid.window(*window)
    attempts = []

    def build(k0, k1):
        res = build_segment(coeffs, (cgrid.times[k0], cgrid.times[k1]), cgrid, **segment_kwargs)
        attempts.append((float(cgrid.times[k0]), float(cgrid.times[k1]), res.sup_grad, res.accepted))
        if res.accepted:
            return [res]
        if k1 - k0 < 2 * min_steps:
            raise MinimumWindowReached(res.window, res.sup_grad)
        mid = (k0 + k1) // 2
        return build(k0, mid) + build(mid, k1)

    segments = build(0, cgrid.n_time)
    return ZvonkinChain(cgrid, tuple(segments), tuple(attempts), coeffs.tag)


def bilipschitz_check(segment: ZvonkinSegment, n_pairs: int = 1000, seed: int = 0, fraction: float = 0.8) -> dict:
    """Sample interior pairs and times; count violations of ``1/2 <= |Phi(x)-Phi(y)|/|x-y| <= 3/2``.

    Also samples ``|grad Phi| <= 3/2`` and ``|grad Psi| <= 2`` (operator norms of
    the interpolant Jacobian and its inverse) at the pair points.
    """
    grid = segment.grid
    rng = np.random.default_rng(seed)
    d = grid.dim
    c = np.asarray(grid.center)
    r = fraction * grid.box_halfwidth
    x = c + rng.uniform(-r, r, (n_pairs, d))
    y = c + rng.uniform(-r, r, (n_pairs, d))
    k = rng.integers(0, grid.n_time + 1, n_pairs)
    keep = np.linalg.norm(x - y, axis=-1) > 0
    x, y, k = x[keep], y[keep], k[keep]
    ratio = np.linalg.norm(segment.forward_at(k, x) - segment.forward_at(k, y), axis=-1) / np.linalg.norm(x - y, axis=-1)
    _, jac = interpolate(grid, segment.u.values, x, time_index=k, with_gradient=True)
    jphi = np.eye(d) + jac
    sv = np.linalg.svd(jphi, compute_uv=False)
    tol = 1e-12
    return {
        "pairs": int(len(ratio)),
        "ratio_min": float(ratio.min()),
        "ratio_max": float(ratio.max()),
        "violations": int(np.sum((ratio < 0.5 - tol) | (ratio > 1.5 + tol))),
        "grad_phi_max": float(sv.max()),
        "grad_psi_max": float((1.0 / sv.min())),
        "gradient_violations": int(np.sum((sv[:, 0] > 1.5 + tol) | (1.0 / sv[:, -1] > 2.0 + tol))),
    }
