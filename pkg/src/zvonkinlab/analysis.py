"""Mixed norms, Sobolev norms, mollification and the Hardy-Littlewood maximal operator.

All integrals are trapezoid rules over the grid box; the fields are understood
to live on ``[t_start, t_end] x box`` only.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import trapezoid

from .grid import SpaceTimeField, UniformGrid, gradient, hessian


def check_exponents(d: int, p: float, q: float, threshold: float = 1) -> bool:
    """Return whether ``d/p + 2/q < threshold`` holds strictly.

    ``threshold=1`` is the integrability condition on a singular drift,
    ``threshold=2`` the weaker one that suffices for a bounded drift.
    """
    if d < 1 or not p > 0 or not q > 0:
        raise ValueError("d, p and q must be positive")
    if not (p > 1 and q > 1):
        raise ValueError("exponents p and q must exceed 1")
    if threshold not in (1, 2):
        raise ValueError("threshold must be 1 or 2")
    return d / p + 2.0 / q < threshold


@dataclass(frozen=True)
class MixedNormParams:
    """Exponents and time window of the ``L^q_p(S, T)`` norm."""

    p: float
    q: float
    S: float
    T: float

    def __post_init__(self):
        if not (1 < self.p < np.inf and 1 < self.q < np.inf):
            raise ValueError(f"need 1 < p, q < inf, got p={self.p}, q={self.q}")
        if not 0 <= self.S < self.T:
            raise ValueError(f"need 0 <= S < T, got S={self.S}, T={self.T}")


def pointwise_magnitude(values: np.ndarray, rank: str) -> np.ndarray:
    if rank == "scalar":
        return np.abs(values)
    axes = (-1,) if rank == "vector" else (-2, -1)
    return np.sqrt(np.sum(values**2, axis=axes))


def spatial_integral(values: np.ndarray, grid: UniformGrid) -> np.ndarray:
    """Trapezoid rule over the spatial axes, which must come last."""
    out = values
    for _ in range(grid.dim):
        out = trapezoid(out, dx=grid.h, axis=-1)
    return out


def lp_norm(values: np.ndarray, grid: UniformGrid, p: float) -> float:
    """Spatial ``L^p`` norm of a scalar slice."""
    mag = np.abs(values)
    peak = float(np.max(mag, initial=0.0))
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    return peak * float(spatial_integral((mag / peak) ** p, grid) ** (1.0 / p))


def window_indices(grid: UniformGrid, S: float, T: float) -> np.ndarray:
    tol = 1e-9 * grid.dt
    if S < grid.t_start - tol or T > grid.t_end + tol:
        raise ValueError(f"window [{S}, {T}] is outside the grid time range [{grid.t_start}, {grid.t_end}]")
    times = grid.times
    idx = np.nonzero((times >= S - tol) & (times <= T + tol))[0]
    if idx.size < 2:
        raise ValueError(f"window [{S}, {T}] contains fewer than two time levels")
    return idx


def mixed_norm(f: SpaceTimeField, params: MixedNormParams) -> float:
    """``( int_S^T ( int |f|^p dx )^(q/p) dt )^(1/q)`` by nested trapezoid rules.

    Non-scalar fields are reduced to their pointwise Euclidean/Frobenius norm.
    """
    grid = f.grid
    idx = window_indices(grid, params.S, params.T)
    mag = pointwise_magnitude(f.values[idx], f.rank)
    # factor out the peak so high powers neither underflow nor overflow
    peak = float(np.max(mag, initial=0.0))
    if peak == 0.0 or not np.isfinite(peak):
        return peak
    inner = spatial_integral((mag / peak) ** params.p, grid)
    outer = trapezoid(inner ** (params.q / params.p), x=grid.times[idx])
    return peak * float(outer ** (1.0 / params.q))


def sobolev_norm(f: SpaceTimeField, m: int, p: float, t: float) -> float:
    """``sum_{k<=m} ||grad^k f(t)||_{L^p}`` on the slice containing ``t``."""
    grid = f.grid
    if m not in (0, 1, 2):
        raise ValueError("order m must be 0, 1 or 2")
    tol = 1e-9 * grid.dt
    if t < grid.t_start - tol or t > grid.t_end + tol:
        raise ValueError(f"time {t} outside the grid")
    u = f.values[grid.time_index(t)]
    total = 0.0
    for k in range(m + 1):
        if k == 0:
            deriv = u
        elif k == 1:
            deriv = gradient(u, grid)
        else:
            deriv = hessian(u, grid)
        extra = tuple(range(grid.dim, deriv.ndim))
        mag = np.sqrt(np.sum(deriv**2, axis=extra)) if extra else np.abs(deriv)
        total += lp_norm(mag, grid, p)
    return total


def bump(z2: np.ndarray) -> np.ndarray:
    """Unnormalized smooth bump ``exp(-1/(1-|z|^2))`` on the open unit ball."""
    out = np.zeros_like(z2, dtype=float)
    inside = z2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - z2[inside]))
    return out


def mollifier_weights(grid: UniformGrid, n: float) -> tuple[np.ndarray, int, int]:
    """Discrete space-time kernel ``rho_n`` normalized to unit mass.

    Returns ``(weights, kt, ks)`` with ``weights`` of shape
    ``(2kt+1,) + (2ks+1,)*d`` indexed by time then spatial offsets.
    """
    radius = 1.0 / n
    if radius < grid.h:
        raise ValueError(f"kernel radius 1/n = {radius:g} is smaller than the grid spacing h = {grid.h:g}")
    ks = int(np.floor(radius / grid.h + 1e-12))
    kt = int(np.floor(radius / grid.dt + 1e-12))
    offs_t = np.arange(-kt, kt + 1) * grid.dt * n
    offs_s = np.arange(-ks, ks + 1) * grid.h * n
    mesh = np.meshgrid(offs_t, *([offs_s] * grid.dim), indexing="ij")
    z2 = sum(m**2 for m in mesh)
    w = bump(z2)
    total = w.sum()
    if total <= 0:
        raise ValueError("mollifier kernel has no support on the grid")
    return w / total, kt, ks


def mollify(f: SpaceTimeField, n: float, time_extension: str = "hold") -> SpaceTimeField:
    """Discrete space-time convolution ``f * rho_n`` on the same grid.

    Beyond the box the field is extended by its boundary values.  In time,
    ``"hold"`` repeats both end slices; ``"flat"`` holds the initial slice
    before ``t_start`` and uses zero after ``t_end``.  The two agree for
    solutions of terminal-value problems, which vanish at ``t_end``.
    """
    if n < 1:
        raise ValueError("bandwidth index n must be >= 1")
    if time_extension not in ("flat", "hold"):
        raise ValueError("time_extension must be 'flat' or 'hold'")
    grid = f.grid
    w, kt, ks = mollifier_weights(grid, n)
    d = grid.dim
    v = f.values
    comp_nd = v.ndim - 1 - d
    pad_space = [(0, 0)] + [(ks, ks)] * d + [(0, 0)] * comp_nd
    padded = np.pad(v, pad_space, mode="edge")
    before = np.repeat(padded[:1], kt, axis=0)
    after = np.repeat(padded[-1:], kt, axis=0)
    if time_extension == "flat":
        after = np.zeros_like(after)
    padded = np.concatenate([before, padded, after], axis=0)
    out = np.zeros_like(v)
    nt = grid.n_time + 1
    ns = grid.n_space
    for offset in zip(*np.nonzero(w)):
        weight = w[offset]
        sl = (slice(offset[0], offset[0] + nt),) + tuple(slice(o, o + ns) for o in offset[1:])
        out += weight * padded[sl]
    return SpaceTimeField(grid, out, f.rank, f.name)


def radius_ladder(grid: UniformGrid, ratio: float = 1.25) -> np.ndarray:
    diameter = 2.0 * grid.box_halfwidth * np.sqrt(grid.dim)
    n_steps = int(np.floor(np.log(diameter / grid.h) / np.log(ratio) + 1e-12))
    radii = grid.h * ratio ** np.arange(n_steps + 1)
    if radii[-1] < diameter * (1 - 1e-12):
        radii = np.append(radii, diameter)
    return radii


def _window_sums_1d(prefix: np.ndarray, half: int, axis: int, n: int) -> np.ndarray:
    # prefix has a leading zero along ``axis`` and covers the zero-padded line.
    lo = np.clip(np.arange(n) - half, 0, n)
    hi = np.clip(np.arange(n) + half + 1, 0, n)
    return np.take(prefix, hi, axis=axis) - np.take(prefix, lo, axis=axis)


def ball_average(phi: np.ndarray, grid: UniformGrid, radius: float) -> np.ndarray:
    """Average of ``phi`` over the discrete ball of ``radius`` around every node.

    Nodes outside the box count as zeros; the normalization is the number of
    lattice offsets in the ball, so a constant field averages to itself deep
    inside the box.
    """
    n = grid.n_space
    R = radius / grid.h
    if grid.dim == 1:
        half = int(np.floor(R + 1e-12))
        prefix = np.concatenate([[0.0], np.cumsum(phi)])
        return _window_sums_1d(prefix, half, 0, n) / (2 * half + 1)
    Rf = int(np.floor(R + 1e-12))
    prefix = np.concatenate([np.zeros((n, 1)), np.cumsum(phi, axis=1)], axis=1)
    total = np.zeros_like(phi)
    count = 0
    for dy in range(-Rf, Rf + 1):
        half = int(np.floor(np.sqrt(max(R * R - dy * dy, 0.0)) + 1e-12))
        count += 2 * half + 1
        if abs(dy) >= n:
            continue
        rows = _window_sums_1d(prefix, half, 1, n)
        shifted = np.zeros_like(phi)
        if dy >= 0:
            shifted[: n - dy] = rows[dy:]
        else:
            shifted[-dy:] = rows[: n + dy]
        total += shifted
    return total / count


def maximal_function(phi: np.ndarray, grid: UniformGrid, ratio: float = 1.25) -> np.ndarray:
    """Hardy-Littlewood maximal function of ``|phi|`` on a spatial slice.

    The supremum runs over a geometric ladder of radii from ``h`` up to the box
    diameter, together with the ``r -> 0`` limit (the point value).
    """
    phi = np.abs(np.asarray(phi, dtype=float))
    if phi.shape != grid.spatial_shape:
        raise ValueError(f"field shape {phi.shape} does not match grid {grid.spatial_shape}")
    out = phi.copy()
    for r in radius_ladder(grid, ratio):
        np.maximum(out, ball_average(phi, grid, r), out=out)
    return out


def lipschitz_maximal_check(phi: np.ndarray, grid: UniformGrid, sample_pairs: int = 2000,
                            seed: int = 0, ratio: float = 1.25) -> float:
    """Largest observed ``|phi(x)-phi(y)| / (|x-y| (M|grad phi|(x) + M|grad phi|(y)))``.

    Pairs are random interior nodes at least ``2h`` from the box edge.  Pairs
    with vanishing numerator and denominator are skipped; a zero denominator
    with a nonzero numerator yields ``inf``.
    """
    phi = np.asarray(phi, dtype=float)
    grad = gradient(phi, grid)
    mg = maximal_function(np.sqrt(np.sum(grad**2, axis=-1)), grid, ratio)
    n = grid.n_space
    rng = np.random.default_rng(seed)
    idx_x = rng.integers(2, n - 2, size=(sample_pairs, grid.dim))
    idx_y = rng.integers(2, n - 2, size=(sample_pairs, grid.dim))
    keep = np.any(idx_x != idx_y, axis=1)
    idx_x, idx_y = idx_x[keep], idx_y[keep]
    pts = grid.points
    tx, ty = tuple(idx_x.T), tuple(idx_y.T)
    num = np.abs(phi[tx] - phi[ty])
    dist = np.linalg.norm(pts[tx] - pts[ty], axis=-1)
    den = dist * (mg[tx] + mg[ty])
    valid = ~((num == 0) & (den == 0))
    if not np.any(valid):
        return 0.0
    with np.errstate(divide="ignore"):
        ratios = np.where(den[valid] > 0, num[valid] / np.where(den[valid] > 0, den[valid], 1.0), np.inf)
    return float(np.max(ratios))


def random_trig_polynomial(grid: UniformGrid, rng: np.random.Generator, n_terms: int = 6,
                           max_frequency: float = 4.0) -> np.ndarray:
    """Random ``sum a_k cos(w_k . x + c_k)`` sampled on the grid nodes."""
    pts = grid.points
    out = np.zeros(grid.spatial_shape)
    for _ in range(n_terms):
        w = rng.uniform(-max_frequency, max_frequency, size=grid.dim)
        out += rng.normal() * np.cos(pts @ w + rng.uniform(0, 2 * np.pi))
    return out
