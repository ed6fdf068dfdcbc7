"""Uniform space-time grids and the fields that live on them.

A :class:`UniformGrid` discretizes ``[t_start, t_end] x [c - L, c + L]^d`` with
``n_time + 1`` time levels and ``n_space`` points per spatial axis.  A
:class:`SpaceTimeField` stores scalar, vector or matrix values on every node and
evaluates off-grid with multilinear interpolation in space and left-constant
interpolation in time.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

RANKS = ("scalar", "vector", "matrix")


@dataclass(frozen=True)
class UniformGrid:
    """Uniform grid on ``[t_start, t_end] x [center - L, center + L]^dim``."""

    dim: int
    t_start: float
    t_end: float
    n_time: int
    box_halfwidth: float
    n_space: int
    center: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError(f"dim must be 1 or 2, got {self.dim}")
        if not self.t_end > self.t_start:
            raise ValueError("t_end must exceed t_start")
        if self.n_time < 1:
            raise ValueError("n_time must be >= 1")
        if self.n_space < 2:
            raise ValueError("n_space must be >= 2")
        if not self.box_halfwidth > 0:
            raise ValueError("box_halfwidth must be positive")
        center = (0.0,) * self.dim if self.center is None else tuple(float(c) for c in np.atleast_1d(self.center))
        if len(center) != self.dim:
            raise ValueError("center must have one entry per dimension")
        object.__setattr__(self, "center", center)

    @property
    def h(self) -> float:
        return 2.0 * self.box_halfwidth / (self.n_space - 1)

    @property
    def dt(self) -> float:
        return (self.t_end - self.t_start) / self.n_time

    @property
    def times(self) -> np.ndarray:
        return self.t_start + self.dt * np.arange(self.n_time + 1)

    @property
    def spatial_shape(self) -> tuple[int, ...]:
        return (self.n_space,) * self.dim

    @property
    def lower(self) -> np.ndarray:
        return np.asarray(self.center) - self.box_halfwidth

    @property
    def upper(self) -> np.ndarray:
        return np.asarray(self.center) + self.box_halfwidth

    def axis(self, i: int = 0) -> np.ndarray:
        return self.center[i] - self.box_halfwidth + self.h * np.arange(self.n_space)

    @cached_property
    def points(self) -> np.ndarray:
        """Grid nodes as an array of shape ``spatial_shape + (dim,)``."""
        mesh = np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")
        return np.stack(mesh, axis=-1)

    def interior_mask(self, fraction: float = 0.8) -> np.ndarray:
        """Nodes whose sup-distance from the center is at most ``fraction * L``.

        ``fraction=0.8`` is the region of interest used for every verdict: it
        keeps at least 20% of the half-width between a node and the boundary.
        """
        offset = np.abs(self.points - np.asarray(self.center))
        return np.all(offset <= fraction * self.box_halfwidth + 1e-12 * self.h, axis=-1)

    def contains(self, x: np.ndarray, fraction: float = 1.0) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        offset = np.abs(x - np.asarray(self.center))
        return np.all(offset <= fraction * self.box_halfwidth, axis=-1)

    def time_index(self, t: float) -> int:
        """Left-constant time index: ``k`` with ``t`` in ``[t_k, t_{k+1})``."""
        s = (t - self.t_start) / self.dt
        k = int(np.floor(s + 1e-9))
        return min(max(k, 0), self.n_time)

    def window(self, t_start: float, t_end: float) -> "UniformGrid":
        """Sub-grid on ``[t_start, t_end]`` sharing this grid's time step and space."""
        k0 = int(round((t_start - self.t_start) / self.dt))
        k1 = int(round((t_end - self.t_start) / self.dt))
        if not 0 <= k0 < k1 <= self.n_time:
            raise ValueError(f"window [{t_start}, {t_end}] does not align with the grid")
        return UniformGrid(
            self.dim,
            self.t_start + k0 * self.dt,
            self.t_start + k1 * self.dt,
            k1 - k0,
            self.box_halfwidth,
            self.n_space,
            self.center,
        )

    def with_space(self, box_halfwidth: float | None = None, n_space: int | None = None) -> "UniformGrid":
        return UniformGrid(
            self.dim,
            self.t_start,
            self.t_end,
            self.n_time,
            self.box_halfwidth if box_halfwidth is None else box_halfwidth,
            self.n_space if n_space is None else n_space,
            self.center,
        )

    def to_dict(self) -> dict:
        return {
            "dim": self.dim,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "n_time": self.n_time,
            "box_halfwidth": self.box_halfwidth,
            "n_space": self.n_space,
            "center": list(self.center),
        }


def conform(value, shape: tuple[int, ...]) -> np.ndarray:
    """Broadcast ``value`` to ``shape``, reshaping first when only singleton axes differ.

    Lets 1-d callbacks return ``(n,)`` where ``(n, 1)`` or ``(n, 1, 1)`` is expected.
    """
    value = np.asarray(value, dtype=float)
    try:
        return np.broadcast_to(value, shape)
    except ValueError:
        if value.size == int(np.prod(shape)):
            return value.reshape(shape)
        return np.broadcast_to(value.reshape(value.shape + (1,) * (len(shape) - value.ndim)), shape)


def component_shape(rank: str, dim: int) -> tuple[int, ...]:
    if rank == "scalar":
        return ()
    if rank == "vector":
        return (dim,)
    if rank == "matrix":
        return (dim, dim)
    raise ValueError(f"unknown rank {rank!r}")


@dataclass(frozen=True, eq=False)
class SpaceTimeField:
    """Values on every node of a :class:`UniformGrid`.

    ``values`` has shape ``(n_time + 1,) + grid.spatial_shape + components``
    where ``components`` is ``()``, ``(d,)`` or ``(d, d)`` depending on ``rank``.
    """

    grid: UniformGrid
    values: np.ndarray
    rank: str = "scalar"
    name: str = field(default="", compare=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        expected = (self.grid.n_time + 1,) + self.grid.spatial_shape + component_shape(self.rank, self.grid.dim)
        if values.shape != expected:
            raise ValueError(f"field values have shape {values.shape}, expected {expected}")
        if not np.all(np.isfinite(values)):
            raise ValueError(f"field {self.name or '<unnamed>'} has non-finite values")
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    @classmethod
    def from_function(cls, grid: UniformGrid, func, rank: str = "scalar", name: str = "") -> "SpaceTimeField":
        """Sample ``func(t, x)`` on every time level; ``x`` has shape ``spatial_shape + (d,)``."""
        comp = component_shape(rank, grid.dim)
        out = np.empty((grid.n_time + 1,) + grid.spatial_shape + comp)
        pts = grid.points
        for k, t in enumerate(grid.times):
            out[k] = conform(func(t, pts), grid.spatial_shape + comp)
        return cls(grid, out, rank, name)

    @classmethod
    def constant(cls, grid: UniformGrid, value, rank: str = "scalar", name: str = "") -> "SpaceTimeField":
        comp = component_shape(rank, grid.dim)
        shape = (grid.n_time + 1,) + grid.spatial_shape + comp
        return cls(grid, np.broadcast_to(np.asarray(value, dtype=float), shape), rank, name)

    @property
    def components(self) -> tuple[int, ...]:
        return component_shape(self.rank, self.grid.dim)

    def slice(self, t: float) -> np.ndarray:
        return self.values[self.grid.time_index(t)]

    def scaled(self, c: float) -> "SpaceTimeField":
        return SpaceTimeField(self.grid, c * self.values, self.rank, self.name)

    def __add__(self, other: "SpaceTimeField") -> "SpaceTimeField":
        if other.grid != self.grid or other.rank != self.rank:
            raise ValueError("fields live on different grids or have different ranks")
        return SpaceTimeField(self.grid, self.values + other.values, self.rank, self.name)

    def evaluate(self, t: float, x: np.ndarray) -> np.ndarray:
        """Interpolate at time ``t`` and points ``x`` of shape ``(..., d)``."""
        k = self.grid.time_index(t)
        return interpolate(self.grid, self.values[k], x)

    def evaluate_indexed(self, k: np.ndarray | int, x: np.ndarray) -> np.ndarray:
        """Interpolate at per-point time levels ``k`` (integers) and points ``x``."""
        return interpolate(self.grid, self.values, x, time_index=k)


def _locate(grid: UniformGrid, x: np.ndarray):
    s = (x - grid.lower) / grid.h
    idx = np.clip(np.floor(s).astype(np.int64), 0, grid.n_space - 2)
    w = np.clip(s - idx, 0.0, 1.0)
    # Points outside the box see the constant extension, so the gradient vanishes there.
    inside = (s >= 0.0) & (s <= grid.n_space - 1)
    return idx, w, inside


def interpolate(grid: UniformGrid, values: np.ndarray, x: np.ndarray, time_index=None, with_gradient: bool = False):
    """Multilinear interpolation of grid values at points ``x`` (shape ``(..., d)``).

    ``values`` is a spatial slice (``spatial_shape + comp``) or, when
    ``time_index`` is given, a full ``(n_time + 1,) + spatial_shape + comp`` array
    from which each point reads its own time level.  Outside the box the values
    are extended by their boundary values.  With ``with_gradient`` the exact
    gradient of the interpolant is returned too, with a trailing axis of size d.
    """
    x = np.asarray(x, dtype=float)
    d = grid.dim
    if x.shape[-1] != d:
        raise ValueError(f"points must have trailing dimension {d}")
    batch = x.shape[:-1]
    flat = x.reshape(-1, d)
    idx, w, inside = _locate(grid, flat)
    if time_index is None:
        pre = ()
        comp = values.shape[d:]
    else:
        kk = np.broadcast_to(np.asarray(time_index, dtype=np.int64), batch).reshape(-1)
        pre = (kk,)
        comp = values.shape[d + 1:]
    h = grid.h
    cw = (slice(None),) + (None,) * len(comp)
    if d == 1:
        i = idx[:, 0]
        v0 = values[pre + (i,)]
        v1 = values[pre + (i + 1,)]
        wx = w[:, 0][cw]
        out = v0 + wx * (v1 - v0)
        if with_gradient:
            g = ((v1 - v0) / h) * inside[:, 0][cw]
            grad = g[..., None]
    else:
        i, j = idx[:, 0], idx[:, 1]
        v00 = values[pre + (i, j)]
        v10 = values[pre + (i + 1, j)]
        v01 = values[pre + (i, j + 1)]
        v11 = values[pre + (i + 1, j + 1)]
        wx = w[:, 0][cw]
        wy = w[:, 1][cw]
        out = (1 - wx) * (1 - wy) * v00 + wx * (1 - wy) * v10 + (1 - wx) * wy * v01 + wx * wy * v11
        if with_gradient:
            gx = ((1 - wy) * (v10 - v00) + wy * (v11 - v01)) / h * inside[:, 0][cw]
            gy = ((1 - wx) * (v01 - v00) + wx * (v11 - v10)) / h * inside[:, 1][cw]
            grad = np.stack([gx, gy], axis=-1)
    out = out.reshape(batch + comp)
    if with_gradient:
        return out, grad.reshape(batch + comp + (d,))
    return out


def gradient(values: np.ndarray, grid: UniformGrid) -> np.ndarray:
    """Spatial gradient of a spatial slice; derivative axis appended last.

    Central second-order differences in the interior, one-sided first-order at
    the box edges.
    """
    d = grid.dim
    parts = np.gradient(values, grid.h, axis=tuple(range(d)), edge_order=1)
    if d == 1:
        parts = [parts]
    return np.stack(parts, axis=-1)


def second_difference(values: np.ndarray, grid: UniformGrid, axis: int) -> np.ndarray:
    """Compact ``(u[i+1] - 2u[i] + u[i-1]) / h^2`` along ``axis``; edges copy their neighbour."""
    v = np.moveaxis(values, axis, 0)
    out = np.empty_like(v)
    out[1:-1] = (v[2:] - 2.0 * v[1:-1] + v[:-2]) / grid.h**2
    out[0] = out[1]
    out[-1] = out[-2]
    return np.moveaxis(out, 0, axis)


def hessian(values: np.ndarray, grid: UniformGrid) -> np.ndarray:
    """Spatial Hessian of a spatial slice; two derivative axes appended last."""
    d = grid.dim
    out = np.empty(values.shape + (d, d))
    for i in range(d):
        out[..., i, i] = second_difference(values, grid, i)
    if d == 2:
        g0 = np.gradient(values, grid.h, axis=0, edge_order=1)
        mixed = np.gradient(g0, grid.h, axis=1, edge_order=1)
        out[..., 0, 1] = mixed
        out[..., 1, 0] = mixed
    return out


def cell_slope_bound(values: np.ndarray, grid: UniformGrid) -> np.ndarray:
    """Per-node bound on the Frobenius norm of the interpolant's gradient.

    For each node the largest adjacent edge difference along each axis is taken;
    the gradient of the multilinear interpolant anywhere in the cells touching
    the node is bounded by the Euclidean combination of those maxima.
    """
    d = grid.dim
    comp_axes = tuple(range(d, values.ndim))
    total = np.zeros(grid.spatial_shape)
    for ax in range(d):
        diff = np.diff(values, axis=ax) / grid.h
        sq = np.sum(diff**2, axis=comp_axes) if comp_axes else diff**2
        padded_lo = np.concatenate([np.take(sq, [0], axis=ax), sq], axis=ax)
        padded_hi = np.concatenate([sq, np.take(sq, [-1], axis=ax)], axis=ax)
        m = np.maximum(padded_lo, padded_hi)
        if d == 2:
            other = 1 - ax
            lo = np.concatenate([np.take(m, [0], axis=other), m[:-1] if other == 0 else m[:, :-1]], axis=other)
            hi = np.concatenate([m[1:] if other == 0 else m[:, 1:], np.take(m, [-1], axis=other)], axis=other)
            m = np.maximum(m, np.maximum(lo, hi))
        total = total + m
    return np.sqrt(total)
