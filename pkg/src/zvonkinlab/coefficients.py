"""Drift and diffusion coefficients of ``dX = b(t, X) dt + sigma(t, X) dW``."""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable, Union

import numpy as np

from .analysis import mollify
from .grid import SpaceTimeField, UniformGrid, conform, interpolate

Coefficient = Union[Callable, SpaceTimeField, float, None]


class EllipticityError(ValueError):
    pass


def _default_samples(dim: int, halfwidth: float = 5.0, per_axis: int | None = None) -> np.ndarray:
    per_axis = per_axis or (41 if dim == 1 else 21)
    ax = np.linspace(-halfwidth, halfwidth, per_axis)
    mesh = np.meshgrid(*([ax] * dim), indexing="ij")
    return np.stack(mesh, axis=-1).reshape(-1, dim)


@dataclass(frozen=True, eq=False)
class CoefficientSet:
    """Drift ``b`` and diffusion ``sigma`` with ellipticity bounds.

    Each coefficient is a callable ``f(t, x)`` on points ``x`` of shape
    ``(..., d)``, a :class:`SpaceTimeField`, or (for ``sigma``) a number meaning a
    multiple of the identity.  ``b=None`` is the zero drift.  The bounds
    ``ellipticity_lower * |l|^2 <= |sigma^T l|^2 <= ellipticity_upper * |l|^2`` are
    checked at construction on ``sample_points`` x ``sample_times`` (grid nodes
    for field-valued ``sigma``).
    """

    dim: int
    b: Coefficient
    sigma: Coefficient
    ellipticity_lower: float
    ellipticity_upper: float
    tag: str = ""
    sample_points: np.ndarray | None = None
    sample_times: tuple[float, ...] = (0.0,)
    sigma_jacobian: Callable | None = None
    drift_jacobian: Callable | None = None

    def __post_init__(self):
        if self.dim not in (1, 2):
            raise ValueError("dim must be 1 or 2")
        if not (0 < self.ellipticity_lower <= self.ellipticity_upper):
            raise ValueError("need 0 < ellipticity_lower <= ellipticity_upper")
        lo, hi = self.sampled_ellipticity()
        tol = 1e-10 * max(1.0, self.ellipticity_upper)
        if lo < self.ellipticity_lower - tol or hi > self.ellipticity_upper + tol:
            raise EllipticityError(
                f"sampled eigenvalues of sigma sigma^T lie in [{lo:.6g}, {hi:.6g}], "
                f"outside the declared bounds [{self.ellipticity_lower:.6g}, {self.ellipticity_upper:.6g}]"
            )

    @property
    def zero_drift(self) -> bool:
        return self.b is None

    def drift(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.dim,)
        if self.b is None:
            return np.zeros(shape)
        if isinstance(self.b, SpaceTimeField):
            return self.b.evaluate(t, x)
        return np.array(conform(self.b(t, x), shape))

    def diffusion(self, t: float, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        shape = x.shape[:-1] + (self.dim, self.dim)
        if isinstance(self.sigma, SpaceTimeField):
            return self.sigma.evaluate(t, x)
        if np.isscalar(self.sigma):
            return np.broadcast_to(float(self.sigma) * np.eye(self.dim), shape).copy()
        return np.array(conform(self.sigma(t, x), shape))

    def diffusion_jacobian(self, t: float, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """``d sigma^{ik} / d x^l`` with the derivative axis last, shape ``(..., d, d, d)``."""
        x = np.asarray(x, dtype=float)
        if np.isscalar(self.sigma):
            return np.zeros(x.shape[:-1] + (self.dim,) * 3)
        if self.sigma_jacobian is not None:
            return np.array(conform(self.sigma_jacobian(t, x), x.shape[:-1] + (self.dim,) * 3))
        if isinstance(self.sigma, SpaceTimeField):
            g = self.sigma.grid
            _, grad = interpolate(g, self.sigma.values[g.time_index(t)], x, with_gradient=True)
            return grad
        return self._central_difference(self.diffusion, t, x, step)

    def drift_jacobian_at(self, t: float, x: np.ndarray, step: float = 1e-6) -> np.ndarray:
        """``d b^i / d x^l`` with the derivative axis last, shape ``(..., d, d)``."""
        x = np.asarray(x, dtype=float)
        if self.b is None:
            return np.zeros(x.shape[:-1] + (self.dim, self.dim))
        if self.drift_jacobian is not None:
            return np.array(conform(self.drift_jacobian(t, x), x.shape[:-1] + (self.dim, self.dim)))
        if isinstance(self.b, SpaceTimeField):
            g = self.b.grid
            _, grad = interpolate(g, self.b.values[g.time_index(t)], x, with_gradient=True)
            return grad
        return self._central_difference(self.drift, t, x, step)

    def _central_difference(self, func, t, x, step):
        parts = []
        for l in range(self.dim):
            e = np.zeros(self.dim)
            e[l] = step
            parts.append((func(t, x + e) - func(t, x - e)) / (2 * step))
        return np.stack(parts, axis=-1)

    def sampled_ellipticity(self) -> tuple[float, float]:
        """Smallest and largest eigenvalue of ``sigma sigma^T`` over the sample set."""
        if isinstance(self.sigma, SpaceTimeField):
            vals = self.sigma.values.reshape(-1, self.dim, self.dim)
        else:
            pts = self.sample_points if self.sample_points is not None else _default_samples(self.dim)
            pts = np.asarray(pts, dtype=float).reshape(-1, self.dim)
            vals = np.concatenate([self.diffusion(t, pts) for t in self.sample_times])
        a = vals @ np.swapaxes(vals, -1, -2)
        eig = np.linalg.eigvalsh(a)
        return float(eig.min()), float(eig.max())

    def generator_coefficients(self, t: float, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """``a = sigma sigma^T`` and ``b`` at points ``x``."""
        s = self.diffusion(t, x)
        return s @ np.swapaxes(s, -1, -2), self.drift(t, x)

    def with_drift(self, b: Coefficient, tag: str | None = None) -> "CoefficientSet":
        return dataclasses.replace(self, b=b, drift_jacobian=None, tag=self.tag if tag is None else tag)

    def drift_field(self, grid: UniformGrid) -> SpaceTimeField:
        """Drift sampled on every grid node (non-finite samples are kept out by callers)."""
        out = np.empty((grid.n_time + 1,) + grid.spatial_shape + (self.dim,))
        for k, t in enumerate(grid.times):
            out[k] = self.drift(t, grid.points)
        return SpaceTimeField(grid, out, "vector", "b")

    def sampled_drift(self, grid: UniformGrid) -> np.ndarray:
        out = np.empty((grid.n_time + 1,) + grid.spatial_shape + (self.dim,))
        with np.errstate(all="ignore"):
            for k, t in enumerate(grid.times):
                out[k] = self.drift(t, grid.points)
        return out


def default_cap_scale(samples: np.ndarray) -> float:
    """Mean drift magnitude over finite, nonzero samples (1.0 when there are none)."""
    mag = np.linalg.norm(samples, axis=-1)
    good = np.isfinite(mag) & (mag > 0)
    return float(mag[good].mean()) if np.any(good) else 1.0


def regularize_drift(coeffs: CoefficientSet, grid: UniformGrid, method: str = "mollify",
                     cap_scale: float | None = None, n: float | None = None) -> CoefficientSet:
    """Make a possibly singular drift bounded on ``grid``.

    The drift is sampled on the grid nodes and its magnitude capped at
    ``h^{-1/2} * cap_scale``; infinite samples become the cap with their sign
    and NaN samples become zero.  With
    ``method="mollify"`` the capped samples are then convolved with the
    space-time mollifier of radius ``1/n`` (default ``1/n = 2h``).
    Returns a coefficient set whose drift is a grid field.
    """
    if method not in ("cap", "mollify"):
        raise ValueError("method must be 'cap' or 'mollify'")
    if coeffs.b is None:
        return coeffs
    raw = coeffs.sampled_drift(grid)
    scale = default_cap_scale(raw) if cap_scale is None else cap_scale
    cap = scale / np.sqrt(grid.h)
    signs = np.where(np.isnan(raw), 0.0, np.sign(raw))
    raw = np.where(np.isfinite(raw), raw, signs * cap)
    mag = np.linalg.norm(raw, axis=-1, keepdims=True)
    factor = np.minimum(1.0, cap / np.where(mag > 0, mag, 1.0))
    capped = SpaceTimeField(grid, raw * factor, "vector", "b_capped")
    if method == "cap":
        return coeffs.with_drift(capped, tag=f"{coeffs.tag}|cap")
    n = 1.0 / (2.0 * grid.h) if n is None else n
    smooth = mollify(capped, n, time_extension="hold")
    return coeffs.with_drift(smooth, tag=f"{coeffs.tag}|mollify(n={n:g})")
