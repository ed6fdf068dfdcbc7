"""Experiment configuration: TOML files, versioned presets and validation.

Schema (all tables optional unless noted)::

    name = "constant-drift"
    seed = 0
    [constants]            # extra names usable in expressions (T is the horizon)
    c = 0.5
    [coefficients]         # required
    dim = 1
    b = "c"                # string (d = 1) or list of strings; omit for zero drift
    sigma = "1"            # string (multiple of I) or list of rows of strings
    ellipticity = [1.0, 1.0]
    regularize = "none"    # none | mollify | cap
    [grid]                 # required
    t_end = 1.0
    n_time = 100
    box_halfwidth = 30.0
    n_space = 1201
    [exponents]
    p = 4.0
    q = 8.0
    threshold = 1
    [pde] / [chain] / [simulation] / [check]   # command-specific options

Presets live in ``presets/v1`` inside the package; the environment variable
``ZVONKINLAB_PRESETS`` points to another directory.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .analysis import check_exponents
from .coefficients import CoefficientSet, regularize_drift
from .expr import Expression, parse
from .grid import UniformGrid
from .lab import digest

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

PRESETS_ENV = "ZVONKINLAB_PRESETS"
PRESETS_VERSION = "v1"


class ConfigError(ValueError):
    pass


def presets_dir() -> Path:
    env = os.environ.get(PRESETS_ENV)
    if env:
        return Path(env)
    return Path(__file__).parent / "presets" / PRESETS_VERSION


def list_presets() -> list[str]:
    return sorted(p.stem for p in presets_dir().glob("*.toml"))


def _expr(text, dim, constants, where):
    from .expr import ExpressionError

    try:
        return parse(str(text), dim, constants)
    except ExpressionError as err:
        raise ConfigError(f"{where}: {err}") from err


def _vector(exprs: list[Expression], d: int):
    def b(t, x):
        x = np.asarray(x, dtype=float)
        return np.stack([e(t, x) for e in exprs], axis=-1)

    return b


def _matrix(rows: list[list[Expression]], d: int):
    def sigma(t, x):
        x = np.asarray(x, dtype=float)
        return np.stack([np.stack([e(t, x) for e in row], axis=-1) for row in rows], axis=-2)

    return sigma


def _scalar_identity(e: Expression, d: int):
    eye = np.eye(d)

    def sigma(t, x):
        return e(t, x)[..., None, None] * eye

    return sigma


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Validated configuration; ``coeffs`` is the raw (unregularized) coefficient set."""

    name: str
    raw: dict
    grid: UniformGrid
    coeffs: CoefficientSet
    seed: int
    p: float
    q: float
    threshold: float
    exponent_ok: bool
    constants: dict = field(default_factory=dict)
    source: str = ""

    @property
    def digest(self) -> str:
        return digest(self.raw)

    @property
    def regularize(self) -> str:
        return self.raw["coefficients"].get("regularize", "none")

    def section(self, name: str) -> dict:
        return dict(self.raw.get(name, {}))

    def expression(self, text, where: str = "expression") -> Expression:
        return _expr(text, self.grid.dim, self.constants, where)

    def working_coeffs(self, grid: UniformGrid | None = None) -> CoefficientSet:
        """Coefficients with the configured drift regularization applied on ``grid``."""
        grid = grid or self.grid
        mode = self.regularize
        if mode == "none":
            return self.coeffs
        cap = self.raw["coefficients"].get("cap_scale")
        return regularize_drift(self.coeffs, grid, method=mode, cap_scale=cap)

    def summary(self) -> dict:
        return {"name": self.name, "digest": self.digest, "seed": self.seed, "grid": self.grid.to_dict(),
                "coeffs_tag": self.coeffs.tag, "p": self.p, "q": self.q, "threshold": self.threshold,
                "exponent_condition": self.exponent_ok, "source": self.source}


def build_config(raw: dict, source: str = "", seed: int | None = None) -> ExperimentConfig:
    """Validate a parsed TOML document and build the coefficient set."""
    raw = dict(raw)
    if seed is not None:
        raw["seed"] = int(seed)
    try:
        g = raw["grid"]
        c = raw["coefficients"]
    except KeyError as err:
        raise ConfigError(f"missing required table [{err.args[0]}]") from None
    try:
        dim = int(c.get("dim", 1))
        grid = UniformGrid(dim, float(g.get("t_start", 0.0)), float(g["t_end"]), int(g["n_time"]),
                           float(g["box_halfwidth"]), int(g["n_space"]))
    except KeyError as err:
        raise ConfigError(f"[grid] is missing {err.args[0]!r}") from None
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[grid]: {err}") from None
    constants = {"T": grid.t_end}
    for k, v in raw.get("constants", {}).items():
        if not isinstance(v, (int, float)):
            raise ConfigError(f"[constants] {k} must be a number")
        constants[k] = float(v)

    b_spec = c.get("b")
    if b_spec is None:
        b = None
    else:
        items = [b_spec] if isinstance(b_spec, (str, int, float)) else list(b_spec)
        if len(items) != dim:
            raise ConfigError(f"[coefficients] b needs {dim} component(s)")
        b = _vector([_expr(s, dim, constants, f"b[{i}]") for i, s in enumerate(items)], dim)
    s_spec = c.get("sigma", "1")
    if isinstance(s_spec, (str, int, float)):
        sigma = _scalar_identity(_expr(s_spec, dim, constants, "sigma"), dim)
    else:
        rows = [list(r) if isinstance(r, list) else [r] for r in s_spec]
        if len(rows) != dim or any(len(r) != dim for r in rows):
            raise ConfigError(f"[coefficients] sigma must be {dim}x{dim}")
        sigma = _matrix([[_expr(s, dim, constants, f"sigma[{i}][{j}]") for j, s in enumerate(r)]
                         for i, r in enumerate(rows)], dim)
    ell = c.get("ellipticity", [1.0, 1.0])
    mode = c.get("regularize", "none")
    if mode not in ("none", "mollify", "cap"):
        raise ConfigError("[coefficients] regularize must be none, mollify or cap")
    try:
        coeffs = CoefficientSet(dim, b, sigma, float(ell[0]), float(ell[1]), tag=raw.get("name", "config"),
                                sample_times=(grid.t_start, grid.t_end))
    except ValueError as err:
        raise ConfigError(f"[coefficients]: {err}") from None
    e = raw.get("exponents", {})
    p, q, thr = float(e.get("p", 4.0)), float(e.get("q", 8.0)), float(e.get("threshold", 1))
    try:
        ok = check_exponents(dim, p, q, thr)
    except ValueError as err:
        raise ConfigError(f"[exponents]: {err}") from None
    return ExperimentConfig(str(raw.get("name", "config")), raw, grid, coeffs, int(raw.get("seed", 0)), p, q, thr,
                            ok, constants, source)


def load_config(path=None, preset: str | None = None, seed: int | None = None) -> ExperimentConfig:
    """Load a config file or a preset by name (exactly one of them)."""
    if (path is None) == (preset is None):
        raise ConfigError("give exactly one of a config path or a preset name")
    if preset is not None:
        path = presets_dir() / f"{preset}.toml"
        if not path.exists():
            raise ConfigError(f"unknown preset {preset!r}; available: {', '.join(list_presets())}")
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except OSError as err:
        raise ConfigError(f"cannot read {path}: {err}") from None
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from None
    return build_config(raw, str(path), seed)
