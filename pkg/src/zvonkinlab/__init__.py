"""Numerical laboratory for Zvonkin's transformation of SDEs with singular drifts."""

__version__ = "0.1.0"

from .analysis import (
    MixedNormParams,
    check_exponents,
    lipschitz_maximal_check,
    maximal_function,
    mixed_norm,
    mollify,
    sobolev_norm,
)
from .coefficients import CoefficientSet, regularize_drift
from .config import ExperimentConfig, load_config
from .grid import SpaceTimeField, UniformGrid
from .lab import (
    DiagnosticsReport,
    bel_gradient,
    direct_pipeline,
    khasminskii_moment,
    krylov_check,
    law_consistency,
    noncrossing_check,
    strong_feller_scan,
    two_point_moments,
    uniqueness_witness,
    zvonkin_pipeline,
)
from .pde import PdeProblem, PdeSolverError, solve_backward
from .sde import euler_direct, generate_brownian, glue_and_detect_explosion, variational_flow, zvonkin_simulate
from .zvonkin import MinimumWindowReached, ZvonkinChain, bilipschitz_check, forward_map, inverse_map, partition

__all__ = [
    "CoefficientSet", "DiagnosticsReport", "ExperimentConfig", "MinimumWindowReached", "MixedNormParams",
    "PdeProblem", "PdeSolverError", "SpaceTimeField", "UniformGrid", "ZvonkinChain", "bel_gradient",
    "bilipschitz_check", "check_exponents", "direct_pipeline", "euler_direct", "forward_map", "generate_brownian",
    "glue_and_detect_explosion", "inverse_map", "khasminskii_moment", "krylov_check", "law_consistency",
    "lipschitz_maximal_check", "load_config", "maximal_function", "mixed_norm", "mollify", "noncrossing_check",
    "partition", "regularize_drift", "sobolev_norm", "solve_backward", "strong_feller_scan", "two_point_moments",
    "uniqueness_witness", "variational_flow", "zvonkin_pipeline", "zvonkin_simulate",
]
