"""M1-topology tools for càdlàg paths and many-server heavy-traffic limits."""

from __future__ import annotations

__version__ = "0.1.0"

from .integral import LipschitzDrift, continuity_experiment, gronwall_bound, parse_drift, solve_map
from .manyserver import (
    QueueParams,
    fclt_experiment,
    martingale_diagnostics,
    simulate_limit,
    simulate_queue,
    staffing,
)
from .metric import aligned_rep, m1_distance, m1_estimate
from .paths import CadlagPath, DomainError, j_max, jumps, uniform_dist, ws_osc
from .regularize import regularize
from .reps import ParametricRep, canonical_rep, validate_rep
from .stable import StableLevyConfig, simulate_stable_levy

__all__ = [
    "CadlagPath",
    "DomainError",
    "LipschitzDrift",
    "ParametricRep",
    "QueueParams",
    "StableLevyConfig",
    "aligned_rep",
    "canonical_rep",
    "continuity_experiment",
    "fclt_experiment",
    "gronwall_bound",
    "j_max",
    "jumps",
    "m1_distance",
    "m1_estimate",
    "martingale_diagnostics",
    "parse_drift",
    "regularize",
    "simulate_limit",
    "simulate_queue",
    "simulate_stable_levy",
    "solve_map",
    "staffing",
    "uniform_dist",
    "validate_rep",
    "ws_osc",
]
