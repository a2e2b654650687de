"""Scenario descriptions: coefficients, densities, test functions, seeds."""

from __future__ import annotations

import numpy as np

from .config import ScenarioConfig, config_manifest, load_config, parse_config_text, save_config
from .rng import STREAM_KINDS, RngPlan
from .specs import CoefficientSpec, ConfigError, DensitySpec, KernelSpec, parse_call
from .testfunctions import TestFunction, build_test_function


def sample_initial(rho0: DensitySpec, N: int, stream: np.random.Generator, *, d: int = 1,
                   L: float = 8.0, M: int = 256) -> np.ndarray:
    """N i.i.d. draws from rho0 truncated to [-L, L)^d, shape (N, d)."""
    if N < 0:
        raise ValueError("N must be nonnegative")
    return rho0.sample(int(N), d, L, M, stream)


__all__ = [
    "ScenarioConfig", "load_config", "save_config", "parse_config_text", "config_manifest",
    "RngPlan", "STREAM_KINDS", "KernelSpec", "CoefficientSpec", "DensitySpec", "ConfigError",
    "TestFunction", "build_test_function", "parse_call", "sample_initial",
]
