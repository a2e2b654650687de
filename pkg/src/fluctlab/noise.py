"""Common-noise paths and idiosyncratic increment sources."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .scenario.rng import RngPlan


@dataclass(frozen=True)
class CommonNoisePath:
    """Increments of the common Brownian motion W on an equal-step grid.

    ``increments`` has shape (n_steps, m_tilde); each entry is N(0, dt).
    Shared read-only by every replica of a conditional campaign.
    """

    increments: np.ndarray
    dt: float
    path_id: int = 0
    level: int = 0

    @classmethod
    def draw(cls, plan: RngPlan, path_id: int, n_steps: int, dt: float, m_tilde: int) -> CommonNoisePath:
        rng = plan.stream("common", path_id)
        inc = rng.standard_normal((n_steps, m_tilde)) * math.sqrt(dt)
        inc.flags.writeable = False
        return cls(inc, dt, path_id, 0)

    @classmethod
    def zero(cls, n_steps: int, dt: float, m_tilde: int) -> CommonNoisePath:
        return cls(np.zeros((n_steps, m_tilde)), dt, -1, 0)

    @property
    def n_steps(self) -> int:
        return self.increments.shape[0]

    @property
    def m_tilde(self) -> int:
        return self.increments.shape[1]

    @property
    def W(self) -> np.ndarray:
        """Path values W_0 = 0, W_1, ..., W_n, shape (n_steps+1, m_tilde)."""
        out = np.zeros((self.n_steps + 1, self.m_tilde))
        np.cumsum(self.increments, axis=0, out=out[1:])
        return out

    def refine(self, plan: RngPlan) -> CommonNoisePath:
        """Halve the step by Brownian-bridge interpolation (same underlying path)."""
        rng = plan.stream("bridge", max(self.path_id, 0), self.level)
        half = self.dt / 2.0
        z = rng.standard_normal(self.increments.shape)
        first = 0.5 * self.increments + math.sqrt(half / 2.0) * z
        second = self.increments - first
        inc = np.empty((2 * self.n_steps, self.m_tilde))
        inc[0::2] = first
        inc[1::2] = second
        inc.flags.writeable = False
        return CommonNoisePath(inc, half, self.path_id, self.level + 1)


class BlockNoise:
    """One generator per (replica, N): step draws are an (N, m) block, row i to particle i."""

    def __init__(self, rng: np.random.Generator, N: int, m: int):
        self.rng, self.N, self.m = rng, N, m

    def draw(self, dt: float) -> np.ndarray:
        return self.rng.standard_normal((self.N, self.m)) * math.sqrt(dt)


class ParticleNoise:
    """One generator per particle; reordering the list reorders particles' noise."""

    def __init__(self, rngs: list[np.random.Generator], m: int):
        self.rngs, self.m = list(rngs), m
        self.N = len(self.rngs)

    def draw(self, dt: float) -> np.ndarray:
        out = np.empty((self.N, self.m))
        for i, g in enumerate(self.rngs):
            out[i] = g.standard_normal(self.m)
        return out * math.sqrt(dt)


def idio_source(plan: RngPlan, replica: int, N: int, m: int):
    if plan.per_particle:
        return ParticleNoise([plan.stream("idio_particle", replica, N, i) for i in range(N)], m)
    return BlockNoise(plan.stream("idio", replica, N), N, m)
