"""Shared set-up for coupled particle / mean-field campaigns."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import PeriodicGrid
from ..meanfield import DensityPath, FokkerPlanckSolver
from ..noise import CommonNoisePath
from ..particles import Dynamics
from ..scenario.config import ScenarioConfig
from ..sobolev import FrequencyLattice


@dataclass
class Coupling:
    """Objects every replica of a campaign shares read-only."""

    cfg: ScenarioConfig
    grid: PeriodicGrid
    solver: FokkerPlanckSolver
    dyn: Dynamics
    rho0: np.ndarray

    @classmethod
    def build(cls, cfg: ScenarioConfig) -> Coupling:
        solver = FokkerPlanckSolver.from_config(cfg)
        grid = solver.grid
        return cls(cfg, grid, solver, Dynamics.from_config(cfg),
                   cfg.rho0.on_grid(grid.coords, cfg.L, cfg.M))

    def lattice(self, cutoff: float | None = None, size: int | None = None) -> FrequencyLattice:
        return FrequencyLattice(self.cfg.d, cutoff or self.cfg.cutoff, size or self.cfg.freq_size)

    def path(self, path_id: int) -> CommonNoisePath:
        cfg = self.cfg
        return CommonNoisePath.draw(cfg.rng, path_id, cfg.n_steps, cfg.dt, cfg.m_tilde)

    def replica_path(self, replica: int) -> CommonNoisePath:
        """Unconditional campaigns draw a fresh W for every replica."""
        return self.path(self.cfg.rng.common_path_id(replica))

    def density(self, path: CommonNoisePath, stride: int | None = None) -> DensityPath:
        return self.solver.solve(self.rho0, path, stride=stride or path.n_steps)
