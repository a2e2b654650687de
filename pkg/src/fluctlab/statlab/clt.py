"""Conditional CLT: particle fluctuations against the limiting SPDE for one fixed W.

Both sides share the path W and the mean-field density along it.  Particle
pairings are sqrt(N)(mean_i phi(X_T^i) - <phi, rho_T>); SPDE pairings come
from independent runs started at the grid projection of an independent
initial particle fluctuation.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..fluctuation import analytic_variance, run_fluctuation
from ..particles import run_trajectory
from ..scenario.config import ScenarioConfig
from .coupled import Coupling
from .pool import ordered_map
from .report import CampaignResult, Table, Verdict
from .stats import jackknife_variance, ks_normal, ks_point_mass, ks_two_sample

MIN_KS_RUNS = 500
P_MIN = 0.01
RATIO_BAND = (0.85, 1.15)


@dataclass
class CltSample:
    names: list[str]
    N: int
    path_id: int
    particle: np.ndarray        # (R, n_phi)
    spde: np.ndarray            # (R, n_phi)
    analytic: np.ndarray | None  # (n_phi,), only for k = 0
    t: float

    @property
    def replicas(self) -> int:
        return self.particle.shape[0]


def _particle_pairing(cp: Coupling, path, N: int, phis, means: np.ndarray, replica: int) -> np.ndarray:
    X = run_trajectory(cp.cfg, replica, N, path, dyn=cp.dyn, stride=0).final.X
    vals = np.array([np.mean(tf(X)) for tf in phis])
    return math.sqrt(N) * (vals - means)


def conditional_clt(cfg: ScenarioConfig, *, names: list[str] | None = None, replicas: int | None = None,
                    N: int | None = None, path_id: int = 0, threads: int = 1,
                    eta0: str = "projected") -> CltSample:
    """Sample particle and SPDE pairings at T along the fixed path ``path_id``."""
    R = int(replicas or cfg.replicas)
    N = int(N or cfg.N_list[-1])
    cp = Coupling.build(cfg)
    tests = [cfg.test_function(n) for n in names] if names else cfg.tests()
    path = cp.path(path_id)
    rho_path = cp.density(path, stride=1)
    rho_T = rho_path.final
    grid = cp.grid
    fg = [tf(grid.coords) for tf in tests]
    means = np.array([float(np.sum(f * rho_T) * grid.cell_volume) for f in fg])
    part = np.array(ordered_map(lambda r: _particle_pairing(cp, path, N, tests, means, r),
                                range(R), threads))
    run = run_fluctuation(cfg, rho_path, path.increments, R, eta0=eta0, N0=N, tests=tests,
                          stride=cfg.n_steps)
    spde = run.pairings[-1]
    analytic = None
    if cfg.kernel.is_zero:
        analytic = np.array([analytic_variance(rho_T, grid, f) for f in fg])
    return CltSample([tf.name for tf in tests], N, path_id, part, spde, analytic, cfg.T)


def _ks_self(sample: np.ndarray) -> tuple[float, float]:
    if np.ptp(sample) <= 1e-12 * max(1.0, float(np.abs(sample).max())):
        return ks_point_mass(sample)
    return ks_normal(sample)


def clt_result(sample: CltSample) -> CampaignResult:
    if sample.replicas < MIN_KS_RUNS:
        raise ValueError(f"KS claims need at least {MIN_KS_RUNS} runs (got {sample.replicas})")
    verdicts: list[Verdict] = []
    summary_rows = []
    for j, name in enumerate(sample.names):
        a, b = sample.particle[:, j], sample.spde[:, j]
        _, p_norm = _ks_self(a)
        _, p_two = ks_two_sample(a, b) if np.ptp(a) or np.ptp(b) else (0.0, 1.0)
        var_p, se_p = jackknife_variance(a, axis=0)
        var_s, se_s = jackknife_variance(b, axis=0)
        verdicts.append(Verdict.in_band(f"clt_normality[{name}]", p_norm, P_MIN, 1.0))
        verdicts.append(Verdict.in_band(f"clt_two_sample[{name}]", p_two, P_MIN, 1.0))
        ratio_s = float(var_p / var_s) if var_s > 0 else math.nan
        verdicts.append(Verdict.in_band(f"clt_variance_vs_spde[{name}]", ratio_s, *RATIO_BAND))
        ratio_a = math.nan
        if sample.analytic is not None and sample.analytic[j] > 0:
            ratio_a = float(var_p / sample.analytic[j])
            verdicts.append(Verdict.in_band(f"clt_variance_vs_analytic[{name}]", ratio_a, *RATIO_BAND))
        summary_rows.append((name, float(var_p), float(se_p), float(var_s), float(se_s),
                             float(sample.analytic[j]) if sample.analytic is not None else math.nan,
                             p_norm, p_two))
    pair = Table("pairings", ("t", "run", "phi_name", "source", "pairing_value"))
    for r in range(sample.replicas):
        for j, name in enumerate(sample.names):
            pair.rows.append((sample.t, r, name, "particles", float(sample.particle[r, j])))
            pair.rows.append((sample.t, r, name, "spde", float(sample.spde[r, j])))
    stats = Table("clt_summary", ("phi_name", "var_particles", "se_particles", "var_spde", "se_spde",
                                  "var_analytic", "p_normal", "p_two_sample"), summary_rows)
    return CampaignResult("clt", [pair, stats], verdicts,
                          {"N": sample.N, "replicas": sample.replicas, "path_id": sample.path_id})
