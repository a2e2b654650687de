"""Time increments of the particle fluctuation field in H^{-alpha}.

eta^N_t = sqrt(N)(mu^N_t - rho_t) is transformed once per snapshot; the
fourth moment E ||eta_t - eta_s||^4 for each lag |t - s| pools every
admissible start s along the trajectory and then averages over replicas
(each with its own W).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..meanfield import DensityField
from ..particles import run_trajectory
from ..scenario.config import ScenarioConfig
from ..sobolev import empirical_fourier, field_fourier
from .coupled import Coupling
from .pool import ordered_map
from .report import CampaignResult, Table, Verdict
from .stats import ScalingFit, fit_power_law, mean_se

SLOPE_BAND = (1.6, 2.4)


@dataclass
class IncrementSample:
    lags: tuple[int, ...]        # in steps
    dt: float
    N: int
    alpha: float
    moments: np.ndarray          # (R, n_lags): per-replica pooled E||.||^4

    @property
    def lag_times(self) -> np.ndarray:
        return np.asarray(self.lags, dtype=float) * self.dt

    def summary(self) -> tuple[np.ndarray, np.ndarray]:
        return mean_se(self.moments, axis=0)


def _replica(cp: Coupling, N: int, lags, stride: int, lattice, weight, replica: int) -> np.ndarray:
    cfg = cp.cfg
    path = cp.replica_path(replica)
    rho_path = cp.density(path, stride=stride)
    traj = run_trajectory(cfg, replica, N, path, dyn=cp.dyn, stride=stride)
    spectra = {}
    for step, t, X in traj.snapshots:
        rho = DensityField(cp.grid, rho_path.at_step(step), t)
        diff = empirical_fourier(X, lattice).values - field_fourier(rho, lattice).values
        spectra[step] = math.sqrt(N) * diff
    out = np.zeros(len(lags))
    starts = sorted(spectra)
    for i, lag in enumerate(lags):
        if lag == 0:
            continue
        vals = []
        for s in starts:
            if s + lag in spectra:
                d = spectra[s + lag] - spectra[s]
                sq = float(np.sum(weight * (d.real**2 + d.imag**2))) * lattice.cell_volume
                vals.append(sq * sq)
        if not vals:
            raise ValueError(f"lag {lag} does not fit in the recorded snapshots")
        out[i] = np.mean(vals)
    return out


def increment_campaign(cfg: ScenarioConfig, lags, *, N: int | None = None, replicas: int | None = None,
                       stride: int | None = None, alpha: float | None = None,
                       cutoff: float | None = None, freq_size: int | None = None,
                       threads: int = 1) -> IncrementSample:
    """Fourth moments of eta increments for each lag (given in steps)."""
    lags = tuple(int(l) for l in lags)
    if len({l for l in lags if l > 0}) < 3:
        raise ValueError("increment campaigns need at least 3 positive lags")
    stride = int(stride or cfg.stride)
    if any(l % stride for l in lags):
        raise ValueError(f"every lag must be a multiple of the snapshot stride {stride}")
    N = int(N or cfg.N_list[-1])
    R = int(replicas or cfg.replicas)
    alpha = float(alpha if alpha is not None else cfg.alpha_interaction)
    cp = Coupling.build(cfg)
    lattice = cp.lattice(cutoff, freq_size)
    weight = lattice.bessel_weight(alpha)
    mom = np.array(ordered_map(lambda r: _replica(cp, N, lags, stride, lattice, weight, r),
                               range(R), threads))
    return IncrementSample(lags, cfg.dt, N, alpha, mom)


def increment_fit(sample: IncrementSample) -> ScalingFit:
    mean, se = sample.summary()
    keep = np.asarray(sample.lags) > 0
    return fit_power_law(sample.lag_times[keep], mean[keep], se[keep])


def increments_result(sample: IncrementSample) -> CampaignResult:
    fit = increment_fit(sample)
    mean, se = sample.summary()
    rows = [(sample.N, r, lag, float(sample.lag_times[i]), float(sample.moments[r, i]))
            for r in range(sample.moments.shape[0]) for i, lag in enumerate(sample.lags)]
    per = Table("increments", ("N", "replica", "lag_steps", "lag", "moment4"), rows)
    fit_rows = [(lag, float(sample.lag_times[i]), float(mean[i]), float(se[i]), fit.slope,
                 fit.ci[0], fit.ci[1]) for i, lag in enumerate(sample.lags)]
    fits = Table("fit", ("lag_steps", "lag", "moment4", "se", "slope", "ci_lo", "ci_hi"), fit_rows)
    v = Verdict.in_band("increment_slope", fit.slope, *SLOPE_BAND, ci=fit.ci)
    return CampaignResult("increments", [per, fits], [v],
                          {"slope": fit.slope, "ci": list(fit.ci), "alpha": sample.alpha})
