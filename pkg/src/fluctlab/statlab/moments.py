"""Coupled particle / mean-field sweeps over N for the moment scaling laws.

For each replica one common-noise path W is drawn; the mean-field density
rho_T and the particle systems for every N in the list are driven by that W.
At t = T three quantities are recorded per (N, replica):

* ``plain``: ||mu^N_T - rho_T||^2 in H^{-alpha};
* ``interaction``: ||div((k * mu) mu - (k * rho) rho)||^2 in H^{-alpha_int};
* ``bilinear``: <phi . k * (mu - rho), mu - rho> for one test function phi.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..meanfield import DensityField, GridConvolver
from ..particles import run_trajectory
from ..scenario.config import ScenarioConfig
from ..sobolev import (empirical_fourier, field_fourier, h_neg_alpha_norm,
                       interaction_spectrum, interaction_spectrum_field, pair_test_bilinear)
from .coupled import Coupling
from .pool import ordered_map
from .report import CampaignResult, Table, Verdict
from .stats import ScalingFit, fit_power_law, mean_se, spearman_trend

NORM_KINDS = ("plain", "interaction", "bilinear")
SLOPE_BAND = (-1.15, -0.85)
BILINEAR_BAND = (-1.2, -0.8)
TREND_MAX = 0.3


@dataclass
class NormSweep:
    """Per-(N, replica) values; arrays have shape (len(N_list), replicas)."""

    N_list: tuple[int, ...]
    replicas: int
    t: float
    alpha: float
    alpha_interaction: float
    phi_name: str
    plain: np.ndarray
    plain_residual: np.ndarray
    interaction: np.ndarray
    interaction_residual: np.ndarray
    bilinear: np.ndarray

    def values(self, kind: str, p: int) -> np.ndarray:
        """||.||^p for the norms (stored squared), |pairing|^p for the bilinear form."""
        if kind == "plain":
            return self.plain ** (p / 2)
        if kind == "interaction":
            return self.interaction ** (p / 2)
        if kind == "bilinear":
            return np.abs(self.bilinear) ** p
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")

    def moments(self, kind: str, p: int) -> tuple[np.ndarray, np.ndarray]:
        return mean_se(self.values(kind, p), axis=1)

    def norm_rows(self) -> list[tuple]:
        rows = []
        for i, N in enumerate(self.N_list):
            for r in range(self.replicas):
                rows.append((N, r, self.t, self.alpha, float(self.plain[i, r]),
                             float(self.plain_residual[i, r]), "difference"))
                rows.append((N, r, self.t, self.alpha_interaction, float(self.interaction[i, r]),
                             float(self.interaction_residual[i, r]), "interaction_difference"))
        return rows

    def pairing_rows(self) -> list[tuple]:
        return [(N, r, self.t, self.phi_name, float(self.bilinear[i, r]))
                for i, N in enumerate(self.N_list) for r in range(self.replicas)]


NORM_COLUMNS = ("N", "replica", "t", "alpha", "norm_sq", "residual_bound", "source_tag")
PAIRING_COLUMNS = ("N", "replica", "t", "phi_name", "pairing_value")


def _replica(cp: Coupling, phi, N_list, replica: int) -> np.ndarray:
    cfg = cp.cfg
    path = cp.replica_path(replica)
    rho_T = cp.density(path).final
    field = DensityField(cp.grid, rho_T, cfg.T)
    lat = cp.lattice()
    conv = GridConvolver(cp.grid, cfg.kernel)
    F_rho = field_fourier(field, lat)
    I_rho = interaction_spectrum_field(field, cfg.kernel, lat, conv)
    sk = cp.dyn.spectral
    method = "spectral" if sk is not None else "direct"
    out = np.empty((len(N_list), 5))
    for i, N in enumerate(N_list):
        X = run_trajectory(cfg, replica, N, path, dyn=cp.dyn, stride=0).final.X
        plain = h_neg_alpha_norm(empirical_fourier(X, lat) - F_rho, cfg.alpha)
        inter = h_neg_alpha_norm(
            interaction_spectrum(X, cfg.kernel, lat, cfg.L, method, sk) - I_rho, cfg.alpha_interaction)
        bil = pair_test_bilinear(X, field, phi, cfg.kernel, method, sk)
        out[i] = (plain.norm_sq, plain.residual, inter.norm_sq, inter.residual, bil)
    return out


def norm_sweep(cfg: ScenarioConfig, *, replicas: int | None = None, N_list=None,
               phi_name: str | None = None, threads: int = 1) -> NormSweep:
    """Run the coupled sweep; replicas fan out over the worker pool."""
    R = replicas or cfg.replicas
    N_list = tuple(int(n) for n in (N_list or cfg.N_list))
    phi = cfg.test_function(phi_name) if phi_name else cfg.tests()[0]
    cp = Coupling.build(cfg)
    res = np.stack(ordered_map(lambda r: _replica(cp, phi, N_list, r), range(R), threads), axis=1)
    return NormSweep(N_list, R, cfg.T, cfg.alpha, cfg.alpha_interaction, phi.name,
                     res[..., 0], res[..., 1], res[..., 2], res[..., 3], res[..., 4])


def moment_campaign(cfg: ScenarioConfig, kind: str, p: int, *, sweep: NormSweep | None = None,
                    threads: int = 1) -> ScalingFit:
    """Fit log E[value^p] against log N."""
    if kind not in NORM_KINDS:
        raise ValueError(f"unknown norm kind {kind!r}; expected one of {NORM_KINDS}")
    sweep = sweep or norm_sweep(cfg, threads=threads)
    if len(set(sweep.N_list)) < 3:
        raise ValueError("moment campaigns need at least 3 distinct N values")
    mean, se = sweep.moments(kind, p)
    return fit_power_law(sweep.N_list, mean, se)


def trend_of_scaled(sweep: NormSweep, kind: str, p: int = 4) -> float:
    """Spearman correlation of N * E[value^p] with N."""
    mean, _ = sweep.moments(kind, p)
    return spearman_trend(sweep.N_list, np.asarray(sweep.N_list) * mean)


def converge_result(sweep: NormSweep) -> CampaignResult:
    """Verdicts for the three scaling claims plus the p = 4 trend checks."""
    fits = {
        "plain": fit_power_law(sweep.N_list, *sweep.moments("plain", 2)),
        "interaction": fit_power_law(sweep.N_list, *sweep.moments("interaction", 2)),
        "bilinear": fit_power_law(sweep.N_list, *sweep.moments("bilinear", 1)),
    }
    verdicts = [
        Verdict.in_band("plain_slope_p2", fits["plain"].slope, *SLOPE_BAND, ci=fits["plain"].ci),
        Verdict.in_band("plain_trend_p4", trend_of_scaled(sweep, "plain"), -1.0, TREND_MAX),
        Verdict.in_band("interaction_slope_p2", fits["interaction"].slope, *SLOPE_BAND,
                        ci=fits["interaction"].ci),
        Verdict.in_band("interaction_trend_p4", trend_of_scaled(sweep, "interaction"), -1.0, TREND_MAX),
        Verdict.in_band("bilinear_slope_p1", fits["bilinear"].slope, *BILINEAR_BAND,
                        ci=fits["bilinear"].ci),
    ]
    fit_table = Table("fits", ("kind", "p", "N", "moment", "se", "slope", "ci_lo", "ci_hi"))
    for kind, p in (("plain", 2), ("plain", 4), ("interaction", 2), ("interaction", 4), ("bilinear", 1)):
        mean, se = sweep.moments(kind, p)
        fit = fits[kind] if p != 4 else fit_power_law(sweep.N_list, mean, se)
        for N, m, s in zip(sweep.N_list, mean, se):
            fit_table.rows.append((kind, p, N, float(m), float(s), fit.slope, fit.ci[0], fit.ci[1]))
    tables = [Table("norms", NORM_COLUMNS, sweep.norm_rows()),
              Table("pairings", PAIRING_COLUMNS, sweep.pairing_rows()), fit_table]
    summary = {k: {"slope": f.slope, "ci": list(f.ci)} for k, f in fits.items()}
    return CampaignResult("converge", tables, verdicts, summary)
