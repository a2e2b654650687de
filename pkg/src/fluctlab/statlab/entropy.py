"""Histogram estimate of KL(empirical one-particle marginal || rho).

A one-particle proxy for the N-particle relative entropy: it can reveal a
drifting marginal but says nothing about correlations between particles.
Bins follow the Freedman-Diaconis rule per axis over the sample range.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..grid import PeriodicGrid
from ..particles import run_trajectory
from ..scenario.config import ScenarioConfig
from .coupled import Coupling
from .pool import ordered_map
from .report import CampaignResult, Table, Verdict
from .stats import spearman_trend

MIN_SAMPLES = 10_000
SMOOTHING = 1e-12
_SUB = 8  # quadrature points per bin and axis


@dataclass(frozen=True)
class KlEstimate:
    value: float
    bins: tuple[int, ...]
    samples: int
    smoothed: bool

    @property
    def label(self) -> str:
        return "marginal_kl_proxy"


def _edges(x: np.ndarray) -> np.ndarray:
    e = np.histogram_bin_edges(x, bins="fd")
    if e.size < 2 or e[0] == e[-1]:
        e = np.array([x.min() - 0.5, x.max() + 0.5])
    return e


def _bin_masses(rho: np.ndarray, grid: PeriodicGrid, edges: list[np.ndarray]) -> np.ndarray:
    """Integral of the interpolated rho over each bin (midpoint rule on a sub-grid)."""
    pts, widths = [], []
    for e in edges:
        w = np.diff(e)
        frac = (np.arange(_SUB) + 0.5) / _SUB
        pts.append((e[:-1, None] + w[:, None] * frac[None, :]).reshape(-1))
        widths.append(np.repeat(w / _SUB, _SUB))
    mesh = np.stack(np.meshgrid(*pts, indexing="ij"), axis=-1).reshape(-1, grid.d)
    vol = widths[0]
    for w in widths[1:]:
        vol = np.multiply.outer(vol, w)
    vals = grid.interpolate(rho, mesh).reshape(vol.shape) * vol
    shape = []
    for e in edges:
        shape += [e.size - 1, _SUB]
    return vals.reshape(shape).sum(axis=tuple(range(1, 2 * grid.d, 2)))


def marginal_kl(positions: np.ndarray, rho: np.ndarray, grid: PeriodicGrid,
                min_samples: int = MIN_SAMPLES) -> KlEstimate:
    """sum_b p_b log(p_b / q_b) with p the histogram and q the rho mass per bin.

    q is renormalised over the histogram range.  Bins where q vanishes get
    an additive 1e-12 and the estimate is flagged as smoothed.
    """
    X = np.atleast_2d(np.asarray(positions, dtype=float))
    n = X.shape[0]
    if n < min_samples:
        raise ValueError(f"marginal KL needs at least {min_samples} pooled samples (got {n})")
    edges = [_edges(X[:, ax]) for ax in range(grid.d)]
    counts, _ = np.histogramdd(X, bins=edges)
    p = counts / n
    q = np.maximum(_bin_masses(rho, grid, edges), 0.0)
    total = q.sum()
    if total <= 0:
        raise ValueError("rho has no mass over the sample range")
    q = q / total
    occupied = p > 0
    smoothed = bool(np.any(q[occupied] < SMOOTHING))
    if smoothed:
        q = q + SMOOTHING
    kl = float(np.sum(p[occupied] * np.log(p[occupied] / q[occupied])))
    return KlEstimate(kl, tuple(e.size - 1 for e in edges), n, smoothed)


def sample_grid_density(rho: np.ndarray, grid: PeriodicGrid, n: int, rng: np.random.Generator) -> np.ndarray:
    """Draw n points from the cell distribution of rho: pick a cell by mass, then uniform inside it."""
    w = np.maximum(rho.reshape(-1), 0.0)
    idx = rng.choice(w.size, size=n, p=w / w.sum())
    nodes = grid.coords.reshape(-1, grid.d)[idx]
    return grid.wrap(nodes + (rng.random((n, grid.d)) - 0.5) * grid.h)


@dataclass
class EntropySample:
    N_list: tuple[int, ...]
    estimates: list[KlEstimate]
    replicas: int

    @property
    def values(self) -> np.ndarray:
        return np.array([e.value for e in self.estimates])


def entropy_campaign(cfg: ScenarioConfig, *, N_list=None, replicas: int | None = None,
                     path_id: int = 0, threads: int = 1) -> EntropySample:
    """Pool X_T over replicas sharing one W and compare with rho_T along that W, per N."""
    N_list = tuple(int(n) for n in (N_list or cfg.N_list))
    R = int(replicas or cfg.replicas)
    cp = Coupling.build(cfg)
    path = cp.path(path_id)
    rho_T = cp.density(path).final
    ests = []
    for N in N_list:
        finals = ordered_map(lambda r: run_trajectory(cfg, r, N, path, dyn=cp.dyn, stride=0).final.X,
                             range(R), threads)
        ests.append(marginal_kl(np.concatenate(finals), rho_T, cp.grid))
    return EntropySample(N_list, ests, R)


def entropy_result(sample: EntropySample, trend_max: float = 0.3) -> CampaignResult:
    rows = [(N, e.samples, e.bins[0], e.value, int(e.smoothed), e.label)
            for N, e in zip(sample.N_list, sample.estimates)]
    table = Table("entropy", ("N", "samples", "bins", "kl", "smoothed", "label"), rows)
    trend = spearman_trend(sample.N_list, sample.values) if len(sample.N_list) > 1 else 0.0
    warns = [f"N={N}: empty-bin smoothing applied" for N, e in zip(sample.N_list, sample.estimates)
             if e.smoothed]
    return CampaignResult("entropy", [table], [Verdict.in_band("marginal_kl_trend", trend, -1.0, trend_max)],
                          {"label": "marginal_kl_proxy"}, warns)
