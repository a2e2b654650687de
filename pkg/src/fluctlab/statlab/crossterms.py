"""Martingale covariances and the cross-term null between M^N and Mhat^N.

Each replica draws its own W, solves rho along it and runs the particle
system with the martingale ledger switched on.  The covariance target is
the replica average of the left-point Riemann sum

    sum_n dt <sigma sigma^T grad phi_a . grad phi_b, rho_{t_n}>,

which is the conditional covariance of M_T(phi_a), M_T(phi_b) given W in
the mean-field limit.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..particles import run_trajectory
from ..scenario.config import ScenarioConfig
from .coupled import Coupling
from .pool import ordered_map
from .report import CampaignResult, Table, Verdict
from .stats import jackknife_covariance, mean_se

SE_BAND = 4.0
REL_BAND = 0.10


@dataclass
class MartingaleSample:
    """Terminal martingale values across replicas.

    ``M`` and ``Mhat_T`` are (R, n_phi); ``Mhat_blocks`` (R, n_blocks, n_phi)
    holds Mhat increments over equal time blocks; ``target`` (R, n_phi, n_phi)
    the per-replica covariance quadrature; ``Q`` the ledger's predicted
    quadratic covariation from the particles themselves.
    """

    names: list[str]
    N: int
    M: np.ndarray
    Mhat_T: np.ndarray
    Mhat_blocks: np.ndarray
    target: np.ndarray
    Q: np.ndarray

    @property
    def replicas(self) -> int:
        return self.M.shape[0]


def covariance_quadrature(cp: Coupling, rho_values: np.ndarray, tests) -> np.ndarray:
    """sum_n dt <grad phi_a . sigma sigma^T grad phi_b, rho_n> over steps n = 0..n-1."""
    cfg, grid = cp.cfg, cp.grid
    x = grid.coords
    grads = np.stack([tf.grad(x) for tf in tests], axis=-2)  # (M^d, n, d)
    out = np.zeros((len(tests), len(tests)))
    const = None
    if cfg.sigma.is_constant:
        s = cfg.sigma.base(cfg.d)
        sg = np.einsum("ij,...ki->...kj", s, grads)
        const = np.einsum("...kj,...lj->...kl", sg, sg)
    for n in range(rho_values.shape[0] - 1):
        if const is None:
            sig = cfg.sigma(n * cfg.dt, x, cfg.L)
            sg = np.einsum("...ij,...ki->...kj", sig, grads)
            G = np.einsum("...kj,...lj->...kl", sg, sg)
        else:
            G = const
        out += np.tensordot(rho_values[n], G, axes=cfg.d) * grid.cell_volume
    return out * cfg.dt


def _replica(cp: Coupling, N: int, tests, blocks: int, replica: int):
    cfg = cp.cfg
    path = cp.replica_path(replica)
    rho_path = cp.density(path, stride=1)
    traj = run_trajectory(cfg, replica, N, path, dyn=cp.dyn, stride=0, tests=tests, rho_path=rho_path)
    led = traj.ledger
    Mhat = led.Mhat_series
    edges = np.linspace(0, cfg.n_steps, blocks + 1).round().astype(int)
    inc = np.diff(Mhat[edges], axis=0)
    return led.M[-1], Mhat[-1], inc, covariance_quadrature(cp, rho_path.values, tests), led.Q[-1]


def martingale_campaign(cfg: ScenarioConfig, *, N: int | None = None, replicas: int | None = None,
                        names: list[str] | None = None, blocks: int = 4,
                        threads: int = 1) -> MartingaleSample:
    cp = Coupling.build(cfg)
    N = int(N or cfg.N_list[-1])
    R = int(replicas or cfg.replicas)
    tests = [cfg.test_function(n) for n in names] if names else cfg.tests()
    out = ordered_map(lambda r: _replica(cp, N, tests, blocks, r), range(R), threads)
    cols = list(zip(*out))
    return MartingaleSample([tf.name for tf in tests], N, np.array(cols[0]), np.array(cols[1]),
                            np.array(cols[2]), np.array(cols[3]), np.array(cols[4]))


def covariance_check(sample: MartingaleSample, a: int = 0, b: int = 1) -> tuple[Verdict, Verdict, dict]:
    """Empirical Cov(M_T(phi_a), M_T(phi_b)) against the averaged quadrature.

    Passes when the gap is within 4 jackknife SE; when that band is tighter
    than 10% of the target, the 10% relative check is reported as well.
    """
    cov, se = jackknife_covariance(sample.M[:, a], sample.M[:, b])
    cov, se = float(cov), float(se)
    target = float(sample.target[:, a, b].mean())
    gap = cov - target
    z = abs(gap) / se if se > 0 else (0.0 if gap == 0 else math.inf)
    name = f"{sample.names[a]},{sample.names[b]}"
    v_se = Verdict.in_band(f"martingale_covariance[{name}]_se", z, 0.0, SE_BAND,
                           cov=cov, target=target, se=se)
    rel = abs(gap) / abs(target) if target != 0 else (0.0 if gap == 0 else math.inf)
    applies = SE_BAND * se < REL_BAND * abs(target)
    v_rel = Verdict(f"martingale_covariance[{name}]_rel", rel, (0.0, REL_BAND),
                    bool(rel <= REL_BAND) if applies else True, {"applies": applies})
    return v_se, v_rel, {"cov": cov, "se": se, "target": target, "rel": rel}


def cross_term_check(sample: MartingaleSample) -> tuple[list[Verdict], list[tuple]]:
    """Means of M_T Mhat_T and M_T (Mhat block increments), each within 4 SE of 0."""
    verdicts, rows = [], []
    for j, name in enumerate(sample.names):
        cols = [("T", sample.M[:, j] * sample.Mhat_T[:, j])]
        for b in range(sample.Mhat_blocks.shape[1]):
            cols.append((f"block{b}", sample.M[:, j] * sample.Mhat_blocks[:, b, j]))
        for label, prod in cols:
            m, se = mean_se(prod)
            m, se = float(m), float(se)
            z = abs(m) / se if se > 0 else (0.0 if m == 0 else math.inf)
            rows.append((name, label, m, se, z))
            verdicts.append(Verdict.in_band(f"cross_term[{name},{label}]", z, 0.0, SE_BAND, mean=m, se=se))
    return verdicts, rows


def crossterms_result(sample: MartingaleSample) -> CampaignResult:
    verdicts: list[Verdict] = []
    cov_rows = []
    n = len(sample.names)
    for a in range(n):
        for b in range(a + 1, n):
            v_se, v_rel, info = covariance_check(sample, a, b)
            verdicts += [v_se, v_rel]
            cov_rows.append((sample.names[a], sample.names[b], info["cov"], info["se"],
                             info["target"], info["rel"]))
    cross, cross_rows = cross_term_check(sample)
    verdicts += cross
    mart = Table("martingales", ("replica", "phi_name", "M_T", "Mhat_T", "Q_T", "target"))
    for r in range(sample.replicas):
        for j, name in enumerate(sample.names):
            mart.rows.append((r, name, float(sample.M[r, j]), float(sample.Mhat_T[r, j]),
                              float(sample.Q[r, j, j]), float(sample.target[r, j, j])))
    tables = [mart,
              Table("covariance", ("phi_a", "phi_b", "cov", "se", "target", "rel_gap"), cov_rows),
              Table("cross_terms", ("phi_name", "window", "mean", "se", "z"), cross_rows)]
    return CampaignResult("crossterms", tables, verdicts, {"N": sample.N, "replicas": sample.replicas})
