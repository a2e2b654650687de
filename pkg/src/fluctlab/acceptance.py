"""Runners for the acceptance criteria.

Each runner returns a CampaignResult whose verdicts decide the criterion.
Scenario settings are fixed here so that a criterion number alone
identifies the run (and its replay).
"""

from __future__ import annotations

import math
from importlib.resources import files
from typing import Callable

import numpy as np

from .grid import PeriodicGrid
from .kernels import pairwise_drift
from .meanfield import DensityField, gaussian_on_grid
from .scenario.config import ScenarioConfig, load_config
from .scenario.specs import KernelSpec
from .sobolev import (FrequencyLattice, empirical_fourier, h_neg_alpha_norm, interaction_spectrum,
                      pair_test_bilinear)
from .statlab import (CampaignResult, Table, Verdict, cancelling_product, clt_result,
                      conditional_clt, converge_result, crossterms_result, elln_campaign,
                      elln_result, increment_campaign, increments_result, martingale_campaign,
                      norm_sweep)
from .statlab.coupled import Coupling

TWO_BUMPS = (("bump1", "bump(center=0.0, radius=2.0)"), ("bump2", "bump(center=0.5, radius=2.0)"))


def default_config() -> ScenarioConfig:
    return load_config(files("fluctlab.configs") / "default.ini")


def criterion_config(k: int) -> ScenarioConfig | None:
    """Scenario used by criterion k (None when the criterion needs no scenario)."""
    base = default_config()
    if k == 1:
        return base.replace(kernel="zero", sigma="constant(0.8)", nu="constant(0.5)",
                            rho0="gaussian(mean=0.0, var=0.25)", L=8.0, M=256, n_steps=400, T=0.5)
    if k in (3, 4, 5):
        return base
    if k in (6, 7):
        return base.replace(sigma="constant(1.0)", nu="constant(1.0)", n_steps=50, N_list=[500],
                            replicas=2000, test_functions=TWO_BUMPS)
    if k == 8:
        return base.replace(kernel="zero", sigma="constant(1.0)", nu="constant(1.0)", n_steps=50,
                            N_list=[8000], replicas=2000, test_functions=TWO_BUMPS)
    if k == 9:
        return base
    if k == 10:
        return base.replace(n_steps=128, N_list=[2000], replicas=200, stride=2)
    return None


# -- 1: conditional Gaussian oracle ----------------------------------------------------------


def run_c1(threads: int = 1, paths: int = 5, tol: float = 1e-3) -> CampaignResult:
    cfg = criterion_config(1)
    cp = Coupling.build(cfg)
    nu = float(cfg.nu.base(1)[0, 0])
    s2 = float(cfg.sigma.base(1)[0, 0]) ** 2
    var0 = float(cfg.rho0.variances[0])
    rows = []
    for pid in range(paths):
        path = cp.path(pid)
        rho_T = cp.density(path).final
        WT = float(path.W[-1, 0])
        exact = gaussian_on_grid(cp.grid, np.array([nu * WT]), var0 + s2 * cfg.T)
        err = float(np.linalg.norm(rho_T - exact) / np.linalg.norm(exact))
        rows.append((pid, WT, err))
    worst = max(r[2] for r in rows)
    v = Verdict.in_band("c1_conditional_gaussian_rel_l2", worst, 0.0, tol)
    return CampaignResult("c1", [Table("c1", ("path_id", "W_T", "rel_l2_error"), rows)], [v])


# -- 2: two-particle norm oracle -----------------------------------------------------------


def run_c2(threads: int = 1, cutoff: float = 256.0, size: int = 4096, tol: float = 1e-3) -> CampaignResult:
    lat = FrequencyLattice(1, cutoff, size)
    res = h_neg_alpha_norm(empirical_fourier(np.array([[1.0], [-1.0]]), lat), 1.0)
    exact = (1.0 + math.exp(-2.0)) / 4.0
    gap = abs(res.norm_sq - exact)
    v = Verdict.in_band("c2_two_particle_norm", gap, 0.0, min(res.residual, tol),
                        residual=res.residual)
    rows = [(cutoff, size, res.norm_sq, exact, gap, res.residual)]
    return CampaignResult("c2", [Table("c2", ("cutoff", "freq_size", "norm_sq", "exact", "gap",
                                              "residual_bound"), rows)], [v])


# -- 3-5: coupled norm sweep -----------------------------------------------------------------


def run_c345(threads: int = 1) -> CampaignResult:
    return converge_result(norm_sweep(criterion_config(3), threads=threads))


# -- 6-7: martingale covariance and cross terms -----------------------------------------------


def run_c67(threads: int = 1) -> CampaignResult:
    return crossterms_result(martingale_campaign(criterion_config(6), threads=threads))


# -- 8: conditional CLT ----------------------------------------------------------------------


def run_c8(threads: int = 1) -> CampaignResult:
    res = clt_result(conditional_clt(criterion_config(8), threads=threads))
    # the criterion asks for normality, analytic variance and the two-sample test
    keep = ("clt_normality", "clt_two_sample", "clt_variance_vs_analytic")
    res.verdicts = [v for v in res.verdicts if v.criterion.startswith(keep)]
    return res


# -- 9: exponential law of large numbers -----------------------------------------------------


def run_c9(threads: int = 1, samples: int = 100_000) -> CampaignResult:
    cfg = criterion_config(9)
    grid = PeriodicGrid(cfg.d, cfg.L, 4096)
    rho = cfg.rho0.on_grid(grid.coords, cfg.L, grid.M)
    phi = cancelling_product(cfg.test_function("bump1"), rho, grid, sup=0.01, label="bump1")
    N_list = [2**j for j in range(3, 11)]

    def sampler(n, rng):
        return cfg.rho0.sample(n, cfg.d, cfg.L, cfg.M, rng)

    reports = [elln_campaign(sampler, phi, 1.0, p, N_list, samples, cfg.rng, cfg.d) for p in (2, 4)]
    res = elln_result(reports)
    # p = 4 is judged by its trend; its closed-form bound stays in the table
    res.verdicts = [v for v in res.verdicts if v.criterion != "elln_p4_bound"]
    return res


# -- 10: tightness increments ----------------------------------------------------------------


def run_c10(threads: int = 1) -> CampaignResult:
    cfg = criterion_config(10)
    lags = [cfg.n_steps // 2**j for j in (6, 5, 4, 3, 2)]  # T/64 .. T/4
    sample = increment_campaign(cfg, lags, alpha=2.6, cutoff=32.0, freq_size=256, threads=threads)
    return increments_result(sample)


# -- 12: oracle equivalence ------------------------------------------------------------------


def _kernel_brute(k: KernelSpec, z: np.ndarray) -> np.ndarray:
    """Kernel value at one displacement, written out per variant."""
    r2 = float(z @ z)
    d = z.size
    if k.variant == "gaussian":
        u = np.ones(d) / math.sqrt(d)
        return k.amplitude * math.exp(-r2 / (2 * k.scale**2)) * u
    if k.variant == "gaussian_derivative":
        return k.amplitude * math.exp(-r2 / (2 * k.scale**2)) * z / k.scale
    if k.variant == "bump":
        s = r2 / k.scale**2
        u = np.ones(d) / math.sqrt(d)
        return (k.amplitude * math.exp(1 - 1 / (1 - s)) if s < 1 else 0.0) * u
    return np.zeros(d)


def _min_image(z: np.ndarray, L: float) -> np.ndarray:
    out = z.copy()
    for i in range(z.size):
        while out[i] >= L:
            out[i] -= 2 * L
        while out[i] < -L:
            out[i] += 2 * L
    return out


def brute_drift(X: np.ndarray, k: KernelSpec, L: float) -> np.ndarray:
    N, d = X.shape
    out = np.zeros((N, d))
    for i in range(N):
        for j in range(N):
            out[i] -= _kernel_brute(k, _min_image(X[i] - X[j], L)) / N
    return out


def brute_interaction(X: np.ndarray, k: KernelSpec, L: float, lat: FrequencyLattice) -> np.ndarray:
    N, d = X.shape
    kmu = -brute_drift(X, k, L)
    nodes = lat.nodes.reshape(-1, d)
    out = np.zeros(nodes.shape[0], dtype=complex)
    for c, xi in enumerate(nodes):
        acc = 0.0 + 0.0j
        for j in range(N):
            acc += 1j * float(xi @ kmu[j]) * complex(math.cos(xi @ X[j]), -math.sin(xi @ X[j])) / N
        out[c] = acc * (2 * math.pi) ** (-d / 2)
    return out.reshape(lat.nodes.shape[:-1])


def brute_bilinear(X: np.ndarray, rho: np.ndarray, grid: PeriodicGrid, phi: Callable,
                   k: KernelSpec) -> float:
    """sum over signed atoms a, b of w_a w_b phi(x_a) . k(x_a - x_b), mu - rho as atoms."""
    N, d = X.shape
    xg = grid.coords.reshape(-1, d)
    pts = list(X) + list(xg)
    wts = [1.0 / N] * N + list(-rho.reshape(-1) * grid.cell_volume)
    total = 0.0
    for xa, wa in zip(pts, wts):
        pa = float(phi(xa[None])[0])
        for xb, wb in zip(pts, wts):
            if wa == 0.0 or wb == 0.0:
                continue
            total += wa * wb * pa * float(np.sum(_kernel_brute(k, _min_image(xa - xb, grid.L))))
    return total


def run_c12(threads: int = 1, instances: int = 100, tol: float = 1e-12, seed: int = 12) -> CampaignResult:
    rng = np.random.default_rng(seed)
    variants = ("gaussian", "gaussian_derivative", "bump")
    rows = []
    worst = {"pairwise_drift": 0.0, "interaction_spectrum": 0.0, "pair_test_bilinear": 0.0}
    for inst in range(instances):
        d = 1 + inst % 2
        N = int(rng.integers(1, 6))
        L = 4.0
        k = KernelSpec(variants[inst % 3], float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.5, 2.0)))
        X = rng.uniform(-L, L, (N, d))
        e1 = float(np.max(np.abs(pairwise_drift(X, k, L) - brute_drift(X, k, L))))
        lat = FrequencyLattice(d, 4.0, 8)
        e2 = float(np.max(np.abs(interaction_spectrum(X, k, lat, L).values
                                 - brute_interaction(X, k, L, lat))))
        grid = PeriodicGrid(d, L, 8)
        rho = np.abs(rng.standard_normal(grid.shape))
        rho /= rho.sum() * grid.cell_volume
        field = DensityField(grid, rho)
        c = rng.uniform(-1, 1, d)

        def phi(x, c=c):
            return np.exp(-np.sum((x - c) ** 2, axis=-1))

        e3 = abs(pair_test_bilinear(X, field, phi, k, method="direct")
                 - brute_bilinear(X, rho, grid, phi, k))
        worst["pairwise_drift"] = max(worst["pairwise_drift"], e1)
        worst["interaction_spectrum"] = max(worst["interaction_spectrum"], e2)
        worst["pair_test_bilinear"] = max(worst["pair_test_bilinear"], e3)
        rows.append((inst, d, N, k.variant, e1, e2, e3))
    verdicts = [Verdict.in_band(f"c12_{name}", err, 0.0, tol) for name, err in worst.items()]
    table = Table("c12", ("instance", "d", "N", "kernel", "err_drift", "err_interaction",
                          "err_bilinear"), rows)
    return CampaignResult("c12", [table], verdicts)


RUNNERS: dict[str, Callable[..., CampaignResult]] = {
    "c1": run_c1, "c2": run_c2, "c345": run_c345, "c67": run_c67, "c8": run_c8,
    "c9": run_c9, "c10": run_c10, "c12": run_c12,
}

# criterion number -> (runner key, verdict prefixes deciding it)
CRITERIA: dict[int, tuple[str, tuple[str, ...]]] = {
    1: ("c1", ("c1_",)),
    2: ("c2", ("c2_",)),
    3: ("c345", ("plain_",)),
    4: ("c345", ("interaction_",)),
    5: ("c345", ("bilinear_",)),
    6: ("c67", ("martingale_covariance",)),
    7: ("c67", ("cross_term",)),
    8: ("c8", ("clt_",)),
    9: ("c9", ("elln_",)),
    10: ("c10", ("increment_",)),
    12: ("c12", ("c12_",)),
}

BUDGET_S = {"c1": 10.0, "c2": 1.0, "c345": 1200.0, "c67": 600.0, "c8": 1800.0, "c9": 300.0,
            "c10": 900.0, "c12": 10.0}


def criterion_verdicts(k: int, result: CampaignResult) -> list[Verdict]:
    prefixes = CRITERIA[k][1]
    return [v for v in result.verdicts if v.criterion.startswith(prefixes)]
