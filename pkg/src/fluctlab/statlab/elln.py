"""Exponential law of large numbers: Monte-Carlo estimates of

    log E exp(kappa N |<phi, mu_N (x) mu_N>|^p),   mu_N = (1/N) sum_i delta_{X_i},

for X_i i.i.d. from a reference density and phi(x, y) = (g(x) - c)(g(y) - c)
with c = <g, rho_bar>.  The product form gives <phi, mu_N (x) mu_N> =
(mean_i g(X_i) - c)^2 and makes both cancellations exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import special

from ..grid import PeriodicGrid
from ..scenario.rng import RngPlan
from .report import CampaignResult, Table, Verdict
from .stats import Z95, spearman_trend

Sampler = Callable[[int, np.random.Generator], np.ndarray]

# per-sample working set (samples x particles) held in memory at once
_CHUNK = 2_000_000


class SmallnessViolation(ValueError):
    """The lemma constants are not below 1, so no bound is available."""


@dataclass(frozen=True)
class ProductTest:
    """phi(x, y) = (g(x) - c)(g(y) - c); ``sup`` is ||phi||_inf."""

    g: Callable[[np.ndarray], np.ndarray]
    c: float
    sup: float
    label: str = "product"

    @classmethod
    def zero(cls) -> ProductTest:
        return cls(lambda x: np.zeros(np.shape(x)[0]), 0.0, 0.0, "zero")

    def pairing(self, X: np.ndarray) -> np.ndarray:
        """<phi, mu_N (x) mu_N> for samples X of shape (S, N, d)."""
        S, N, d = X.shape
        gv = np.asarray(self.g(X.reshape(-1, d)), dtype=float).reshape(S, N)
        return (gv.mean(axis=1) - self.c) ** 2


def cancelling_product(g: Callable[[np.ndarray], np.ndarray], rho_bar: np.ndarray,
                       grid: PeriodicGrid, sup: float | None = None, label: str = "product") -> ProductTest:
    """Centre g against rho_bar (grid values) and optionally rescale so ||phi||_inf = sup.

    sup |g - c| is taken over the grid nodes, so g should attain its extremes
    there (a bump centred on a node and vanishing somewhere in the box).
    """
    xs = grid.coords.reshape(-1, grid.d)
    gv = np.asarray(g(xs), dtype=float)
    c = float(np.sum(gv * rho_bar.reshape(-1)) * grid.cell_volume)
    spread = float(np.max(np.abs(gv - c)))
    if spread == 0.0:
        return ProductTest(lambda x: np.full(np.shape(x)[0], c), c, 0.0, label)
    a = 1.0 if sup is None else math.sqrt(sup) / spread
    return ProductTest(lambda x: a * np.asarray(g(x), dtype=float), a * c, (a * spread) ** 2, label)


def lemma_constants(phi_sup: float, p: int, kappa: float = 1.0) -> tuple[float, float]:
    """(alpha_0, beta_0) for the effective test function kappa^{1/p} phi.

    p = 2: e^9 s^2 and 4 e s^2; p = 4: e^14 s^4 and 8 e s^4, with s the sup
    norm of the effective function.  p = 1 has no explicit constant and
    borrows the p = 2 pair.
    """
    if p not in (1, 2, 4):
        raise ValueError("p must be 1, 2 or 4")
    s = kappa ** (1.0 / p) * phi_sup
    if p == 4:
        return math.e**14 * s**4, 8.0 * math.e * s**4
    return math.e**9 * s**2, 4.0 * math.e * s**2


def log_bound(alpha0: float, beta0: float) -> float:
    """log(1 + a/(1-a) + b/(1-b)); inf outside the smallness regime."""
    if alpha0 >= 1.0 or beta0 >= 1.0:
        return math.inf
    return math.log1p(alpha0 / (1.0 - alpha0) + beta0 / (1.0 - beta0))


def bessel_l1(alpha: float, d: int) -> float:
    """||(1 + |.|^2)^{-alpha}||_{L^1(R^d)} = pi^{d/2} Gamma(alpha - d/2) / Gamma(alpha)."""
    if alpha <= d / 2:
        raise ValueError("the Bessel weight is integrable only for alpha > d/2")
    return math.pi ** (d / 2) * math.exp(special.gammaln(alpha - d / 2) - special.gammaln(alpha))


def default_kappa(alpha: float, d: int) -> float:
    """kappa = (8 sqrt(e^9) ||(1 + |.|^2)^{-alpha}||_{L^1}^2)^{-1}."""
    return 1.0 / (8.0 * math.exp(4.5) * bessel_l1(alpha, d) ** 2)


@dataclass
class ElLnReport:
    N_list: list[int]
    p: int
    kappa: float
    phi_sup: float
    estimates: np.ndarray
    ci: np.ndarray           # (n_N, 2)
    alpha0: float
    beta0: float
    bound: float
    samples: int
    batches: int
    heavy_tail: list[int] = field(default_factory=list)
    trend: float = 0.0

    @property
    def below_bound(self) -> bool:
        return bool(np.all(self.estimates <= self.bound))

    @property
    def warnings(self) -> list[str]:
        return [f"heavy tail at N={N}: top 1% of samples carry over half the exponential mass"
                for N in self.heavy_tail]


def _estimate(h: np.ndarray, batches: int) -> tuple[float, float, float, bool]:
    """log-mean-exp of h with a batched CI and the heavy-tail flag.

    Works with expm1 around a shift (0 unless h is large) so that tiny
    exponents keep full relative precision.
    """
    shift = _shift(h)
    w = np.expm1(h - shift)
    per = np.array([b.mean() for b in np.array_split(w, batches)])
    mean = float(np.mean(w))
    se = float(per.std(ddof=1)) / math.sqrt(batches)
    est = shift + math.log1p(mean)
    lo = shift + math.log1p(mean - Z95 * se) if mean - Z95 * se > -1.0 else -math.inf
    hi = shift + math.log1p(mean + Z95 * se)
    mass = w + 1.0
    top = max(1, h.size // 100)
    heavy = float(np.sort(mass)[-top:].sum()) > 0.5 * float(mass.sum())
    return est, lo, hi, heavy


def _shift(h: np.ndarray) -> float:
    mx = float(np.max(h))
    return mx if mx > 1.0 else 0.0


def elln_campaign(sampler: Sampler, phi: ProductTest, kappa: float, p: int, N_list,
                  samples: int, plan: RngPlan, d: int = 1, batches: int = 100) -> ElLnReport:
    """Per-N estimates of log E exp(kappa N |<phi, mu_N (x) mu_N>|^p).

    Each N draws ``samples`` independent N-particle configurations from its
    own stream ("elln", N, p).  Refuses to run outside the smallness regime.
    """
    alpha0, beta0 = lemma_constants(phi.sup, p, kappa)
    if alpha0 >= 1.0 or beta0 >= 1.0:
        raise SmallnessViolation(
            f"smallness precondition violated: alpha_0={alpha0:.4g}, beta_0={beta0:.4g} (need < 1)")
    if batches < 2 or samples < batches:
        raise ValueError("need at least 2 batches and one sample per batch")
    N_list = [int(n) for n in N_list]
    est, ci, heavy = [], [], []
    for N in N_list:
        rng = plan.stream("elln", N, p)
        h = np.empty(samples)
        step = max(1, _CHUNK // max(N, 1))
        for a in range(0, samples, step):
            b = min(a + step, samples)
            X = sampler((b - a) * N, rng).reshape(b - a, N, d)
            h[a:b] = kappa * N * np.abs(phi.pairing(X)) ** p
        e, lo, hi, hv = _estimate(h, batches)
        est.append(e)
        ci.append((lo, hi))
        if hv:
            heavy.append(N)
    est_arr = np.array(est)
    trend = spearman_trend(N_list, est_arr) if len(N_list) > 1 else 0.0
    return ElLnReport(N_list, p, kappa, phi.sup, est_arr, np.array(ci), alpha0, beta0,
                      log_bound(alpha0, beta0), samples, batches, heavy, trend)


def elln_result(reports: list[ElLnReport], trend_max: float = 0.3) -> CampaignResult:
    """Tables and verdicts: every estimate under the closed-form bound; for p = 4 also no upward trend."""
    table = Table("elln", ("p", "N", "kappa", "phi_sup", "log_moment", "ci_lo", "ci_hi", "bound"))
    verdicts, warns = [], []
    for r in reports:
        for i, N in enumerate(r.N_list):
            table.rows.append((r.p, N, r.kappa, r.phi_sup, float(r.estimates[i]),
                               float(r.ci[i, 0]), float(r.ci[i, 1]), r.bound))
        verdicts.append(Verdict.in_band(f"elln_p{r.p}_bound", float(np.max(r.estimates)), -math.inf, r.bound))
        if r.p == 4:
            verdicts.append(Verdict.in_band("elln_p4_trend", r.trend, -1.0, trend_max))
        warns.extend(r.warnings)
    return CampaignResult("elln", [table], verdicts, warnings=warns)
