"""Monte-Carlo campaigns: scaling fits, exponential moments, conditional CLT,
increment scaling, martingale cross terms and the marginal-entropy proxy."""

from __future__ import annotations

from .clt import CltSample, clt_result, conditional_clt
from .crossterms import (MartingaleSample, covariance_check, cross_term_check, crossterms_result,
                         martingale_campaign)
from .elln import (ElLnReport, ProductTest, SmallnessViolation, cancelling_product, default_kappa,
                   elln_campaign, elln_result, lemma_constants, log_bound)
from .entropy import KlEstimate, entropy_campaign, entropy_result, marginal_kl, sample_grid_density
from .increments import IncrementSample, increment_campaign, increment_fit, increments_result
from .moments import NORM_KINDS, NormSweep, converge_result, moment_campaign, norm_sweep
from .pool import ordered_map, resolve_threads
from .report import CampaignResult, Table, Verdict
from .stats import (ScalingFit, fit_power_law, jackknife_covariance, jackknife_variance,
                    ks_critical_value, ks_normal, ks_point_mass, ks_two_sample, log_mean_exp,
                    mean_se, spearman_trend)

__all__ = [
    "CltSample", "clt_result", "conditional_clt",
    "MartingaleSample", "covariance_check", "cross_term_check", "crossterms_result",
    "martingale_campaign",
    "ElLnReport", "ProductTest", "SmallnessViolation", "cancelling_product", "default_kappa",
    "elln_campaign", "elln_result", "lemma_constants", "log_bound",
    "KlEstimate", "entropy_campaign", "entropy_result", "marginal_kl", "sample_grid_density",
    "IncrementSample", "increment_campaign", "increment_fit", "increments_result",
    "NORM_KINDS", "NormSweep", "converge_result", "moment_campaign", "norm_sweep",
    "ordered_map", "resolve_threads", "CampaignResult", "Table", "Verdict",
    "ScalingFit", "fit_power_law", "jackknife_covariance", "jackknife_variance", "ks_critical_value",
    "ks_normal", "ks_point_mass", "ks_two_sample", "log_mean_exp", "mean_se", "spearman_trend",
]
